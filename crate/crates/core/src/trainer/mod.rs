//! Stage training and the two-stage coarse-to-fine curriculum.

mod checkpoint;
mod optim;

pub use checkpoint::{
    checkpoint_json, load_checkpoint, param_hash, parse_checkpoint, save_checkpoint, Checkpoint,
    CHECKPOINT_VERSION,
};
pub use optim::{adamw_step, OptimState};

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{OptimHyper, StageConfig, TrainConfig};
use crate::corpus::{Corpus, Instance, Vocab};
use crate::encoder::{DualModel, ModelParams};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::objective::{batch_loss_and_grads, FrameTexts, LossItem, Objective};
use crate::sampler::{in_batch_negatives, in_candidate_negatives, make_batches, Batch};

/// Which parameter groups receive updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub target: bool,
    pub frame: bool,
    pub table: bool,
}

impl Trainable {
    /// Everything the model actually uses: the frame encoder only in dual
    /// mode without sharing, the table only in lookup modes.
    pub fn for_model(model: &DualModel) -> Self {
        let lookup = model.mode.is_lookup();
        Trainable {
            target: true,
            frame: !lookup && !model.shared_encoders,
            table: lookup,
        }
    }

    pub fn mask(&self, params: &ModelParams) -> Vec<bool> {
        let mut mask = vec![self.target; 4];
        mask.extend([self.frame; 4]);
        if params.table.is_some() {
            mask.push(self.table);
        }
        mask
    }
}

pub struct TrainContext<'a> {
    pub vocab: &'a Vocab,
    pub lex: &'a Lexicon,
    pub frames: FrameTexts,
    /// Overrides [`Trainable::for_model`] when set.
    pub trainable: Option<Trainable>,
}

impl<'a> TrainContext<'a> {
    pub fn new(vocab: &'a Vocab, lex: &'a Lexicon) -> Result<Self> {
        Ok(TrainContext {
            vocab,
            lex,
            frames: FrameTexts::new(vocab, lex)?,
            trainable: None,
        })
    }

    fn mask(&self, model: &DualModel) -> Vec<bool> {
        self.trainable
            .unwrap_or_else(|| Trainable::for_model(model))
            .mask(&model.params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub objective: Objective,
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
    pub initial_hash: String,
    pub final_hash: String,
    pub checkpoint: Option<PathBuf>,
    /// Excluded from serialization so reports stay reproducible.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumReport {
    pub stage1: TrainReport,
    pub stage2: TrainReport,
}

/// SplitMix64 finaliser, used to derive independent per-epoch and
/// per-instance seeds from a stage seed.
pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn batch_items(
    ctx: &TrainContext<'_>,
    batch: &Batch<'_>,
    cfg: &StageConfig,
    seed: u64,
) -> Result<Vec<LossItem>> {
    batch
        .instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let negatives = match cfg.objective {
                Objective::InBatch => in_batch_negatives(batch, i)?,
                Objective::InCandidate => {
                    in_candidate_negatives(ctx.lex, inst, cfg.candidate_n, mix_seed(seed, i as u64))?
                }
            };
            LossItem::new(ctx.vocab, inst, negatives.ids)
        })
        .collect()
}

fn apply(
    model: &mut DualModel,
    state: &mut OptimState,
    acc: &mut Option<ModelParams>,
    pending: &mut usize,
    mask: &[bool],
) -> Result<()> {
    if let Some(mut g) = acc.take() {
        g.scale(1.0 / *pending as f64);
        adamw_step(state, &mut model.params, &g, mask)?;
        if !model.params.is_finite() {
            return Err(Error::NonFinite(format!(
                "parameters after optimizer step {}",
                state.step
            )));
        }
    }
    *pending = 0;
    Ok(())
}

/// Runs one training stage over `data`. Each optimizer step averages the
/// gradients of `grad_accum` consecutive batches; leftovers are flushed at
/// the end of every epoch.
pub fn train_stage(
    model: &mut DualModel,
    ctx: &TrainContext<'_>,
    data: &[Instance],
    cfg: &StageConfig,
    state: &mut OptimState,
) -> Result<TrainReport> {
    cfg.validate()?;
    model.validate()?;
    let started = Instant::now();
    let initial_hash = param_hash(&model.params);
    let mask = ctx.mask(model);
    let start_step = state.step;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let epoch_seed = mix_seed(cfg.seed, epoch as u64);
        let batches = make_batches(data, cfg.batch_size, epoch_seed)?;
        if batches.is_empty() {
            return Err(Error::Empty(format!(
                "{} instances give no usable batch of size {}",
                data.len(),
                cfg.batch_size
            )));
        }
        let mut acc: Option<ModelParams> = None;
        let mut pending = 0usize;
        let mut loss_sum = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let items = batch_items(ctx, batch, cfg, mix_seed(epoch_seed, b as u64))?;
            let (loss, grads) = batch_loss_and_grads(model, &ctx.frames, &items, cfg.tau, true)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}, batch {b}")));
            }
            loss_sum += loss;
            let grads = grads.expect("gradients requested");
            match acc.as_mut() {
                Some(a) => a.add_assign(&grads),
                None => acc = Some(grads),
            }
            pending += 1;
            if pending == cfg.grad_accum {
                apply(model, state, &mut acc, &mut pending, &mask)?;
            }
        }
        apply(model, state, &mut acc, &mut pending, &mask)?;
        epoch_losses.push(loss_sum / batches.len() as f64);
    }

    Ok(TrainReport {
        objective: cfg.objective,
        epoch_losses,
        steps: state.step - start_step,
        initial_hash,
        final_hash: param_hash(&model.params),
        checkpoint: None,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// Full-batch optimisation of a fixed item set; stops as soon as the loss
/// drops below `target_loss`. Returns the loss before every step taken and
/// the final loss.
pub fn fit_items(
    model: &mut DualModel,
    ctx: &TrainContext<'_>,
    items: &[LossItem],
    tau: f64,
    state: &mut OptimState,
    max_steps: usize,
    target_loss: f64,
) -> Result<Vec<f64>> {
    let mask = ctx.mask(model);
    let mut trace = Vec::new();
    for _ in 0..max_steps {
        let (loss, grads) = batch_loss_and_grads(model, &ctx.frames, items, tau, true)?;
        trace.push(loss);
        if loss < target_loss {
            return Ok(trace);
        }
        adamw_step(
            state,
            &mut model.params,
            &grads.expect("gradients requested"),
            &mask,
        )?;
    }
    trace.push(batch_loss_and_grads(model, &ctx.frames, items, tau, false)?.0);
    Ok(trace)
}

fn run_stage(
    model: &mut DualModel,
    ctx: &TrainContext<'_>,
    corpus: &Corpus,
    cfg: &StageConfig,
    hyper: OptimHyper,
    out: Option<(&Path, &str)>,
) -> Result<TrainReport> {
    let data = corpus.split(cfg.split);
    if data.is_empty() {
        return Err(Error::Empty(format!("no {} instances to train on", cfg.split)));
    }
    // fresh moments for every stage
    let mut state = OptimState::new(hyper, &model.params);
    let mut report = train_stage(model, ctx, &data, cfg, &mut state)?;
    if let Some((dir, name)) = out {
        let path = dir.join(name);
        save_checkpoint(model, ctx.vocab, Some(&state), &path)?;
        report.checkpoint = Some(path);
    }
    Ok(report)
}

pub fn train_stage1(
    model: &mut DualModel,
    ctx: &TrainContext<'_>,
    corpus: &Corpus,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainReport> {
    run_stage(
        model,
        ctx,
        corpus,
        &cfg.stage1,
        cfg.optimizer,
        out_dir.map(|d| (d, "stage1.json")),
    )
}

pub fn train_stage2(
    model: &mut DualModel,
    ctx: &TrainContext<'_>,
    corpus: &Corpus,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainReport> {
    run_stage(
        model,
        ctx,
        corpus,
        &cfg.stage2,
        cfg.optimizer,
        out_dir.map(|d| (d, "stage2.json")),
    )
}

/// Coarse stage (in-batch negatives over exemplars) followed by the fine
/// stage (in-candidate negatives over training data), with the optimizer
/// state reset in between.
pub fn train_coarse_to_fine(
    model: &mut DualModel,
    ctx: &TrainContext<'_>,
    corpus: &Corpus,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<CurriculumReport> {
    cfg.validate()?;
    let stage1 = train_stage1(model, ctx, corpus, cfg, out_dir)?;
    let stage2 = train_stage2(model, ctx, corpus, cfg, out_dir)?;
    Ok(CurriculumReport { stage1, stage2 })
}
