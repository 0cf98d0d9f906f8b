//! Analytic-versus-numeric gradient comparison over small seeded configurations.

use serde::Serialize;

use crate::config::{GRADCHECK_EPS, GRADCHECK_REL_TOL};
use crate::corpus::{build_vocab, generate_synthetic, Split, SplitSizes, SynthConfig};
use crate::encoder::{DualModel, ModelMode};
use crate::error::Result;
use crate::objective::{
    batch_loss_and_grads, finite_difference_grad, max_relative_error, FrameTexts, LossItem, Objective,
};
use crate::sampler::{in_batch_negatives, in_candidate_negatives, Batch};

pub const GRADCHECK_DIM: usize = 8;
pub const GRADCHECK_BATCH: usize = 4;
pub const GRADCHECK_CANDIDATES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradcheckCase {
    pub mode: ModelMode,
    pub shared_encoders: bool,
    pub objective: Objective,
    pub tau: f64,
}

/// Every encoder arrangement against both objectives.
pub fn default_cases() -> Vec<GradcheckCase> {
    let mut cases = Vec::new();
    for (mode, shared) in [
        (ModelMode::Dual, false),
        (ModelMode::Dual, true),
        (ModelMode::LookupRandom, false),
        (ModelMode::LookupDefinitionInit, false),
    ] {
        for (objective, tau) in [(Objective::InBatch, 0.07), (Objective::InCandidate, 1.0)] {
            cases.push(GradcheckCase {
                mode,
                shared_encoders: shared,
                objective,
                tau,
            });
        }
    }
    cases
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckResult {
    pub seed: u64,
    pub case: GradcheckCase,
    pub max_rel_error: f64,
    pub worst_tensor: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub results: Vec<GradcheckResult>,
    pub max_rel_error: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// Runs every case on a small synthetic lexicon generated from `seed`.
pub fn run_gradcheck(seed: u64, cases: &[GradcheckCase]) -> Result<GradcheckReport> {
    let (lex, corpus) = generate_synthetic(&SynthConfig {
        n_families: 2,
        frames_per_family: 4,
        lus: 10,
        instances_per_split: SplitSizes {
            exemplar: GRADCHECK_BATCH,
            train: GRADCHECK_BATCH,
            dev: 1,
            test: 1,
        },
        seed,
        ambiguous_rate: 0.5,
        exemplar_particle_rate: 0.5,
    })?;
    let vocab = build_vocab(&corpus, &lex)?;
    let frames = FrameTexts::new(&vocab, &lex)?;
    let mut results = Vec::with_capacity(cases.len());
    for (c, case) in cases.iter().enumerate() {
        let model = DualModel::initialise(
            &vocab,
            &lex,
            GRADCHECK_DIM,
            case.mode,
            case.shared_encoders,
            seed.wrapping_mul(31).wrapping_add(c as u64),
        )?;
        let split = match case.objective {
            Objective::InBatch => Split::Exemplar,
            Objective::InCandidate => Split::Train,
        };
        let data = corpus.split(split);
        let batch = Batch {
            instances: data.iter().collect(),
        };
        let items = (0..batch.len())
            .map(|i| {
                let negatives = match case.objective {
                    Objective::InBatch => in_batch_negatives(&batch, i)?,
                    Objective::InCandidate => in_candidate_negatives(
                        &lex,
                        batch.instances[i],
                        GRADCHECK_CANDIDATES,
                        seed + i as u64,
                    )?,
                };
                LossItem::new(&vocab, batch.instances[i], negatives.ids)
            })
            .collect::<Result<Vec<_>>>()?;
        let (_, analytic) = batch_loss_and_grads(&model, &frames, &items, case.tau, true)?;
        let numeric = finite_difference_grad(&model, &frames, &items, case.tau, GRADCHECK_EPS)?;
        let (err, name) = max_relative_error(&analytic.expect("gradients requested"), &numeric);
        results.push(GradcheckResult {
            seed,
            case: *case,
            max_rel_error: err,
            worst_tensor: name,
        });
    }
    let max_rel_error = results.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        tolerance: GRADCHECK_REL_TOL,
        results,
        max_rel_error,
    })
}
