//! Evaluation and analysis: accuracy with lexicon filtering, recall at k
//! without it, their harmonic mean, the masked-target probe, exemplar
//! centroids and the superframe-proximity statistic.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::StructuralOptions;
use crate::corpus::{Instance, Vocab};
use crate::encoder::{encode_frame, encode_target_with, DualModel, Repr};
use crate::error::{Error, Result};
use crate::index::{predict_repr, FrameEmbeddingIndex, PredictMode};
use crate::lexicon::{FrameId, Lexicon};
use crate::linalg::{axpy, Matrix};

pub const RECALL_KS: [usize; 3] = [1, 3, 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub acc_with_lf: f64,
    pub r_at: BTreeMap<usize, f64>,
    /// Harmonic mean of `acc_with_lf` and `r_at[1]`; zero when both are.
    pub overall: f64,
    /// Accuracy over instances whose LU has at least two candidate frames.
    pub acc_ambiguous: Option<f64>,
    pub n_instances: usize,
    pub n_ambiguous: usize,
    pub n_fallback: usize,
}

impl EvalResult {
    pub fn r1(&self) -> f64 {
        self.r_at[&1]
    }

    /// Values ×100, rounded to two decimals, keyed by display name.
    pub fn percentages(&self) -> BTreeMap<String, f64> {
        let pct = |x: f64| (x * 10_000.0).round() / 100.0;
        let mut out = BTreeMap::new();
        out.insert("acc".to_string(), pct(self.acc_with_lf));
        for (k, v) in &self.r_at {
            out.insert(format!("r@{k}"), pct(*v));
        }
        out.insert("overall".to_string(), pct(self.overall));
        if let Some(a) = self.acc_ambiguous {
            out.insert("acc_amb".to_string(), pct(a));
        }
        out
    }
}

/// Harmonic mean `2·acc·r1 / (acc + r1)`.
pub fn overall(acc: f64, r1: f64) -> Result<f64> {
    if acc < 0.0 || r1 < 0.0 || !acc.is_finite() || !r1.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "overall needs non-negative finite inputs, got ({acc}, {r1})"
        )));
    }
    if acc == 0.0 && r1 == 0.0 {
        return Err(Error::InvalidArgument("overall of (0, 0) is undefined".into()));
    }
    Ok(2.0 * acc * r1 / (acc + r1))
}

/// Fraction of rankings whose first `k` entries contain the gold frame.
pub fn recall_at_k(rankings: &[Vec<FrameId>], golds: &[FrameId], k: usize) -> Result<f64> {
    if rankings.len() != golds.len() {
        return Err(Error::Shape(format!(
            "{} rankings for {} gold frames",
            rankings.len(),
            golds.len()
        )));
    }
    if rankings.is_empty() || k == 0 {
        return Err(Error::InvalidArgument("recall needs instances and k >= 1".into()));
    }
    let hits = rankings
        .iter()
        .zip(golds)
        .filter(|(r, g)| r.iter().take(k).any(|f| f == *g))
        .count();
    Ok(hits as f64 / golds.len() as f64)
}

struct Outcome {
    correct_lf: bool,
    ambiguous: bool,
    fallback: bool,
    /// 0-based position of the gold frame in the all-frames ranking.
    gold_rank: usize,
}

fn score_instance(idx: &FrameEmbeddingIndex, lex: &Lexicon, t: &Repr, inst: &Instance) -> Result<Outcome> {
    let with = predict_repr(idx, lex, t, inst, PredictMode::WithLf)?;
    let without = predict_repr(idx, lex, t, inst, PredictMode::WithoutLf)?;
    let gold_rank = without
        .ranking
        .iter()
        .position(|(f, _)| *f == inst.gold)
        .ok_or(Error::UnknownFrameId(inst.gold.0))?;
    Ok(Outcome {
        correct_lf: with.predicted == inst.gold,
        ambiguous: lex.candidates_for(&inst.lu).is_some_and(|c| c.len() >= 2),
        fallback: with.fallback_used,
        gold_rank,
    })
}

fn aggregate(outcomes: &[Outcome]) -> EvalResult {
    let n = outcomes.len() as f64;
    let acc = outcomes.iter().filter(|o| o.correct_lf).count() as f64 / n;
    let r_at: BTreeMap<usize, f64> = RECALL_KS
        .iter()
        .map(|&k| (k, outcomes.iter().filter(|o| o.gold_rank < k).count() as f64 / n))
        .collect();
    let amb: Vec<&Outcome> = outcomes.iter().filter(|o| o.ambiguous).collect();
    let acc_ambiguous =
        (!amb.is_empty()).then(|| amb.iter().filter(|o| o.correct_lf).count() as f64 / amb.len() as f64);
    EvalResult {
        acc_with_lf: acc,
        overall: overall(acc, r_at[&1]).unwrap_or(0.0),
        r_at,
        acc_ambiguous,
        n_instances: outcomes.len(),
        n_ambiguous: amb.len(),
        n_fallback: outcomes.iter().filter(|o| o.fallback).count(),
    }
}

/// Evaluates `data` against `idx`, optionally with every target token
/// replaced by the mask token. Instances are scored in parallel and
/// aggregated in input order.
pub fn evaluate_with(
    model: &DualModel,
    idx: &FrameEmbeddingIndex,
    vocab: &Vocab,
    lex: &Lexicon,
    data: &[Instance],
    masked: bool,
) -> Result<EvalResult> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation split".into()));
    }
    let outcomes = data
        .par_iter()
        .map(|inst| {
            let t = encode_target_with(model, vocab, inst, masked)?;
            score_instance(idx, lex, &t, inst)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(&outcomes))
}

pub fn evaluate(
    model: &DualModel,
    idx: &FrameEmbeddingIndex,
    vocab: &Vocab,
    lex: &Lexicon,
    data: &[Instance],
) -> Result<EvalResult> {
    evaluate_with(model, idx, vocab, lex, data, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedReport {
    pub normal: EvalResult,
    pub masked: EvalResult,
    /// `normal.acc_with_lf - masked.acc_with_lf`
    pub delta: f64,
}

pub fn masked_evaluate(
    model: &DualModel,
    idx: &FrameEmbeddingIndex,
    vocab: &Vocab,
    lex: &Lexicon,
    data: &[Instance],
) -> Result<MaskedReport> {
    let normal = evaluate_with(model, idx, vocab, lex, data, false)?;
    let masked = evaluate_with(model, idx, vocab, lex, data, true)?;
    Ok(MaskedReport {
        delta: normal.acc_with_lf - masked.acc_with_lf,
        normal,
        masked,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidReport {
    pub n_per_frame: usize,
    pub result: EvalResult,
    /// Frames without exemplars; their rows keep the definition encoding.
    pub fallback_frames: Vec<String>,
}

/// Index whose rows are the mean target representation of the first
/// `n_per_frame` exemplars of each frame.
pub fn centroid_index(
    model: &DualModel,
    vocab: &Vocab,
    lex: &Lexicon,
    exemplars: &[Instance],
    n_per_frame: usize,
) -> Result<(FrameEmbeddingIndex, Vec<FrameId>)> {
    if n_per_frame == 0 {
        return Err(Error::InvalidArgument("n_per_frame must be at least 1".into()));
    }
    let d = model.dim();
    let mut sums = Matrix::zeros(lex.len(), d);
    let mut counts = vec![0usize; lex.len()];
    for inst in exemplars {
        let f = inst.gold.0;
        if f >= lex.len() {
            return Err(Error::UnknownFrameId(f));
        }
        if counts[f] == n_per_frame {
            continue;
        }
        let t = encode_target_with(model, vocab, inst, false)?;
        axpy(sums.row_mut(f), 1.0, &t.0);
        counts[f] += 1;
    }
    let mut fallback = Vec::new();
    for f in lex.frame_ids() {
        let c = counts[f.0];
        if c == 0 {
            let r = encode_frame(model, vocab, lex, f)?;
            sums.row_mut(f.0).copy_from_slice(&r.0);
            fallback.push(f);
        } else {
            sums.row_mut(f.0).iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    Ok((FrameEmbeddingIndex::from_matrix(sums)?, fallback))
}

pub fn centroid_evaluate(
    model: &DualModel,
    vocab: &Vocab,
    lex: &Lexicon,
    exemplars: &[Instance],
    test: &[Instance],
    n_per_frame: usize,
) -> Result<CentroidReport> {
    let (idx, fallback) = centroid_index(model, vocab, lex, exemplars, n_per_frame)?;
    let result = evaluate(model, &idx, vocab, lex, test)?;
    Ok(CentroidReport {
        n_per_frame,
        result,
        fallback_frames: fallback.iter().map(|&f| lex.name(f).to_string()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStat {
    pub sup: String,
    pub sub: String,
    pub alpha: f64,
    pub delta_alpha: f64,
    /// `Δα / α`; absent when α is exactly zero.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralReport {
    pub options: StructuralOptions,
    pub pairs: Vec<PairStat>,
    /// Mean of `Δα / α` over pairs with α > 0.
    pub average_ratio: Option<f64>,
    pub n_positive_alpha: usize,
    /// Mean of `Δα` over all pairs.
    pub average_delta_alpha: f64,
}

fn quote_csv(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl StructuralReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sup,sub,alpha,delta_alpha,ratio\n");
        for p in &self.pairs {
            let ratio = p.ratio.map(|r| r.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                quote_csv(&p.sup),
                quote_csv(&p.sub),
                p.alpha,
                p.delta_alpha,
                ratio
            ));
        }
        out
    }
}

/// Mean of `values` grouped by key, then across groups.
fn grouped_mean(values: &[(FrameId, f64)]) -> Option<f64> {
    let mut groups: BTreeMap<FrameId, (f64, usize)> = BTreeMap::new();
    for &(k, v) in values {
        let e = groups.entry(k).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    let means: Vec<f64> = groups.values().map(|(s, c)| s / *c as f64).collect();
    (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64)
}

fn flat_mean(values: &[(FrameId, f64)]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().map(|p| p.1).sum::<f64>() / values.len() as f64)
}

/// For every inheritance pair: α is the subframe's mean cosine to all
/// frames, Δα its cosine to the superframe minus α.
pub fn delta_alpha_report(
    idx: &FrameEmbeddingIndex,
    lex: &Lexicon,
    opts: StructuralOptions,
) -> Result<StructuralReport> {
    if idx.len() != lex.len() {
        return Err(Error::Shape(format!(
            "index of {} rows for {} frames",
            idx.len(),
            lex.len()
        )));
    }
    let pairs: Vec<(FrameId, FrameId)> = lex.inheritance_pairs().collect();
    if pairs.is_empty() {
        return Err(Error::Empty("no inheritance relations".into()));
    }
    if !opts.include_self && lex.len() < 2 {
        return Err(Error::InvalidArgument(
            "excluding the subframe leaves no frames".into(),
        ));
    }
    let mut stats = Vec::with_capacity(pairs.len());
    let mut ratios = Vec::new();
    let mut deltas = Vec::new();
    for (sup, sub) in pairs {
        let cos = idx.scores(&Repr(idx.row(sub).to_vec()))?;
        let alpha = if opts.include_self {
            cos.iter().sum::<f64>() / cos.len() as f64
        } else {
            let others: f64 = cos
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != sub.0)
                .map(|p| p.1)
                .sum();
            others / (cos.len() - 1) as f64
        };
        let delta = cos[sup.0] - alpha;
        let ratio = (alpha != 0.0).then(|| delta / alpha);
        if alpha > 0.0 {
            ratios.push((sub, delta / alpha));
        }
        deltas.push((sub, delta));
        stats.push(PairStat {
            sup: lex.name(sup).to_string(),
            sub: lex.name(sub).to_string(),
            alpha,
            delta_alpha: delta,
            ratio,
        });
    }
    let mean = if opts.average_per_frame {
        grouped_mean
    } else {
        flat_mean
    };
    Ok(StructuralReport {
        options: opts,
        pairs: stats,
        average_ratio: mean(&ratios),
        n_positive_alpha: ratios.len(),
        average_delta_alpha: mean(&deltas).expect("at least one pair"),
    })
}
