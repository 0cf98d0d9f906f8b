//! Precomputed frame representations and exact cosine ranking.

use std::cmp::Ordering;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Instance, Vocab};
use crate::encoder::{encode_frame, encode_target_with, DualModel, Repr};
use crate::error::{Error, Result};
use crate::lexicon::{FrameId, Lexicon};
use crate::linalg::{dot, norm, Matrix};

/// One row per frame, indexed by frame id. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEmbeddingIndex {
    matrix: Matrix,
    norms: Vec<f64>,
}

/// `(frame, cosine)` pairs in descending score, ties by ascending frame id.
pub type Ranking = Vec<(FrameId, f64)>;

pub fn build_index(model: &DualModel, vocab: &Vocab, lex: &Lexicon) -> Result<FrameEmbeddingIndex> {
    let mut matrix = Matrix::zeros(lex.len(), model.dim());
    for f in lex.frame_ids() {
        let r = encode_frame(model, vocab, lex, f)?;
        matrix.row_mut(f.0).copy_from_slice(&r.0);
    }
    FrameEmbeddingIndex::from_matrix(matrix)
}

// Scores are finite (checked at build and query time), so `partial_cmp`
// is total here and treats 0.0 and -0.0 as a tie.
fn order(a: &(FrameId, f64), b: &(FrameId, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

impl FrameEmbeddingIndex {
    pub fn from_matrix(matrix: Matrix) -> Result<Self> {
        if matrix.rows() == 0 {
            return Err(Error::Empty("frame index without rows".into()));
        }
        if !matrix.is_finite() {
            return Err(Error::NonFinite("frame index".into()));
        }
        let norms: Vec<f64> = matrix.iter_rows().map(norm).collect();
        if let Some(i) = norms.iter().position(|&n| n == 0.0) {
            return Err(Error::ZeroNorm(format!("frame #{i}")));
        }
        Ok(FrameEmbeddingIndex { matrix, norms })
    }

    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn row(&self, f: FrameId) -> &[f64] {
        self.matrix.row(f.0)
    }

    fn check_target(&self, t: &Repr) -> Result<f64> {
        if t.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "target of dimension {} against index of dimension {}",
                t.dim(),
                self.dim()
            )));
        }
        let n = t.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm("target representation".into()));
        }
        Ok(n)
    }

    fn score(&self, t: &Repr, tn: f64, f: FrameId) -> f64 {
        (dot(&t.0, self.matrix.row(f.0)) / (tn * self.norms[f.0])).clamp(-1.0, 1.0)
    }

    /// Cosine of `t` with every frame, indexed by frame id.
    pub fn scores(&self, t: &Repr) -> Result<Vec<f64>> {
        let tn = self.check_target(t)?;
        Ok((0..self.len()).map(|i| self.score(t, tn, FrameId(i))).collect())
    }

    /// Exact top-`k` over all frames.
    pub fn rank_all(&self, t: &Repr, k: usize) -> Result<Ranking> {
        if k == 0 || k > self.len() {
            return Err(Error::InvalidArgument(format!(
                "k must lie in 1..={}, got {k}",
                self.len()
            )));
        }
        let mut scored: Ranking = self
            .scores(t)?
            .into_iter()
            .enumerate()
            .map(|(i, s)| (FrameId(i), s))
            .collect();
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored)
    }

    /// Full ordering of the given candidate frames.
    pub fn rank_candidates<I>(&self, t: &Repr, cands: I) -> Result<Ranking>
    where
        I: IntoIterator<Item = FrameId>,
    {
        let tn = self.check_target(t)?;
        let mut scored = Ranking::new();
        for f in cands {
            if f.0 >= self.len() {
                return Err(Error::UnknownFrameId(f.0));
            }
            if !scored.iter().any(|(g, _)| *g == f) {
                scored.push((f, self.score(t, tn, f)));
            }
        }
        if scored.is_empty() {
            return Err(Error::Empty("candidate set".into()));
        }
        scored.sort_unstable_by(order);
        Ok(scored)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictMode {
    WithLf,
    WithoutLf,
}

impl PredictMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictMode::WithLf => "with_lf",
            PredictMode::WithoutLf => "without_lf",
        }
    }
}

impl FromStr for PredictMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with_lf" => Ok(PredictMode::WithLf),
            "without_lf" => Ok(PredictMode::WithoutLf),
            other => Err(Error::InvalidArgument(format!(
                "unknown prediction mode '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub predicted: FrameId,
    pub score: f64,
    /// Set when lexicon filtering was requested but the LU is unknown.
    pub fallback_used: bool,
    pub ranking: Ranking,
}

/// Ranks for an already-encoded target. With filtering, an LU absent from
/// the lexicon falls back to the all-frames ranking.
pub fn predict_repr(
    idx: &FrameEmbeddingIndex,
    lex: &Lexicon,
    t: &Repr,
    inst: &Instance,
    mode: PredictMode,
) -> Result<Prediction> {
    let cands = match mode {
        PredictMode::WithLf => lex.candidates_for(&inst.lu).filter(|c| !c.is_empty()),
        PredictMode::WithoutLf => None,
    };
    let (ranking, fallback_used) = match cands {
        Some(c) => (idx.rank_candidates(t, c.iter().copied())?, false),
        None => (idx.rank_all(t, idx.len())?, mode == PredictMode::WithLf),
    };
    let (predicted, score) = ranking[0];
    Ok(Prediction {
        predicted,
        score,
        fallback_used,
        ranking,
    })
}

pub fn predict(
    model: &DualModel,
    idx: &FrameEmbeddingIndex,
    vocab: &Vocab,
    lex: &Lexicon,
    inst: &Instance,
    mode: PredictMode,
) -> Result<Prediction> {
    let t = encode_target_with(model, vocab, inst, false)?;
    predict_repr(idx, lex, &t, inst, mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFrame {
    pub frame: String,
    pub score: f64,
}

/// One line of the prediction JSONL output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub instance_index: usize,
    pub mode: PredictMode,
    pub predicted: String,
    pub score: f64,
    pub fallback_used: bool,
    pub top_k: Vec<ScoredFrame>,
}

impl PredictionRecord {
    pub fn new(instance_index: usize, mode: PredictMode, p: &Prediction, lex: &Lexicon, k: usize) -> Self {
        PredictionRecord {
            instance_index,
            mode,
            predicted: lex.name(p.predicted).to_string(),
            score: p.score,
            fallback_used: p.fallback_used,
            top_k: p
                .ranking
                .iter()
                .take(k)
                .map(|&(f, score)| ScoredFrame {
                    frame: lex.name(f).to_string(),
                    score,
                })
                .collect(),
        }
    }
}
