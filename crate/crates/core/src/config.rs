//! Run configuration and numeric tolerances.
//!
//! Defaults are desk-scale: a tiny from-scratch encoder trains with a much
//! larger learning rate than a pretrained transformer would. The
//! transformer-scale settings stay available through
//! [`TrainConfig::transformer_scale`] or a config file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Split;
use crate::encoder::{ModelMode, DEFAULT_DIM};
use crate::error::{Error, Result};
use crate::objective::Objective;

/// Maximum relative error accepted between analytic and numeric gradients.
pub const GRADCHECK_REL_TOL: f64 = 1e-4;
/// Denominator floor of the entry-wise relative gradient error.
pub const GRAD_REL_FLOOR: f64 = 1e-6;
/// Default finite-difference step.
pub const GRADCHECK_EPS: f64 = 1e-5;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_CANDIDATES: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimHyper {
    fn default() -> Self {
        OptimHyper {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl OptimHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub objective: Objective,
    pub split: Split,
    pub batch_size: usize,
    pub grad_accum: usize,
    pub tau: f64,
    /// Size of the padded candidate set; used by the in-candidate objective.
    #[serde(default = "default_candidates")]
    pub candidate_n: usize,
    pub epochs: usize,
    pub seed: u64,
}

fn default_candidates() -> usize {
    DEFAULT_CANDIDATES
}

impl StageConfig {
    pub fn in_batch(epochs: usize) -> Self {
        StageConfig {
            objective: Objective::InBatch,
            split: Split::Exemplar,
            batch_size: 32,
            grad_accum: 1,
            tau: 0.07,
            candidate_n: DEFAULT_CANDIDATES,
            epochs,
            seed: DEFAULT_SEED,
        }
    }

    pub fn in_candidate(epochs: usize) -> Self {
        StageConfig {
            objective: Objective::InCandidate,
            split: Split::Train,
            batch_size: 8,
            grad_accum: 1,
            tau: 1.0,
            candidate_n: DEFAULT_CANDIDATES,
            epochs,
            seed: DEFAULT_SEED + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.grad_accum == 0 || self.candidate_n == 0 {
            return Err(Error::Config(
                "batch_size, grad_accum and candidate_n must be positive".into(),
            ));
        }
        if self.objective == Objective::InBatch && self.batch_size < 2 {
            return Err(Error::Config("in-batch training needs batch_size >= 2".into()));
        }
        if self.tau.is_nan() || self.tau <= 0.0 || !self.tau.is_finite() {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub mode: ModelMode,
    #[serde(default)]
    pub shared_encoders: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: DEFAULT_DIM,
            mode: ModelMode::Dual,
            shared_encoders: false,
            seed: DEFAULT_SEED,
        }
    }
}

/// Options of the frame-structure metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuralOptions {
    /// Include the subframe itself in the all-frames average similarity.
    pub include_self: bool,
    /// Average the normalized gap per subframe first, then across subframes.
    pub average_per_frame: bool,
}

impl Default for StructuralOptions {
    fn default() -> Self {
        StructuralOptions {
            include_self: true,
            average_per_frame: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: OptimHyper,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    #[serde(default)]
    pub structural: StructuralOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            optimizer: OptimHyper::default(),
            stage1: StageConfig::in_batch(30),
            stage2: StageConfig::in_candidate(15),
            structural: StructuralOptions::default(),
        }
    }
}

impl TrainConfig {
    /// Batch sizes, accumulation, temperatures and learning rate used for
    /// fine-tuning pretrained transformer encoders.
    pub fn transformer_scale() -> Self {
        let mut cfg = TrainConfig::default();
        cfg.optimizer.lr = 2e-5;
        cfg.stage1.batch_size = 32;
        cfg.stage1.grad_accum = 4;
        cfg.stage1.tau = 0.07;
        cfg.stage1.epochs = 20;
        cfg.stage2.batch_size = 6;
        cfg.stage2.grad_accum = 3;
        cfg.stage2.tau = 1.0;
        cfg.stage2.candidate_n = 15;
        cfg.stage2.epochs = 20;
        cfg
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.model.seed = seed;
        self.stage1.seed = seed;
        self.stage2.seed = seed.wrapping_add(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.dim < 2 {
            return Err(Error::Config("model dim must be at least 2".into()));
        }
        self.optimizer.validate()?;
        self.stage1.validate()?;
        self.stage2.validate()
    }

    /// Reads TOML (`.toml`) or JSON (anything else).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: TrainConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
