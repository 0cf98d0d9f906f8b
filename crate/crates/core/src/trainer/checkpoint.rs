//! Versioned JSON checkpoints. Floats are written in shortest round-trip
//! decimal form, so save -> load -> save is byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::optim::OptimState;
use crate::corpus::Vocab;
use crate::encoder::{DualModel, EncoderParams, ModelMode, ModelParams};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    version: u32,
    d: usize,
    vocab_hash: String,
    vocab: Vec<String>,
    mode: ModelMode,
    shared_encoders: bool,
    target: EncoderParams,
    frame: EncoderParams,
    table: Option<Matrix>,
    optimizer: Option<OptimState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DualModel,
    pub vocab: Vocab,
    pub optimizer: Option<OptimState>,
}

pub fn checkpoint_json(model: &DualModel, vocab: &Vocab, state: Option<&OptimState>) -> Result<String> {
    model.validate()?;
    if model.params.target.vocab_size() != vocab.len() {
        return Err(Error::Shape(format!(
            "model vocabulary of {} rows vs vocabulary of {}",
            model.params.target.vocab_size(),
            vocab.len()
        )));
    }
    if let Some(s) = state {
        if s.m.iter().chain(&s.v).any(|t| t.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("optimizer moments".into()));
        }
    }
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        d: model.dim(),
        vocab_hash: vocab.manifest_hash(),
        vocab: vocab.tokens().to_vec(),
        mode: model.mode,
        shared_encoders: model.shared_encoders,
        target: model.params.target.clone(),
        frame: model.params.frame.clone(),
        table: model.params.table.clone(),
        optimizer: state.cloned(),
    };
    serde_json::to_string(&file).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save_checkpoint(
    model: &DualModel,
    vocab: &Vocab,
    state: Option<&OptimState>,
    path: &Path,
) -> Result<()> {
    let text = checkpoint_json(model, vocab, state)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let raw: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("corrupt file: {e}")))?;
    match raw.get("version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == CHECKPOINT_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::Checkpoint(format!(
                "unsupported version {v}, expected {CHECKPOINT_VERSION}"
            )))
        }
        None => return Err(Error::Checkpoint("missing version".into())),
    }
    let file: CheckpointFile =
        serde_json::from_value(raw).map_err(|e| Error::Checkpoint(format!("corrupt file: {e}")))?;
    let vocab = Vocab::from_tokens(file.vocab)?;
    if vocab.manifest_hash() != file.vocab_hash {
        return Err(Error::Checkpoint("vocabulary hash mismatch".into()));
    }
    let model = DualModel {
        mode: file.mode,
        shared_encoders: file.shared_encoders,
        params: ModelParams {
            target: file.target,
            frame: file.frame,
            table: file.table,
        },
    };
    model.validate()?;
    if model.dim() != file.d || model.params.target.vocab_size() != vocab.len() {
        return Err(Error::Checkpoint("tensor shapes disagree with header".into()));
    }
    Ok(Checkpoint {
        model,
        vocab,
        optimizer: file.optimizer,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text)
}

/// SHA-256 over the bit patterns of every parameter, in canonical order.
pub fn param_hash(params: &ModelParams) -> String {
    let mut hasher = Sha256::new();
    for t in params.tensors() {
        hasher.update((t.len() as u64).to_le_bytes());
        for x in t {
            hasher.update(x.to_bits().to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}
