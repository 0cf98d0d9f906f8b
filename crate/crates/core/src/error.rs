use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the toolkit.
///
/// Data-shaped failures (bad files, unknown names, invalid spans) and
/// numeric failures (zero norms, non-finite gradients) are kept apart so the
/// command line can map them onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("parse error at line {line}: {msg}")]
    ParseLine { line: usize, msg: String },
    #[error("duplicate frame name '{0}'")]
    DuplicateFrame(String),
    #[error("frame '{0}' has an empty definition")]
    EmptyDefinition(String),
    #[error("unknown frame '{0}'")]
    UnknownFrame(String),
    #[error("unknown frame id {0}")]
    UnknownFrameId(usize),
    #[error("duplicate lexical unit '{0}'")]
    DuplicateLexicalUnit(String),
    #[error("lexical unit '{0}' evokes no frames")]
    EmptyLexicalUnit(String),
    #[error("self-inheritance on frame '{0}'")]
    SelfInheritance(String),
    #[error("duplicate relation {0}")]
    DuplicateRelation(String),
    #[error("inheritance cycle through frame '{0}'")]
    InheritanceCycle(String),
    #[error("invalid part of speech '{0}'")]
    InvalidPos(String),
    #[error("invalid lemma '{0}'")]
    InvalidLemma(String),
    #[error("invalid span: {0}")]
    InvalidSpan(String),
    #[error("sequence of {len} tokens exceeds the maximum of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty input: {0}")]
    Empty(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("zero-norm representation: {0}")]
    ZeroNorm(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical core rather than of the input data.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::ZeroNorm(_) | Error::NonFinite(_) | Error::Shape(_))
    }
}
