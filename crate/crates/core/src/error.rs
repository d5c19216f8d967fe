use thiserror::Error;

/// Problems with scene or experiment configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown preset `{0}` (expected case1 or case2)")]
    UnknownPreset(String),
    #[error("unsupported schema_version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
}

/// Failures during a forward step.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("non-finite state at particle {particle} after {stage} (solver iteration {iteration:?})")]
    NonFinite { particle: usize, stage: &'static str, iteration: Option<usize> },
    #[error("non-finite nozzle position {0:?}")]
    NonFiniteNozzle([f64; 3]),
}

/// Failures while recording or differentiating a tape.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TapeError {
    #[error("tape memory cap of {limit} bytes exceeded (needed {needed})")]
    MemoryCap { limit: usize, needed: usize },
    #[error("node {0} is not on this tape")]
    UnknownNode(usize),
    #[error("node {0} is not a scalar")]
    NotScalar(usize),
    #[error("non-finite adjoint at node {0}")]
    NonFiniteAdjoint(usize),
    #[error("replay mismatch at node {0}")]
    ReplayMismatch(usize),
}

/// Crate-level error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Other(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
