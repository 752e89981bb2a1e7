use thiserror::Error;

use crate::gfsk::TransitionClass;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate phase: phasor sum magnitude {magnitude:e} below floor {floor:e}")]
    DegeneratePhase { magnitude: f64, floor: f64 },

    #[error("shape mismatch: expected {expected} samples, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("transition class {0} has no products")]
    EmptyClass(TransitionClass),

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("invalid cluster count k={k} for {n} points")]
    InvalidK { k: usize, n: usize },

    #[error("record at t={timestamp} outside block [{start}, {end})")]
    BlockViolation { timestamp: f64, start: f64, end: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
