use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("invalid config: {}", .violations.join("; "))]
    InvalidConfig { violations: Vec<String> },
    #[error("invalid arguments: {0}")]
    InvalidArgs(String),
    #[error("degenerate knots: indices {0} and {1} coincide")]
    DegenerateKnots(usize, usize),
    #[error("weight count {weights} does not match sample count {samples}")]
    WeightMismatch { weights: usize, samples: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("degenerate batch: need at least 2 particles, got {0}")]
    DegenerateBatch(usize),
    #[error("scorer returned a non-finite value for particle {0}")]
    NonFiniteScore(usize),
    #[error("too few controls: need at least 3, got {0}")]
    TooShort(usize),
    #[error("forest generation failed after {0} attempts")]
    Unsatisfiable(usize),
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
