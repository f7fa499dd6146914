use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    AsymmetricInput(f64),

    #[error("eigensolver did not converge within {0} iterations")]
    ConvergenceFailure(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("k = {k} nearest neighbours requested for {n} points")]
    DegenerateFeatures { k: usize, n: usize },

    #[error("rank {rank} exceeds the largest admissible value {max}")]
    RankTooLarge { rank: usize, max: usize },

    #[error("zoomout loss requires a spectral filter bank")]
    MissingFilterBank,

    #[error("at least {needed} observed entries are required, found {found}")]
    TooFewObservations { needed: usize, found: usize },

    #[error("training diverged at iteration {iteration}: loss is not finite")]
    DivergenceDetected { iteration: usize },

    #[error("mask has no observed entries")]
    EmptyMask,

    #[error("effective rank of the zero matrix is undefined")]
    ZeroMatrix,

    #[error("factors are not balanced (residual {0:.3e})")]
    UnbalancedFactors(f64),

    #[error("labels need at least one positive{0}")]
    DegenerateLabels(&'static str),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("index ({row}, {col}) outside declared shape {rows}x{cols}")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Stable machine-readable category used by the CLI exit path.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Parse { .. } | Error::IndexOutOfBounds { .. } | Error::Io(_) => "data",
            Error::EmptyMask | Error::TooFewObservations { .. } => "data",
            Error::DivergenceDetected { .. } => "divergence",
            Error::ConvergenceFailure(_) => "numerics",
            _ => "invalid-input",
        }
    }

    /// Process exit code paired with [`Error::category`].
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "data" => 3,
            "divergence" => 4,
            "numerics" => 5,
            _ => 6,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
