use thiserror::Error;

use crate::nn::ModelParams;

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cutoff h = {h} exceeds half the smallest box length ({limit})")]
    CutoffTooLarge { h: f64, limit: f64 },

    #[error("particles {i} and {j} are coincident (distance {dist:e})")]
    CoincidentParticles { i: usize, j: usize, dist: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("nonpositive volume at particle {0}")]
    NonpositiveVolume(usize),

    #[error("reference positions are required for a solid model")]
    MissingReference,

    #[error("degenerate heat capacity at particle {particle}: d2U/dS2 = {value:e}")]
    DegenerateHeatCapacity { particle: usize, value: f64 },

    #[error("trajectory blow-up at step {step}: max |v| = {vmax:e}")]
    TrajectoryBlowup { step: u64, vmax: f64 },

    #[error("covariance of particle {particle} is not positive definite")]
    SingularCovariance { particle: usize },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss {
        epoch: usize,
        last_good: Option<Box<ModelParams>>,
    },

    #[error("need at least {needed} snapshots, got {got}")]
    InsufficientSnapshots { needed: usize, got: usize },

    #[error("trajectory carries neither unwrapped coordinates nor image flags")]
    MissingUnwrapData,

    #[error("reference curve has zero norm")]
    ZeroReference,

    #[error("abscissa grids differ")]
    AbscissaMismatch,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("inconsistent frame {frame}: {msg}")]
    InconsistentFrame { frame: usize, msg: String },

    #[error("invalid config at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
