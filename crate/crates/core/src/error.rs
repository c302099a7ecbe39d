use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("truncation overflow: norm leakage {leakage:.3e} exceeds tolerance {tolerance:.3e}")]
    TruncationOverflow { leakage: f64, tolerance: f64 },

    #[error("truncation too small: |alpha|^2 = {alpha_sq} exceeds n_max/4 = {limit}")]
    TruncationUnsafe { alpha_sq: f64, limit: f64 },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dispersive quantities require a nonzero qubit/cavity detuning")]
    ZeroDetuning,

    #[error("step unstable at t = {time:.6e}: {reason}")]
    StepUnstable { time: f64, reason: String },

    #[error("jump channel {channel} has vanishing rate on the current state")]
    NullJump { channel: usize },

    #[error("more than {limit} jumps in a single trajectory")]
    MaxJumpsExceeded { limit: usize },

    #[error("echo ordering violated: t = {t} precedes t_pi = {t_pi}")]
    EchoOrdering { t_pi: f64, t: f64 },

    #[error("trajectory {traj_index} (seed {seed}) failed: {source}")]
    Trajectory {
        traj_index: u64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
