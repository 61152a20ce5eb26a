use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the imaging library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("scale exceeds Nyquist: k_max = {k_max} needs radius {needed:.2}, grid supports {nyquist:.2}")]
    ScaleExceedsNyquist { k_max: usize, needed: f64, nyquist: f64 },

    #[error("grid mismatch: expected {expected:?}, got {got:?}")]
    GridMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("caustic: |det W1| = {det:.3e} below threshold {threshold}; split the time interval")]
    Caustic { det: f64, threshold: f64 },

    #[error("grazing direction excluded (c0 |nu'| / |nu_n| = {ratio:.4})")]
    Grazing { ratio: f64 },

    #[error("model too strongly focusing: more than {max} time intervals required")]
    TooStronglyFocusing { max: usize },

    #[error("expansion rank blow-up; shrink t1 (rank {rank} > {max})")]
    RankBlowUp { rank: usize, max: usize },

    #[error("overlap delta = {delta} must be below t1/2 = {half}")]
    OverlapTooLarge { delta: f64, half: f64 },

    #[error("CFL violation: c_max dt / h = {cfl:.4} exceeds {limit}")]
    Cfl { cfl: f64, limit: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidParameter { .. }
            | Error::GridMismatch { .. }
            | Error::ScaleExceedsNyquist { .. }
            | Error::OverlapTooLarge { .. }
            | Error::Cfl { .. }
            | Error::Grazing { .. } => 2,
            Error::Caustic { .. } | Error::TooStronglyFocusing { .. } | Error::RankBlowUp { .. } => 3,
            Error::Io { .. } | Error::Format { .. } => 4,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ScaleExceedsNyquist { .. } => "scale_exceeds_nyquist",
            Error::GridMismatch { .. } => "grid_mismatch",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Caustic { .. } => "caustic",
            Error::Grazing { .. } => "grazing",
            Error::TooStronglyFocusing { .. } => "too_strongly_focusing",
            Error::RankBlowUp { .. } => "rank_blow_up",
            Error::OverlapTooLarge { .. } => "overlap_too_large",
            Error::Cfl { .. } => "cfl",
            Error::Config(_) => "config",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
