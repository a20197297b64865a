use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the analysis, calibration and scheduling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("image too small: {width}x{height} (minimum side is {min})")]
    ImageTooSmall { width: usize, height: usize, min: usize },

    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {message}", path.display())]
    Data { path: PathBuf, message: String },

    #[error("dimension mismatch: {} is {got_w}x{got_h}, expected {want_w}x{want_h}", path.display())]
    DimensionMismatch {
        path: PathBuf,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },

    #[error("no detection threshold: {0}")]
    NoThreshold(String),

    #[error("rank deficient fit: {0}")]
    RankDeficient(String),

    #[error("infeasible power budget: target {target:.6} W outside achievable [{min:.6}, {max:.6}] W")]
    InfeasibleBudget { target: f64, min: f64, max: f64 },

    #[error("frame index {index} out of range (table has {len} frames)")]
    FrameOutOfRange { index: usize, len: usize },

    #[error("malformed {what}: {message}")]
    Parse { what: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn parse(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Parse {
            what,
            message: msg.into(),
        }
    }

    /// Attach a frame index to an error coming out of per-frame work.
    pub fn in_frame(self, index: usize) -> Self {
        Error::Frame {
            index,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
