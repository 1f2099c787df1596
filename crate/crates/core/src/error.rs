use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point lies within the singular band of the motion plane (|z'| = {z:.4})")]
    NearPlaneSingularity { z: f64 },

    #[error("affine transform is singular (det = {det:e})")]
    SingularTransform { det: f64 },

    #[error("Hessian is ill-conditioned (condition number {cond:e})")]
    IllConditionedHessian { cond: f64 },

    #[error("frame geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("invalid frame geometry {width}x{height}: {reason}")]
    InvalidGeometry {
        width: usize,
        height: usize,
        reason: &'static str,
    },

    #[error("block grid is incomplete: {0}")]
    IncompleteGrid(String),

    #[error("rate-distortion curves do not overlap in quality")]
    NoOverlap,

    #[error("invalid rate-distortion curve: {0}")]
    InvalidCurve(String),

    #[error("malformed sequence: {0}")]
    MalformedSequence(String),

    #[error("file truncated: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: u64, found: u64 },

    #[error("frame index {index} out of range (count {count})")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("need at least {needed} frames, sequence has {available}")]
    TooFewFrames { needed: usize, available: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{} frame pair(s) failed: {}", .0.len(), .0.join("; "))]
    PairsFailed(Vec<String>),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
