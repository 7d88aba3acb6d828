//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no manifest.json under {0}")]
    MissingManifest(PathBuf),

    #[error("shape mismatch in trajectory {id}: expected {expected} values, found {actual}")]
    ShapeMismatch {
        id: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite feature in trajectory {id} at frame {frame}, object {object}, dim {dim}")]
    NonFiniteFeature {
        id: String,
        frame: usize,
        object: usize,
        dim: usize,
    },

    #[error("zero-norm feature vector at {location}")]
    ZeroNorm { location: String },

    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("frame index {index} out of range for trajectory {id} ({frames} frames)")]
    IndexOutOfRange {
        id: String,
        index: usize,
        frames: usize,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("key frames computed for trajectory {expected} applied to trajectory {actual}")]
    KeyFrameMismatch { expected: String, actual: String },

    #[error("too few samples for object {object}: have {available}, need {required}")]
    TooFewSamples {
        object: usize,
        available: usize,
        required: usize,
    },

    #[error("silhouette is undefined for a single cluster")]
    SingleCluster,

    #[error("cannot build a graph from an empty transition set")]
    EmptyTransitionSet,

    #[error("symbol arity mismatch: {left} vs {right}")]
    ArityMismatch { left: usize, right: usize },

    #[error("state {0} is not a node of the graph")]
    UnknownState(String),

    #[error("no path from {start} to {goal}")]
    NoPath { start: String, goal: String },

    #[error("input width {actual} does not match the model width {expected}")]
    WidthMismatch { expected: usize, actual: usize },

    #[error("training diverged at step {step}: loss {loss} exceeds 10x initial {initial}")]
    DivergedTraining {
        step: usize,
        loss: f64,
        initial: f64,
    },

    #[error("no consecutive key-frame pairs to threshold over")]
    NoKeyFramePairs,

    #[error("goal index has no frames for state {0}")]
    EmptyIndexEntry(String),

    #[error("goal state {0} is not a node of the graph")]
    GoalNotInGraph(String),

    #[error("goal not reached within {0} steps")]
    MaxStepsExceeded(usize),

    #[error("frame reference {trajectory}:{frame} cannot be resolved")]
    UnresolvableFrameRef { trajectory: String, frame: usize },

    #[error("unknown trajectory {0}")]
    UnknownTrajectory(String),

    #[error("prototype separation unsatisfiable after {retries} attempts")]
    SeparationUnsatisfiable { retries: usize },

    #[error("world admits no skills: every object has a single state")]
    NoSkillsPossible,

    #[error("malformed model file: {0}")]
    BadModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
