//! Interaction metrics extracted from recorded sessions, and a linear model
//! that maps them to questionnaire scores.

mod features;
mod regression;
mod session;

use thiserror::Error;

use crate::store::{Role, StoreError};

pub use features::{FeatureFn, FeatureRegistry, FeatureVector, MetricsConfig, extract_features, feature_matrix};
pub use regression::{LIKERT_MAX, LIKERT_MIN, LinearModel, RANK_TOLERANCE, ols_fit};
pub use session::{
    DEFAULT_HEAD_JOINT, RequiredTime, accumulated_gaze_angle, accumulated_gaze_angle_in, count_utterances,
    required_time, trajectory_length, trajectory_length_in,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("session has no task_start marker preceding a task_complete")]
    NoTaskMarkers,
    #[error("unknown entity {0:?}")]
    UnknownEntity(String),
    #[error("session header has no {} entity", .0.as_str())]
    NoEntityWithRole(Role),
    #[error("joint {0} does not exist")]
    InvalidJoint(usize),
    #[error("unsupported feature {0:?}")]
    UnsupportedFeature(String),
    #[error("missing feature {0:?}")]
    MissingFeature(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("{n} samples cannot fit {p} features (need more than {})", p + 1)]
    TooFewSamples { n: usize, p: usize },
    #[error("design matrix has rank {rank} of {columns} columns")]
    RankDeficient { rank: usize, columns: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid model document: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}
