//! Spatial and multivariate model extensions, mediation analysis and the
//! robustness variants.

pub mod icar;
pub mod mediation;
pub mod robustness;
pub mod spatial;

use thiserror::Error;

use crate::model::ModelError;

pub use icar::{icar_log_density, icar_scaling_factor, sample_icar, Adjacency, SOFT_CONSTRAINT_VARIANCE};
pub use mediation::{
    decompose, fit_mediation, interaction_check, mediation_sensitivity, InteractionReport, InteractionRow,
    MediationResult, PolicyMediation, SensitivityReport,
};
pub use robustness::{robustness_specs, robustness_suite, RobustnessVariant};
pub use spatial::{fit_joint_mobility, fit_spatial_mobility, spatial_model, CorrelationSummary, JointFit};

#[derive(Debug, Error)]
pub enum ExtensionError {
    #[error("adjacency graph is disconnected")]
    DisconnectedGraph,
    #[error("invalid adjacency: {0}")]
    InvalidAdjacency(String),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}
