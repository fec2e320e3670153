//! Semantic SLAM on a simulated world: association weights, a geometric
//! maximization step and the EM loop that alternates them with labels.

mod em;
mod geometry;
mod weights;
mod world;

pub use em::{diagnostics, em_run, initial_landmarks, maximize_labels, odometry_nll, EmDiagnostics, EmResult};
pub use geometry::{maximize_geometry, GeometryProblem, GeometryResult, MAX_GN_ITERATIONS, STEP_TOLERANCE};
pub use weights::{
    associations_with, detection_nll, detection_position_logpdf, enumerate_associations, weights_full,
    weights_position_only, weights_reduced, DetectionEvidence, NoiseModel, WeightInputs, WeightMatrix,
    DEFAULT_ENUMERATION_CAP,
};
pub use world::{
    simulate_world, synthetic_prior_table, wrap_angle, Detection, Landmark, Pose, SlamConfig, World,
};
