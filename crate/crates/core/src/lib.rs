//! Constraint-aware downlink power control for mutually interfering cells.
//!
//! The crate centers on a closed-form projection that maps an arbitrary
//! candidate power vector into the set satisfying per-user rate targets and
//! a per-transmitter power budget, together with its analytic Jacobians, so
//! a neural network can be trained unsupervised through it. Around that sit
//! the random scenario generator, a small MLP with batch normalization,
//! reference baselines, and an evaluation harness.

pub mod baselines;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod scenario;
pub mod srnet;

pub use baselines::{
    baseline_p0, ensemble_select, multistart_local_opt, penalty_infer, violation,
    LocalOptResult, PenaltyOutcome, ViolationMeasure,
};
pub use error::{Error, Result};
pub use geometry::backward::projection_backward;
pub use geometry::l2::l2_projection;
pub use geometry::metrics::{grad_neg_sum_rate, min_rate_margin, sinr, sum_rate};
pub use geometry::projection::{project_forward, project_forward_heuristic, ProjectionTape};
pub use geometry::ConstraintSet;
pub use scenario::dataset::{generate_dataset, Dataset, DatasetMeta, GenConfig, GenStats};
pub use scenario::{ChannelRealization, EdgeRegion, NetworkLayout, RateSpec, ScenarioConfig};
pub use srnet::checkpoint::{load_checkpoint, save_checkpoint};
pub use srnet::train::{train, TrainConfig, Trained};
pub use srnet::{infer_projected, infer_raw, PowerControlNet, Variant};
