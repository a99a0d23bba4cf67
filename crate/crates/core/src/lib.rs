//! Radar transmit-power allocation for multi-target tracking.
//!
//! The crate minimizes the weighted sum of per-target position BCRLBs under a
//! total-power budget with a per-target floor. It offers a linear-time
//! closed-form allocator (features, score, floor transform), two iterative
//! reference solvers, a small expression language for candidate scoring rules
//! with a cascaded fitness evaluation, and a closed-loop EKF simulation.

// `!(x <= y)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocator;
pub mod error;
pub mod expr;
pub mod features;
pub mod model;
pub mod problem;
pub mod rng;
pub mod scenario;
pub mod solvers;
pub mod tracking;

pub use allocator::{Allocator, PowerAllocation, ScoreVector, Scorer};
pub use error::{Error, Result};
pub use features::{feature_matrix, FeatureMatrix, FeatureVector};
pub use model::{InfoMatrix4, MeasurementNoiseCoeffs, RadarSystemParams, TargetPhysics};
pub use problem::{objective, objective_gradient, AllocationProblem, TargetInfo};
pub use scenario::{GeneratorConfig, Label, ScenarioBatch, ScenarioInstance};
pub use solvers::{SolverOptions, SolverReport};
