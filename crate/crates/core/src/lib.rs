//! Decentralized adaptive gradient descent ascent for nonconvex-strongly-concave
//! minimax problems: network topologies, quadratic test problems, steppers,
//! evaluation metrics and an experiment harness.

pub mod algorithms;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod problems;
pub mod rng;
pub mod topology;

pub use algorithms::{
    centralized_tiada, run, AlgoConfig, Algorithm, Init, RunAbort, RunSetup, RunState, Trace, UpdateOrder,
};
pub use error::{Error, Result};
pub use metrics::TraceRecord;
pub use problems::{NoiseModel, ProjectionSet, QuadraticLocal, QuadraticMinimaxProblem};
pub use topology::{GraphKind, GraphSpec, WeightMatrix};
