//! Sparse-control-point MPPI with Stein variational transport, plus the
//! forest world, LiDAR model and closed-loop benchmark used to evaluate it.
//!
//! The solver entry point is [`solve`]. Three variants share it: vanilla
//! MPPI with a knot on every step, sparse control points without transport,
//! and sparse control points with SVGD transport of the sampled noise.

pub mod bench;
pub mod config;
pub mod cost;
pub mod error;
pub mod model;
pub mod solver;
pub mod spline;
pub mod svgd;
pub mod world;

pub use error::{Error, Result};
pub use model::{
    validate_config, BandwidthMode, ControlInput, ControlSequence, CostWeights, NoiseMatrix,
    RolloutResult, SolverConfig, SparseControlPoints, State, Variant, Vec3,
};
pub use solver::{solve, solve_with, SolveDiagnostics, SolveOptions, SolveOutput};
pub use world::{Environment, SensedObstacles};
