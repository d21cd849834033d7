//! Multilevel sequential Monte Carlo (MLSMC) for Bayesian inverse problems
//! whose forward model is a hierarchy of finite element discretizations.
//!
//! The crate is organized bottom-up:
//!
//! - [`fem`]: piecewise-linear finite elements for `-(û p')' = f` on `[0, 1]`.
//! - [`field`]: the parametrized permeability `û` and the source term `f`.
//! - [`problem`]: prior, observation model, misfit and per-level targets.
//! - [`smc`]: exact level-0 sampling, multinomial resampling, random-walk
//!   Metropolis mutation and the level sweep.
//! - [`estimator`]: the multilevel telescoping estimator, the single-level
//!   comparator and variance probes.
//! - [`planner`]: rate fits, level count and per-level sample allocation.
//! - [`harness`]: the experiment drivers behind the `mlsmc` binary.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too; index loops
// mirror the numerical formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod estimator;
pub mod fem;
pub mod field;
pub mod harness;
pub mod planner;
pub mod problem;
pub mod quadrature;
pub mod rng;
pub mod smc;
pub mod stats;

pub use error::{Error, Result};
pub use estimator::{mlsmc_estimate, single_level_estimate, Functional, MultilevelEstimate};
pub use fem::{ForwardSolution, Mesh, TridiagonalSystem};
pub use field::{Basis, PermeabilityField, SourceField};
pub use planner::{LevelSchedule, RateEstimates};
pub use problem::{ForwardModel, LevelTarget, ObservationSetup, ProblemConfig};
pub use rng::Seed;
pub use smc::{MutationConfig, ParticleCloud, SweepOutput, SweepPlan};
