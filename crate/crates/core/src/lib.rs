//! Operator splitting for scalar stochastic balance laws
//! `du + f(u)_x dt = σ(x, u) dB` in one space dimension, with estimators for
//! the a priori bounds of the scheme and a Monte Carlo rate harness.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod clstep;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod harness;
pub mod noise;
pub mod problem;
pub mod sdestep;
pub mod splitting;
pub mod weights;

pub use clstep::{cl_solve, exact_riemann_burgers, NumericalFlux};
pub use diagnostics::{EntropyCheck, Estimate, TestFunction};
pub use error::{Error, Result};
pub use grid::{Grid1D, GridFunction};
pub use harness::{fit_loglog, run_convergence, run_diagnose, ExperimentConfig, RateFit};
pub use noise::{sample_path, WienerPath};
pub use problem::{EntropyPair, FluxSpec, InitialData, NoiseSpec, Problem, ProblemOverrides};
pub use sdestep::{sde_step, SdeScheme};
pub use splitting::{run_splitting, SplitTrajectory};
pub use weights::{MollifierSpec, UvPair, WeightSpec};
