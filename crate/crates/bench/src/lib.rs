//! Shared fixtures for the benchmarks.

use stobal::noise::{path_seed, sample_path};
use stobal::{Grid1D, GridFunction, InitialData, Problem, ProblemOverrides, WienerPath};

pub const HORIZON: f64 = 0.5;

pub fn problem(name: &str) -> Problem {
    Problem::by_name(name, &ProblemOverrides::default()).expect("catalog problem")
}

/// Riemann-plus-bump data on `[-4, 4]`.
pub fn state(ncells: usize) -> GridFunction {
    InitialData::RiemannBump.project(Grid1D::symmetric(4.0, ncells).expect("grid"))
}

/// A path on `[0, HORIZON]` with knots every `step`.
pub fn path(step: f64) -> WienerPath {
    sample_path(path_seed(1, 0), HORIZON, HORIZON / 8.0).and_then(|p| p.refine_to(step)).expect("path")
}
