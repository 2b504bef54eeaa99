//! Experiment orchestration: configuration, Monte Carlo convergence runs with
//! common random numbers, log–log rate fits, the diagnostics bundle and the
//! CSV/summary outputs.
//!
//! The convergence experiment measures self-convergence: the exact stochastic
//! entropy solution is unavailable, so each ladder level is compared with a
//! splitting run at a much finer `Δt` and `dx` driven by the same Brownian
//! path. Grids are tied to the time step (`dx ∝ Δt`) so the finite-volume
//! error, of order `dx^{1/2}` for BV data, stays below the `Δt^{1/3}` signal.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::clstep::{cl_solve, NumericalFlux};
use crate::diagnostics::{
    entropy_residual, fractional_bv, lp_local, pairwise_sum, weighted_l1_error, EntropyCheck, Estimate, FracBvBound,
    TestFunction,
};
use crate::error::{Error, Result};
use crate::grid::{Grid1D, GridFunction};
use crate::noise::{path_seed, sample_path, WienerPath};
use crate::problem::{EntropyPair, InitialData, Problem, ProblemOverrides};
use crate::sdestep::{sde_step, SdeScheme, MIN_ENSEMBLE};
use crate::splitting::{run_splitting, SplitTrajectory};
use crate::weights::{weighted_lp_norm, MollifierSpec, WeightSpec};

/// Discretization allowance of the entropy residual, calibrated on the
/// deterministic Godunov baseline of the default configuration.
pub const DEFAULT_ENTROPY_ALLOWANCE: f64 = 0.05;

/// Everything an experiment needs. Loaded from flat TOML; unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Catalog problem name.
    pub problem: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flux_range: Option<f64>,
    /// Initial data name; the catalog default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    /// Computational interval `[-half_width, half_width]`.
    pub half_width: f64,
    /// Cells at the coarsest ladder level; doubled with every level.
    pub ncells: usize,
    pub horizon: f64,
    /// Ladder `Δt = T/2^k` for `k = ladder_min..=ladder_max`.
    pub ladder_min: u32,
    pub ladder_max: u32,
    /// Reference `Δt = T/2^reference_level`.
    pub reference_level: u32,
    /// Reference grid refinement relative to the finest ladder grid.
    pub reference_dx_factor: usize,
    pub paths: usize,
    pub seed: u64,
    /// Weight rate `ρ` of `φ(x) = exp(-ρ√(1+x²))`.
    pub rho: f64,
    pub cl_scheme: String,
    pub sde_scheme: String,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses the ambient pool.
    pub threads: usize,
    /// Also record errors at `T/2`.
    pub mid_time: bool,
    /// Acceptance thresholds of the convergence run.
    pub min_order: f64,
    pub max_half_width: f64,

    /// Level `k` of the diagnostics ensemble (`Δt = T/2^k`).
    pub diagnose_level: u32,
    /// Brownian knots per splitting step in the diagnostics ensemble.
    pub diagnose_path_refine: usize,
    pub frac_bv: bool,
    pub frac_bv_slack: f64,
    /// `C_T` of the fractional BV bound; zero for `σ = σ(u)`.
    pub frac_bv_ct: f64,
    pub time_modulus: bool,
    pub modulus_separations: usize,
    pub modulus_slope_min: f64,
    pub modulus_slope_max: f64,
    pub lp_local: bool,
    /// Cone radius; `M T + 1` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lp_radius: Option<f64>,
    pub entropy: bool,
    pub entropy_delta: f64,
    pub entropy_allowance: f64,
    pub entropy_constants: Vec<f64>,
    pub entropy_nodes: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: "burgers-cos".into(),
            amplitude: None,
            flux_range: None,
            initial: None,
            half_width: 4.0,
            ncells: 64,
            horizon: 0.5,
            ladder_min: 3,
            ladder_max: 7,
            reference_level: 10,
            reference_dx_factor: 8,
            paths: 400,
            seed: 20_240_601,
            rho: 1.0,
            cl_scheme: "godunov".into(),
            sde_scheme: "milstein".into(),
            out_dir: PathBuf::from("out"),
            threads: 0,
            mid_time: false,
            min_order: 0.30,
            max_half_width: 0.08,
            diagnose_level: 5,
            diagnose_path_refine: 64,
            frac_bv: true,
            frac_bv_slack: 0.05,
            frac_bv_ct: 0.0,
            time_modulus: true,
            modulus_separations: 6,
            modulus_slope_min: 0.40,
            modulus_slope_max: 0.60,
            lp_local: true,
            lp_radius: None,
            entropy: true,
            entropy_delta: 0.05,
            entropy_allowance: DEFAULT_ENTROPY_ALLOWANCE,
            entropy_constants: vec![-0.5, 0.0, 0.25, 0.5, 1.0],
            entropy_nodes: 4,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form, ignoring `out_dir` and `threads`.
    pub fn hash(&self) -> String {
        let canonical = Self { out_dir: PathBuf::new(), threads: 0, ..self.clone() };
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.build_problem()?;
        self.schemes()?;
        if !(self.half_width > 0.0 && self.horizon > 0.0 && self.rho > 0.0) {
            return Err(config_err("half_width, horizon and rho must be positive"));
        }
        if self.ncells < 4 {
            return Err(config_err("ncells must be at least 4"));
        }
        if self.ladder_max < self.ladder_min + 2 {
            return Err(config_err("the Δt ladder needs at least 3 levels"));
        }
        if self.reference_level < self.ladder_max + 3 {
            return Err(config_err("reference Δt must be at most the finest ladder Δt / 8"));
        }
        if self.reference_level > 20 || self.reference_dx_factor == 0 || !self.reference_dx_factor.is_power_of_two() {
            return Err(config_err("reference_level ≤ 20 and a power-of-two reference_dx_factor required"));
        }
        if self.paths < MIN_ENSEMBLE {
            return Err(config_err(format!("paths must be at least {MIN_ENSEMBLE}")));
        }
        if self.diagnose_level < self.ladder_min || self.diagnose_level > 16 {
            return Err(config_err("diagnose_level must lie in [ladder_min, 16]"));
        }
        if self.diagnose_path_refine == 0 || !self.diagnose_path_refine.is_power_of_two() {
            return Err(config_err("diagnose_path_refine must be a power of two"));
        }
        if self.time_modulus
            && (self.modulus_separations < 3 || self.diagnose_path_refine < 1 << self.modulus_separations)
        {
            return Err(config_err("time modulus needs ≥ 3 separations and diagnose_path_refine ≥ 2^separations"));
        }
        if self.entropy && (self.entropy_nodes == 0 || !self.diagnose_path_refine.is_multiple_of(self.entropy_nodes)) {
            return Err(config_err("entropy_nodes must divide diagnose_path_refine"));
        }
        if self.entropy_delta <= 0.0 || self.entropy_allowance < 0.0 {
            return Err(config_err("entropy_delta must be positive and entropy_allowance non-negative"));
        }
        if let Some(r) = self.lp_radius {
            if !(r > 0.0 && r <= self.half_width) {
                return Err(config_err("lp_radius must lie in (0, half_width]"));
            }
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<Problem> {
        let initial = self.initial.as_deref().map(InitialData::by_name).transpose()?;
        let overrides = ProblemOverrides { amplitude: self.amplitude, flux_range: self.flux_range, initial };
        Problem::by_name(&self.problem, &overrides)
    }

    pub fn schemes(&self) -> Result<(NumericalFlux, SdeScheme)> {
        Ok((self.cl_scheme.parse()?, self.sde_scheme.parse()?))
    }

    pub fn weight(&self) -> Result<WeightSpec> {
        WeightSpec::new(self.rho)
    }

    /// Time step at level `k`.
    pub fn dt(&self, level: u32) -> f64 {
        self.horizon / f64::from(1u32 << level)
    }

    /// Grid at level `k`; `dx` halves with `Δt`.
    pub fn grid(&self, level: u32) -> Result<Grid1D> {
        Grid1D::symmetric(self.half_width, self.ncells << (level - self.ladder_min))
    }

    pub fn reference_grid(&self) -> Result<Grid1D> {
        Grid1D::symmetric(
            self.half_width,
            (self.ncells << (self.ladder_max - self.ladder_min)) * self.reference_dx_factor,
        )
    }

    /// The Brownian path of path index `i` at the reference resolution.
    pub fn reference_path(&self, i: usize) -> Result<WienerPath> {
        let seed = path_seed(self.seed, i as u64);
        sample_path(seed, self.horizon, self.dt(self.ladder_min))?.refine(1 << (self.reference_level - self.ladder_min))
    }
}

/// Run `f` on a dedicated pool of `threads` workers; `0` uses the ambient pool.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| config_err(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// States after the splitting steps listed in `capture` (indices into `1..=N`).
fn captured_states(
    u0: &GridFunction,
    problem: &Problem,
    path: &WienerPath,
    dt: f64,
    n_steps: usize,
    schemes: (NumericalFlux, SdeScheme),
    capture: &[usize],
) -> Result<Vec<GridFunction>> {
    let mut out = Vec::with_capacity(capture.len());
    let mut u = u0.clone();
    for n in 0..n_steps {
        let mid = cl_solve(&u, &problem.flux, dt, schemes.0)?;
        u = sde_step(&mid, &problem.noise, path, n as f64 * dt, (n + 1) as f64 * dt, schemes.1)?;
        if capture.contains(&(n + 1)) {
            out.push(u.clone());
        }
    }
    Ok(out)
}

/// Least-squares fit of `log err = intercept + slope · log Δt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% Student-t half-width of the slope.
    pub half_width: f64,
}

/// Weighted least squares on `(Δt, error, stderr)` in log space. Weights are
/// `(error/stderr)²`; with any zero stderr all weights are equal.
pub fn fit_loglog(points: &[(f64, f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} points, need at least 3", points.len())));
    }
    if points.iter().any(|&(h, e, s)| !(h > 0.0 && e > 0.0 && s >= 0.0 && h.is_finite() && e.is_finite())) {
        return Err(Error::DegenerateFit("steps and errors must be positive and finite".into()));
    }
    let uniform = points.iter().any(|p| p.2 == 0.0);
    let w: Vec<f64> = points.iter().map(|&(_, e, s)| if uniform { 1.0 } else { (e / s).powi(2) }).collect();
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&x).map(|(w, x)| w * (x - xm).powi(2)).sum();
    if sxx <= 1e-12 * sw {
        return Err(Error::DegenerateFit("all steps coincide".into()));
    }
    let sxy: f64 = (0..x.len()).map(|i| w[i] * (x[i] - xm) * (y[i] - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let dof = (points.len() - 2) as f64;
    let rss: f64 = (0..x.len()).map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2)).sum();
    let t = StudentsT::new(0.0, 1.0, dof).expect("positive dof").inverse_cdf(0.975);
    Ok(LogLogFit { slope, intercept, half_width: t * (rss / dof / sxx).sqrt() })
}

/// Aggregated error of one ladder level at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelError {
    pub level: u32,
    pub dt: f64,
    pub dx: f64,
    pub time: f64,
    pub error: Estimate,
    pub paths: usize,
}

/// Per-path error; `NaN` marks an aborted path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawError {
    pub path: usize,
    pub seed: u64,
    pub level: u32,
    pub time: f64,
    pub error: f64,
}

/// Outcome of a convergence experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    /// Errors at `t = T`, sorted by decreasing `Δt`.
    pub levels: Vec<LevelError>,
    /// Errors at `T/2` when requested.
    pub mid_levels: Vec<LevelError>,
    pub fit: LogLogFit,
    /// Ensemble correlation of per-path errors between neighbouring levels.
    pub correlations: Vec<f64>,
    pub raw: Vec<RawError>,
    pub aborted: Vec<u64>,
}

impl RateFit {
    pub fn passes(&self, cfg: &ExperimentConfig) -> bool {
        self.fit.slope >= cfg.min_order && self.fit.half_width <= cfg.max_half_width
    }
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (pairwise_sum(a) / n, pairwise_sum(b) / n);
    let cov: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let va: Vec<f64> = a.iter().map(|x| (x - ma).powi(2)).collect();
    let vb: Vec<f64> = b.iter().map(|y| (y - mb).powi(2)).collect();
    pairwise_sum(&cov) / (pairwise_sum(&va) * pairwise_sum(&vb)).sqrt()
}

/// Self-convergence experiment with common random numbers.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<RateFit> {
    cfg.validate()?;
    let problem = cfg.build_problem()?;
    if !problem.noise.satisfies_rate_hypotheses() {
        warn!("{}: outside theorem hypotheses", problem.name);
    }
    let schemes = cfg.schemes()?;
    let spec = cfg.weight()?;
    let levels: Vec<u32> = (cfg.ladder_min..=cfg.ladder_max).collect();
    let grids: Vec<Grid1D> = levels.iter().map(|&k| cfg.grid(k)).collect::<Result<_>>()?;
    let ref_grid = cfg.reference_grid()?;
    let u0_ref = problem.initial.project(ref_grid);
    let u0s: Vec<GridFunction> = grids.iter().map(|g| u0_ref.restrict_to(g)).collect::<Result<_>>()?;
    let times: Vec<f64> = if cfg.mid_time { vec![cfg.horizon, 0.5 * cfg.horizon] } else { vec![cfg.horizon] };
    info!(
        "converge: {} paths, levels {}..={}, reference level {} on {} cells",
        cfg.paths,
        cfg.ladder_min,
        cfg.ladder_max,
        cfg.reference_level,
        ref_grid.ncells()
    );

    // errors[time][level] for one path
    let one_path = |i: usize| -> Result<Option<Vec<Vec<f64>>>> {
        let path = cfg.reference_path(i)?;
        let steps = |k: u32| 1usize << k;
        let capture = |k: u32| -> Vec<usize> {
            let mut c = vec![steps(k)];
            if cfg.mid_time {
                c.insert(0, steps(k) / 2);
            }
            c
        };
        let run = |u0: &GridFunction, path: &WienerPath, k: u32| -> Result<Vec<GridFunction>> {
            let mut states = captured_states(u0, &problem, path, cfg.dt(k), steps(k), schemes, &capture(k))?;
            states.reverse(); // terminal first
            Ok(states)
        };
        let outcome = (|| -> Result<Vec<Vec<f64>>> {
            let reference = run(&u0_ref, &path, cfg.reference_level)?;
            let mut errs = vec![Vec::with_capacity(levels.len()); times.len()];
            for (j, &k) in levels.iter().enumerate() {
                let p = path.coarsen(1 << (cfg.reference_level - k))?;
                let states = run(&u0s[j], &p, k)?;
                for (ti, (s, r)) in states.iter().zip(&reference).enumerate() {
                    errs[ti].push(weighted_l1_error(s, r, &spec)?);
                }
            }
            Ok(errs)
        })();
        match outcome {
            Ok(errs) => Ok(Some(errs)),
            Err(Error::NonFinite { cell }) => {
                warn!("path {i} (seed {}) aborted: non-finite state at cell {cell}", path.seed());
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };
    let outcomes: Vec<Option<Vec<Vec<f64>>>> = (0..cfg.paths).into_par_iter().map(one_path).collect::<Result<_>>()?;

    let mut raw = Vec::new();
    let mut aborted = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        let seed = path_seed(cfg.seed, i as u64);
        if o.is_none() {
            aborted.push(seed);
        }
        for (ti, &time) in times.iter().enumerate() {
            for (j, &level) in levels.iter().enumerate() {
                let error = o.as_ref().map_or(f64::NAN, |e| e[ti][j]);
                raw.push(RawError { path: i, seed, level, time, error });
            }
        }
    }
    let ok: Vec<&Vec<Vec<f64>>> = outcomes.iter().flatten().collect();
    if ok.len() < MIN_ENSEMBLE {
        return Err(Error::EnsembleTooSmall { got: ok.len(), need: MIN_ENSEMBLE });
    }
    let column = |ti: usize, j: usize| -> Vec<f64> { ok.iter().map(|e| e[ti][j]).collect() };
    let summarize = |ti: usize| -> Result<Vec<LevelError>> {
        levels
            .iter()
            .enumerate()
            .map(|(j, &level)| {
                Ok(LevelError {
                    level,
                    dt: cfg.dt(level),
                    dx: grids[j].dx(),
                    time: times[ti],
                    error: Estimate::from_samples(&column(ti, j))?,
                    paths: ok.len(),
                })
            })
            .collect()
    };
    let terminal = summarize(0)?;
    let mid_levels = if cfg.mid_time { summarize(1)? } else { Vec::new() };
    let points: Vec<(f64, f64, f64)> = terminal.iter().map(|l| (l.dt, l.error.mean, l.error.stderr)).collect();
    let fit = fit_loglog(&points)?;
    let correlations = (1..levels.len()).map(|j| correlation(&column(0, j - 1), &column(0, j))).collect();
    Ok(RateFit { levels: terminal, mid_levels, fit, correlations, raw, aborted })
}

fn write_header(out: &mut impl Write, cfg: &ExperimentConfig) -> Result<()> {
    writeln!(out, "# config_hash={} seed={}", cfg.hash(), cfg.seed)?;
    Ok(())
}

/// Raw `(level, path)` rows, per-level aggregates and the fit.
pub fn write_convergence_csv(fit: &RateFit, cfg: &ExperimentConfig, mut out: impl Write) -> Result<()> {
    write_header(&mut out, cfg)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "level", "dt", "time", "path", "seed", "value", "stderr"])?;
    for r in &fit.raw {
        w.write_record([
            "raw".to_string(),
            r.level.to_string(),
            cfg.dt(r.level).to_string(),
            r.time.to_string(),
            r.path.to_string(),
            r.seed.to_string(),
            r.error.to_string(),
            String::new(),
        ])?;
    }
    for l in fit.levels.iter().chain(&fit.mid_levels) {
        w.write_record([
            "mean".to_string(),
            l.level.to_string(),
            l.dt.to_string(),
            l.time.to_string(),
            String::new(),
            String::new(),
            l.error.mean.to_string(),
            l.error.stderr.to_string(),
        ])?;
    }
    w.write_record(["slope", "", "", "", "", "", &fit.fit.slope.to_string(), &fit.fit.half_width.to_string()])?;
    w.write_record(["intercept", "", "", "", "", "", &fit.fit.intercept.to_string(), ""])?;
    w.flush()?;
    Ok(())
}

pub fn convergence_summary(fit: &RateFit, cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "convergence: problem {} seed {} config {}", cfg.problem, cfg.seed, cfg.hash());
    for l in &fit.levels {
        let _ = writeln!(
            s,
            "  dt {:.6e}  dx {:.4e}  E|u_ref - u| = {:.5e} ± {:.2e}  ({} paths)",
            l.dt, l.dx, l.error.mean, l.error.stderr, l.paths
        );
    }
    let _ = writeln!(s, "  order {:.4} ± {:.4} (95%)", fit.fit.slope, fit.fit.half_width);
    let corr: Vec<String> = fit.correlations.iter().map(|c| format!("{c:.3}")).collect();
    let _ = writeln!(s, "  neighbour-level correlations {}", corr.join(" "));
    if !fit.aborted.is_empty() {
        let _ = writeln!(s, "  aborted seeds {:?}", fit.aborted);
    }
    let verdict = if fit.passes(cfg) { "PASS" } else { "FAIL" };
    let _ = writeln!(s, "  {verdict}: order ≥ {} with half-width ≤ {}", cfg.min_order, cfg.max_half_width);
    s
}

/// One estimator evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagRow {
    pub estimator: String,
    pub params: String,
    pub value: f64,
    pub stderr: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnoseBundle {
    pub rows: Vec<DiagRow>,
}

impl DiagnoseBundle {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows of one estimator.
    pub fn of(&self, estimator: &str) -> Vec<&DiagRow> {
        self.rows.iter().filter(|r| r.estimator == estimator).collect()
    }

    pub fn write_csv(&self, cfg: &ExperimentConfig, mut out: impl Write) -> Result<()> {
        write_header(&mut out, cfg)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["estimator", "params", "value", "stderr", "bound", "pass"])?;
        for r in &self.rows {
            w.write_record([
                r.estimator.clone(),
                r.params.clone(),
                r.value.to_string(),
                r.stderr.to_string(),
                r.bound.to_string(),
                r.pass.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self, cfg: &ExperimentConfig) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "diagnose: problem {} seed {} config {}", cfg.problem, cfg.seed, cfg.hash());
        let mut names: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.estimator.as_str()) {
                names.push(&r.estimator);
            }
        }
        for name in names {
            let rows = self.of(name);
            let passed = rows.iter().filter(|r| r.pass).count();
            let verdict = if passed == rows.len() { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "  {verdict} {name} ({passed}/{})", rows.len());
        }
        s
    }
}

/// Trajectories of the diagnostics ensemble.
pub fn diagnose_ensemble(cfg: &ExperimentConfig) -> Result<Vec<SplitTrajectory>> {
    let problem = cfg.build_problem()?;
    let (cl, sde) = cfg.schemes()?;
    let k = cfg.diagnose_level;
    let u0 = problem.initial.project(cfg.grid(k)?);
    (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let seed = path_seed(cfg.seed, i as u64);
            let path = sample_path(seed, cfg.horizon, cfg.dt(cfg.ladder_min))?
                .refine((1 << (k - cfg.ladder_min)) * cfg.diagnose_path_refine)?;
            run_splitting(&u0, &problem, &path, cfg.dt(k), cfg.horizon, cl, sde)
        })
        .collect()
}

/// Within-interval modulus `‖u(t_{n+1}) − u(t_{n+1} − h)‖_{1,φ}` averaged
/// over intervals, for `h = Δt/2, Δt/4, …`. Returns `(h, estimate)` pairs.
pub fn within_interval_modulus(
    trajs: &[SplitTrajectory],
    separations: usize,
    spec: &WeightSpec,
) -> Result<Vec<(f64, Estimate)>> {
    let first = trajs.first().ok_or(Error::EnsembleTooSmall { got: 0, need: 1 })?;
    let dt = first.dt();
    let hs: Vec<f64> = (1..=separations).rev().map(|j| dt / f64::from(1u32 << j)).collect();
    let per_path: Vec<Vec<f64>> = trajs
        .par_iter()
        .map(|tr| {
            let mut sums = vec![Vec::with_capacity(tr.n_steps()); hs.len()];
            for n in 0..tr.n_steps() {
                let end = tr.time(n + 1);
                let target = tr.checkpoint(n + 1);
                let mut s = tr.time(n);
                let mut u = tr.u_right_limit(n)?.clone();
                // largest separation first, so the sweep runs forward in time
                for (j, &h) in hs.iter().enumerate().rev() {
                    let t = end - h;
                    u = sde_step(&u, tr.noise(), tr.path(), s, t, tr.sde_scheme())?;
                    s = t;
                    sums[j].push(weighted_lp_norm(&target.sub(&u)?, spec, 1.0)?);
                }
            }
            Ok(sums.iter().map(|v| pairwise_sum(v) / v.len() as f64).collect())
        })
        .collect::<Result<_>>()?;
    hs.iter()
        .enumerate()
        .map(|(j, &h)| {
            let samples: Vec<f64> = per_path.iter().map(|p| p[j]).collect();
            Ok((h, Estimate::from_samples(&samples)?))
        })
        .collect()
}

/// The standard entropy check of a configuration.
pub fn entropy_check(cfg: &ExperimentConfig) -> Result<EntropyCheck> {
    Ok(EntropyCheck {
        pair: EntropyPair::new(cfg.entropy_delta)?,
        constants: cfg.entropy_constants.clone(),
        family: TestFunction::standard_family(cfg.horizon),
        nodes: cfg.entropy_nodes,
        allowance: cfg.entropy_allowance,
    })
}

/// Runs the enabled estimators over one ensemble.
pub fn run_diagnose(cfg: &ExperimentConfig) -> Result<DiagnoseBundle> {
    cfg.validate()?;
    let mut bundle = DiagnoseBundle::default();
    if !(cfg.frac_bv || cfg.time_modulus || cfg.lp_local || cfg.entropy) {
        return Ok(bundle);
    }
    let problem = cfg.build_problem()?;
    let spec = cfg.weight()?;
    let trajs = diagnose_ensemble(cfg)?;
    let initial = trajs[0].checkpoint(0).clone();
    let finals: Vec<GridFunction> = trajs.iter().map(|t| t.terminal().clone()).collect();
    let dx = initial.grid().dx();

    if cfg.frac_bv {
        if !problem.noise.is_homogeneous() && cfg.frac_bv_ct == 0.0 {
            warn!("fractional BV bound with x-dependent noise needs frac_bv_ct > 0");
        }
        let bound = FracBvBound {
            growth: spec.cphi() * problem.flux.lip() * cfg.horizon,
            c_t: cfg.frac_bv_ct,
            kappa_sigma: problem.noise.holder().map_or(1.0, |h| h.1),
        };
        for k in [4.0, 8.0, 16.0] {
            let m = MollifierSpec::new(k * dx)?;
            let r = fractional_bv(&finals, &initial, &m, &spec, bound)?;
            bundle.rows.push(DiagRow {
                estimator: "fractional_bv".into(),
                params: format!("r={k}dx"),
                value: r.value,
                stderr: r.stderr,
                bound: r.bound * (1.0 + cfg.frac_bv_slack),
                pass: r.passes(cfg.frac_bv_slack),
            });
        }
    }

    if cfg.time_modulus {
        let moduli = within_interval_modulus(&trajs, cfg.modulus_separations, &spec)?;
        for (h, e) in &moduli {
            bundle.rows.push(DiagRow {
                estimator: "time_modulus".into(),
                params: format!("h={h}"),
                value: e.mean,
                stderr: e.stderr,
                bound: f64::NAN,
                pass: true,
            });
        }
        let points: Vec<(f64, f64, f64)> = moduli.iter().map(|(h, e)| (*h, e.mean, e.stderr)).collect();
        if points.iter().all(|p| p.1 == 0.0) {
            info!("time modulus vanishes identically; no exponent to fit");
        } else {
            let fit = fit_loglog(&points)?;
            bundle.rows.push(DiagRow {
                estimator: "time_modulus_slope".into(),
                params: format!("range=[{},{}]", cfg.modulus_slope_min, cfg.modulus_slope_max),
                value: fit.slope,
                stderr: fit.half_width,
                bound: cfg.modulus_slope_min,
                pass: (cfg.modulus_slope_min..=cfg.modulus_slope_max).contains(&fit.slope),
            });
        }
    }

    if cfg.lp_local {
        let m = problem.flux.lip();
        let radius = cfg.lp_radius.unwrap_or((m * cfg.horizon + 1.0).min(cfg.half_width));
        for p in [2.0, 4.0] {
            let r = lp_local(&finals, &initial, p, radius, m, cfg.horizon, &spec, &problem.flux, &problem.noise)?;
            bundle.rows.push(DiagRow {
                estimator: "lp_local".into(),
                params: format!("p={p} R={radius} gamma={} C1={} C2={}", r.gamma, r.constants.c1, r.constants.c2),
                value: r.lhs.mean,
                stderr: r.lhs.stderr,
                bound: r.rhs,
                pass: !r.violated,
            });
        }
    }

    if cfg.entropy {
        let check = entropy_check(cfg)?;
        for row in entropy_residual(&trajs, &check)? {
            let f = check.family[row.test];
            bundle.rows.push(DiagRow {
                estimator: "entropy_residual".into(),
                params: format!("c={} center={} width={}", row.c, f.center, f.width),
                value: row.estimate.mean,
                stderr: row.estimate.stderr,
                bound: -row.tolerance,
                pass: row.pass,
            });
        }
    }
    Ok(bundle)
}

/// Allowance `a` that makes the deterministic Godunov baseline of `cfg` pass:
/// the largest `−mean / (dx + Δt^{1/3})` over the residual catalog.
pub fn calibrate_entropy_allowance(cfg: &ExperimentConfig) -> Result<f64> {
    let mut base = cfg.clone();
    base.problem = "burgers-deterministic".into();
    base.cl_scheme = NumericalFlux::Godunov.name().into();
    base.paths = MIN_ENSEMBLE;
    base.entropy_allowance = 0.0;
    let problem = base.build_problem()?;
    let (cl, sde) = base.schemes()?;
    let k = base.diagnose_level;
    let u0 = problem.initial.project(base.grid(k)?);
    // σ ≡ 0: every path gives the same trajectory
    let path = sample_path(path_seed(base.seed, 0), base.horizon, base.dt(k))?.refine(base.entropy_nodes)?;
    let tr = run_splitting(&u0, &problem, &path, base.dt(k), base.horizon, cl, sde)?;
    let check = entropy_check(&base)?;
    let worst = crate::diagnostics::entropy_residual_path(&tr, &check)?.into_iter().fold(0.0f64, |m, r| m.max(-r));
    Ok(worst / (u0.grid().dx() + base.dt(k).cbrt()))
}

/// Writes `convergence.csv` and `summary.txt` under `cfg.out_dir`.
pub fn write_convergence_outputs(fit: &RateFit, cfg: &ExperimentConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out_dir)?;
    let csv_path = cfg.out_dir.join("convergence.csv");
    write_convergence_csv(fit, cfg, fs::File::create(&csv_path)?)?;
    fs::write(cfg.out_dir.join("summary.txt"), convergence_summary(fit, cfg))?;
    Ok(csv_path)
}

/// Writes `diagnostics.csv` and `summary.txt` under `cfg.out_dir`.
pub fn write_diagnose_outputs(bundle: &DiagnoseBundle, cfg: &ExperimentConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out_dir)?;
    let csv_path = cfg.out_dir.join("diagnostics.csv");
    bundle.write_csv(cfg, fs::File::create(&csv_path)?)?;
    fs::write(cfg.out_dir.join("summary.txt"), bundle.summary(cfg))?;
    Ok(csv_path)
}

/// A single trajectory at the finest ladder level driven by path 0.
pub fn run_single(cfg: &ExperimentConfig) -> Result<SplitTrajectory> {
    cfg.validate()?;
    let problem = cfg.build_problem()?;
    let (cl, sde) = cfg.schemes()?;
    let k = cfg.ladder_max;
    let u0 = problem.initial.project(cfg.grid(k)?);
    let path =
        sample_path(path_seed(cfg.seed, 0), cfg.horizon, cfg.dt(cfg.ladder_min))?.refine(1 << (k - cfg.ladder_min))?;
    run_splitting(&u0, &problem, &path, cfg.dt(k), cfg.horizon, cl, sde)
}
