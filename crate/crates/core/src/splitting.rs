//! The splitting recursion `uⁿ⁺¹ = S_SDE(t_{n+1}, t_n) S_CL(Δt) uⁿ` and its
//! time interpolants.
//!
//! On `(t_n, t_{n+1}]`, `u_Δt(t) = S_SDE(t, t_n) S_CL(Δt) uⁿ`; on
//! `[t_n, t_{n+1})`, `v_Δt(t) = S_CL(t − t_n) uⁿ`; and
//! `η_Δt = u_Δt − S_CL(Δt)uⁿ + v_Δt`, which is continuous in time.

use std::io::Write;

use crate::clstep::{cl_solve, NumericalFlux};
use crate::error::{invalid, Error, Result};
use crate::grid::GridFunction;
use crate::noise::WienerPath;
use crate::problem::{FluxSpec, NoiseSpec, Problem};
use crate::sdestep::{sde_step, SdeScheme};

/// Relative tolerance for recognising a checkpoint time.
const TIME_EPS: f64 = 1e-10;

fn step_count(dt: f64, horizon: f64) -> Result<usize> {
    if !(dt > 0.0 && horizon > 0.0) {
        return Err(invalid(format!("need dt > 0 and T > 0, got dt = {dt}, T = {horizon}")));
    }
    let n = (horizon / dt).round();
    if n < 1.0 || (n * dt - horizon).abs() > 1e-9 * horizon {
        return Err(invalid(format!("T = {horizon} is not an integer multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

fn check_path(path: &WienerPath, dt: f64, horizon: f64) -> Result<()> {
    if path.horizon() < horizon * (1.0 - 1e-12) {
        return Err(invalid(format!("Brownian path ends at {} before T = {horizon}", path.horizon())));
    }
    path.knot_index(dt).map(|_| ())
}

/// Checkpoints `u⁰ … u^N` plus what is needed to evaluate the interpolants.
#[derive(Debug, Clone)]
pub struct SplitTrajectory {
    dt: f64,
    checkpoints: Vec<GridFunction>,
    /// `S_CL(Δt) uⁿ` for `n < N`.
    transported: Vec<GridFunction>,
    path: WienerPath,
    flux: FluxSpec,
    noise: NoiseSpec,
    cl_scheme: NumericalFlux,
    sde_scheme: SdeScheme,
}

/// Run the splitting on `[0, T]` with step `dt`, storing every checkpoint.
pub fn run_splitting(
    u0: &GridFunction,
    problem: &Problem,
    path: &WienerPath,
    dt: f64,
    horizon: f64,
    cl_scheme: NumericalFlux,
    sde_scheme: SdeScheme,
) -> Result<SplitTrajectory> {
    let n_steps = step_count(dt, horizon)?;
    check_path(path, dt, horizon)?;
    let mut checkpoints = Vec::with_capacity(n_steps + 1);
    let mut transported = Vec::with_capacity(n_steps);
    checkpoints.push(u0.clone());
    for n in 0..n_steps {
        let mid = cl_solve(&checkpoints[n], &problem.flux, dt, cl_scheme)?;
        let next = sde_step(&mid, &problem.noise, path, n as f64 * dt, (n + 1) as f64 * dt, sde_scheme)?;
        transported.push(mid);
        checkpoints.push(next);
    }
    Ok(SplitTrajectory {
        dt,
        checkpoints,
        transported,
        path: path.clone(),
        flux: problem.flux.clone(),
        noise: problem.noise.clone(),
        cl_scheme,
        sde_scheme,
    })
}

/// `u^N` only, without storing the history.
pub fn splitting_terminal(
    u0: &GridFunction,
    problem: &Problem,
    path: &WienerPath,
    dt: f64,
    horizon: f64,
    cl_scheme: NumericalFlux,
    sde_scheme: SdeScheme,
) -> Result<GridFunction> {
    let n_steps = step_count(dt, horizon)?;
    check_path(path, dt, horizon)?;
    let mut u = u0.clone();
    for n in 0..n_steps {
        let mid = cl_solve(&u, &problem.flux, dt, cl_scheme)?;
        u = sde_step(&mid, &problem.noise, path, n as f64 * dt, (n + 1) as f64 * dt, sde_scheme)?;
    }
    Ok(u)
}

/// Interpolant values at one time node of an interval sweep.
#[derive(Debug, Clone)]
pub struct SweepNode {
    pub t: f64,
    pub u: GridFunction,
    pub v: GridFunction,
}

enum Locus {
    Checkpoint(usize),
    Inside(usize),
}

impl SplitTrajectory {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.transported.len()
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps() as f64 * self.dt
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn checkpoints(&self) -> &[GridFunction] {
        &self.checkpoints
    }

    pub fn checkpoint(&self, n: usize) -> &GridFunction {
        &self.checkpoints[n]
    }

    pub fn terminal(&self) -> &GridFunction {
        self.checkpoints.last().expect("at least u⁰")
    }

    /// `S_CL(Δt) uⁿ`.
    pub fn transported(&self, n: usize) -> &GridFunction {
        &self.transported[n]
    }

    pub fn path(&self) -> &WienerPath {
        &self.path
    }

    pub fn flux(&self) -> &FluxSpec {
        &self.flux
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn cl_scheme(&self) -> NumericalFlux {
        self.cl_scheme
    }

    pub fn sde_scheme(&self) -> SdeScheme {
        self.sde_scheme
    }

    fn locate(&self, t: f64) -> Result<Locus> {
        let horizon = self.horizon();
        if !(t >= -TIME_EPS * self.dt && t <= horizon + TIME_EPS * self.dt) {
            return Err(Error::TimeOutOfRange { t, lo: 0.0, hi: horizon });
        }
        let pos = t / self.dt;
        let k = pos.round();
        if (pos - k).abs() <= TIME_EPS {
            return Ok(Locus::Checkpoint(k as usize));
        }
        Ok(Locus::Inside(pos.floor() as usize))
    }

    /// `u_Δt(t)`; at a checkpoint time `t_n` this is `uⁿ`.
    pub fn eval_u_interp(&self, t: f64) -> Result<GridFunction> {
        match self.locate(t)? {
            Locus::Checkpoint(n) => Ok(self.checkpoints[n].clone()),
            Locus::Inside(n) => self.u_inside(n, t),
        }
    }

    /// `v_Δt(t)`; at a checkpoint time `t_n` this is `uⁿ`.
    pub fn eval_v_interp(&self, t: f64) -> Result<GridFunction> {
        match self.locate(t)? {
            Locus::Checkpoint(n) => Ok(self.checkpoints[n].clone()),
            Locus::Inside(n) => cl_solve(&self.checkpoints[n], &self.flux, t - self.time(n), self.cl_scheme),
        }
    }

    /// `η_Δt(t)`; continuous, equal to `uⁿ` at `t_n`.
    pub fn eval_eta_interp(&self, t: f64) -> Result<GridFunction> {
        match self.locate(t)? {
            Locus::Checkpoint(n) => Ok(self.checkpoints[n].clone()),
            Locus::Inside(n) => {
                let u = self.u_inside(n, t)?;
                let v = cl_solve(&self.checkpoints[n], &self.flux, t - self.time(n), self.cl_scheme)?;
                u.sub(&self.transported[n])?.add(&v)
            }
        }
    }

    /// `u_Δt(t_n+) = S_CL(Δt) uⁿ`.
    pub fn u_right_limit(&self, n: usize) -> Result<&GridFunction> {
        self.transported.get(n).ok_or_else(|| invalid(format!("no interval starts at checkpoint {n}")))
    }

    /// `v_Δt(t_n−) = S_CL(Δt) uⁿ⁻¹`.
    pub fn v_left_limit(&self, n: usize) -> Result<&GridFunction> {
        if n == 0 {
            return Err(invalid("v has no left limit at t = 0"));
        }
        self.transported.get(n - 1).ok_or_else(|| invalid(format!("no interval ends at checkpoint {n}")))
    }

    fn u_inside(&self, n: usize, t: f64) -> Result<GridFunction> {
        sde_step(&self.transported[n], &self.noise, &self.path, self.time(n), t, self.sde_scheme)
    }

    /// `u_Δt` and `v_Δt` at `t_n + kΔt/m`, `k = 0..m`, built incrementally.
    /// Node 0 carries the right limit `u(t_n+)` and `v(t_n) = uⁿ`; node `m`
    /// carries `u(t_{n+1}) = uⁿ⁺¹` and the left limit `v(t_{n+1}−)`.
    pub fn interval_sweep(&self, n: usize, m: usize) -> Result<Vec<SweepNode>> {
        if n >= self.n_steps() || m == 0 {
            return Err(invalid(format!("bad sweep: interval {n}, {m} nodes")));
        }
        let h = self.dt / m as f64;
        let t0 = self.time(n);
        let mut nodes = Vec::with_capacity(m + 1);
        let mut u = self.transported[n].clone();
        let mut v = self.checkpoints[n].clone();
        nodes.push(SweepNode { t: t0, u: u.clone(), v: v.clone() });
        for k in 1..=m {
            let (s, t) = (t0 + (k - 1) as f64 * h, t0 + k as f64 * h);
            u = sde_step(&u, &self.noise, &self.path, s, t, self.sde_scheme)?;
            v = cl_solve(&v, &self.flux, h, self.cl_scheme)?;
            nodes.push(SweepNode { t, u: u.clone(), v: v.clone() });
        }
        Ok(nodes)
    }

    /// One CSV row per checkpoint: `n, t, u_0, …, u_{M-1}`.
    pub fn write_checkpoints_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let ncells = self.checkpoints[0].len();
        let mut header = vec!["n".to_string(), "t".to_string()];
        header.extend((0..ncells).map(|i| format!("u{i}")));
        w.write_record(&header)?;
        for (n, u) in self.checkpoints.iter().enumerate() {
            let mut row = vec![n.to_string(), format!("{:e}", self.time(n))];
            row.extend(u.values().iter().map(|v| format!("{v:e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::noise::{path_seed, sample_path};
    use crate::problem::{InitialData, ProblemOverrides};

    fn problem(name: &str) -> Problem {
        Problem::by_name(name, &ProblemOverrides::default()).unwrap()
    }

    fn setup(name: &str) -> (GridFunction, Problem, WienerPath) {
        let g = Grid1D::symmetric(4.0, 64).unwrap();
        let p = problem(name);
        let u0 = p.initial.project(g);
        (u0, p, sample_path(path_seed(2, 0), 0.5, 0.125).unwrap().refine(16).unwrap())
    }

    fn run(name: &str) -> SplitTrajectory {
        let (u0, p, path) = setup(name);
        run_splitting(&u0, &p, &path, 0.0625, 0.5, NumericalFlux::Godunov, SdeScheme::Milstein).unwrap()
    }

    #[test]
    fn argument_errors() {
        let (u0, p, path) = setup("burgers-cos");
        let go =
            |dt, t, path: &WienerPath| run_splitting(&u0, &p, path, dt, t, NumericalFlux::Godunov, SdeScheme::Milstein);
        assert!(go(0.07, 0.5, &path).is_err());
        assert!(go(0.0625, 1.0, &path).is_err());
        let coarse = sample_path(1, 0.5, 0.125).unwrap();
        assert!(matches!(go(0.0625, 0.5, &coarse), Err(Error::NotOnPathGrid(_))));
        let tr = run("burgers-cos");
        assert!(matches!(tr.eval_u_interp(0.6), Err(Error::TimeOutOfRange { .. })));
        assert!(tr.eval_v_interp(-0.1).is_err());
    }

    #[test]
    fn deterministic_splitting_is_the_conservation_law() {
        let (u0, p, path) = setup("burgers-deterministic");
        let tr = run_splitting(&u0, &p, &path, 0.0625, 0.5, NumericalFlux::Godunov, SdeScheme::Milstein).unwrap();
        let mut u = u0.clone();
        for n in 1..=tr.n_steps() {
            u = cl_solve(&u, &p.flux, 0.0625, NumericalFlux::Godunov).unwrap();
            assert_eq!(tr.checkpoint(n), &u);
        }
        // u_Δt is frozen inside an interval while v and η evolve
        let a = tr.eval_u_interp(0.0625 + 0.0078125).unwrap();
        let b = tr.eval_u_interp(0.125 - 0.0078125).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a, tr.u_right_limit(1).unwrap());
        let v = tr.eval_v_interp(0.09375).unwrap();
        assert_eq!(tr.eval_eta_interp(0.09375).unwrap(), v);
    }

    #[test]
    fn zero_flux_is_the_sde() {
        let (u0, mut p, path) = setup("burgers-cos");
        p.flux = FluxSpec::zero();
        let tr = run_splitting(&u0, &p, &path, 0.0625, 0.5, NumericalFlux::Godunov, SdeScheme::Milstein).unwrap();
        let direct = sde_step(&u0, &p.noise, &path, 0.0, 0.5, SdeScheme::Milstein).unwrap();
        assert_eq!(tr.terminal(), &direct);
    }

    #[test]
    fn interpolants_at_checkpoints_and_decomposition() {
        let tr = run("burgers-cos");
        for n in 0..=tr.n_steps() {
            let t = tr.time(n);
            let un = tr.checkpoint(n);
            assert_eq!(&tr.eval_u_interp(t).unwrap(), un);
            assert_eq!(&tr.eval_v_interp(t).unwrap(), un);
            assert_eq!(&tr.eval_eta_interp(t).unwrap(), un);
        }
        for &t in &[0.0078125, 0.2109375, 0.4921875] {
            let n = (t / tr.dt()).floor() as usize;
            let lhs = tr.eval_eta_interp(t).unwrap().sub(&tr.eval_v_interp(t).unwrap()).unwrap();
            let rhs = tr.eval_u_interp(t).unwrap().sub(tr.transported(n)).unwrap();
            for (a, b) in lhs.values().iter().zip(rhs.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!(tr.v_left_limit(0).is_err());
        assert_eq!(tr.v_left_limit(3).unwrap(), tr.u_right_limit(2).unwrap());
    }

    #[test]
    fn eta_is_continuous_at_checkpoints() {
        // σ ≡ 0 isolates the jump of u_Δt from Brownian motion
        let (u0, p, path) = setup("burgers-deterministic");
        let path = path.refine(8).unwrap();
        let tr = run_splitting(&u0, &p, &path, 0.0625, 0.5, NumericalFlux::Godunov, SdeScheme::Milstein).unwrap();
        let h = tr.path().step();
        let t = tr.time(4);
        let left = tr.eval_eta_interp(t - h).unwrap();
        let right = tr.eval_eta_interp(t + h).unwrap();
        let jump_u = tr.eval_u_interp(t + h).unwrap().l1_distance(&tr.eval_u_interp(t - h).unwrap()).unwrap();
        let jump_eta = right.l1_distance(&left).unwrap();
        assert!(jump_eta < 0.25 * jump_u, "{jump_eta} vs {jump_u}");
    }

    #[test]
    fn sweep_endpoints() {
        let tr = run("burgers-cos");
        let nodes = tr.interval_sweep(2, 4).unwrap();
        assert_eq!(nodes.len(), 5);
        assert_eq!(&nodes[0].u, tr.u_right_limit(2).unwrap());
        assert_eq!(&nodes[0].v, tr.checkpoint(2));
        assert_eq!(&nodes[4].u, tr.checkpoint(3));
        assert!(nodes[4].v.l1_distance(tr.v_left_limit(3).unwrap()).unwrap() < 1e-2);
        assert!(tr.interval_sweep(8, 4).is_err());
    }

    #[test]
    fn terminal_only_matches_full_run() {
        let (u0, p, path) = setup("burgers-cos");
        let tr = run("burgers-cos");
        let end = splitting_terminal(&u0, &p, &path, 0.0625, 0.5, NumericalFlux::Godunov, SdeScheme::Milstein).unwrap();
        assert_eq!(&end, tr.terminal());
    }

    /// Additive noise: `z = u − cB(t)` solves `z_t + ((z + cB)²/2)_x = 0`.
    /// Direct Godunov simulation of that equation with `B` frozen per fine step.
    fn additive_oracle(u0: &GridFunction, c: f64, path: &WienerPath, horizon: f64) -> GridFunction {
        let steps = (horizon / path.step()).round() as usize;
        let mut z = u0.clone();
        for k in 0..steps {
            let shift = c * path.values()[k];
            let shifted = z.map(|v| v + shift);
            let evolved = cl_solve(&shifted, &FluxSpec::burgers(8.0), path.step(), NumericalFlux::Godunov).unwrap();
            z = evolved.map(|v| v - shift);
        }
        z.map(|v| v + c * path.values()[steps])
    }

    #[test]
    fn additive_noise_matches_shifted_conservation_law() {
        // both runs on a fine grid, compared on 64 cells; the oracle's fine
        // steps then sit near the CFL limit, so it carries little extra diffusion
        let coarse = Grid1D::symmetric(4.0, 64).unwrap();
        let g = coarse.refined(64).unwrap();
        let p = problem("burgers-additive");
        let u0 = InitialData::RiemannBump.project(g);
        let mut errs = [0.0; 3];
        for i in 0..8 {
            let path = sample_path(path_seed(6, i), 0.5, 0.0625).unwrap().refine(64).unwrap();
            let oracle = additive_oracle(&u0, 0.5, &path, 0.5).restrict_to(&coarse).unwrap();
            for (e, dt) in errs.iter_mut().zip([0.0625, 0.03125, 0.015625]) {
                let end =
                    splitting_terminal(&u0, &p, &path, dt, 0.5, NumericalFlux::Godunov, SdeScheme::Milstein).unwrap();
                *e += end.restrict_to(&coarse).unwrap().l1_distance(&oracle).unwrap() / 8.0;
            }
        }
        assert!(errs[2] < errs[1] && errs[1] < errs[0], "{errs:?}");
        assert!(errs[2] < 0.05, "{errs:?}");
    }

    #[test]
    fn checkpoint_csv_layout() {
        let tr = run("burgers-cos");
        let mut buf = Vec::new();
        tr.write_checkpoints_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), tr.n_steps() + 2);
        assert!(lines[0].starts_with("n,t,u0,u1"));
        assert_eq!(lines[1].split(',').count(), 66);
    }
}
