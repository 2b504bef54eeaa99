//! Estimators for the a priori bounds of the splitting scheme: fractional BV,
//! L¹ time continuity, local Lᵖ cone bounds, the entropy residual, plus the
//! quadrature identities and mollifier inequalities behind them.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::GridFunction;
use crate::problem::{EntropyPair, FluxSpec, NoiseSpec};
use crate::splitting::SplitTrajectory;
use crate::weights::{
    ball_integral, gauss_legendre, weighted_lp_norm, weighted_lp_norm_with, BumpKernel, MollifierSpec, UvPair,
    WeightSpec,
};

/// Sum with pairwise splitting; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EnsembleTooSmall { got: 0, need: 1 });
        }
        let n = xs.len() as f64;
        let mean = pairwise_sum(xs) / n;
        if xs.len() == 1 {
            return Ok(Self { mean, stderr: 0.0 });
        }
        let sq: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
        Ok(Self { mean, stderr: (pairwise_sum(&sq) / (n - 1.0) / n).sqrt() })
    }
}

#[inline]
fn clamped(values: &[f64], i: isize) -> f64 {
    values[i.clamp(0, values.len() as isize - 1) as usize]
}

/// `Σ_i ψ_i Σ_k w_k g(a_{i+k}, b_{i−k}) dx`, data extended by constants.
fn translate_sum(
    a: &[f64],
    b: &[f64],
    taps: &[(isize, f64)],
    psi: &[f64],
    dx: f64,
    g: impl Fn(f64, f64) -> f64,
) -> f64 {
    let rows: Vec<f64> = (0..a.len())
        .map(|i| {
            if psi[i] == 0.0 {
                return 0.0;
            }
            let i = i as isize;
            psi[i as usize] * taps.iter().map(|&(k, w)| w * g(clamped(a, i + k), clamped(b, i - k))).sum::<f64>()
        })
        .collect();
    pairwise_sum(&rows) * dx
}

fn resolvable(u: &GridFunction, m: &MollifierSpec) -> Result<()> {
    let dx = u.grid().dx();
    if m.width() < 2.0 * dx * (1.0 - 1e-12) {
        return Err(invalid(format!("radius {} below two cells ({})", m.width(), 2.0 * dx)));
    }
    Ok(())
}

/// `∬|u(x+z) − u(x−z)| J_r(z) φ(x) dx dz` with `r = m.width()`; with
/// `regularization = Some(δ)` the modulus is replaced by `S_δ`.
pub fn fractional_bv_value(
    u: &GridFunction,
    m: &MollifierSpec,
    spec: &WeightSpec,
    regularization: Option<f64>,
) -> Result<f64> {
    resolvable(u, m)?;
    let dx = u.grid().dx();
    let taps = m.lattice_weights(dx);
    let phi = spec.values_on(u);
    let v = u.values();
    Ok(match regularization {
        None => translate_sum(v, v, &taps, &phi, dx, |a, b| (a - b).abs()),
        Some(delta) => {
            let pair = EntropyPair::new(delta)?;
            translate_sum(v, v, &taps, &phi, dx, |a, b| pair.s(a - b))
        }
    })
}

/// Right side of the fractional BV propagation bound:
/// `e^{growth} 𝒟_r(u⁰) + c_t r^{κ_σ}` with `growth = C_φ‖f‖_Lip t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracBvBound {
    pub growth: f64,
    pub c_t: f64,
    pub kappa_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracBvReport {
    pub r: f64,
    pub value: f64,
    pub stderr: f64,
    pub bound: f64,
}

impl FracBvReport {
    /// `value ≤ bound·(1 + slack) + 3·stderr`.
    pub fn passes(&self, slack: f64) -> bool {
        self.value <= self.bound * (1.0 + slack) + 3.0 * self.stderr
    }
}

pub fn fractional_bv(
    ensemble: &[GridFunction],
    initial: &GridFunction,
    m: &MollifierSpec,
    spec: &WeightSpec,
    bound: FracBvBound,
) -> Result<FracBvReport> {
    let samples: Vec<f64> =
        ensemble.par_iter().map(|u| fractional_bv_value(u, m, spec, None)).collect::<Result<_>>()?;
    let est = Estimate::from_samples(&samples)?;
    let d0 = fractional_bv_value(initial, m, spec, None)?;
    let r = m.width();
    Ok(FracBvReport {
        r,
        value: est.mean,
        stderr: est.stderr,
        bound: bound.growth.exp() * d0 + bound.c_t * r.powf(bound.kappa_sigma),
    })
}

/// `E‖u_Δt(τ₂) − u_Δt(τ₁)‖_{1,φ}` over an ensemble of trajectories.
pub fn time_modulus(trajs: &[SplitTrajectory], tau1: f64, tau2: f64, spec: &WeightSpec) -> Result<Estimate> {
    if !(tau1 > 0.0 && tau1 <= tau2) {
        return Err(invalid(format!("need 0 < τ₁ ≤ τ₂, got τ₁ = {tau1}, τ₂ = {tau2}")));
    }
    let samples: Vec<f64> = trajs
        .par_iter()
        .map(|tr| {
            if tau1 == tau2 {
                return Ok(0.0);
            }
            let a = tr.eval_u_interp(tau1)?;
            let b = tr.eval_u_interp(tau2)?;
            weighted_lp_norm(&b.sub(&a)?, spec, 1.0)
        })
        .collect::<Result<_>>()?;
    Estimate::from_samples(&samples)
}

/// Constants of the local Lᵖ estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

/// `C₃ = (p−1)((p−2)‖σ(·,0)‖_∞ + p‖σ‖²_Lip)`, `C₂ = 2(p−1)‖σ(·,0)‖²_∞`,
/// `C₁ = ‖f‖_Lip C_φ + C₃`.
pub fn lp_constants(p: f64, flux_lip: f64, cphi: f64, noise: &NoiseSpec) -> Result<LpConstants> {
    if !(p >= 2.0) {
        return Err(invalid(format!("local Lᵖ bound needs p ≥ 2, got {p}")));
    }
    let s0 = noise.sup0();
    let c3 = (p - 1.0) * ((p - 2.0) * s0 + p * noise.lip().powi(2));
    let c2 = 2.0 * (p - 1.0) * s0 * s0;
    Ok(LpConstants { c1: flux_lip * cphi + c3, c2, c3 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpLocalReport {
    pub p: f64,
    pub radius: f64,
    /// `Γ(t) = max(0, R − Mt)`.
    pub gamma: f64,
    pub lhs: Estimate,
    pub rhs: f64,
    pub constants: LpConstants,
    pub violated: bool,
}

/// Both sides of
/// `E∫_{B(0,Γ(t))}|u|ᵖφ ≤ e^{C₁t} E∫_{B(0,R)}|u⁰|ᵖφ + C₂ t e^{C₁t} ∫_{B(0,R)}φ`.
#[allow(clippy::too_many_arguments)]
pub fn lp_local(
    finals: &[GridFunction],
    initial: &GridFunction,
    p: f64,
    radius: f64,
    cone_speed: f64,
    t: f64,
    spec: &WeightSpec,
    flux: &FluxSpec,
    noise: &NoiseSpec,
) -> Result<LpLocalReport> {
    if cone_speed < flux.lip() {
        return Err(invalid(format!("cone speed {cone_speed} below ‖f‖_Lip = {}", flux.lip())));
    }
    if !(radius > 0.0 && t >= 0.0) {
        return Err(invalid(format!("need R > 0 and t ≥ 0, got R = {radius}, t = {t}")));
    }
    let constants = lp_constants(p, flux.lip(), spec.cphi(), noise)?;
    let gamma = (radius - cone_speed * t).max(0.0);
    let samples: Vec<f64> = finals.iter().map(|u| ball_integral(u, spec, p, gamma)).collect();
    let lhs = Estimate::from_samples(&samples)?;
    let growth = (constants.c1 * t).exp();
    let rhs = growth * ball_integral(initial, spec, p, radius) + constants.c2 * t * growth * spec.mass_on_ball(radius);
    let violated = lhs.mean - 3.0 * lhs.stderr > rhs;
    Ok(LpLocalReport { p, radius, gamma, lhs, rhs, constants, violated })
}

/// `‖a − b‖_{1,φ}`; a finer argument is first restricted conservatively onto
/// the coarser grid.
pub fn weighted_l1_error(a: &GridFunction, b: &GridFunction, spec: &WeightSpec) -> Result<f64> {
    let (a, b) = match a.len().cmp(&b.len()) {
        std::cmp::Ordering::Equal => (a.clone(), b.clone()),
        std::cmp::Ordering::Greater => (a.restrict_to(b.grid())?, b.clone()),
        std::cmp::Ordering::Less => (a.clone(), b.restrict_to(a.grid())?),
    };
    weighted_lp_norm(&a.sub(&b)?, spec, 1.0)
}

fn smooth_step(s: f64) -> (f64, f64) {
    // 0 for s ≤ 0, 1 for s ≥ 1, C^∞ in between; returns value and derivative
    let e = |x: f64| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() };
    let de = |x: f64| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() / (x * x) };
    let (a, b) = (e(s), e(1.0 - s));
    if a + b == 0.0 {
        return (if s >= 1.0 { 1.0 } else { 0.0 }, 0.0);
    }
    let (da, db) = (de(s), -de(1.0 - s));
    let sum = a + b;
    (a / sum, (da * sum - a * (da + db)) / (sum * sum))
}

/// `ϕ(t, x) = χ(t) ψ(x)`: `χ = 1` on `[0, t_flat]`, smoothly `0` from
/// `t_end` on; `ψ` a bump of unit height on `(center − width, center + width)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    pub center: f64,
    pub width: f64,
    pub t_flat: f64,
    pub t_end: f64,
}

impl TestFunction {
    /// Widths `{1/4, 1/2, 1}` × centres `{−1, −1/2, 0, 1/2, 1}`; the cutoff
    /// falls from `0.3T` to `0.8T`.
    pub fn standard_family(horizon: f64) -> Vec<TestFunction> {
        let mut out = Vec::with_capacity(15);
        for width in [0.25, 0.5, 1.0] {
            for center in [-1.0, -0.5, 0.0, 0.5, 1.0] {
                out.push(TestFunction { center, width, t_flat: 0.3 * horizon, t_end: 0.8 * horizon });
            }
        }
        out
    }

    /// `(χ(t), χ'(t))`.
    pub fn time_part(&self, t: f64) -> (f64, f64) {
        let len = self.t_end - self.t_flat;
        let (v, d) = smooth_step((self.t_end - t) / len);
        (v, -d / len)
    }

    /// `(ψ(x), ψ'(x))`.
    pub fn space_part(&self, x: f64) -> (f64, f64) {
        let k = BumpKernel::get();
        let y = (x - self.center) / self.width;
        if y.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        let v = k.eval(y) / k.sup();
        (v, v * (-2.0 * y / (1.0 - y * y).powi(2)) / self.width)
    }
}

/// Configuration of the entropy residual: entropy pair, Kružkov constants,
/// test functions, time nodes per splitting interval and the discretization
/// allowance `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyCheck {
    pub pair: EntropyPair,
    pub constants: Vec<f64>,
    pub family: Vec<TestFunction>,
    pub nodes: usize,
    pub allowance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyResidualRow {
    pub c: f64,
    pub test: usize,
    pub estimate: Estimate,
    pub tolerance: f64,
    pub pass: bool,
}

fn check_supports(tr: &SplitTrajectory, check: &EntropyCheck) -> Result<()> {
    let g = tr.checkpoint(0).grid();
    let (lo, hi) = (g.left() + g.dx(), g.right() - g.dx());
    for f in &check.family {
        if f.center - f.width <= lo || f.center + f.width >= hi {
            return Err(invalid(format!("test function at {} ± {} touches the boundary", f.center, f.width)));
        }
        if !(f.t_flat >= 0.0 && f.t_flat < f.t_end && f.t_end < tr.horizon()) {
            return Err(invalid(format!("test function time support [0, {}) not inside [0, T)", f.t_end)));
        }
    }
    if check.nodes == 0 {
        return Err(invalid("entropy residual needs at least one node per interval"));
    }
    Ok(())
}

/// One residual per `(c, test function)`, `c`-major, for a single path:
///
/// `∫S(u⁰−c)ϕ(0) + ∬[S(u_Δt−c)ϕ_t + Q(v_Δt,c)ϕ_x] + ½∬S''(u_Δt−c)σ²ϕ
///  + Σ_n ∫_{t_n}^{t_{n+1}}∫(S(v_Δt(t)−c) − S(v_Δt(t_{n+1}−)−c))ϕ_t`.
pub fn entropy_residual_path(tr: &SplitTrajectory, check: &EntropyCheck) -> Result<Vec<f64>> {
    check_supports(tr, check)?;
    let grid = *tr.checkpoint(0).grid();
    let dx = grid.dx();
    let xs = grid.centers();
    let pair = &check.pair;
    let flux = tr.flux();
    let noise = tr.noise();
    let nf = check.family.len();

    // cells where some ψ is nonzero
    let space: Vec<(Vec<f64>, Vec<f64>)> =
        check.family.iter().map(|f| xs.iter().map(|&x| f.space_part(x)).unzip()).collect();
    let active: Vec<usize> = (0..xs.len()).filter(|&i| space.iter().any(|(psi, _)| psi[i] != 0.0)).collect();
    let t_stop = check.family.iter().map(|f| f.t_end).fold(0.0, f64::max);

    let mut out = vec![0.0; check.constants.len() * nf];
    let u0 = tr.checkpoint(0).values();
    for (ci, &c) in check.constants.iter().enumerate() {
        for (fi, f) in check.family.iter().enumerate() {
            let chi0 = f.time_part(0.0).0;
            let psi = &space[fi].0;
            out[ci * nf + fi] = active.iter().map(|&i| pair.s(u0[i] - c) * psi[i]).sum::<f64>() * chi0 * dx;
        }
    }

    let h = tr.dt() / check.nodes as f64;
    for n in 0..tr.n_steps() {
        if tr.time(n) >= t_stop {
            break;
        }
        let sweep = tr.interval_sweep(n, check.nodes)?;
        let last_v = &sweep[check.nodes].v;
        for (k, node) in sweep.iter().enumerate() {
            let wt = if k == 0 || k == check.nodes { 0.5 * h } else { h };
            let (u, v) = (node.u.values(), node.v.values());
            for (ci, &c) in check.constants.iter().enumerate() {
                // per-cell integrands, shared by all test functions
                let mut su = Vec::with_capacity(active.len());
                let mut q = Vec::with_capacity(active.len());
                let mut ito = Vec::with_capacity(active.len());
                let mut dv = Vec::with_capacity(active.len());
                for &i in &active {
                    su.push(pair.s(u[i] - c));
                    q.push(pair.q(flux, v[i], c));
                    let sig = noise.sigma(xs[i], u[i]);
                    ito.push(0.5 * pair.d2s(u[i] - c) * sig * sig);
                    dv.push(pair.s(v[i] - c) - pair.s(last_v.values()[i] - c));
                }
                for (fi, f) in check.family.iter().enumerate() {
                    let (chi, dchi) = f.time_part(node.t);
                    if chi == 0.0 && dchi == 0.0 {
                        continue;
                    }
                    let (psi, dpsi) = &space[fi];
                    let mut acc = 0.0;
                    for (j, &i) in active.iter().enumerate() {
                        acc += (su[j] + dv[j]) * dchi * psi[i] + q[j] * chi * dpsi[i] + ito[j] * chi * psi[i];
                    }
                    out[ci * nf + fi] += wt * acc * dx;
                }
            }
        }
    }
    Ok(out)
}

/// Ensemble entropy residuals; a row passes when
/// `mean ≥ −(3·stderr + a·(dx + Δt^{1/3}))`.
pub fn entropy_residual(trajs: &[SplitTrajectory], check: &EntropyCheck) -> Result<Vec<EntropyResidualRow>> {
    let first = trajs.first().ok_or(Error::EnsembleTooSmall { got: 0, need: 1 })?;
    let per_path: Vec<Vec<f64>> = trajs.par_iter().map(|tr| entropy_residual_path(tr, check)).collect::<Result<_>>()?;
    let scale = first.checkpoint(0).grid().dx() + first.dt().cbrt();
    let nf = check.family.len();
    let mut rows = Vec::with_capacity(per_path[0].len());
    for (ci, &c) in check.constants.iter().enumerate() {
        for fi in 0..nf {
            let samples: Vec<f64> = per_path.iter().map(|r| r[ci * nf + fi]).collect();
            let estimate = Estimate::from_samples(&samples)?;
            let tolerance = 3.0 * estimate.stderr + check.allowance * scale;
            rows.push(EntropyResidualRow { c, test: fi, estimate, tolerance, pass: estimate.mean >= -tolerance });
        }
    }
    Ok(rows)
}

/// Both sides of
/// `|∫u ∂ₓ(U_δ⋆β)φ| ≤ (M₀/(2M₁))(𝒱_δ(u)/δ + 2‖u‖_{1,φ}w_{1,φ}(δ)/δ)‖β‖_∞`.
pub fn uv_chain_sides(
    u: &GridFunction,
    beta: &[f64],
    uv: &UvPair,
    delta: f64,
    spec: &WeightSpec,
) -> Result<(f64, f64)> {
    let grid = u.grid();
    let dx = grid.dx();
    if beta.len() != u.len() {
        return Err(Error::GridMismatch(format!("β has {} samples for {} cells", beta.len(), u.len())));
    }
    if delta < 4.0 * dx {
        return Err(invalid(format!("δ = {delta} below four cells")));
    }
    let reach = (delta / dx).ceil() as isize;
    let dkernel: Vec<f64> = (-reach..=reach).map(|k| uv.u_scaled_derivative(k as f64 * dx, delta) * dx).collect();
    let n = u.len() as isize;
    let phi = spec.values_on(u);
    let conv = |i: isize| -> f64 {
        (-reach..=reach)
            .filter(|k| (0..n).contains(&(i - k)))
            .map(|k| dkernel[(k + reach) as usize] * beta[(i - k) as usize])
            .sum()
    };
    let terms: Vec<f64> = (0..n).map(|i| u.values()[i as usize] * conv(i) * phi[i as usize]).collect();
    let lhs = (pairwise_sum(&terms) * dx).abs();

    let vtaps: Vec<(isize, f64)> = {
        let raw: Vec<(isize, f64)> =
            (-reach..=reach).map(|k| (k, uv.v_scaled(k as f64 * dx, delta))).filter(|t| t.1 > 0.0).collect();
        let total: f64 = raw.iter().map(|t| t.1).sum();
        raw.into_iter().map(|(k, w)| (k, w / total)).collect()
    };
    let vv = translate_sum(u.values(), u.values(), &vtaps, &phi, dx, |a, b| (a - b).abs());
    let norm1 = weighted_lp_norm_with(u, &phi, 1.0)?;
    let sup_beta = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    let rhs = uv.m0() / (2.0 * uv.m1()) * (vv / delta + 2.0 * norm1 * spec.modulus(1.0, delta)? / delta) * sup_beta;
    Ok((lhs, rhs))
}

/// `𝒯_r = ∬F(u(x), v(y)) ½ψ((x+y)/2) J_r((x−y)/2) dy dx − ∫F(u, v)ψ dx`,
/// evaluated in translate form on the grid.
pub fn doubling_gap(
    u: &GridFunction,
    v: &GridFunction,
    m: &MollifierSpec,
    psi: impl Fn(f64) -> f64,
    big_f: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    u.grid().ensure_same(v.grid())?;
    resolvable(u, m)?;
    let dx = u.grid().dx();
    let weights: Vec<f64> = u.grid().centers().into_iter().map(&psi).collect();
    let doubled = translate_sum(u.values(), v.values(), &m.lattice_weights(dx), &weights, dx, &big_f);
    let diag: Vec<f64> = (0..u.len()).map(|i| big_f(u.values()[i], v.values()[i]) * weights[i]).collect();
    Ok(doubled - pairwise_sum(&diag) * dx)
}

/// Both sides of the change of variables
/// `½∬h(x,y)φ((x+y)/2)J_r((x−y)/2) dx dy = ∬h(x̃+z, x̃−z)φ(x̃)J_r(z) dx̃ dz`
/// by Gauss–Legendre quadrature over `|x| ≤ half_width`.
pub fn change_of_variables_sides(
    h: impl Fn(f64, f64) -> f64 + Sync,
    spec: &WeightSpec,
    r: f64,
    half_width: f64,
) -> (f64, f64) {
    let m = MollifierSpec::new(r).expect("positive radius");
    let outer = (2.0 * half_width / 0.05).ceil() as usize;
    let inner = 64;
    let lhs = gauss_legendre(-half_width, half_width, outer, |x| {
        0.5 * gauss_legendre(x - 2.0 * r, x + 2.0 * r, inner, |y| {
            h(x, y) * spec.eval(0.5 * (x + y)) * m.eval(0.5 * (x - y))
        })
    });
    let rhs = gauss_legendre(-half_width, half_width, outer, |x| {
        spec.eval(x) * gauss_legendre(-r, r, inner, |z| h(x + z, x - z) * m.eval(z))
    });
    (lhs, rhs)
}

/// Both sides of `½∫φ((x+y)/2)J_r((x−y)/2) dy = (φ⋆J_r)(x)`.
pub fn symmetric_mollification_sides(spec: &WeightSpec, r: f64, x: f64) -> (f64, f64) {
    let m = MollifierSpec::new(r).expect("positive radius");
    let lhs = 0.5 * gauss_legendre(x - 2.0 * r, x + 2.0 * r, 128, |y| spec.eval(0.5 * (x + y)) * m.eval(0.5 * (x - y)));
    let rhs = gauss_legendre(-r, r, 128, |z| spec.eval(x - z) * m.eval(z));
    (lhs, rhs)
}
