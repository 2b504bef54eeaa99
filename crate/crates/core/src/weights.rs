//! Exponential weights `φ_ρ(x) = exp(-ρ√(1+x²))`, weighted Lᵖ norms, the
//! standard bump mollifier and the `U`/`V` mollifier pair used to turn
//! averaged translates into bounds on mollified derivatives.
//!
//! Everything here is one-dimensional and pure.

use std::sync::{Arc, OnceLock};

use crate::error::{invalid, Result};
use crate::grid::GridFunction;

const GL5_NODES: [f64; 5] =
    [-0.906_179_845_938_664, -0.538_469_310_105_683_1, 0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Composite 5-point Gauss–Legendre rule on `[a, b]` with `panels` panels.
pub fn gauss_legendre(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        let mut s = 0.0;
        for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS) {
            s += w * f(mid + 0.5 * h * x);
        }
        total += 0.5 * h * s;
    }
    total
}

fn hermite(t: f64, h: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * h * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * d1
}

/// Cumulative integral of a smooth density on `[0, 1]`, tabulated once and
/// evaluated by cubic Hermite interpolation (the density is the derivative).
struct CumulativeTable {
    nodes: usize,
    cum: Vec<f64>,
    dens: Vec<f64>,
}

impl CumulativeTable {
    fn build(n: usize, density: impl Fn(f64) -> f64) -> Self {
        let h = 1.0 / n as f64;
        let mut cum = Vec::with_capacity(n + 1);
        let mut dens = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        dens.push(density(0.0));
        for i in 0..n {
            let a = i as f64 * h;
            acc += gauss_legendre(a, a + h, 1, &density);
            cum.push(acc);
            dens.push(density(a + h));
        }
        Self { nodes: n, cum, dens }
    }

    /// `∫_0^s density` for `s ∈ [0, 1]`, clamped outside.
    fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s >= 1.0 {
            return self.cum[self.nodes];
        }
        let h = 1.0 / self.nodes as f64;
        let pos = s * self.nodes as f64;
        let i = (pos.floor() as usize).min(self.nodes - 1);
        let t = pos - i as f64;
        hermite(t, h, self.cum[i], self.cum[i + 1], self.dens[i], self.dens[i + 1])
    }

    fn total(&self) -> f64 {
        self.cum[self.nodes]
    }
}

fn raw_bump(x: f64) -> f64 {
    let q = 1.0 - x * x;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

/// The normalized bump `J(x) = exp(-1/(1-x²)) / Z` on `(-1, 1)` with cached
/// antiderivatives.
pub struct BumpKernel {
    norm: f64,
    peak: f64,
    /// `G(s) = ∫_0^s J`.
    first: CumulativeTable,
    /// `K(s) = ∫_0^s t J(t) dt`.
    moment: CumulativeTable,
}

const TABLE_NODES: usize = 4096;

impl BumpKernel {
    pub fn get() -> &'static BumpKernel {
        static KERNEL: OnceLock<BumpKernel> = OnceLock::new();
        KERNEL.get_or_init(|| {
            let norm = 2.0 * gauss_legendre(0.0, 1.0, 2048, raw_bump);
            let mut first = CumulativeTable::build(TABLE_NODES, |t| raw_bump(t) / norm);
            // pin G(1) = 1/2 exactly so S_δ' saturates at ±1 without round-off
            let fix = 0.5 / first.total();
            first.cum.iter_mut().chain(first.dens.iter_mut()).for_each(|v| *v *= fix);
            let moment = CumulativeTable::build(TABLE_NODES, |t| t * raw_bump(t) / norm);
            BumpKernel { norm, peak: raw_bump(0.0) / norm, first, moment }
        })
    }

    /// `∫ exp(-1/(1-x²)) dx` over `(-1, 1)`.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    /// `‖J‖_∞ = J(0)`.
    pub fn sup(&self) -> f64 {
        self.peak
    }

    pub fn eval(&self, x: f64) -> f64 {
        raw_bump(x) / self.norm
    }

    /// `∫_0^s J`, odd in `s`, equal to `±1/2` for `|s| ≥ 1`.
    pub fn half_cdf(&self, s: f64) -> f64 {
        let v = self.first.eval(s.abs());
        if s < 0.0 {
            -v
        } else {
            v
        }
    }

    /// `∫_0^{|s|} t J(t) dt`.
    pub fn half_first_moment(&self, s: f64) -> f64 {
        self.moment.eval(s.abs())
    }

    /// `∫ |t| J(t) dt`.
    pub fn abs_first_moment(&self) -> f64 {
        2.0 * self.moment.total()
    }
}

/// A member of the exponential weight family `φ_ρ(x) = exp(-ρ√(1+x²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    rate: f64,
}

impl WeightSpec {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(invalid(format!("weight rate must be positive, got {rate}")));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// `C_φ`; for this family `|φ'| ≤ ρ φ` is sharp.
    pub fn cphi(&self) -> f64 {
        self.rate
    }

    pub fn eval(&self, x: f64) -> f64 {
        (-self.rate * (1.0 + x * x).sqrt()).exp()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        -self.rate * x / (1.0 + x * x).sqrt() * self.eval(x)
    }

    pub fn values_on(&self, u: &GridFunction) -> Vec<f64> {
        u.grid().centers().into_iter().map(|x| self.eval(x)).collect()
    }

    /// `w_{p,φ}(r) = (C_φ/p) r (1 + (C_φ/p) r e^{C_φ r/p})`.
    pub fn modulus(&self, p: f64, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(invalid(format!("modulus radius must be nonnegative, got {r}")));
        }
        if !(p > 0.0) {
            return Err(invalid(format!("modulus exponent must be positive, got {p}")));
        }
        let a = self.cphi() / p * r;
        Ok(a * (1.0 + a * a.exp()))
    }

    /// `∫_{-R}^{R} φ`.
    pub fn mass_on_ball(&self, radius: f64) -> f64 {
        if radius <= 0.0 {
            return 0.0;
        }
        gauss_legendre(-radius, radius, 256, |x| self.eval(x))
    }
}

/// Scaled bump `J_δ(x) = J(x/δ)/δ`, or its shifted variant `J⁺_δ(x) = J(x/δ - 1)/δ`
/// supported in `(0, 2δ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierSpec {
    width: f64,
    shifted: bool,
}

impl MollifierSpec {
    pub fn new(width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(invalid(format!("mollifier width must be positive, got {width}")));
        }
        Ok(Self { width, shifted: false })
    }

    pub fn shifted(width: f64) -> Result<Self> {
        Ok(Self { shifted: true, ..Self::new(width)? })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn is_shifted(&self) -> bool {
        self.shifted
    }

    /// Open support interval.
    pub fn support(&self) -> (f64, f64) {
        if self.shifted {
            (0.0, 2.0 * self.width)
        } else {
            (-self.width, self.width)
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let s = x / self.width - if self.shifted { 1.0 } else { 0.0 };
        BumpKernel::get().eval(s) / self.width
    }

    /// `∫_{-∞}^{x} J_δ`.
    pub fn cdf(&self, x: f64) -> f64 {
        let s = x / self.width - if self.shifted { 1.0 } else { 0.0 };
        0.5 + BumpKernel::get().half_cdf(s.clamp(-1.0, 1.0))
    }

    /// Discrete kernel on a lattice of spacing `dx`: `(offset, weight)` pairs
    /// with `weight ∝ J_δ(offset·dx)`, normalized to sum to one.
    pub fn lattice_weights(&self, dx: f64) -> Vec<(isize, f64)> {
        let (lo, hi) = self.support();
        let kmin = (lo / dx).floor() as isize;
        let kmax = (hi / dx).ceil() as isize;
        let mut taps: Vec<(isize, f64)> =
            (kmin..=kmax).map(|k| (k, self.eval(k as f64 * dx))).filter(|&(_, w)| w > 0.0).collect();
        let total: f64 = taps.iter().map(|t| t.1).sum();
        if total <= 0.0 {
            return vec![(0, 1.0)];
        }
        for t in &mut taps {
            t.1 /= total;
        }
        taps
    }
}

/// `(∫|u|ᵖφ dx)^{1/p}` by the midpoint rule on the grid of `u`.
///
/// The integral is truncated to the grid; callers pick the interval so that
/// the neglected tail of `|u|ᵖφ` is negligible.
pub fn weighted_lp_norm(u: &GridFunction, spec: &WeightSpec, p: f64) -> Result<f64> {
    if u.is_empty() {
        return Err(invalid("empty grid"));
    }
    let weights = spec.values_on(u);
    weighted_lp_norm_with(u, &weights, p)
}

/// Same as [`weighted_lp_norm`] with explicit weight samples at cell centres.
pub fn weighted_lp_norm_with(u: &GridFunction, weights: &[f64], p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid(format!("p must be at least 1, got {p}")));
    }
    if u.is_empty() || weights.len() != u.len() {
        return Err(invalid("weights do not match the grid"));
    }
    let dx = u.grid().dx();
    let s: f64 = if p == 1.0 {
        u.values().iter().zip(weights).map(|(v, w)| v.abs() * w).sum()
    } else {
        u.values().iter().zip(weights).map(|(v, w)| v.abs().powf(p) * w).sum()
    };
    Ok((s * dx).powf(1.0 / p))
}

/// `∫_{B(0,R)} |u|ᵖ φ dx` over the cells whose centres lie in the open ball.
pub fn ball_integral(u: &GridFunction, spec: &WeightSpec, p: f64, radius: f64) -> f64 {
    let g = u.grid();
    u.values()
        .iter()
        .enumerate()
        .filter(|(i, _)| g.center(*i).abs() < radius)
        .map(|(i, v)| v.abs().powf(p) * spec.eval(g.center(i)))
        .sum::<f64>()
        * g.dx()
}

/// Discrete convolution of `u` with `J_δ`. Values beyond the grid are
/// extended by the boundary value, so constants are reproduced exactly.
/// A width below the grid spacing cannot be resolved and returns `u`.
pub fn mollify(u: &GridFunction, m: &MollifierSpec) -> GridFunction {
    let dx = u.grid().dx();
    if m.width() < dx {
        log::warn!("mollifier width {} below grid spacing {dx}; returning input", m.width());
        return u.clone();
    }
    let taps = m.lattice_weights(dx);
    let v = u.values();
    let n = v.len() as isize;
    let out = (0..n).map(|i| taps.iter().map(|&(k, w)| w * v[(i - k).clamp(0, n - 1) as usize]).sum::<f64>()).collect();
    GridFunction::from_parts_unchecked(*u.grid(), out)
}

/// `(φ ⋆ J_δ)(x)` by Gauss–Legendre quadrature over the kernel support.
pub fn mollified_weight(spec: &WeightSpec, m: &MollifierSpec, x: f64) -> f64 {
    let (lo, hi) = m.support();
    gauss_legendre(lo, hi, 64, |z| spec.eval(x - z) * m.eval(z))
}

/// The pair `U(x) = (1 - ∫_0^{|x|} ρ)/(2M₁)`, `V(x) = ρ(|x|)/(2M₀)` built from a
/// profile `ρ` on `(0, 1)`; one-dimensional case of the construction that
/// converts mollified derivatives into averaged translates.
#[derive(Clone)]
pub struct UvPair {
    profile: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    cumulative: Arc<CumulativeTable>,
    m0: f64,
    m1: f64,
}

impl std::fmt::Debug for UvPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UvPair").field("m0", &self.m0).field("m1", &self.m1).finish()
    }
}

const MASS_TOLERANCE: f64 = 1e-6;

/// Build the `U`/`V` pair from a nonnegative unit-mass profile on `(0, 1)`.
pub fn build_uv(profile: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<UvPair> {
    let samples = 4096;
    for i in 0..=samples {
        let r = i as f64 / samples as f64;
        let v = profile(r);
        if !(v >= 0.0) {
            return Err(invalid(format!("profile negative or NaN at r = {r}")));
        }
    }
    let m0 = gauss_legendre(0.0, 1.0, 2048, &profile);
    if (m0 - 1.0).abs() > MASS_TOLERANCE {
        return Err(invalid(format!("profile mass {m0} is not 1")));
    }
    let m1 = gauss_legendre(0.0, 1.0, 2048, |r| r * profile(r));
    let cumulative = CumulativeTable::build(TABLE_NODES, &profile);
    Ok(UvPair { profile: Arc::new(profile), cumulative: Arc::new(cumulative), m0, m1 })
}

impl UvPair {
    /// Profile `ρ(r) = 2J(2r - 1)`: the standard bump moved onto `(0, 1)`.
    pub fn standard() -> Self {
        build_uv(|r| 2.0 * BumpKernel::get().eval(2.0 * r - 1.0)).expect("standard profile has unit mass")
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn m1(&self) -> f64 {
        self.m1
    }

    pub fn profile(&self, r: f64) -> f64 {
        if r <= 0.0 || r >= 1.0 {
            0.0
        } else {
            (self.profile)(r)
        }
    }

    pub fn u(&self, x: f64) -> f64 {
        let r = x.abs();
        if r >= 1.0 {
            return 0.0;
        }
        (self.m0 - self.cumulative.eval(r)) / (2.0 * self.m1)
    }

    pub fn v(&self, x: f64) -> f64 {
        self.profile(x.abs()) / (2.0 * self.m0)
    }

    pub fn u_scaled(&self, x: f64, delta: f64) -> f64 {
        self.u(x / delta) / delta
    }

    pub fn v_scaled(&self, x: f64, delta: f64) -> f64 {
        self.v(x / delta) / delta
    }

    /// `U_δ'(x) = -(M₀/M₁) V_δ(x) sgn(x)/δ`.
    pub fn u_scaled_derivative(&self, x: f64, delta: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        -(self.m0 / self.m1) * self.v_scaled(x, delta) * x.signum() / delta
    }
}
