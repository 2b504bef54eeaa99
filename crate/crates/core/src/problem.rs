//! Problem data: flux, noise coefficient, initial data, the regularized
//! Kružkov entropy pair, and the built-in problem catalog.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid1D, GridFunction};
use crate::weights::BumpKernel;

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Field = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// `(x, w(s), B(t) - B(s), t - s) -> w(t)`.
pub type ExactFlow = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;

/// Convexity information used by the exact Riemann fluxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluxShape {
    /// Convex with minimum at `sonic`.
    Convex { sonic: f64 },
    /// Concave with maximum at `sonic`.
    Concave { sonic: f64 },
    /// `f'` never changes sign.
    Monotone,
    /// No structure known; Riemann extrema are found by sampling.
    General,
}

#[derive(Clone)]
pub struct FluxSpec {
    name: String,
    f: Scalar,
    fprime: Scalar,
    lip: f64,
    d2bound: Option<f64>,
    shape: FluxShape,
}

impl fmt::Debug for FluxSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FluxSpec")
            .field("name", &self.name)
            .field("lip", &self.lip)
            .field("d2bound", &self.d2bound)
            .field("shape", &self.shape)
            .finish()
    }
}

impl FluxSpec {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        fprime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lip: f64,
        d2bound: Option<f64>,
        shape: FluxShape,
    ) -> Result<Self> {
        if !(lip >= 0.0 && lip.is_finite()) {
            return Err(invalid(format!("flux Lipschitz constant must be finite and nonnegative, got {lip}")));
        }
        Ok(Self { name: name.into(), f: Arc::new(f), fprime: Arc::new(fprime), lip, d2bound, shape })
    }

    /// `f(u) = u²/2`; `range` bounds `|u|` and so fixes `‖f‖_Lip = range`.
    pub fn burgers(range: f64) -> Self {
        Self::new("burgers", |u| 0.5 * u * u, |u| u, range, Some(1.0), FluxShape::Convex { sonic: 0.0 })
            .expect("valid burgers flux")
    }

    /// `f(u) = c u`.
    pub fn linear(speed: f64) -> Self {
        Self::new("linear", move |u| speed * u, move |_| speed, speed.abs(), Some(0.0), FluxShape::Monotone)
            .expect("valid linear flux")
    }

    pub fn zero() -> Self {
        Self::new("zero", |_| 0.0, |_| 0.0, 0.0, Some(0.0), FluxShape::Monotone).expect("valid zero flux")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn f(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    #[inline]
    pub fn fprime(&self, u: f64) -> f64 {
        (self.fprime)(u)
    }

    pub fn lip(&self) -> f64 {
        self.lip
    }

    pub fn d2bound(&self) -> Option<f64> {
        self.d2bound
    }

    pub fn shape(&self) -> FluxShape {
        self.shape
    }

    /// `min f` over the interval spanned by `a` and `b`.
    pub fn min_between(&self, a: f64, b: f64) -> f64 {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        match self.shape {
            FluxShape::Convex { sonic } => self.f(sonic.clamp(lo, hi)),
            FluxShape::Concave { .. } | FluxShape::Monotone => self.f(lo).min(self.f(hi)),
            FluxShape::General => self.sampled_extremum(lo, hi, f64::min),
        }
    }

    /// `max f` over the interval spanned by `a` and `b`.
    pub fn max_between(&self, a: f64, b: f64) -> f64 {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        match self.shape {
            FluxShape::Concave { sonic } => self.f(sonic.clamp(lo, hi)),
            FluxShape::Convex { .. } | FluxShape::Monotone => self.f(lo).max(self.f(hi)),
            FluxShape::General => self.sampled_extremum(lo, hi, f64::max),
        }
    }

    fn sampled_extremum(&self, lo: f64, hi: f64, pick: fn(f64, f64) -> f64) -> f64 {
        const SAMPLES: usize = 64;
        (0..=SAMPLES).map(|k| self.f(lo + (hi - lo) * k as f64 / SAMPLES as f64)).fold(self.f(lo), pick)
    }

    /// Sample pairs in `[-range, range]` and report violations of the stated
    /// constants.
    pub fn validate(&self, range: f64, samples: usize, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut issues = Vec::new();
        for _ in 0..samples {
            let a = rng.random_range(-range..=range);
            let b = rng.random_range(-range..=range);
            let gap = (a - b).abs();
            if (self.f(a) - self.f(b)).abs() > self.lip * gap * (1.0 + 1e-12) + 1e-14 {
                issues.push(format!("{}: Lipschitz bound {} violated at ({a}, {b})", self.name, self.lip));
                break;
            }
            if let Some(d2) = self.d2bound {
                if (self.fprime(a) - self.fprime(b)).abs() > d2 * gap * (1.0 + 1e-12) + 1e-14 {
                    issues.push(format!("{}: f'' bound {d2} violated at ({a}, {b})", self.name));
                    break;
                }
            }
        }
        issues
    }
}

/// Noise coefficient `σ(x, u)` with the constants that enter the estimates.
#[derive(Clone)]
pub struct NoiseSpec {
    name: String,
    sigma: Field,
    dsigma: Field,
    exact: Option<ExactFlow>,
    lip: f64,
    sup0: f64,
    homogeneous: bool,
    holder: Option<(f64, f64)>,
    supbound: Option<f64>,
    vanishes: bool,
}

impl fmt::Debug for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NoiseSpec")
            .field("name", &self.name)
            .field("lip", &self.lip)
            .field("sup0", &self.sup0)
            .field("homogeneous", &self.homogeneous)
            .field("holder", &self.holder)
            .field("supbound", &self.supbound)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl NoiseSpec {
    /// Homogeneous `σ = σ(u)`; `supbound` is `‖σ‖_∞` when finite.
    pub fn homogeneous(
        name: impl Into<String>,
        sigma: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dsigma: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lip: f64,
        supbound: Option<f64>,
    ) -> Self {
        let sup0 = sigma(0.0).abs();
        Self {
            name: name.into(),
            sigma: Arc::new(move |_, u| sigma(u)),
            dsigma: Arc::new(move |_, u| dsigma(u)),
            exact: None,
            lip,
            sup0,
            homogeneous: true,
            holder: None,
            supbound,
            vanishes: false,
        }
    }

    /// Space-dependent `σ(x, u)` with Hölder data `(M_σ, κ_σ)`.
    #[allow(clippy::too_many_arguments)]
    pub fn space_dependent(
        name: impl Into<String>,
        sigma: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        dsigma: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        lip: f64,
        sup0: f64,
        msigma: f64,
        kappa: f64,
    ) -> Result<Self> {
        if !(kappa > 0.0 && kappa <= 0.5) {
            return Err(invalid(format!("kappa_sigma must lie in (0, 1/2], got {kappa}")));
        }
        Ok(Self {
            name: name.into(),
            sigma: Arc::new(sigma),
            dsigma: Arc::new(dsigma),
            exact: None,
            lip,
            sup0,
            homogeneous: false,
            holder: Some((msigma, kappa)),
            supbound: None,
            vanishes: false,
        })
    }

    pub fn zero() -> Self {
        let mut n = Self::homogeneous("zero", |_| 0.0, |_| 0.0, 0.0, Some(0.0));
        n.vanishes = true;
        n.exact = Some(Arc::new(|_, w, _, _| w));
        n
    }

    /// `σ ≡ c`.
    pub fn additive(c: f64) -> Self {
        let mut n = Self::homogeneous("additive", move |_| c, |_| 0.0, 0.0, Some(c.abs()));
        n.exact = Some(Arc::new(move |_, w, db, _| w + c * db));
        n.vanishes = c == 0.0;
        n
    }

    pub fn cosine(a: f64) -> Self {
        Self::homogeneous("cosine", move |u| a * u.cos(), move |u| -a * u.sin(), a.abs(), Some(a.abs()))
    }

    pub fn sine(a: f64) -> Self {
        Self::homogeneous("sine", move |u| a * u.sin(), move |u| a * u.cos(), a.abs(), Some(a.abs()))
    }

    /// `σ(u) = λu`, geometric Brownian motion per cell. Unbounded, so outside
    /// the hypotheses of the rate theorem; kept for its closed-form flow.
    pub fn linear(lambda: f64) -> Self {
        let mut n = Self::homogeneous("linear", move |u| lambda * u, move |_| lambda, lambda.abs(), None);
        n.exact = Some(Arc::new(move |_, w, db, dt| w * (lambda * db - 0.5 * lambda * lambda * dt).exp()));
        n
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn sigma(&self, x: f64, u: f64) -> f64 {
        (self.sigma)(x, u)
    }

    #[inline]
    pub fn dsigma_du(&self, x: f64, u: f64) -> f64 {
        (self.dsigma)(x, u)
    }

    pub fn exact_flow(&self) -> Option<&ExactFlow> {
        self.exact.as_ref()
    }

    pub fn lip(&self) -> f64 {
        self.lip
    }

    /// `‖σ(·, 0)‖_∞`.
    pub fn sup0(&self) -> f64 {
        self.sup0
    }

    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    /// `σ ≡ 0`.
    pub fn vanishes(&self) -> bool {
        self.vanishes
    }

    /// `(M_σ, κ_σ)` for space-dependent noise.
    pub fn holder(&self) -> Option<(f64, f64)> {
        self.holder
    }

    pub fn supbound(&self) -> Option<f64> {
        self.supbound
    }

    /// Homogeneous and bounded: the setting of the `Δt^{1/3}` error bound.
    pub fn satisfies_rate_hypotheses(&self) -> bool {
        self.homogeneous && self.supbound.is_some()
    }

    pub fn validate(&self, range: f64, samples: usize, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut issues = Vec::new();
        for _ in 0..samples {
            let x = rng.random_range(-10.0..10.0);
            let y = rng.random_range(-10.0..10.0);
            let a = rng.random_range(-range..=range);
            let b = rng.random_range(-range..=range);
            if (self.sigma(x, a) - self.sigma(x, b)).abs() > self.lip * (a - b).abs() * (1.0 + 1e-12) + 1e-14 {
                issues.push(format!("{}: Lipschitz bound {} violated at u = ({a}, {b})", self.name, self.lip));
                break;
            }
            if let Some((m, kappa)) = self.holder {
                let lhs = (self.sigma(x, a) - self.sigma(y, a)).abs();
                let rhs = m * (x - y).abs().powf(kappa + 0.5) * (1.0 + a.abs());
                if lhs > rhs * (1.0 + 1e-12) + 1e-14 {
                    issues.push(format!("{}: Hölder bound violated at x = ({x}, {y})", self.name));
                    break;
                }
            }
            if let Some(s) = self.supbound {
                if self.sigma(x, a).abs() > s * (1.0 + 1e-12) {
                    issues.push(format!("{}: sup bound {s} violated at u = {a}", self.name));
                    break;
                }
            }
        }
        issues
    }
}

/// Regularized entropy `S_δ` with `S_δ'(r) = 2∫_0^r J_δ`, `S_δ(0) = 0`, and its
/// flux `Q_δ(u, v) = ∫_v^u S_δ'(ξ - v) f'(ξ) dξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyPair {
    delta: f64,
}

impl EntropyPair {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(invalid(format!("entropy regularization must be positive, got {delta}")));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn s(&self, r: f64) -> f64 {
        let k = BumpKernel::get();
        let a = r.abs();
        let d = self.delta;
        if a >= d {
            // S_δ' = ±1 beyond the kernel support
            a - d * k.abs_first_moment()
        } else {
            let s = a / d;
            2.0 * d * (s * k.half_cdf(s) - k.half_first_moment(s))
        }
    }

    pub fn ds(&self, r: f64) -> f64 {
        2.0 * BumpKernel::get().half_cdf((r / self.delta).clamp(-1.0, 1.0))
    }

    pub fn d2s(&self, r: f64) -> f64 {
        2.0 * BumpKernel::get().eval(r / self.delta) / self.delta
    }

    /// `Q_δ(u, v)`: composite Simpson with step at most `δ/64` where `S_δ'` is
    /// not saturated; the saturated remainder integrates `±f'` exactly.
    pub fn q(&self, flux: &FluxSpec, u: f64, v: f64) -> f64 {
        let gap = u - v;
        if gap == 0.0 {
            return 0.0;
        }
        let sgn = gap.signum();
        let d = self.delta;
        let inner_len = gap.abs().min(d);
        let mut n = (inner_len / (d / 64.0)).ceil() as usize;
        n = n.max(2);
        if n % 2 == 1 {
            n += 1;
        }
        let h = sgn * inner_len / n as f64;
        let g = |xi: f64| self.ds(xi - v) * flux.fprime(xi);
        let mut acc = g(v) + g(v + n as f64 * h);
        for k in 1..n {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * g(v + k as f64 * h);
        }
        let mut total = acc * h / 3.0;
        if gap.abs() > d {
            total += sgn * (flux.f(u) - flux.f(v + sgn * d));
        }
        total
    }
}

/// Kružkov entropy flux `sgn(u - c)(f(u) - f(c))`.
pub fn kruzkov_flux(flux: &FluxSpec, u: f64, c: f64) -> f64 {
    let d = u - c;
    if d == 0.0 {
        0.0
    } else {
        d.signum() * (flux.f(u) - flux.f(c))
    }
}

/// Initial data catalog. All members are BV with `O(r)` translate moduli.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Constant(f64),
    /// `ul` left of `x0`, `ur` right of it.
    Riemann {
        ul: f64,
        ur: f64,
        x0: f64,
    },
    /// `base + height · J((x - center)/width) / J(0)`.
    Bump {
        center: f64,
        width: f64,
        height: f64,
        base: f64,
    },
    /// Unit step down at 0 plus a bump of height 1/2 on `(1, 2)`.
    RiemannBump,
    /// `teeth` linear ramps of height `amplitude` on `[a, b]`, zero outside.
    Sawtooth {
        teeth: usize,
        amplitude: f64,
        a: f64,
        b: f64,
    },
    /// Stationary entropy-violating jump `-1 | 1` at the origin.
    ExpansionShock,
}

impl InitialData {
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "riemann-bump" => Self::RiemannBump,
            "shock" => Self::Riemann { ul: 1.0, ur: 0.0, x0: 0.0 },
            "rarefaction" => Self::Riemann { ul: 0.0, ur: 1.0, x0: 0.0 },
            "bump" => Self::Bump { center: 0.0, width: 1.0, height: 1.0, base: 0.0 },
            "sawtooth" => Self::Sawtooth { teeth: 4, amplitude: 1.0, a: -1.0, b: 1.0 },
            "expansion-shock" => Self::ExpansionShock,
            "zero" => Self::Constant(0.0),
            other => return Err(Error::Unknown { kind: "initial data", name: other.to_string() }),
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Constant(c) => c,
            Self::Riemann { ul, ur, x0 } => {
                if x < x0 {
                    ul
                } else {
                    ur
                }
            }
            Self::Bump { center, width, height, base } => {
                let k = BumpKernel::get();
                base + height * k.eval((x - center) / width) / k.sup()
            }
            Self::RiemannBump => {
                let k = BumpKernel::get();
                let step = if x < 0.0 { 1.0 } else { 0.0 };
                step + 0.5 * k.eval((x - 1.5) / 0.5) / k.sup()
            }
            Self::Sawtooth { teeth, amplitude, a, b } => {
                if x < a || x >= b || teeth == 0 {
                    0.0
                } else {
                    let period = (b - a) / teeth as f64;
                    let phase = ((x - a) / period).fract();
                    amplitude * phase
                }
            }
            Self::ExpansionShock => {
                if x < 0.0 {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Cell averages on `grid`.
    pub fn project(&self, grid: Grid1D) -> GridFunction {
        GridFunction::average(grid, 16, |x| self.eval(x))
    }

    /// Largest `|u₀|`.
    pub fn sup(&self) -> f64 {
        match *self {
            Self::Constant(c) => c.abs(),
            Self::Riemann { ul, ur, .. } => ul.abs().max(ur.abs()),
            Self::Bump { height, base, .. } => base.abs().max((base + height).abs()),
            Self::RiemannBump => 1.0,
            Self::Sawtooth { amplitude, .. } => amplitude.abs(),
            Self::ExpansionShock => 1.0,
        }
    }
}

/// A named `(flux, noise, initial data)` triple.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub flux: FluxSpec,
    pub noise: NoiseSpec,
    pub initial: InitialData,
    /// Used only as a test oracle; violates the boundedness hypotheses.
    pub oracle_only: bool,
}

/// Parameter overrides applied on top of a catalog entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProblemOverrides {
    pub amplitude: Option<f64>,
    pub flux_range: Option<f64>,
    pub initial: Option<InitialData>,
}

pub const PROBLEM_NAMES: [&str; 7] = [
    "burgers-cos",
    "burgers-sin",
    "burgers-additive",
    "burgers-deterministic",
    "burgers-xdep",
    "noise-only-cos",
    "advection-gbm",
];

const DEFAULT_AMPLITUDE: f64 = 0.5;
const DEFAULT_RANGE: f64 = 4.0;

impl Problem {
    pub fn by_name(name: &str, overrides: &ProblemOverrides) -> Result<Self> {
        let a = overrides.amplitude.unwrap_or(DEFAULT_AMPLITUDE);
        let range = overrides.flux_range.unwrap_or(DEFAULT_RANGE);
        let initial = overrides.initial.clone().unwrap_or(InitialData::RiemannBump);
        let burgers = FluxSpec::burgers(range);
        let (flux, noise, oracle_only) = match name {
            "burgers-cos" => (burgers, NoiseSpec::cosine(a), false),
            "burgers-sin" => (burgers, NoiseSpec::sine(a), false),
            "burgers-additive" => (burgers, NoiseSpec::additive(a), false),
            "burgers-deterministic" => (burgers, NoiseSpec::zero(), false),
            "burgers-xdep" => {
                // a(x) = a·(1 + |sin x|^{3/4})/2 is Hölder-3/4 with constant a/2.
                let kappa = 0.25;
                let amp = move |x: f64| a * 0.5 * (1.0 + x.sin().abs().powf(kappa + 0.5));
                let noise = NoiseSpec::space_dependent(
                    "cosine-xdep",
                    move |x, u| amp(x) * u.cos(),
                    move |x, u| -amp(x) * u.sin(),
                    a.abs(),
                    a.abs(),
                    0.5 * a.abs(),
                    kappa,
                )?;
                (burgers, noise, false)
            }
            "noise-only-cos" => (FluxSpec::zero(), NoiseSpec::cosine(a), false),
            "advection-gbm" => (FluxSpec::linear(1.0), NoiseSpec::linear(a), true),
            other => return Err(Error::Unknown { kind: "problem", name: other.to_string() }),
        };
        Ok(Self { name: name.to_string(), flux, noise, initial, oracle_only })
    }

    pub fn validate(&self) -> Vec<String> {
        let range = self.flux.lip().max(1.0);
        let mut issues = self.flux.validate(range, 2000, 7);
        issues.extend(self.noise.validate(range, 2000, 11));
        for issue in &issues {
            log::warn!("{}: {issue}", self.name);
        }
        issues
    }
}

/// The catalog with default parameters.
pub fn builtin_problems() -> Vec<Problem> {
    PROBLEM_NAMES
        .iter()
        .map(|name| Problem::by_name(name, &ProblemOverrides::default()).expect("catalog entry"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_entries() {
        let all = builtin_problems();
        assert_eq!(all.len(), PROBLEM_NAMES.len());
        let cos = Problem::by_name("burgers-cos", &ProblemOverrides::default()).unwrap();
        assert_eq!(cos.noise.supbound(), Some(0.5));
        assert_eq!(cos.flux.lip(), DEFAULT_RANGE);
        assert!(!cos.oracle_only);
        let gbm = Problem::by_name("advection-gbm", &ProblemOverrides::default()).unwrap();
        assert!(gbm.oracle_only);
        assert!(gbm.noise.exact_flow().is_some());
        assert!(!gbm.noise.satisfies_rate_hypotheses());
        let add = Problem::by_name("burgers-additive", &ProblemOverrides::default()).unwrap();
        assert_eq!(add.noise.sigma(3.0, -7.0), 0.5);
        assert!(matches!(Problem::by_name("kdv", &ProblemOverrides::default()), Err(Error::Unknown { .. })));
    }

    #[test]
    fn catalog_constants_hold_on_samples() {
        for p in builtin_problems() {
            assert!(p.validate().is_empty(), "{}", p.name);
        }
    }

    #[test]
    fn validator_flags_bad_constants() {
        let wrong = FluxSpec::new("wrong", |u| u * u, |u| 2.0 * u, 0.1, None, FluxShape::General).unwrap();
        assert!(!wrong.validate(2.0, 500, 1).is_empty());
    }

    #[test]
    fn sin_noise_vanishes_at_zero() {
        let p = Problem::by_name("burgers-sin", &ProblemOverrides::default()).unwrap();
        assert_eq!(p.noise.sup0(), 0.0);
    }

    #[test]
    fn riemann_extrema() {
        let b = FluxSpec::burgers(4.0);
        assert_eq!(b.min_between(-1.0, 2.0), 0.0);
        assert_eq!(b.max_between(-1.0, 2.0), 2.0);
        let g = FluxSpec::new("g", |u| 0.5 * u * u, |u| u, 4.0, None, FluxShape::General).unwrap();
        assert!((g.min_between(-1.0, 2.0) - 0.0).abs() < 1e-3);
    }

    #[test]
    fn initial_data_values() {
        assert_eq!(InitialData::by_name("shock").unwrap().eval(-0.1), 1.0);
        let saw = InitialData::by_name("sawtooth").unwrap();
        assert_eq!(saw.eval(-2.0), 0.0);
        assert!((saw.eval(-0.875) - 0.25).abs() < 1e-12);
        assert!(InitialData::by_name("nope").is_err());
        let rb = InitialData::RiemannBump;
        assert_eq!(rb.eval(-3.0), 1.0);
        assert!((rb.eval(1.5) - 0.5).abs() < 1e-14);
    }
    fn brute_force_q(flux: &FluxSpec, delta: f64, u: f64, v: f64, n: usize) -> f64 {
        // Independent route: S_δ' by running trapezoid sums of J_δ, then a
        // midpoint sum of S_δ'(ξ - v) f'(ξ) over [v, u].
        let k = BumpKernel::get();
        let jd = |z: f64| k.eval(z / delta) / delta;
        let h = (u - v) / n as f64;
        let mut total = 0.0;
        let mut sprime = 0.0; // 2∫_0^{ξ-v} J_δ at the left end of the current cell
        let mut prev = jd(0.0);
        for i in 0..n {
            let left = i as f64 * h;
            let mid = left + 0.5 * h;
            let jm = jd(mid);
            let sp_mid = sprime + 2.0 * 0.5 * (prev + jm) * 0.5 * h;
            total += sp_mid * flux.fprime(v + mid) * h;
            let jr = jd(left + h);
            sprime += 2.0 * 0.5 * (prev + jr) * h;
            prev = jr;
        }
        total
    }

    #[test]
    fn sdelta_basic_values() {
        let pair = EntropyPair::new(0.1).unwrap();
        assert_eq!(pair.s(0.0), 0.0);
        let v = pair.s(1.0);
        assert!((0.9..=1.0).contains(&v));
        assert!((pair.ds(0.1) - 1.0).abs() < 1e-13 && (pair.ds(0.5) - 1.0).abs() < 1e-15);
        assert!((pair.ds(-0.1) + 1.0).abs() < 1e-13);
        assert_eq!(pair.s(-0.37), pair.s(0.37));
        // continuity across |r| = δ
        assert!((pair.s(0.1 - 1e-12) - pair.s(0.1 + 1e-12)).abs() < 1e-10);
        // S_δ'' is the derivative of S_δ'
        let h = 1e-6;
        for &r in &[-0.07, -0.01, 0.02, 0.09] {
            let fd = (pair.ds(r + h) - pair.ds(r - h)) / (2.0 * h);
            assert!((fd - pair.d2s(r)).abs() < 1e-5 * (1.0 + fd.abs()));
            let fd1 = (pair.s(r + h) - pair.s(r - h)) / (2.0 * h);
            assert!((fd1 - pair.ds(r)).abs() < 1e-7);
        }
    }

    #[test]
    fn sdelta_bounds_hold_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sup = BumpKernel::get().sup();
        for _ in 0..1000 {
            let delta = rng.random_range(1e-3..1.0);
            let pair = EntropyPair::new(delta).unwrap();
            let r: f64 = rng.random_range(-3.0..3.0);
            let s = pair.s(r);
            assert!(s <= r.abs() + 1e-15 && s >= r.abs() - delta - 1e-15);
            let bound = 2.0 / delta * sup * if r.abs() < delta { 1.0 } else { 0.0 };
            assert!(pair.d2s(r).abs() <= bound * (1.0 + 1e-12));
            assert!((r.abs() - s).abs() <= delta);
        }
    }

    #[test]
    fn qdelta_bound_and_symmetry_defect() {
        let flux = FluxSpec::burgers(4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let delta = rng.random_range(1e-2..0.5);
            let pair = EntropyPair::new(delta).unwrap();
            let u: f64 = rng.random_range(-4.0..4.0);
            let v: f64 = rng.random_range(-4.0..4.0);
            assert_eq!(pair.q(&flux, v, v), 0.0);
            let q = pair.q(&flux, u, v);
            assert!(q.abs() <= flux.lip() * pair.s(u - v) * (1.0 + 1e-9) + 1e-12, "u={u} v={v}");
            // |∂_u(Q_δ(u,v) - Q_δ(v,u))| ≤ ‖f''‖ δ by central differences
            let h = 1e-5;
            let g = |w: f64| pair.q(&flux, w, v) - pair.q(&flux, v, w);
            let dg = (g(u + h) - g(u - h)) / (2.0 * h);
            assert!(dg.abs() <= flux.d2bound().unwrap() * delta * (1.0 + 1e-4) + 1e-6, "dg={dg}");
        }
    }

    #[test]
    fn qdelta_matches_fine_quadrature_for_burgers() {
        let flux = FluxSpec::burgers(4.0);
        let pair = EntropyPair::new(0.05).unwrap();
        for &(u, v) in &[(2.0, 0.3), (-1.5, 0.7), (0.32, 0.3), (0.9, -0.2)] {
            let oracle = brute_force_q(&flux, 0.05, u, v, 1_000_000);
            let q = pair.q(&flux, u, v);
            assert!((q - oracle).abs() < 1e-8, "u={u} v={v}: {q} vs {oracle}");
        }
        // past the kernel support Q_δ differs from (u² - v²)/2 by at most δ(|v| + δ)
        let q = pair.q(&flux, 2.0, 0.3);
        assert!((q - (4.0 - 0.09) / 2.0).abs() <= 0.05 * 0.35);
    }

    #[test]
    fn qdelta_recovers_kruzkov_flux() {
        let flux = FluxSpec::burgers(4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let deltas = [0.4, 0.2, 0.1];
        let mut worst = [0.0f64; 3];
        for _ in 0..200 {
            let u: f64 = rng.random_range(-2.0..2.0);
            let v: f64 = rng.random_range(-2.0..2.0);
            let target = kruzkov_flux(&flux, u, v);
            for (k, d) in deltas.into_iter().enumerate() {
                // S_δ' differs from sgn only on an interval of length δ next to v
                let gap = (EntropyPair::new(d).unwrap().q(&flux, u, v) - target).abs();
                assert!(gap <= d * (v.abs() + d) * (1.0 + 1e-9) + 1e-12, "u={u} v={v} δ={d}: {gap}");
                worst[k] = worst[k].max(gap);
            }
        }
        assert!(worst[2] < worst[1] && worst[1] < worst[0], "{worst:?}");
    }
}
