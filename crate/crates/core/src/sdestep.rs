//! The stochastic step `S_SDE(t, s)`: in every cell the scalar SDE
//! `dw = σ(x, w) dB`, all cells driven by the same Brownian increments.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::grid::GridFunction;
use crate::noise::WienerPath;
use crate::problem::NoiseSpec;
use crate::weights::{weighted_lp_norm_with, WeightSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SdeScheme {
    EulerMaruyama,
    #[default]
    Milstein,
    /// Closed-form flow; only for noise that provides one.
    Exact,
}

impl SdeScheme {
    pub fn name(&self) -> &'static str {
        match self {
            Self::EulerMaruyama => "euler-maruyama",
            Self::Milstein => "milstein",
            Self::Exact => "exact",
        }
    }
}

impl fmt::Display for SdeScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SdeScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler-maruyama" => Ok(Self::EulerMaruyama),
            "milstein" => Ok(Self::Milstein),
            "exact" => Ok(Self::Exact),
            other => Err(Error::Unknown { kind: "SDE scheme", name: other.to_string() }),
        }
    }
}

fn knot_range(path: &WienerPath, s: f64, t: f64) -> Result<(usize, usize)> {
    if !(s <= t) {
        return Err(invalid(format!("SDE step needs s <= t, got s = {s}, t = {t}")));
    }
    let horizon = path.horizon();
    for time in [s, t] {
        if time < 0.0 || time > horizon * (1.0 + 1e-12) {
            return Err(Error::TimeOutOfRange { t: time, lo: 0.0, hi: horizon });
        }
    }
    Ok((path.knot_index(s)?, path.knot_index(t)?))
}

/// `S_SDE(t, s) w`, sub-stepping on every path knot in `[s, t]`.
pub fn sde_step(
    w: &GridFunction,
    noise: &NoiseSpec,
    path: &WienerPath,
    s: f64,
    t: f64,
    scheme: SdeScheme,
) -> Result<GridFunction> {
    let (ks, kt) = knot_range(path, s, t)?;
    w.check_finite()?;
    if ks == kt || noise.vanishes() {
        return Ok(w.clone());
    }
    let b = &path.values()[ks..=kt];
    let h = path.step();
    let grid = *w.grid();
    let mut out = w.values().to_vec();
    match scheme {
        SdeScheme::Exact => {
            let flow = noise.exact_flow().ok_or_else(|| Error::NoClosedForm(noise.name().to_string()))?;
            let db = b[b.len() - 1] - b[0];
            for (i, wi) in out.iter_mut().enumerate() {
                *wi = flow(grid.center(i), *wi, db, t - s);
            }
        }
        SdeScheme::EulerMaruyama => {
            for (i, wi) in out.iter_mut().enumerate() {
                let x = grid.center(i);
                let mut y = *wi;
                for inc in b.windows(2) {
                    y += noise.sigma(x, y) * (inc[1] - inc[0]);
                }
                *wi = y;
            }
        }
        SdeScheme::Milstein => {
            for (i, wi) in out.iter_mut().enumerate() {
                let x = grid.center(i);
                let mut y = *wi;
                for inc in b.windows(2) {
                    let db = inc[1] - inc[0];
                    let sig = noise.sigma(x, y);
                    y += sig * db + 0.5 * sig * noise.dsigma_du(x, y) * (db * db - h);
                }
                *wi = y;
            }
        }
    }
    let out = GridFunction::from_parts_unchecked(grid, out);
    out.check_finite()?;
    Ok(out)
}

/// Ensemble check of `E‖S_SDE(t,s)w − S_SDE(t,s)v‖_{1,φ} = E‖w − v‖_{1,φ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeContractionReport {
    pub before: f64,
    pub after: f64,
    /// Standard error of the paired per-path differences.
    pub stderr: f64,
    pub band: f64,
    pub violated: bool,
}

pub const MIN_ENSEMBLE: usize = 30;

#[allow(clippy::too_many_arguments)]
pub fn sde_contraction_check(
    ws: &[GridFunction],
    vs: &[GridFunction],
    paths: &[WienerPath],
    noise: &NoiseSpec,
    s: f64,
    t: f64,
    spec: &WeightSpec,
    scheme: SdeScheme,
) -> Result<SdeContractionReport> {
    let n = ws.len();
    if n < MIN_ENSEMBLE {
        return Err(Error::EnsembleTooSmall { got: n, need: MIN_ENSEMBLE });
    }
    if vs.len() != n || paths.len() != n {
        return Err(invalid("ensemble members, partners and paths must have equal counts"));
    }
    let weights = spec.values_on(&ws[0]);
    let mut before = Vec::with_capacity(n);
    let mut diffs = Vec::with_capacity(n);
    for ((w, v), path) in ws.iter().zip(vs).zip(paths) {
        let b = weighted_lp_norm_with(&w.sub(v)?, &weights, 1.0)?;
        let sw = sde_step(w, noise, path, s, t, scheme)?;
        let sv = sde_step(v, noise, path, s, t, scheme)?;
        let a = weighted_lp_norm_with(&sw.sub(&sv)?, &weights, 1.0)?;
        before.push(b);
        diffs.push(a - b);
    }
    let before_mean = before.iter().sum::<f64>() / n as f64;
    let mean_diff = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / (n - 1) as f64;
    let stderr = (var / n as f64).sqrt();
    let band = 3.0 * stderr + 1e-3 * before_mean;
    Ok(SdeContractionReport {
        before: before_mean,
        after: before_mean + mean_diff,
        stderr,
        band,
        violated: mean_diff.abs() > band,
    })
}
