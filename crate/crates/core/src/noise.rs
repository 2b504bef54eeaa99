//! Brownian paths on dyadic time grids with reproducible bridge refinement.
//!
//! Every Gaussian draw is keyed by `(seed, level, index)`, so a path sampled
//! coarse and refined is identical to one refined in a different order or on
//! a different thread.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

const MAGIC: &[u8; 8] = b"STOBALWP";

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for ensemble member `index` of a run with master seed `master`.
pub fn path_seed(master: u64, index: u64) -> u64 {
    splitmix(splitmix(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

fn keyed_normal(seed: u64, level: u32, index: u64) -> f64 {
    let key = splitmix(splitmix(seed ^ ((level as u64) << 48)) ^ index);
    ChaCha8Rng::seed_from_u64(key).sample(StandardNormal)
}

/// Samples of one Brownian motion at `t_k = k·h`, `h = base_step / 2^level`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    seed: u64,
    base_step: f64,
    level: u32,
    values: Vec<f64>,
}

impl WienerPath {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn base_step(&self) -> f64 {
        self.base_step
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn step(&self) -> f64 {
        self.base_step / (1u64 << self.level) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps() as f64 * self.step()
    }

    pub fn times(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.values.len()).map(|k| k as f64 * h).collect()
    }

    /// Index of the knot at time `t`, if `t` is one.
    pub fn knot_index(&self, t: f64) -> Result<usize> {
        let h = self.step();
        let k = (t / h).round();
        if !(k >= 0.0) || k as usize >= self.values.len() || (k * h - t).abs() > 1e-9 * h.max(t.abs()) {
            return Err(Error::NotOnPathGrid(t));
        }
        Ok(k as usize)
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        Ok(self.values[self.knot_index(t)?])
    }

    /// Halve the step `log2(factor)` times by Brownian bridge midpoints.
    /// Existing knots are kept bit for bit.
    pub fn refine(&self, factor: usize) -> Result<WienerPath> {
        if factor == 0 || !factor.is_power_of_two() {
            return Err(invalid(format!("refinement factor must be a power of two, got {factor}")));
        }
        let mut path = self.clone();
        for _ in 0..factor.trailing_zeros() {
            path = path.halve();
        }
        Ok(path)
    }

    /// Keep every `factor`-th knot. Inverse of [`WienerPath::refine`].
    pub fn coarsen(&self, factor: usize) -> Result<WienerPath> {
        if factor == 0 || !factor.is_power_of_two() || factor.trailing_zeros() > self.level {
            return Err(invalid(format!("cannot coarsen a level-{} path by {factor}", self.level)));
        }
        if !self.n_steps().is_multiple_of(factor) {
            return Err(invalid(format!("{factor} does not divide {} steps", self.n_steps())));
        }
        Ok(WienerPath {
            seed: self.seed,
            base_step: self.base_step,
            level: self.level - factor.trailing_zeros(),
            values: self.values.iter().step_by(factor).copied().collect(),
        })
    }

    /// Refine until the step is at most `step`.
    pub fn refine_to(&self, step: f64) -> Result<WienerPath> {
        let mut factor = 1usize;
        while self.step() / factor as f64 > step * (1.0 + 1e-12) {
            factor *= 2;
        }
        self.refine(factor)
    }

    fn halve(&self) -> WienerPath {
        let level = self.level + 1;
        let sd = (self.step() / 4.0).sqrt();
        let mut values = Vec::with_capacity(2 * self.values.len() - 1);
        for (k, w) in self.values.windows(2).enumerate() {
            values.push(w[0]);
            values.push(0.5 * (w[0] + w[1]) + sd * keyed_normal(self.seed, level, 2 * k as u64 + 1));
        }
        values.push(*self.values.last().expect("nonempty path"));
        WienerPath { seed: self.seed, base_step: self.base_step, level, values }
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&self.seed.to_le_bytes())?;
        out.write_all(&self.base_step.to_le_bytes())?;
        out.write_all(&self.level.to_le_bytes())?;
        out.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for t in self.times() {
            out.write_all(&t.to_le_bytes())?;
        }
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<WienerPath> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(invalid("not a Brownian path dump"));
        }
        let mut b8 = [0u8; 8];
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        input.read_exact(&mut b8)?;
        let base_step = f64::from_le_bytes(b8);
        input.read_exact(&mut b4)?;
        let level = u32::from_le_bytes(b4);
        input.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut read_block = || -> Result<Vec<f64>> {
            (0..n)
                .map(|_| {
                    input.read_exact(&mut b8)?;
                    Ok(f64::from_le_bytes(b8))
                })
                .collect()
        };
        let _times = read_block()?;
        let values = read_block()?;
        if n == 0 || values[0] != 0.0 || !(base_step > 0.0) {
            return Err(invalid("corrupt Brownian path dump"));
        }
        Ok(WienerPath { seed, base_step, level, values })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<WienerPath> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Brownian motion on `[0, horizon]` at step `base_step` (level 0).
pub fn sample_path(seed: u64, horizon: f64, base_step: f64) -> Result<WienerPath> {
    if !(base_step > 0.0) || !(horizon > 0.0) {
        return Err(invalid(format!("bad path grid: horizon {horizon}, step {base_step}")));
    }
    let steps = (horizon / base_step).round();
    if (steps * base_step - horizon).abs() > 1e-9 * horizon.max(base_step) {
        return Err(invalid(format!("step {base_step} does not divide horizon {horizon}")));
    }
    let steps = steps as usize;
    let sd = base_step.sqrt();
    let mut values = Vec::with_capacity(steps + 1);
    let mut b = 0.0;
    values.push(b);
    for k in 0..steps {
        b += sd * keyed_normal(seed, 0, k as u64);
        values.push(b);
    }
    Ok(WienerPath { seed, base_step, level: 0, values })
}
