//! Uniform one-dimensional grids and cell-average grid functions.

use crate::error::{invalid, Error, Result};

/// Uniform partition of `[left, right]` into `ncells` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    left: f64,
    right: f64,
    ncells: usize,
}

impl Grid1D {
    pub fn new(left: f64, right: f64, ncells: usize) -> Result<Self> {
        if !(left.is_finite() && right.is_finite()) || right <= left {
            return Err(invalid(format!("grid interval [{left}, {right}] is empty")));
        }
        if ncells == 0 {
            return Err(invalid("grid needs at least one cell"));
        }
        Ok(Self { left, right, ncells })
    }

    /// Symmetric grid on `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, ncells: usize) -> Result<Self> {
        Self::new(-half_width, half_width, ncells)
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn ncells(&self) -> usize {
        self.ncells
    }

    pub fn dx(&self) -> f64 {
        (self.right - self.left) / self.ncells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.left + (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.ncells).map(|i| self.center(i)).collect()
    }

    /// Same interval, `factor` times as many cells.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(invalid("refinement factor must be positive"));
        }
        Self::new(self.left, self.right, self.ncells * factor)
    }

    pub fn ensure_same(&self, other: &Grid1D) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Cell averages of a function on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid1D,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.ncells() {
            return Err(invalid(format!("{} values for a grid of {} cells", values.len(), grid.ncells())));
        }
        if let Some(cell) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { cell });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid1D, c: f64) -> Self {
        Self { grid, values: vec![c; grid.ncells()] }
    }

    /// Point samples at cell centres.
    pub fn sample(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.centers().into_iter().map(f).collect();
        Self { grid, values }
    }

    /// Cell averages by composite midpoint rule with `sub` points per cell.
    pub fn average(grid: Grid1D, sub: usize, f: impl Fn(f64) -> f64) -> Self {
        let sub = sub.max(1);
        let dx = grid.dx();
        let h = dx / sub as f64;
        let values = (0..grid.ncells())
            .map(|i| {
                let a = grid.left() + i as f64 * dx;
                (0..sub).map(|j| f(a + (j as f64 + 0.5) * h)).sum::<f64>() / sub as f64
            })
            .collect();
        Self { grid, values }
    }

    pub(crate) fn from_parts_unchecked(grid: Grid1D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.ncells());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(cell) => Err(Error::NonFinite { cell }),
            None => Ok(()),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn total_variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    /// `Σ values · dx`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    /// Unweighted L¹ distance by the midpoint rule.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum::<f64>() * self.grid.dx())
    }

    /// Conservative restriction onto `coarse`: block averages over an integer
    /// refinement ratio.
    pub fn restrict_to(&self, coarse: &Grid1D) -> Result<Self> {
        let fine = &self.grid;
        if fine.left() != coarse.left() || fine.right() != coarse.right() {
            return Err(Error::GridMismatch("restriction needs identical intervals".into()));
        }
        if coarse.ncells() == 0 || !fine.ncells().is_multiple_of(coarse.ncells()) {
            return Err(Error::GridMismatch(format!(
                "{} cells do not refine {} cells by an integer ratio",
                fine.ncells(),
                coarse.ncells()
            )));
        }
        let ratio = fine.ncells() / coarse.ncells();
        let values = self.values.chunks_exact(ratio).map(|block| block.iter().sum::<f64>() / ratio as f64).collect();
        Ok(Self { grid: *coarse, values })
    }
}
