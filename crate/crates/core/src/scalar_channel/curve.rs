use crate::error::{Error, Result};
use crate::real::Real;
use crate::table::Table;

use super::functionals::{scalar_mi, scalar_mmse};
use super::prior::ScalarPrior;

/// `I_X` and `M_X` sampled on an ascending snr grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarCurve<T> {
    pub s_grid: Vec<T>,
    pub mi: Vec<T>,
    pub mmse: Vec<T>,
}

impl<T: Real> ScalarCurve<T> {
    pub fn compute(prior: &ScalarPrior<T>, s_grid: &[T]) -> Result<Self> {
        if s_grid.windows(2).any(|w| !(w[1] > w[0])) || s_grid.first().is_some_and(|&s| s < T::zero()) {
            return Err(Error::InvalidArgument("snr grid must be ascending and nonnegative".into()));
        }
        let mut mi = Vec::with_capacity(s_grid.len());
        let mut mmse = Vec::with_capacity(s_grid.len());
        for &s in s_grid {
            mi.push(scalar_mi(prior, s)?);
            mmse.push(scalar_mmse(prior, s)?);
        }
        Ok(Self { s_grid: s_grid.to_vec(), mi, mmse })
    }

    /// Largest violation of the curve invariants: MMSE non-increasing, MI
    /// non-decreasing and concave (second differences on a possibly uneven grid).
    pub fn shape_violation(&self) -> T {
        let mut worst = T::zero();
        for w in self.mmse.windows(2) {
            worst = worst.max(w[1] - w[0]);
        }
        for w in self.mi.windows(2) {
            worst = worst.max(w[0] - w[1]);
        }
        for i in 1..self.s_grid.len().saturating_sub(1) {
            let (s0, s1, s2) = (self.s_grid[i - 1], self.s_grid[i], self.s_grid[i + 1]);
            let left = (self.mi[i] - self.mi[i - 1]) / (s1 - s0);
            let right = (self.mi[i + 1] - self.mi[i]) / (s2 - s1);
            worst = worst.max(right - left);
        }
        worst
    }

    /// Columns `s,I,M`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["s", "I", "M"]);
        for i in 0..self.s_grid.len() {
            t.push_f64(&[self.s_grid[i].as_f64(), self.mi[i].as_f64(), self.mmse[i].as_f64()]);
        }
        t
    }
}
