//! Uniform time grid shared by kernel tables, simulated paths and filters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `0 = t_0 < t_1 < ... < t_K = T` with `K` steps.
///
/// Everything in the toolkit (kernel tables, path bundles, filter runs) is
/// tabulated on one of these grids; mixing objects built on different grids
/// is an error, checked via [`TimeGrid::assert_same`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid needs at least 2 steps, got {steps}"
            )));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of steps `K`; the grid has `K + 1` nodes.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, idx: usize) -> f64 {
        // Final node lands exactly on the horizon.
        if idx == self.steps {
            self.horizon
        } else {
            idx as f64 * self.dt()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nodes()).map(move |k| self.time(k))
    }

    /// Index of the grid node nearest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        let idx = (t / self.dt()).round() as isize;
        idx.clamp(0, self.steps as isize) as usize
    }

    /// Node index whose time equals `t` up to a half step, or an error.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = self.nearest(t);
        if (self.time(k) - t).abs() > 0.5 * self.dt() * 1e-6 + 1e-12 {
            return Err(Error::GridMismatch(format!(
                "time {t} is not a grid node (dt = {})",
                self.dt()
            )));
        }
        Ok(k)
    }

    pub fn contains(&self, t: f64) -> bool {
        (-1e-12..=self.horizon + 1e-12).contains(&t)
    }

    pub fn assert_same(&self, other: &TimeGrid, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "{what}: {:?} vs {:?}",
                self, other
            )));
        }
        Ok(())
    }

    /// Coarsen by an integer factor; `steps` must be divisible by it.
    pub fn coarsen(&self, factor: usize) -> Result<TimeGrid> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(Error::InvalidConfig(format!(
                "cannot coarsen a {}-step grid by factor {factor}",
                self.steps
            )));
        }
        TimeGrid::new(self.horizon, self.steps / factor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_and_spacing() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(g.nodes(), 5);
        assert_eq!(g.dt(), 0.25);
        assert_eq!(g.time(4), 1.0);
        assert_eq!(g.index_of(0.5).unwrap(), 2);
    }

    #[test]
    fn rejects_degenerate() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 1).is_err());
        assert!(TimeGrid::new(f64::NAN, 10).is_err());
    }

    #[test]
    fn coarsen_checks_divisibility() {
        let g = TimeGrid::new(2.0, 8).unwrap();
        let c = g.coarsen(2).unwrap();
        assert_eq!(c.steps(), 4);
        assert_eq!(c.horizon(), 2.0);
        assert!(g.coarsen(3).is_err());
    }
}
