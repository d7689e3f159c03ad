use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeGrid {
    Uniform,
    Geometric,
}

/// Time horizon `T`, early-stopping time `eps` and the reverse-time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSchedule {
    pub horizon: f64,
    pub early_stop: f64,
    pub n_steps: usize,
    pub grid: TimeGrid,
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self {
            horizon: 100.0,
            early_stop: 1e-3,
            n_steps: 500,
            grid: TimeGrid::Geometric,
        }
    }
}

impl DiffusionSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.early_stop > 0.0 && self.early_stop < self.horizon && self.horizon.is_finite()) {
            return Err(invalid(format!(
                "schedule needs 0 < eps < T, got eps = {}, T = {}",
                self.early_stop, self.horizon
            )));
        }
        if self.n_steps == 0 {
            return Err(invalid("schedule needs at least one step"));
        }
        Ok(())
    }

    /// Diffusion times from `T` down to `eps`, `n_steps + 1` entries,
    /// strictly decreasing.
    pub fn reverse_grid(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let (t_max, t_min, n) = (self.horizon, self.early_stop, self.n_steps);
        let mut grid: Vec<f64> = (0..=n)
            .map(|k| {
                let frac = k as f64 / n as f64;
                match self.grid {
                    TimeGrid::Uniform => t_max + (t_min - t_max) * frac,
                    TimeGrid::Geometric => t_max * (t_min / t_max).powf(frac),
                }
            })
            .collect();
        grid[0] = t_max;
        grid[n] = t_min;
        Ok(grid)
    }

    /// `t` drawn uniformly on `[eps, T]`.
    pub fn uniform_time<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.gen_range(self.early_stop..=self.horizon)
    }

    /// `t` drawn log-uniformly on `[eps, T]`.
    pub fn log_uniform_time<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = (self.early_stop.ln(), self.horizon.ln());
        rng.gen_range(lo..=hi).exp()
    }
}
