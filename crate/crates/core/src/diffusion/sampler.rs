//! Euler–Maruyama integration of the reverse-time SDE.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::field::VectorField;
use crate::seed::{self, Stream};
use crate::targets::EmpiricalMeasure;

use super::schedule::DiffusionSchedule;

/// Draws `n` points by running `dy = 2 s(y, t) dt + sqrt(2) dW` backwards
/// from `y ~ N(0, 2T I)` at `t = T` down to `t = eps` on the schedule grid.
///
/// Every sample owns an RNG stream derived from `(seed, index)`, so output
/// does not depend on thread count.
pub fn sample_reverse<F: VectorField + ?Sized>(
    field: &F,
    schedule: &DiffusionSchedule,
    n: usize,
    seed: u64,
) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(invalid("sample count must be positive"));
    }
    let grid = schedule.reverse_grid()?;
    let d = field.dim();
    let base = seed::stream(seed, Stream::Sample);
    let prior_sd = (2.0 * schedule.horizon).sqrt();
    let points = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(seed::derive(base, &[i as u64]));
            let mut y: Vec<f64> = (0..d)
                .map(|_| prior_sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect::<Vec<f64>>();
            for (step, w) in grid.windows(2).enumerate() {
                let (t, dt) = (w[0], w[0] - w[1]);
                let s = field.eval(&y, t);
                let noise = (2.0 * dt).sqrt();
                for (yi, si) in y.iter_mut().zip(&s) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *yi += 2.0 * dt * si + noise * z;
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::SamplerBlowup { step });
                }
            }
            Ok(y)
        })
        .collect::<Result<Vec<_>>>()?;
    EmpiricalMeasure::uniform(points)
}
