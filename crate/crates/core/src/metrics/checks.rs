//! Symmetrization contraction and the rotation two-sample test.

use rand::Rng;

use crate::error::{invalid, Result};
use crate::group::{augment, GroupRep};
use crate::seed;
use crate::targets::EmpiricalMeasure;

use super::transport::w1_exact_value;

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    /// `W1(S^G[eta], pi_ref)`
    pub augmented: f64,
    /// `W1(eta, pi_ref)`
    pub plain: f64,
    /// `2 W1(pi_ref, S^G[pi_ref])`
    pub slack: f64,
    pub passed: bool,
}

/// Checks that augmenting `eta` does not move it away from a reference
/// sample of a G-invariant law, up to the reference's own asymmetry.
pub fn contraction_check(eta: &EmpiricalMeasure, reference: &EmpiricalMeasure, rep: &GroupRep) -> Result<ContractionReport> {
    let aug = augment(eta, rep)?;
    let augmented = w1_exact_value(&aug, reference)?;
    let plain = w1_exact_value(eta, reference)?;
    let slack = 2.0 * w1_exact_value(reference, &augment(reference, rep)?)?;
    Ok(ContractionReport {
        augmented,
        plain,
        slack,
        passed: augmented <= plain + 1e-9 + slack,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    /// `W1(X, S^G[X])` for the observed cloud.
    pub statistic: f64,
    /// 95th percentile of the randomization distribution.
    pub threshold: f64,
    pub null: Vec<f64>,
    pub passed: bool,
}

/// Randomization test of G-invariance for a sample cloud.
///
/// Under invariance each point is uniform on its orbit given the orbit, so
/// re-drawing every point's group element yields exchangeable copies of
/// the statistic `W1(X, S^G[X])`. The observed value passes when it does
/// not exceed the 95th percentile of `n_null` such copies.
pub fn invariance_test(samples: &EmpiricalMeasure, rep: &GroupRep, n_null: usize, seed: u64) -> Result<InvarianceReport> {
    if n_null < 19 {
        return Err(invalid("need at least 19 randomizations for a 95% threshold"));
    }
    let orbit_cloud = augment(samples, rep)?;
    let statistic = w1_exact_value(samples, &orbit_cloud)?;
    let mut null = Vec::with_capacity(n_null);
    for b in 0..n_null {
        let mut rng = seed::rng(seed::derive(seed, &[b as u64]));
        let moved: Vec<Vec<f64>> = samples
            .points()
            .iter()
            .map(|x| rep.apply(rng.gen_range(0..rep.order()), x))
            .collect();
        let y = EmpiricalMeasure::new(moved, samples.weights().to_vec())?;
        null.push(w1_exact_value(&y, &orbit_cloud)?);
    }
    let threshold = percentile(&null, 0.95);
    Ok(InvarianceReport {
        statistic,
        threshold,
        null,
        passed: statistic <= threshold,
    })
}

/// Empirical quantile with the `ceil(q n)`-th order statistic.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[k - 1]
}
