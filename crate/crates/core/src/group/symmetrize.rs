use crate::error::{ensure_dim, invalid, Error, Result};
use crate::field::{sq_dist, SpaceTimePoint, VectorField};
use crate::targets::EmpiricalMeasure;

use super::rep::GroupRep;

/// Group average of a scalar function, `(1/|G|) sum_g gamma(A_g x)`.
pub fn symmetrize_function<F>(rep: &GroupRep, gamma: F, x: &[f64]) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    ensure_dim(rep.dim(), x.len(), "symmetrize_function point")?;
    let mut total = 0.0;
    for g in 0..rep.order() {
        let v = gamma(&rep.apply(g, x));
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("function value {v} on the orbit")));
        }
        total += v;
    }
    Ok(total / rep.order() as f64)
}

/// Data augmentation: every point is replaced by its orbit, each image
/// carrying `1/|G|` of the original weight. Orbits are stored contiguously
/// in group-element order.
pub fn augment(data: &EmpiricalMeasure, rep: &GroupRep) -> Result<EmpiricalMeasure> {
    ensure_dim(rep.dim(), data.dim(), "augment")?;
    let order = rep.order();
    let mut points = Vec::with_capacity(data.len() * order);
    let mut weights = Vec::with_capacity(data.len() * order);
    for (z, &w) in data.points().iter().zip(data.weights()) {
        for g in 0..order {
            points.push(rep.apply(g, z));
            weights.push(w / order as f64);
        }
    }
    EmpiricalMeasure::new(points, weights)
}

/// Output-averaged equivariant field
/// `s^G(x, t) = (1/|G|) sum_g A_g^T s(A_g x, t)`.
#[derive(Debug, Clone)]
pub struct EquivariantWrapper<F> {
    base: F,
    group: GroupRep,
}

impl<F: VectorField> EquivariantWrapper<F> {
    pub fn new(base: F, group: GroupRep) -> Result<Self> {
        ensure_dim(group.dim(), base.dim(), "equivariant wrapper")?;
        Ok(Self { base, group })
    }

    pub fn base(&self) -> &F {
        &self.base
    }

    pub fn group(&self) -> &GroupRep {
        &self.group
    }
}

pub fn equivariant_wrap<F: VectorField>(base: F, rep: &GroupRep) -> Result<EquivariantWrapper<F>> {
    EquivariantWrapper::new(base, rep.clone())
}

/// Evaluates the group average of `field` at `x` without building a wrapper.
pub fn symmetrize_field_at<F: VectorField + ?Sized>(
    field: &F,
    rep: &GroupRep,
    x: &[f64],
    t: f64,
) -> Vec<f64> {
    let mut acc = vec![0.0; rep.dim()];
    for g in 0..rep.order() {
        let out = field.eval(&rep.apply(g, x), t);
        for (a, v) in acc.iter_mut().zip(rep.apply_transpose(g, &out)) {
            *a += v;
        }
    }
    let n = rep.order() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

impl<F: VectorField> VectorField for EquivariantWrapper<F> {
    fn dim(&self) -> usize {
        self.group.dim()
    }

    fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        symmetrize_field_at(&self.base, &self.group, x, t)
    }

    /// `div s^G(x) = (1/|G|) sum_g div s(A_g x)` since conjugation by an
    /// orthogonal matrix preserves the Jacobian trace.
    fn divergence(&self, x: &[f64], t: f64) -> f64 {
        let total: f64 = (0..self.group.order())
            .map(|g| self.base.divergence(&self.group.apply(g, x), t))
            .sum();
        total / self.group.order() as f64
    }
}

/// Deviation from equivariance: weighted mean of `|s - S_G^E[s]|^2` over
/// the samples. The samples should come from a G-invariant space-time
/// measure (e.g. an augmented set).
pub fn dfe<F: VectorField + ?Sized>(
    field: &F,
    rep: &GroupRep,
    samples: &[SpaceTimePoint],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("DFE needs at least one sample"));
    }
    ensure_dim(rep.dim(), field.dim(), "dfe field")?;
    let mut num = 0.0;
    let mut den = 0.0;
    for p in samples {
        let s = field.eval(&p.x, p.t);
        let sym = symmetrize_field_at(field, rep, &p.x, p.t);
        num += p.weight * sq_dist(&s, &sym);
        den += p.weight;
    }
    if !(den > 0.0) {
        return Err(invalid("DFE sample weights must have positive total"));
    }
    Ok(num / den)
}

/// Largest `|s(A_g x, t) - A_g s(x, t)|` over all group elements and the
/// given points.
pub fn equivariance_residual<F: VectorField + ?Sized>(
    field: &F,
    rep: &GroupRep,
    points: &[(Vec<f64>, f64)],
) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, t) in points {
        let s = field.eval(x, *t);
        for g in 0..rep.order() {
            let lhs = field.eval(&rep.apply(g, x), *t);
            let rhs = rep.apply(g, &s);
            worst = worst.max(sq_dist(&lhs, &rhs).sqrt());
        }
    }
    worst
}
