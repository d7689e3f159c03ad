//! Time-dependent vector fields on R^d.

/// A vector field `s(x, t)` on `R^d x [0, T]`.
///
/// Implementations must return vectors of length [`VectorField::dim`]. The
/// default divergence is a central finite difference with step `1e-5`;
/// fields that can do better (networks, analytic scores) override it.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64], t: f64) -> Vec<f64>;

    fn divergence(&self, x: &[f64], t: f64) -> f64 {
        fd_divergence(self, x, t, 1e-5)
    }
}

impl<F: VectorField + ?Sized> VectorField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        (**self).eval(x, t)
    }
    fn divergence(&self, x: &[f64], t: f64) -> f64 {
        (**self).divergence(x, t)
    }
}

impl<F: VectorField + ?Sized> VectorField for Box<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        (**self).eval(x, t)
    }
    fn divergence(&self, x: &[f64], t: f64) -> f64 {
        (**self).divergence(x, t)
    }
}

/// Trace of the central-difference Jacobian.
pub fn fd_divergence<F: VectorField + ?Sized>(field: &F, x: &[f64], t: f64, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut total = 0.0;
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let up = field.eval(&xp, t)[i];
        xp[i] = x[i] - h;
        let down = field.eval(&xp, t)[i];
        xp[i] = x[i];
        total += (up - down) / (2.0 * h);
    }
    total
}

/// Closure-backed field with an optional exact divergence.
pub struct FnField<F, D = fn(&[f64], f64) -> f64> {
    dim: usize,
    f: F,
    div: Option<D>,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], f64) -> Vec<f64> + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f, div: None }
    }
}

impl<F, D> FnField<F, D>
where
    F: Fn(&[f64], f64) -> Vec<f64> + Send + Sync,
    D: Fn(&[f64], f64) -> f64 + Send + Sync,
{
    pub fn with_divergence<D2>(self, div: D2) -> FnField<F, D2>
    where
        D2: Fn(&[f64], f64) -> f64 + Send + Sync,
    {
        FnField {
            dim: self.dim,
            f: self.f,
            div: Some(div),
        }
    }
}

impl<F, D> VectorField for FnField<F, D>
where
    F: Fn(&[f64], f64) -> Vec<f64> + Send + Sync,
    D: Fn(&[f64], f64) -> f64 + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        (self.f)(x, t)
    }
    fn divergence(&self, x: &[f64], t: f64) -> f64 {
        match &self.div {
            Some(d) => d(x, t),
            None => fd_divergence(self, x, t, 1e-5),
        }
    }
}

/// A weighted space-time sample `(x, t, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimePoint {
    pub x: Vec<f64>,
    pub t: f64,
    pub weight: f64,
}

impl SpaceTimePoint {
    pub fn new(x: Vec<f64>, t: f64, weight: f64) -> Self {
        Self { x, t, weight }
    }
}

pub(crate) fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
