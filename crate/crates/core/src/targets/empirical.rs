use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{invalid, Error, Result};

/// Tolerance on the total mass of an empirical measure.
pub const MASS_TOL: f64 = 1e-12;

/// A finite weighted point set in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("an empirical measure needs at least one point"));
        }
        if points.len() != weights.len() {
            return Err(Error::Dimension {
                expected: points.len(),
                got: weights.len(),
                context: "empirical measure weights",
            });
        }
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(invalid("all points must share one positive dimension"));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("empirical measure point".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(invalid("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL * (points.len() as f64).max(1.0) {
            return Err(invalid(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self {
            dim,
            points,
            weights,
        })
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|&w| w == w0)
    }

    pub fn expectation<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.expectation(|p| p[i]))
            .collect()
    }

    /// Index drawn with probability proportional to its weight.
    pub fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.is_uniform() {
            return rng.gen_range(0..self.len());
        }
        let u: f64 = rng.gen::<f64>();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.len() - 1
    }

    /// `n` i.i.d. draws (with replacement) as a uniform measure.
    pub fn resample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(invalid("resample size must be positive"));
        }
        let pts = (0..n)
            .map(|_| self.points[self.draw_index(rng)].clone())
            .collect();
        Self::uniform(pts)
    }

    /// Uniform subsample without replacement of at most `n` points; returns
    /// the measure itself when it is already small enough and uniform.
    pub fn subsample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Self> {
        if self.len() <= n && self.is_uniform() {
            return Ok(self.clone());
        }
        if !self.is_uniform() {
            return self.resample(n, rng);
        }
        let idx = rand::seq::index::sample(rng, self.len(), n);
        let mut idx: Vec<usize> = idx.into_iter().collect();
        idx.sort_unstable();
        Self::uniform(idx.into_iter().map(|i| self.points[i].clone()).collect())
    }

    /// CSV with header `x1,..,xd,weight` and one point per row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
        header.push("weight".into());
        w.write_record(&header)?;
        for (p, wt) in self.points.iter().zip(&self.weights) {
            let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            row.push(wt.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let dim = header.len().checked_sub(1).filter(|&d| d > 0).ok_or_else(|| {
            invalid("empirical CSV needs at least one coordinate column and a weight column")
        })?;
        if header.get(dim) != Some("weight") {
            return Err(invalid("last CSV column must be `weight`"));
        }
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| invalid(format!("bad number `{s}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            weights.push(vals[dim]);
            points.push(vals[..dim].to_vec());
        }
        Self::new(points, weights)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
