use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Orthogonality residual allowed when a representation is constructed.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;
/// Closure / inverse residual allowed when a representation is constructed.
pub const CLOSURE_TOL: f64 = 1e-9;
pub const IDENTITY_TOL: f64 = 1e-12;

/// A finite group acting linearly on `R^d` by orthogonal matrices.
///
/// Elements are row-major `d x d` matrices in a fixed canonical order; the
/// Haar measure is the uniform weight `1/|G|`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRep {
    name: String,
    dim: usize,
    elements: Vec<Vec<f64>>,
    identity_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: &'static str,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheckReport {
    pub items: Vec<CheckItem>,
}

impl GroupCheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    pub fn item(&self, name: &str) -> Option<&CheckItem> {
        self.items.iter().find(|i| i.name == name)
    }
}

fn matmul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
    out
}

fn transpose(a: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[j * d + i] = a[i * d + j];
        }
    }
    out
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

/// Rounds entries within `1e-15` of `0` or `±1` to those values so that
/// right-angle rotations act exactly.
fn snap(v: f64) -> f64 {
    for target in [0.0, 1.0, -1.0] {
        if (v - target).abs() < 1e-15 {
            return target;
        }
    }
    v
}

impl GroupRep {
    /// Builds and validates a representation (orthogonality, closure,
    /// inverses, identity).
    pub fn new(name: impl Into<String>, dim: usize, elements: Vec<Vec<f64>>) -> Result<Self> {
        let rep = Self::unchecked(name, dim, elements)?;
        let report = rep.check();
        if !report.passed() {
            let failed: Vec<String> = report
                .items
                .iter()
                .filter(|i| !i.passed)
                .map(|i| format!("{} (residual {:.3e})", i.name, i.residual))
                .collect();
            return Err(invalid(format!(
                "matrices do not form an orthogonal group: {}",
                failed.join(", ")
            )));
        }
        Ok(rep)
    }

    /// Builds a representation without validating group axioms, e.g. to feed
    /// [`GroupRep::check`] a deliberately broken set.
    pub fn unchecked(name: impl Into<String>, dim: usize, elements: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("group dimension must be positive"));
        }
        if elements.is_empty() {
            return Err(invalid("a group needs at least one element"));
        }
        if let Some(bad) = elements.iter().find(|m| m.len() != dim * dim) {
            return Err(Error::Dimension {
                expected: dim * dim,
                got: bad.len(),
                context: "group element matrix",
            });
        }
        let id = identity(dim);
        let identity_index = elements
            .iter()
            .enumerate()
            .min_by(|a, b| max_abs_diff(a.1, &id).total_cmp(&max_abs_diff(b.1, &id)))
            .map(|(i, _)| i)
            .unwrap();
        Ok(Self {
            name: name.into(),
            dim,
            elements,
            identity_index,
        })
    }

    /// Rotations of the plane by `2 pi j / k`, `j = 0..k`, identity first.
    pub fn cyclic_rotations(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("cyclic group order must be at least 1"));
        }
        let elements = (0..k)
            .map(|j| {
                let angle = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
                let (s, c) = (snap(angle.sin()), snap(angle.cos()));
                vec![c, -s, s, c]
            })
            .collect();
        Self::new(format!("C{k}"), 2, elements)
    }

    pub fn trivial(dim: usize) -> Result<Self> {
        Self::new("trivial", dim, vec![identity(dim)])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn identity_index(&self) -> usize {
        self.identity_index
    }

    pub fn elements(&self) -> &[Vec<f64>] {
        &self.elements
    }

    pub fn element(&self, g: usize) -> &[f64] {
        &self.elements[g]
    }

    /// `A_g x`
    pub fn apply(&self, g: usize, x: &[f64]) -> Vec<f64> {
        let a = &self.elements[g];
        let d = self.dim;
        (0..d)
            .map(|i| (0..d).map(|j| a[i * d + j] * x[j]).sum())
            .collect()
    }

    /// `A_g^T v`
    pub fn apply_transpose(&self, g: usize, v: &[f64]) -> Vec<f64> {
        let a = &self.elements[g];
        let d = self.dim;
        (0..d)
            .map(|j| (0..d).map(|i| a[i * d + j] * v[i]).sum())
            .collect()
    }

    /// Orbit `{A_g x}` in element order.
    pub fn orbit(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..self.order()).map(|g| self.apply(g, x)).collect()
    }

    fn closest(&self, m: &[f64]) -> f64 {
        self.elements
            .iter()
            .map(|e| max_abs_diff(e, m))
            .fold(f64::INFINITY, f64::min)
    }

    /// Worst-case residual of every group axiom.
    pub fn check(&self) -> GroupCheckReport {
        let d = self.dim;
        let id = identity(d);
        let orth = self
            .elements
            .iter()
            .map(|a| max_abs_diff(&matmul(&transpose(a, d), a, d), &id))
            .fold(0.0, f64::max);
        let mut closure: f64 = 0.0;
        for a in &self.elements {
            for b in &self.elements {
                closure = closure.max(self.closest(&matmul(a, b, d)));
            }
        }
        let inverse = self
            .elements
            .iter()
            .map(|a| self.closest(&transpose(a, d)))
            .fold(0.0, f64::max);
        let ident = max_abs_diff(&self.elements[self.identity_index], &id);
        let item = |name, residual: f64, tolerance| CheckItem {
            name,
            passed: residual <= tolerance,
            residual,
            tolerance,
        };
        GroupCheckReport {
            items: vec![
                item("orthogonality", orth, ORTHOGONALITY_TOL),
                item("closure", closure, CLOSURE_TOL),
                item("inverse", inverse, CLOSURE_TOL),
                item("identity", ident, IDENTITY_TOL),
            ],
        }
    }

    /// Index `k` with `A_k = A_a A_b`.
    pub fn compose(&self, a: usize, b: usize) -> usize {
        let prod = matmul(&self.elements[a], &self.elements[b], self.dim);
        (0..self.order())
            .min_by(|&i, &j| {
                max_abs_diff(&self.elements[i], &prod).total_cmp(&max_abs_diff(&self.elements[j], &prod))
            })
            .unwrap()
    }
}

/// Group selection as written in config files, e.g.
/// `group = { kind = "cyclic", k = 4 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GroupSpec {
    Cyclic { k: usize },
    Trivial { dim: usize },
    /// Explicit list of row-major matrices, each given as a list of rows.
    Matrices {
        #[serde(default = "default_name")]
        name: String,
        elements: Vec<Vec<Vec<f64>>>,
    },
}

fn default_name() -> String {
    "custom".into()
}

impl Default for GroupSpec {
    fn default() -> Self {
        GroupSpec::Cyclic { k: 4 }
    }
}

impl GroupSpec {
    pub fn build(&self) -> Result<GroupRep> {
        match self {
            GroupSpec::Cyclic { k } => GroupRep::cyclic_rotations(*k),
            GroupSpec::Trivial { dim } => GroupRep::trivial(*dim),
            GroupSpec::Matrices { name, elements } => {
                let dim = elements.first().map(|m| m.len()).unwrap_or(0);
                let flat = elements
                    .iter()
                    .map(|rows| {
                        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                            return Err(invalid("group matrices must all be square of one size"));
                        }
                        Ok(rows.iter().flatten().copied().collect())
                    })
                    .collect::<Result<Vec<_>>>()?;
                GroupRep::new(name.clone(), dim, flat)
            }
        }
    }
}
