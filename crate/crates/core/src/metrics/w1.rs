//! Unified W1 reports and the estimator registry.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::registry::{Named, Registry};
use crate::targets::EmpiricalMeasure;

use super::dual::{dual_estimate, CriticConfig};
use super::transport::{ExactOptions, TransportProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum W1Method {
    ExactFlow,
    NeuralDual,
}

impl W1Method {
    pub fn tag(self) -> &'static str {
        match self {
            W1Method::ExactFlow => "exact-flow",
            W1Method::NeuralDual => "neural-dual",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct W1Report {
    pub value: f64,
    pub method: W1Method,
    /// Augmenting paths (exact) or critic iterations per restart (dual).
    pub iterations: usize,
    /// Across restarts; neural dual only.
    pub stderr: Option<f64>,
    pub duality_gap: Option<f64>,
    pub feasibility_residual: Option<f64>,
}

pub fn w1_exact(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<W1Report> {
    w1_exact_with(a, b, &ExactOptions::default())
}

pub fn w1_exact_with(a: &EmpiricalMeasure, b: &EmpiricalMeasure, opts: &ExactOptions) -> Result<W1Report> {
    let sol = TransportProblem::new(a, b)?.solve_with(opts)?;
    Ok(W1Report {
        value: sol.cost,
        method: W1Method::ExactFlow,
        iterations: sol.augmentations,
        stderr: None,
        duality_gap: Some(sol.duality_gap()),
        feasibility_residual: Some(sol.feasibility_residual),
    })
}

pub fn w1_dual(a: &EmpiricalMeasure, b: &EmpiricalMeasure, cfg: &CriticConfig, seed: u64) -> Result<W1Report> {
    let est = dual_estimate(a, b, cfg, seed)?;
    Ok(W1Report {
        value: est.mean,
        method: W1Method::NeuralDual,
        iterations: est.iterations,
        stderr: Some(est.stderr),
        duality_gap: None,
        feasibility_residual: None,
    })
}

/// A W1 estimator selectable by name.
pub trait W1Estimator: Named + Send + Sync {
    fn estimate(&self, a: &EmpiricalMeasure, b: &EmpiricalMeasure, seed: u64) -> Result<W1Report>;
}

#[derive(Debug, Clone, Default)]
pub struct ExactFlow(pub ExactOptions);

#[derive(Debug, Clone, Default)]
pub struct NeuralDual(pub CriticConfig);

impl Named for ExactFlow {
    fn name(&self) -> &'static str {
        W1Method::ExactFlow.tag()
    }
}

impl Named for NeuralDual {
    fn name(&self) -> &'static str {
        W1Method::NeuralDual.tag()
    }
}

impl W1Estimator for ExactFlow {
    fn estimate(&self, a: &EmpiricalMeasure, b: &EmpiricalMeasure, _seed: u64) -> Result<W1Report> {
        w1_exact_with(a, b, &self.0)
    }
}

impl W1Estimator for NeuralDual {
    fn estimate(&self, a: &EmpiricalMeasure, b: &EmpiricalMeasure, seed: u64) -> Result<W1Report> {
        w1_dual(a, b, &self.0, seed)
    }
}

pub fn w1_estimators(critic: CriticConfig) -> Registry<dyn W1Estimator> {
    let mut reg: Registry<dyn W1Estimator> = Registry::new("w1 estimator");
    reg.register(Box::new(ExactFlow::default()))
        .register(Box::new(NeuralDual(critic)));
    reg
}
