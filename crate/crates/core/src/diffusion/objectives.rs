//! Denoising, implicit and explicit score-matching objectives.
//!
//! An objective first draws a set of [`LossTerm`]s (points, times, weights
//! and regression targets). The same terms can then be evaluated on any
//! [`VectorField`] or turned into a differentiable [`LossGraph`] for a
//! [`ScoreModel`].

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, invalid, Error, Result};
use crate::field::{sq_dist, sq_norm, SpaceTimePoint, VectorField};
use crate::ndiff::{LossGraph, Probe, ProbeOutput};
use crate::registry::{Named, Registry};
use crate::seed::Rng as SeedRng;
use crate::targets::{mollify_empirical, EmpiricalMeasure, GaussianMixture};

use super::model::{ScoreHead, ScoreModel};
use super::schedule::DiffusionSchedule;

/// `x0 + sqrt(2t) z` with `z ~ N(0, I)`.
pub fn perturb<R: Rng + ?Sized>(x0: &[f64], t: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(invalid(format!("perturbation time must be positive, got {t}")));
    }
    let sd = (2.0 * t).sqrt();
    Ok(x0
        .iter()
        .map(|v| v + sd * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Score of the forward kernel `N(x0, 2t I)` at `x`: `-(x - x0) / (2t)`.
pub fn conditional_score(x: &[f64], x0: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(invalid(format!("kernel time must be positive, got {t}")));
    }
    ensure_dim(x0.len(), x.len(), "conditional_score")?;
    Ok(x.iter().zip(x0).map(|(a, b)| -(a - b) / (2.0 * t)).collect())
}

/// Time sampling and per-sample weighting of the denoising objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Uniform `t` on `[eps, T]`, unweighted: a Monte Carlo estimate of the
    /// time integral.
    Theory,
    /// Log-uniform `t` with per-sample factor `2t` (noise prediction).
    NoisePrediction,
}

impl Weighting {
    fn draw<R: Rng + ?Sized>(self, schedule: &DiffusionSchedule, batch: usize, rng: &mut R) -> (f64, f64) {
        match self {
            Weighting::Theory => {
                let t = schedule.uniform_time(rng);
                (t, (schedule.horizon - schedule.early_stop) / batch as f64)
            }
            Weighting::NoisePrediction => {
                let t = schedule.log_uniform_time(rng);
                (t, 2.0 * t / batch as f64)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TermKind {
    /// `|s(x, t) - target|^2`
    Regression(Vec<f64>),
    /// `|s(x, t)|^2 + 2 div s(x, t)`
    Implicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub x: Vec<f64>,
    pub t: f64,
    pub weight: f64,
    pub kind: TermKind,
}

/// A loss `sum_j w_j f_j(s)` over a fixed set of terms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossTerms {
    pub terms: Vec<LossTerm>,
}

impl LossTerms {
    pub fn new(terms: Vec<LossTerm>) -> Self {
        Self { terms }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn needs_divergence(&self) -> bool {
        self.terms.iter().any(|t| t.kind == TermKind::Implicit)
    }

    /// Per-term values `f_j(s)` (unweighted).
    pub fn term_values<F: VectorField + ?Sized>(&self, field: &F) -> Result<Vec<f64>> {
        self.terms
            .iter()
            .map(|term| {
                let s = field.eval(&term.x, term.t);
                let v = match &term.kind {
                    TermKind::Regression(target) => sq_dist(&s, target),
                    TermKind::Implicit => {
                        let div = field.divergence(&term.x, term.t);
                        if !div.is_finite() {
                            return Err(Error::NonFinite(format!("divergence at t = {}", term.t)));
                        }
                        sq_norm(&s) + 2.0 * div
                    }
                };
                Ok(v)
            })
            .collect()
    }

    pub fn value<F: VectorField + ?Sized>(&self, field: &F) -> Result<f64> {
        Ok(self
            .term_values(field)?
            .iter()
            .zip(&self.terms)
            .map(|(v, t)| t.weight * v)
            .sum())
    }
}

fn normalized_weights(points: &[SpaceTimePoint]) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(invalid("evaluation set is empty"));
    }
    let total: f64 = points.iter().map(|p| p.weight).sum();
    if !(total > 0.0) || points.iter().any(|p| !(p.weight >= 0.0)) {
        return Err(invalid("evaluation weights must be non-negative with positive total"));
    }
    Ok(points.iter().map(|p| p.weight / total).collect())
}

/// Minibatch of the denoising objective: `x' ~ data`, `t` per the
/// weighting, `x = x' + sqrt(2t) z`, target the conditional score.
pub fn dsm_terms<R: Rng + ?Sized>(
    data: &EmpiricalMeasure,
    schedule: &DiffusionSchedule,
    batch: usize,
    weighting: Weighting,
    rng: &mut R,
) -> Result<LossTerms> {
    if batch == 0 {
        return Err(invalid("batch size must be positive"));
    }
    schedule.validate()?;
    let idx = minibatch_indices(data, batch, rng);
    idx.into_iter()
        .map(|i| {
            let x0 = &data.points()[i];
            let (t, weight) = weighting.draw(schedule, batch, rng);
            let x = perturb(x0, t, rng)?;
            let target = conditional_score(&x, x0, t)?;
            Ok(LossTerm {
                x,
                t,
                weight,
                kind: TermKind::Regression(target),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(LossTerms::new)
}

/// Denoising terms at one fixed time `t`, weights `1/n`.
pub fn dsm_terms_at_time<R: Rng + ?Sized>(
    data: &EmpiricalMeasure,
    t: f64,
    n: usize,
    rng: &mut R,
) -> Result<LossTerms> {
    if n == 0 {
        return Err(invalid("term count must be positive"));
    }
    (0..n)
        .map(|_| {
            let x0 = &data.points()[data.draw_index(rng)];
            let x = perturb(x0, t, rng)?;
            let target = conditional_score(&x, x0, t)?;
            Ok(LossTerm {
                x,
                t,
                weight: 1.0 / n as f64,
                kind: TermKind::Regression(target),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(LossTerms::new)
}

/// Implicit score-matching terms on a fixed evaluation set (weights
/// normalized to sum to one).
pub fn ism_terms(points: &[SpaceTimePoint]) -> Result<LossTerms> {
    let w = normalized_weights(points)?;
    Ok(LossTerms::new(
        points
            .iter()
            .zip(w)
            .map(|(p, weight)| LossTerm {
                x: p.x.clone(),
                t: p.t,
                weight,
                kind: TermKind::Implicit,
            })
            .collect(),
    ))
}

/// Explicit score-matching terms against an analytic target whose law at
/// time `t` is `target_at_time(t)`.
pub fn esm_terms<F>(target_at_time: F, points: &[SpaceTimePoint]) -> Result<LossTerms>
where
    F: Fn(f64) -> Result<GaussianMixture>,
{
    let w = normalized_weights(points)?;
    points
        .iter()
        .zip(w)
        .map(|(p, weight)| {
            let target = target_at_time(p.t)?;
            ensure_dim(target.dim(), p.x.len(), "esm target")?;
            Ok(LossTerm {
                x: p.x.clone(),
                t: p.t,
                weight,
                kind: TermKind::Regression(target.score(&p.x)),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(LossTerms::new)
}

fn minibatch_indices<R: Rng + ?Sized>(data: &EmpiricalMeasure, batch: usize, rng: &mut R) -> Vec<usize> {
    if batch <= data.len() && data.is_uniform() {
        rand::seq::index::sample(rng, data.len(), batch).into_vec()
    } else {
        (0..batch).map(|_| data.draw_index(rng)).collect()
    }
}

/// A [`LossGraph`] over the terms for one score model's net.
pub struct ScoreLossGraph {
    head: ScoreHead,
    terms: LossTerms,
    probes: Vec<Probe>,
    per_point: usize,
}

impl ScoreLossGraph {
    pub fn new(head: &ScoreHead, terms: LossTerms) -> Self {
        let with_div = terms.needs_divergence();
        let probes = terms
            .terms
            .iter()
            .flat_map(|t| head.probes(&t.x, t.t, with_div))
            .collect();
        Self {
            head: head.clone(),
            terms,
            probes,
            per_point: head.probes_per_point(),
        }
    }

    pub fn terms(&self) -> &LossTerms {
        &self.terms
    }
}

impl LossGraph for ScoreLossGraph {
    fn probes(&self) -> &[Probe] {
        &self.probes
    }

    fn evaluate(&self, outputs: &[ProbeOutput]) -> Result<(f64, Vec<ProbeOutput>)> {
        ensure_dim(self.probes.len(), outputs.len(), "score loss outputs")?;
        let mut loss = 0.0;
        let mut adjoints = Vec::with_capacity(outputs.len());
        for (term, outs) in self.terms.terms.iter().zip(outputs.chunks(self.per_point)) {
            let (s, div) = self.head.assemble(term.t, outs);
            let (value, s_bar, div_bar) = match &term.kind {
                TermKind::Regression(target) => {
                    let r: Vec<f64> = s.iter().zip(target).map(|(a, b)| a - b).collect();
                    let bar = r.iter().map(|v| 2.0 * term.weight * v).collect::<Vec<_>>();
                    (sq_norm(&r), bar, div.map(|_| 0.0))
                }
                TermKind::Implicit => {
                    let div = div.ok_or_else(|| invalid("implicit term without tangents"))?;
                    if !div.is_finite() {
                        return Err(Error::NonFinite("divergence".into()));
                    }
                    let bar = s.iter().map(|v| 2.0 * term.weight * v).collect::<Vec<_>>();
                    (sq_norm(&s) + 2.0 * div, bar, Some(2.0 * term.weight))
                }
            };
            loss += term.weight * value;
            adjoints.extend(self.head.scatter(term.t, &s_bar, div_bar));
        }
        Ok((loss, adjoints))
    }
}

impl ScoreModel {
    pub fn loss_graph(&self, terms: LossTerms) -> ScoreLossGraph {
        ScoreLossGraph::new(self.head(), terms)
    }
}

/// Denoising loss graph for one minibatch drawn from `data`.
pub fn dsm_loss(
    model: &ScoreModel,
    data: &EmpiricalMeasure,
    schedule: &DiffusionSchedule,
    batch: usize,
    seed: u64,
    weighting: Weighting,
) -> Result<ScoreLossGraph> {
    if data.is_empty() {
        return Err(invalid("empty data"));
    }
    let terms = dsm_terms(data, schedule, batch, weighting, &mut crate::seed::rng(seed))?;
    Ok(model.loss_graph(terms))
}

/// Implicit score-matching loss graph on a fixed evaluation set.
pub fn ism_loss(model: &ScoreModel, points: &[SpaceTimePoint]) -> Result<ScoreLossGraph> {
    Ok(model.loss_graph(ism_terms(points)?))
}

/// Explicit score-matching loss graph against `target_at_time`.
pub fn esm_loss<F>(model: &ScoreModel, target_at_time: F, points: &[SpaceTimePoint]) -> Result<ScoreLossGraph>
where
    F: Fn(f64) -> Result<GaussianMixture>,
{
    Ok(model.loss_graph(esm_terms(target_at_time, points)?))
}

/// Where training draws from: an empirical data set or an analytic target.
#[derive(Debug, Clone)]
pub enum TrainingSource {
    Data(EmpiricalMeasure),
    Target(GaussianMixture),
}

impl TrainingSource {
    pub fn dim(&self) -> usize {
        match self {
            TrainingSource::Data(d) => d.dim(),
            TrainingSource::Target(m) => m.dim(),
        }
    }

    /// Effective number of training points (`None` for analytic targets).
    pub fn len(&self) -> Option<usize> {
        match self {
            TrainingSource::Data(d) => Some(d.len()),
            TrainingSource::Target(_) => None,
        }
    }

    /// Clean minibatch: without replacement when `batch <= N`, with
    /// replacement otherwise; fresh draws for an analytic target.
    pub fn draw_batch<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        match self {
            TrainingSource::Data(d) => Ok(minibatch_indices(d, batch, rng)
                .into_iter()
                .map(|i| d.points()[i].clone())
                .collect()),
            TrainingSource::Target(m) => Ok(m.sample_with(batch, rng)?.points().to_vec()),
        }
    }

    /// The law at diffusion time `t`: the heat-mollified empirical measure
    /// or the diffused mixture.
    pub fn law_at(&self, t: f64) -> Result<GaussianMixture> {
        match self {
            TrainingSource::Data(d) => mollify_empirical(d, t),
            TrainingSource::Target(m) => m.diffuse(t),
        }
    }
}

/// A score-matching objective selectable by name.
pub trait Objective: Named + Send + Sync {
    fn draw(
        &self,
        source: &TrainingSource,
        schedule: &DiffusionSchedule,
        batch: usize,
        weighting: Weighting,
        rng: &mut SeedRng,
    ) -> Result<LossTerms>;
}

pub struct Dsm;
pub struct Ism;
pub struct Esm;

impl Named for Dsm {
    fn name(&self) -> &'static str {
        "dsm"
    }
}
impl Named for Ism {
    fn name(&self) -> &'static str {
        "ism"
    }
}
impl Named for Esm {
    fn name(&self) -> &'static str {
        "esm"
    }
}

impl Objective for Dsm {
    fn draw(
        &self,
        source: &TrainingSource,
        schedule: &DiffusionSchedule,
        batch: usize,
        weighting: Weighting,
        rng: &mut SeedRng,
    ) -> Result<LossTerms> {
        match source {
            TrainingSource::Data(d) => dsm_terms(d, schedule, batch, weighting, rng),
            TrainingSource::Target(m) => {
                let d = m.sample_with(batch, rng)?;
                dsm_terms(&d, schedule, batch, weighting, rng)
            }
        }
    }
}

fn perturbed_points<R: Rng + ?Sized>(
    source: &TrainingSource,
    schedule: &DiffusionSchedule,
    batch: usize,
    weighting: Weighting,
    rng: &mut R,
) -> Result<Vec<SpaceTimePoint>> {
    if batch == 0 {
        return Err(invalid("batch size must be positive"));
    }
    schedule.validate()?;
    source
        .draw_batch(batch, rng)?
        .into_iter()
        .map(|x0| {
            let (t, w) = weighting.draw(schedule, batch, rng);
            Ok(SpaceTimePoint::new(perturb(&x0, t, rng)?, t, w))
        })
        .collect()
}

/// Rescales normalized term weights back to the weighting's absolute scale.
fn rescale(mut terms: LossTerms, points: &[SpaceTimePoint]) -> LossTerms {
    for (term, p) in terms.terms.iter_mut().zip(points) {
        term.weight = p.weight;
    }
    terms
}

impl Objective for Ism {
    fn draw(
        &self,
        source: &TrainingSource,
        schedule: &DiffusionSchedule,
        batch: usize,
        weighting: Weighting,
        rng: &mut SeedRng,
    ) -> Result<LossTerms> {
        let pts = perturbed_points(source, schedule, batch, weighting, rng)?;
        Ok(rescale(ism_terms(&pts)?, &pts))
    }
}

impl Objective for Esm {
    fn draw(
        &self,
        source: &TrainingSource,
        schedule: &DiffusionSchedule,
        batch: usize,
        weighting: Weighting,
        rng: &mut SeedRng,
    ) -> Result<LossTerms> {
        let pts = perturbed_points(source, schedule, batch, weighting, rng)?;
        let terms = esm_terms(|t| source.law_at(t), &pts)?;
        Ok(rescale(terms, &pts))
    }
}

pub fn objectives() -> Registry<dyn Objective> {
    let mut reg: Registry<dyn Objective> = Registry::new("objective");
    reg.register(Box::new(Dsm))
        .register(Box::new(Ism))
        .register(Box::new(Esm));
    reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{ScoreNetConfig, TimeFeatures};
    use crate::field::FnField;
    use crate::group::GroupRep;
    use crate::ndiff::{finite_difference_gradient, loss_backward, loss_value};
    use crate::seed;

    fn small_model(group: Option<GroupRep>, seed: u64) -> ScoreModel {
        let cfg = ScoreNetConfig {
            hidden: vec![8, 8, 8],
            ..Default::default()
        };
        let f = TimeFeatures {
            horizon: 10.0,
            early_stop: 1e-2,
        };
        ScoreModel::build(2, &cfg, group, f, seed).unwrap()
    }

    #[test]
    fn perturb_is_seeded_and_shrinks_with_t() {
        let x0 = [1.0, -2.0];
        let a = perturb(&x0, 0.3, &mut seed::rng(1)).unwrap();
        let b = perturb(&x0, 0.3, &mut seed::rng(1)).unwrap();
        assert_eq!(a, b);
        let tiny = perturb(&x0, 1e-16, &mut seed::rng(1)).unwrap();
        assert!(sq_dist(&tiny, &x0).sqrt() < 1e-7);
        assert!(perturb(&x0, 0.0, &mut seed::rng(1)).is_err());
    }

    #[test]
    fn perturb_variance_is_two_t() {
        let mut rng = seed::rng(17);
        let n = 100_000;
        let mut sums = [0.0; 2];
        for _ in 0..n {
            let x = perturb(&[0.0, 0.0], 0.5, &mut rng).unwrap();
            sums[0] += x[0] * x[0];
            sums[1] += x[1] * x[1];
        }
        for s in sums {
            assert!((s / n as f64 - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn conditional_score_values() {
        assert_eq!(conditional_score(&[1.0, 0.0], &[0.0, 0.0], 0.5).unwrap(), vec![-1.0, 0.0]);
        assert_eq!(conditional_score(&[2.0, 3.0], &[2.0, 3.0], 0.1).unwrap(), vec![0.0, 0.0]);
        assert!(conditional_score(&[1.0], &[0.0], -1.0).is_err());
        // finite differences of the log kernel
        let (x, x0, t) = ([0.4, -1.3], [1.0, 0.5], 0.7);
        let logk = |y: &[f64]| -sq_dist(y, &x0) / (4.0 * t);
        let s = conditional_score(&x, &x0, t).unwrap();
        for i in 0..2 {
            let mut up = x;
            let mut dn = x;
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            assert!(((logk(&up) - logk(&dn)) / 2e-6 - s[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn teacher_forced_dsm_is_zero() {
        let data = EmpiricalMeasure::uniform(vec![vec![0.5, 0.5], vec![-1.0, 2.0]]).unwrap();
        let sched = DiffusionSchedule::default();
        let terms = dsm_terms(&data, &sched, 16, Weighting::Theory, &mut seed::rng(3)).unwrap();
        for term in &terms.terms {
            let target = match &term.kind {
                TermKind::Regression(t) => t.clone(),
                TermKind::Implicit => unreachable!(),
            };
            let single = LossTerms::new(vec![term.clone()]);
            let oracle = FnField::new(2, move |_x: &[f64], _t| target.clone());
            assert_eq!(single.value(&oracle).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_point_dsm_is_zero_for_the_kernel_score() {
        let z = vec![1.5, -0.5];
        let data = EmpiricalMeasure::uniform(vec![z.clone()]).unwrap();
        let sched = DiffusionSchedule::default();
        let terms = dsm_terms(&data, &sched, 64, Weighting::NoisePrediction, &mut seed::rng(3)).unwrap();
        let field = FnField::new(2, move |x: &[f64], t| conditional_score(x, &z, t).unwrap());
        assert!(terms.value(&field).unwrap().abs() < 1e-18);
    }

    #[test]
    fn gaussian_dsm_gap_matches_closed_form() {
        // E|grad log eta^{x'} - grad log eta^pi|^2 = d (1/(2t) - 1/(1+2t))
        let t = 0.25;
        let n = 100_000;
        let target = GaussianMixture::standard_normal(2);
        let mut rng = seed::rng(21);
        let data = target.sample_with(n, &mut rng).unwrap();
        let terms = dsm_terms_at_time(&data, t, n, &mut rng).unwrap();
        let field = FnField::new(2, move |x: &[f64], t| {
            x.iter().map(|v| -v / (1.0 + 2.0 * t)).collect::<Vec<_>>()
        });
        let vals = terms.term_values(&field).unwrap();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        let expect = 2.0 * (1.0 / (2.0 * t) - 1.0 / (1.0 + 2.0 * t));
        assert!((mean - expect).abs() < 3.0 * se, "{mean} vs {expect} (se {se})");
    }

    #[test]
    fn ism_of_zero_and_identity_fields() {
        let pts = vec![
            SpaceTimePoint::new(vec![1.0, 2.0], 0.1, 1.0),
            SpaceTimePoint::new(vec![-3.0, 0.5], 0.7, 3.0),
        ];
        let terms = ism_terms(&pts).unwrap();
        let zero = FnField::new(2, |_x: &[f64], _t| vec![0.0, 0.0]).with_divergence(|_x: &[f64], _t| 0.0);
        assert_eq!(terms.value(&zero).unwrap(), 0.0);
        let id = FnField::new(2, |x: &[f64], _t| x.to_vec()).with_divergence(|_x: &[f64], _t| 2.0);
        let expect = 0.25 * (5.0 + 4.0) + 0.75 * (9.25 + 4.0);
        assert!((terms.value(&id).unwrap() - expect).abs() < 1e-14);
        assert!(ism_terms(&[]).is_err());
    }

    #[test]
    fn esm_of_exact_and_zero_fields() {
        let m = GaussianMixture::four_corners(1.0);
        let mut rng = seed::rng(4);
        let pts: Vec<SpaceTimePoint> = (0..50)
            .map(|_| {
                SpaceTimePoint::new(
                    vec![rng.gen_range(-7.0..7.0), rng.gen_range(-7.0..7.0)],
                    rng.gen_range(0.01..3.0),
                    rng.gen_range(0.1..1.0),
                )
            })
            .collect();
        let terms = esm_terms(|t| m.diffuse(t), &pts).unwrap();
        let exact = crate::targets::DiffusedScore(m.clone());
        assert!(terms.value(&exact).unwrap() < 1e-12);
        let zero = FnField::new(2, |_x: &[f64], _t| vec![0.0, 0.0]);
        let total: f64 = pts.iter().map(|p| p.weight).sum();
        let direct: f64 = pts
            .iter()
            .map(|p| p.weight / total * sq_norm(&m.diffuse(p.t).unwrap().score(&p.x)))
            .sum();
        assert!((terms.value(&zero).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn graph_value_matches_field_value() {
        let c4 = GroupRep::cyclic_rotations(4).unwrap();
        let data = GaussianMixture::four_corners(1.0).sample(20, 1).unwrap();
        let sched = DiffusionSchedule {
            horizon: 10.0,
            early_stop: 1e-2,
            ..Default::default()
        };
        for model in [small_model(None, 1), small_model(Some(c4), 2)] {
            for obj in objectives().iter() {
                let src = TrainingSource::Data(data.clone());
                let terms = obj
                    .draw(&src, &sched, 8, Weighting::NoisePrediction, &mut seed::rng(5))
                    .unwrap();
                let via_field = terms.value(&model).unwrap();
                let via_graph = loss_value(model.net(), &model.loss_graph(terms)).unwrap();
                assert!(
                    (via_field - via_graph).abs() <= 1e-12 * (1.0 + via_field.abs()),
                    "{}: {via_field} vs {via_graph}",
                    obj.name()
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_for_every_objective() {
        let c4 = GroupRep::cyclic_rotations(4).unwrap();
        let data = GaussianMixture::four_corners(1.0).sample(10, 2).unwrap();
        let sched = DiffusionSchedule {
            horizon: 10.0,
            early_stop: 1e-2,
            ..Default::default()
        };
        for model in [small_model(None, 3), small_model(Some(c4), 4)] {
            for obj in objectives().iter() {
                let src = TrainingSource::Data(data.clone());
                let terms = obj
                    .draw(&src, &sched, 4, Weighting::NoisePrediction, &mut seed::rng(6))
                    .unwrap();
                let graph = model.loss_graph(terms);
                let tape = loss_backward(model.net(), &graph).unwrap();
                let fd = finite_difference_gradient(model.net(), &graph, 1e-5).unwrap();
                let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (a, b) in tape.grad.iter().zip(&fd) {
                    assert!(
                        (a - b).abs() <= 1e-4 * b.abs().max(1e-3 * scale),
                        "{}: {a} vs {b}",
                        obj.name()
                    );
                }
            }
        }
    }

    #[test]
    fn registry_lists_three_objectives() {
        assert_eq!(objectives().names(), vec!["dsm", "esm", "ism"]);
    }
}
