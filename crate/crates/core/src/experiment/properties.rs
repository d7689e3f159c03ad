//! Named property checks over every module, runnable as a suite.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::diffusion::{
    dsm_ism_offset_check, dsm_terms, esm_terms, ism_terms, DiffusionSchedule, ScoreModel, ScoreNetConfig, TimeFeatures,
    Weighting,
};
use crate::error::{Error, Result};
use crate::field::{fd_divergence, SpaceTimePoint, VectorField};
use crate::group::{augment, dfe, GroupRep};
use crate::metrics::{augmented_space_time_points, contraction_check, sample_complexity_sweep, w1_exact_value};
use crate::ndiff::{finite_difference_gradient, loss_backward};
use crate::registry::{Named, Registry};
use crate::seed;
use crate::targets::{mollify_empirical, EmpiricalMeasure, GaussianMixture};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub residual: f64,
    pub threshold: f64,
    pub detail: String,
    pub secs: f64,
}

pub trait PropertyCheck: Named + Send + Sync {
    fn run(&self, seed: u64) -> Result<CheckOutcome>;
}

fn outcome(name: &'static str, residual: f64, threshold: f64, detail: String) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: residual <= threshold,
        residual,
        threshold,
        detail,
        secs: 0.0,
    }
}

fn c4() -> GroupRep {
    GroupRep::cyclic_rotations(4).expect("C4 is valid")
}

fn gaussian_points(n: usize, scale: f64, rng: &mut seed::Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..2).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

fn small_model(group: Option<GroupRep>, seed: u64) -> Result<ScoreModel> {
    let cfg = ScoreNetConfig {
        hidden: vec![16, 16],
        ..Default::default()
    };
    ScoreModel::build(2, &cfg, group, TimeFeatures { horizon: 10.0, early_stop: 1e-2 }, seed)
}

/// 64 points at each of 8 times, unit weights.
fn evaluation_set(rng: &mut seed::Rng) -> Vec<SpaceTimePoint> {
    let times: Vec<f64> = (0..8).map(|_| rng.gen_range(0.01..5.0)).collect();
    let mut out = Vec::with_capacity(512);
    for t in times {
        for x in gaussian_points(64, 3.0, rng) {
            out.push(SpaceTimePoint::new(x, t, 1.0));
        }
    }
    out
}

fn orbit_set(points: &[SpaceTimePoint], rep: &GroupRep) -> Vec<SpaceTimePoint> {
    points
        .iter()
        .flat_map(|p| (0..rep.order()).map(move |g| SpaceTimePoint::new(rep.apply(g, &p.x), p.t, p.weight)))
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub struct GroupIdentities;

impl Named for GroupIdentities {
    fn name(&self) -> &'static str {
        "group-identities"
    }
}

impl PropertyCheck for GroupIdentities {
    fn run(&self, _seed: u64) -> Result<CheckOutcome> {
        let mut worst: f64 = 0.0;
        let mut passed = true;
        for k in [1, 2, 4, 8] {
            let report = GroupRep::cyclic_rotations(k)?.check();
            passed &= report.passed();
            for i in &report.items {
                worst = worst.max(i.residual / i.tolerance);
            }
        }
        let mut o = outcome(self.name(), worst, 1.0, "closure, orthogonality, inverses, identity for C1, C2, C4, C8 (residual / tolerance)".into());
        o.passed &= passed;
        Ok(o)
    }
}

pub struct IsmTransfer;

impl Named for IsmTransfer {
    fn name(&self) -> &'static str {
        "ism-transfer"
    }
}

impl PropertyCheck for IsmTransfer {
    fn run(&self, seed: u64) -> Result<CheckOutcome> {
        let rep = c4();
        let mut worst: f64 = 0.0;
        for i in 0..20u64 {
            let model = small_model(Some(rep.clone()), seed::derive(seed, &[1, i]))?;
            let mut rng = seed::rng(seed::derive(seed, &[2, i]));
            let p = evaluation_set(&mut rng);
            let a = ism_terms(&p)?.value(&model)?;
            let b = ism_terms(&orbit_set(&p, &rep))?.value(&model)?;
            worst = worst.max(rel(a, b));
        }
        Ok(outcome(self.name(), worst, 1e-10, "|J_I(P) - J_I(G.P)| / |J_I(P)| over 20 equivariant nets".into()))
    }
}

pub struct EsmDecomposition;

impl Named for EsmDecomposition {
    fn name(&self) -> &'static str {
        "esm-decomposition"
    }
}

impl PropertyCheck for EsmDecomposition {
    fn run(&self, seed: u64) -> Result<CheckOutcome> {
        let rep = c4();
        let target = GaussianMixture::four_corners(1.0);
        let schedule = DiffusionSchedule {
            horizon: 10.0,
            early_stop: 1e-2,
            ..Default::default()
        };
        let data = target.sample(64, seed::derive(seed, &[0]))?;
        let mut worst: f64 = 0.0;
        for i in 0..20u64 {
            let model = small_model(None, seed::derive(seed, &[1, i]))?;
            let points = augmented_space_time_points(&data, &rep, &schedule, 128, seed::derive(seed, &[2, i]))?;
            let law = |t: f64| target.diffuse(t);
            let je = esm_terms(law, &points)?.value(&model)?;
            let je_sym = esm_terms(law, &points)?.value(&model.symmetrized(&rep)?)?;
            let d = dfe(&model, &rep, &points)?;
            worst = worst.max((je - d - je_sym).abs() / je.max(1.0));
        }
        Ok(outcome(self.name(), worst, 1e-9, "|J_E - DFE - J_E(S_G^E s)| / max(1, J_E) over 20 plain nets".into()))
    }
}

pub struct ScoreLemma;

impl Named for ScoreLemma {
    fn name(&self) -> &'static str {
        "score-lemma"
    }
}

impl PropertyCheck for ScoreLemma {
    fn run(&self, seed: u64) -> Result<CheckOutcome> {
        let rep = c4();
        let mut rng = seed::rng(seed);
        let mixture = GaussianMixture::new(vec![0.2, 0.5, 0.3], gaussian_points(3, 2.0, &mut rng), 0.7)?;
        let sym = mixture.symmetrize(&rep)?;
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for x in gaussian_points(100, 2.0, &mut rng) {
            let lemma = mixture.symmetrized_score(&rep, &x)?;
            let direct = sym.score(&x);
            for i in 0..2 {
                let (mut up, mut down) = (x.clone(), x.clone());
                up[i] += h;
                down[i] -= h;
                let fd = (sym.log_density(&up) - sym.log_density(&down)) / (2.0 * h);
                worst = worst.max((lemma[i] - direct[i]).abs()).max((lemma[i] - fd).abs());
            }
        }
        Ok(outcome(self.name(), worst, 1e-6, "lemma formula vs symmetrized-mixture score vs finite differences".into()))
    }
}

pub struct Commutation;

impl Named for Commutation {
    fn name(&self) -> &'static str {
        "commutation"
    }
}

impl PropertyCheck for Commutation {
    fn run(&self, seed: u64) -> Result<CheckOutcome> {
        let rep = c4();
        let mut worst: f64 = 0.0;
        for m in 0..10u64 {
            let mut rng = seed::rng(seed::derive(seed, &[m]));
            let data = EmpiricalMeasure::uniform(gaussian_points(6, 2.0, &mut rng))?;
            let xs = gaussian_points(100, 2.0, &mut rng);
            for eps in [1e-3, 0.1, 1.0] {
                let sym_then_diffuse = mollify_empirical(&augment(&data, &rep)?, eps)?;
                let diffuse_then_sym = mollify_empirical(&data, eps)?.symmetrize(&rep)?;
                for x in &xs {
                    let (a, b) = (sym_then_diffuse.density(x), diffuse_then_sym.density(x));
                    worst = worst.max((a - b).abs() / a.abs().max(1.0));
                }
            }
        }
        Ok(outcome(self.name(), worst, 1e-12, "density of S^G then mollify vs mollify then S^G".into()))
    }
}

pub struct Contraction;

impl Named for Contraction {
    fn name(&self) -> &'static str {
        "contraction"
    }
}

impl PropertyCheck for Contraction {
    fn run(&self, seed: u64) -> Result<CheckOutcome> {
        let rep = c4();
        let target = GaussianMixture::four_corners(1.0);
        let mut failures = 0;
        let mut worst = f64::NEG_INFINITY;
        for i in 0..100u64 {
            let eta = target.sample(32, seed::derive(seed, &[1, i]))?;
            let reference = target.sample(256, seed::derive(seed, &[2, i]))?;
            let r = contraction_check(&eta, &reference, &rep)?;
            failures += usize::from(!r.passed);
            worst = worst.max(r.augmented - r.plain - r.slack);
        }
        let mut o = outcome(self.name(), failures as f64, 0.0, format!("failed trials out of 100; worst margin {worst:.3e}"));
        o.passed = failures == 0;
        Ok(o)
    }
}

pub struct OffsetCheck;

impl Named for OffsetCheck {
    fn name(&self) -> &'static str {
        "offset-check"
    }
}

impl PropertyCheck for OffsetCheck {
    fn run(&self, seed: u64) -> Result<CheckOutcome> {
        let single = GaussianMixture::new(vec![1.0], vec![vec![0.5, -1.0]], 0.8)?;
        let paper = GaussianMixture::four_corners(1.0);
        let mut worst: f64 = 0.0;
        let mut fisher_ok = true;
        for s in 0..10u64 {
            let target = if s % 2 == 0 { &single } else { &paper };
            let n = 100_000;
            let r = dsm_ism_offset_check(target, 0.5, n, seed::derive(seed, &[s]))?;
            worst = worst.max(r.discrepancy.abs() / r.stderr);
            if let Some(exact) = r.fisher_closed_form {
                let tol = 4.0 * (2.0 / (2.0 * n as f64)).sqrt();
                fisher_ok &= rel(r.fisher, exact) <= tol;
            }
        }
        let mut o = outcome(self.name(), worst, 4.0, "|paired DSM-ISM discrepancy| in Monte Carlo standard errors, 10 seeds".into());
        o.passed &= fisher_ok;
        Ok(o)
    }
}

pub struct GradientCheck;

impl Named for GradientCheck {
    fn name(&self) -> &'static str {
        "gradient-check"
    }
}

impl PropertyCheck for GradientCheck {
    fn run(&self, seed: u64) -> Result<CheckOutcome> {
        let schedule = DiffusionSchedule {
            horizon: 10.0,
            early_stop: 1e-2,
            ..Default::default()
        };
        let target = GaussianMixture::four_corners(1.0);
        let mut worst_grad: f64 = 0.0;
        let mut worst_div: f64 = 0.0;
        for i in 0..10u64 {
            let s = seed::derive(seed, &[i]);
            let group = (i % 2 == 1).then(c4);
            let model = small_model(group, s)?;
            let data = target.sample(16, s)?;
            let mut rng = seed::rng(s);
            let terms = dsm_terms(&data, &schedule, 8, Weighting::NoisePrediction, &mut rng)?;
            let graph = model.loss_graph(terms);
            let tape = loss_backward(model.net(), &graph)?;
            let fd = finite_difference_gradient(model.net(), &graph, 1e-6)?;
            let scale = fd.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
            for (a, b) in tape.grad.iter().zip(&fd) {
                worst_grad = worst_grad.max((a - b).abs() / scale);
            }
            for x in gaussian_points(5, 2.0, &mut rng) {
                let t = rng.gen_range(0.01..5.0);
                worst_div = worst_div.max((model.divergence(&x, t) - fd_divergence(&model, &x, t, 1e-4)).abs());
            }
        }
        let mut o = outcome(
            self.name(),
            worst_grad,
            1e-4,
            format!("relative gradient error vs central differences; divergence error {worst_div:.2e} (threshold 1e-6)"),
        );
        o.passed &= worst_div <= 1e-6;
        Ok(o)
    }
}

pub struct Sweep;

impl Named for Sweep {
    fn name(&self) -> &'static str {
        "sweep"
    }
}

impl PropertyCheck for Sweep {
    fn run(&self, seed: u64) -> Result<CheckOutcome> {
        let table = sample_complexity_sweep(&GaussianMixture::four_corners(1.0), &c4(), &[32, 64, 128, 256], 10, 2048, seed)?;
        let plain = table.curve("plain");
        let aug = table.curve("augmented");
        let mut worst = f64::NEG_INFINITY;
        for (p, a) in plain.iter().zip(&aug) {
            worst = worst.max(a.mean - p.mean - p.stderr.max(a.stderr));
        }
        let mut o = outcome(
            self.name(),
            worst,
            0.0,
            format!("augmented minus plain mean beyond 1 SE; plain slope {:.3}", table.plain_slope),
        );
        o.passed &= (-0.65..=-0.35).contains(&table.plain_slope);
        Ok(o)
    }
}

pub struct W1Oracle;

impl Named for W1Oracle {
    fn name(&self) -> &'static str {
        "w1-oracle"
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

impl PropertyCheck for W1Oracle {
    fn run(&self, seed: u64) -> Result<CheckOutcome> {
        let mut worst: f64 = 0.0;
        let mut rng = seed::rng(seed);
        for n in [3, 4] {
            let perms = permutations(n);
            for _ in 0..50 {
                let a = gaussian_points(n, 2.0, &mut rng);
                let b = gaussian_points(n, 2.0, &mut rng);
                let brute = perms
                    .iter()
                    .map(|p| {
                        p.iter()
                            .enumerate()
                            .map(|(i, &j)| crate::field::sq_dist(&a[i], &b[j]).sqrt())
                            .sum::<f64>()
                            / n as f64
                    })
                    .fold(f64::INFINITY, f64::min);
                let exact = w1_exact_value(&EmpiricalMeasure::uniform(a)?, &EmpiricalMeasure::uniform(b)?)?;
                worst = worst.max((exact - brute).abs());
            }
        }
        Ok(outcome(self.name(), worst, 1e-10, "exact solver vs brute force over all assignments, 3v3 and 4v4".into()))
    }
}

pub fn property_checks() -> Registry<dyn PropertyCheck> {
    let mut r: Registry<dyn PropertyCheck> = Registry::new("property check");
    r.register(Box::new(GroupIdentities))
        .register(Box::new(IsmTransfer))
        .register(Box::new(EsmDecomposition))
        .register(Box::new(ScoreLemma))
        .register(Box::new(Commutation))
        .register(Box::new(Contraction))
        .register(Box::new(OffsetCheck))
        .register(Box::new(GradientCheck))
        .register(Box::new(Sweep))
        .register(Box::new(W1Oracle));
    r
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PropertyReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    /// One line per check.
    pub fn lines(&self) -> Vec<String> {
        self.outcomes
            .iter()
            .map(|o| {
                format!(
                    "{} {:<18} residual {:.3e} threshold {:.1e} ({:.1}s) {}",
                    if o.passed { "PASS" } else { "FAIL" },
                    o.name,
                    o.residual,
                    o.threshold,
                    o.secs,
                    o.detail
                )
            })
            .collect()
    }
}

/// Seed of a check: the suite seed folded with the check name.
fn check_seed(seed: u64, name: &str) -> u64 {
    name.bytes().fold(seed::mix64(seed), |acc, b| seed::mix64(acc ^ u64::from(b)))
}

/// Runs the named checks in the given order; `all` expands to every
/// registered check. A check that errors is reported as failed.
pub fn run_property_suite(selector: &[&str], seed: u64) -> Result<PropertyReport> {
    let reg = property_checks();
    let mut names: Vec<&str> = Vec::new();
    for &s in selector {
        if s == "all" {
            names.extend(reg.names());
        } else {
            reg.get(s)?;
            names.push(s);
        }
    }
    let mut report = PropertyReport::default();
    for name in names {
        let check = reg.get(name)?;
        let start = Instant::now();
        let mut o = check.run(check_seed(seed, name))
            .unwrap_or_else(|e: Error| CheckOutcome {
                name: check.name(),
                passed: false,
                residual: f64::NAN,
                threshold: f64::NAN,
                detail: format!("error: {e}"),
                secs: 0.0,
            });
        o.secs = start.elapsed().as_secs_f64();
        report.outcomes.push(o);
    }
    Ok(report)
}
