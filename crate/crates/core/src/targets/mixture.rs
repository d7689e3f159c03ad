use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, invalid, Result};
use crate::field::{sq_dist, VectorField};
use crate::group::GroupRep;
use crate::seed;

use super::empirical::EmpiricalMeasure;

/// Isotropic Gaussian mixture with one shared component variance.
///
/// Closed under heat flow (variance grows by `2t`), orthogonal
/// symmetrization (means are rotated) and mollification of empirical
/// measures, which makes it the analytic oracle for every score identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variance: f64,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variance: f64) -> Result<Self> {
        let m = Self {
            weights,
            means,
            variance,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.means.is_empty() {
            return Err(invalid("a mixture needs at least one component"));
        }
        ensure_dim(self.means.len(), self.weights.len(), "mixture weights")?;
        let d = self.means[0].len();
        if d == 0 || self.means.iter().any(|m| m.len() != d || m.iter().any(|v| !v.is_finite())) {
            return Err(invalid("mixture means must be finite and share one dimension"));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid("mixture weights must be non-negative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("mixture weights sum to {total}")));
        }
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(invalid("mixture variance must be positive"));
        }
        Ok(())
    }

    /// Four equal-weight components centred at `(±5, ±5)`, listed in C4
    /// orbit order starting from `(5, 5)`.
    pub fn four_corners(variance: f64) -> Self {
        Self::new(
            vec![0.25; 4],
            vec![
                vec![5.0, 5.0],
                vec![-5.0, 5.0],
                vec![-5.0, -5.0],
                vec![5.0, -5.0],
            ],
            variance,
        )
        .expect("static mixture is valid")
    }

    pub fn standard_normal(dim: usize) -> Self {
        Self::new(vec![1.0], vec![vec![0.0; dim]], 1.0).expect("static mixture is valid")
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn n_components(&self) -> usize {
        self.means.len()
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<EmpiricalMeasure> {
        if n == 0 {
            return Err(invalid("sample size must be positive"));
        }
        let sd = self.variance.sqrt();
        let points = (0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut k = self.n_components() - 1;
                for (i, w) in self.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                // zero-weight components are never selected
                while self.weights[k] == 0.0 {
                    k -= 1;
                }
                self.means[k]
                    .iter()
                    .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        EmpiricalMeasure::uniform(points)
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<EmpiricalMeasure> {
        self.sample_with(n, &mut seed::rng(seed))
    }

    fn component_logs(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim() as f64;
        let norm = -0.5 * d * (2.0 * std::f64::consts::PI * self.variance).ln();
        self.means
            .iter()
            .zip(&self.weights)
            .map(|(m, &w)| {
                if w == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    w.ln() + norm - sq_dist(x, m) / (2.0 * self.variance)
                }
            })
            .collect()
    }

    /// `log sum_k w_k N(x; mu_k, sigma^2 I)` with log-sum-exp.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        log_sum_exp(&self.component_logs(x))
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    /// Posterior component responsibilities at `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let logs = self.component_logs(x);
        let lse = log_sum_exp(&logs);
        logs.iter().map(|l| (l - lse).exp()).collect()
    }

    /// `grad log rho(x) = sum_k r_k(x) (mu_k - x) / sigma^2`
    pub fn score(&self, x: &[f64]) -> Vec<f64> {
        let r = self.responsibilities(x);
        let mut s = vec![0.0; self.dim()];
        for (rk, m) in r.iter().zip(&self.means) {
            for ((si, mi), xi) in s.iter_mut().zip(m).zip(x) {
                *si += rk * (mi - xi);
            }
        }
        s.iter_mut().for_each(|v| *v /= self.variance);
        s
    }

    /// Laplacian of `log rho`, i.e. the divergence of the score.
    pub fn score_divergence(&self, x: &[f64]) -> f64 {
        // div s = -d/sigma^2 + (E_r|mu - x|^2 - |E_r(mu - x)|^2) / sigma^4
        let r = self.responsibilities(x);
        let d = self.dim() as f64;
        let mut mean = vec![0.0; self.dim()];
        let mut second = 0.0;
        for (rk, m) in r.iter().zip(&self.means) {
            let diff: Vec<f64> = m.iter().zip(x).map(|(a, b)| a - b).collect();
            second += rk * diff.iter().map(|v| v * v).sum::<f64>();
            for (a, v) in mean.iter_mut().zip(&diff) {
                *a += rk * v;
            }
        }
        let mean_sq: f64 = mean.iter().map(|v| v * v).sum();
        -d / self.variance + (second - mean_sq) / (self.variance * self.variance)
    }

    /// Heat flow for `dx = sqrt(2) dW`: component variance grows by `2t`.
    pub fn diffuse(&self, t: f64) -> Result<Self> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(invalid(format!("diffusion time must be non-negative, got {t}")));
        }
        Ok(Self {
            variance: self.variance + 2.0 * t,
            ..self.clone()
        })
    }

    /// Push-forward average over the group: `|G| K` components with means
    /// `A_g mu_k` and weights `w_k / |G|`, ordered component-major.
    pub fn symmetrize(&self, rep: &GroupRep) -> Result<Self> {
        ensure_dim(rep.dim(), self.dim(), "symmetrize_mixture")?;
        let order = rep.order() as f64;
        let mut weights = Vec::with_capacity(self.n_components() * rep.order());
        let mut means = Vec::with_capacity(weights.capacity());
        for (w, m) in self.weights.iter().zip(&self.means) {
            for g in 0..rep.order() {
                weights.push(w / order);
                means.push(rep.apply(g, m));
            }
        }
        Self::new(weights, means, self.variance)
    }

    /// Score of the symmetrized measure,
    /// `sum_g A_g^T grad rho(A_g x) / sum_g rho(A_g x)`, evaluated with
    /// log-domain weights so no density is ever divided directly.
    pub fn symmetrized_score(&self, rep: &GroupRep, x: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(rep.dim(), self.dim(), "symmetrized_score group")?;
        ensure_dim(self.dim(), x.len(), "symmetrized_score point")?;
        let images = rep.orbit(x);
        let logs: Vec<f64> = images.iter().map(|y| self.log_density(y)).collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut num = vec![0.0; self.dim()];
        let mut den = 0.0;
        for (g, (y, l)) in images.iter().zip(&logs).enumerate() {
            let w = (l - top).exp();
            den += w;
            for (a, v) in num.iter_mut().zip(rep.apply_transpose(g, &self.score(y))) {
                *a += w * v;
            }
        }
        Ok(num.iter().map(|v| v / den).collect())
    }
}

/// Heat-kernel mollification of an empirical measure: one component of
/// variance `2 eps` per data point.
pub fn mollify_empirical(data: &EmpiricalMeasure, eps: f64) -> Result<GaussianMixture> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(invalid(format!("mollification time must be positive, got {eps}")));
    }
    GaussianMixture::new(data.weights().to_vec(), data.points().to_vec(), 2.0 * eps)
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + v.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

/// Analytic score of a fixed mixture, as a time-independent vector field.
#[derive(Debug, Clone)]
pub struct MixtureScore(pub GaussianMixture);

impl VectorField for MixtureScore {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, x: &[f64], _t: f64) -> Vec<f64> {
        self.0.score(x)
    }
    fn divergence(&self, x: &[f64], _t: f64) -> f64 {
        self.0.score_divergence(x)
    }
}

/// Score of `diffuse(base, t)` as a time-dependent field.
#[derive(Debug, Clone)]
pub struct DiffusedScore(pub GaussianMixture);

impl DiffusedScore {
    fn at(&self, t: f64) -> GaussianMixture {
        GaussianMixture {
            variance: self.0.variance + 2.0 * t.max(0.0),
            ..self.0.clone()
        }
    }
}

impl VectorField for DiffusedScore {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        self.at(t).score(x)
    }
    fn divergence(&self, x: &[f64], t: f64) -> f64 {
        self.at(t).score_divergence(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::fd_divergence;

    fn fd_grad(m: &GaussianMixture, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut up = x.to_vec();
                let mut dn = x.to_vec();
                up[i] += h;
                dn[i] -= h;
                (m.log_density(&up) - m.log_density(&dn)) / (2.0 * h)
            })
            .collect()
    }

    fn random_mixture(seed: u64) -> GaussianMixture {
        let mut rng = seed::rng(seed);
        let k = rng.gen_range(1..5);
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let means = (0..k)
            .map(|_| vec![rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)])
            .collect();
        GaussianMixture::new(
            raw.iter().map(|w| w / total).collect(),
            means,
            rng.gen_range(0.3..2.0),
        )
        .unwrap()
    }

    #[test]
    fn standard_normal_log_density_at_mode() {
        let m = GaussianMixture::standard_normal(2);
        assert!((m.log_density(&[0.0, 0.0]) + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn equidistant_point_of_two_components() {
        let m = GaussianMixture::new(vec![0.5, 0.5], vec![vec![-1.0, 0.0], vec![1.0, 0.0]], 1.0)
            .unwrap();
        let single = GaussianMixture::new(vec![1.0], vec![vec![-1.0, 0.0]], 1.0).unwrap();
        let x = [0.0, 0.7];
        assert!((m.log_density(&x) - single.log_density(&x)).abs() < 1e-14);
    }

    #[test]
    fn four_corner_log_density_matches_direct_sum() {
        let m = GaussianMixture::four_corners(1.0);
        let x = [5.0, 5.0];
        let direct: f64 = m
            .means
            .iter()
            .map(|mu| {
                let d2 = (x[0] - mu[0]).powi(2) + (x[1] - mu[1]).powi(2);
                0.25 * (-d2 / 2.0).exp() / (2.0 * std::f64::consts::PI)
            })
            .sum();
        assert!((m.log_density(&x) - direct.ln()).abs() < 1e-14);
    }

    #[test]
    fn far_away_points_stay_finite() {
        let m = GaussianMixture::four_corners(1.0);
        assert!(m.log_density(&[1e4, -3e4]).is_finite());
        assert!(m.score(&[1e4, -3e4]).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn single_component_score_is_linear() {
        let m = GaussianMixture::new(vec![1.0], vec![vec![1.0, -2.0]], 0.5).unwrap();
        assert_eq!(m.score(&[0.0, 0.0]), vec![2.0, -4.0]);
    }

    #[test]
    fn symmetric_mixture_score_vanishes_at_origin() {
        let s = GaussianMixture::four_corners(1.0).score(&[0.0, 0.0]);
        assert!(s.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn score_and_laplacian_match_finite_differences() {
        for seed in 0..100 {
            let m = random_mixture(seed);
            let mut rng = seed::rng(1000 + seed);
            let x = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let s = m.score(&x);
            let fd = fd_grad(&m, &x, 1e-5);
            for (a, b) in s.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "seed {seed}: {a} vs {b}");
            }
            let div = m.score_divergence(&x);
            let fd_div = fd_divergence(&MixtureScore(m.clone()), &x, 0.0, 1e-5);
            assert!((div - fd_div).abs() < 1e-5 * (1.0 + div.abs()), "seed {seed}");
        }
    }

    #[test]
    fn sampling_mean_concentrates() {
        let m = GaussianMixture::standard_normal(2);
        let n = 100_000;
        let s = m.sample(n, 4).unwrap();
        let bound = 4.0 / (n as f64).sqrt();
        for v in s.mean() {
            assert!(v.abs() < bound, "{v}");
        }
    }

    #[test]
    fn degenerate_weights_pick_one_component() {
        let m = GaussianMixture::new(vec![1.0, 0.0], vec![vec![100.0], vec![-100.0]], 1.0).unwrap();
        let s = m.sample(1000, 0).unwrap();
        assert!(s.points().iter().all(|p| p[0] > 50.0));
    }

    #[test]
    fn sampling_is_seeded() {
        let m = GaussianMixture::four_corners(1.0);
        assert_eq!(m.sample(50, 9).unwrap(), m.sample(50, 9).unwrap());
        assert!(m.sample(0, 9).is_err());
    }

    #[test]
    fn diffusion_adds_variance_and_composes() {
        let m = GaussianMixture::standard_normal(2);
        assert_eq!(m.diffuse(0.0).unwrap(), m);
        assert_eq!(m.diffuse(0.5).unwrap().variance, 2.0);
        let a = m.diffuse(0.3).unwrap().diffuse(0.7).unwrap();
        let b = m.diffuse(1.0).unwrap();
        assert!((a.variance - b.variance).abs() < 1e-15);
        assert!(m.diffuse(-1.0).is_err());
    }

    #[test]
    fn symmetrizing_one_corner_gives_the_four_corner_mixture() {
        let c4 = GroupRep::cyclic_rotations(4).unwrap();
        let one = GaussianMixture::new(vec![1.0], vec![vec![5.0, 5.0]], 1.0).unwrap();
        assert_eq!(one.symmetrize(&c4).unwrap(), GaussianMixture::four_corners(1.0));
        let trivial = GroupRep::trivial(2).unwrap();
        let m = random_mixture(3);
        assert_eq!(m.symmetrize(&trivial).unwrap(), m);
    }

    #[test]
    fn symmetrizing_an_invariant_mixture_keeps_its_density() {
        let c4 = GroupRep::cyclic_rotations(4).unwrap();
        let m = GaussianMixture::four_corners(1.0);
        let s = m.symmetrize(&c4).unwrap();
        assert_eq!(s.n_components(), 16);
        let mut rng = seed::rng(2);
        for _ in 0..100 {
            let x = [rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0)];
            let (a, b) = (m.density(&x), s.density(&x));
            assert!((a - b).abs() <= 1e-12 * a.max(1e-300) + 1e-300, "{a} {b}");
            for g in 0..4 {
                let c = s.density(&c4.apply(g, &x));
                assert!((c - b).abs() <= 1e-12 * b.max(1e-300));
            }
        }
    }

    #[test]
    fn symmetrized_score_special_cases() {
        let c4 = GroupRep::cyclic_rotations(4).unwrap();
        let one = GaussianMixture::new(vec![1.0], vec![vec![5.0, 5.0]], 1.0).unwrap();
        let s = one.symmetrized_score(&c4, &[0.0, 0.0]).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-12));
        let trivial = GroupRep::trivial(2).unwrap();
        let m = random_mixture(11);
        assert_eq!(m.symmetrized_score(&trivial, &[0.3, 0.1]).unwrap(), m.score(&[0.3, 0.1]));
        // far from every mean the log-domain evaluation stays finite
        assert!(one
            .symmetrized_score(&c4, &[3e3, -2e3])
            .unwrap()
            .iter()
            .all(|v| v.is_finite()));
    }

    #[test]
    fn mollify_builds_heat_kernel() {
        let data = EmpiricalMeasure::uniform(vec![vec![0.0, 0.0]]).unwrap();
        let m = mollify_empirical(&data, 0.5).unwrap();
        assert_eq!(m, GaussianMixture::standard_normal(2));
        assert!(mollify_empirical(&data, 0.0).is_err());
        // peak value (4 pi eps)^{-d/2} / N at a data point for tiny eps
        let eps = 1e-6;
        let data = EmpiricalMeasure::uniform(vec![vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let peak = mollify_empirical(&data, eps).unwrap().density(&[0.0, 0.0]);
        let expect = 1.0 / (4.0 * std::f64::consts::PI * eps) / 2.0;
        assert!((peak / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mollified_density_integrates_to_one() {
        // tensor 40-point Gauss-Hermite rule, stretched by `scale`
        let data = EmpiricalMeasure::new(
            vec![vec![0.3, -0.2], vec![-0.5, 0.4], vec![0.1, 0.9]],
            vec![0.2, 0.5, 0.3],
        )
        .unwrap();
        let m = mollify_empirical(&data, 0.4).unwrap();
        let (nodes, weights) = gauss_hermite(40);
        let scale = 2.0_f64;
        let mut total = 0.0;
        for (xi, wi) in nodes.iter().zip(&weights) {
            for (yj, wj) in nodes.iter().zip(&weights) {
                let (x, y) = (scale * xi, scale * yj);
                total += wi * wj * (xi * xi + yj * yj).exp() * m.density(&[x, y]) * scale * scale;
            }
        }
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    /// Gauss-Hermite nodes and weights (weight function `exp(-x^2)`) by
    /// Newton iteration on the normalized Hermite recurrence.
    fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let pi_m4 = std::f64::consts::PI.powf(-0.25);
        let m = (n + 1) / 2;
        let mut z = 0.0;
        for i in 0..m {
            z = match i {
                0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pi_m4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2 - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        (nodes, weights)
    }
}
