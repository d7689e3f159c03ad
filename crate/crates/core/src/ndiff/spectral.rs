//! Spectral normalization by warm-started power iteration.

use crate::error::{invalid, Result};

use super::net::{dot, DenseNet};

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Runs `iters` power iterations on a row-major `rows x cols` matrix from
/// the left vector `u`, updating `u` in place. Returns the leading singular
/// value estimate; `0.0` for a zero matrix.
pub fn power_iteration(w: &[f64], rows: usize, cols: usize, u: &mut [f64], iters: usize) -> f64 {
    debug_assert_eq!(w.len(), rows * cols);
    if w.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    let mut v = vec![0.0; cols];
    let mut sigma = 0.0;
    for _ in 0..iters.max(1) {
        v.iter_mut().for_each(|x| *x = 0.0);
        for r in 0..rows {
            let ur = u[r];
            for (vc, wc) in v.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                *vc += wc * ur;
            }
        }
        if normalize(&mut v) == 0.0 {
            // u is in the left null space; restart from the largest row
            let best = (0..rows)
                .max_by(|&a, &b| {
                    let na = dot(&w[a * cols..(a + 1) * cols], &w[a * cols..(a + 1) * cols]);
                    let nb = dot(&w[b * cols..(b + 1) * cols], &w[b * cols..(b + 1) * cols]);
                    na.total_cmp(&nb)
                })
                .unwrap();
            v.copy_from_slice(&w[best * cols..(best + 1) * cols]);
            normalize(&mut v);
        }
        for (r, ur) in u.iter_mut().enumerate() {
            *ur = dot(&w[r * cols..(r + 1) * cols], &v);
        }
        sigma = normalize(u);
    }
    sigma
}

impl DenseNet {
    /// Divides every weight matrix by its leading singular value, estimated
    /// with `iters` warm-started power iterations. Zero matrices are left
    /// unchanged. Returns the per-layer estimates used.
    pub fn spectral_normalize_in_place(&mut self, iters: usize) -> Result<Vec<f64>> {
        let mut state = self
            .power_iter_state_mut()
            .map(std::mem::take)
            .ok_or_else(|| invalid("spectral normalization is not enabled on this network"))?;
        let mut sigmas = Vec::with_capacity(self.layers().len());
        for (k, u) in state.iter_mut().enumerate() {
            let slot = self.layers()[k];
            let sigma = power_iteration(self.weight(k), slot.rows, slot.cols, u, iters);
            if sigma > 0.0 {
                self.weight_mut(k).iter_mut().for_each(|w| *w /= sigma);
            }
            sigmas.push(sigma);
        }
        self.set_power_iter_state(Some(state));
        Ok(sigmas)
    }
}

pub fn spectral_normalize(net: &DenseNet, iters: usize) -> Result<DenseNet> {
    let mut out = net.clone();
    out.spectral_normalize_in_place(iters)?;
    Ok(out)
}

/// Leading singular value estimate of every layer, using a fresh copy of
/// the stored power-iteration state.
pub fn layer_spectral_norms(net: &DenseNet, iters: usize) -> Result<Vec<f64>> {
    let state = net
        .power_iter_state()
        .ok_or_else(|| invalid("spectral normalization is not enabled on this network"))?;
    Ok(net
        .layers()
        .iter()
        .enumerate()
        .map(|(k, slot)| {
            let mut u = state[k].clone();
            power_iteration(net.weight(k), slot.rows, slot.cols, &mut u, iters)
        })
        .collect())
}
