//! Sample-complexity sweeps of `E W1(pi^N, pi)` with and without
//! augmentation.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::group::{augment, GroupRep};
use crate::seed::{self, Stream};
use crate::targets::GaussianMixture;

use super::transport::{w1_exact_value, MAX_PAIRS};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    /// `plain` or `augmented`
    pub method: &'static str,
    pub mean: f64,
    pub stderr: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub plain_slope: f64,
    pub augmented_slope: f64,
    pub ref_size: usize,
}

impl SweepTable {
    pub fn curve(&self, method: &str) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.method == method).collect()
    }

    /// `N,method,mean_d1,stderr,reps`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["N", "method", "mean_d1", "stderr", "reps"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.method.to_string(),
                format!("{:.12e}", r.mean),
                format!("{:.12e}", r.stderr),
                r.values.len().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn sample_complexity_sweep(
    target: &GaussianMixture,
    rep: &GroupRep,
    ns: &[usize],
    reps: usize,
    ref_size: usize,
    seed: u64,
) -> Result<SweepTable> {
    if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] == 0 {
        return Err(invalid("sample sizes must be positive and increasing"));
    }
    if reps < 5 {
        return Err(invalid("a sweep needs at least 5 repetitions"));
    }
    let largest = ns[ns.len() - 1] * rep.order();
    if ref_size == 0 || ref_size.saturating_mul(largest) > MAX_PAIRS {
        return Err(crate::Error::SizeGuard {
            rows: largest,
            cols: ref_size,
        });
    }
    let reference = target.sample(ref_size, seed::stream(seed, Stream::Reference))?;
    let cells: Vec<(usize, usize)> = ns.iter().flat_map(|&n| (0..reps).map(move |r| (n, r))).collect();
    let values = cells
        .par_iter()
        .map(|&(n, r)| {
            let data = target.sample(n, seed::derive(seed, &[Stream::Data as u64, n as u64, r as u64]))?;
            let plain = w1_exact_value(&data, &reference)?;
            let aug = w1_exact_value(&augment(&data, rep)?, &reference)?;
            Ok((plain, aug))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (k, &n) in ns.iter().enumerate() {
        let cell = &values[k * reps..(k + 1) * reps];
        for (method, pick) in [("plain", 0), ("augmented", 1)] {
            let vals: Vec<f64> = cell.iter().map(|v| if pick == 0 { v.0 } else { v.1 }).collect();
            let (mean, stderr) = mean_and_stderr(&vals);
            rows.push(SweepRow {
                n,
                method,
                mean,
                stderr,
                values: vals,
            });
        }
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let slope = |method: &str| {
        let ys: Vec<f64> = rows.iter().filter(|r| r.method == method).map(|r| r.mean).collect();
        loglog_slope(&xs, &ys)
    };
    Ok(SweepTable {
        plain_slope: slope("plain"),
        augmented_slope: slope("augmented"),
        rows,
        ref_size,
    })
}
