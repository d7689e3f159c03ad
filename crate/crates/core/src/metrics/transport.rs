//! Exact balanced optimal transport with Euclidean cost.
//!
//! Masses are scaled to integers by a common denominator. The transport
//! problem is solved by successive shortest paths with node potentials on a
//! sparse candidate graph (nearest neighbours in both directions). Once the
//! restricted problem is optimal, the potentials are checked for dual
//! feasibility against every dense pair; violating pairs are added and the
//! solve is repeated from the current column potentials. Termination
//! therefore certifies optimality on the complete bipartite graph.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::field::sq_dist;
use crate::targets::EmpiricalMeasure;

/// Largest admissible `|a| * |b|`.
pub const MAX_PAIRS: usize = 4096 * 4096;

/// Largest denominator tried when reading weights as fractions.
const MAX_DENOMINATOR: u64 = 1 << 20;

/// Largest common denominator for all masses.
const MAX_TOTAL: u64 = 1 << 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    /// Candidate neighbours per node; `0` means the dense graph.
    pub neighbors: usize,
    /// Violating pairs added per row in each repair round.
    pub repair_per_row: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            neighbors: 12,
            repair_per_row: 8,
        }
    }
}

/// Balanced transport between two weighted point clouds.
#[derive(Debug, Clone)]
pub struct TransportProblem<'a> {
    pub source: &'a EmpiricalMeasure,
    pub target: &'a EmpiricalMeasure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub cost: f64,
    /// `(source index, target index, mass)` with positive mass.
    pub plan: Vec<(usize, usize, f64)>,
    /// Kantorovich potentials with `phi_i + psi_j <= |x_i - y_j|`.
    pub source_potential: Vec<f64>,
    pub target_potential: Vec<f64>,
    pub dual_value: f64,
    /// `max(0, max_ij phi_i + psi_j - c_ij)`
    pub feasibility_residual: f64,
    pub augmentations: usize,
    pub rounds: usize,
    pub edges: usize,
}

impl ExactSolution {
    pub fn duality_gap(&self) -> f64 {
        (self.cost - self.dual_value).abs()
    }
}

impl<'a> TransportProblem<'a> {
    pub fn new(source: &'a EmpiricalMeasure, target: &'a EmpiricalMeasure) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(Error::Dimension {
                expected: source.dim(),
                got: target.dim(),
                context: "transport target".into(),
            });
        }
        if source.len().saturating_mul(target.len()) > MAX_PAIRS {
            return Err(Error::SizeGuard {
                rows: source.len(),
                cols: target.len(),
            });
        }
        Ok(Self { source, target })
    }

    pub fn solve(&self) -> Result<ExactSolution> {
        self.solve_with(&ExactOptions::default())
    }

    pub fn solve_with(&self, opts: &ExactOptions) -> Result<ExactSolution> {
        let (a, b) = (self.source, self.target);
        let (supply_a, supply_b, total) = integer_masses(a.weights(), b.weights())?;
        let swap = a.len() < b.len();
        let (rows, cols, rs, cs) = if swap {
            (b, a, supply_b, supply_a)
        } else {
            (a, b, supply_a, supply_b)
        };
        let mut solver = Ssp::new(rows.points(), cols.points(), rs, cs, opts);
        solver.run()?;
        let scale = 1.0 / total as f64;
        let mut cost = 0.0;
        let mut plan = Vec::new();
        for (r, flows) in solver.row_flow.iter().enumerate() {
            for &(c, f) in flows {
                let m = f as f64 * scale;
                cost += m * solver.cost(r, c as usize);
                if swap {
                    plan.push((c as usize, r, m));
                } else {
                    plan.push((r, c as usize, m));
                }
            }
        }
        plan.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        let row_pot: Vec<f64> = solver.pot[..solver.n_rows].iter().map(|p| -p).collect();
        let col_pot: Vec<f64> = solver.pot[solver.n_rows..].to_vec();
        let dual_value = scale
            * (row_pot.iter().zip(&solver.supply).map(|(p, &s)| p * s as f64).sum::<f64>()
                + col_pot.iter().zip(&solver.demand).map(|(p, &s)| p * s as f64).sum::<f64>());
        let residual = solver.max_violation();
        let (source_potential, target_potential) = if swap {
            (col_pot, row_pot)
        } else {
            (row_pot, col_pot)
        };
        Ok(ExactSolution {
            cost,
            plan,
            source_potential,
            target_potential,
            dual_value,
            feasibility_residual: residual,
            augmentations: solver.augmentations,
            rounds: solver.rounds,
            edges: solver.adj.iter().map(Vec::len).sum(),
        })
    }
}

/// Exact `W1(a, b)`.
pub fn w1_exact_value(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    Ok(TransportProblem::new(a, b)?.solve()?.cost)
}

/// Best rational approximation `p/q` with `q <= max_q` (continued fractions).
fn rational(x: f64, max_q: u64) -> (u64, u64) {
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut v = x;
    loop {
        let a = v.floor();
        if a > 1e15 {
            break;
        }
        let a = a as u64;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if q2 > max_q {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = v - a as f64;
        if frac < 1e-13 || (p1 as f64 / q1 as f64 - x).abs() < 1e-15 {
            break;
        }
        v = 1.0 / frac;
    }
    if q1 == 0 {
        (0, 1)
    } else {
        (p1, q1)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Integer supplies proportional to the weights, with a common total.
fn integer_masses(wa: &[f64], wb: &[f64]) -> Result<(Vec<u64>, Vec<u64>, u64)> {
    let mut denom = 1u64;
    for &w in wa.iter().chain(wb) {
        let (_, q) = rational(w, MAX_DENOMINATOR);
        denom = denom / gcd(denom, q) * q;
        if denom > MAX_TOTAL {
            return Err(Error::Masses(
                "weights are not ratios with a small common denominator".into(),
            ));
        }
    }
    let scale = |ws: &[f64]| -> Result<Vec<u64>> {
        let out: Vec<u64> = ws.iter().map(|w| (w * denom as f64).round() as u64).collect();
        for (w, &s) in ws.iter().zip(&out) {
            if (s as f64 / denom as f64 - w).abs() > 1e-14 {
                return Err(Error::Masses(format!("weight {w} is not a multiple of 1/{denom}")));
            }
        }
        Ok(out)
    };
    let (sa, sb) = (scale(wa)?, scale(wb)?);
    let (ta, tb) = (sa.iter().sum::<u64>(), sb.iter().sum::<u64>());
    if ta != tb || ta != denom {
        return Err(Error::Masses(format!("unbalanced masses {ta}/{denom} vs {tb}/{denom}")));
    }
    Ok((sa, sb, denom))
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: u32,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NONE: u32 = u32::MAX;

struct Ssp<'p> {
    rows: &'p [Vec<f64>],
    cols: &'p [Vec<f64>],
    n_rows: usize,
    supply: Vec<u64>,
    demand: Vec<u64>,
    /// Candidate edges per row: `(column, cost)`.
    adj: Vec<Vec<(u32, f64)>>,
    row_flow: Vec<Vec<(u32, u64)>>,
    col_flow: Vec<Vec<(u32, u64)>>,
    spare: Vec<u64>,
    /// Node potentials, rows first; reduced cost `c + p_r - p_c`.
    pot: Vec<f64>,
    dist: Vec<f64>,
    pred: Vec<u32>,
    seen: Vec<u32>,
    done: Vec<u32>,
    stamp: u32,
    settled: Vec<u32>,
    repair_per_row: usize,
    augmentations: usize,
    rounds: usize,
    tol: f64,
}

impl<'p> Ssp<'p> {
    fn new(
        rows: &'p [Vec<f64>],
        cols: &'p [Vec<f64>],
        supply: Vec<u64>,
        demand: Vec<u64>,
        opts: &ExactOptions,
    ) -> Self {
        let (n, m) = (rows.len(), cols.len());
        let mut s = Self {
            rows,
            cols,
            n_rows: n,
            supply,
            demand: demand.clone(),
            adj: vec![Vec::new(); n],
            row_flow: vec![Vec::new(); n],
            col_flow: vec![Vec::new(); m],
            spare: demand,
            pot: vec![0.0; n + m],
            dist: vec![f64::INFINITY; n + m],
            pred: vec![NONE; n + m],
            seen: vec![0; n + m],
            done: vec![0; n + m],
            stamp: 0,
            settled: Vec::new(),
            repair_per_row: opts.repair_per_row.max(1),
            augmentations: 0,
            rounds: 0,
            tol: 0.0,
        };
        s.build_candidates(opts.neighbors);
        let mut max_cost: f64 = 0.0;
        for list in &s.adj {
            for &(_, c) in list {
                max_cost = max_cost.max(c);
            }
        }
        s.tol = 1e-12 * (1.0 + max_cost);
        s
    }

    fn cost(&self, r: usize, c: usize) -> f64 {
        sq_dist(&self.rows[r], &self.cols[c]).sqrt()
    }

    fn build_candidates(&mut self, k: usize) {
        let (n, m) = (self.n_rows, self.cols.len());
        if k == 0 || k >= m {
            for r in 0..n {
                self.adj[r] = (0..m).map(|c| (c as u32, self.cost(r, c))).collect();
            }
            return;
        }
        let mut buf: Vec<(f64, u32)> = Vec::with_capacity(m.max(n));
        for r in 0..n {
            buf.clear();
            buf.extend((0..m).map(|c| (self.cost(r, c), c as u32)));
            buf.select_nth_unstable_by(k - 1, |x, y| x.0.total_cmp(&y.0));
            self.adj[r].extend(buf[..k].iter().map(|&(d, c)| (c, d)));
        }
        let kr = k.min(n);
        for c in 0..m {
            buf.clear();
            buf.extend((0..n).map(|r| (self.cost(r, c), r as u32)));
            if kr < n {
                buf.select_nth_unstable_by(kr - 1, |x, y| x.0.total_cmp(&y.0));
            }
            for &(d, r) in &buf[..kr] {
                self.adj[r as usize].push((c as u32, d));
            }
        }
        for axis in 0..self.rows[0].len().min(2) {
            for (r, c) in self.monotone_support(axis) {
                let d = self.cost(r, c);
                self.adj[r].push((c as u32, d));
            }
        }
        for list in &mut self.adj {
            list.sort_by_key(|e| e.0);
            list.dedup_by_key(|e| e.0);
        }
    }

    /// Support of the north-west-corner coupling after sorting both sides
    /// along one coordinate. Its presence keeps the candidate graph feasible.
    fn monotone_support(&self, axis: usize) -> Vec<(usize, usize)> {
        let order = |pts: &[Vec<f64>]| {
            let mut idx: Vec<usize> = (0..pts.len()).collect();
            idx.sort_by(|&i, &j| pts[i][axis].total_cmp(&pts[j][axis]));
            idx
        };
        let (ro, co) = (order(self.rows), order(self.cols));
        let (mut rl, mut cl) = (self.supply[ro[0]], self.demand[co[0]]);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::with_capacity(ro.len() + co.len());
        loop {
            out.push((ro[i], co[j]));
            let f = rl.min(cl);
            rl -= f;
            cl -= f;
            if rl == 0 {
                i += 1;
                if i == ro.len() {
                    break;
                }
                rl = self.supply[ro[i]];
            }
            if cl == 0 {
                j += 1;
                if j == co.len() {
                    break;
                }
                cl = self.demand[co[j]];
            }
        }
        out
    }

    fn run(&mut self) -> Result<()> {
        loop {
            self.rounds += 1;
            self.reset_flows();
            if !self.route_all() {
                self.make_dense();
                continue;
            }
            if !self.repair() {
                return Ok(());
            }
        }
    }

    fn reset_flows(&mut self) {
        for f in &mut self.row_flow {
            f.clear();
        }
        for f in &mut self.col_flow {
            f.clear();
        }
        self.spare.clone_from(&self.demand);
        let n = self.n_rows;
        for r in 0..n {
            let best = self.adj[r]
                .iter()
                .map(|&(c, cost)| self.pot[n + c as usize] - cost)
                .fold(f64::NEG_INFINITY, f64::max);
            self.pot[r] = best;
        }
    }

    fn make_dense(&mut self) {
        let m = self.cols.len();
        for r in 0..self.n_rows {
            self.adj[r] = (0..m).map(|c| (c as u32, self.cost(r, c))).collect();
        }
    }

    /// Routes every row's supply; `false` if the candidate graph is
    /// infeasible.
    fn route_all(&mut self) -> bool {
        for r in 0..self.n_rows {
            let mut left = self.supply[r];
            while left > 0 {
                match self.augment(r, left) {
                    Some(sent) => left -= sent,
                    None => return false,
                }
            }
        }
        true
    }

    fn augment(&mut self, source: usize, left: u64) -> Option<u64> {
        let n = self.n_rows;
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.seen.fill(0);
            self.done.fill(0);
            self.stamp = 1;
        }
        let stamp = self.stamp;
        self.settled.clear();
        let mut heap = BinaryHeap::new();
        self.dist[source] = 0.0;
        self.seen[source] = stamp;
        self.pred[source] = NONE;
        heap.push(HeapItem {
            dist: 0.0,
            node: source as u32,
        });
        let mut target = None;
        while let Some(HeapItem { dist: d, node }) = heap.pop() {
            let x = node as usize;
            if self.done[x] == stamp || d > self.dist[x] {
                continue;
            }
            self.done[x] = stamp;
            self.settled.push(node);
            if x >= n {
                let c = x - n;
                if self.spare[c] > 0 {
                    target = Some(x);
                    break;
                }
                for i in 0..self.col_flow[c].len() {
                    let r = self.col_flow[c][i].0 as usize;
                    let rc = -self.cost(r, c) + self.pot[x] - self.pot[r];
                    self.relax(&mut heap, x, r, d + rc.max(0.0));
                }
            } else {
                for i in 0..self.adj[x].len() {
                    let (c, cost) = self.adj[x][i];
                    let y = n + c as usize;
                    let rc = cost + self.pot[x] - self.pot[y];
                    self.relax(&mut heap, x, y, d + rc.max(0.0));
                }
            }
        }
        let target = target?;
        let delta = self.dist[target];
        for &v in &self.settled {
            let v = v as usize;
            self.pot[v] -= delta - self.dist[v];
        }
        let mut amount = left.min(self.spare[target - n]);
        let mut y = target;
        while self.pred[y] != NONE {
            let x = self.pred[y] as usize;
            if x >= n {
                amount = amount.min(flow_of(&self.row_flow[y], (x - n) as u32));
            }
            y = x;
        }
        let mut y = target;
        while self.pred[y] != NONE {
            let x = self.pred[y] as usize;
            if x < n {
                add_flow(&mut self.row_flow[x], (y - n) as u32, amount as i64);
                add_flow(&mut self.col_flow[y - n], x as u32, amount as i64);
            } else {
                add_flow(&mut self.row_flow[y], (x - n) as u32, -(amount as i64));
                add_flow(&mut self.col_flow[x - n], y as u32, -(amount as i64));
            }
            y = x;
        }
        self.spare[target - n] -= amount;
        self.augmentations += 1;
        Some(amount)
    }

    #[inline]
    fn relax(&mut self, heap: &mut BinaryHeap<HeapItem>, from: usize, to: usize, nd: f64) {
        let stamp = self.stamp;
        if self.done[to] == stamp {
            return;
        }
        if self.seen[to] != stamp || nd < self.dist[to] {
            self.seen[to] = stamp;
            self.dist[to] = nd;
            self.pred[to] = from as u32;
            heap.push(HeapItem {
                dist: nd,
                node: to as u32,
            });
        }
    }

    /// Adds dense pairs violating dual feasibility; `true` if any were found.
    fn repair(&mut self) -> bool {
        let (n, m) = (self.n_rows, self.cols.len());
        let mut any = false;
        let mut worst: Vec<(f64, u32)> = Vec::new();
        for r in 0..n {
            worst.clear();
            for c in 0..m {
                let rc = self.cost(r, c) + self.pot[r] - self.pot[n + c];
                if rc < -self.tol {
                    worst.push((rc, c as u32));
                }
            }
            if worst.is_empty() {
                continue;
            }
            if worst.len() > self.repair_per_row {
                worst.select_nth_unstable_by(self.repair_per_row - 1, |x, y| x.0.total_cmp(&y.0));
                worst.truncate(self.repair_per_row);
            }
            let list = &mut self.adj[r];
            for &(_, c) in &worst {
                if list.binary_search_by_key(&c, |e| e.0).is_err() {
                    let cost = sq_dist(&self.rows[r], &self.cols[c as usize]).sqrt();
                    list.push((c, cost));
                    any = true;
                }
            }
            list.sort_by_key(|e| e.0);
        }
        any
    }

    fn max_violation(&self) -> f64 {
        let n = self.n_rows;
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in 0..self.cols.len() {
                worst = worst.max(-(self.cost(r, c) + self.pot[r] - self.pot[n + c]));
            }
        }
        worst
    }
}

fn flow_of(list: &[(u32, u64)], key: u32) -> u64 {
    list.iter().find(|e| e.0 == key).map_or(0, |e| e.1)
}

fn add_flow(list: &mut Vec<(u32, u64)>, key: u32, delta: i64) {
    if let Some(i) = list.iter().position(|e| e.0 == key) {
        let v = list[i].1 as i64 + delta;
        debug_assert!(v >= 0);
        if v == 0 {
            list.swap_remove(i);
        } else {
            list[i].1 = v as u64;
        }
    } else {
        debug_assert!(delta > 0);
        list.push((key, delta as u64));
    }
}
