//! Exact Prohorov distance between probability measures on a finite
//! (pseudo-)metric space.
//!
//! `d_Pr(p, q) = min{ε ≥ 0 : some coupling π has π(d > ε) ≤ ε}`.
//!
//! The minimal mass a coupling must put on pairs farther apart than `ε`,
//! `g(ε)`, is a right-continuous nonincreasing step function whose jumps sit
//! at the distinct pair distances. On each interval `[t_k, t_{k+1})` it is
//! one minus the maximum flow through the bipartite graph of pairs with
//! `d ≤ t_k`, and the answer is the first `max(t_k, g(t_k))` that stays
//! inside its interval. Flows run on integer capacities (probabilities
//! scaled by 10^12 and rounded), so each marginal is perturbed by at most
//! 5·10^-13 and `g` by at most the total rounding, below 2·10^-12 for the
//! support sizes used here.

use serde::Serialize;

use crate::matrix::Matrix;
use crate::{Error, Result};

const SCALE: f64 = 1e12;
const MARGINAL_TOL: f64 = 1e-12;

/// A probability measure on a finite set of atoms of a shared metric space.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct FinitePointMeasure {
    pub atoms: Vec<usize>,
    pub probs: Vec<f64>,
}

impl FinitePointMeasure {
    pub fn new(atoms: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let m = FinitePointMeasure { atoms, probs };
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<()> {
        check_probs(&self.probs)?;
        if self.atoms.len() != self.probs.len() {
            return Err(Error::LengthMismatch {
                what: "measure atoms",
                expected: self.probs.len(),
                got: self.atoms.len(),
            });
        }
        Ok(())
    }
}

fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidMeasure("no atoms".into()));
    }
    if let Some(x) = probs.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidMeasure(format!("negative or non-finite mass {x}")));
    }
    let sum = crate::numeric::mass_sum(probs.iter().copied());
    if (sum - 1.0).abs() > MARGINAL_TOL {
        return Err(Error::InvalidMeasure(format!("masses sum to {sum}")));
    }
    Ok(())
}

/// Joint probability matrix with rows indexed by `rows` (atoms of `p`) and
/// columns by `cols` (atoms of `q`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Coupling {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub matrix: Vec<Vec<f64>>,
}

impl Coupling {
    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols.len())
            .map(|j| self.matrix.iter().map(|r| r[j]).sum())
            .collect()
    }

    /// Mass on pairs with `cost > eps`.
    pub fn mass_beyond(&self, cost: impl Fn(usize, usize) -> f64, eps: f64) -> f64 {
        let mut s = 0.0;
        for (i, row) in self.matrix.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                if cost(i, j) > eps {
                    s += x;
                }
            }
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProhorovResult {
    pub value: f64,
    pub witness: Coupling,
}

/// Prohorov distance between `p` and `q` on the metric `metric`.
pub fn prohorov_exact(metric: &Matrix, p: &FinitePointMeasure, q: &FinitePointMeasure) -> Result<ProhorovResult> {
    p.check()?;
    q.check()?;
    let k = metric.rows();
    if metric.cols() != k {
        return Err(Error::InvalidMetric("metric matrix is not square".into()));
    }
    for &a in p.atoms.iter().chain(&q.atoms) {
        if a >= k {
            return Err(Error::IndexOutOfRange { index: a, order: k });
        }
    }
    let cost = metric.select(&p.atoms, &q.atoms);
    let (value, matrix) = prohorov_cross(&cost, &p.probs, &q.probs)?;
    Ok(ProhorovResult {
        value,
        witness: Coupling {
            rows: p.atoms.clone(),
            cols: q.atoms.clone(),
            matrix: matrix.to_rows(),
        },
    })
}

/// Prohorov distance from the cross-distance block alone: `cost[i][j]` is
/// the distance between atom `i` of `p` and atom `j` of `q`. Returns the
/// value and an attaining coupling.
pub fn prohorov_cross(cost: &Matrix, p: &[f64], q: &[f64]) -> Result<(f64, Matrix)> {
    check_probs(p)?;
    check_probs(q)?;
    if cost.rows() != p.len() || cost.cols() != q.len() {
        return Err(Error::LengthMismatch {
            what: "cost matrix",
            expected: p.len() * q.len(),
            got: cost.rows() * cost.cols(),
        });
    }
    if cost.as_slice().iter().any(|c| !(*c >= 0.0)) {
        return Err(Error::InvalidMetric("negative or NaN distance".into()));
    }
    let rows: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    let cols: Vec<usize> = (0..q.len()).filter(|&j| q[j] > 0.0).collect();

    let mut breaks: Vec<f64> = vec![0.0];
    for &i in &rows {
        for &j in &cols {
            breaks.push(cost.get(i, j));
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let cap_p: Vec<i64> = rows.iter().map(|&i| (p[i] * SCALE).round() as i64).collect();
    let cap_q: Vec<i64> = cols.iter().map(|&j| (q[j] * SCALE).round() as i64).collect();
    let total = cap_p.iter().sum::<i64>().max(cap_q.iter().sum::<i64>());

    let mut net = Bipartite::new(&cap_p, &cap_q);
    let mut admitted = vec![false; rows.len() * cols.len()];
    let mut chosen = None;
    for (k, &t) in breaks.iter().enumerate() {
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                let e = a * cols.len() + b;
                if !admitted[e] && cost.get(i, j) <= t {
                    admitted[e] = true;
                    net.open(a, b);
                }
            }
        }
        let flow = net.max_flow();
        let g = ((total - flow).max(0) as f64 / SCALE).min(1.0);
        let candidate = t.max(g);
        let next = breaks.get(k + 1).copied().unwrap_or(f64::INFINITY);
        if candidate < next {
            chosen = Some(candidate);
            break;
        }
    }
    let value = chosen.expect("the last interval is unbounded");

    // Routed mass on admissible pairs, residual mass by north-west corner.
    let mut pi = Matrix::zeros(p.len(), q.len());
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            let f = net.flow_on(a, b);
            if f > 0 {
                pi.set(i, j, f as f64 / SCALE);
            }
        }
    }
    let mut rest_p: Vec<f64> = (0..p.len())
        .map(|i| (p[i] - pi.row(i).iter().sum::<f64>()).max(0.0))
        .collect();
    let mut rest_q: Vec<f64> = (0..q.len())
        .map(|j| (q[j] - (0..p.len()).map(|i| pi.get(i, j)).sum::<f64>()).max(0.0))
        .collect();
    let (mut i, mut j) = (0, 0);
    while i < p.len() && j < q.len() {
        let m = rest_p[i].min(rest_q[j]);
        if m > 0.0 {
            pi.set(i, j, pi.get(i, j) + m);
            rest_p[i] -= m;
            rest_q[j] -= m;
        }
        if rest_p[i] <= rest_q[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok((value, pi))
}

/// `1 -` (largest mass a coupling of `p` and `q` can put on the pairs
/// allowed by `support`), on the same integer scale as [`prohorov_cross`].
pub fn unmatched_mass(p: &[f64], q: &[f64], support: impl Fn(usize, usize) -> bool) -> f64 {
    let rows: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    let cols: Vec<usize> = (0..q.len()).filter(|&j| q[j] > 0.0).collect();
    let cap_p: Vec<i64> = rows.iter().map(|&i| (p[i] * SCALE).round() as i64).collect();
    let cap_q: Vec<i64> = cols.iter().map(|&j| (q[j] * SCALE).round() as i64).collect();
    let total = cap_p.iter().sum::<i64>().max(cap_q.iter().sum::<i64>());
    let mut net = Bipartite::new(&cap_p, &cap_q);
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            if support(i, j) {
                net.open(a, b);
            }
        }
    }
    let flow = net.max_flow();
    ((total - flow).max(0) as f64 / SCALE).min(1.0)
}

/// Strassen-form check: `p(A) ≤ q(A^ε) + ε` for every subset `A` of the
/// support of `p`, with the closed thickening `A^ε = {j : d(i, j) ≤ ε, i ∈ A}`.
pub fn strassen_check(metric: &Matrix, p: &FinitePointMeasure, q: &FinitePointMeasure, eps: f64) -> Result<bool> {
    p.check()?;
    q.check()?;
    let cost = metric.select(&p.atoms, &q.atoms);
    strassen_check_cross(&cost, &p.probs, &q.probs, eps)
}

pub const STRASSEN_SUPPORT_BOUND: usize = 20;

pub fn strassen_check_cross(cost: &Matrix, p: &[f64], q: &[f64], eps: f64) -> Result<bool> {
    let rows: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    let cols: Vec<usize> = (0..q.len()).filter(|&j| q[j] > 0.0).collect();
    if rows.len() > STRASSEN_SUPPORT_BOUND || cols.len() > STRASSEN_SUPPORT_BOUND {
        return Err(Error::InvalidParameter(format!(
            "support of size {} exceeds the subset enumeration bound {STRASSEN_SUPPORT_BOUND}",
            rows.len().max(cols.len())
        )));
    }
    let near: Vec<u32> = rows
        .iter()
        .map(|&i| {
            cols.iter()
                .enumerate()
                .filter(|(_, &j)| cost.get(i, j) <= eps)
                .fold(0u32, |m, (b, _)| m | (1 << b))
        })
        .collect();
    let n = rows.len();
    let mut hood = vec![0u32; 1 << n];
    let mut mass = vec![0.0f64; 1 << n];
    for set in 1usize..(1 << n) {
        let low = set.trailing_zeros() as usize;
        let prev = set & (set - 1);
        hood[set] = hood[prev] | near[low];
        mass[set] = mass[prev] + p[rows[low]];
        let covered: f64 = cols
            .iter()
            .enumerate()
            .filter(|(b, _)| hood[set] >> b & 1 == 1)
            .map(|(_, &j)| q[j])
            .sum();
        if mass[set] > covered + eps {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Dinic max-flow on source → rows → cols → sink.
struct Bipartite {
    n_rows: usize,
    n_cols: usize,
    // Edge list with residual capacities; edge e and e^1 are a pair.
    to: Vec<usize>,
    cap: Vec<i64>,
    head: Vec<Vec<usize>>,
    pair_edge: Vec<usize>,
}

const INF: i64 = i64::MAX / 4;

impl Bipartite {
    fn new(cap_p: &[i64], cap_q: &[i64]) -> Self {
        let (r, c) = (cap_p.len(), cap_q.len());
        let nodes = r + c + 2;
        let mut g = Bipartite {
            n_rows: r,
            n_cols: c,
            to: Vec::new(),
            cap: Vec::new(),
            head: vec![Vec::new(); nodes],
            pair_edge: vec![0; r * c],
        };
        let (s, t) = (0, nodes - 1);
        for (a, &cp) in cap_p.iter().enumerate() {
            g.add_edge(s, 1 + a, cp);
        }
        for (b, &cq) in cap_q.iter().enumerate() {
            g.add_edge(1 + r + b, t, cq);
        }
        for a in 0..r {
            for b in 0..c {
                g.pair_edge[a * c + b] = g.add_edge(1 + a, 1 + r + b, 0);
            }
        }
        g
    }

    fn add_edge(&mut self, u: usize, v: usize, c: i64) -> usize {
        let e = self.to.len();
        self.to.push(v);
        self.cap.push(c);
        self.head[u].push(e);
        self.to.push(u);
        self.cap.push(0);
        self.head[v].push(e + 1);
        e
    }

    fn open(&mut self, a: usize, b: usize) {
        let e = self.pair_edge[a * self.n_cols + b];
        self.cap[e] = INF;
    }

    fn flow_on(&self, a: usize, b: usize) -> i64 {
        self.cap[self.pair_edge[a * self.n_cols + b] ^ 1]
    }

    fn sink(&self) -> usize {
        self.n_rows + self.n_cols + 1
    }

    /// Total flow into the sink after augmenting to optimality.
    fn max_flow(&mut self) -> i64 {
        let (s, t) = (0, self.sink());
        let nodes = self.head.len();
        loop {
            let mut level = vec![usize::MAX; nodes];
            level[s] = 0;
            let mut queue = std::collections::VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &e in &self.head[u] {
                    if self.cap[e] > 0 && level[self.to[e]] == usize::MAX {
                        level[self.to[e]] = level[u] + 1;
                        queue.push_back(self.to[e]);
                    }
                }
            }
            if level[t] == usize::MAX {
                break;
            }
            let mut iter = vec![0usize; nodes];
            while self.augment(s, t, INF, &level, &mut iter) > 0 {}
        }
        self.head[t].iter().map(|&e| self.cap[e]).sum()
    }

    fn augment(&mut self, u: usize, t: usize, limit: i64, level: &[usize], iter: &mut [usize]) -> i64 {
        if u == t {
            return limit;
        }
        while iter[u] < self.head[u].len() {
            let e = self.head[u][iter[u]];
            let v = self.to[e];
            if self.cap[e] > 0 && level[v] == level[u] + 1 {
                let pushed = self.augment(v, t, limit.min(self.cap[e]), level, iter);
                if pushed > 0 {
                    self.cap[e] -= pushed;
                    self.cap[e ^ 1] += pushed;
                    return pushed;
                }
            }
            iter[u] += 1;
        }
        0
    }
}
