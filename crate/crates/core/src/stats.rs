//! Two-sample testing of mmm-spaces through their order-`n` distance
//! matrix distributions, and convergence tables of polynomial panels.
//!
//! A fixed order `n` only compares the order-`n` marginals of the two
//! distance matrix distributions; distinct spaces with equal marginals at
//! that order are not separated.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::dmat::{exact_law, exact_law_cost, sample_with, DistanceMatrixLaw, DistanceMatrixSample, EXACT_LAW_BUDGET};
use crate::numeric::{derive_seed, median, stream_rng};
use crate::poly::{evaluate_mc, evaluate_on_law, Polynomial};
use crate::space::{canonicalize, FiniteMmmSpace, Mark, MarkSpace};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoSampleResult {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
    pub order: usize,
    pub samples_per_side: usize,
    pub features: String,
}

const FEATURE_DESCRIPTION: &str =
    "energy distance on sorted per-point rows (mark embedding, sorted distances to the other points)";

/// Points reordered by (mark, weight, sorted distance row), so that
/// sampling does not depend on how the input is labelled.
fn sorted_canonical(space: &FiniteMmmSpace) -> Result<FiniteMmmSpace> {
    let c = canonicalize(space);
    let rows: Vec<Vec<f64>> = (0..c.len())
        .map(|i| {
            let mut r = c.distances().row(i).to_vec();
            r.sort_by(f64::total_cmp);
            r
        })
        .collect();
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&i, &j| {
        c.mark(i)
            .cmp(c.mark(j))
            .then(c.weight(i).total_cmp(&c.weight(j)))
            .then_with(|| lex(&rows[i], &rows[j]))
            .then(i.cmp(&j))
    });
    c.relabel(&order)
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

fn embed(mark: &Mark, ms: &MarkSpace) -> Vec<f64> {
    match (mark, ms) {
        (Mark::Label(l), MarkSpace::Discrete { labels }) => {
            let mut v = vec![0.0; labels.len()];
            v[*l as usize] = 1.0;
            v
        }
        (Mark::Point(p), _) => p.clone(),
        (Mark::Label(l), _) => vec![f64::from(*l)],
    }
}

/// Per-point rows `(mark embedding, sorted distances to the others)`,
/// sorted and concatenated; invariant under reordering the sample.
pub fn sample_features(s: &DistanceMatrixSample, ms: &MarkSpace) -> Vec<f64> {
    let n = s.order();
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut d: Vec<f64> = (0..n).filter(|&l| l != k).map(|l| s.dist(k, l)).collect();
            d.sort_by(f64::total_cmp);
            let mut row = embed(s.mark(k), ms);
            row.extend(d);
            row
        })
        .collect();
    rows.sort_by(|a, b| lex(a, b));
    rows.concat()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Pooled features reduced to distinct vectors, their pairwise distances,
/// and the feature index of every pooled sample.
struct Pool {
    dist: Vec<f64>,
    kinds: usize,
    index: Vec<usize>,
}

impl Pool {
    fn new(features: &[Vec<f64>]) -> Pool {
        let mut unique: Vec<Vec<f64>> = features.to_vec();
        unique.sort_by(|a, b| lex(a, b));
        unique.dedup();
        let index = features
            .iter()
            .map(|f| unique.binary_search_by(|u| lex(u, f)).expect("feature is pooled"))
            .collect();
        let k = unique.len();
        let mut dist = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..i {
                let d = euclid(&unique[i], &unique[j]);
                dist[i * k + j] = d;
                dist[j * k + i] = d;
            }
        }
        Pool { dist, kinds: k, index }
    }

    /// Energy distance between the first `m` pooled samples (as ordered by
    /// `perm`) and the rest.
    fn energy(&self, perm: &[usize], m: usize) -> f64 {
        let k = self.kinds;
        let mut ca = vec![0.0; k];
        let mut cb = vec![0.0; k];
        for (pos, &s) in perm.iter().enumerate() {
            if pos < m {
                ca[self.index[s]] += 1.0;
            } else {
                cb[self.index[s]] += 1.0;
            }
        }
        let (ma, mb) = (m as f64, (perm.len() - m) as f64);
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for u in 0..k {
            for v in 0..k {
                let d = self.dist[u * k + v];
                if d == 0.0 {
                    continue;
                }
                ab += ca[u] * cb[v] * d;
                aa += ca[u] * ca[v] * d;
                bb += cb[u] * cb[v] * d;
            }
        }
        2.0 * ab / (ma * mb) - aa / (ma * ma) - bb / (mb * mb)
    }
}

/// Permutation test of equal order-`n` distance matrix distributions.
///
/// Samples of `a` come from the stream of `seed`, samples of `b` from that
/// of `seed ^ 1`, and permutations from `seed & !1`; the pool always lists
/// the even-seeded side first. Hence `two_sample_test(b, a, n, m, p,
/// seed ^ 1)` reproduces `two_sample_test(a, b, n, m, p, seed)` exactly.
pub fn two_sample_test(
    a: &FiniteMmmSpace,
    b: &FiniteMmmSpace,
    n: usize,
    m: usize,
    permutations: usize,
    seed: u64,
) -> Result<TwoSampleResult> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("order {n} is below 2")));
    }
    if m < 20 {
        return Err(Error::InvalidParameter(format!("{m} samples per side is below 20")));
    }
    if permutations < 99 {
        return Err(Error::InvalidParameter(format!(
            "{permutations} permutations is below 99"
        )));
    }
    if a.mark_space() != b.mark_space() {
        return Err(Error::InvalidParameter(
            "the two spaces use different mark spaces".into(),
        ));
    }
    let ms = a.mark_space();
    let draw = |space: &FiniteMmmSpace, s: u64| -> Result<Vec<Vec<f64>>> {
        let sorted = sorted_canonical(space)?;
        let mut rng = stream_rng(s, 0);
        (0..m)
            .map(|_| Ok(sample_features(&sample_with(&sorted, n, &mut rng)?, ms)))
            .collect()
    };
    let fa = draw(a, seed)?;
    let fb = draw(b, seed ^ 1)?;
    let pooled: Vec<Vec<f64>> = if seed & 1 == 0 {
        [fa, fb].concat()
    } else {
        [fb, fa].concat()
    };
    let pool = Pool::new(&pooled);
    let identity: Vec<usize> = (0..2 * m).collect();
    let observed = pool.energy(&identity, m);
    let tol = 1e-12 * observed.abs().max(1.0);
    let perm_seed = seed & !1;
    let exceed: usize = (0..permutations)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(derive_seed(perm_seed, &[k as u64]), 0);
            let mut perm = identity.clone();
            perm.shuffle(&mut rng);
            usize::from(pool.energy(&perm, m) >= observed - tol)
        })
        .sum();
    Ok(TwoSampleResult {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
        permutations,
        order: n,
        samples_per_side: m,
        features: FEATURE_DESCRIPTION.into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub estimate: f64,
    pub stderr: f64,
    pub exact: bool,
}

/// What the sequence is compared with.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Space(FiniteMmmSpace),
    /// Reference panel values, one per column.
    Values(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trend {
    pub first_gap: f64,
    pub last_gap: f64,
    /// Gaps never increase along the sequence.
    pub monotone: bool,
    /// The last gap is strictly below the first.
    pub decreasing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub columns: Vec<String>,
    pub rows: Vec<String>,
    pub cells: Vec<Vec<Cell>>,
    pub target: Option<Vec<Cell>>,
    /// `gaps[k][c] = |Φ_c(x_k) − Φ_c(x)|`.
    pub gaps: Option<Vec<Vec<f64>>>,
    pub trends: Option<Vec<Trend>>,
}

/// Panel values on one space: exact when the order-`n` law fits the
/// enumeration budget, Monte Carlo with `mc` samples otherwise.
pub fn panel_values(space: &FiniteMmmSpace, panel: &[Polynomial], mc: usize, seed: u64) -> Result<Vec<Cell>> {
    let c = canonicalize(space);
    let mut laws: Vec<(usize, DistanceMatrixLaw)> = Vec::new();
    panel
        .iter()
        .enumerate()
        .map(|(col, phi)| {
            let n = phi.degree();
            if exact_law_cost(c.len(), n) <= EXACT_LAW_BUDGET {
                if !laws.iter().any(|(d, _)| *d == n) {
                    laws.push((n, exact_law(&c, n)?));
                }
                let law = &laws.iter().find(|(d, _)| *d == n).expect("cached").1;
                Ok(Cell {
                    estimate: evaluate_on_law(phi, law)?,
                    stderr: 0.0,
                    exact: true,
                })
            } else {
                let e = evaluate_mc(phi, &c, mc.max(2), derive_seed(seed, &[col as u64]))?;
                Ok(Cell {
                    estimate: e.estimate,
                    stderr: e.stderr,
                    exact: false,
                })
            }
        })
        .collect()
}

pub fn convergence_table(
    sequence: &[FiniteMmmSpace],
    target: Option<&Target>,
    panel: &[Polynomial],
    mc: usize,
    seed: u64,
) -> Result<ConvergenceTable> {
    if sequence.is_empty() {
        return Err(Error::Empty("space sequence"));
    }
    let cells: Vec<Vec<Cell>> = sequence
        .par_iter()
        .enumerate()
        .map(|(row, s)| panel_values(s, panel, mc, derive_seed(seed, &[row as u64])))
        .collect::<Result<_>>()?;
    let target_cells = match target {
        None => None,
        Some(Target::Space(x)) => Some(panel_values(x, panel, mc, derive_seed(seed, &[u64::MAX]))?),
        Some(Target::Values(v)) => {
            if v.len() != panel.len() {
                return Err(Error::LengthMismatch {
                    what: "target values",
                    expected: panel.len(),
                    got: v.len(),
                });
            }
            Some(
                v.iter()
                    .map(|&estimate| Cell {
                        estimate,
                        stderr: 0.0,
                        exact: true,
                    })
                    .collect(),
            )
        }
    };
    let gaps: Option<Vec<Vec<f64>>> = target_cells.as_ref().map(|t| {
        cells
            .iter()
            .map(|row| {
                row.iter()
                    .zip(t)
                    .map(|(c, x)| (c.estimate - x.estimate).abs())
                    .collect()
            })
            .collect()
    });
    let trends = gaps.as_ref().map(|g| {
        (0..panel.len())
            .map(|c| {
                let col: Vec<f64> = g.iter().map(|r| r[c]).collect();
                Trend {
                    first_gap: col[0],
                    last_gap: col[col.len() - 1],
                    monotone: col.windows(2).all(|w| w[1] <= w[0]),
                    decreasing: col[col.len() - 1] < col[0],
                }
            })
            .collect()
    });
    Ok(ConvergenceTable {
        columns: panel.iter().map(|p| p.description().to_string()).collect(),
        rows: sequence
            .iter()
            .enumerate()
            .map(|(k, s)| s.label().map_or_else(|| format!("space {k}"), str::to_string))
            .collect(),
        cells,
        target: target_cells,
        gaps,
        trends,
    })
}

/// Column-wise medians of several gap matrices, e.g. over replicate seeds.
pub fn median_gaps(tables: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let Some(first) = tables.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|r| {
            (0..first[r].len())
                .map(|c| {
                    let mut v: Vec<f64> = tables.iter().map(|t| t[r][c]).collect();
                    median(&mut v)
                })
                .collect()
        })
        .collect()
}
