//! The marked Gromov-Prohorov distance between finite mmm-spaces.
//!
//! Both spaces are embedded into one (pseudo-)metric space by gluing their
//! disjoint union along a cross-distance matrix `C`, and the pushforwards
//! of the weights onto `(X₁ ⊔ X₂) × I` are compared in the Prohorov metric
//! for `r_Z + r_I`.
//!
//! Upper bounds use the correspondence gluings: for a nonempty set `S` of
//! pairs and `β ≥ dis(S)/2`,
//! `C_ij = min_{(k,l) ∈ S} r₁(i,k) + β + r₂(l,j)` is a valid gluing with
//! `C ≤ β` on `S` and `C ≥ β` everywhere.
//!
//! For discrete marks the infimum has a finite form. A gluing with
//! `C_kl ≤ ε` on a set `P` of equal-mark pairs forces
//! `|r₁(k,k') − r₂(l,l')| ≤ C_kl + C_k'l' ≤ 2ε` on `P`, and the correspondence
//! gluing of `P` with `β = dis(P)/2` achieves it, so
//!
//! `d_MGP = min(1, min_P max(dis(P)/2, 1 − maxflow(P)))`
//!
//! where `maxflow(P)` is the largest mass a coupling can put on `P`. It
//! suffices to scan thresholds `τ` over the distortion values and take the
//! maximal cliques of the pair-compatibility graph at each `τ`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::matrix::Matrix;
use crate::numeric::{round_sig12, stream_rng, FixedSum};
use crate::prohorov::{prohorov_cross, unmatched_mass, Coupling, FinitePointMeasure};
use crate::space::{canonical_form, find_isometry_canonical, FiniteMmmSpace, Mark, EXACT_SEARCH_BOUND};
use crate::{Error, Result};

/// Absolute slack, relative to the largest entry, in gluing checks.
pub const GLUING_TOLERANCE: f64 = 1e-10;
/// Default number of inner Prohorov evaluations for [`mgp_upper`].
pub const DEFAULT_UPPER_BUDGET: usize = 256;
/// Default number of maximal cliques [`mgp_exact`] may examine.
pub const DEFAULT_EXACT_BUDGET: u128 = 1_000_000;

/// The disjoint union `X₁ ⊔ X₂` with fixed diagonal blocks and a cross block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GluedSpace {
    left: Matrix,
    right: Matrix,
    cross: Matrix,
}

impl GluedSpace {
    pub fn new(left: Matrix, right: Matrix, cross: Matrix) -> Result<Self> {
        if cross.rows() != left.rows() || cross.cols() != right.rows() {
            return Err(Error::LengthMismatch {
                what: "cross matrix",
                expected: left.rows() * right.rows(),
                got: cross.rows() * cross.cols(),
            });
        }
        let g = GluedSpace { left, right, cross };
        g.check()?;
        Ok(g)
    }

    pub fn left(&self) -> &Matrix {
        &self.left
    }

    pub fn right(&self) -> &Matrix {
        &self.right
    }

    pub fn cross(&self) -> &Matrix {
        &self.cross
    }

    pub fn len(&self) -> usize {
        self.left.rows() + self.right.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The full `(N₁+N₂)²` distance matrix, left points first.
    pub fn matrix(&self) -> Matrix {
        let n1 = self.left.rows();
        Matrix::from_fn(self.len(), self.len(), |i, j| match (i < n1, j < n1) {
            (true, true) => self.left.get(i, j),
            (false, false) => self.right.get(i - n1, j - n1),
            (true, false) => self.cross.get(i, j - n1),
            (false, true) => self.cross.get(j, i - n1),
        })
    }

    /// The four families of gluing inequalities, with the first failure
    /// reported by its indices.
    pub fn check(&self) -> Result<()> {
        let (r1, r2, c) = (&self.left, &self.right, &self.cross);
        let scale = r1.max().max(r2.max()).max(c.max()).max(1.0);
        let tol = GLUING_TOLERANCE * scale;
        if let Some(x) = c.as_slice().iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidGluing(format!(
                "cross distance {x} is negative or non-finite"
            )));
        }
        let fail = |what: String, excess: f64| Err(Error::InvalidGluing(format!("{what} fails by {excess}")));
        let (n1, n2) = (r1.rows(), r2.rows());
        for i in 0..n1 {
            for i2 in 0..n1 {
                for j in 0..n2 {
                    let e = c.get(i, j) - r1.get(i, i2) - c.get(i2, j);
                    if e > tol {
                        return fail(format!("C({i},{j}) <= r1({i},{i2}) + C({i2},{j})"), e);
                    }
                    let e = r1.get(i, i2) - c.get(i, j) - c.get(i2, j);
                    if e > tol {
                        return fail(format!("r1({i},{i2}) <= C({i},{j}) + C({i2},{j})"), e);
                    }
                }
            }
        }
        for j in 0..n2 {
            for j2 in 0..n2 {
                for i in 0..n1 {
                    let e = c.get(i, j) - c.get(i, j2) - r2.get(j2, j);
                    if e > tol {
                        return fail(format!("C({i},{j}) <= C({i},{j2}) + r2({j2},{j})"), e);
                    }
                    let e = r2.get(j, j2) - c.get(i, j) - c.get(i, j2);
                    if e > tol {
                        return fail(format!("r2({j},{j2}) <= C({i},{j}) + C({i},{j2})"), e);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn transpose(&self) -> GluedSpace {
        GluedSpace {
            left: self.right.clone(),
            right: self.left.clone(),
            cross: self.cross.transpose(),
        }
    }
}

/// A gluing together with the two pushforward measures on the product
/// space. Atom `k` is the pair `(point k of X₁ ⊔ X₂, its mark)`; only these
/// atoms carry mass, so the metric is materialized on them alone.
#[derive(Clone, Debug, PartialEq)]
pub struct GluedProduct {
    pub space: GluedSpace,
    pub marks: Vec<Mark>,
    pub metric: Matrix,
    pub left: FinitePointMeasure,
    pub right: FinitePointMeasure,
}

fn same_mark_space(a: &FiniteMmmSpace, b: &FiniteMmmSpace) -> Result<()> {
    if a.mark_space() != b.mark_space() {
        return Err(Error::InvalidParameter(
            "the two spaces use different mark spaces".into(),
        ));
    }
    Ok(())
}

/// Weights rescaled to sum to one.
fn probs(space: &FiniteMmmSpace) -> Vec<f64> {
    let total: f64 = space.weights().iter().sum();
    space.weights().iter().map(|w| w / total).collect()
}

pub fn glue(a: &FiniteMmmSpace, b: &FiniteMmmSpace, cross: &Matrix) -> Result<GluedProduct> {
    same_mark_space(a, b)?;
    let space = GluedSpace::new(a.distances().clone(), b.distances().clone(), cross.clone())?;
    let marks: Vec<Mark> = a.marks().iter().chain(b.marks()).cloned().collect();
    let z = space.matrix();
    let ms = a.mark_space();
    let metric = Matrix::from_fn(marks.len(), marks.len(), |i, j| {
        z.get(i, j) + ms.distance(&marks[i], &marks[j])
    });
    let n1 = a.len();
    let left = FinitePointMeasure::new((0..n1).collect(), probs(a))?;
    let right = FinitePointMeasure::new((n1..n1 + b.len()).collect(), probs(b))?;
    Ok(GluedProduct {
        space,
        marks,
        metric,
        left,
        right,
    })
}

/// `max |r₁(k,k') − r₂(l,l')|` over pairs of pairs in `support`.
pub fn distortion(r1: &Matrix, r2: &Matrix, support: &[(usize, usize)]) -> f64 {
    let mut d: f64 = 0.0;
    for &(k, l) in support {
        for &(k2, l2) in support {
            d = d.max((r1.get(k, k2) - r2.get(l, l2)).abs());
        }
    }
    d
}

fn correspondence_cross(r1: &Matrix, r2: &Matrix, support: &[(usize, usize)], beta: f64) -> Matrix {
    Matrix::from_fn(r1.rows(), r2.rows(), |i, j| {
        support
            .iter()
            .map(|&(k, l)| r1.get(i, k) + beta + r2.get(l, j))
            .fold(f64::INFINITY, f64::min)
    })
}

/// The correspondence gluing of `support` at level `beta`.
pub fn correspondence_gluing(
    a: &FiniteMmmSpace,
    b: &FiniteMmmSpace,
    support: &[(usize, usize)],
    beta: f64,
) -> Result<GluedSpace> {
    if support.is_empty() {
        return Err(Error::Empty("correspondence support"));
    }
    for &(k, l) in support {
        if k >= a.len() || l >= b.len() {
            return Err(Error::IndexOutOfRange {
                index: k.max(l),
                order: a.len().min(b.len()),
            });
        }
    }
    let dis = distortion(a.distances(), b.distances(), support);
    if beta < dis / 2.0 {
        return Err(Error::InvalidGluing(format!(
            "level {beta} is below half the distortion {dis}"
        )));
    }
    let cross = correspondence_cross(a.distances(), b.distances(), support, beta);
    GluedSpace::new(a.distances().clone(), b.distances().clone(), cross)
}

/// `C₁₃(i,k) = min_j C₁₂(i,j) + C₂₃(j,k)`, returned as the full metric on
/// `X₁ ⊔ X₂ ⊔ X₃`.
pub fn glue_three(g12: &GluedSpace, g23: &GluedSpace) -> Result<Matrix> {
    if g12.right != g23.left {
        return Err(Error::InvalidGluing(
            "the two gluings do not share the middle block".into(),
        ));
    }
    let (n1, n2, n3) = (g12.left.rows(), g12.right.rows(), g23.right.rows());
    if n2 == 0 {
        return Err(Error::Empty("middle space"));
    }
    let c13 = Matrix::from_fn(n1, n3, |i, k| {
        (0..n2)
            .map(|j| g12.cross.get(i, j) + g23.cross.get(j, k))
            .fold(f64::INFINITY, f64::min)
    });
    let (o2, o3) = (n1, n1 + n2);
    Ok(Matrix::from_fn(n1 + n2 + n3, n1 + n2 + n3, |x, y| {
        let block = |t: usize| {
            if t < o2 {
                0
            } else if t < o3 {
                1
            } else {
                2
            }
        };
        let local = |t: usize| [t, t - o2.min(t), t - o3.min(t)][block(t)];
        let (bx, by, lx, ly) = (block(x), block(y), local(x), local(y));
        match (bx, by) {
            (0, 0) => g12.left.get(lx, ly),
            (1, 1) => g12.right.get(lx, ly),
            (2, 2) => g23.right.get(lx, ly),
            (0, 1) => g12.cross.get(lx, ly),
            (1, 0) => g12.cross.get(ly, lx),
            (1, 2) => g23.cross.get(lx, ly),
            (2, 1) => g23.cross.get(ly, lx),
            (0, 2) => c13.get(lx, ly),
            _ => c13.get(ly, lx),
        }
    }))
}

/// Largest triangle-inequality excess `d(i,k) − d(i,j) − d(j,k)` (0 when
/// none is positive).
pub fn triangle_excess(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                worst = worst.max(m.get(i, k) - m.get(i, j) - m.get(j, k));
            }
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    IdentityIsh,
    CouplingSearch,
    RandomRestarts,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::IdentityIsh => "identity-ish",
            Strategy::CouplingSearch => "coupling-search",
            Strategy::RandomRestarts => "random-restarts",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity-ish" => Ok(Strategy::IdentityIsh),
            "coupling-search" => Ok(Strategy::CouplingSearch),
            "random-restarts" => Ok(Strategy::RandomRestarts),
            _ => Err(Error::InvalidParameter(format!("unknown strategy {s:?}"))),
        }
    }
}

/// A d_Pr value realized by an explicit gluing and coupling, on the
/// original point indices.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub value: f64,
    pub support: Vec<(usize, usize)>,
    pub beta: f64,
    pub cross: Matrix,
    pub coupling: Coupling,
}

impl Witness {
    fn transpose(self) -> Witness {
        let c = self.coupling;
        Witness {
            value: self.value,
            support: self.support.into_iter().map(|(k, l)| (l, k)).collect(),
            beta: self.beta,
            cross: self.cross.transpose(),
            coupling: Coupling {
                rows: c.cols,
                cols: c.rows,
                matrix: (0..c.matrix.first().map_or(0, Vec::len))
                    .map(|j| c.matrix.iter().map(|r| r[j]).collect())
                    .collect(),
            },
        }
    }
}

/// Orders a pair of spaces the same way whichever comes first.
fn mirrored(a: &FiniteMmmSpace, b: &FiniteMmmSpace) -> bool {
    let (ka, kb) = (crate::io::space_to_json(a), crate::io::space_to_json(b));
    ka > kb
}

/// The canonical forms of both spaces and the data shared by all searches.
struct Problem {
    a: FiniteMmmSpace,
    b: FiniteMmmSpace,
    reps_a: Vec<usize>,
    reps_b: Vec<usize>,
    p: Vec<f64>,
    q: Vec<f64>,
    mark_cost: Matrix,
    /// All pairs, most promising first.
    pairs: Vec<(usize, usize)>,
}

fn representatives(class: &[Option<usize>], n: usize) -> Vec<usize> {
    let mut reps = vec![usize::MAX; n];
    for (i, c) in class.iter().enumerate() {
        if let Some(k) = *c {
            if reps[k] == usize::MAX {
                reps[k] = i;
            }
        }
    }
    reps
}

impl Problem {
    fn new(a: &FiniteMmmSpace, b: &FiniteMmmSpace) -> Result<Problem> {
        same_mark_space(a, b)?;
        let (ca, class_a) = canonical_form(a);
        let (cb, class_b) = canonical_form(b);
        let (p, q) = (probs(&ca), probs(&cb));
        let ms = ca.mark_space().clone();
        let mark_cost = Matrix::from_fn(ca.len(), cb.len(), |i, j| ms.distance(ca.mark(i), cb.mark(j)));
        let ecc =
            |s: &FiniteMmmSpace, w: &[f64], i: usize| -> f64 { (0..s.len()).map(|j| w[j] * s.distance(i, j)).sum() };
        let ea: Vec<f64> = (0..ca.len()).map(|i| ecc(&ca, &p, i)).collect();
        let eb: Vec<f64> = (0..cb.len()).map(|j| ecc(&cb, &q, j)).collect();
        let mut pairs: Vec<(usize, usize)> = (0..ca.len()).flat_map(|k| (0..cb.len()).map(move |l| (k, l))).collect();
        let key = |&(k, l): &(usize, usize)| (mark_cost.get(k, l), (ea[k] - eb[l]).abs(), -p[k].min(q[l]));
        pairs.sort_by(|x, y| {
            let (kx, ky) = (key(x), key(y));
            kx.0.total_cmp(&ky.0)
                .then(kx.1.total_cmp(&ky.1))
                .then(kx.2.total_cmp(&ky.2))
                .then(x.cmp(y))
        });
        Ok(Problem {
            reps_a: representatives(&class_a, ca.len()),
            reps_b: representatives(&class_b, cb.len()),
            a: ca,
            b: cb,
            p,
            q,
            mark_cost,
            pairs,
        })
    }

    fn dis(&self, x: (usize, usize), y: (usize, usize)) -> f64 {
        (self.a.distance(x.0, y.0) - self.b.distance(x.1, y.1)).abs()
    }

    /// d_Pr under the correspondence gluing of `s` at `β = dis(s)/2`.
    fn value(&self, s: &[(usize, usize)]) -> Result<f64> {
        let beta = distortion(self.a.distances(), self.b.distances(), s) / 2.0;
        let c = correspondence_cross(self.a.distances(), self.b.distances(), s, beta);
        let cost = Matrix::from_fn(c.rows(), c.cols(), |i, j| c.get(i, j) + self.mark_cost.get(i, j));
        Ok(prohorov_cross(&cost, &self.p, &self.q)?.0)
    }

    fn thresholds(&self, limit: usize) -> Vec<f64> {
        let v = &self.pairs;
        let mut t: Vec<f64> = if v.len() <= 40 {
            let mut t = Vec::with_capacity(v.len() * v.len());
            for &x in v {
                for &y in v {
                    t.push(self.dis(x, y));
                }
            }
            t
        } else {
            let d = self.a.diameter().max(self.b.diameter());
            (0..=32).map(|j| d * j as f64 / 32.0).collect()
        };
        t.push(0.0);
        t.sort_by(f64::total_cmp);
        t.dedup();
        let limit = limit.max(2);
        if t.len() > limit {
            let last = t.len() - 1;
            t = (0..limit).map(|i| t[i * last / (limit - 1)]).collect();
            t.dedup();
        }
        t
    }

    fn greedy(&self, order: &[(usize, usize)], tau: f64) -> Vec<(usize, usize)> {
        let mut s: Vec<(usize, usize)> = Vec::new();
        for &x in order {
            if s.iter().all(|&y| self.dis(x, y) <= tau) {
                s.push(x);
            }
        }
        s
    }

    /// Lifts a canonical support to original indices and evaluates it there.
    fn witness(&self, a: &FiniteMmmSpace, b: &FiniteMmmSpace, s: &[(usize, usize)]) -> Result<Witness> {
        let support: Vec<(usize, usize)> = s.iter().map(|&(k, l)| (self.reps_a[k], self.reps_b[l])).collect();
        let beta = distortion(a.distances(), b.distances(), &support) / 2.0;
        let cross = correspondence_cross(a.distances(), b.distances(), &support, beta);
        let ms = a.mark_space();
        let cost = Matrix::from_fn(a.len(), b.len(), |i, j| {
            cross.get(i, j) + ms.distance(a.mark(i), b.mark(j))
        });
        let (value, pi) = prohorov_cross(&cost, &probs(a), &probs(b))?;
        Ok(Witness {
            value,
            support,
            beta,
            cross,
            coupling: Coupling {
                rows: (0..a.len()).collect(),
                cols: (0..b.len()).collect(),
                matrix: pi.to_rows(),
            },
        })
    }
}

/// Best support found so far; ties keep the earlier one.
struct Best {
    value: f64,
    support: Vec<(usize, usize)>,
    evals: usize,
}

impl Best {
    fn offer(&mut self, problem: &Problem, s: Vec<(usize, usize)>) -> Result<()> {
        if s.is_empty() {
            return Ok(());
        }
        let v = problem.value(&s)?;
        self.evals += 1;
        if v < self.value {
            self.value = v;
            self.support = s;
        }
        Ok(())
    }
}

fn identity_ish(problem: &Problem, budget: usize) -> Result<Best> {
    let mut best = Best {
        value: f64::INFINITY,
        support: Vec::new(),
        evals: 0,
    };
    best.offer(problem, vec![problem.pairs[0]])?;
    let (a, b) = (&problem.a, &problem.b);
    if a.len() <= EXACT_SEARCH_BOUND && b.len() <= EXACT_SEARCH_BOUND {
        if let Some(phi) = find_isometry_canonical(a, b)? {
            best.offer(problem, phi.into_iter().enumerate().collect())?;
            return Ok(best);
        }
        // Same shape with different weights: the graph of a weight-free
        // isometry leaves only a mass mismatch.
        if a.len() == b.len() {
            let flat = |s: &FiniteMmmSpace| {
                FiniteMmmSpace::uniform(s.distances().clone(), s.marks().to_vec(), s.mark_space().clone())
            };
            if let Some(phi) = find_isometry_canonical(&flat(a)?, &flat(b)?)? {
                best.offer(problem, phi.into_iter().enumerate().collect())?;
            }
        }
    }
    let mut last: Vec<(usize, usize)> = Vec::new();
    for tau in problem.thresholds(budget.saturating_sub(1)) {
        let s = problem.greedy(&problem.pairs, tau);
        if s != last {
            best.offer(problem, s.clone())?;
            last = s;
        }
    }
    Ok(best)
}

/// Best-improvement toggling of single pairs until no move helps or the
/// evaluation budget runs out.
fn descend(problem: &Problem, best: &mut Best, budget: usize) -> Result<()> {
    loop {
        let mut step: Option<(f64, Vec<(usize, usize)>)> = None;
        let current = best.support.clone();
        let mut moves: Vec<Vec<(usize, usize)>> = Vec::new();
        if current.len() > 1 {
            for i in 0..current.len() {
                let mut s = current.clone();
                s.remove(i);
                moves.push(s);
            }
        }
        for &x in &problem.pairs {
            if !current.contains(&x) {
                let mut s = current.clone();
                s.push(x);
                moves.push(s);
            }
        }
        for s in moves {
            if best.evals >= budget {
                break;
            }
            let v = problem.value(&s)?;
            best.evals += 1;
            if v < step.as_ref().map_or(best.value, |t| t.0) {
                step = Some((v, s));
            }
        }
        match step {
            Some((v, s)) => {
                best.value = v;
                best.support = s;
            }
            None => return Ok(()),
        }
        if best.evals >= budget {
            return Ok(());
        }
    }
}

fn search(problem: &Problem, strategy: Strategy, budget: usize, seed: u64) -> Result<Best> {
    let budget = budget.max(1);
    match strategy {
        Strategy::IdentityIsh => identity_ish(problem, budget),
        Strategy::CouplingSearch => {
            let mut best = identity_ish(problem, budget / 2)?;
            if best.value > 0.0 {
                let limit = budget.max(best.evals);
                descend(problem, &mut best, limit)?;
            }
            Ok(best)
        }
        Strategy::RandomRestarts => {
            let base = identity_ish(problem, budget / 4)?;
            if base.value == 0.0 {
                return Ok(base);
            }
            let rest = budget.saturating_sub(base.evals);
            let restarts = (rest / 16).clamp(1, 32);
            let each = (rest / restarts).max(1);
            let thresholds = problem.thresholds(64);
            let runs: Vec<Result<Best>> = (0..restarts)
                .into_par_iter()
                .map(|r| {
                    let mut rng = stream_rng(seed, r as u64);
                    let mut order = problem.pairs.clone();
                    order.shuffle(&mut rng);
                    let tau = thresholds[rng.random_range(0..thresholds.len())];
                    let mut best = Best {
                        value: f64::INFINITY,
                        support: Vec::new(),
                        evals: 0,
                    };
                    best.offer(problem, problem.greedy(&order, tau))?;
                    descend(problem, &mut best, each)?;
                    Ok(best)
                })
                .collect();
            let mut best = base;
            for run in runs {
                let run = run?;
                best.evals += run.evals;
                if run.value < best.value {
                    best.value = run.value;
                    best.support = run.support;
                }
            }
            Ok(best)
        }
    }
}

/// An upper bound on d_MGP from correspondence gluings found by `strategy`
/// within `budget` inner Prohorov evaluations.
pub fn mgp_upper(
    a: &FiniteMmmSpace,
    b: &FiniteMmmSpace,
    strategy: Strategy,
    budget: usize,
    seed: u64,
) -> Result<Witness> {
    if mirrored(a, b) {
        return Ok(mgp_upper(b, a, strategy, budget, seed)?.transpose());
    }
    let problem = Problem::new(a, b)?;
    let best = search(&problem, strategy, budget, seed)?;
    problem.witness(a, b, &best.support)
}

/// Lower bound from the mark marginals (order 1) and half the Prohorov
/// distance of the laws of `r₁₂` (order 2).
pub fn mgp_lower(a: &FiniteMmmSpace, b: &FiniteMmmSpace, orders: &[usize]) -> Result<f64> {
    same_mark_space(a, b)?;
    if let Some(o) = orders.iter().find(|&&o| o != 1 && o != 2) {
        return Err(Error::InvalidParameter(format!("lower-bound order {o} is not 1 or 2")));
    }
    if mirrored(a, b) {
        return mgp_lower(b, a, orders);
    }
    let mut lower: f64 = 0.0;
    if orders.contains(&1) {
        let (ma, mb) = (crate::dmat::mark_marginal(a), crate::dmat::mark_marginal(b));
        let ms = a.mark_space();
        let (ua, pa): (Vec<&Mark>, Vec<f64>) = ma.iter().map(|(m, w)| (m, *w)).unzip();
        let (ub, pb): (Vec<&Mark>, Vec<f64>) = mb.iter().map(|(m, w)| (m, *w)).unzip();
        let cost = Matrix::from_fn(ua.len(), ub.len(), |i, j| ms.distance(ua[i], ub[j]));
        lower = lower.max(prohorov_cross(&cost, &normalized(pa), &normalized(pb))?.0);
    }
    if orders.contains(&2) {
        let (xa, pa) = distance_law(a);
        let (xb, pb) = distance_law(b);
        let cost = Matrix::from_fn(xa.len(), xb.len(), |i, j| (xa[i] - xb[j]).abs());
        lower = lower.max(0.5 * prohorov_cross(&cost, &pa, &pb)?.0);
    }
    Ok(lower)
}

fn normalized(w: Vec<f64>) -> Vec<f64> {
    let t: f64 = w.iter().sum();
    w.into_iter().map(|x| x / t).collect()
}

/// Atoms and masses of the law of `r₁₂` under two independent draws.
fn distance_law(space: &FiniteMmmSpace) -> (Vec<f64>, Vec<f64>) {
    let (c, _) = canonical_form(space);
    let p = probs(&c);
    let mut acc: std::collections::BTreeMap<u64, FixedSum> = std::collections::BTreeMap::new();
    for i in 0..c.len() {
        for j in 0..c.len() {
            // Nonnegative doubles order like their bit patterns.
            let d = round_sig12(c.distance(i, j)).max(0.0);
            acc.entry(d.to_bits()).or_default().add(p[i] * p[j]);
        }
    }
    let (x, w): (Vec<f64>, Vec<f64>) = acc.into_iter().map(|(k, s)| (f64::from_bits(k), s.value())).unzip();
    (x, normalized(w))
}

/// The exact value for discrete marks with an attaining gluing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactResult {
    pub value: f64,
    /// Guaranteed gap between `value` and the infimum; the search is
    /// exhaustive, so only floating-point error remains.
    pub slack: f64,
    pub cliques: u128,
    pub witness: Witness,
}

/// Exact `d_MGP` for discrete marks by the clique scan described in the
/// module docs. Fails with [`Error::BudgetExceeded`] once more than
/// `budget` maximal cliques would have to be examined.
pub fn mgp_exact(a: &FiniteMmmSpace, b: &FiniteMmmSpace, budget: u128) -> Result<ExactResult> {
    same_mark_space(a, b)?;
    if !a.mark_space().is_discrete() {
        return Err(Error::Unsupported("exact search needs a discrete mark space".into()));
    }
    if mirrored(a, b) {
        let r = mgp_exact(b, a, budget)?;
        return Ok(ExactResult {
            witness: r.witness.transpose(),
            ..r
        });
    }
    let problem = Problem::new(a, b)?;
    let v: Vec<(usize, usize)> = problem
        .pairs
        .iter()
        .copied()
        .filter(|&(k, l)| problem.mark_cost.get(k, l) == 0.0)
        .collect();
    if v.len() > 128 {
        return Err(Error::BudgetExceeded {
            required: v.len() as u128,
            budget: 128,
        });
    }
    let mut taus: Vec<f64> = v
        .iter()
        .flat_map(|&x| v.iter().map(move |&y| (x, y)))
        .map(|(x, y)| problem.dis(x, y))
        .collect();
    taus.push(0.0);
    taus.sort_by(f64::total_cmp);
    taus.dedup();

    let mut best = 1.0f64;
    let mut best_set: Vec<(usize, usize)> = Vec::new();
    let mut cliques: u128 = 0;
    for &tau in &taus {
        if tau / 2.0 >= best {
            break;
        }
        let adj: Vec<u128> = v
            .iter()
            .map(|&x| {
                v.iter()
                    .enumerate()
                    .filter(|(_, &y)| y != x && problem.dis(x, y) <= tau)
                    .fold(0u128, |m, (j, _)| m | 1 << j)
            })
            .collect();
        let all = if v.len() == 128 {
            u128::MAX
        } else {
            (1u128 << v.len()) - 1
        };
        let mut found: Vec<u128> = Vec::new();
        bron_kerbosch(&adj, 0, all, 0, &mut found, &mut cliques, budget)?;
        for set in found {
            let members: Vec<(usize, usize)> = (0..v.len()).filter(|&j| set >> j & 1 == 1).map(|j| v[j]).collect();
            let g = unmatched_mass(&problem.p, &problem.q, |i, j| members.contains(&(i, j)));
            let val = (tau / 2.0).max(g);
            if val < best {
                best = val;
                best_set = members;
            }
        }
    }
    if best_set.is_empty() {
        best_set.push(problem.pairs[0]);
    }
    let witness = problem.witness(a, b, &best_set)?;
    Ok(ExactResult {
        value: best,
        slack: 0.0,
        cliques,
        witness,
    })
}

fn bron_kerbosch(
    adj: &[u128],
    r: u128,
    mut p: u128,
    mut x: u128,
    out: &mut Vec<u128>,
    count: &mut u128,
    budget: u128,
) -> Result<()> {
    if p == 0 && x == 0 {
        *count += 1;
        if *count > budget {
            return Err(Error::BudgetExceeded {
                required: *count,
                budget,
            });
        }
        out.push(r);
        return Ok(());
    }
    let pivot = (p | x).trailing_zeros() as usize;
    let mut cand = p & !adj[pivot];
    while cand != 0 {
        let v = cand.trailing_zeros() as usize;
        cand &= cand - 1;
        bron_kerbosch(adj, r | 1 << v, p & adj[v], x & adj[v], out, count, budget)?;
        p &= !(1 << v);
        x |= 1 << v;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MgpOptions {
    pub strategy: Strategy,
    pub budget: usize,
    pub seed: u64,
    /// Run the exact search when the mark space is discrete.
    pub exact: bool,
    pub exact_budget: u128,
}

impl Default for MgpOptions {
    fn default() -> Self {
        MgpOptions {
            strategy: Strategy::IdentityIsh,
            budget: DEFAULT_UPPER_BUDGET,
            seed: 0,
            exact: false,
            exact_budget: DEFAULT_EXACT_BUDGET,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MgpResult {
    pub lower: f64,
    pub upper: f64,
    pub exact: Option<f64>,
    pub witness_cross: Option<Matrix>,
    pub witness_coupling: Option<Coupling>,
}

/// Lower bound, upper bound and, when requested and possible, the exact
/// value. A budget overrun in the exact search leaves `exact` empty.
pub fn mgp(a: &FiniteMmmSpace, b: &FiniteMmmSpace, opts: &MgpOptions) -> Result<MgpResult> {
    let lower = mgp_lower(a, b, &[1, 2])?;
    let mut witness = mgp_upper(a, b, opts.strategy, opts.budget, opts.seed)?;
    let mut exact = None;
    if opts.exact && a.mark_space().is_discrete() {
        match mgp_exact(a, b, opts.exact_budget) {
            Ok(r) => {
                exact = Some(r.value);
                if r.witness.value < witness.value {
                    witness = r.witness;
                }
            }
            Err(Error::BudgetExceeded { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(MgpResult {
        lower,
        upper: witness.value,
        exact,
        witness_cross: Some(witness.cross),
        witness_coupling: Some(witness.coupling),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::MarkSpace;

    fn two_point(d: f64, marks: [u32; 2]) -> FiniteMmmSpace {
        FiniteMmmSpace::uniform(
            Matrix::from_upper(2, &[d]).unwrap(),
            vec![Mark::Label(marks[0]), Mark::Label(marks[1])],
            MarkSpace::discrete_range(2),
        )
        .unwrap()
    }

    fn point(m: u32) -> FiniteMmmSpace {
        FiniteMmmSpace::point(Mark::Label(m), MarkSpace::discrete_range(2)).unwrap()
    }

    #[test]
    fn identity_gluing_of_reference() {
        let a = two_point(1.0, [0, 1]);
        let g = glue(&a, &a, a.distances()).unwrap();
        let r = crate::prohorov::prohorov_exact(&g.metric, &g.left, &g.right).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn gluing_examples() {
        let (x, y) = (point(0), point(0));
        assert!(glue(&x, &y, &Matrix::from_rows(&[vec![3.5]]).unwrap()).is_ok());
        let a = two_point(1.0, [0, 0]);
        // Identifying both points of one copy with one point of the other
        // would put the two original points at distance 0.
        assert!(matches!(
            glue(&a, &a, &Matrix::zeros(2, 2)),
            Err(Error::InvalidGluing(_))
        ));
        assert!(glue(&a, &a, a.distances()).is_ok());
        let bad = Matrix::from_rows(&[vec![0.0, 5.0], vec![1.0, 0.0]]).unwrap();
        let err = glue(&a, &a, &bad).unwrap_err();
        assert!(matches!(err, Error::InvalidGluing(_)), "{err}");
    }

    #[test]
    fn one_point_spaces() {
        let same = mgp_upper(&point(0), &point(0), Strategy::IdentityIsh, 10, 0).unwrap();
        assert_eq!(same.value, 0.0);
        assert_eq!(same.cross.get(0, 0), 0.0);
        let diff = mgp_upper(&point(0), &point(1), Strategy::IdentityIsh, 10, 0).unwrap();
        assert_eq!(diff.value, 1.0);
        assert_eq!(mgp_lower(&point(0), &point(1), &[1, 2]).unwrap(), 1.0);
        assert_eq!(mgp_exact(&point(0), &point(1), 100).unwrap().value, 1.0);
    }

    #[test]
    fn relabeled_copy_is_at_zero() {
        let a = FiniteMmmSpace::new(
            Matrix::from_upper(3, &[1.0, 2.0, 2.5]).unwrap(),
            vec![Mark::Label(0), Mark::Label(1), Mark::Label(1)],
            vec![0.2, 0.3, 0.5],
            MarkSpace::discrete_range(2),
        )
        .unwrap();
        let b = a.relabel(&[2, 0, 1]).unwrap();
        for s in [
            Strategy::IdentityIsh,
            Strategy::CouplingSearch,
            Strategy::RandomRestarts,
        ] {
            assert!(mgp_upper(&a, &b, s, 50, 1).unwrap().value <= 1e-12);
        }
        assert!(mgp_exact(&a, &b, 1000).unwrap().value <= 1e-12);
        assert_eq!(mgp_lower(&a, &b, &[1, 2]).unwrap(), 0.0);
    }

    #[test]
    fn reference_against_stretched_copy() {
        let (a, b) = (two_point(1.0, [0, 1]), two_point(2.0, [0, 1]));
        let exact = mgp_exact(&a, &b, 1000).unwrap();
        assert!((exact.value - 0.5).abs() < 1e-12);
        assert!((exact.witness.value - exact.value).abs() < 1e-9);
        let lower = mgp_lower(&a, &b, &[1, 2]).unwrap();
        assert!((lower - 0.25).abs() < 1e-12);
        let upper = mgp_upper(&a, &b, Strategy::IdentityIsh, 50, 0).unwrap();
        assert!(lower <= exact.value && exact.value <= upper.value + 1e-12);
    }

    #[test]
    fn distance_law_bound_on_unmarked_pairs() {
        // Laws {0: ½, 1: ½} and {0: ½, 3: ½}: half the mass must move by at
        // least 1, so their Prohorov distance is ½.
        let (a, b) = (two_point(1.0, [0, 0]), two_point(3.0, [0, 0]));
        assert!((mgp_lower(&a, &b, &[2]).unwrap() - 0.25).abs() < 1e-12);
        assert!(mgp_lower(&a, &b, &[3]).is_err());
    }

    #[test]
    fn glue_three_examples() {
        let a = two_point(1.0, [0, 1]);
        let id = GluedSpace::new(a.distances().clone(), a.distances().clone(), a.distances().clone()).unwrap();
        let m = glue_three(&id, &id).unwrap();
        assert_eq!(m.get(0, 5), 1.0);
        assert_eq!(m.get(1, 5), 0.0);
        assert_eq!(triangle_excess(&m), 0.0);

        let mid = Matrix::zeros(1, 1);
        let g12 = GluedSpace::new(
            a.distances().clone(),
            mid.clone(),
            Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap(),
        )
        .unwrap();
        let g23 = GluedSpace::new(
            mid,
            a.distances().clone(),
            Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap(),
        )
        .unwrap();
        let m = glue_three(&g12, &g23).unwrap();
        assert_eq!(
            (m.get(0, 3), m.get(0, 4), m.get(1, 3), m.get(1, 4)),
            (4.0, 5.0, 5.0, 6.0)
        );
        assert!(glue_three(&g12, &g12).is_err());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [
            Strategy::IdentityIsh,
            Strategy::CouplingSearch,
            Strategy::RandomRestarts,
        ] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!("best".parse::<Strategy>().is_err());
    }
}
