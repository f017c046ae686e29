//! The data model: mark spaces, finite mmm-spaces, validation, canonical
//! forms and exact equivalence.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::numeric::{mass_sum, seeded_rng};
use crate::{Error, Result};

/// Default relative tolerance for the metric axioms and weight normalization.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

/// Largest canonical point count accepted by [`is_equivalent_exact`].
pub const EXACT_SEARCH_BOUND: usize = 10;

/// The fixed mark space `(I, r_I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MarkSpace {
    /// Finite label set with the discrete metric.
    Discrete { labels: Vec<String> },
    /// `R^dim` with the Euclidean norm.
    Euclidean { dim: usize },
}

impl MarkSpace {
    pub fn discrete<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        MarkSpace::Discrete {
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }

    /// Labels `"0", "1", ..., "k-1"`.
    pub fn discrete_range(k: usize) -> Self {
        MarkSpace::discrete((0..k).map(|i| i.to_string()))
    }

    pub fn euclidean(dim: usize) -> Self {
        MarkSpace::Euclidean { dim }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, MarkSpace::Discrete { .. })
    }

    /// `r_I(u, v)`. Marks are assumed to belong to this space.
    pub fn distance(&self, u: &Mark, v: &Mark) -> f64 {
        match (u, v) {
            (Mark::Label(a), Mark::Label(b)) => {
                if a == b {
                    0.0
                } else {
                    1.0
                }
            }
            (Mark::Point(a), Mark::Point(b)) => a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            _ => f64::INFINITY,
        }
    }

    pub fn check(&self, mark: &Mark) -> std::result::Result<(), String> {
        match (self, mark) {
            (MarkSpace::Discrete { labels }, Mark::Label(i)) => {
                if (*i as usize) < labels.len() {
                    Ok(())
                } else {
                    Err(format!("label index {i} with {} labels", labels.len()))
                }
            }
            (MarkSpace::Euclidean { dim }, Mark::Point(p)) => {
                if p.len() != *dim {
                    Err(format!("point of dimension {} in R^{dim}", p.len()))
                } else if p.iter().any(|x| !x.is_finite()) {
                    Err("non-finite coordinate".to_string())
                } else {
                    Ok(())
                }
            }
            (MarkSpace::Discrete { .. }, Mark::Point(_)) => Err("vector mark in a discrete mark space".to_string()),
            (MarkSpace::Euclidean { .. }, Mark::Label(_)) => Err("label mark in a Euclidean mark space".to_string()),
        }
    }

    /// Looks up a discrete label by name.
    pub fn label_index(&self, name: &str) -> Option<Mark> {
        match self {
            MarkSpace::Discrete { labels } => labels.iter().position(|l| l == name).map(|i| Mark::Label(i as u32)),
            MarkSpace::Euclidean { .. } => None,
        }
    }

    pub fn label_name(&self, mark: &Mark) -> Option<&str> {
        match (self, mark) {
            (MarkSpace::Discrete { labels }, Mark::Label(i)) => labels.get(*i as usize).map(String::as_str),
            _ => None,
        }
    }

    /// A mark used for points the mark function leaves undefined.
    pub fn default_mark(&self) -> Mark {
        match self {
            MarkSpace::Discrete { .. } => Mark::Label(0),
            MarkSpace::Euclidean { dim } => Mark::Point(vec![0.0; *dim]),
        }
    }
}

/// An element of the mark space. Discrete marks are label indices; both
/// kinds serialize untagged, as a number or an array.
#[derive(Clone, Debug, serde::Serialize)]
#[serde(untagged)]
pub enum Mark {
    Label(u32),
    Point(Vec<f64>),
}

fn canon_bits(x: f64) -> u64 {
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

impl PartialEq for Mark {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Mark {}

impl PartialOrd for Mark {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Mark {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Mark::Label(a), Mark::Label(b)) => a.cmp(b),
            (Mark::Label(_), Mark::Point(_)) => Ordering::Less,
            (Mark::Point(_), Mark::Label(_)) => Ordering::Greater,
            (Mark::Point(a), Mark::Point(b)) => {
                for (x, y) in a.iter().zip(b) {
                    let (x, y) = (if *x == 0.0 { 0.0 } else { *x }, if *y == 0.0 { 0.0 } else { *y });
                    match x.total_cmp(&y) {
                        Ordering::Equal => continue,
                        o => return o,
                    }
                }
                a.len().cmp(&b.len())
            }
        }
    }
}

impl Hash for Mark {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Mark::Label(i) => {
                0u8.hash(state);
                i.hash(state);
            }
            Mark::Point(p) => {
                1u8.hash(state);
                for x in p {
                    canon_bits(*x).hash(state);
                }
            }
        }
    }
}

/// Finite-support representative of an mmm-space.
///
/// Point `i` carries mass `weights[i]` at `(i, marks[i])`; together the marks
/// and weights describe the measure on `X × I`. Values are immutable after
/// construction. Construction only checks shapes and mark membership; the
/// metric and normalization invariants are reported by [`validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMmmSpace {
    distances: Matrix,
    marks: Vec<Mark>,
    weights: Vec<f64>,
    mark_space: MarkSpace,
    label: Option<String>,
}

impl FiniteMmmSpace {
    pub fn new(distances: Matrix, marks: Vec<Mark>, weights: Vec<f64>, mark_space: MarkSpace) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::Empty("an mmm-space needs at least one point"));
        }
        if distances.rows() != n || distances.cols() != n {
            return Err(Error::LengthMismatch {
                what: "distance matrix side",
                expected: n,
                got: if distances.rows() != n {
                    distances.rows()
                } else {
                    distances.cols()
                },
            });
        }
        if marks.len() != n {
            return Err(Error::LengthMismatch {
                what: "marks",
                expected: n,
                got: marks.len(),
            });
        }
        for (index, m) in marks.iter().enumerate() {
            mark_space
                .check(m)
                .map_err(|detail| Error::InvalidMark { index, detail })?;
        }
        Ok(FiniteMmmSpace {
            distances,
            marks,
            weights,
            mark_space,
            label: None,
        })
    }

    /// Uniform weights.
    pub fn uniform(distances: Matrix, marks: Vec<Mark>, mark_space: MarkSpace) -> Result<Self> {
        let n = marks.len();
        Self::new(distances, marks, vec![1.0 / n as f64; n], mark_space)
    }

    /// Single point with the given mark.
    pub fn point(mark: Mark, mark_space: MarkSpace) -> Result<Self> {
        Self::new(Matrix::zeros(1, 1), vec![mark], vec![1.0], mark_space)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances.get(i, j)
    }

    pub fn distances(&self) -> &Matrix {
        &self.distances
    }

    pub fn mark(&self, i: usize) -> &Mark {
        &self.marks[i]
    }

    pub fn marks(&self) -> &[Mark] {
        &self.marks
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mark_space(&self) -> &MarkSpace {
        &self.mark_space
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn diameter(&self) -> f64 {
        self.distances.max()
    }

    /// The same space with points listed in a new order: new point `k` is
    /// old point `order[k]`. `order` must be a permutation.
    pub fn relabel(&self, order: &[usize]) -> Result<Self> {
        let n = self.len();
        let mut seen = vec![false; n];
        if order.len() != n {
            return Err(Error::LengthMismatch {
                what: "relabeling",
                expected: n,
                got: order.len(),
            });
        }
        for &o in order {
            if o >= n || seen[o] {
                return Err(Error::InvalidParameter(format!(
                    "relabeling is not a permutation of 0..{n}"
                )));
            }
            seen[o] = true;
        }
        let distances = self.distances.select(order, order);
        Ok(FiniteMmmSpace {
            distances,
            marks: order.iter().map(|&o| self.marks[o].clone()).collect(),
            weights: order.iter().map(|&o| self.weights[o]).collect(),
            mark_space: self.mark_space.clone(),
            label: self.label.clone(),
        })
    }

    /// Replaces the marks, keeping distances and weights.
    pub fn with_marks(&self, marks: Vec<Mark>, mark_space: MarkSpace) -> Result<Self> {
        let mut s = Self::new(self.distances.clone(), marks, self.weights.clone(), mark_space)?;
        s.label = self.label.clone();
        Ok(s)
    }

    /// `r(i,k) <= max(r(i,j), r(j,k)) + tol` for all triples.
    pub fn is_ultrametric(&self, tol: f64) -> bool {
        let n = self.len();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if self.distance(i, k) > self.distance(i, j).max(self.distance(j, k)) + tol {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// A violated invariant with the offending indices and its magnitude.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonFinite {
        i: usize,
        j: usize,
    },
    NonZeroDiagonal {
        i: usize,
        value: f64,
    },
    Asymmetric {
        i: usize,
        j: usize,
        difference: f64,
    },
    Negative {
        i: usize,
        j: usize,
        value: f64,
    },
    /// `d(i,k) > d(i,j) + d(j,k)` by `excess`.
    Triangle {
        i: usize,
        j: usize,
        k: usize,
        excess: f64,
    },
    NegativeWeight {
        i: usize,
        value: f64,
    },
    WeightSum {
        sum: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite { i, j } => write!(f, "non-finite distance at ({i},{j})"),
            Violation::NonZeroDiagonal { i, value } => write!(f, "nonzero diagonal at {i}: {value}"),
            Violation::Asymmetric { i, j, difference } => {
                write!(f, "asymmetry at ({i},{j}): difference {difference}")
            }
            Violation::Negative { i, j, value } => write!(f, "negativity at ({i},{j}): {value}"),
            Violation::Triangle { i, j, k, excess } => {
                write!(f, "triangle violation ({i},{j},{k}): excess {excess}")
            }
            Violation::NegativeWeight { i, value } => write!(f, "negative weight at {i}: {value}"),
            Violation::WeightSum { sum } => write!(f, "weights sum to {sum}, not 1"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate(space: &FiniteMmmSpace) -> ValidationReport {
    validate_with_tolerance(space, DEFAULT_TOLERANCE)
}

/// Checks the metric axioms and weight normalization with relative
/// tolerance `tol`. Distinct points at distance zero are not a violation.
pub fn validate_with_tolerance(space: &FiniteMmmSpace, tol: f64) -> ValidationReport {
    let n = space.len();
    let d = |i, j| space.distance(i, j);
    let mut violations = Vec::new();
    let mut finite = true;
    for i in 0..n {
        for j in 0..n {
            if !d(i, j).is_finite() {
                violations.push(Violation::NonFinite { i, j });
                finite = false;
            }
        }
    }
    if finite {
        for i in 0..n {
            if d(i, i) != 0.0 {
                violations.push(Violation::NonZeroDiagonal { i, value: d(i, i) });
            }
            for j in i + 1..n {
                let diff = (d(i, j) - d(j, i)).abs();
                if diff > tol * d(i, j).abs().max(d(j, i).abs()) {
                    violations.push(Violation::Asymmetric { i, j, difference: diff });
                }
                if d(i, j) < 0.0 {
                    violations.push(Violation::Negative { i, j, value: d(i, j) });
                }
            }
        }
        for i in 0..n {
            for k in i + 1..n {
                for j in 0..n {
                    if j == i || j == k {
                        continue;
                    }
                    let via = d(i, j) + d(j, k);
                    let excess = d(i, k) - via;
                    if excess > tol * d(i, k).abs().max(via.abs()) {
                        violations.push(Violation::Triangle { i, j, k, excess });
                    }
                }
            }
        }
    }
    let mut any_negative = false;
    for (i, &w) in space.weights().iter().enumerate() {
        if !(w >= 0.0) || !w.is_finite() {
            violations.push(Violation::NegativeWeight { i, value: w });
            any_negative = true;
        }
    }
    let sum = if any_negative {
        space.weights().iter().sum::<f64>()
    } else {
        mass_sum(space.weights().iter().copied())
    };
    if !((sum - 1.0).abs() <= tol) {
        violations.push(Violation::WeightSum { sum });
    }
    ValidationReport { violations }
}

/// Distances and weights describing `ν_X`, plus a mark function `κ_X`.
#[derive(Clone, Debug)]
pub struct MarkFunctionInput {
    pub distances: Matrix,
    pub weights: Vec<f64>,
    pub kappa: BTreeMap<usize, Mark>,
}

/// The space carrying `μ(dx, du) = ν(dx) ⊗ δ_{κ(x)}(du)`.
///
/// Zero-weight points where `κ` is undefined receive the mark space's
/// default mark; they carry no mass.
pub fn from_mark_function(input: MarkFunctionInput, mark_space: MarkSpace) -> Result<FiniteMmmSpace> {
    let n = input.weights.len();
    let mut marks = Vec::with_capacity(n);
    for i in 0..n {
        match input.kappa.get(&i) {
            Some(m) => marks.push(m.clone()),
            None if input.weights[i] > 0.0 => return Err(Error::MissingMark { index: i }),
            None => marks.push(mark_space.default_mark()),
        }
    }
    FiniteMmmSpace::new(input.distances, marks, input.weights, mark_space)
}

/// Removes zero-weight points and merges points at distance zero carrying
/// equal marks. The first point of each merged class keeps its position.
pub fn canonicalize(space: &FiniteMmmSpace) -> FiniteMmmSpace {
    canonical_form(space).0
}

/// The canonical form together with, for every original point, the index
/// of its canonical class (`None` for dropped zero-weight points).
pub(crate) fn canonical_form(space: &FiniteMmmSpace) -> (FiniteMmmSpace, Vec<Option<usize>>) {
    let mut reps: Vec<usize> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut class = vec![None; space.len()];
    for i in 0..space.len() {
        let w = space.weight(i);
        if !(w > 0.0) {
            continue;
        }
        match reps
            .iter()
            .position(|&r| space.distance(r, i) == 0.0 && space.mark(r) == space.mark(i))
        {
            Some(k) => {
                weights[k] += w;
                class[i] = Some(k);
            }
            None => {
                class[i] = Some(reps.len());
                reps.push(i);
                weights.push(w);
            }
        }
    }
    if reps.is_empty() {
        // All mass missing: nothing sensible to keep, fall back to the input.
        return (space.clone(), (0..space.len()).map(Some).collect());
    }
    let canon = FiniteMmmSpace {
        distances: space.distances.select(&reps, &reps),
        marks: reps.iter().map(|&r| space.mark(r).clone()).collect(),
        weights,
        mark_space: space.mark_space.clone(),
        label: space.label.clone(),
    };
    (canon, class)
}

/// True when no zero-weight points and no mergeable pairs remain.
pub fn is_canonical(space: &FiniteMmmSpace) -> bool {
    canonicalize(space) == *space
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// A measure- and mark-preserving isometry between the canonical forms of
/// `a` and `b`, as `phi[i] = j` on canonical indices.
pub fn find_isometry(a: &FiniteMmmSpace, b: &FiniteMmmSpace) -> Result<Option<Vec<usize>>> {
    let (a, b) = (canonicalize(a), canonicalize(b));
    find_isometry_canonical(&a, &b)
}

pub(crate) fn find_isometry_canonical(a: &FiniteMmmSpace, b: &FiniteMmmSpace) -> Result<Option<Vec<usize>>> {
    let n = a.len();
    for s in [a, b] {
        if s.len() > EXACT_SEARCH_BOUND {
            return Err(Error::TooLargeForExactSearch {
                points: s.len(),
                bound: EXACT_SEARCH_BOUND,
            });
        }
    }
    if n != b.len() || a.mark_space() != b.mark_space() {
        return Ok(None);
    }
    let tol = DEFAULT_TOLERANCE;
    let profile = |s: &FiniteMmmSpace, i: usize| {
        let mut row = s.distances().row(i).to_vec();
        row.sort_by(f64::total_cmp);
        row
    };
    let pa: Vec<Vec<f64>> = (0..n).map(|i| profile(a, i)).collect();
    let pb: Vec<Vec<f64>> = (0..n).map(|i| profile(b, i)).collect();
    let candidates: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| {
                    a.mark(i) == b.mark(j)
                        && close(a.weight(i), b.weight(j), tol)
                        && pa[i].iter().zip(&pb[j]).all(|(x, y)| close(*x, *y, tol))
                })
                .collect()
        })
        .collect();
    if candidates.iter().any(Vec::is_empty) {
        return Ok(None);
    }
    // Most constrained points first.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| candidates[i].len());

    let mut phi = vec![usize::MAX; n];
    let mut used = vec![false; n];
    fn search(
        depth: usize,
        order: &[usize],
        candidates: &[Vec<usize>],
        a: &FiniteMmmSpace,
        b: &FiniteMmmSpace,
        phi: &mut [usize],
        used: &mut [bool],
        tol: f64,
    ) -> bool {
        if depth == order.len() {
            return true;
        }
        let i = order[depth];
        for &j in &candidates[i] {
            if used[j] {
                continue;
            }
            let consistent = order[..depth]
                .iter()
                .all(|&k| close(a.distance(i, k), b.distance(j, phi[k]), tol));
            if !consistent {
                continue;
            }
            phi[i] = j;
            used[j] = true;
            if search(depth + 1, order, candidates, a, b, phi, used, tol) {
                return true;
            }
            used[j] = false;
            phi[i] = usize::MAX;
        }
        false
    }
    if search(0, &order, &candidates, a, b, &mut phi, &mut used, tol) {
        Ok(Some(phi))
    } else {
        Ok(None)
    }
}

/// Exhaustive test for a measure- and mark-preserving isometry between the
/// canonical forms. Fails for more than [`EXACT_SEARCH_BOUND`] points.
pub fn is_equivalent_exact(a: &FiniteMmmSpace, b: &FiniteMmmSpace) -> Result<bool> {
    Ok(find_isometry(a, b)?.is_some())
}

/// Point indices drawn i.i.d. from the weights.
pub fn draw_indices(space: &FiniteMmmSpace, n: usize, rng: &mut impl rand::Rng) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(space.weights())
        .map_err(|e| Error::InvalidMeasure(format!("cannot sample weights: {e}")))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// The empirical space of `n` i.i.d. draws: `n` atoms of weight `1/n` with
/// inherited distances and marks. Repeated draws stay separate atoms.
pub fn empirical_from_samples(space: &FiniteMmmSpace, n: usize, seed: u64) -> Result<FiniteMmmSpace> {
    if n == 0 {
        return Err(Error::InvalidParameter("empirical sample size must be positive".into()));
    }
    let mut rng = seeded_rng(seed);
    let idx = draw_indices(space, n, &mut rng)?;
    Ok(FiniteMmmSpace {
        distances: space.distances.select(&idx, &idx),
        marks: idx.iter().map(|&i| space.mark(i).clone()).collect(),
        weights: vec![1.0 / n as f64; n],
        mark_space: space.mark_space.clone(),
        label: space.label.as_ref().map(|l| format!("{l}/empirical{n}")),
    })
}
