//! Marked distance matrix distributions restricted to finitely many
//! sampled points: Monte Carlo draws, exact enumeration, projections and
//! the index maps (permutations and shifts) acting on samples.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::numeric::{mass_sum, round_sig12, seeded_rng, FixedSum};
use crate::space::{canonicalize, draw_indices, FiniteMmmSpace, Mark, MarkSpace};
use crate::{Error, Result};

/// Largest number of index tuples [`exact_law`] will enumerate.
pub const EXACT_LAW_BUDGET: u128 = 10_000_000;

/// Distances and marks of `n` sampled points.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrixSample {
    dist: Matrix,
    marks: Vec<Mark>,
}

impl DistanceMatrixSample {
    pub fn new(dist: Matrix, marks: Vec<Mark>) -> Result<Self> {
        if dist.rows() != marks.len() || dist.cols() != marks.len() {
            return Err(Error::LengthMismatch {
                what: "sample distance block",
                expected: marks.len(),
                got: dist.rows(),
            });
        }
        Ok(DistanceMatrixSample { dist, marks })
    }

    /// The sample of `space` at the given point indices.
    pub fn from_indices(space: &FiniteMmmSpace, idx: &[usize]) -> Self {
        DistanceMatrixSample {
            dist: space.distances().select(idx, idx),
            marks: idx.iter().map(|&i| space.mark(i).clone()).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.marks.len()
    }

    #[inline]
    pub fn dist(&self, k: usize, l: usize) -> f64 {
        self.dist.get(k, l)
    }

    pub fn dist_matrix(&self) -> &Matrix {
        &self.dist
    }

    pub fn mark(&self, k: usize) -> &Mark {
        &self.marks[k]
    }

    pub fn marks(&self) -> &[Mark] {
        &self.marks
    }

    /// View of all `order()` points.
    pub fn view(&self) -> SampleView<'_> {
        SampleView {
            sample: self,
            offset: 0,
            len: self.order(),
        }
    }

    pub fn to_json(&self, mark_space: &MarkSpace) -> SampleJson {
        SampleJson {
            n: self.order(),
            dist_upper: self.dist.upper(),
            marks: self
                .marks
                .iter()
                .map(|m| crate::io::mark_to_json(m, mark_space))
                .collect(),
        }
    }
}

/// Wire form `{"n", "dist_upper", "marks"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleJson {
    pub n: usize,
    pub dist_upper: Vec<f64>,
    pub marks: Vec<serde_json::Value>,
}

impl SampleJson {
    pub fn into_sample(self, mark_space: &MarkSpace) -> Result<DistanceMatrixSample> {
        let dist = Matrix::from_upper(self.n, &self.dist_upper)?;
        let marks = self
            .marks
            .iter()
            .enumerate()
            .map(|(i, v)| crate::io::mark_from_json(v, mark_space, i))
            .collect::<Result<Vec<_>>>()?;
        DistanceMatrixSample::new(dist, marks)
    }
}

/// A contiguous window `offset..offset+len` of a sample, re-indexed from 0.
///
/// Polynomial bodies see their sample through a view, so a degree-`n` body
/// only ever reads `n` points.
#[derive(Clone, Copy, Debug)]
pub struct SampleView<'a> {
    sample: &'a DistanceMatrixSample,
    offset: usize,
    len: usize,
}

impl<'a> SampleView<'a> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `r_{k,l}` with 0-based indices.
    #[inline]
    pub fn r(&self, k: usize, l: usize) -> f64 {
        debug_assert!(k < self.len && l < self.len);
        self.sample.dist(self.offset + k, self.offset + l)
    }

    /// `u_k` with 0-based index.
    #[inline]
    pub fn u(&self, k: usize) -> &'a Mark {
        debug_assert!(k < self.len);
        self.sample.mark(self.offset + k)
    }

    /// Owned sample of the points `idx` (0-based within this view).
    pub fn select(&self, idx: &[usize]) -> DistanceMatrixSample {
        let n = idx.len();
        DistanceMatrixSample {
            dist: Matrix::from_fn(n, n, |k, l| self.r(idx[k], idx[l])),
            marks: idx.iter().map(|&k| self.u(k).clone()).collect(),
        }
    }

    /// The first `n` points.
    pub fn restrict(&self, n: usize) -> SampleView<'a> {
        assert!(n <= self.len, "restriction to {n} of a view of length {}", self.len);
        SampleView { len: n, ..*self }
    }

    /// Drops the first `n` points.
    pub fn shift(&self, n: usize) -> SampleView<'a> {
        assert!(n <= self.len, "shift by {n} of a view of length {}", self.len);
        SampleView {
            sample: self.sample,
            offset: self.offset + n,
            len: self.len - n,
        }
    }
}

/// One order-`n` draw: indices i.i.d. from the weights, with replacement.
pub fn sample(space: &FiniteMmmSpace, n: usize, seed: u64) -> Result<DistanceMatrixSample> {
    let mut rng = seeded_rng(seed);
    sample_with(space, n, &mut rng)
}

pub fn sample_with(space: &FiniteMmmSpace, n: usize, rng: &mut impl rand::Rng) -> Result<DistanceMatrixSample> {
    let idx = draw_indices(space, n, rng)?;
    Ok(DistanceMatrixSample::from_indices(space, &idx))
}

/// Exact law of the order-`n` sample: atoms in canonical order (sorted by
/// distances, then marks) with their probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrixLaw {
    order: usize,
    atoms: Vec<(DistanceMatrixSample, f64)>,
}

impl DistanceMatrixLaw {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn atoms(&self) -> &[(DistanceMatrixSample, f64)] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        mass_sum(self.atoms.iter().map(|(_, p)| *p))
    }

    /// Aggregates weighted samples of equal order into a law.
    pub fn from_weighted(order: usize, items: impl IntoIterator<Item = (DistanceMatrixSample, f64)>) -> Self {
        let mut agg: BTreeMap<AtomKey, (DistanceMatrixSample, FixedSum)> = BTreeMap::new();
        for (s, p) in items {
            assert_eq!(s.order(), order, "mixed orders in a distance matrix law");
            let key = AtomKey::of(&s);
            agg.entry(key).or_insert_with(|| (rounded(&s), FixedSum::ZERO)).1.add(p);
        }
        DistanceMatrixLaw {
            order,
            atoms: agg.into_values().map(|(s, p)| (s, p.value())).collect(),
        }
    }

    /// Pushes every atom through `f` and re-aggregates.
    pub fn push_forward(
        &self,
        order: usize,
        f: impl Fn(&DistanceMatrixSample) -> Result<DistanceMatrixSample>,
    ) -> Result<Self> {
        let mut items = Vec::with_capacity(self.atoms.len());
        for (s, p) in &self.atoms {
            items.push((f(s)?, *p));
        }
        Ok(Self::from_weighted(order, items))
    }

    /// Largest absolute probability difference over the union of atoms.
    pub fn max_abs_diff(&self, other: &DistanceMatrixLaw) -> f64 {
        let mut m: BTreeMap<AtomKey, f64> = BTreeMap::new();
        for (s, p) in &self.atoms {
            *m.entry(AtomKey::of(s)).or_default() += p;
        }
        for (s, p) in &other.atoms {
            *m.entry(AtomKey::of(s)).or_default() -= p;
        }
        m.values().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Aggregation key: strict upper distances rounded to 12 significant digits
/// (as bit patterns) followed by the exact marks.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct AtomKey {
    dist: Vec<OrdF64>,
    marks: Vec<Mark>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct OrdF64(u64);

impl OrdF64 {
    fn new(x: f64) -> Self {
        OrdF64(if x == 0.0 { 0 } else { x.to_bits() })
    }
    fn value(self) -> f64 {
        f64::from_bits(self.0)
    }
}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.value().total_cmp(&other.value())
    }
}

impl PartialOrd for AtomKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for AtomKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist.cmp(&other.dist).then_with(|| self.marks.cmp(&other.marks))
    }
}

impl AtomKey {
    fn of(s: &DistanceMatrixSample) -> Self {
        let n = s.order();
        let mut dist = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for k in 0..n {
            for l in k + 1..n {
                dist.push(OrdF64::new(round_sig12(s.dist(k, l))));
            }
        }
        AtomKey {
            dist,
            marks: s.marks.clone(),
        }
    }
}

fn rounded(s: &DistanceMatrixSample) -> DistanceMatrixSample {
    let n = s.order();
    DistanceMatrixSample {
        dist: Matrix::from_fn(n, n, |k, l| if k == l { 0.0 } else { round_sig12(s.dist(k, l)) }),
        marks: s.marks.clone(),
    }
}

/// Number of index tuples enumerated by [`exact_law`].
pub fn exact_law_cost(points: usize, n: usize) -> u128 {
    (points as u128).checked_pow(n as u32).unwrap_or(u128::MAX)
}

/// Enumerates all `N^n` index tuples with product weights and aggregates
/// identical samples.
///
/// Tuple probabilities multiply the weights in sorted order and are summed
/// with an order-independent accumulator, so relabeling the space or
/// permuting sample coordinates reproduces the law bit for bit.
pub fn exact_law(space: &FiniteMmmSpace, n: usize) -> Result<DistanceMatrixLaw> {
    exact_law_with_budget(space, n, EXACT_LAW_BUDGET)
}

pub fn exact_law_with_budget(space: &FiniteMmmSpace, n: usize, budget: u128) -> Result<DistanceMatrixLaw> {
    let points = space.len();
    let required = exact_law_cost(points, n);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    if n == 0 {
        let empty = DistanceMatrixSample {
            dist: Matrix::zeros(0, 0),
            marks: Vec::new(),
        };
        return Ok(DistanceMatrixLaw {
            order: 0,
            atoms: vec![(empty, 1.0)],
        });
    }

    // Integer codes: rounded distance classes and mark classes, both numbered
    // in sorted value order so code order agrees with value order.
    let mut dvals: Vec<OrdF64> = (0..points)
        .flat_map(|i| (0..points).map(move |j| (i, j)))
        .map(|(i, j)| OrdF64::new(round_sig12(space.distance(i, j))))
        .collect();
    dvals.sort();
    dvals.dedup();
    let dcode = |x: f64| dvals.binary_search(&OrdF64::new(round_sig12(x))).unwrap() as u32;
    let dcodes: Vec<u32> = (0..points * points)
        .map(|k| dcode(space.distance(k / points, k % points)))
        .collect();
    let mut mvals: Vec<Mark> = space.marks().to_vec();
    mvals.sort();
    mvals.dedup();
    let mcodes: Vec<u32> = space
        .marks()
        .iter()
        .map(|m| mvals.binary_search(m).unwrap() as u32)
        .collect();

    let pairs = n * (n - 1) / 2;
    let mut acc: HashMap<Vec<u32>, u128> = HashMap::new();
    let mut tuple = vec![0usize; n];
    let mut ws = vec![0.0f64; n];
    let mut key = vec![0u32; pairs + n];
    'tuples: loop {
        if tuple.iter().all(|&i| space.weight(i) > 0.0) {
            for (w, &i) in ws.iter_mut().zip(&tuple) {
                *w = space.weight(i);
            }
            ws.sort_by(f64::total_cmp);
            let p: f64 = ws.iter().product();
            let mut c = 0;
            for k in 0..n {
                for l in k + 1..n {
                    key[c] = dcodes[tuple[k] * points + tuple[l]];
                    c += 1;
                }
            }
            for k in 0..n {
                key[pairs + k] = mcodes[tuple[k]];
            }
            let term = FixedSum::term(p);
            match acc.get_mut(key.as_slice()) {
                Some(v) => *v += term,
                None => {
                    acc.insert(key.clone(), term);
                }
            }
        }
        // Odometer, last coordinate fastest.
        let mut pos = n;
        loop {
            if pos == 0 {
                break 'tuples;
            }
            pos -= 1;
            tuple[pos] += 1;
            if tuple[pos] < points {
                break;
            }
            tuple[pos] = 0;
        }
    }

    let mut entries: Vec<(Vec<u32>, u128)> = acc.into_iter().collect();
    entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let atoms = entries
        .into_iter()
        .map(|(key, raw)| {
            let mut dist = Matrix::zeros(n, n);
            let mut c = 0;
            for k in 0..n {
                for l in k + 1..n {
                    let v = dvals[key[c] as usize].value();
                    dist.set(k, l, v);
                    dist.set(l, k, v);
                    c += 1;
                }
            }
            let marks = key[pairs..].iter().map(|&m| mvals[m as usize].clone()).collect();
            (DistanceMatrixSample { dist, marks }, FixedSum::from_raw(raw).value())
        })
        .collect();
    Ok(DistanceMatrixLaw { order: n, atoms })
}

/// The unmarked projection: every mark replaced by one dummy label, then
/// canonicalized.
pub fn project_mm(space: &FiniteMmmSpace) -> FiniteMmmSpace {
    let dummy = MarkSpace::discrete(["*"]);
    let s = space
        .with_marks(vec![Mark::Label(0); space.len()], dummy)
        .expect("dummy marks belong to the dummy space");
    canonicalize(&s)
}

/// The mark distribution: weights aggregated by mark value.
pub fn mark_marginal(space: &FiniteMmmSpace) -> BTreeMap<Mark, f64> {
    let mut acc: BTreeMap<Mark, FixedSum> = BTreeMap::new();
    for (m, &w) in space.marks().iter().zip(space.weights()) {
        acc.entry(m.clone()).or_default().add(w);
    }
    acc.into_iter().map(|(m, s)| (m, s.value())).collect()
}

/// `s'[i][j] = s[σ(i)][σ(j)]`, `u'_i = u_{σ(i)}` for an injective `σ`
/// given as 0-based indices into `s`.
pub fn permute(s: &DistanceMatrixSample, sigma: &[usize]) -> Result<DistanceMatrixSample> {
    let n = s.order();
    let mut seen = vec![false; n];
    for &k in sigma {
        if k >= n {
            return Err(Error::IndexOutOfRange { index: k, order: n });
        }
        if seen[k] {
            return Err(Error::InvalidParameter(format!("index map is not injective at {k}")));
        }
        seen[k] = true;
    }
    Ok(DistanceMatrixSample {
        dist: s.dist.select(sigma, sigma),
        marks: sigma.iter().map(|&k| s.marks[k].clone()).collect(),
    })
}

/// Drops the first `n` points: `permute` with `σ(i) = i + n`.
pub fn shift(s: &DistanceMatrixSample, n: usize) -> Result<DistanceMatrixSample> {
    if n >= s.order() {
        return Err(Error::IndexOutOfRange {
            index: n,
            order: s.order(),
        });
    }
    let sigma: Vec<usize> = (n..s.order()).collect();
    permute(s, &sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> FiniteMmmSpace {
        FiniteMmmSpace::new(
            Matrix::from_upper(2, &[1.0]).unwrap(),
            vec![Mark::Label(0), Mark::Label(1)],
            vec![0.5, 0.5],
            MarkSpace::discrete_range(2),
        )
        .unwrap()
    }

    #[test]
    fn one_point_sample_is_zero() {
        let s = FiniteMmmSpace::point(Mark::Label(0), MarkSpace::discrete_range(1)).unwrap();
        let x = sample(&s, 3, 9).unwrap();
        assert_eq!(x.dist_matrix(), &Matrix::zeros(3, 3));
        assert!(x.marks().iter().all(|m| *m == Mark::Label(0)));
    }

    #[test]
    fn sample_is_deterministic() {
        assert_eq!(sample(&reference(), 2, 5).unwrap(), sample(&reference(), 2, 5).unwrap());
    }

    #[test]
    fn reference_pair_frequency() {
        // P(two draws hit different atoms) = 2 · ½ · ½.
        let seeds = 100_000u64;
        let ones = (0..seeds)
            .filter(|&s| sample(&reference(), 2, s).unwrap().dist(0, 1) == 1.0)
            .count();
        let freq = ones as f64 / seeds as f64;
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
    }

    #[test]
    fn reference_exact_law_order_two() {
        let law = exact_law(&reference(), 2).unwrap();
        let got: Vec<(f64, Mark, Mark, f64)> = law
            .atoms()
            .iter()
            .map(|(s, p)| (s.dist(0, 1), s.mark(0).clone(), s.mark(1).clone(), *p))
            .collect();
        use Mark::Label as L;
        assert_eq!(
            got,
            vec![
                (0.0, L(0), L(0), 0.25),
                (0.0, L(1), L(1), 0.25),
                (1.0, L(0), L(1), 0.25),
                (1.0, L(1), L(0), 0.25),
            ]
        );
        assert_eq!(law.total_mass(), 1.0);
    }

    #[test]
    fn order_one_law_is_mark_marginal() {
        let s = FiniteMmmSpace::new(
            Matrix::from_upper(3, &[1.0, 2.0, 1.5]).unwrap(),
            vec![Mark::Label(1), Mark::Label(0), Mark::Label(1)],
            vec![0.2, 0.3, 0.5],
            MarkSpace::discrete_range(2),
        )
        .unwrap();
        let law = exact_law(&s, 1).unwrap();
        let marg = mark_marginal(&s);
        assert_eq!(law.atoms().len(), marg.len());
        for (atom, p) in law.atoms() {
            assert!((marg[atom.mark(0)] - p).abs() < 1e-15);
        }
    }

    #[test]
    fn budget_enforced() {
        let n = 20;
        let s = FiniteMmmSpace::uniform(
            Matrix::from_fn(n, n, |i, j| (i as f64 - j as f64).abs()),
            vec![Mark::Label(0); n],
            MarkSpace::discrete_range(1),
        )
        .unwrap();
        assert!(matches!(exact_law(&s, 6), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn projections() {
        let a = reference();
        let marg = mark_marginal(&a);
        assert_eq!(marg, BTreeMap::from([(Mark::Label(0), 0.5), (Mark::Label(1), 0.5)]));

        let p = project_mm(&a);
        assert_eq!(p.len(), 2);
        assert_eq!(p.distance(0, 1), 1.0);
        assert_eq!(p.weights(), &[0.5, 0.5]);

        let constant = a
            .with_marks(vec![Mark::Label(0), Mark::Label(0)], a.mark_space().clone())
            .unwrap();
        assert_eq!(mark_marginal(&constant), BTreeMap::from([(Mark::Label(0), 1.0)]));
    }

    #[test]
    fn permute_and_shift() {
        let s = DistanceMatrixSample::new(
            Matrix::from_upper(3, &[1.0, 2.0, 3.0]).unwrap(),
            vec![Mark::Label(0), Mark::Label(1), Mark::Label(2)],
        )
        .unwrap();
        assert_eq!(permute(&s, &[0, 1, 2]).unwrap(), s);

        let pair = DistanceMatrixSample::new(
            Matrix::from_upper(2, &[4.0]).unwrap(),
            vec![Mark::Label(0), Mark::Label(1)],
        )
        .unwrap();
        let swapped = permute(&pair, &[1, 0]).unwrap();
        assert_eq!(swapped.dist(0, 1), 4.0);
        assert_eq!(swapped.marks(), &[Mark::Label(1), Mark::Label(0)]);

        let shifted = shift(&s, 1).unwrap();
        assert_eq!(shifted.order(), 2);
        assert_eq!(shifted.dist(0, 1), 3.0);
        assert_eq!(shifted.marks(), &[Mark::Label(1), Mark::Label(2)]);

        assert!(matches!(
            permute(&s, &[3]),
            Err(Error::IndexOutOfRange { index: 3, .. })
        ));
        assert!(permute(&s, &[1, 1]).is_err());
        assert!(shift(&s, 3).is_err());
    }

    #[test]
    fn views_match_owned_shift() {
        let s = DistanceMatrixSample::new(
            Matrix::from_upper(4, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
            vec![Mark::Label(0), Mark::Label(1), Mark::Label(2), Mark::Label(3)],
        )
        .unwrap();
        let v = s.view().shift(2);
        let owned = shift(&s, 2).unwrap();
        assert_eq!(v.r(0, 1), owned.dist(0, 1));
        assert_eq!(v.u(1), owned.mark(1));
        assert_eq!(s.view().restrict(2).r(0, 1), 1.0);
    }
}
