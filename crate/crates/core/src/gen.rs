//! Random mmm-spaces: Kingman coalescent and Moran genealogies with
//! mutation marks, and Gaussian point clouds.
//!
//! Genealogical distances are times to the most recent common ancestor.
//! Marks follow a mutation model on a finite alphabet: the root (or each
//! founder) gets a uniform type, and every mutation replaces the current
//! type by a draw from the transition row of that type. The default
//! transition is parent-independent and uniform. This mechanism is a
//! modelling default, not something the genealogy determines.

use rand::Rng as _;
use rand_distr::{Distribution, Exp, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::numeric::{seeded_rng, Rng};
use crate::space::{FiniteMmmSpace, Mark, MarkSpace};
use crate::{Error, Result};

/// Types `0..k` with a row-stochastic transition matrix applied at each
/// mutation event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MutationModel {
    pub alphabet: usize,
    /// Row `a` is the law of the new type when a type-`a` lineage mutates.
    /// Absent means uniform on the alphabet.
    #[serde(default)]
    pub transition: Option<Vec<Vec<f64>>>,
}

impl Default for MutationModel {
    fn default() -> Self {
        MutationModel::parent_independent(2)
    }
}

impl MutationModel {
    pub fn parent_independent(alphabet: usize) -> Self {
        MutationModel {
            alphabet,
            transition: None,
        }
    }

    pub fn mark_space(&self) -> MarkSpace {
        MarkSpace::discrete_range(self.alphabet)
    }

    pub fn check(&self) -> Result<()> {
        if self.alphabet == 0 {
            return Err(Error::InvalidParameter("mutation alphabet is empty".into()));
        }
        if let Some(t) = &self.transition {
            if t.len() != self.alphabet || t.iter().any(|r| r.len() != self.alphabet) {
                return Err(Error::InvalidParameter(
                    "transition matrix must be alphabet × alphabet".into(),
                ));
            }
            for (a, row) in t.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!(
                        "transition row {a} is not a probability vector"
                    )));
                }
            }
        }
        Ok(())
    }

    fn root(&self, rng: &mut Rng) -> u32 {
        rng.random_range(0..self.alphabet as u32)
    }

    fn mutate(&self, from: u32, rng: &mut Rng) -> u32 {
        match &self.transition {
            None => self.root(rng),
            Some(t) => {
                let row = &t[from as usize];
                let mut x: f64 = rng.random();
                for (b, &p) in row.iter().enumerate() {
                    if x < p {
                        return b as u32;
                    }
                    x -= p;
                }
                // Rounding left a sliver of mass: land on the last positive entry.
                row.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u32
            }
        }
    }

    /// The type after running `count` mutations from `from`.
    fn mutate_times(&self, mut from: u32, count: u64, rng: &mut Rng) -> u32 {
        for _ in 0..count {
            from = self.mutate(from, rng);
        }
        from
    }
}

fn poisson(mean: f64, rng: &mut Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoalescentConfig {
    pub leaves: usize,
    /// Mutation rate per lineage per unit time.
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub mutation: MutationModel,
    #[serde(default)]
    pub seed: u64,
}

impl CoalescentConfig {
    pub fn new(leaves: usize, theta: f64, seed: u64) -> Self {
        CoalescentConfig {
            leaves,
            theta,
            mutation: MutationModel::default(),
            seed,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.leaves == 0 {
            return Err(Error::InvalidParameter("a coalescent needs at least one leaf".into()));
        }
        if !(self.theta >= 0.0) || !self.theta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "mutation rate {} must be finite and ≥ 0",
                self.theta
            )));
        }
        self.mutation.check()
    }
}

/// The genealogy of `n` leaves under the Kingman coalescent, every pair of
/// lineages merging at rate 1. Uniform weights; the output is ultrametric.
pub fn kingman(config: &CoalescentConfig) -> Result<FiniteMmmSpace> {
    config.check()?;
    let n = config.leaves;
    let mut rng = seeded_rng(config.seed);

    // Nodes 0..n are leaves; internal nodes are appended as lineages merge.
    let mut height = vec![0.0f64; n];
    let mut children: Vec<[usize; 2]> = Vec::new();
    let mut active: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut dist = Matrix::zeros(n, n);
    let mut t = 0.0;
    while active.len() > 1 {
        let k = active.len() as f64;
        let rate = k * (k - 1.0) / 2.0;
        t += Exp::new(rate).expect("positive rate").sample(&mut rng);
        let a = rng.random_range(0..active.len());
        let mut b = rng.random_range(0..active.len() - 1);
        if b >= a {
            b += 1;
        }
        let (x, y) = (active[a], active[b]);
        for &i in &members[x] {
            for &j in &members[y] {
                dist.set(i, j, t);
                dist.set(j, i, t);
            }
        }
        let node = height.len();
        height.push(t);
        children.push([x, y]);
        let mut merged = std::mem::take(&mut members[x]);
        merged.append(&mut std::mem::take(&mut members[y]));
        members.push(merged);
        let (hi, lo) = (a.max(b), a.min(b));
        active.swap_remove(hi);
        active.swap_remove(lo);
        active.push(node);
    }

    // Root-to-leaf mutation pass.
    let root = active[0];
    let mut types = vec![0u32; height.len()];
    types[root] = config.mutation.root(&mut rng);
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        if v < n {
            continue;
        }
        for &c in &children[v - n] {
            let count = poisson(config.theta * (height[v] - height[c]), &mut rng);
            types[c] = config.mutation.mutate_times(types[v], count, &mut rng);
            stack.push(c);
        }
    }
    let marks = types[..n].iter().map(|&u| Mark::Label(u)).collect();
    FiniteMmmSpace::uniform(dist, marks, config.mutation.mark_space())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoranConfig {
    pub population: usize,
    pub horizon: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub mutation: MutationModel,
    #[serde(default)]
    pub seed: u64,
}

impl MoranConfig {
    pub fn new(population: usize, horizon: f64, theta: f64, seed: u64) -> Self {
        MoranConfig {
            population,
            horizon,
            theta,
            mutation: MutationModel::default(),
            seed,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidParameter(
                "a Moran population needs at least two individuals".into(),
            ));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "horizon {} must be finite and positive",
                self.horizon
            )));
        }
        if !(self.theta >= 0.0) || !self.theta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "mutation rate {} must be finite and ≥ 0",
                self.theta
            )));
        }
        self.mutation.check()
    }
}

/// The genealogy at time `T` of a Moran population started from `N`
/// distinct founders with uniform types. Each unordered pair fires at rate
/// 1; a uniformly chosen member of the pair reproduces and the other dies.
/// Each individual mutates at rate `θ`. Pairs without a common ancestor
/// after time `T` are placed at distance `2T`, which keeps the output
/// ultrametric.
pub fn moran(config: &MoranConfig) -> Result<FiniteMmmSpace> {
    config.check()?;
    let n = config.population;
    let horizon = config.horizon;
    let mut rng = seeded_rng(config.seed);

    // birth[i][j]: time at which the common ancestor of i and j was born,
    // NaN while they have none.
    let mut birth = vec![f64::NAN; n * n];
    let mut types: Vec<u32> = (0..n).map(|_| config.mutation.root(&mut rng)).collect();
    let pair_rate = (n * (n - 1)) as f64 / 2.0;
    let total_rate = pair_rate + n as f64 * config.theta;
    let mut t = 0.0;
    loop {
        let e: f64 = Exp1.sample(&mut rng);
        t += e / total_rate;
        if t >= horizon {
            break;
        }
        if rng.random::<f64>() * total_rate >= pair_rate {
            let i = rng.random_range(0..n);
            types[i] = config.mutation.mutate(types[i], &mut rng);
            continue;
        }
        let parent = rng.random_range(0..n);
        let mut child = rng.random_range(0..n - 1);
        if child >= parent {
            child += 1;
        }
        for j in 0..n {
            if j != child && j != parent {
                let b = birth[parent * n + j];
                birth[child * n + j] = b;
                birth[j * n + child] = b;
            }
        }
        birth[child * n + parent] = t;
        birth[parent * n + child] = t;
        types[child] = types[parent];
    }
    let dist = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let b = birth[i * n + j];
            if b.is_nan() {
                2.0 * horizon
            } else {
                horizon - b
            }
        }
    });
    let marks = types.into_iter().map(Mark::Label).collect();
    FiniteMmmSpace::uniform(dist, marks, config.mutation.mark_space())
}

/// How cloud points are marked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarkMap {
    /// One label for every point.
    Constant,
    /// Labels `neg`/`pos` by the sign of the first coordinate.
    SignOfFirst,
    /// The point itself as a Euclidean mark.
    Identity,
}

/// `n` i.i.d. standard Gaussian points in `ℝ^dim` with Euclidean distances
/// and uniform weights.
pub fn euclidean_cloud(n: usize, dim: usize, mark_map: MarkMap, seed: u64) -> Result<FiniteMmmSpace> {
    if n == 0 || dim == 0 {
        return Err(Error::InvalidParameter(
            "a cloud needs at least one point and one dimension".into(),
        ));
    }
    let mut rng = seeded_rng(seed);
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let dist = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            points[i]
                .iter()
                .zip(&points[j])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        }
    });
    let (marks, ms) = match mark_map {
        MarkMap::Constant => (vec![Mark::Label(0); n], MarkSpace::discrete(["0"])),
        MarkMap::SignOfFirst => (
            points.iter().map(|p| Mark::Label(u32::from(p[0] >= 0.0))).collect(),
            MarkSpace::discrete(["neg", "pos"]),
        ),
        MarkMap::Identity => (points.into_iter().map(Mark::Point).collect(), MarkSpace::euclidean(dim)),
    };
    FiniteMmmSpace::uniform(dist, marks, ms)
}
