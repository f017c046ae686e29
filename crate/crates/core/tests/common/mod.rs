//! Random tiny spaces shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use mmm::matrix::Matrix;
use mmm::numeric::Rng;
use mmm::{FiniteMmmSpace, Mark, MarkSpace};
use rand::seq::SliceRandom;
use rand::Rng as _;

/// A random metric on `n` points: random edge lengths closed under
/// shortest paths. With `grid`, lengths are multiples of 0.5, which
/// produces ties and coincident points.
pub fn random_metric(n: usize, grid: bool, rng: &mut Rng) -> Matrix {
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let x: f64 = if grid {
                f64::from(rng.random_range(0..6u32)) * 0.5
            } else {
                rng.random_range(0.05..3.0)
            };
            d.set(i, j, x);
            d.set(j, i, x);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d.get(i, k) + d.get(k, j);
                if via < d.get(i, j) {
                    d.set(i, j, via);
                }
            }
        }
    }
    d
}

/// Positive weights summing to one, drawn as normalized uniforms.
pub fn random_weights(n: usize, rng: &mut Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let t: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / t).collect()
}

/// A random space with `n` points and labels from `0..labels`.
pub fn random_space(n: usize, labels: usize, grid: bool, rng: &mut Rng) -> FiniteMmmSpace {
    let d = random_metric(n, grid, rng);
    let marks = (0..n)
        .map(|_| Mark::Label(rng.random_range(0..labels as u32)))
        .collect();
    FiniteMmmSpace::new(d, marks, random_weights(n, rng), MarkSpace::discrete_range(labels)).unwrap()
}

pub fn random_permutation(n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// The two-point reference space: distance `d`, marks 0 and 1, weights ½.
pub fn reference(d: f64) -> FiniteMmmSpace {
    FiniteMmmSpace::new(
        Matrix::from_upper(2, &[d]).unwrap(),
        vec![Mark::Label(0), Mark::Label(1)],
        vec![0.5, 0.5],
        MarkSpace::discrete_range(2),
    )
    .unwrap()
}

/// Brute-force Prohorov distance from the cross-cost block: the minimum of
/// `max(t, deficit(t))` over the candidate levels, with the deficit taken
/// as the largest Hall violation `p(A) − q(N_t(A))` over all row subsets.
pub fn prohorov_brute(cost: &Matrix, p: &[f64], q: &[f64]) -> f64 {
    let (r, c) = (p.len(), q.len());
    let mut levels = vec![0.0];
    for i in 0..r {
        for j in 0..c {
            if p[i] > 0.0 && q[j] > 0.0 {
                levels.push(cost.get(i, j));
            }
        }
    }
    let mut best = f64::INFINITY;
    for &t in &levels {
        let mut deficit: f64 = 0.0;
        for set in 1usize..(1 << r) {
            let mass: f64 = (0..r).filter(|i| set >> i & 1 == 1).map(|i| p[i]).sum();
            let covered: f64 = (0..c)
                .filter(|&j| (0..r).any(|i| set >> i & 1 == 1 && p[i] > 0.0 && cost.get(i, j) <= t))
                .map(|j| q[j])
                .sum();
            deficit = deficit.max(mass - covered);
        }
        best = best.min(t.max(deficit.min(1.0)));
    }
    best
}
