mod common;

use mmm::numeric::seeded_rng;
use mmm::prohorov::{prohorov_cross, prohorov_exact, strassen_check, FinitePointMeasure};
use mmm::Matrix;
use proptest::prelude::*;
use rand::Rng as _;

use common::{prohorov_brute, random_metric, random_weights};

/// A measure on a random subset of `0..k`, possibly with zero masses.
fn random_measure(k: usize, rng: &mut mmm::numeric::Rng) -> FinitePointMeasure {
    let size = rng.random_range(1..=k.min(6));
    let atoms = common::random_permutation(k, rng)[..size].to_vec();
    let mut probs = random_weights(size, rng);
    if size > 1 && rng.random_bool(0.2) {
        let moved = probs[0];
        probs[0] = 0.0;
        probs[1] += moved;
    }
    FinitePointMeasure::new(atoms, probs).unwrap()
}

fn full(k: usize, p: &FinitePointMeasure) -> Vec<f64> {
    let mut v = vec![0.0; k];
    for (&a, &x) in p.atoms.iter().zip(&p.probs) {
        v[a] += x;
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn matches_the_hall_oracle(seed in any::<u64>(), k in 1usize..9, grid in any::<bool>()) {
        let mut rng = seeded_rng(seed);
        let metric = random_metric(k, grid, &mut rng);
        let (p, q) = (random_measure(k, &mut rng), random_measure(k, &mut rng));
        let r = prohorov_exact(&metric, &p, &q).unwrap();
        let cost = metric.select(&p.atoms, &q.atoms);
        prop_assert!((r.value - prohorov_brute(&cost, &p.probs, &q.probs)).abs() < 1e-9);
        prop_assert!(strassen_check(&metric, &p, &q, r.value + 1e-9).unwrap());
        if r.value >= 1e-6 {
            prop_assert!(!strassen_check(&metric, &p, &q, r.value - 1e-6).unwrap());
        }
    }

    #[test]
    fn witness_is_a_coupling_attaining_the_value(seed in any::<u64>(), k in 1usize..8) {
        let mut rng = seeded_rng(seed);
        let metric = random_metric(k, true, &mut rng);
        let (p, q) = (random_measure(k, &mut rng), random_measure(k, &mut rng));
        let r = prohorov_exact(&metric, &p, &q).unwrap();
        let w = &r.witness;
        for (s, x) in w.row_sums().iter().zip(&p.probs) {
            prop_assert!((s - x).abs() < 1e-9);
        }
        for (s, x) in w.col_sums().iter().zip(&q.probs) {
            prop_assert!((s - x).abs() < 1e-9);
        }
        prop_assert!(w.matrix.iter().flatten().all(|&x| x >= -1e-15));
        let beyond = w.mass_beyond(|i, j| metric.get(w.rows[i], w.cols[j]), r.value);
        prop_assert!(beyond <= r.value + 1e-9);
    }

    #[test]
    fn is_a_metric_on_measures(seed in any::<u64>(), k in 2usize..7) {
        let mut rng = seeded_rng(seed);
        let metric = random_metric(k, false, &mut rng);
        let ms: Vec<_> = (0..3).map(|_| random_measure(k, &mut rng)).collect();
        let d = |a: &FinitePointMeasure, b: &FinitePointMeasure| prohorov_exact(&metric, a, b).unwrap().value;
        prop_assert_eq!(d(&ms[0], &ms[1]), d(&ms[1], &ms[0]));
        prop_assert!(d(&ms[0], &ms[0]) == 0.0);
        prop_assert!(d(&ms[0], &ms[2]) <= d(&ms[0], &ms[1]) + d(&ms[1], &ms[2]) + 1e-9);
    }

    #[test]
    fn bounded_by_total_variation_on_discrete_metrics(seed in any::<u64>(), k in 1usize..7) {
        let mut rng = seeded_rng(seed);
        let metric = Matrix::from_fn(k, k, |i, j| if i == j { 0.0 } else { 1.0 });
        let (p, q) = (random_measure(k, &mut rng), random_measure(k, &mut rng));
        let tv: f64 = full(k, &p).iter().zip(&full(k, &q)).map(|(a, b)| (a - b).max(0.0)).sum();
        let v = prohorov_exact(&metric, &p, &q).unwrap().value;
        prop_assert!(v <= tv + 1e-9);
        prop_assert!(v <= 1.0);
    }
}

#[test]
fn two_point_examples() {
    let metric = Matrix::from_upper(2, &[0.3]).unwrap();
    let dirac = |a| FinitePointMeasure::new(vec![a], vec![1.0]).unwrap();
    assert!((prohorov_exact(&metric, &dirac(0), &dirac(1)).unwrap().value - 0.3).abs() < 1e-12);
    let far = Matrix::from_upper(2, &[5.0]).unwrap();
    assert!((prohorov_exact(&far, &dirac(0), &dirac(1)).unwrap().value - 1.0).abs() < 1e-12);
    let half = FinitePointMeasure::new(vec![0, 1], vec![0.5, 0.5]).unwrap();
    assert!((prohorov_exact(&far, &dirac(0), &half).unwrap().value - 0.5).abs() < 1e-12);
}

#[test]
fn cross_form_matches_shared_form() {
    let mut rng = seeded_rng(3);
    for _ in 0..200 {
        let k = rng.random_range(2..7);
        let metric = random_metric(k, true, &mut rng);
        let (p, q) = (random_measure(k, &mut rng), random_measure(k, &mut rng));
        let (v, _) = prohorov_cross(&metric.select(&p.atoms, &q.atoms), &p.probs, &q.probs).unwrap();
        assert_eq!(v, prohorov_exact(&metric, &p, &q).unwrap().value);
    }
}

#[test]
fn rejects_bad_measures() {
    let metric = Matrix::from_upper(2, &[1.0]).unwrap();
    assert!(FinitePointMeasure::new(vec![0], vec![0.5]).is_err());
    let p = FinitePointMeasure {
        atoms: vec![5],
        probs: vec![1.0],
    };
    let q = FinitePointMeasure {
        atoms: vec![0],
        probs: vec![1.0],
    };
    assert!(prohorov_exact(&metric, &p, &q).is_err());
}
