mod common;

use mmm::compact::{
    ball_mass_law, ball_masses, distance_tail, family_tightness, mark_tail, modulus_mass, sampled_functionals,
    MarkTailGrid, TightnessConfig,
};
use mmm::numeric::seeded_rng;
use mmm::{FiniteMmmSpace, Mark, MarkSpace, Matrix};
use proptest::prelude::*;

use common::{random_space, reference};

/// `n` equally weighted points on a line at spacing `h`, marks alternating.
fn path(n: usize, h: f64) -> FiniteMmmSpace {
    let d = Matrix::from_fn(n, n, |i, j| (i as f64 - j as f64).abs() * h);
    FiniteMmmSpace::uniform(
        d,
        (0..n).map(|i| Mark::Label((i % 2) as u32)).collect(),
        MarkSpace::discrete_range(2),
    )
    .unwrap()
}

#[test]
fn path_fixture_values() {
    let x = path(4, 1.0);
    assert_eq!(ball_masses(&x, 1.5), vec![0.5, 0.75, 0.75, 0.5]);
    assert_eq!(modulus_mass(&x, 1.5, 0.5).unwrap(), 0.5);
    assert_eq!(modulus_mass(&x, 1.5, 0.74).unwrap(), 0.5);
    assert_eq!(modulus_mass(&x, 1.5, 0.75).unwrap(), 1.0);
    // Open balls: radius exactly 1 holds the centre alone.
    assert_eq!(modulus_mass(&x, 1.0, 0.25).unwrap(), 1.0);
    let tail = distance_tail(&x, &[0.0, 1.0, 2.5, 3.0]).unwrap();
    let masses: Vec<f64> = tail.iter().map(|t| t.mass).collect();
    assert_eq!(masses, vec![0.75, 0.375, 0.125, 0.0]);
    let marks = mark_tail(&x, &MarkTailGrid::default_for(x.mark_space())).unwrap();
    assert_eq!((marks[0].at, marks[0].mass, marks[1].mass), (1.0, 0.5, 0.0));
}

#[test]
fn reference_fixture_values() {
    let x = reference(1.0);
    assert_eq!(modulus_mass(&x, 0.5, 0.25).unwrap(), 0.0);
    assert_eq!(modulus_mass(&x, 0.5, 0.5).unwrap(), 1.0);
    assert_eq!(distance_tail(&x, &[0.5]).unwrap()[0].mass, 0.5);
}

#[test]
fn family_verdicts() {
    let config = TightnessConfig::new(
        vec![0.1, 0.5, 1.0],
        vec![0.001, 0.01, 0.1],
        vec![0.5, 1.0, 2.0, 4.0, 8.0],
    );
    let growing: Vec<_> = (1..=10).map(|n| path(2, n as f64)).collect();
    let g = family_tightness(&growing, &config).unwrap();
    assert_eq!(g.members, 10);
    assert!(!g.verdicts.distance_tail);
    assert!(!g.verdicts.tightness_consistent);
    let shrinking: Vec<_> = (2..=20).map(|n| path(n, 1.0 / n as f64)).collect();
    let s = family_tightness(&shrinking, &config).unwrap();
    assert!(s.verdicts.modulus && s.verdicts.distance_tail);
    assert!(s.verdicts.tightness_consistent);
}

#[test]
fn euclidean_mark_grid_rejects_labels() {
    let x = reference(1.0);
    assert!(mark_tail(&x, &MarkTailGrid::Radii { radii: vec![1.0] }).is_err());
    let nested = MarkTailGrid::Labels {
        sets: vec![vec!["1".into()], vec!["0".into()]],
    };
    assert!(mark_tail(&x, &nested).is_err());
    assert!(modulus_mass(&x, 0.0, 0.1).is_err());
    assert!(modulus_mass(&x, 1.0, 1.5).is_err());
    assert!(distance_tail(&x, &[1.0, 0.5]).is_err());
}

#[test]
fn sampled_functionals_approach_their_laws() {
    let mut rng = seeded_rng(4);
    let x = random_space(5, 2, true, &mut rng);
    let f = sampled_functionals(&x, 20_000, 0.75, 1).unwrap();
    let exact = ball_mass_law(&x, 0.75);
    let cdf = |law: &[(f64, f64)], t: f64| law.iter().filter(|(v, _)| *v <= t).map(|(_, p)| p).sum::<f64>();
    for &(t, _) in &exact {
        // Standard deviation of an empirical CDF value is at most 0.0036 here.
        assert!((cdf(&f.z, t) - cdf(&exact, t)).abs() < 0.02);
    }
    let tail = distance_tail(&x, &[0.0, 0.5, 1.0, 1.5, 2.0]).unwrap();
    for t in tail {
        assert!((1.0 - cdf(&f.w, t.at) - t.mass).abs() < 0.02);
    }
    let v_total: f64 = f.v.iter().map(|(_, p)| p).sum();
    assert!((v_total - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn modulus_is_monotone(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = seeded_rng(seed);
        let x = random_space(n, 2, true, &mut rng);
        let (eps, deltas) = ([0.25, 0.75, 1.25, 2.0], [0.0, 0.1, 0.3, 0.6, 1.0]);
        for &e in &eps {
            let row: Vec<f64> = deltas.iter().map(|&d| modulus_mass(&x, e, d).unwrap()).collect();
            prop_assert!(row.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!((row[4] - 1.0).abs() < 1e-12);
        }
        for &d in &deltas {
            let col: Vec<f64> = eps.iter().map(|&e| modulus_mass(&x, e, d).unwrap()).collect();
            prop_assert!(col.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn tails_are_nonincreasing(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = seeded_rng(seed);
        let x = random_space(n, 3, false, &mut rng);
        let tail = distance_tail(&x, &[0.0, 0.5, 1.0, 2.0, 4.0]).unwrap();
        prop_assert!(tail.windows(2).all(|w| w[0].mass >= w[1].mass));
        prop_assert!(tail[4].mass == 0.0);
        let m = mark_tail(&x, &MarkTailGrid::default_for(x.mark_space())).unwrap();
        prop_assert!(m.windows(2).all(|w| w[0].mass >= w[1].mass));
        prop_assert!(m.last().unwrap().mass.abs() < 1e-15);
    }

    #[test]
    fn family_curves_dominate_members(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let fam: Vec<_> = (0..4).map(|_| random_space(4, 2, true, &mut rng)).collect();
        let config = TightnessConfig::new(vec![0.5, 1.0], vec![0.1, 0.3], vec![0.5, 1.0, 2.0]);
        let r = family_tightness(&fam, &config).unwrap();
        for x in &fam {
            for (p, q) in distance_tail(x, &config.distance_grid).unwrap().iter().zip(&r.distance_tail) {
                prop_assert!(p.mass <= q.mass);
            }
            for m in &r.modulus {
                prop_assert!(modulus_mass(x, m.eps, m.delta).unwrap() <= m.mass);
            }
        }
    }
}
