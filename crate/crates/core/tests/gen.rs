use mmm::gen::{euclidean_cloud, kingman, moran, CoalescentConfig, MarkMap, MoranConfig, MutationModel};
use mmm::space::validate;
use mmm::Mark;
use proptest::prelude::*;

/// Kolmogorov distance between the empirical law of `xs` and Exp(1).
fn ks_exp1(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = 1.0 - (-x).exp();
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

// With 2000 draws the 0.5% critical value of the Kolmogorov statistic is
// about 1.73 / √2000 ≈ 0.039.
const KS_CRITICAL: f64 = 0.039;

#[test]
fn kingman_pair_distance_is_exponential() {
    let xs = (0..2000)
        .map(|s| kingman(&CoalescentConfig::new(2, 0.0, s)).unwrap().distance(0, 1))
        .collect();
    assert!(ks_exp1(xs) < KS_CRITICAL);
}

#[test]
fn moran_pair_distance_is_exponential() {
    let xs = (0..2000)
        .map(|s| moran(&MoranConfig::new(2, 10.0, 0.0, s)).unwrap().distance(0, 1))
        .collect();
    assert!(ks_exp1(xs) < KS_CRITICAL);
}

#[test]
fn kingman_leaves_are_exchangeable() {
    // Which of the three pairs of a 3-leaf tree merges first is uniform.
    let mut first = [0usize; 3];
    let runs = 3000;
    for s in 0..runs {
        let x = kingman(&CoalescentConfig::new(3, 0.0, s)).unwrap();
        let pairs = [x.distance(0, 1), x.distance(0, 2), x.distance(1, 2)];
        let k = (0..3).min_by(|&a, &b| pairs[a].total_cmp(&pairs[b])).unwrap();
        first[k] += 1;
    }
    for c in first {
        assert!((c as f64 / runs as f64 - 1.0 / 3.0).abs() < 0.04, "{first:?}");
    }
}

#[test]
fn kingman_mark_marginals_are_exchangeable() {
    let runs = 3000;
    let mut ones = [0usize; 4];
    for s in 0..runs {
        let x = kingman(&CoalescentConfig::new(4, 1.0, s)).unwrap();
        for (i, c) in ones.iter_mut().enumerate() {
            *c += usize::from(*x.mark(i) == Mark::Label(1));
        }
    }
    for c in ones {
        assert!((c as f64 / runs as f64 - 0.5).abs() < 0.04, "{ones:?}");
    }
}

#[test]
fn no_mutation_means_one_type() {
    for s in 0..20 {
        let k = kingman(&CoalescentConfig::new(12, 0.0, s)).unwrap();
        assert!(k.marks().iter().all(|m| m == k.mark(0)));
        let mut c = CoalescentConfig::new(12, 3.0, s);
        c.mutation = MutationModel {
            alphabet: 3,
            transition: Some(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]),
        };
        let k = kingman(&c).unwrap();
        assert!(k.marks().iter().all(|m| m == k.mark(0)));
    }
}

#[test]
fn mutation_models_are_checked() {
    let mut c = CoalescentConfig::new(3, 1.0, 0);
    c.mutation = MutationModel {
        alphabet: 2,
        transition: Some(vec![vec![0.5, 0.4], vec![0.5, 0.5]]),
    };
    assert!(kingman(&c).is_err());
    assert!(kingman(&CoalescentConfig::new(0, 1.0, 0)).is_err());
    assert!(moran(&MoranConfig::new(1, 1.0, 1.0, 0)).is_err());
    assert!(moran(&MoranConfig::new(5, -1.0, 1.0, 0)).is_err());
}

#[test]
fn short_moran_horizon_leaves_founders_apart() {
    let x = moran(&MoranConfig::new(30, 1e-6, 0.0, 3)).unwrap();
    let far = (0..30)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .filter(|&(i, j)| x.distance(i, j) == 2e-6)
        .count();
    assert!(far >= 30 * 29 / 2 - 1);
}

#[test]
fn generators_are_deterministic() {
    assert_eq!(
        kingman(&CoalescentConfig::new(8, 1.0, 5)).unwrap(),
        kingman(&CoalescentConfig::new(8, 1.0, 5)).unwrap()
    );
    assert_eq!(
        moran(&MoranConfig::new(8, 3.0, 1.0, 5)).unwrap(),
        moran(&MoranConfig::new(8, 3.0, 1.0, 5)).unwrap()
    );
    assert_ne!(
        kingman(&CoalescentConfig::new(8, 1.0, 5)).unwrap(),
        kingman(&CoalescentConfig::new(8, 1.0, 6)).unwrap()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn genealogies_are_ultrametric(seed in any::<u64>(), n in 1usize..25, theta in 0.0f64..3.0) {
        let k = kingman(&CoalescentConfig::new(n, theta, seed)).unwrap();
        prop_assert!(k.is_ultrametric(1e-12));
        prop_assert!(validate(&k).is_valid());
        if n >= 2 {
            let m = moran(&MoranConfig::new(n, 2.0, theta, seed)).unwrap();
            prop_assert!(m.is_ultrametric(1e-12));
            prop_assert!(validate(&m).is_valid());
            prop_assert!(m.diameter() <= 4.0);
        }
    }

    #[test]
    fn cloud_distances_match_identity_marks(seed in any::<u64>(), n in 1usize..12, dim in 1usize..4) {
        let x = euclidean_cloud(n, dim, MarkMap::Identity, seed).unwrap();
        prop_assert!(validate(&x).is_valid());
        for i in 0..n {
            for j in 0..n {
                prop_assert!((x.distance(i, j) - x.mark_space().distance(x.mark(i), x.mark(j))).abs() < 1e-12);
            }
        }
        let signs = euclidean_cloud(n, dim, MarkMap::SignOfFirst, seed).unwrap();
        prop_assert_eq!(signs.distances(), x.distances());
        for i in 0..n {
            let Mark::Point(p) = x.mark(i) else { unreachable!() };
            let expected = if p[0] >= 0.0 { "pos" } else { "neg" };
            prop_assert_eq!(signs.mark_space().label_name(signs.mark(i)), Some(expected));
        }
    }
}
