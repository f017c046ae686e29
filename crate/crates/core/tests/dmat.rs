mod common;

use mmm::dmat::{exact_law, mark_marginal, permute, project_mm, sample, shift};
use mmm::numeric::seeded_rng;
use mmm::Mark;
use proptest::prelude::*;

use common::{random_space, reference};

const PERMS3: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_law_is_a_probability(seed in any::<u64>(), n in 1usize..5, order in 1usize..4) {
        let mut rng = seeded_rng(seed);
        let x = random_space(n, 2, true, &mut rng);
        let law = exact_law(&x, order).unwrap();
        prop_assert!((law.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!(law.atoms().iter().all(|(s, p)| s.order() == order && *p > 0.0));
    }

    #[test]
    fn exact_law_is_exchangeable(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = seeded_rng(seed);
        let x = random_space(n, 2, rng.random_bool(0.5), &mut rng);
        let law = exact_law(&x, 3).unwrap();
        for sigma in PERMS3 {
            let pushed = law.push_forward(3, |s| permute(s, &sigma)).unwrap();
            prop_assert_eq!(&pushed, &law);
        }
    }

    #[test]
    fn shift_gives_the_lower_order_law(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = seeded_rng(seed);
        let x = random_space(n, 2, true, &mut rng);
        let pushed = exact_law(&x, 3).unwrap().push_forward(2, |s| shift(s, 1)).unwrap();
        prop_assert!(pushed.max_abs_diff(&exact_law(&x, 2).unwrap()) < 1e-12);
    }

    #[test]
    fn law_is_a_class_invariant(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = seeded_rng(seed);
        let x = random_space(n, 2, true, &mut rng);
        let y = x.relabel(&common::random_permutation(n, &mut rng)).unwrap();
        prop_assert!(exact_law(&x, 3).unwrap().max_abs_diff(&exact_law(&y, 3).unwrap()) < 1e-12);
    }
}

use rand::Rng as _;

#[test]
fn reference_pair_law() {
    let law = exact_law(&reference(1.0), 2).unwrap();
    assert_eq!(law.atoms().len(), 4);
    let off: f64 = law
        .atoms()
        .iter()
        .filter(|(s, _)| s.dist(0, 1) == 1.0)
        .map(|(_, p)| p)
        .sum();
    assert!((off - 0.5).abs() < 1e-15);
}

#[test]
fn sampling_matches_exact_frequencies() {
    let x = reference(1.0);
    let s: Vec<_> = (0..4000).map(|k| sample(&x, 2, k).unwrap()).collect();
    let off = s.iter().filter(|s| s.dist(0, 1) == 1.0).count() as f64 / 4000.0;
    // Binomial(4000, 1/2) has standard deviation ≈ 0.0079.
    assert!((off - 0.5).abs() < 0.04, "{off}");
    assert!(s
        .iter()
        .all(|s| s.dist(0, 1) == if s.mark(0) == s.mark(1) { 0.0 } else { 1.0 }));
}

#[test]
fn sampling_is_deterministic() {
    let x = reference(1.0);
    assert_eq!(sample(&x, 5, 9).unwrap(), sample(&x, 5, 9).unwrap());
}

#[test]
fn projections() {
    let mm = project_mm(&reference(1.0));
    assert_eq!(mm.len(), 2);
    let m = mark_marginal(&reference(1.0));
    assert_eq!(m[&Mark::Label(0)], 0.5);
    assert_eq!(m[&Mark::Label(1)], 0.5);
}

#[test]
fn permute_rejects_repeats() {
    let s = sample(&reference(1.0), 3, 0).unwrap();
    assert!(permute(&s, &[0, 0, 1]).is_err());
    assert!(permute(&s, &[0, 3, 1]).is_err());
    assert!(shift(&s, 3).is_err());
}
