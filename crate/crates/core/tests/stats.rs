mod common;

use mmm::gen::{kingman, CoalescentConfig};
use mmm::numeric::seeded_rng;
use mmm::poly::{default_panel, evaluate_exact};
use mmm::stats::{convergence_table, median_gaps, panel_values, two_sample_test, Target};

use common::{random_permutation, random_space, reference};

#[test]
fn two_sample_is_invariant_under_relabelling() {
    let mut rng = seeded_rng(31);
    for _ in 0..10 {
        let a = random_space(4, 2, true, &mut rng);
        let b = random_space(4, 2, true, &mut rng);
        let a2 = a.relabel(&random_permutation(4, &mut rng)).unwrap();
        let r = two_sample_test(&a, &b, 3, 40, 99, 17).unwrap();
        assert_eq!(r, two_sample_test(&a2, &b, 3, 40, 99, 17).unwrap());
    }
}

#[test]
fn two_sample_mirror_rule() {
    let (a, b) = (reference(1.0), reference(2.0));
    for seed in [0, 1, 10, 11] {
        assert_eq!(
            two_sample_test(&a, &b, 2, 50, 99, seed).unwrap(),
            two_sample_test(&b, &a, 2, 50, 99, seed ^ 1).unwrap()
        );
    }
}

#[test]
fn two_sample_separates_and_accepts() {
    let r = two_sample_test(&reference(1.0), &reference(2.0), 2, 200, 199, 3).unwrap();
    assert!(r.p_value <= 0.01, "{r:?}");
    let p: Vec<f64> = (0..20)
        .map(|s| {
            two_sample_test(&reference(1.0), &reference(1.0), 2, 100, 99, s)
                .unwrap()
                .p_value
        })
        .collect();
    assert!(p.iter().all(|&x| x > 0.0 && x <= 1.0));
    assert!(p.iter().filter(|&&x| x <= 0.05).count() <= 5, "{p:?}");
}

#[test]
fn two_sample_rejects_bad_parameters() {
    let a = reference(1.0);
    assert!(two_sample_test(&a, &a, 1, 100, 99, 0).is_err());
    assert!(two_sample_test(&a, &a, 2, 5, 99, 0).is_err());
    assert!(two_sample_test(&a, &a, 2, 100, 10, 0).is_err());
}

#[test]
fn panel_values_are_exact_on_small_spaces() {
    let x = reference(1.0);
    let panel = default_panel(x.mark_space(), 3, 6).unwrap();
    let cells = panel_values(&x, &panel, 1000, 0).unwrap();
    for (c, phi) in cells.iter().zip(&panel) {
        assert!(c.exact);
        assert_eq!(c.stderr, 0.0);
        assert!((c.estimate - evaluate_exact(phi, &x).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn panel_values_fall_back_to_monte_carlo() {
    let x = kingman(&CoalescentConfig::new(400, 1.0, 2)).unwrap();
    let panel = default_panel(x.mark_space(), 3, 5).unwrap();
    let cells = panel_values(&x, &panel, 2000, 0).unwrap();
    assert!(cells.iter().any(|c| !c.exact && c.stderr > 0.0));
    assert_eq!(cells, panel_values(&x, &panel, 2000, 0).unwrap());
}

#[test]
fn convergence_to_itself_has_zero_gaps() {
    let x = reference(1.0);
    let panel = default_panel(x.mark_space(), 2, 4).unwrap();
    let table = convergence_table(&[x.clone(), reference(2.0)], Some(&Target::Space(x)), &panel, 100, 0).unwrap();
    let gaps = table.gaps.unwrap();
    assert!(gaps[0].iter().all(|&g| g == 0.0));
    assert!(gaps[1].iter().all(|&g| g > 0.0));
    assert!(table.trends.unwrap().iter().all(|t| !t.decreasing && !t.monotone));
}

#[test]
fn convergence_along_a_scaled_sequence() {
    let panel = default_panel(reference(1.0).mark_space(), 2, 4).unwrap();
    let seq: Vec<_> = [3.0, 2.0, 1.5, 1.1].iter().map(|&d| reference(d)).collect();
    let target = Target::Space(reference(1.0));
    let table = convergence_table(&seq, Some(&target), &panel, 100, 0).unwrap();
    assert_eq!(table.rows.len(), 4);
    assert_eq!(table.columns.len(), 4);
    assert!(table.trends.unwrap().iter().all(|t| t.monotone && t.decreasing));
    let values: Vec<f64> = table.target.unwrap().iter().map(|c| c.estimate).collect();
    let by_values = convergence_table(&seq, Some(&Target::Values(values)), &panel, 100, 0).unwrap();
    assert_eq!(by_values.gaps, table.gaps);
    assert!(convergence_table(&seq, Some(&Target::Values(vec![0.0])), &panel, 100, 0).is_err());
    assert!(convergence_table(&seq, None, &panel, 100, 0).unwrap().gaps.is_none());
}

#[test]
fn median_of_gap_tables() {
    let tables = vec![vec![vec![1.0, 4.0]], vec![vec![3.0, 0.0]], vec![vec![2.0, 5.0]]];
    assert_eq!(median_gaps(&tables), vec![vec![2.0, 4.0]]);
}
