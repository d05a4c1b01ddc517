mod common;

use std::collections::BTreeSet;

use common::{bh_rejections, brute_force_cutoff, normal, random_cutoff_instance, random_dataset, rng, t_max};
use pairscreen::glm::Family;
use pairscreen::two_stage::{
    fdr_cutoff, max_cutoff, run_two_stage, run_two_stage_multi, stage1_screen, FdrReport,
    TwoStageOptions,
};
use pairscreen::Matrix;
use proptest::prelude::*;

#[test]
fn cutoff_matches_brute_force() {
    for seed in 0..100 {
        let (stats, m, p, eta) = random_cutoff_instance(seed);
        let exact = fdr_cutoff(&stats, m, p, eta).unwrap();
        let brute = brute_force_cutoff(&stats, m, p, eta);
        assert!((exact - brute).abs() <= 1e-6, "seed {seed}: {exact} vs {brute}");
    }
}

fn rejected_set(report: &FdrReport) -> BTreeSet<(usize, usize)> {
    report.rejected().map(|o| (o.j, o.k)).collect()
}

#[test]
fn zero_alpha_is_bh() {
    for seed in 0..20 {
        let family = if seed % 2 == 0 { Family::Gaussian } else { Family::Logistic };
        let data = random_dataset(seed, family, 150, 8 + seed as usize % 5, 0.6);
        let report = run_two_stage(&data, 0.0, 0.1, &TwoStageOptions::default()).unwrap();
        let stats: Vec<f64> = report.pairs.iter().map(|o| o.t_jk.abs()).collect();
        let fitted = data.p() - report.stage1_failures.len();
        assert_eq!(report.m, fitted * (fitted - 1) / 2);
        let oracle: BTreeSet<(usize, usize)> = bh_rejections(&stats, report.m, data.p(), 0.1)
            .into_iter()
            .map(|i| (report.pairs[i].j, report.pairs[i].k))
            .collect();
        assert_eq!(rejected_set(&report), oracle, "seed {seed}");
    }
}

#[test]
fn screening_is_monotone_in_alpha1() {
    for seed in 0..10 {
        let data = random_dataset(seed, Family::Logistic, 120, 10, 0.5);
        let grid = [0.0, 0.1, 0.3, 0.5, 1.0];
        let reports = run_two_stage_multi(&data, &grid, 0.1, &TwoStageOptions::default()).unwrap();
        for w in reports.windows(2) {
            assert!(w[1].p1 <= w[0].p1);
            assert!(w[1].m <= w[0].m);
        }
        for (a, r) in grid.iter().zip(&reports) {
            let single = run_two_stage(&data, *a, 0.1, &TwoStageOptions::default()).unwrap();
            assert_eq!(&single, r);
        }
    }
}

#[test]
fn rejections_are_consistent() {
    for seed in 0..20 {
        let family = if seed % 3 == 0 { Family::Logistic } else { Family::Gaussian };
        let data = random_dataset(seed + 100, family, 100, 9, 0.7);
        for alpha1 in [0.0, 0.2, 0.6] {
            for strict in [false, true] {
                let opts = TwoStageOptions {
                    strict_cutoff: strict,
                    ..TwoStageOptions::default()
                };
                let report = run_two_stage(&data, alpha1, 0.1, &opts).unwrap();
                let screen = stage1_screen(&data, report.alpha, &opts).unwrap();
                assert!(report.t_hat >= 0.0 && report.t_hat <= max_cutoff(data.p()));
                for o in &report.pairs {
                    let over = if strict { o.t_jk.abs() > report.t_hat } else { o.t_jk.abs() >= report.t_hat };
                    assert_eq!(o.rejected, over);
                    assert!(screen.passing.contains(&o.j) && screen.passing.contains(&o.k));
                }
                assert_eq!(report.pairs.len() + report.skipped.len(), report.m);
                assert_eq!(report.rejected_count, report.rejected().count());
            }
        }
    }
}

#[test]
fn skipped_pairs_are_never_rejected() {
    let mut r = rng(5);
    let n = 60;
    let mut x = Matrix::zeros(n, 4);
    for i in 0..n {
        let v = normal(&mut r);
        x.set(i, 0, v);
        x.set(i, 1, v);
        x.set(i, 2, normal(&mut r));
        x.set(i, 3, normal(&mut r));
    }
    let y: Vec<f64> = (0..n).map(|i| 3.0 * x.get(i, 0) * x.get(i, 2) + x.get(i, 1) + 0.1 * normal(&mut r)).collect();
    let data = pairscreen::Dataset::new(x, y, Family::Gaussian, None).unwrap();
    let report = run_two_stage(&data, 0.0, 0.2, &TwoStageOptions::default()).unwrap();
    assert!(report.skipped.iter().any(|s| (s.j, s.k) == (0, 1)));
    assert_eq!(report.m, 6);
    assert!(!report.rejected().any(|o| (o.j, o.k) == (0, 1)));
}

#[test]
fn p_equals_two_tests_at_most_one_pair() {
    let data = random_dataset(3, Family::Gaussian, 50, 2, 1.0);
    for alpha1 in [0.0, 0.5, 5.0] {
        let report = run_two_stage(&data, alpha1, 0.1, &TwoStageOptions::default()).unwrap();
        assert!(report.pairs.len() + report.skipped.len() <= 1);
        assert!(report.t_hat <= t_max(2) + 1e-15);
    }
}

#[test]
fn reports_identical_across_workers() {
    for seed in 0..4 {
        let data = random_dataset(seed, Family::Logistic, 200, 12, 0.5);
        let serial = run_two_stage(
            &data,
            0.1,
            0.1,
            &TwoStageOptions {
                workers: Some(1),
                ..TwoStageOptions::default()
            },
        )
        .unwrap();
        let parallel = run_two_stage(
            &data,
            0.1,
            0.1,
            &TwoStageOptions {
                workers: Some(4),
                ..TwoStageOptions::default()
            },
        )
        .unwrap();
        assert_eq!(
            serde_json::to_string(&serial).unwrap(),
            serde_json::to_string(&parallel).unwrap()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cutoff_in_range_and_satisfies_definition(
        stats in prop::collection::vec(0.0f64..8.0, 0..40),
        extra in 0usize..20,
        p in 2usize..500,
        eta in 0.001f64..0.5,
    ) {
        let m = stats.len() + extra;
        prop_assume!(m <= p * (p - 1) / 2);
        let t = fdr_cutoff(&stats, m, p, eta).unwrap();
        let tmax = max_cutoff(p);
        prop_assert!((0.0..=tmax).contains(&t));
        if t < tmax {
            prop_assert!(common::feasible(&stats, m, eta, t + 1e-9) || common::feasible(&stats, m, eta, t));
            // nothing feasible on a grid below t
            for i in 0..200 {
                let s = t * i as f64 / 200.0;
                if s < t - 1e-7 {
                    prop_assert!(!common::feasible(&stats, m, eta, s));
                }
            }
        }
    }

    #[test]
    fn cutoff_ignores_input_order(mut stats in prop::collection::vec(0.0f64..6.0, 1..30), eta in 0.01f64..0.3) {
        let m = stats.len() + 3;
        let a = fdr_cutoff(&stats, m, 100, eta).unwrap();
        stats.reverse();
        prop_assert_eq!(a, fdr_cutoff(&stats, m, 100, eta).unwrap());
    }
}
