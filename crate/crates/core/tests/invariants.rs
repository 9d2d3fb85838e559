use proptest::prelude::*;

use bcp_nbi::budgetset::{build_set, Budget};
use bcp_nbi::conformal::{bcp_alpha, e_value_from_sum, nme_alpha, ScoreParams};
use bcp_nbi::domain::{normalize, point_estimate, CalibrationSet, CostModel, Example, LabelSpace, PROB_FLOOR};

fn raw_weights() -> impl Strategy<Value = Vec<f64>> {
    (1usize..=8).prop_flat_map(|s| prop::collection::vec(1e-6f64..10.0, s + 2))
}

fn costs_for(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..=1.0, n - 2).prop_map(|tail| {
        let mut c = vec![0.0, 0.0];
        c.extend(tail);
        c
    })
}

/// Distribution, costs and budget over the same label space.
fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    raw_weights().prop_flat_map(|w| {
        let n = w.len();
        (Just(w), costs_for(n), 0.0f64..10.0)
    })
}

fn calibration(n_labels: usize) -> impl Strategy<Value = Vec<(Vec<f64>, usize)>> {
    prop::collection::vec(
        (prop::collection::vec(1e-6f64..10.0, n_labels), 0..n_labels),
        1..40,
    )
}

fn cal_set(space: &LabelSpace, rows: &[(Vec<f64>, usize)], beta: f64) -> CalibrationSet {
    let ex = rows
        .iter()
        .map(|(w, y)| Example::new(normalize(space, w).unwrap(), *y).unwrap())
        .collect();
    CalibrationSet::new(ex, ScoreParams::new(beta).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn normalize_is_idempotent(w in raw_weights()) {
        let space = LabelSpace::from_num_labels(w.len()).unwrap();
        let once = normalize(&space, &w).unwrap();
        let twice = normalize(&space, once.probs()).unwrap();
        let sum: f64 = once.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(once.probs().iter().all(|&p| p >= PROB_FLOOR));
        for (a, b) in once.probs().iter().zip(twice.probs()) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn point_estimate_ignores_scale(w in raw_weights(), c in 1e-3f64..1e3) {
        let space = LabelSpace::from_num_labels(w.len()).unwrap();
        let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
        let a = point_estimate(&space, &normalize(&space, &w).unwrap());
        let b = point_estimate(&space, &normalize(&space, &scaled).unwrap());
        prop_assert_eq!(a.index(), b.index());
    }

    #[test]
    fn set_is_feasible_and_maximal((w, c, k) in instance()) {
        let space = LabelSpace::from_num_labels(w.len()).unwrap();
        let dist = normalize(&space, &w).unwrap();
        let costs = CostModel::new(&space, c.clone()).unwrap();
        let set = build_set(&dist, &costs, Budget::new(k).unwrap());
        let spent: f64 = set.included().iter().map(|&l| c[l]).sum();
        prop_assert!(spent <= k);
        if let Some(next) = set.first_excluded() {
            prop_assert!(spent + c[next] > k);
            let lam = set.lambda_star().unwrap();
            prop_assert!(set.included().iter().all(|&l| dist.prob(l) >= lam));
            prop_assert!(set.excluded().iter().all(|&l| dist.prob(l) <= lam));
        } else {
            prop_assert_eq!(set.c_max(), w.len());
        }
        // Zero-cost labels ranked first are always kept.
        let lead = set.ordering().iter().take_while(|&&l| c[l] == 0.0).count();
        prop_assert!(set.c_max() >= lead);
    }

    #[test]
    fn larger_budget_never_shrinks_the_set((w, c, k) in instance(), extra in 0.0f64..5.0) {
        let space = LabelSpace::from_num_labels(w.len()).unwrap();
        let dist = normalize(&space, &w).unwrap();
        let costs = CostModel::new(&space, c).unwrap();
        let small = build_set(&dist, &costs, Budget::new(k).unwrap());
        let large = build_set(&dist, &costs, Budget::new(k + extra).unwrap());
        prop_assert!(large.c_max() >= small.c_max());
        prop_assert!(small.included().iter().all(|&l| large.contains(l)));
    }

    #[test]
    fn estimates_lie_in_unit_interval(
        (w, c, k) in instance(),
        rows in (3usize..=10).prop_flat_map(calibration),
    ) {
        let space = LabelSpace::from_num_labels(w.len()).unwrap();
        let dist = normalize(&space, &w).unwrap();
        let costs = CostModel::new(&space, c).unwrap();
        let set = build_set(&dist, &costs, Budget::new(k).unwrap());
        let nme = nme_alpha(&dist, &set).value;
        prop_assert!((0.0..=1.0).contains(&nme));
        let included: f64 = set.included().iter().map(|&l| dist.prob(l)).sum();
        prop_assert!((nme - (1.0 - included)).abs() < 1e-12);

        // Calibration rows may have a different label count; rebuild on this space.
        let rows: Vec<(Vec<f64>, usize)> = rows
            .into_iter()
            .map(|(mut r, y)| { r.resize(w.len(), 1.0); (r, y % w.len()) })
            .collect();
        let cal = cal_set(&space, &rows, 1.0);
        let a = bcp_alpha(&dist, &set, &cal).unwrap().value;
        let n = cal.len() as f64;
        prop_assert!(a >= 1.0 / (n + 1.0) - 1e-15 && a <= 1.0);
    }

    #[test]
    fn bcp_respects_exchangeability_and_scaling(
        w in prop::collection::vec(1e-6f64..10.0, 6),
        rows in calibration(6),
        k in 0.0f64..5.0,
        seed in any::<u64>(),
    ) {
        let space = LabelSpace::new(4).unwrap();
        let dist = normalize(&space, &w).unwrap();
        let costs = CostModel::uniform(&space, 1.0).unwrap();
        let set = build_set(&dist, &costs, Budget::new(k).unwrap());
        let base = bcp_alpha(&dist, &set, &cal_set(&space, &rows, 1.0)).unwrap().value;

        let mut perm = rows.clone();
        let len = perm.len();
        perm.rotate_left((seed % len as u64) as usize);
        perm.reverse();
        let shuffled = bcp_alpha(&dist, &set, &cal_set(&space, &perm, 1.0)).unwrap().value;
        prop_assert!((base - shuffled).abs() < 1e-12);

        // Ascending score order is the set's ordering at every exponent.
        for beta in [0.5, 2.0] {
            let mut by_score: Vec<usize> = (0..6).collect();
            by_score.sort_by(|&a, &b| {
                dist.prob(a).powf(-beta).total_cmp(&dist.prob(b).powf(-beta)).then(a.cmp(&b))
            });
            prop_assert_eq!(&by_score[..], set.ordering());
            let a = bcp_alpha(&dist, &set, &cal_set(&space, &rows, beta)).unwrap().value;
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn e_value_is_scale_free(
        scores in prop::collection::vec(1e-3f64..1e3, 2..50),
        c in 1e-3f64..1e3,
    ) {
        let (test, cal) = scores.split_first().unwrap();
        let sum: f64 = cal.iter().sum();
        let a = e_value_from_sum(*test, sum, cal.len());
        let b = e_value_from_sum(test * c, sum * c, cal.len());
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        prop_assert!(a > 0.0 && a < cal.len() as f64 + 1.0);
    }
}
