use gap_core::segment::{
    motion_distance, objective, DEFAULT_PENALTY, segment_bruteforce, segment_dp, ChangeBudget, DistanceMode, SegParams,
};
use gap_core::traj::{synthetic_trajectory, Motion};
use proptest::prelude::*;

fn params(mode: DistanceMode, budget: ChangeBudget) -> SegParams {
    SegParams { mode, budget, ..SegParams::default() }
}

#[test]
fn dp_matches_bruteforce_on_small_trajectories() {
    for seed in 0..50u64 {
        let n = 6 + (seed as usize % 7);
        let traj = synthetic_trajectory(seed, n, 2, (seed % 2) as usize, 1 + seed as usize % 3).unwrap();
        for mode in [DistanceMode::Gap, DistanceMode::Cotpc] {
            let mut budgets = vec![ChangeBudget::Penalty(DEFAULT_PENALTY)];
            budgets.extend((0..=3).map(ChangeBudget::Count));
            for budget in budgets {
                let p = params(mode, budget);
                let (dp, bf) = (segment_dp(&traj, &p), segment_bruteforce(&traj, &p));
                match (dp, bf) {
                    (Ok(a), Ok(b)) => {
                        assert_eq!(a.change_indices, b.change_indices, "seed {seed} {mode:?} {budget:?}");
                        assert!((a.total_cost - b.total_cost).abs() < 1e-9);
                    }
                    (Err(_), Err(_)) => {}
                    (a, b) => panic!("seed {seed} {budget:?}: dp {a:?} vs brute force {b:?}"),
                }
            }
        }
    }
}

#[test]
fn dp_total_matches_direct_objective() {
    let traj = synthetic_trajectory(77, 40, 2, 1, 4).unwrap();
    let p = SegParams::default();
    let r = segment_dp(&traj, &p).unwrap();
    let direct = objective(&traj, &r.change_indices, &p).unwrap();
    assert!((r.total_cost - direct.total_cost).abs() < 1e-9);
}

fn motion_strategy() -> impl Strategy<Value = (Motion, Motion)> {
    (1usize..4, 0usize..3).prop_flat_map(|(dp, dth)| {
        let v = move |d| prop::collection::vec(-5.0f64..5.0, d);
        (v(dp), v(dth), -1.0f64..1.0, v(dp), v(dth), -1.0f64..1.0)
            .prop_map(|(a, b, c, d, e, f)| (Motion { dp: a, dtheta: b, dg: c }, Motion { dp: d, dtheta: e, dg: f }))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn distance_stays_in_range((a, b) in motion_strategy(), alpha in 0.0f64..3.0, beta in 0.0f64..0.1) {
        let p = SegParams { alpha, beta, ..SegParams::default() };
        let d = motion_distance(&a, &b, &p).unwrap();
        let lo = -(1.0 + alpha + beta) - 1e-12;
        let hi = 1.0 + alpha + 1e-12;
        prop_assert!(d >= lo && d <= hi, "{d} outside [{lo}, {hi}]");
    }

    #[test]
    fn segmentation_ignores_scale(seed in 0u64..10_000, c in 0.001f64..10.0, n in 8usize..40) {
        let traj = synthetic_trajectory(seed, n, 2, 1, 1 + (seed as usize % 3)).unwrap();
        let p = SegParams::default();
        let a = segment_dp(&traj, &p).unwrap();
        let b = segment_dp(&traj.scaled_states(c), &p).unwrap();
        prop_assert_eq!(a.change_indices, b.change_indices);
    }

    #[test]
    fn dp_beats_random_segmentations(seed in 0u64..10_000, picks in prop::collection::vec(1usize..30, 0..4)) {
        let traj = synthetic_trajectory(seed, 30, 2, 0, 3).unwrap();
        let p = SegParams::default();
        let best = segment_dp(&traj, &p).unwrap();
        let mut idx: Vec<usize> = picks;
        idx.sort_unstable();
        idx.dedup();
        // only compare against feasible index sets
        if let Ok(other) = objective(&traj, &idx, &p) {
            prop_assert!(best.total_cost <= other.total_cost + 1e-9);
        }
    }

    #[test]
    fn dp_agrees_with_bruteforce(seed in 0u64..100_000, n in 4usize..12, k in 0usize..4) {
        let traj = synthetic_trajectory(seed, n, 2, 1, 1.max(k.min(n - 1))).unwrap();
        for budget in [ChangeBudget::Penalty(DEFAULT_PENALTY), ChangeBudget::Count(k)] {
            let p = SegParams { budget, ..SegParams::default() };
            match (segment_dp(&traj, &p), segment_bruteforce(&traj, &p)) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(&a.change_indices, &b.change_indices);
                    prop_assert!((a.total_cost - b.total_cost).abs() < 1e-9);
                }
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "dp {:?} vs brute force {:?}", a, b),
            }
        }
    }
}
