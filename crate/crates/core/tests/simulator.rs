use gap_core::policy::PolicyController;
use gap_core::segment::{boundaries_recovered, segment_dp, SegParams};
use gap_core::sim::*;
use gap_core::traj::Distribution::{self, InDistribution as Id, OutOfDistribution as Ood};
use gap_core::rng::SeededRng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const TASKS: [TaskVariant; 2] = [TaskVariant::PickPlace, TaskVariant::PickRotatePlace];

#[test]
fn expert_solves_every_seed() {
    for task in TASKS {
        let cfg = EnvConfig::with_task(task);
        for dist in [Id, Ood] {
            for seed in 0..1000 {
                let ep = rollout(&cfg, dist, seed, &mut ExpertController).unwrap();
                assert!(ep.success, "{task:?} {dist:?} seed {seed}");
                for s in &ep.states {
                    if s.held {
                        assert_eq!(s.object, s.p);
                    }
                }
                let ranks: Vec<u8> = ep.states.iter().map(|s| s.phase as u8).collect();
                assert!(ranks.windows(2).all(|w| w[0] <= w[1]), "phases regress on seed {seed}");
            }
        }
    }
}

#[test]
fn expert_evaluates_to_one() {
    let cfg = EnvConfig::default();
    let r = evaluate(&mut ExpertController, &cfg, 100, Id, 3).unwrap();
    assert_eq!(r.success_rate, 1.0);
    assert_eq!(r.episodes.len(), 100);
}

#[test]
fn random_actions_rarely_succeed() {
    for task in TASKS {
        let cfg = EnvConfig::with_task(task);
        let r = evaluate(&mut RandomController::new(0), &cfg, 100, Id, 5).unwrap();
        assert!(r.success_rate <= 0.05, "{task:?}: {}", r.success_rate);
    }
}

#[test]
fn resets_are_uniform_over_the_spawn_region() {
    let cfg = EnvConfig::default();
    let r = cfg.id_spawn;
    let bins = 5;
    let mut counts = vec![0usize; bins * bins];
    let n = 10_000;
    for seed in 0..n {
        let (s, _) = reset(&cfg, Id, seed);
        assert!(r.contains(s.object));
        let bx = (((s.object[0] - r.x0) / (r.x1 - r.x0)) * bins as f64) as usize;
        let by = (((s.object[1] - r.y0) / (r.y1 - r.y0)) * bins as f64) as usize;
        counts[by.min(bins - 1) * bins + bx.min(bins - 1)] += 1;
    }
    let expected = n as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat);
    assert!(p > 0.01, "chi-square {stat}, p = {p}");
}

#[test]
fn ood_resets_avoid_the_training_region() {
    let cfg = EnvConfig::default();
    assert!(!cfg.id_spawn.overlaps(&cfg.ood_spawn));
    for seed in 0..2000 {
        let (s, _) = reset(&cfg, Ood, seed);
        let r = cfg.id_spawn;
        let inside = s.object[0] > r.x0 && s.object[0] < r.x1 && s.object[1] > r.y0 && s.object[1] < r.y1;
        assert!(!inside && cfg.ood_spawn.contains(s.object));
    }
}

/// Two-sample Kolmogorov-Smirnov p-value (asymptotic).
fn ks_p_value(a: &[f64], b: &[f64]) -> f64 {
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let q: f64 = (1..100).map(|k| 2.0 * (-1f64).powi(k - 1) * (-2.0 * (k * k) as f64 * lambda * lambda).exp()).sum();
    q.clamp(0.0, 1.0)
}

#[test]
fn initial_proprio_matches_across_distributions() {
    for task in TASKS {
        let cfg = EnvConfig::with_task(task);
        let rows = |dist: Distribution| -> Vec<Vec<f64>> {
            (0..500)
                .map(|s| {
                    let mut v = Vec::new();
                    reset(&cfg, dist, 10_000 + s).1.proprio.flatten_into(&mut v);
                    v
                })
                .collect()
        };
        let (a, b) = (rows(Id), rows(Ood));
        for k in 0..a[0].len() {
            let xa: Vec<f64> = a.iter().map(|r| r[k]).collect();
            let xb: Vec<f64> = b.iter().map(|r| r[k]).collect();
            assert!(ks_p_value(&xa, &xb) > 0.01, "{task:?} dim {k}");
        }
    }
}

#[test]
fn ks_detects_a_shift() {
    let mut rng = SeededRng::new(1);
    let a: Vec<f64> = (0..500).map(|_| rng.normal()).collect();
    let b: Vec<f64> = (0..500).map(|_| rng.normal() + 0.5).collect();
    assert!(ks_p_value(&a, &b) < 0.01);
}

#[test]
fn object_cell_round_trips_through_rendering() {
    let cfg = EnvConfig::default();
    let mut rng = SeededRng::new(2);
    for _ in 0..500 {
        let (mut s, _) = reset(&cfg, Id, rng.next_u64());
        s.object = [rng.range(0.0, 1.0), rng.range(0.0, 1.0)];
        let v = render(&cfg, &s);
        assert_eq!(argmax_cell(&v, cfg.grid, 0), cell_of(s.object, cfg.grid));
    }
}

#[test]
fn same_seed_and_actions_replay_exactly() {
    let cfg = EnvConfig::with_task(TaskVariant::PickRotatePlace);
    let a = rollout(&cfg, Ood, 17, &mut RandomController::new(0)).unwrap();
    let b = rollout(&cfg, Ood, 17, &mut RandomController::new(99)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn cpd_recovers_expert_boundaries() {
    for task in TASKS {
        let cfg = EnvConfig::with_task(task);
        let hits = (0..200)
            .filter(|&seed| {
                let t = expert_trajectory(&cfg, Id, seed).unwrap();
                let r = segment_dp(&t, &SegParams::default()).unwrap();
                boundaries_recovered(&r.change_indices, &t.meta.boundaries, 2)
            })
            .count();
        assert!(hits >= 190, "{task:?}: {hits}/200");
    }
}

#[test]
fn identity_intervention_keeps_the_baseline() {
    let cfg = EnvConfig::default();
    let data = gen_demos(&cfg, 2, 3, Id).unwrap();
    let pc = gap_core::policy::PolicyConfig {
        arch: gap_core::policy::Architecture::VisionOnly,
        vision_hidden: 8,
        vision_features: 4,
        head_hidden: 8,
        ..Default::default()
    };
    let tc = gap_core::policy::TrainConfig { mode: gap_core::policy::TrainMode::Vision, epochs: 2, gap_epochs: 0, ..Default::default() };
    let policy = gap_core::policy::bc_train(&data, &pc, &tc, None).unwrap().policy;
    let params = InterventionParams { n_rollouts: 5, stride: 20, ..Default::default() };
    let r = intervention_experiment(&mut PolicyController { policy: &policy }, &mut PolicyController { policy: &policy }, &cfg, &params)
        .unwrap();
    assert!(r.windows.iter().all(|w| w.success_rate == r.baseline_rate));
    assert_eq!((r.transition_drop, r.consistent_drop), (0.0, 0.0));
    let ex = intervention_experiment(&mut ExpertController, &mut RandomController::new(0), &cfg, &params).unwrap();
    assert_eq!(ex.baseline_rate, 1.0);
    let last = ex.windows.last().unwrap();
    assert!(last.start >= 60 && last.success_rate == 1.0, "window past the episode end changed the outcome");
}
