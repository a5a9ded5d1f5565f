use gap_core::indicator::*;
use gap_core::segment::inject_index_noise;
use gap_core::traj::{synthetic_trajectory, Trajectory};

fn quick() -> IndicatorHyper {
    IndicatorHyper { epochs: 60, lr: 5e-3, hidden_dim: 12, ..IndicatorHyper::default() }
}

fn two_regime(count: usize, seed: u64) -> Vec<Trajectory> {
    (0..count).map(|k| synthetic_trajectory(seed * 10_000 + k as u64, 20, 2, 0, 2).unwrap()).collect()
}

fn examples(trajs: &[Trajectory], noise: Option<u64>) -> Vec<IndicatorExample> {
    trajs
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let idx = match noise {
                Some(s) => inject_index_noise(&t.meta.boundaries, t.len(), 0.5, s * 1000 + k as u64),
                None => t.meta.boundaries.clone(),
            };
            IndicatorExample::from_trajectory(t, &idx, DEFAULT_WINDOW, DEFAULT_W_LOW).unwrap()
        })
        .collect()
}

fn held_out_auc(model: &IndicatorModel, test: &[Trajectory]) -> f64 {
    let series: Vec<IndicatorSeries> = test.iter().map(|t| predict_rho(model, t).unwrap()).collect();
    transition_auc(series.iter().zip(test).map(|(s, t)| (s.rho.as_slice(), t.meta.boundaries.as_slice())), DEFAULT_WINDOW)
        .unwrap()
}

#[test]
fn two_regime_transitions_are_detected() {
    let trajs = two_regime(200, 1);
    let (train, test) = trajs.split_at(150);
    let model = train_indicator(&examples(train, None), &quick()).unwrap();
    let clean = held_out_auc(&model, test);
    assert!(clean >= 0.9, "clean AUC {clean}");
    let noisy = train_indicator(&examples(train, Some(1)), &quick()).unwrap();
    let shifted = held_out_auc(&noisy, test);
    assert!(clean - shifted < 0.1, "clean {clean} vs noisy {shifted}");
}

#[test]
fn all_negative_labels_give_low_rho() {
    let trajs = two_regime(20, 2);
    let exs: Vec<IndicatorExample> =
        trajs.iter().map(|t| IndicatorExample::from_trajectory(t, &[], DEFAULT_WINDOW, DEFAULT_W_LOW).unwrap()).collect();
    let model = train_indicator(&exs, &IndicatorHyper { epochs: 300, lr: 1e-2, ..quick() }).unwrap();
    for t in &trajs {
        assert!(predict_rho(&model, t).unwrap().rho.iter().all(|&r| r < 0.1));
    }
}

#[test]
fn training_and_prediction_are_reproducible() {
    let trajs = two_regime(10, 3);
    let h = IndicatorHyper { epochs: 5, ..quick() };
    let a = train_indicator(&examples(&trajs, None), &h).unwrap();
    let b = train_indicator(&examples(&trajs, None), &h).unwrap();
    assert_eq!(a.group, b.group);
    assert_eq!(a.loss_curve, b.loss_curve);
    let r1 = predict_rho(&a, &trajs[0]).unwrap();
    let r2 = predict_rho(&a, &trajs[0].clone()).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(r1.rho.len(), trajs[0].len());
    assert_eq!(r1.rho[0], r1.rho[1]);
    assert!(r1.rho.iter().all(|&r| r > 0.0 && r < 1.0));
    assert_eq!(r1.source, RhoSource::Learned);
}

#[test]
fn mismatched_delta_width_rejected() {
    let model = IndicatorModel::new(5, 4, 0);
    let t = synthetic_trajectory(1, 10, 2, 0, 1).unwrap();
    assert!(predict_rho(&model, &t).is_err());
}

#[test]
fn smooth_rho_is_symmetric_and_decaying() {
    let s = smooth_rho(&[20, 60], 80, 3.0).unwrap();
    for d in 0..18 {
        assert_eq!(s.rho[20 + d], s.rho[20 - d]);
        assert!(s.rho[20 + d + 1] <= s.rho[20 + d]);
    }
    assert_eq!(s.rho[60], 1.0);
    assert!(smooth_rho(&[], 5, 1.0).unwrap().rho.iter().all(|&r| r == 0.0));
    assert!(smooth_rho(&[2], 5, 0.0).is_err());
}
