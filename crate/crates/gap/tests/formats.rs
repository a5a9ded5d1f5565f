use gap::checkpoint::{
    indicator_checkpoint, indicator_from_checkpoint, load_checkpoint, policy_checkpoint, policy_from_checkpoint,
    save_checkpoint, Checkpoint, NamedNormalizer,
};
use gap::dataset_io::{dataset_from_str, dataset_to_string, load_dataset, save_dataset};
use gap::error::{GapError, EXIT_FORMAT};
use gap::formats::{from_jsonl, to_jsonl, SegmentRecord};
use gap_core::indicator::{predict_rho, IndicatorModel};
use gap_core::nnkit::{GroupTag, Normalizer, ParamGroup, Tensor};
use gap_core::policy::{Architecture, PolicyConfig, VPPolicy};
use gap_core::rng::{derive_seed, SeededRng};
use gap_core::sim::{gen_demos, EnvConfig, TaskVariant};
use gap_core::traj::{Dataset, Distribution, ProprioState, Schema, TrajMeta, Trajectory};

/// Values spanning many magnitudes, including subnormal-adjacent and negative zero.
fn wild(rng: &mut SeededRng) -> f64 {
    match rng.below(6) {
        0 => rng.normal(),
        1 => rng.normal() * 1e-300,
        2 => rng.normal() * 1e300,
        3 => -0.0,
        4 => rng.uniform() / 3.0,
        _ => (rng.below(1000) as f64) * 0.1,
    }
}

fn random_dataset(seed: u64, n_traj: usize) -> Dataset {
    let mut rng = SeededRng::new(seed);
    let schema = Schema { d_p: 1 + rng.below(3), d_theta: rng.below(2) * 3, action_dim: 1 + rng.below(4), obs_dim: 1 + rng.below(5) };
    let trajs = (0..n_traj)
        .map(|k| {
            let n = 2 + rng.below(6);
            let mut states = Vec::new();
            let mut actions = Vec::new();
            let mut obs = Vec::new();
            for _ in 0..n {
                let p = (0..schema.d_p).map(|_| wild(&mut rng)).collect();
                let th = (0..schema.d_theta).map(|_| wild(&mut rng)).collect();
                states.push(ProprioState::new(p, th, rng.uniform()).unwrap());
                actions.push((0..schema.action_dim).map(|_| wild(&mut rng)).collect());
                obs.push((0..schema.obs_dim).map(|_| wild(&mut rng)).collect());
            }
            let meta = TrajMeta {
                seed: derive_seed(seed, k as u64),
                task: "random \"quoted\" task".into(),
                dist: if rng.bernoulli(0.5) { Distribution::InDistribution } else { Distribution::OutOfDistribution },
                boundaries: (0..rng.below(3)).map(|_| rng.below(n)).collect(),
            };
            Trajectory::new(states, actions, obs, meta).unwrap()
        })
        .collect();
    Dataset::new(schema, trajs).unwrap()
}

fn bits(ds: &Dataset) -> Vec<u64> {
    let mut out = Vec::new();
    for t in &ds.trajectories {
        for s in t.states() {
            out.extend(s.p.iter().chain(&s.theta).map(|x| x.to_bits()));
            out.push(s.g.to_bits());
        }
        for row in t.actions().iter().chain(t.obs()) {
            out.extend(row.iter().map(|x| x.to_bits()));
        }
    }
    out
}

#[test]
fn empty_dataset_is_header_only() {
    let ds = Dataset::new(Schema { d_p: 2, d_theta: 0, action_dim: 3, obs_dim: 4 }, vec![]).unwrap();
    let text = dataset_to_string(&ds);
    assert_eq!(text.lines().count(), 1);
    assert_eq!(dataset_from_str(&text, "mem").unwrap(), ds);
}

#[test]
fn three_state_trajectory_gives_three_records() {
    let traj = gap_core::traj::synthetic_trajectory(4, 3, 2, 0, 1).unwrap();
    let ds = Dataset::new(traj.schema(), vec![traj]).unwrap();
    let text = dataset_to_string(&ds);
    assert_eq!(text.lines().count(), 4);
    assert!(!text.contains("\"theta\""), "theta must be omitted without orientation");
    assert_eq!(dataset_from_str(&text, "mem").unwrap(), ds);
}

#[test]
fn random_datasets_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..100 {
        let ds = random_dataset(seed, 1 + (seed as usize % 4));
        let path = dir.path().join(format!("d{seed}.jsonl"));
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(bits(&back), bits(&ds), "seed {seed}");
        assert_eq!(back.schema, ds.schema);
        let meta: Vec<_> = back.trajectories.iter().map(|t| t.meta.clone()).collect();
        assert_eq!(meta, ds.trajectories.iter().map(|t| t.meta.clone()).collect::<Vec<_>>());
        let first = std::fs::read(&path).unwrap();
        save_dataset(&back, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first, "seed {seed}: file bytes changed");
    }
}

#[test]
fn simulator_demos_round_trip() {
    for task in [TaskVariant::PickPlace, TaskVariant::PickRotatePlace] {
        let ds = gen_demos(&EnvConfig::with_task(task), 3, 5, Distribution::OutOfDistribution).unwrap();
        let text = dataset_to_string(&ds);
        let back = dataset_from_str(&text, "mem").unwrap();
        assert_eq!(back, ds);
        assert_eq!(dataset_to_string(&back), text);
    }
}

fn format_error_line(text: &str) -> String {
    match dataset_from_str(text, "demo.jsonl") {
        Err(e @ GapError::Format { .. }) => {
            assert_eq!(e.exit_code(), EXIT_FORMAT);
            e.to_string()
        }
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn malformed_files_name_the_line() {
    let ds = random_dataset(3, 2);
    let good = dataset_to_string(&ds);
    let lines: Vec<&str> = good.lines().collect();

    let mut broken = lines.clone();
    broken[2] = "{not json";
    assert!(format_error_line(&broken.join("\n")).contains("line 3"));

    let wrong_version = good.replacen("\"version\":1", "\"version\":2", 1);
    assert!(format_error_line(&wrong_version).contains("line 1"));

    // Schema mismatch: drop one p coordinate from record 2.
    let mut rec: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
    rec["p"].as_array_mut().unwrap().pop();
    let s = rec.to_string();
    let mut broken = lines.clone();
    broken[1] = &s;
    assert!(format_error_line(&broken.join("\n")).contains("line 2"));

    // Out-of-order timestep.
    let mut broken = lines.clone();
    broken.swap(2, 3);
    assert!(format_error_line(&broken.join("\n")).contains("line 3"));

    assert!(format_error_line("").contains("line 1"));
}

#[test]
fn segment_records_round_trip() {
    let params = gap::config::SegmentSection::default();
    let r = gap_core::segment::SegmentationResult { change_indices: vec![3, 9], phase_costs: vec![0.1, 0.2, 0.3], total_cost: -1.25 };
    let recs = vec![SegmentRecord::new(0, &r, &params), SegmentRecord::new(1, &r, &params)];
    let text = to_jsonl(&recs);
    assert_eq!(from_jsonl::<SegmentRecord>(&text, "seg").unwrap(), recs);
    assert!(text.lines().next().unwrap().contains("\"params_echo\""));
}

fn random_group(rng: &mut SeededRng, name: &str, tag: GroupTag) -> ParamGroup {
    let mut g = ParamGroup::new(name, tag);
    for k in 0..1 + rng.below(3) {
        let shape: Vec<usize> = (0..1 + rng.below(2)).map(|_| 1 + rng.below(4)).collect();
        let n = shape.iter().product();
        g.push(&format!("t{k}"), Tensor::from_vec(&shape, (0..n).map(|_| wild(rng)).collect()).unwrap());
    }
    g
}

#[test]
fn empty_checkpoint_round_trips() {
    let ck = Checkpoint { groups: vec![], normalizers: vec![], config: serde_json::Value::Null };
    let bytes = ck.to_bytes();
    assert_eq!(Checkpoint::from_bytes(&bytes, "mem").unwrap(), ck);
}

#[test]
fn random_checkpoints_reload_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let tags = [GroupTag::Vision, GroupTag::Proprio, GroupTag::Head, GroupTag::Indicator];
    for seed in 0..30 {
        let mut rng = SeededRng::new(seed);
        let mut groups = Vec::new();
        for i in 0..rng.below(4) {
            let tag = tags[rng.below(4)];
            groups.push(random_group(&mut rng, &format!("g{i}"), tag));
        }
        let dim = rng.below(4);
        let normalizers = vec![NamedNormalizer {
            name: "n".into(),
            normalizer: Normalizer { mean: (0..dim).map(|_| wild(&mut rng)).collect(), std: (0..dim).map(|_| wild(&mut rng)).collect() },
        }];
        let ck = Checkpoint { groups, normalizers, config: serde_json::json!({"seed": seed, "x": 0.1}) };
        let path = dir.path().join("c.ckpt");
        save_checkpoint(&ck, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.to_bytes(), ck.to_bytes(), "seed {seed}");
        assert_eq!(back.groups.iter().map(|g| g.tag).collect::<Vec<_>>(), ck.groups.iter().map(|g| g.tag).collect::<Vec<_>>());
    }
}

#[test]
fn corrupt_or_foreign_checkpoints_are_format_errors() {
    let policy = VPPolicy::new(PolicyConfig { vision_hidden: 4, vision_features: 3, head_hidden: 4, ..PolicyConfig::default() },
        Schema { d_p: 2, d_theta: 0, action_dim: 3, obs_dim: 5 }, 1).unwrap();
    let bytes = policy_checkpoint(&policy).to_bytes();
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 1;
    assert!(matches!(Checkpoint::from_bytes(&flipped, "x"), Err(GapError::Format { .. })));
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1], "x"), Err(GapError::Format { .. })));
    assert!(matches!(Checkpoint::from_bytes(b"", "x"), Err(GapError::Format { .. })));

    // A well-formed file with another version number.
    let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
    let header = String::from_utf8(bytes[..nl].to_vec()).unwrap().replacen("\"version\":1", "\"version\":9", 1);
    let mut body = header.into_bytes();
    body.extend_from_slice(&bytes[nl..bytes.len() - 32]);
    use sha2::Digest;
    let d = sha2::Sha256::digest(&body);
    body.extend_from_slice(&d);
    let err = Checkpoint::from_bytes(&body, "x").unwrap_err();
    assert!(err.to_string().contains("version"), "{err}");

    // An indicator checkpoint is not a policy.
    let ind = indicator_checkpoint(&IndicatorModel::new(3, 4, 0));
    assert!(matches!(policy_from_checkpoint(&ind, "x"), Err(GapError::Format { .. })));
}

#[test]
fn policy_checkpoint_restores_predictions() {
    let schema = Schema { d_p: 2, d_theta: 3, action_dim: 4, obs_dim: 6 };
    for arch in [Architecture::Concat, Architecture::VisionOnly] {
        let cfg = PolicyConfig { arch, vision_hidden: 5, vision_features: 3, proprio_hidden: 4, proprio_features: 2, head_hidden: 6, ..PolicyConfig::default() };
        let mut p = VPPolicy::new(cfg, schema, 7).unwrap();
        let pn = Normalizer { mean: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6], std: vec![2.0; 6] };
        let an = Normalizer { mean: vec![0.01; 4], std: vec![0.5; 4] };
        p.set_normalizers(pn, an).unwrap();
        let ck = policy_checkpoint(&p);
        let back = policy_from_checkpoint(&Checkpoint::from_bytes(&ck.to_bytes(), "m").unwrap(), "m").unwrap();
        let mut rng = SeededRng::new(2);
        let obs: Vec<f64> = (0..3 * p.vision_input_dim()).map(|_| rng.normal()).collect();
        let pr: Vec<f64> = (0..3 * p.proprio_input_dim()).map(|_| rng.normal()).collect();
        assert_eq!(p.predict(&obs, &pr, 3).unwrap(), back.predict(&obs, &pr, 3).unwrap());
        assert_eq!(policy_checkpoint(&back).to_bytes(), ck.to_bytes());
    }
}

#[test]
fn indicator_checkpoint_restores_predictions() {
    let traj = gap_core::traj::synthetic_trajectory(1, 12, 2, 0, 2).unwrap();
    let mut m = IndicatorModel::new(3, 5, 11);
    m.normalizer = Normalizer { mean: vec![0.1, -0.2, 0.0], std: vec![1.5, 0.5, 1.0] };
    let back = indicator_from_checkpoint(&Checkpoint::from_bytes(&indicator_checkpoint(&m).to_bytes(), "m").unwrap(), "m").unwrap();
    assert_eq!(predict_rho(&m, &traj).unwrap().rho, predict_rho(&back, &traj).unwrap().rho);
}
