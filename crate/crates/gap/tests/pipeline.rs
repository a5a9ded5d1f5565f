use std::path::Path;

use gap::config::RunConfig;
use gap::error::{GapError, EXIT_TRAINING};
use gap::formats::{from_jsonl, EpisodeRecord};
use gap::pipeline::{plan, run_pipeline, sweep, RunOptions};
use gap::report::{build_report, sample_std, REPORT_FILE};

fn tiny(out: &Path, cache: &Path, extra: &[&str]) -> RunConfig {
    let text = format!(
        r#"
seeds = [0, 1]
[paths]
out_dir = "{}"
cache_dir = "{}"
[demos]
count = 6
[indicator]
epochs = 4
hidden_dim = 6
auc_trajectories = 4
[policy]
vision_hidden = 6
vision_features = 4
proprio_hidden = 4
proprio_features = 2
head_hidden = 6
[train]
epochs = 3
gap_epochs = 2
batch_size = 16
[eval]
id_rollouts = 4
ood_rollouts = 4
intervention_rollouts = 2
probe_epochs = 2
probe_rollouts = 3
"#,
        out.display(),
        cache.display()
    );
    let overrides: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
    RunConfig::from_toml_str(&text, &overrides).unwrap()
}

fn quiet() -> RunOptions {
    RunOptions { verbose: false }
}

#[test]
fn plan_lists_every_stage_without_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(&dir.path().join("out"), &dir.path().join("cache"), &[]);
    let stages = plan(&cfg).unwrap();
    // Per seed: demos, segment, indicator, auc, 6 x (train + 2 evals), 2 interventions, 2 probes.
    assert_eq!(stages.len(), 2 * (4 + 18 + 2 + 2) + 1);
    assert_eq!(stages.last().unwrap().stage, "report");
    assert!(!dir.path().join("out").exists() && !dir.path().join("cache").exists());
}

#[test]
fn rerun_is_all_cache_hits_with_identical_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(&dir.path().join("out"), &dir.path().join("cache"), &[]);
    let first = run_pipeline(&cfg, quiet()).unwrap();
    assert_eq!(first.cache_hits, 0);
    assert!(first.report.missing.is_empty(), "{:?}", first.report.missing);
    let bytes = std::fs::read(first.out_dir.join(REPORT_FILE)).unwrap();
    let second = run_pipeline(&cfg, quiet()).unwrap();
    assert_eq!(second.cache_misses, 0);
    assert_eq!(second.cache_hits, first.cache_misses);
    assert_eq!(std::fs::read(second.out_dir.join(REPORT_FILE)).unwrap(), bytes);
}

#[test]
fn recomputation_from_scratch_is_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_pipeline(&tiny(&a.path().join("out"), &a.path().join("cache"), &[]), quiet()).unwrap();
    let rb = run_pipeline(&tiny(&b.path().join("o2"), &b.path().join("c2"), &[]), quiet()).unwrap();
    assert_eq!(rb.cache_hits, 0);
    assert_eq!(ra.report.to_json(), rb.report.to_json());
    for rel in ["seed-0/gap/policy.ckpt", "seed-1/indicator.ckpt", "seed-1/segments.jsonl"] {
        assert_eq!(std::fs::read(ra.out_dir.join(rel)).unwrap(), std::fs::read(rb.out_dir.join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn report_matches_episode_logs_and_lists_missing_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(&dir.path().join("out"), &dir.path().join("cache"), &[]);
    let out = run_pipeline(&cfg, quiet()).unwrap();
    for c in &out.report.success {
        let p = out.out_dir.join(format!("seed-{}/{}/eval-{}.jsonl", c.seed, c.mode, c.dist));
        let eps: Vec<EpisodeRecord> = from_jsonl(&std::fs::read_to_string(p).unwrap(), "eval").unwrap();
        let wins = eps.iter().filter(|e| e.success).count();
        assert_eq!(c.success_rate, wins as f64 / eps.len() as f64);
        assert!(eps.iter().all(|e| e.dist == c.dist));
    }
    for a in &out.report.success_summary {
        let xs: Vec<f64> = out.report.rates(&a.group, &a.split).iter().map(|r| r.1).collect();
        assert_eq!(a.n, 2);
        assert_eq!(a.std, sample_std(&xs));
    }
    std::fs::remove_file(out.out_dir.join("seed-1/gap/eval-ood.jsonl")).unwrap();
    let partial = build_report(&out.out_dir).unwrap();
    assert_eq!(partial.missing, vec!["seed-1/gap/eval-ood.jsonl".to_string()]);
    assert_eq!(partial.rates("gap", "ood").len(), 1);
    assert_eq!(partial.rates("gap", "id").len(), 2);
}

#[test]
fn sample_std_uses_n_minus_one() {
    assert_eq!(sample_std(&[0.5]), None);
    let s = sample_std(&[0.2, 0.4, 0.9]).unwrap();
    let m = 0.5;
    let expect = (((0.2f64 - m).powi(2) + (0.4f64 - m).powi(2) + (0.9f64 - m).powi(2)) / 2.0).sqrt();
    assert!((s - expect).abs() < 1e-15);
}

#[test]
fn single_cell_directory_gives_one_row_per_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(&dir.path().join("out"), &dir.path().join("cache"), &["seeds=[4]", "train.modes=[\"vision\"]"]);
    let out = run_pipeline(&cfg, quiet()).unwrap();
    let table = std::fs::read_to_string(out.out_dir.join("tables/success.tsv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("-\tvision\tid\t1\t") && rows[0].ends_with("\t-"), "{}", rows[0]);
    assert!(out.report.interventions.is_empty() && out.report.probes.is_empty());
}

#[test]
fn stage_failure_reports_stage_seed_and_reproduction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(&dir.path().join("out"), &dir.path().join("cache"), &["seeds=[3]", "train.lr=1e30", "train.modes=[\"concat\"]"]);
    let err = run_pipeline(&cfg, quiet()).unwrap_err();
    match &err {
        GapError::Stage { stage, seed, repro, .. } => {
            assert_eq!(stage, "train-policy concat");
            assert_eq!(*seed, 3);
            assert!(repro.contains("gap run --config") && repro.contains("seeds=[3]"), "{repro}");
        }
        other => panic!("expected a stage error, got {other:?}"),
    }
    assert_eq!(err.exit_code(), EXIT_TRAINING);
}

#[test]
fn sweep_validates_and_shares_unaffected_stages() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let cfg = tiny(&dir.path().join("out"), &cache, &["seeds=[0]", "train.modes=[\"vision\", \"gap\"]", "eval.intervention_rollouts=0", "eval.probe_epochs=0"]);
    assert!(matches!(sweep(&cfg, "lambda", &[], quiet()), Err(GapError::Config(_))));
    assert!(matches!(sweep(&cfg, "gamma", &["1".into()], quiet()), Err(GapError::Config(_))));
    assert!(sweep(&cfg, "x", &["99".into()], quiet()).is_err(), "gap_epochs beyond epochs must be rejected");

    let r = sweep(&cfg, "lambda", &["0.1".into(), "0.8".into()], quiet()).unwrap();
    assert_eq!(r.sweep_parameter.as_deref(), Some("lambda"));
    let variants: Vec<_> = r.success.iter().map(|c| c.variant.clone().unwrap()).collect();
    assert!(variants.contains(&"lambda=0.1".to_string()) && variants.contains(&"lambda=0.8".to_string()));
    let count = |stage: &str| std::fs::read_dir(cache.join(stage)).unwrap().count();
    assert_eq!(count("demos"), 1);
    assert_eq!(count("segment"), 2, "jsonl + stats of one shared segmentation");
    // vision is shared, gap differs per lambda: 3 policies, 2 files each.
    assert_eq!(count("policy"), 6);
    let lam = |v: &str| r.success.iter().filter(|c| c.variant.as_deref() == Some(v) && c.mode == "vision").map(|c| c.success_rate).collect::<Vec<_>>();
    assert_eq!(lam("lambda=0.1"), lam("lambda=0.8"));
}
