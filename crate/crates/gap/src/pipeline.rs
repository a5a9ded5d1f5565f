//! End-to-end experiment: demos, segmentation, indicator, policies per mode,
//! evaluation, intervention and probes, for every seed; then the report.
//!
//! Each stage is cached under a key derived from its inputs, and its small
//! artifacts are copied into `<out_dir>/seed-<s>/`, which is what
//! [`crate::report::build_report`] reads back.

use std::path::{Path, PathBuf};
use std::time::Instant;

use gap_core::indicator::IndicatorModel;
use gap_core::policy::{PolicyController, TrainMode, VPPolicy};
use gap_core::sim::{evaluate, gen_demos, intervention_experiment, EnvConfig};
use gap_core::traj::{Dataset, Distribution};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cache::{digest, Cache, KeyBuilder};
use crate::checkpoint::{
    indicator_checkpoint, indicator_from_checkpoint, policy_checkpoint, policy_from_checkpoint, Checkpoint,
};
use crate::config::RunConfig;
use crate::dataset_io::{dataset_from_str, dataset_to_string};
use crate::error::{GapError, Result};
use crate::formats::{
    episode_records, from_jsonl, indicator_metrics, policy_metrics, to_jsonl, InterventionSummary, SegmentRecord,
};
use crate::fsutil::write_atomic;
use crate::report::{build_report, write_report, ExperimentReport};
use crate::stages::{
    indicator_auc, segment_dataset, segment_stats, stream_seed, streams, train_indicator_on, train_policy, train_probe,
    RhoInputs,
};

pub const CONFIG_FILE: &str = "config.toml";

/// Alternate policies swapped into vision-only rollouts.
pub const INTERVENTION_ALTS: [TrainMode; 2] = [TrainMode::Concat, TrainMode::Gap];
/// Policies whose frozen vision features get a linear probe.
pub const PROBE_SOURCES: [TrainMode; 2] = [TrainMode::Gap, TrainMode::Concat];

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedStage {
    pub seed: u64,
    pub stage: String,
}

/// Every stage the pipeline would run, in order, without touching anything.
pub fn plan(cfg: &RunConfig) -> Result<Vec<PlannedStage>> {
    cfg.validate()?;
    let modes = cfg.train.modes()?;
    let mut out = Vec::new();
    for &s in &cfg.seeds {
        let mut push = |stage: String| out.push(PlannedStage { seed: s, stage });
        push("gen-demos".into());
        push("segment".into());
        push("train-indicator".into());
        if cfg.indicator.auc_trajectories > 0 {
            push("indicator-auc".into());
        }
        for m in &modes {
            push(format!("train-policy {}", m.as_str()));
            push(format!("evaluate {} id", m.as_str()));
            push(format!("evaluate {} ood", m.as_str()));
        }
        if cfg.eval.intervention_rollouts > 0 && modes.contains(&TrainMode::Vision) {
            for alt in INTERVENTION_ALTS.iter().filter(|a| modes.contains(a)) {
                push(format!("intervene vision<-{}", alt.as_str()));
            }
        }
        if cfg.eval.probe_epochs > 0 {
            for src in PROBE_SOURCES.iter().filter(|a| modes.contains(a)) {
                push(format!("probe {}", src.as_str()));
            }
        }
    }
    out.push(PlannedStage { seed: 0, stage: "report".into() });
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Log each stage with cache status and wall-clock time to stderr.
    pub verbose: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: ExperimentReport,
    pub out_dir: PathBuf,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

#[derive(Serialize, Deserialize)]
struct AucRecord {
    auc: Option<f64>,
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    env: EnvConfig,
    cache: Cache,
    verbose: bool,
}

struct Trained {
    policy: VPPolicy,
    digest: String,
}

impl Runner<'_> {
    fn repro(&self, seed: u64, stage: &str) -> String {
        let config = self.cfg.paths.out_dir.join(CONFIG_FILE);
        let mode = stage.split_whitespace().nth(1).filter(|m| TrainMode::parse(m).is_ok());
        let mut cmd = format!("gap run --config {} --set 'seeds=[{seed}]'", config.display());
        if let Some(m) = mode {
            cmd.push_str(&format!(" --set 'train.modes=[\"{m}\"]'"));
        }
        cmd
    }

    /// Runs `f` as stage `stage` of `seed`, attributing any error to it.
    fn stage<T>(&self, seed: u64, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let (h0, m0) = self.cache.stats();
        let r = f().map_err(|e| GapError::Stage {
            stage: stage.to_string(),
            seed,
            repro: self.repro(seed, stage),
            source: Box::new(e),
        });
        if self.verbose {
            let (h1, m1) = self.cache.stats();
            let status = if m1 > m0 { "computed" } else if h1 > h0 { "cached" } else { "done" };
            eprintln!("[seed {seed}] {stage}: {status} ({:.1} s)", t0.elapsed().as_secs_f64());
        }
        r
    }

    fn write(&self, seed: u64, rel: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&seed_dir(&self.cfg.paths.out_dir, seed).join(rel), bytes)
    }

    fn demos(&self, s: u64) -> Result<(Dataset, String)> {
        let key = KeyBuilder::new("demos").json("env", &self.cfg.env).json("count", &self.cfg.demos.count).json("seed", &s).finish();
        let out = self.cache.get_or_compute("demos", &key, &["jsonl"], || {
            let ds = gen_demos(&self.env, self.cfg.demos.count, stream_seed(s, streams::DEMOS), Distribution::InDistribution)?;
            Ok(vec![dataset_to_string(&ds).into_bytes()])
        })?;
        let text = String::from_utf8(out[0].clone()).map_err(|e| GapError::format("cached demos", e.to_string()))?;
        Ok((dataset_from_str(&text, "cached demos")?, digest(&out[0])))
    }

    fn segments(&self, s: u64, ds: &Dataset, d_demos: &str) -> Result<(Vec<Vec<usize>>, String)> {
        let key = KeyBuilder::new("segment").push("demos", d_demos.as_bytes()).json("segment", &self.cfg.segment).finish();
        let out = self.cache.get_or_compute("segment", &key, &["jsonl", "stats.json"], || {
            let results = segment_dataset(ds, &self.cfg.segment.params()?)?;
            let recs: Vec<SegmentRecord> =
                results.iter().enumerate().map(|(i, r)| SegmentRecord::new(i, r, &self.cfg.segment)).collect();
            let idx: Vec<Vec<usize>> = results.iter().map(|r| r.change_indices.clone()).collect();
            let costs: Vec<f64> = results.iter().map(|r| r.total_cost).collect();
            let stats = segment_stats(ds, &idx, &costs);
            Ok(vec![to_jsonl(&recs).into_bytes(), serde_json::to_vec_pretty(&stats).expect("stats serialize")])
        })?;
        self.write(s, "segments.jsonl", &out[0])?;
        self.write(s, "segment-stats.json", &out[1])?;
        let recs: Vec<SegmentRecord> = from_jsonl(&String::from_utf8_lossy(&out[0]), "cached segments")?;
        crate::formats::check_segment_records(&recs, ds.len(), "cached segments")?;
        Ok((recs.into_iter().map(|r| r.change_indices).collect(), digest(&out[0])))
    }

    fn indicator(&self, s: u64, ds: &Dataset, seg: &[Vec<usize>], d_demos: &str, d_seg: &str) -> Result<(IndicatorModel, String)> {
        let ic = &self.cfg.indicator;
        let key = KeyBuilder::new("indicator")
            .push("demos", d_demos.as_bytes())
            .push("segments", d_seg.as_bytes())
            .json("hyper", &(ic.window, ic.w_low, ic.hidden_dim, ic.epochs, ic.lr, ic.batch_size))
            .json("seed", &s)
            .finish();
        let out = self.cache.get_or_compute("indicator", &key, &["ckpt", "metrics.jsonl"], || {
            let m = train_indicator_on(ds, seg, self.cfg, stream_seed(s, streams::INDICATOR))?;
            Ok(vec![indicator_checkpoint(&m).to_bytes(), to_jsonl(&indicator_metrics(&m)).into_bytes()])
        })?;
        self.write(s, "indicator.ckpt", &out[0])?;
        self.write(s, "indicator-metrics.jsonl", &out[1])?;
        let m = indicator_from_checkpoint(&Checkpoint::from_bytes(&out[0], "cached indicator")?, "cached indicator")?;
        Ok((m, digest(&out[0])))
    }

    fn auc(&self, s: u64, model: &IndicatorModel, d_ind: &str) -> Result<()> {
        let ic = &self.cfg.indicator;
        let key = KeyBuilder::new("indicator-auc")
            .push("indicator", d_ind.as_bytes())
            .json("env", &self.cfg.env)
            .json("n", &(ic.auc_trajectories, ic.window))
            .json("seed", &s)
            .finish();
        let out = self.cache.get_or_compute("indicator-auc", &key, &["json"], || {
            let auc = indicator_auc(model, &self.env, ic.auc_trajectories, stream_seed(s, streams::AUC), ic.window)?;
            Ok(vec![serde_json::to_vec_pretty(&AucRecord { auc }).expect("serializes")])
        })?;
        self.write(s, "indicator-auc.json", &out[0])
    }

    /// Configuration that can change a mode's trained parameters.
    fn policy_key_config(&self, mode: TrainMode) -> serde_json::Value {
        let t = &self.cfg.train;
        let mut v = json!({
            "policy": self.cfg.policy,
            "epochs": t.epochs,
            "batch_size": t.batch_size,
            "lr": t.lr,
            "optimizer": t.optimizer,
        });
        if mode == TrainMode::Mask {
            v["mask_prob"] = json!(t.mask_prob);
        }
        if mode.uses_rho() {
            v["gap_epochs"] = json!(t.gap_epochs);
            v["lambda"] = json!(t.lambda);
            v["adjust_rule"] = json!(t.adjust_rule);
            v["per_sample"] = json!(t.per_sample);
            v["scale_head_proprio"] = json!(t.scale_head_proprio);
        }
        match mode {
            TrainMode::Fixed => v["rho_fixed"] = json!(t.rho_fixed),
            TrainMode::Smooth => v["smooth_sigma"] = json!(t.smooth_sigma),
            _ => {}
        }
        v
    }

    #[allow(clippy::too_many_arguments)]
    fn policy(
        &self,
        s: u64,
        mode: TrainMode,
        ds: &Dataset,
        inputs: &RhoInputs,
        d_demos: &str,
        d_seg: &str,
        d_ind: &str,
    ) -> Result<Trained> {
        let mut kb = KeyBuilder::new("policy");
        kb.push("mode", mode.as_str().as_bytes()).push("demos", d_demos.as_bytes());
        match mode {
            TrainMode::Gap => {
                kb.push("indicator", d_ind.as_bytes());
            }
            TrainMode::Smooth => {
                kb.push("segments", d_seg.as_bytes());
            }
            _ => {}
        }
        let key = kb.json("config", &self.policy_key_config(mode)).json("seed", &s).finish();
        let out = self.cache.get_or_compute("policy", &key, &["ckpt", "metrics.jsonl"], || {
            let o = train_policy(ds, mode, self.cfg, stream_seed(s, streams::POLICY), inputs)?;
            Ok(vec![policy_checkpoint(&o.policy).to_bytes(), to_jsonl(&policy_metrics(&o.curve)).into_bytes()])
        })?;
        self.write(s, &format!("{}/policy.ckpt", mode.as_str()), &out[0])?;
        self.write(s, &format!("{}/metrics.jsonl", mode.as_str()), &out[1])?;
        let src = format!("cached {} policy", mode.as_str());
        let policy = policy_from_checkpoint(&Checkpoint::from_bytes(&out[0], &src)?, &src)?;
        Ok(Trained { policy, digest: digest(&out[0]) })
    }

    fn evaluate(&self, s: u64, t: &Trained, dist: Distribution, n: usize, rel: &str) -> Result<()> {
        let key = KeyBuilder::new("evaluate")
            .push("policy", t.digest.as_bytes())
            .json("env", &self.cfg.env)
            .json("run", &(dist.as_str(), n, s))
            .finish();
        let out = self.cache.get_or_compute("evaluate", &key, &["jsonl"], || {
            let mut ctrl = PolicyController { policy: &t.policy };
            let r = evaluate(&mut ctrl, &self.env, n, dist, stream_seed(s, streams::EVAL))?;
            Ok(vec![to_jsonl(&episode_records(&r)).into_bytes()])
        })?;
        self.write(s, rel, &out[0])
    }

    fn intervene(&self, s: u64, base: &Trained, alt: &Trained, alt_mode: TrainMode) -> Result<()> {
        let e = &self.cfg.eval;
        let key = KeyBuilder::new("intervene")
            .push("base", base.digest.as_bytes())
            .push("alt", alt.digest.as_bytes())
            .json("env", &self.cfg.env)
            .json("params", &(e.intervention_rollouts, e.window_width, e.stride, &e.intervention_dist, s))
            .finish();
        let out = self.cache.get_or_compute("intervene", &key, &["json"], || {
            let params = e.intervention(stream_seed(s, streams::INTERVENTION))?;
            let mut b = PolicyController { policy: &base.policy };
            let mut a = PolicyController { policy: &alt.policy };
            let r = intervention_experiment(&mut b, &mut a, &self.env, &params)?;
            Ok(vec![serde_json::to_vec_pretty(&InterventionSummary::from(&r)).expect("serializes")])
        })?;
        self.write(s, &format!("intervention-{}.json", alt_mode.as_str()), &out[0])
    }

    fn probe(&self, s: u64, src_mode: TrainMode, src: &Trained, ds: &Dataset, d_demos: &str) -> Result<()> {
        let t = &self.cfg.train;
        let key = KeyBuilder::new("probe")
            .push("source", src.digest.as_bytes())
            .push("demos", d_demos.as_bytes())
            .json("config", &(self.cfg.eval.probe_epochs, t.batch_size, t.lr, &t.optimizer, s))
            .finish();
        let out = self.cache.get_or_compute("probe", &key, &["ckpt", "metrics.jsonl"], || {
            let o = train_probe(&src.policy, ds, self.cfg, stream_seed(s, streams::PROBE))?;
            Ok(vec![policy_checkpoint(&o.policy).to_bytes(), to_jsonl(&policy_metrics(&o.curve)).into_bytes()])
        })?;
        let dir = format!("probe-{}", src_mode.as_str());
        self.write(s, &format!("{dir}/metrics.jsonl"), &out[1])?;
        let policy = policy_from_checkpoint(&Checkpoint::from_bytes(&out[0], "cached probe")?, "cached probe")?;
        let probe = Trained { policy, digest: digest(&out[0]) };
        self.evaluate(s, &probe, Distribution::OutOfDistribution, self.cfg.eval.probe_rollouts, &format!("{dir}/eval-ood.jsonl"))
    }

    fn run_seed(&self, s: u64, modes: &[TrainMode]) -> Result<()> {
        let (ds, d_demos) = self.stage(s, "gen-demos", || self.demos(s))?;
        let (seg, d_seg) = self.stage(s, "segment", || self.segments(s, &ds, &d_demos))?;
        let (ind, d_ind) = self.stage(s, "train-indicator", || self.indicator(s, &ds, &seg, &d_demos, &d_seg))?;
        if self.cfg.indicator.auc_trajectories > 0 {
            self.stage(s, "indicator-auc", || self.auc(s, &ind, &d_ind))?;
        }
        let inputs = RhoInputs {
            indicator: Some(&ind),
            segments: Some(&seg),
            rho_fixed: self.cfg.train.rho_fixed,
            smooth_sigma: self.cfg.train.smooth_sigma,
        };
        let mut trained: Vec<(TrainMode, Trained)> = Vec::new();
        for &m in modes {
            let name = m.as_str();
            let t = self.stage(s, &format!("train-policy {name}"), || self.policy(s, m, &ds, &inputs, &d_demos, &d_seg, &d_ind))?;
            let e = &self.cfg.eval;
            self.stage(s, &format!("evaluate {name} id"), || {
                self.evaluate(s, &t, Distribution::InDistribution, e.id_rollouts, &format!("{name}/eval-id.jsonl"))
            })?;
            self.stage(s, &format!("evaluate {name} ood"), || {
                self.evaluate(s, &t, Distribution::OutOfDistribution, e.ood_rollouts, &format!("{name}/eval-ood.jsonl"))
            })?;
            trained.push((m, t));
        }
        let find = |m: TrainMode| trained.iter().find(|(k, _)| *k == m).map(|(_, t)| t);
        if self.cfg.eval.intervention_rollouts > 0 {
            if let Some(base) = find(TrainMode::Vision) {
                for alt_mode in INTERVENTION_ALTS {
                    if let Some(alt) = find(alt_mode) {
                        let stage = format!("intervene vision<-{}", alt_mode.as_str());
                        self.stage(s, &stage, || self.intervene(s, base, alt, alt_mode))?;
                    }
                }
            }
        }
        if self.cfg.eval.probe_epochs > 0 {
            for src_mode in PROBE_SOURCES {
                if let Some(src) = find(src_mode) {
                    self.stage(s, &format!("probe {}", src_mode.as_str()), || self.probe(s, src_mode, src, &ds, &d_demos))?;
                }
            }
        }
        Ok(())
    }
}

/// Runs every stage for every seed and writes the report into `paths.out_dir`.
/// Relative paths resolve against the current directory before anything runs.
pub fn run_pipeline(cfg: &RunConfig, opts: RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    let cwd = std::env::current_dir().map_err(|e| GapError::io(".", e))?;
    cfg.resolve_paths(&cwd);
    let modes = cfg.train.modes()?;
    let out_dir = cfg.paths.out_dir.clone();
    write_atomic(&out_dir.join(CONFIG_FILE), cfg.to_toml_string().as_bytes())?;
    let runner = Runner { env: cfg.env.config()?, cache: Cache::new(cfg.cache_root()), cfg: &cfg, verbose: opts.verbose };
    for &s in &cfg.seeds {
        runner.run_seed(s, &modes)?;
    }
    let report = build_report(&out_dir)?;
    write_report(&report, &out_dir)?;
    let (cache_hits, cache_misses) = runner.cache.stats();
    Ok(RunOutcome { report, out_dir, cache_hits, cache_misses })
}

/// Parameters a sweep may vary, with the config key each one sets.
pub const SWEEP_PARAMETERS: [(&str, &str); 6] = [
    ("alpha", "segment.alpha"),
    ("beta", "segment.beta"),
    ("lambda", "train.lambda"),
    ("x", "train.gap_epochs"),
    ("mask_prob", "train.mask_prob"),
    ("rho_fixed", "train.rho_fixed"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub parameter: String,
    pub values: Vec<String>,
    /// Sub-directory of each value, relative to the sweep directory.
    pub dirs: Vec<String>,
}

pub const SWEEP_FILE: &str = "sweep.json";

/// One pipeline run per value under `<out_dir>/<parameter>=<value>/`, all
/// sharing one cache so unaffected stages are reused.
pub fn sweep(cfg: &RunConfig, parameter: &str, values: &[String], opts: RunOptions) -> Result<ExperimentReport> {
    let key = SWEEP_PARAMETERS
        .iter()
        .find(|(p, _)| *p == parameter)
        .map(|(_, k)| *k)
        .ok_or_else(|| GapError::Config(format!("unknown sweep parameter `{parameter}`")))?;
    if values.is_empty() {
        return Err(GapError::Config("sweep needs at least one value".into()));
    }
    let mut base = cfg.clone();
    let cwd = std::env::current_dir().map_err(|e| GapError::io(".", e))?;
    base.resolve_paths(&cwd);
    let text = base.to_toml_string();
    // Validate every value before running anything.
    let variants = values
        .iter()
        .map(|v| {
            let mut c = RunConfig::from_toml_str(&text, &[format!("{key}={v}")])?;
            let dir = format!("{parameter}={v}");
            c.paths.out_dir = base.paths.out_dir.join(&dir);
            c.paths.cache_dir = base.paths.cache_dir.clone();
            Ok((c, dir))
        })
        .collect::<Result<Vec<_>>>()?;
    for (c, _) in &variants {
        run_pipeline(c, opts)?;
    }
    let manifest = SweepManifest {
        parameter: parameter.into(),
        values: values.to_vec(),
        dirs: variants.iter().map(|(_, d)| d.clone()).collect(),
    };
    write_atomic(&base.paths.out_dir.join(SWEEP_FILE), &serde_json::to_vec_pretty(&manifest).expect("serializes"))?;
    let report = build_report(&base.paths.out_dir)?;
    write_report(&report, &base.paths.out_dir)?;
    Ok(report)
}
