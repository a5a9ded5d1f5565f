//! Experiment report: collected from the per-seed artifacts of a run
//! directory, so every number is recomputed from raw logs.

use std::fmt::Write as _;
use std::path::Path;

use gap_core::policy::TrainMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{GapError, Result};
use crate::formats::{from_jsonl, success_rate, EpisodeRecord, IndicatorMetric, InterventionSummary, PolicyMetric};
use crate::fsutil::write_atomic;
use crate::pipeline::{seed_dir, SweepManifest, CONFIG_FILE, INTERVENTION_ALTS, PROBE_SOURCES, SWEEP_FILE};
use crate::stages::SegmentStats;

pub const REPORT_FILE: &str = "report.json";
pub const DISTS: [&str; 2] = ["id", "ood"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessCell {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub mode: String,
    pub seed: u64,
    pub dist: String,
    pub success_rate: f64,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub mode: String,
    pub seed: u64,
    pub train_loss: Vec<f64>,
    pub rho_mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorCell {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub seed: u64,
    pub auc: Option<f64>,
    pub loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationCell {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub seed: u64,
    pub stats: SegmentStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionCell {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub seed: u64,
    pub base: String,
    pub alt: String,
    pub result: InterventionSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCell {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub seed: u64,
    pub source: String,
    pub dist: String,
    pub success_rate: f64,
    pub episodes: usize,
}

/// Mean and sample standard deviation (n - 1) of one group of cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    /// Mode, probe source or intervention alternate.
    pub group: String,
    /// Distribution or intervention window kind.
    pub split: String,
    pub n: usize,
    pub mean: f64,
    /// `None` for fewer than two seeds.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub code_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_parameter: Option<String>,
    pub seeds: Vec<u64>,
    pub modes: Vec<String>,
    pub success: Vec<SuccessCell>,
    pub loss_curves: Vec<LossCurve>,
    pub indicator: Vec<IndicatorCell>,
    pub segmentation: Vec<SegmentationCell>,
    pub interventions: Vec<InterventionCell>,
    pub probes: Vec<ProbeCell>,
    pub success_summary: Vec<Aggregate>,
    pub intervention_summary: Vec<Aggregate>,
    pub probe_summary: Vec<Aggregate>,
    /// Expected artifacts that were not found.
    pub missing: Vec<String>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Success rates of `mode` on `dist`, one per seed in seed order.
    pub fn rates(&self, mode: &str, dist: &str) -> Vec<(u64, f64)> {
        self.success.iter().filter(|c| c.mode == mode && c.dist == dist).map(|c| (c.seed, c.success_rate)).collect()
    }

    pub fn mean_rate(&self, mode: &str, dist: &str) -> Option<f64> {
        mean(&self.rates(mode, dist).iter().map(|r| r.1).collect::<Vec<_>>())
    }
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation; `None` below two values.
pub fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    Some((xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

fn aggregate(variant: &Option<String>, group: &str, split: &str, xs: &[f64]) -> Option<Aggregate> {
    Some(Aggregate {
        variant: variant.clone(),
        group: group.into(),
        split: split.into(),
        n: xs.len(),
        mean: mean(xs)?,
        std: sample_std(xs),
    })
}

fn read_opt(path: &Path) -> Result<Option<String>> {
    match std::fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(GapError::io(path, e)),
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| GapError::format(path.display().to_string(), e.to_string()))
}

fn single_report(dir: &Path, variant: Option<String>) -> Result<ExperimentReport> {
    let cfg_path = dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&cfg_path).map_err(|e| GapError::io(&cfg_path, e))?;
    let cfg = RunConfig::from_toml_str(&text, &[])?;
    let modes = cfg.train.modes()?;
    let mut r = ExperimentReport {
        config_hash: cfg.experiment_hash(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        sweep_parameter: None,
        seeds: cfg.seeds.clone(),
        modes: modes.iter().map(|m| m.as_str().to_string()).collect(),
        success: Vec::new(),
        loss_curves: Vec::new(),
        indicator: Vec::new(),
        segmentation: Vec::new(),
        interventions: Vec::new(),
        probes: Vec::new(),
        success_summary: Vec::new(),
        intervention_summary: Vec::new(),
        probe_summary: Vec::new(),
        missing: Vec::new(),
    };
    let label = |rel: &str, s: u64| match &variant {
        Some(v) => format!("{v}/seed-{s}/{rel}"),
        None => format!("seed-{s}/{rel}"),
    };
    for &s in &cfg.seeds {
        let sd = seed_dir(dir, s);
        let p = sd.join("segment-stats.json");
        match read_opt(&p)? {
            Some(t) => r.segmentation.push(SegmentationCell { variant: variant.clone(), seed: s, stats: parse_json(&t, &p)? }),
            None => r.missing.push(label("segment-stats.json", s)),
        }
        let p = sd.join("indicator-metrics.jsonl");
        match read_opt(&p)? {
            Some(t) => {
                let loss = from_jsonl::<IndicatorMetric>(&t, &p.display().to_string())?.into_iter().map(|m| m.loss).collect();
                let auc_path = sd.join("indicator-auc.json");
                let auc = match read_opt(&auc_path)? {
                    Some(a) => parse_json::<serde_json::Value>(&a, &auc_path)?["auc"].as_f64(),
                    None => {
                        if cfg.indicator.auc_trajectories > 0 {
                            r.missing.push(label("indicator-auc.json", s));
                        }
                        None
                    }
                };
                r.indicator.push(IndicatorCell { variant: variant.clone(), seed: s, auc, loss });
            }
            None => r.missing.push(label("indicator-metrics.jsonl", s)),
        }
        for m in &modes {
            let name = m.as_str();
            let p = sd.join(name).join("metrics.jsonl");
            match read_opt(&p)? {
                Some(t) => {
                    let rows = from_jsonl::<PolicyMetric>(&t, &p.display().to_string())?;
                    r.loss_curves.push(LossCurve {
                        variant: variant.clone(),
                        mode: name.into(),
                        seed: s,
                        train_loss: rows.iter().map(|x| x.train_loss).collect(),
                        rho_mean: rows.iter().map(|x| x.rho_mean).collect(),
                    });
                }
                None => r.missing.push(label(&format!("{name}/metrics.jsonl"), s)),
            }
            for dist in DISTS {
                let rel = format!("{name}/eval-{dist}.jsonl");
                let p = sd.join(&rel);
                match read_opt(&p)? {
                    Some(t) => {
                        let eps = from_jsonl::<EpisodeRecord>(&t, &p.display().to_string())?;
                        r.success.push(SuccessCell {
                            variant: variant.clone(),
                            mode: name.into(),
                            seed: s,
                            dist: dist.into(),
                            success_rate: success_rate(&eps),
                            episodes: eps.len(),
                        });
                    }
                    None => r.missing.push(label(&rel, s)),
                }
            }
        }
        if cfg.eval.intervention_rollouts > 0 && modes.contains(&TrainMode::Vision) {
            for alt in INTERVENTION_ALTS.iter().filter(|a| modes.contains(a)) {
                let rel = format!("intervention-{}.json", alt.as_str());
                let p = sd.join(&rel);
                match read_opt(&p)? {
                    Some(t) => r.interventions.push(InterventionCell {
                        variant: variant.clone(),
                        seed: s,
                        base: TrainMode::Vision.as_str().into(),
                        alt: alt.as_str().into(),
                        result: parse_json(&t, &p)?,
                    }),
                    None => r.missing.push(label(&rel, s)),
                }
            }
        }
        if cfg.eval.probe_epochs > 0 {
            for src in PROBE_SOURCES.iter().filter(|a| modes.contains(a)) {
                let rel = format!("probe-{}/eval-ood.jsonl", src.as_str());
                let p = sd.join(&rel);
                match read_opt(&p)? {
                    Some(t) => {
                        let eps = from_jsonl::<EpisodeRecord>(&t, &p.display().to_string())?;
                        r.probes.push(ProbeCell {
                            variant: variant.clone(),
                            seed: s,
                            source: src.as_str().into(),
                            dist: "ood".into(),
                            success_rate: success_rate(&eps),
                            episodes: eps.len(),
                        });
                    }
                    None => r.missing.push(label(&rel, s)),
                }
            }
        }
    }
    summarize(&mut r, &variant);
    Ok(r)
}

fn summarize(r: &mut ExperimentReport, variant: &Option<String>) {
    for m in r.modes.clone() {
        for dist in DISTS {
            let xs: Vec<f64> = r.rates(&m, dist).into_iter().map(|x| x.1).collect();
            r.success_summary.extend(aggregate(variant, &m, dist, &xs));
        }
    }
    for alt in INTERVENTION_ALTS.map(|a| a.as_str()) {
        let cells: Vec<&InterventionCell> = r.interventions.iter().filter(|c| c.alt == alt).collect();
        let tr: Vec<f64> = cells.iter().map(|c| c.result.transition_drop).collect();
        let co: Vec<f64> = cells.iter().map(|c| c.result.consistent_drop).collect();
        r.intervention_summary.extend(aggregate(variant, alt, "transition_drop", &tr));
        r.intervention_summary.extend(aggregate(variant, alt, "consistent_drop", &co));
    }
    for src in PROBE_SOURCES.map(|a| a.as_str()) {
        let xs: Vec<f64> = r.probes.iter().filter(|c| c.source == src).map(|c| c.success_rate).collect();
        r.probe_summary.extend(aggregate(variant, src, "ood", &xs));
    }
}

/// Collects the report of a run directory, or of every variant of a sweep
/// directory. Missing artifacts are listed rather than fatal.
pub fn build_report(dir: &Path) -> Result<ExperimentReport> {
    let sweep_path = dir.join(SWEEP_FILE);
    let Some(text) = read_opt(&sweep_path)? else {
        return single_report(dir, None);
    };
    let manifest: SweepManifest = parse_json(&text, &sweep_path)?;
    let mut hasher = Sha256::new();
    let mut merged: Option<ExperimentReport> = None;
    for sub in &manifest.dirs {
        let part = single_report(&dir.join(sub), Some(sub.clone()))?;
        hasher.update(part.config_hash.as_bytes());
        match merged.as_mut() {
            None => merged = Some(part),
            Some(m) => {
                m.success.extend(part.success);
                m.loss_curves.extend(part.loss_curves);
                m.indicator.extend(part.indicator);
                m.segmentation.extend(part.segmentation);
                m.interventions.extend(part.interventions);
                m.probes.extend(part.probes);
                m.success_summary.extend(part.success_summary);
                m.intervention_summary.extend(part.intervention_summary);
                m.probe_summary.extend(part.probe_summary);
                m.missing.extend(part.missing);
            }
        }
    }
    let mut m = merged.ok_or_else(|| GapError::format(sweep_path.display().to_string(), "sweep lists no variants"))?;
    m.config_hash = hex::encode(hasher.finalize());
    m.sweep_parameter = Some(manifest.parameter);
    Ok(m)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_else(|| "-".into())
}

fn var(v: &Option<String>) -> &str {
    v.as_deref().unwrap_or("-")
}

fn aggregate_table(rows: &[Aggregate], group: &str, split: &str) -> String {
    let mut t = format!("variant\t{group}\t{split}\tn\tmean\tstd\n");
    for a in rows {
        let _ = writeln!(t, "{}\t{}\t{}\t{}\t{}\t{}", var(&a.variant), a.group, a.split, a.n, a.mean, opt(a.std));
    }
    t
}

/// Writes `report.json`, `tables/*.tsv` and `series/*.tsv` under `dir`.
pub fn write_report(r: &ExperimentReport, dir: &Path) -> Result<()> {
    write_atomic(&dir.join(REPORT_FILE), r.to_json().as_bytes())?;
    let tables = dir.join("tables");
    write_atomic(&tables.join("success.tsv"), aggregate_table(&r.success_summary, "mode", "dist").as_bytes())?;
    write_atomic(&tables.join("intervention.tsv"), aggregate_table(&r.intervention_summary, "alt", "metric").as_bytes())?;
    write_atomic(&tables.join("probe.tsv"), aggregate_table(&r.probe_summary, "source", "dist").as_bytes())?;
    let mut cells = String::from("variant\tmode\tseed\tdist\tepisodes\tsuccess_rate\n");
    for c in &r.success {
        let _ = writeln!(cells, "{}\t{}\t{}\t{}\t{}\t{}", var(&c.variant), c.mode, c.seed, c.dist, c.episodes, c.success_rate);
    }
    write_atomic(&tables.join("cells.tsv"), cells.as_bytes())?;
    let mut ind = String::from("variant\tseed\tauc\tfinal_loss\n");
    for c in &r.indicator {
        let _ = writeln!(ind, "{}\t{}\t{}\t{}", var(&c.variant), c.seed, opt(c.auc), opt(c.loss.last().copied()));
    }
    write_atomic(&tables.join("indicator.tsv"), ind.as_bytes())?;
    let mut seg = String::from("variant\tseed\ttrajectories\tmean_changes\tmean_total_cost\texpert_agreement\n");
    for c in &r.segmentation {
        let s = &c.stats;
        let _ = writeln!(
            seg,
            "{}\t{}\t{}\t{}\t{}\t{}",
            var(&c.variant),
            c.seed,
            s.trajectories,
            s.mean_changes,
            s.mean_total_cost,
            opt(s.expert_agreement)
        );
    }
    write_atomic(&tables.join("segmentation.tsv"), seg.as_bytes())?;
    let series = dir.join("series");
    let mut loss = String::from("variant\tmode\tseed\tepoch\ttrain_loss\trho_mean\n");
    for c in &r.loss_curves {
        for (e, (l, rho)) in c.train_loss.iter().zip(&c.rho_mean).enumerate() {
            let _ = writeln!(loss, "{}\t{}\t{}\t{e}\t{l}\t{rho}", var(&c.variant), c.mode, c.seed);
        }
    }
    write_atomic(&series.join("policy_loss.tsv"), loss.as_bytes())?;
    let mut iloss = String::from("variant\tseed\tepoch\tloss\n");
    for c in &r.indicator {
        for (e, l) in c.loss.iter().enumerate() {
            let _ = writeln!(iloss, "{}\t{}\t{e}\t{l}", var(&c.variant), c.seed);
        }
    }
    write_atomic(&series.join("indicator_loss.tsv"), iloss.as_bytes())?;
    let mut win = String::from("variant\tbase\talt\tseed\tstart\tsuccess_rate\ttransition_episodes\tconsistent_episodes\n");
    for c in &r.interventions {
        for w in &c.result.windows {
            let _ = writeln!(
                win,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                var(&c.variant),
                c.base,
                c.alt,
                c.seed,
                w.start,
                w.success_rate,
                w.transition_episodes,
                w.consistent_episodes
            );
        }
    }
    write_atomic(&series.join("intervention_windows.tsv"), win.as_bytes())?;
    let mut missing = String::new();
    for m in &r.missing {
        let _ = writeln!(missing, "{m}");
    }
    write_atomic(&dir.join("missing.txt"), missing.as_bytes())
}
