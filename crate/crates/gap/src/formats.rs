//! Line-delimited JSON records emitted by the stages.

use gap_core::indicator::IndicatorModel;
use gap_core::policy::EpochStats;
use gap_core::segment::SegmentationResult;
use gap_core::sim::{EvalReport, InterventionReport};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::SegmentSection;
use crate::error::{GapError, Result};

pub fn to_jsonl<T: Serialize>(rows: &[T]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl<T: DeserializeOwned>(text: &str, source: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| GapError::format(source, format!("line {}: {e}", i + 1))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRecord {
    pub traj_id: usize,
    pub change_indices: Vec<usize>,
    pub total_cost: f64,
    pub params_echo: SegmentSection,
}

impl SegmentRecord {
    pub fn new(traj_id: usize, r: &SegmentationResult, params: &SegmentSection) -> Self {
        Self { traj_id, change_indices: r.change_indices.clone(), total_cost: r.total_cost, params_echo: params.clone() }
    }
}

/// Checks that records cover trajectories `0..n` in order.
pub fn check_segment_records(recs: &[SegmentRecord], n: usize, source: &str) -> Result<()> {
    if recs.len() != n {
        return Err(GapError::format(source, format!("{} segment records for {n} trajectories", recs.len())));
    }
    if let Some((i, r)) = recs.iter().enumerate().find(|(i, r)| r.traj_id != *i) {
        return Err(GapError::format(source, format!("line {}: expected traj_id {i}, found {}", i + 1, r.traj_id)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyMetric {
    pub epoch: usize,
    pub train_loss: f64,
    pub rho_mean: f64,
}

pub fn policy_metrics(curve: &[EpochStats]) -> Vec<PolicyMetric> {
    curve.iter().map(|e| PolicyMetric { epoch: e.epoch, train_loss: e.train_loss, rho_mean: e.rho_mean }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorMetric {
    pub epoch: usize,
    pub loss: f64,
}

pub fn indicator_metrics(m: &IndicatorModel) -> Vec<IndicatorMetric> {
    m.loss_curve.iter().enumerate().map(|(epoch, &loss)| IndicatorMetric { epoch, loss }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub dist: String,
    pub success: bool,
    pub steps: usize,
}

pub fn episode_records(r: &EvalReport) -> Vec<EpisodeRecord> {
    r.episodes
        .iter()
        .map(|e| EpisodeRecord { seed: e.seed, dist: e.dist.as_str().into(), success: e.success, steps: e.steps })
        .collect()
}

/// Success rate recomputed from per-episode records.
pub fn success_rate(eps: &[EpisodeRecord]) -> f64 {
    if eps.is_empty() {
        return 0.0;
    }
    eps.iter().filter(|e| e.success).count() as f64 / eps.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowRecord {
    pub start: usize,
    pub success_rate: f64,
    pub transition_episodes: usize,
    pub consistent_episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionSummary {
    pub baseline_rate: f64,
    pub transition_drop: f64,
    pub consistent_drop: f64,
    pub windows: Vec<WindowRecord>,
}

impl From<&InterventionReport> for InterventionSummary {
    fn from(r: &InterventionReport) -> Self {
        Self {
            baseline_rate: r.baseline_rate,
            transition_drop: r.transition_drop,
            consistent_drop: r.consistent_drop,
            windows: r
                .windows
                .iter()
                .map(|w| WindowRecord {
                    start: w.start,
                    success_rate: w.success_rate,
                    transition_episodes: w.transition_episodes,
                    consistent_episodes: w.consistent_episodes,
                })
                .collect(),
        }
    }
}
