//! Stage computations shared by the pipeline and the single-stage subcommands.

use gap_core::indicator::{
    fixed_rho, predict_rho, smooth_rho, train_indicator, transition_auc, IndicatorExample, IndicatorModel,
    IndicatorSeries,
};
use gap_core::policy::{bc_train, linear_probe, TrainMode, TrainOutcome, VPPolicy};
use gap_core::rng::derive_seed;
use gap_core::segment::{boundaries_recovered, segment_dp, SegParams, SegmentationResult};
use gap_core::sim::{expert_trajectory, EnvConfig};
use gap_core::traj::{Dataset, Distribution};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{GapError, Result};

/// Tolerance (steps) for counting a segmentation as agreeing with the expert.
pub const AGREEMENT_TOLERANCE: usize = 2;

/// Independent RNG streams derived from one run seed.
pub mod streams {
    pub const DEMOS: u64 = 1;
    pub const INDICATOR: u64 = 2;
    pub const POLICY: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const INTERVENTION: u64 = 5;
    pub const PROBE: u64 = 6;
    pub const AUC: u64 = 7;
}

pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    derive_seed(seed, stream)
}

pub fn segment_dataset(ds: &Dataset, params: &SegParams) -> Result<Vec<SegmentationResult>> {
    Ok(ds.trajectories.iter().map(|t| segment_dp(t, params)).collect::<gap_core::Result<Vec<_>>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentStats {
    pub trajectories: usize,
    pub mean_changes: f64,
    pub mean_total_cost: f64,
    /// Fraction of trajectories whose change points match the recorded expert
    /// boundaries within the agreement tolerance; `None` without recorded boundaries.
    pub expert_agreement: Option<f64>,
}

pub fn segment_stats(ds: &Dataset, indices: &[Vec<usize>], costs: &[f64]) -> SegmentStats {
    let n = ds.len().max(1) as f64;
    let with_truth: Vec<bool> = ds
        .trajectories
        .iter()
        .zip(indices)
        .filter(|(t, _)| !t.meta.boundaries.is_empty())
        .map(|(t, found)| boundaries_recovered(found, &t.meta.boundaries, AGREEMENT_TOLERANCE))
        .collect();
    SegmentStats {
        trajectories: ds.len(),
        mean_changes: indices.iter().map(|i| i.len() as f64).sum::<f64>() / n,
        mean_total_cost: costs.iter().sum::<f64>() / n,
        expert_agreement: (!with_truth.is_empty())
            .then(|| with_truth.iter().filter(|&&b| b).count() as f64 / with_truth.len() as f64),
    }
}

pub fn train_indicator_on(ds: &Dataset, indices: &[Vec<usize>], cfg: &RunConfig, seed: u64) -> Result<IndicatorModel> {
    if indices.len() != ds.len() {
        return Err(GapError::Config(format!("{} segmentations for {} trajectories", indices.len(), ds.len())));
    }
    let ic = &cfg.indicator;
    let examples = ds
        .trajectories
        .iter()
        .zip(indices)
        .map(|(t, i)| IndicatorExample::from_trajectory(t, i, ic.window, ic.w_low))
        .collect::<gap_core::Result<Vec<_>>>()?;
    Ok(train_indicator(&examples, &ic.hyper(seed))?)
}

/// Transition-detection AUC of `model` on `n` fresh in-distribution expert episodes.
pub fn indicator_auc(model: &IndicatorModel, env: &EnvConfig, n: usize, seed: u64, window: usize) -> Result<Option<f64>> {
    let mut seqs = Vec::with_capacity(n);
    for k in 0..n {
        let traj = expert_trajectory(env, Distribution::InDistribution, derive_seed(seed, k as u64))?;
        let rho = predict_rho(model, &traj)?.rho;
        seqs.push((rho, traj.meta.boundaries));
    }
    Ok(transition_auc(seqs.iter().map(|(r, b)| (r.as_slice(), b.as_slice())), window))
}

/// What a mode needs besides the demos.
pub struct RhoInputs<'a> {
    pub indicator: Option<&'a IndicatorModel>,
    pub segments: Option<&'a [Vec<usize>]>,
    pub rho_fixed: f64,
    pub smooth_sigma: f64,
}

pub fn rho_for_mode(mode: TrainMode, ds: &Dataset, inputs: &RhoInputs) -> Result<Option<Vec<IndicatorSeries>>> {
    let missing = |what: &str| GapError::Config(format!("mode {} needs {what}", mode.as_str()));
    let series = match mode {
        TrainMode::Gap => {
            let m = inputs.indicator.ok_or_else(|| missing("a trained indicator"))?;
            ds.trajectories.iter().map(|t| predict_rho(m, t)).collect::<gap_core::Result<Vec<_>>>()?
        }
        TrainMode::Smooth => {
            let seg = inputs.segments.ok_or_else(|| missing("a segmentation"))?;
            if seg.len() != ds.len() {
                return Err(GapError::Config(format!("{} segmentations for {} trajectories", seg.len(), ds.len())));
            }
            ds.trajectories
                .iter()
                .zip(seg)
                .map(|(t, i)| smooth_rho(i, t.len(), inputs.smooth_sigma))
                .collect::<gap_core::Result<Vec<_>>>()?
        }
        TrainMode::Fixed => {
            ds.trajectories.iter().map(|t| fixed_rho(inputs.rho_fixed, t.len())).collect::<gap_core::Result<Vec<_>>>()?
        }
        _ => return Ok(None),
    };
    Ok(Some(series))
}

pub fn train_policy(ds: &Dataset, mode: TrainMode, cfg: &RunConfig, seed: u64, inputs: &RhoInputs) -> Result<TrainOutcome> {
    let rho = rho_for_mode(mode, ds, inputs)?;
    let pcfg = cfg.policy.config(mode.architecture());
    let tcfg = cfg.train.config(mode, seed)?;
    Ok(bc_train(ds, &pcfg, &tcfg, rho.as_deref())?)
}

pub fn train_probe(source: &VPPolicy, ds: &Dataset, cfg: &RunConfig, seed: u64) -> Result<TrainOutcome> {
    let mut t = cfg.train.clone();
    t.epochs = cfg.eval.probe_epochs;
    t.gap_epochs = 0;
    let tcfg = t.config(TrainMode::Vision, seed)?;
    Ok(linear_probe(source, ds, &tcfg)?)
}
