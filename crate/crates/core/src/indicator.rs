//! Per-timestep transition probability from proprioceptive deltas.
//!
//! The learned model is a single-layer LSTM over normalized state deltas with
//! an affine-sigmoid readout. The output for delta `i` (the step from state
//! `i` to `i + 1`) is the probability for state `i + 1`; state 0 copies
//! state 1. Smoothed and constant baselines share the same series type.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, Error, Result};
use crate::math;
use crate::nnkit::{adam_step, weighted_bce_with_logits, Affine, GroupTag, Lstm, Normalizer, OptimizerState, ParamGroup};
use crate::rng::SeededRng;
use crate::traj::{delta_sequence, Trajectory};

pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_W_LOW: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorLabels {
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
    pub window: usize,
    pub w_low: f64,
}

impl IndicatorLabels {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Targets are 1 exactly at change indices; weights drop to `w_low` for
/// non-change timesteps within `window` of one.
pub fn build_labels(indices: &[usize], n: usize, window: usize, w_low: f64) -> Result<IndicatorLabels> {
    if !(w_low > 0.0 && w_low <= 1.0) {
        return Err(arg_err!("w_low must lie in (0, 1], got {w_low}"));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i == 0 || i >= n) {
        return Err(arg_err!("change index {bad} outside 1..{}", n.saturating_sub(1)));
    }
    let mut targets = vec![0.0; n];
    let mut weights = vec![1.0; n];
    for &i in indices {
        targets[i] = 1.0;
    }
    for t in 0..n {
        let dist = indices.iter().map(|&i| t.abs_diff(i)).min();
        if let Some(d) = dist {
            if d > 0 && d <= window {
                weights[t] = w_low;
            }
        }
    }
    Ok(IndicatorLabels { targets, weights, window, w_low })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoSource {
    Learned,
    Smooth,
    Fixed,
}

impl RhoSource {
    pub fn as_str(self) -> &'static str {
        match self {
            RhoSource::Learned => "learned",
            RhoSource::Smooth => "smooth",
            RhoSource::Fixed => "fixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSeries {
    pub rho: Vec<f64>,
    pub source: RhoSource,
}

/// `rho_t = max_i exp(-(t - i)^2 / (2 sigma^2))`, zero when there are no indices.
pub fn smooth_rho(indices: &[usize], n: usize, sigma: f64) -> Result<IndicatorSeries> {
    if !(sigma > 0.0) {
        return Err(arg_err!("sigma must be positive, got {sigma}"));
    }
    let rho = (0..n)
        .map(|t| {
            indices
                .iter()
                .map(|&i| {
                    let d = t as f64 - i as f64;
                    math::exp(-d * d / (2.0 * sigma * sigma))
                })
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(IndicatorSeries { rho, source: RhoSource::Smooth })
}

pub fn fixed_rho(value: f64, n: usize) -> Result<IndicatorSeries> {
    if !(0.0..=1.0).contains(&value) {
        return Err(arg_err!("fixed rho {value} outside [0, 1]"));
    }
    Ok(IndicatorSeries { rho: vec![value; n], source: RhoSource::Fixed })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorHyper {
    pub epochs: usize,
    pub lr: f64,
    pub hidden_dim: usize,
    pub seed: u64,
    /// Sequences per optimizer step.
    pub batch_size: usize,
}

impl Default for IndicatorHyper {
    fn default() -> Self {
        Self { epochs: 200, lr: 1e-3, hidden_dim: 32, seed: 0, batch_size: 16 }
    }
}

/// One training sequence: `deltas` is `[N - 1, D]` row-major, labels span `N` states.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorExample {
    pub deltas: Vec<f64>,
    pub labels: IndicatorLabels,
}

impl IndicatorExample {
    pub fn from_trajectory(traj: &Trajectory, indices: &[usize], window: usize, w_low: f64) -> Result<Self> {
        let deltas = flat_deltas(traj)?;
        let labels = build_labels(indices, traj.len(), window, w_low)?;
        Ok(Self { deltas, labels })
    }
}

fn flat_deltas(traj: &Trajectory) -> Result<Vec<f64>> {
    Ok(delta_sequence(traj)?.iter().flat_map(|m| m.flatten()).collect())
}

#[derive(Debug, Clone)]
pub struct IndicatorModel {
    pub group: ParamGroup,
    pub lstm: Lstm,
    pub readout: Affine,
    pub normalizer: Normalizer,
    pub epochs: usize,
    pub loss_curve: Vec<f64>,
}

impl IndicatorModel {
    pub fn new(input: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let mut group = ParamGroup::new("indicator", GroupTag::Indicator);
        let lstm = Lstm::create(&mut group, "lstm", input, hidden, &mut rng);
        let readout = Affine::create(&mut group, "readout", hidden, 1, &mut rng);
        Self { group, lstm, readout, normalizer: Normalizer::identity(input), epochs: 0, loss_curve: Vec::new() }
    }

    /// Rebuilds a model around loaded parameters.
    pub fn from_parts(group: ParamGroup, normalizer: Normalizer) -> Result<Self> {
        let lstm = Lstm::bind(&group, "lstm")?;
        let readout = Affine::bind(&group, "readout")?;
        if readout.input != lstm.hidden || readout.output != 1 || normalizer.mean.len() != lstm.input {
            return Err(Error::Format(String::from("indicator parameters are inconsistent")));
        }
        Ok(Self { group, lstm, readout, normalizer, epochs: 0, loss_curve: Vec::new() })
    }

    pub fn input_dim(&self) -> usize {
        self.lstm.input
    }

    /// Readout logits for already-normalized deltas, one per delta row.
    pub fn logits(&self, normalized: &[f64]) -> Result<Vec<f64>> {
        let trace = self.lstm.forward(&self.group, normalized)?;
        self.readout.forward(&self.group, trace.outputs(self.lstm.hidden), trace.steps)
    }

    /// Weighted BCE of one sequence on already-normalized deltas, accumulating
    /// parameter gradients into the group. Returns the loss.
    pub fn accumulate(&mut self, normalized: &[f64], labels: &IndicatorLabels, grad_scale: f64) -> Result<f64> {
        let trace = self.lstm.forward(&self.group, normalized)?;
        let steps = trace.steps;
        if labels.len() != steps + 1 {
            return Err(arg_err!("labels span {} states but there are {steps} deltas", labels.len()));
        }
        let h = trace.outputs(self.lstm.hidden);
        let z = self.readout.forward(&self.group, h, steps)?;
        let (loss, mut dz) = weighted_bce_with_logits(&z, &labels.targets[1..], &labels.weights[1..])?;
        dz.iter_mut().for_each(|g| *g *= grad_scale);
        let dh = self.readout.backward(&mut self.group, h, &dz, steps, true).unwrap_or_default();
        self.lstm.backward(&mut self.group, &trace, &dh);
        Ok(loss)
    }
}

/// Trains the indicator with Adam over minibatches of whole sequences.
pub fn train_indicator(data: &[IndicatorExample], hyper: &IndicatorHyper) -> Result<IndicatorModel> {
    let first = data.first().ok_or_else(|| arg_err!("indicator training needs at least one sequence"))?;
    let n0 = first.labels.len();
    if n0 < 2 || first.deltas.len() % (n0 - 1) != 0 {
        return Err(arg_err!("first sequence has malformed deltas"));
    }
    let dim = first.deltas.len() / (n0 - 1);
    for (k, ex) in data.iter().enumerate() {
        if ex.labels.len() < 2 || ex.deltas.len() != (ex.labels.len() - 1) * dim {
            return Err(arg_err!("sequence {k} does not have {dim}-wide deltas matching its labels"));
        }
    }
    if hyper.batch_size == 0 || hyper.hidden_dim == 0 {
        return Err(arg_err!("batch size and hidden size must be positive"));
    }
    let rows: Vec<&[f64]> = data.iter().map(|e| e.deltas.as_slice()).collect();
    let mut model = IndicatorModel::new(dim, hyper.hidden_dim, hyper.seed);
    model.normalizer = Normalizer::fit(&rows, dim);
    let inputs: Vec<Vec<f64>> = data.iter().map(|e| model.normalizer.apply(&e.deltas)).collect();
    let mut opt = OptimizerState::adam(hyper.lr);
    let mut rng = SeededRng::with_stream(hyper.seed, 1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..hyper.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(hyper.batch_size) {
            model.group.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &k in batch {
                total += model.accumulate(&inputs[k], &data[k].labels, scale)?;
            }
            adam_step(&mut model.group, &mut opt, 1.0);
        }
        let loss = total / data.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Training { epoch, detail: alloc::format!("indicator loss became {loss}") });
        }
        model.loss_curve.push(loss);
    }
    model.epochs = hyper.epochs;
    Ok(model)
}

/// One probability per state of `traj`.
pub fn predict_rho(model: &IndicatorModel, traj: &Trajectory) -> Result<IndicatorSeries> {
    let deltas = flat_deltas(traj)?;
    let dim = deltas.len() / (traj.len() - 1);
    if dim != model.input_dim() {
        return Err(arg_err!("trajectory deltas are {dim}-wide, model expects {}", model.input_dim()));
    }
    let z = model.logits(&model.normalizer.apply(&deltas))?;
    let mut rho = Vec::with_capacity(traj.len());
    rho.push(math::sigmoid(z[0]));
    rho.extend(z.iter().map(|&v| math::sigmoid(v)));
    Ok(IndicatorSeries { rho, source: RhoSource::Learned })
}

/// Detection AUC with a tolerance band: states at a change index are
/// positives, states more than `window` steps from every index are negatives,
/// and the band in between is ignored. Scores and indices of all sequences are
/// pooled. `None` if either class ends up empty.
pub fn transition_auc<'a, I>(sequences: I, window: usize) -> Option<f64>
where
    I: IntoIterator<Item = (&'a [f64], &'a [usize])>,
{
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for (rho, indices) in sequences {
        for (t, &r) in rho.iter().enumerate() {
            let dist = indices.iter().map(|&i| i.abs_diff(t)).min();
            match dist {
                Some(0) => {
                    scores.push(r);
                    labels.push(true);
                }
                Some(d) if d <= window => {}
                _ => {
                    scores.push(r);
                    labels.push(false);
                }
            }
        }
    }
    crate::metrics::auc(&scores, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_single_index() {
        let l = build_labels(&[5], 11, 2, 0.2).unwrap();
        assert_eq!(l.targets.iter().sum::<f64>(), 1.0);
        assert_eq!(l.targets[5], 1.0);
        for t in 0..11 {
            let want = if [3, 4, 6, 7].contains(&t) { 0.2 } else { 1.0 };
            assert_eq!(l.weights[t], want, "t = {t}");
        }
    }

    #[test]
    fn labels_overlapping_windows() {
        let l = build_labels(&[4, 6], 12, 2, 0.2).unwrap();
        assert_eq!(l.weights[5], 0.2);
        assert_eq!((l.weights[4], l.weights[6]), (1.0, 1.0));
        assert_eq!((l.targets[4], l.targets[6]), (1.0, 1.0));
    }

    #[test]
    fn labels_reject_bad_input() {
        assert!(build_labels(&[0], 5, 1, 0.2).is_err());
        assert!(build_labels(&[5], 5, 1, 0.2).is_err());
        assert!(build_labels(&[2], 5, 1, 0.0).is_err());
        let l = build_labels(&[], 4, 3, 0.2).unwrap();
        assert!(l.targets.iter().all(|&y| y == 0.0) && l.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn smooth_values() {
        let s = smooth_rho(&[5], 10, 2.0).unwrap();
        assert_eq!(s.rho[5], 1.0);
        assert!((s.rho[7] - (-0.5f64).exp()).abs() < 1e-12);
        assert_eq!(s.rho[3], s.rho[7]);
        assert!(smooth_rho(&[], 4, 1.0).unwrap().rho.iter().all(|&r| r == 0.0));
        assert!(smooth_rho(&[1], 4, 0.0).is_err());
    }

    #[test]
    fn auc_ignores_the_band() {
        // a late peak next to the change only counts against a zero-width band
        let rho = [0.1, 0.9, 0.95, 0.2, 0.1, 0.0];
        let a = transition_auc([(&rho[..], &[1usize][..])], 1).unwrap();
        assert_eq!(a, 1.0);
        let b = transition_auc([(&rho[..], &[1usize][..])], 0).unwrap();
        assert!(b < 1.0);
        assert!(transition_auc([(&rho[..], &[][..])], 1).is_none());
    }

    #[test]
    fn fixed_values() {
        assert_eq!(fixed_rho(0.3, 5).unwrap().rho, vec![0.3; 5]);
        assert!(fixed_rho(1.2, 5).is_err());
    }

    #[test]
    fn empty_training_rejected() {
        assert!(train_indicator(&[], &IndicatorHyper::default()).is_err());
    }
}
