//! Two-branch vision + proprioception behavior-cloning policy.
//!
//! Vision and proprio chunks are MLPs over flattened observation windows.
//! Their features are concatenated into the head, whose first affine layer
//! can equally be read as the sum of a vision-facing and a proprio-facing
//! projection. Training supports plain BC, input masking, and phase-guided
//! scaling of the proprio chunk's gradient.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, Error, Result};
use crate::indicator::IndicatorSeries;
use crate::nnkit::{
    apply_step, concat_rows, mse, split_rows, Activation, Affine, GroupTag, Mlp, MlpCache, OptimizerKind,
    Normalizer, OptimizerState, ParamGroup,
};
use crate::rng::SeededRng;
use crate::sim::{Controller, EnvConfig, EnvState, Observation};
use crate::traj::{Dataset, Schema, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    VisionOnly,
    Concat,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::VisionOnly => "vision_only",
            Architecture::Concat => "concat",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "vision_only" | "vision" => Ok(Architecture::VisionOnly),
            "concat" => Ok(Architecture::Concat),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub arch: Architecture,
    /// Observation history length.
    pub history: usize,
    /// Predicted action sequence length.
    pub horizon: usize,
    pub vision_hidden: usize,
    pub vision_features: usize,
    pub proprio_hidden: usize,
    pub proprio_features: usize,
    pub head_hidden: usize,
    /// Standardize proprio inputs and action targets with demo statistics.
    pub normalize: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            arch: Architecture::Concat,
            history: 2,
            horizon: 1,
            vision_hidden: 64,
            vision_features: 32,
            proprio_hidden: 32,
            proprio_features: 16,
            head_hidden: 64,
            normalize: true,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history == 0 || self.horizon == 0 {
            return Err(Error::Config("history and horizon must be at least 1".into()));
        }
        let sizes = [self.vision_hidden, self.vision_features, self.head_hidden];
        if sizes.contains(&0) || (self.arch == Architecture::Concat && (self.proprio_hidden == 0 || self.proprio_features == 0)) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct VPPolicy {
    pub config: PolicyConfig,
    pub schema: Schema,
    pub vision: ParamGroup,
    pub proprio: Option<ParamGroup>,
    pub head: ParamGroup,
    /// Applied to each state row of the proprio window.
    pub proprio_norm: Normalizer,
    /// Network outputs live in normalized action space.
    pub action_norm: Normalizer,
    vision_net: Mlp,
    proprio_net: Option<Mlp>,
    head_in: Affine,
    head_share: Mlp,
}

/// Intermediate values of one batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub batch: usize,
    vision: MlpCache,
    proprio: Option<MlpCache>,
    head_input: Vec<f64>,
    head_hidden: Vec<f64>,
    share: MlpCache,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.share.output
    }

    pub fn vision_features(&self) -> &[f64] {
        &self.vision.output
    }
}

impl VPPolicy {
    pub fn new(config: PolicyConfig, schema: Schema, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::with_stream(seed, 0);
        let h = config.history;
        let mut vision = ParamGroup::new("vision", GroupTag::Vision);
        let vision_net = Mlp::create(
            &mut vision,
            "vision.",
            &[h * schema.obs_dim, config.vision_hidden, config.vision_features],
            Activation::Relu,
            Activation::Relu,
            &mut rng,
        );
        let (proprio, proprio_net, fs) = match config.arch {
            Architecture::Concat => {
                let mut g = ParamGroup::new("proprio", GroupTag::Proprio);
                let net = Mlp::create(
                    &mut g,
                    "proprio.",
                    &[h * schema.state_dim(), config.proprio_hidden, config.proprio_features],
                    Activation::Relu,
                    Activation::Relu,
                    &mut rng,
                );
                (Some(g), Some(net), config.proprio_features)
            }
            Architecture::VisionOnly => (None, None, 0),
        };
        let mut head = ParamGroup::new("head", GroupTag::Head);
        let head_in = Affine::create(&mut head, "head.in", config.vision_features + fs, config.head_hidden, &mut rng);
        let out = config.horizon * schema.action_dim;
        let head_share =
            Mlp::create(&mut head, "head.share", &[config.head_hidden, out], Activation::Relu, Activation::Identity, &mut rng);
        let (proprio_norm, action_norm) = (Normalizer::identity(schema.state_dim()), Normalizer::identity(schema.action_dim));
        Ok(Self { config, schema, vision, proprio, head, proprio_norm, action_norm, vision_net, proprio_net, head_in, head_share })
    }

    /// Rebuilds a policy around loaded parameter groups.
    pub fn from_groups(config: PolicyConfig, schema: Schema, groups: Vec<ParamGroup>) -> Result<Self> {
        config.validate()?;
        let mut vision = None;
        let mut proprio = None;
        let mut head = None;
        for g in groups {
            match g.tag {
                GroupTag::Vision => vision = Some(g),
                GroupTag::Proprio => proprio = Some(g),
                GroupTag::Head => head = Some(g),
                GroupTag::Indicator => {}
            }
        }
        let fmt = |m: &str| Error::Format(m.to_string());
        let vision = vision.ok_or_else(|| fmt("checkpoint has no vision group"))?;
        let head = head.ok_or_else(|| fmt("checkpoint has no head group"))?;
        let vision_net = Mlp::bind(&vision, "vision.", 2, Activation::Relu, Activation::Relu)?;
        let proprio_net = match (&proprio, config.arch) {
            (Some(g), Architecture::Concat) => Some(Mlp::bind(g, "proprio.", 2, Activation::Relu, Activation::Relu)?),
            (None, Architecture::VisionOnly) => None,
            _ => return Err(fmt("proprio group presence does not match the architecture")),
        };
        let head_in = Affine::bind(&head, "head.in")?;
        let head_share = Mlp::bind(&head, "head.share", 1, Activation::Relu, Activation::Identity)?;
        let fs = proprio_net.as_ref().map(|n| n.output_dim()).unwrap_or(0);
        if vision_net.input_dim() != config.history * schema.obs_dim
            || head_in.input != vision_net.output_dim() + fs
            || head_share.output_dim() != config.horizon * schema.action_dim
            || proprio_net.as_ref().is_some_and(|n| n.input_dim() != config.history * schema.state_dim())
        {
            return Err(fmt("parameter shapes do not match the policy configuration"));
        }
        let (proprio_norm, action_norm) = (Normalizer::identity(schema.state_dim()), Normalizer::identity(schema.action_dim));
        Ok(Self { config, schema, vision, proprio, head, proprio_norm, action_norm, vision_net, proprio_net, head_in, head_share })
    }

    pub fn set_normalizers(&mut self, proprio: Normalizer, action: Normalizer) -> Result<()> {
        if proprio.dim() != self.schema.state_dim() || action.dim() != self.schema.action_dim {
            return Err(Error::Format("normalizer widths do not match the policy schema".into()));
        }
        self.proprio_norm = proprio;
        self.action_norm = action;
        Ok(())
    }

    /// Actions in environment units from raw (unnormalized) windows.
    pub fn predict(&self, obs: &[f64], proprio: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut out = self.forward(obs, &self.proprio_norm.apply(proprio), batch)?;
        self.action_norm.invert_in_place(&mut out);
        Ok(out)
    }

    pub fn groups(&self) -> Vec<&ParamGroup> {
        let mut v = vec![&self.vision];
        if let Some(p) = &self.proprio {
            v.push(p);
        }
        v.push(&self.head);
        v
    }

    pub fn vision_input_dim(&self) -> usize {
        self.config.history * self.schema.obs_dim
    }

    pub fn proprio_input_dim(&self) -> usize {
        self.config.history * self.schema.state_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.config.horizon * self.schema.action_dim
    }

    pub fn forward_cached(&self, obs: &[f64], proprio: &[f64], batch: usize) -> Result<ForwardCache> {
        if obs.len() != batch * self.vision_input_dim() {
            return Err(arg_err!("vision window: expected {} values, got {}", batch * self.vision_input_dim(), obs.len()));
        }
        let vision = self.vision_net.forward(&self.vision, obs, batch)?;
        let (proprio_cache, head_input) = match (&self.proprio_net, &self.proprio) {
            (Some(net), Some(g)) => {
                if proprio.len() != batch * self.proprio_input_dim() {
                    return Err(arg_err!(
                        "proprio window: expected {} values, got {}",
                        batch * self.proprio_input_dim(),
                        proprio.len()
                    ));
                }
                let c = net.forward(g, proprio, batch)?;
                let x = concat_rows(&vision.output, self.vision_net.output_dim(), &c.output, net.output_dim(), batch);
                (Some(c), x)
            }
            _ => (None, vision.output.clone()),
        };
        let mut head_hidden = self.head_in.forward(&self.head, &head_input, batch)?;
        Activation::Relu.apply(&mut head_hidden);
        let share = self.head_share.forward(&self.head, &head_hidden, batch)?;
        Ok(ForwardCache { batch, vision, proprio: proprio_cache, head_input, head_hidden, share })
    }

    /// Predicted action chunks, `[batch, horizon * action_dim]`.
    pub fn forward(&self, obs: &[f64], proprio: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self.forward_cached(obs, proprio, batch)?.share.output)
    }

    /// Backpropagates `dout` into every group's gradients. Returns the gradient
    /// w.r.t. the proprio features when the proprio chunk exists, before it
    /// enters the chunk, so callers can rescale per sample.
    fn backward_head(&mut self, cache: &ForwardCache, dout: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let b = cache.batch;
        let mut dh = self.head_share.backward(&mut self.head, &cache.share, dout, true).unwrap_or_default();
        Activation::Relu.backward(&cache.head_hidden, &mut dh);
        let dx = self.head_in.backward(&mut self.head, &cache.head_input, &dh, b, true).unwrap_or_default();
        match &self.proprio_net {
            Some(net) => split_rows(&dx, self.vision_net.output_dim(), net.output_dim(), b),
            None => (dx, Vec::new()),
        }
    }

    /// Mean squared error of one batch; accumulates gradients of every group
    /// after zeroing them.
    pub fn loss_and_grad(&mut self, obs: &[f64], proprio: &[f64], target: &[f64], batch: usize) -> Result<f64> {
        self.zero_grads();
        let cache = self.forward_cached(obs, proprio, batch)?;
        let (loss, dout) = mse(cache.output(), target)?;
        let (dfv, dfs) = self.backward_head(&cache, &dout);
        self.vision_net.backward(&mut self.vision, &cache.vision, &dfv, false);
        if let (Some(net), Some(g), Some(c)) = (&self.proprio_net, self.proprio.as_mut(), &cache.proprio) {
            net.backward(g, c, &dfs, false);
        }
        Ok(loss)
    }

    pub fn zero_grads(&mut self) {
        self.vision.zero_grads();
        if let Some(p) = self.proprio.as_mut() {
            p.zero_grads();
        }
        self.head.zero_grads();
    }

    /// Columns of the head's first layer that read proprio features.
    fn proprio_columns(&self) -> core::ops::Range<usize> {
        let fv = self.vision_net.output_dim();
        fv..self.head_in.input
    }
}

/// Head output computed twice: through the unmodified first layer on
/// `[f_v | f_s]`, and as the sum of the vision-column projection and the
/// proprio-column projection plus bias. Returns the largest absolute difference.
pub fn head_split_check(policy: &VPPolicy, fv: &[f64], fs: &[f64]) -> Result<f64> {
    let nv = policy.vision_net.output_dim();
    let ns = policy.head_in.input - nv;
    if policy.config.arch != Architecture::Concat {
        return Err(arg_err!("head split needs the concat architecture"));
    }
    if fv.len() % nv != 0 || fs.len() != fv.len() / nv * ns {
        return Err(arg_err!("feature widths do not match the head"));
    }
    let batch = fv.len() / nv;
    let joint = concat_rows(fv, nv, fs, ns, batch);
    let mut a = policy.head_in.forward(&policy.head, &joint, batch)?;

    let w = policy.head.param(policy.head_in.w).data();
    let bias = policy.head.param(policy.head_in.b).data();
    let ni = policy.head_in.input;
    let mut b = vec![0.0; batch * policy.head_in.output];
    for r in 0..batch {
        for o in 0..policy.head_in.output {
            let row = &w[o * ni..(o + 1) * ni];
            let zv: f64 = row[..nv].iter().zip(&fv[r * nv..(r + 1) * nv]).map(|(x, y)| x * y).sum();
            let zs: f64 = bias[o] + row[nv..].iter().zip(&fs[r * ns..(r + 1) * ns]).map(|(x, y)| x * y).sum::<f64>();
            b[r * policy.head_in.output + o] = zs + zv;
        }
    }
    Activation::Relu.apply(&mut a);
    Activation::Relu.apply(&mut b);
    let ya = policy.head_share.forward(&policy.head, &a, batch)?.output;
    let yb = policy.head_share.forward(&policy.head, &b, batch)?.output;
    Ok(ya.iter().zip(&yb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Vision,
    Concat,
    Gap,
    Mask,
    Fixed,
    Smooth,
}

impl TrainMode {
    pub const ALL: [TrainMode; 6] =
        [TrainMode::Vision, TrainMode::Concat, TrainMode::Gap, TrainMode::Mask, TrainMode::Fixed, TrainMode::Smooth];

    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Vision => "vision",
            TrainMode::Concat => "concat",
            TrainMode::Gap => "gap",
            TrainMode::Mask => "mask",
            TrainMode::Fixed => "fixed",
            TrainMode::Smooth => "smooth",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        TrainMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown training mode `{s}`")))
    }

    pub fn architecture(self) -> Architecture {
        if self == TrainMode::Vision {
            Architecture::VisionOnly
        } else {
            Architecture::Concat
        }
    }

    /// Modes that scale the proprio gradient by a transition probability.
    pub fn uses_rho(self) -> bool {
        matches!(self, TrainMode::Gap | TrainMode::Fixed | TrainMode::Smooth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjustRule {
    /// `lambda * (1 - rho)`.
    Literal,
    /// `1 - lambda * rho`.
    OneMinusLambdaRho,
}

impl AdjustRule {
    pub fn as_str(self) -> &'static str {
        match self {
            AdjustRule::Literal => "literal",
            AdjustRule::OneMinusLambdaRho => "one_minus_lambda_rho",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(AdjustRule::Literal),
            "one_minus_lambda_rho" => Ok(AdjustRule::OneMinusLambdaRho),
            other => Err(Error::Config(format!("unknown adjust rule `{other}`"))),
        }
    }

    pub fn factor(self, lambda: f64, rho: f64) -> f64 {
        match self {
            AdjustRule::Literal => lambda * (1.0 - rho),
            AdjustRule::OneMinusLambdaRho => 1.0 - lambda * rho,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    /// Number of leading epochs with gradient adjustment.
    pub gap_epochs: usize,
    pub lambda: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub mask_prob: f64,
    pub adjust_rule: AdjustRule,
    /// Scale each sample's proprio gradient by its own factor instead of the batch mean.
    pub per_sample: bool,
    /// Also scale the head's proprio-facing first-layer columns.
    pub scale_head_proprio: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Concat,
            epochs: 100,
            gap_epochs: 50,
            lambda: 0.3,
            batch_size: 64,
            lr: 0.05,
            optimizer: OptimizerKind::Sgd,
            seed: 0,
            mask_prob: 0.5,
            adjust_rule: AdjustRule::Literal,
            per_sample: false,
            scale_head_proprio: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.gap_epochs > self.epochs {
            return bad(format!("gap_epochs {} exceeds epochs {}", self.gap_epochs, self.epochs));
        }
        if !(self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.mask_prob) {
            return bad(format!("mask_prob {} outside [0, 1]", self.mask_prob));
        }
        if self.batch_size == 0 || !(self.lr > 0.0) {
            return bad("batch size and learning rate must be positive".into());
        }
        Ok(())
    }
}

/// Training sample: timestep `t` of trajectory `traj`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRef {
    pub traj: usize,
    pub t: usize,
}

pub fn sample_refs(data: &Dataset) -> Vec<SampleRef> {
    data.trajectories.iter().enumerate().flat_map(|(k, tr)| (0..tr.len()).map(move |t| SampleRef { traj: k, t })).collect()
}

/// Appends the `history`-long window ending at `t`, padding before the start
/// by repeating the first row.
pub fn push_window<'a, F: Fn(usize) -> &'a [f64]>(out: &mut Vec<f64>, row: F, t: usize, history: usize) {
    for k in 0..history {
        let idx = (t + k + 1).saturating_sub(history);
        out.extend_from_slice(row(idx));
    }
}

fn push_state_window(out: &mut Vec<f64>, tr: &Trajectory, t: usize, history: usize) {
    for k in 0..history {
        let idx = (t + k + 1).saturating_sub(history);
        tr.states()[idx].flatten_into(out);
    }
}

/// Action targets `a_t .. a_{t+L-1}`, repeating the final action past the end.
fn push_targets(out: &mut Vec<f64>, tr: &Trajectory, t: usize, horizon: usize) {
    for k in 0..horizon {
        out.extend_from_slice(&tr.actions()[(t + k).min(tr.len() - 1)]);
    }
}

#[derive(Debug, Clone, Default)]
struct Batch {
    obs: Vec<f64>,
    proprio: Vec<f64>,
    target: Vec<f64>,
    rho: Vec<f64>,
}

fn gather(data: &Dataset, refs: &[SampleRef], policy: &VPPolicy, rho: Option<&[IndicatorSeries]>) -> Batch {
    let cfg = &policy.config;
    let mut b = Batch::default();
    for r in refs {
        let tr = &data.trajectories[r.traj];
        push_window(&mut b.obs, |i| tr.obs()[i].as_slice(), r.t, cfg.history);
        push_state_window(&mut b.proprio, tr, r.t, cfg.history);
        push_targets(&mut b.target, tr, r.t, cfg.horizon);
        if let Some(series) = rho {
            b.rho.push(series[r.traj].rho[r.t]);
        }
    }
    policy.proprio_norm.apply_in_place(&mut b.proprio);
    policy.action_norm.apply_in_place(&mut b.target);
    b
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    /// Mean per-batch rho over the epoch; 0 when no adjustment is applied.
    pub rho_mean: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: VPPolicy,
    pub curve: Vec<EpochStats>,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
}

fn check_inputs(data: &Dataset, cfg: &PolicyConfig, tcfg: &TrainConfig, rho: Option<&[IndicatorSeries]>) -> Result<()> {
    tcfg.validate()?;
    if data.is_empty() {
        return Err(arg_err!("empty dataset"));
    }
    if cfg.arch != tcfg.mode.architecture() {
        return Err(Error::Config(format!(
            "mode {} needs the {} architecture",
            tcfg.mode.as_str(),
            tcfg.mode.architecture().as_str()
        )));
    }
    match (tcfg.mode.uses_rho(), rho) {
        (true, None) => return Err(Error::Config(format!("mode {} needs a rho series", tcfg.mode.as_str()))),
        (false, Some(_)) => return Err(Error::Config(format!("mode {} takes no rho series", tcfg.mode.as_str()))),
        (true, Some(series))
            if series.len() != data.len() || series.iter().zip(&data.trajectories).any(|(s, t)| s.rho.len() != t.len()) =>
        {
            return Err(arg_err!("rho series do not align with the dataset"))
        }
        _ => {}
    }
    Ok(())
}

/// Behavior cloning with the configured mode.
pub fn bc_train(data: &Dataset, cfg: &PolicyConfig, tcfg: &TrainConfig, rho: Option<&[IndicatorSeries]>) -> Result<TrainOutcome> {
    check_inputs(data, cfg, tcfg, rho)?;
    let mut policy = VPPolicy::new(cfg.clone(), data.schema, tcfg.seed)?;
    if cfg.normalize {
        let (pn, an) = fit_normalizers(data);
        policy.set_normalizers(pn, an)?;
    }
    train_loop(policy, data, tcfg, rho, false)
}

/// Per-dimension statistics of demo states and actions.
pub fn fit_normalizers(data: &Dataset) -> (Normalizer, Normalizer) {
    let mut states = Vec::new();
    let mut actions = Vec::new();
    for tr in &data.trajectories {
        for s in tr.states() {
            s.flatten_into(&mut states);
        }
        for a in tr.actions() {
            actions.extend_from_slice(a);
        }
    }
    (
        Normalizer::fit(&[states.as_slice()], data.schema.state_dim()),
        Normalizer::fit(&[actions.as_slice()], data.schema.action_dim),
    )
}

fn train_loop(
    mut policy: VPPolicy,
    data: &Dataset,
    tcfg: &TrainConfig,
    rho: Option<&[IndicatorSeries]>,
    freeze_vision: bool,
) -> Result<TrainOutcome> {
    let mut refs = sample_refs(data);
    let mut shuffle_rng = SeededRng::with_stream(tcfg.seed, 1);
    let mut mask_rng = SeededRng::with_stream(tcfg.seed, 2);
    let mut opt_v = OptimizerState::new(tcfg.optimizer, tcfg.lr);
    let mut opt_s = OptimizerState::new(tcfg.optimizer, tcfg.lr);
    let mut opt_h = OptimizerState::new(tcfg.optimizer, tcfg.lr);
    let sd = policy.proprio_input_dim();
    let mut curve = Vec::with_capacity(tcfg.epochs);
    let mut step_losses = Vec::new();
    for epoch in 0..tcfg.epochs {
        shuffle_rng.shuffle(&mut refs);
        let adjusting = tcfg.mode.uses_rho() && epoch < tcfg.gap_epochs;
        let (mut loss_sum, mut rho_sum, mut batches) = (0.0, 0.0, 0usize);
        for chunk in refs.chunks(tcfg.batch_size) {
            let b = chunk.len();
            let mut batch = gather(data, chunk, &policy, rho);
            if tcfg.mode == TrainMode::Mask {
                for r in 0..b {
                    if mask_rng.bernoulli(tcfg.mask_prob) {
                        batch.proprio[r * sd..(r + 1) * sd].iter_mut().for_each(|x| *x = 0.0);
                    }
                }
            }
            policy.zero_grads();
            let cache = policy.forward_cached(&batch.obs, &batch.proprio, b)?;
            let (loss, dout) = mse(cache.output(), &batch.target)?;
            if !loss.is_finite() {
                return Err(Error::Training { epoch, detail: format!("policy loss became {loss}") });
            }
            let (dfv, mut dfs) = policy.backward_head(&cache, &dout);
            let rho_bar = if adjusting { batch.rho.iter().sum::<f64>() / b as f64 } else { 0.0 };
            let mut proprio_scale = 1.0;
            let mut head_scale = 1.0;
            if adjusting {
                if tcfg.per_sample {
                    let fs = policy.config.proprio_features;
                    let mut mean_factor = 0.0;
                    for r in 0..b {
                        let f = tcfg.adjust_rule.factor(tcfg.lambda, batch.rho[r]);
                        mean_factor += f / b as f64;
                        dfs[r * fs..(r + 1) * fs].iter_mut().for_each(|g| *g *= f);
                    }
                    head_scale = mean_factor;
                } else {
                    proprio_scale = tcfg.adjust_rule.factor(tcfg.lambda, rho_bar);
                    head_scale = proprio_scale;
                }
            }
            if !freeze_vision {
                policy.vision_net.backward(&mut policy.vision, &cache.vision, &dfv, false);
            }
            if let (Some(net), Some(g), Some(c)) = (&policy.proprio_net, policy.proprio.as_mut(), &cache.proprio) {
                net.backward(g, c, &dfs, false);
            }
            if adjusting && tcfg.scale_head_proprio {
                let cols = policy.proprio_columns();
                let ni = policy.head_in.input;
                let gw = policy.head.grad_mut(policy.head_in.w).data_mut();
                for row in gw.chunks_mut(ni) {
                    row[cols.clone()].iter_mut().for_each(|g| *g *= head_scale);
                }
            }
            if !freeze_vision {
                apply_step(&mut policy.vision, &mut opt_v, 1.0);
            }
            if let Some(g) = policy.proprio.as_mut() {
                apply_step(g, &mut opt_s, proprio_scale);
            }
            apply_step(&mut policy.head, &mut opt_h, 1.0);
            loss_sum += loss * b as f64;
            rho_sum += rho_bar;
            batches += 1;
            step_losses.push(loss);
        }
        let train_loss = loss_sum / refs.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Training { epoch, detail: format!("policy loss became {train_loss}") });
        }
        curve.push(EpochStats { epoch, train_loss, rho_mean: rho_sum / batches as f64 });
    }
    Ok(TrainOutcome { policy, curve, step_losses })
}

/// Trains a fresh head on the frozen vision chunk of `source`.
pub fn linear_probe(source: &VPPolicy, data: &Dataset, tcfg: &TrainConfig) -> Result<TrainOutcome> {
    tcfg.validate()?;
    if data.is_empty() {
        return Err(arg_err!("empty dataset"));
    }
    let cfg = PolicyConfig { arch: Architecture::VisionOnly, ..source.config.clone() };
    let fresh = VPPolicy::new(cfg.clone(), source.schema, tcfg.seed)?;
    let mut probe = VPPolicy::from_groups(cfg, source.schema, vec![source.vision.clone(), fresh.head])?;
    probe.set_normalizers(source.proprio_norm.clone(), source.action_norm.clone())?;
    let probe_cfg = TrainConfig { mode: TrainMode::Vision, ..tcfg.clone() };
    train_loop(probe, data, &probe_cfg, None, true)
}

/// Runs a trained policy in the simulator, executing the first action of each chunk.
#[derive(Debug, Clone, Copy)]
pub struct PolicyController<'a> {
    pub policy: &'a VPPolicy,
}

impl Controller for PolicyController<'_> {
    fn act(&mut self, cfg: &EnvConfig, _state: &EnvState, history: &[Observation]) -> Result<Vec<f64>> {
        let p = self.policy;
        if cfg.schema() != p.schema {
            return Err(Error::Config(format!("policy schema {:?} does not match environment {:?}", p.schema, cfg.schema())));
        }
        let t = history.len() - 1;
        let h = p.config.history;
        let mut obs = Vec::with_capacity(p.vision_input_dim());
        push_window(&mut obs, |i| history[i].visual.as_slice(), t, h);
        let mut proprio = Vec::with_capacity(p.proprio_input_dim());
        for k in 0..h {
            history[(t + k + 1).saturating_sub(h)].proprio.flatten_into(&mut proprio);
        }
        let out = p.predict(&obs, &proprio, 1)?;
        Ok(out[..p.schema.action_dim].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema { d_p: 2, d_theta: 0, action_dim: 3, obs_dim: 5 }
    }

    fn small() -> PolicyConfig {
        PolicyConfig {
            vision_hidden: 6,
            vision_features: 4,
            proprio_hidden: 5,
            proprio_features: 3,
            head_hidden: 7,
            ..PolicyConfig::default()
        }
    }

    #[test]
    fn output_width() {
        let p = VPPolicy::new(PolicyConfig { horizon: 3, ..small() }, schema(), 1).unwrap();
        let y = p.forward(&[0.1; 10], &[0.2; 6], 1).unwrap();
        assert_eq!(y.len(), 9);
        assert!(p.forward(&[0.1; 9], &[0.2; 6], 1).is_err());
    }

    #[test]
    fn zero_final_layer_outputs_bias() {
        let mut p = VPPolicy::new(small(), schema(), 2).unwrap();
        let l = p.head_share.layers[0];
        p.head.param_mut(l.w).fill(0.0);
        p.head.param_mut(l.b).data_mut().copy_from_slice(&[0.5, -1.0, 2.0]);
        assert_eq!(p.forward(&[0.3; 10], &[0.7; 6], 1).unwrap(), vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn split_identity_holds() {
        let p = VPPolicy::new(small(), schema(), 3).unwrap();
        let fv = [0.3, -0.2, 1.5, 0.0, 0.1, 0.2, 0.3, 0.4];
        assert!(head_split_check(&p, &fv, &[0.9, 0.0, -0.4, 0.0, 0.0, 0.0]).unwrap() < 1e-12);
    }

    #[test]
    fn vision_only_ignores_proprio() {
        let p = VPPolicy::new(PolicyConfig { arch: Architecture::VisionOnly, ..small() }, schema(), 4).unwrap();
        assert!(p.proprio.is_none());
        assert_eq!(p.forward(&[0.3; 10], &[], 1).unwrap(), p.forward(&[0.3; 10], &[9.0; 6], 1).unwrap());
    }

    #[test]
    fn adjust_factors() {
        assert_eq!(AdjustRule::Literal.factor(0.3, 0.0), 0.3);
        assert_eq!(AdjustRule::Literal.factor(1.0, 1.0), 0.0);
        assert_eq!(AdjustRule::OneMinusLambdaRho.factor(0.3, 0.0), 1.0);
    }

    #[test]
    fn invalid_train_config() {
        let t = TrainConfig { gap_epochs: 200, ..TrainConfig::default() };
        assert!(t.validate().is_err());
        assert!(TrainConfig { mask_prob: 1.5, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn windows_pad_with_first_row() {
        let rows = [[1.0], [2.0], [3.0]];
        let mut out = Vec::new();
        push_window(&mut out, |i| &rows[i][..], 0, 3);
        push_window(&mut out, |i| &rows[i][..], 2, 2);
        assert_eq!(out, vec![1.0, 1.0, 1.0, 2.0, 3.0]);
    }
}
