//! Run configuration: a TOML file with sections, `--set section.key=value`
//! overrides on top, then conversion into the core parameter structs.

use std::path::{Path, PathBuf};

use gap_core::indicator::{IndicatorHyper, DEFAULT_W_LOW, DEFAULT_WINDOW};
use gap_core::nnkit::OptimizerKind;
use gap_core::policy::{AdjustRule, Architecture, PolicyConfig, TrainConfig, TrainMode};
use gap_core::segment::{ChangeBudget, DistanceMode, SegParams, DEFAULT_PENALTY};
use gap_core::sim::{EnvConfig, InterventionParams, TaskVariant};
use gap_core::traj::Distribution;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GapError, Result};

/// Environment variable naming the cache root.
pub const CACHE_ENV: &str = "GAP_CACHE_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Where stage outputs and the report are written.
    pub out_dir: PathBuf,
    /// Empty means `$GAP_CACHE_DIR`, falling back to `<out_dir>/cache`.
    pub cache_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("gap-run"), cache_dir: PathBuf::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoSection {
    pub count: usize,
}

impl Default for DemoSection {
    fn default() -> Self {
        Self { count: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSection {
    pub alpha: f64,
    pub beta: f64,
    pub penalty: f64,
    /// Exact change-point count; overrides `penalty` when set.
    pub changes: Option<usize>,
    pub min_phase_len: usize,
    /// `gap` or `cotpc`.
    pub distance: String,
    pub mismatch_penalty: bool,
}

impl Default for SegmentSection {
    fn default() -> Self {
        let d = SegParams::default();
        Self {
            alpha: d.alpha,
            beta: d.beta,
            penalty: DEFAULT_PENALTY,
            changes: None,
            min_phase_len: d.min_phase_len,
            distance: "gap".into(),
            mismatch_penalty: d.mismatch_penalty,
        }
    }
}

impl SegmentSection {
    pub fn params(&self) -> Result<SegParams> {
        let mode = match self.distance.as_str() {
            "gap" => DistanceMode::Gap,
            "cotpc" => DistanceMode::Cotpc,
            other => return Err(GapError::Config(format!("unknown segment distance `{other}`"))),
        };
        let budget = match self.changes {
            Some(k) => ChangeBudget::Count(k),
            None => ChangeBudget::Penalty(self.penalty),
        };
        let p = SegParams {
            alpha: self.alpha,
            beta: self.beta,
            budget,
            min_phase_len: self.min_phase_len,
            mode,
            mismatch_penalty: self.mismatch_penalty,
        };
        p.validate().map_err(|e| GapError::Config(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndicatorSection {
    pub window: usize,
    pub w_low: f64,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Fresh expert trajectories scored for the report's indicator AUC.
    pub auc_trajectories: usize,
}

impl Default for IndicatorSection {
    fn default() -> Self {
        let h = IndicatorHyper::default();
        Self {
            window: DEFAULT_WINDOW,
            w_low: DEFAULT_W_LOW,
            hidden_dim: h.hidden_dim,
            epochs: h.epochs,
            lr: h.lr,
            batch_size: h.batch_size,
            auc_trajectories: 50,
        }
    }
}

impl IndicatorSection {
    pub fn hyper(&self, seed: u64) -> IndicatorHyper {
        IndicatorHyper { epochs: self.epochs, lr: self.lr, hidden_dim: self.hidden_dim, seed, batch_size: self.batch_size }
    }
}

/// Network shape; the architecture follows from the training mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub history: usize,
    pub horizon: usize,
    pub vision_hidden: usize,
    pub vision_features: usize,
    pub proprio_hidden: usize,
    pub proprio_features: usize,
    pub head_hidden: usize,
    pub normalize: bool,
}

impl Default for PolicySection {
    fn default() -> Self {
        let d = PolicyConfig::default();
        Self {
            history: d.history,
            horizon: d.horizon,
            vision_hidden: d.vision_hidden,
            vision_features: d.vision_features,
            proprio_hidden: d.proprio_hidden,
            proprio_features: d.proprio_features,
            head_hidden: d.head_hidden,
            normalize: d.normalize,
        }
    }
}

impl PolicySection {
    pub fn config(&self, arch: Architecture) -> PolicyConfig {
        PolicyConfig {
            arch,
            history: self.history,
            horizon: self.horizon,
            vision_hidden: self.vision_hidden,
            vision_features: self.vision_features,
            proprio_hidden: self.proprio_hidden,
            proprio_features: self.proprio_features,
            head_hidden: self.head_hidden,
            normalize: self.normalize,
        }
    }

    pub fn from_config(c: &PolicyConfig) -> Self {
        Self {
            history: c.history,
            horizon: c.horizon,
            vision_hidden: c.vision_hidden,
            vision_features: c.vision_features,
            proprio_hidden: c.proprio_hidden,
            proprio_features: c.proprio_features,
            head_hidden: c.head_hidden,
            normalize: c.normalize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub modes: Vec<String>,
    pub epochs: usize,
    /// Leading epochs with gradient adjustment.
    pub gap_epochs: usize,
    pub lambda: f64,
    pub batch_size: usize,
    pub lr: f64,
    /// `sgd` or `adam`.
    pub optimizer: String,
    pub mask_prob: f64,
    /// `literal` or `one_minus_lambda_rho`.
    pub adjust_rule: String,
    pub per_sample: bool,
    pub scale_head_proprio: bool,
    /// Constant transition probability of the `fixed` mode.
    pub rho_fixed: f64,
    /// Gaussian width (steps) of the `smooth` mode.
    pub smooth_sigma: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            modes: TrainMode::ALL.iter().map(|m| m.as_str().to_string()).collect(),
            epochs: d.epochs,
            gap_epochs: d.gap_epochs,
            lambda: d.lambda,
            batch_size: d.batch_size,
            lr: d.lr,
            optimizer: d.optimizer.as_str().into(),
            mask_prob: d.mask_prob,
            adjust_rule: d.adjust_rule.as_str().into(),
            per_sample: d.per_sample,
            scale_head_proprio: d.scale_head_proprio,
            rho_fixed: 0.5,
            smooth_sigma: 2.0,
        }
    }
}

impl TrainSection {
    pub fn modes(&self) -> Result<Vec<TrainMode>> {
        if self.modes.is_empty() {
            return Err(GapError::Config("train.modes is empty".into()));
        }
        let mut out: Vec<TrainMode> = Vec::new();
        for m in &self.modes {
            let mode = TrainMode::parse(m)?;
            if out.contains(&mode) {
                return Err(GapError::Config(format!("train.modes lists `{m}` twice")));
            }
            out.push(mode);
        }
        Ok(out)
    }

    pub fn config(&self, mode: TrainMode, seed: u64) -> Result<TrainConfig> {
        let optimizer = match self.optimizer.as_str() {
            "sgd" => OptimizerKind::Sgd,
            "adam" => OptimizerKind::Adam,
            other => return Err(GapError::Config(format!("unknown optimizer `{other}`"))),
        };
        let t = TrainConfig {
            mode,
            epochs: self.epochs,
            gap_epochs: self.gap_epochs,
            lambda: self.lambda,
            batch_size: self.batch_size,
            lr: self.lr,
            optimizer,
            seed,
            mask_prob: self.mask_prob,
            adjust_rule: AdjustRule::parse(&self.adjust_rule)?,
            per_sample: self.per_sample,
            scale_head_proprio: self.scale_head_proprio,
        };
        t.validate()?;
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub task: String,
    pub render_sigma: f64,
    pub max_steps: usize,
}

impl Default for EnvSection {
    fn default() -> Self {
        let d = EnvConfig::default();
        Self { task: d.task.as_str().into(), render_sigma: d.render_sigma, max_steps: d.max_steps }
    }
}

impl EnvSection {
    pub fn config(&self) -> Result<EnvConfig> {
        let task = TaskVariant::parse(&self.task)?;
        let cfg = EnvConfig { render_sigma: self.render_sigma, max_steps: self.max_steps, ..EnvConfig::with_task(task) };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub id_rollouts: usize,
    pub ood_rollouts: usize,
    /// Rollouts per window of the intervention sweep; 0 skips the stage.
    pub intervention_rollouts: usize,
    pub window_width: usize,
    pub stride: usize,
    /// `id` or `ood`.
    pub intervention_dist: String,
    /// Epochs of the linear probe; 0 skips the stage.
    pub probe_epochs: usize,
    pub probe_rollouts: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        let d = InterventionParams::default();
        Self {
            id_rollouts: 100,
            ood_rollouts: 100,
            intervention_rollouts: d.n_rollouts,
            window_width: d.window_width,
            stride: d.stride,
            intervention_dist: d.dist.as_str().into(),
            probe_epochs: 50,
            probe_rollouts: 100,
        }
    }
}

impl EvalSection {
    pub fn intervention(&self, seed: u64) -> Result<InterventionParams> {
        let dist = Distribution::parse(&self.intervention_dist).map_err(|e| GapError::Config(e.to_string()))?;
        Ok(InterventionParams {
            window_width: self.window_width,
            stride: self.stride,
            n_rollouts: self.intervention_rollouts,
            dist,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub paths: PathsSection,
    pub demos: DemoSection,
    pub segment: SegmentSection,
    pub indicator: IndicatorSection,
    pub policy: PolicySection,
    pub train: TrainSection,
    pub env: EnvSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            paths: PathsSection::default(),
            demos: DemoSection::default(),
            segment: SegmentSection::default(),
            indicator: IndicatorSection::default(),
            policy: PolicySection::default(),
            train: TrainSection::default(),
            env: EnvSection::default(),
            eval: EvalSection::default(),
        }
    }
}

/// Parses `value` as a TOML literal, falling back to a bare string.
fn parse_override_value(value: &str) -> toml::Value {
    let doc = format!("v = {value}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(value.into())),
        Err(_) => toml::Value::String(value.into()),
    }
}

/// Applies one `section.key=value` override to a parsed table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| GapError::Config(format!("override `{assignment}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(GapError::Config(format!("bad override key `{key}`")));
    }
    let mut node = table;
    for part in &path[..path.len() - 1] {
        let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| GapError::Config(format!("override `{key}`: `{part}` is not a section")))?;
    }
    node.insert(path[path.len() - 1].to_string(), parse_override_value(value.trim()));
    Ok(())
}

impl RunConfig {
    /// Parses TOML text, applies overrides in order (later ones win) and validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| GapError::Config(format!("config parse error: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig =
            toml::Value::Table(table).try_into().map_err(|e| GapError::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` (or the defaults when `None`), then applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| GapError::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every section so no stage fails on configuration later.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(GapError::Config("seed list is empty".into()));
        }
        if self.demos.count == 0 {
            return Err(GapError::Config("demos.count must be positive".into()));
        }
        if self.eval.id_rollouts == 0 || self.eval.ood_rollouts == 0 {
            return Err(GapError::Config("evaluation rollout counts must be positive".into()));
        }
        if self.eval.intervention_rollouts > 0 && (self.eval.window_width == 0 || self.eval.stride == 0) {
            return Err(GapError::Config("intervention window width and stride must be positive".into()));
        }
        if self.indicator.window == 0 || self.indicator.hidden_dim == 0 || self.indicator.batch_size == 0 {
            return Err(GapError::Config("indicator window, hidden_dim and batch_size must be positive".into()));
        }
        if !(self.indicator.lr > 0.0) {
            return Err(GapError::Config("indicator lr must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.indicator.w_low) {
            return Err(GapError::Config("indicator w_low must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.train.rho_fixed) {
            return Err(GapError::Config("train.rho_fixed must lie in [0, 1]".into()));
        }
        if !(self.train.smooth_sigma > 0.0) {
            return Err(GapError::Config("train.smooth_sigma must be positive".into()));
        }
        self.segment.params()?;
        self.env.config()?;
        self.eval.intervention(0)?;
        for mode in self.train.modes()? {
            self.train.config(mode, 0)?;
            self.policy.config(mode.architecture()).validate()?;
        }
        Ok(())
    }

    /// Cache root: explicit config, then the environment variable, then `<out_dir>/cache`.
    pub fn cache_root(&self) -> PathBuf {
        if !self.paths.cache_dir.as_os_str().is_empty() {
            return self.paths.cache_dir.clone();
        }
        match std::env::var_os(CACHE_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.paths.out_dir.join("cache"),
        }
    }

    /// Makes every path absolute against `base` so no stage depends on the working directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        let abs = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        self.paths.out_dir = abs(&self.paths.out_dir);
        let cache = self.cache_root();
        self.paths.cache_dir = abs(&cache);
    }

    /// Hash of everything except paths; it decides every number in the report.
    pub fn experiment_hash(&self) -> String {
        let mut c = self.clone();
        c.paths = PathsSection { out_dir: PathBuf::new(), cache_dir: PathBuf::new() };
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        assert_eq!(RunConfig::from_toml_str("", &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn flag_wins_over_file() {
        let cfg = RunConfig::from_toml_str("[train]\nlambda = 0.5\n", &["train.lambda=0.8".into()]).unwrap();
        assert_eq!(cfg.train.lambda, 0.8);
        let cfg = RunConfig::from_toml_str("", &["env.task=pick-rotate-place".into(), "seeds=[3]".into()]).unwrap();
        assert_eq!(cfg.env.task, "pick-rotate-place");
        assert_eq!(cfg.seeds, vec![3]);
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in ["seeds = []", "[train]\nmodes = [\"warp\"]", "[segment]\nbogus = 1", "[train]\ngap_epochs = 500"] {
            assert!(matches!(RunConfig::from_toml_str(bad, &[]), Err(GapError::Config(_)) | Err(GapError::Core(_))), "{bad}");
        }
        assert!(RunConfig::from_toml_str("", &["nokey".into()]).is_err());
    }

    #[test]
    fn hash_ignores_paths() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.paths.out_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.experiment_hash(), b.experiment_hash());
        b.train.lambda = 0.4;
        assert_ne!(a.experiment_hash(), b.experiment_hash());
    }
}
