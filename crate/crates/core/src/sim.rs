//! Toy 2-D pick-and-place environment with a scripted phase-structured expert.
//!
//! The scene is the unit square. The gripper starts at a fixed point; the
//! object spawns uniformly in a rectangle that differs between the
//! in-distribution and shifted settings. Proprioception never contains the
//! object position, only the rendered grid does.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, Error, Result};
use crate::math;
use crate::rng::{derive_seed, SeededRng};
use crate::traj::{Dataset, Distribution, ProprioState, Schema, TrajMeta, Trajectory};

/// Opening change per expert grasp or release step.
pub const GRIP_STEP: f64 = 0.25;
const AT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskVariant {
    /// Approach, grasp, transport, place.
    PickPlace,
    /// Adds a rotate-while-descending phase before placing.
    PickRotatePlace,
}

impl TaskVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskVariant::PickPlace => "pick-place",
            TaskVariant::PickRotatePlace => "pick-rotate-place",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pick-place" => Ok(TaskVariant::PickPlace),
            "pick-rotate-place" => Ok(TaskVariant::PickRotatePlace),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            TaskVariant::PickPlace => 3,
            TaskVariant::PickRotatePlace => 4,
        }
    }

    /// Orientation is a yaw angle embedded as a roll/pitch/yaw triple.
    pub fn d_theta(self) -> usize {
        match self {
            TaskVariant::PickPlace => 0,
            TaskVariant::PickRotatePlace => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    /// Open-interior overlap; rectangles sharing only an edge are disjoint.
    pub fn overlaps(&self, o: &Rect) -> bool {
        self.x0 < o.x1 && o.x0 < self.x1 && self.y0 < o.y1 && o.y0 < self.y1
    }

    pub fn sample(&self, rng: &mut SeededRng) -> [f64; 2] {
        [rng.range(self.x0, self.x1), rng.range(self.y0, self.y1)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub task: TaskVariant,
    pub gripper_start: [f64; 2],
    pub target: [f64; 2],
    pub id_spawn: Rect,
    pub ood_spawn: Rect,
    pub grasp_radius: f64,
    pub place_radius: f64,
    pub grid: usize,
    /// Blob width in grid cells.
    pub render_sigma: f64,
    pub max_steps: usize,
    pub action_scale: f64,
    /// Radians per unit of the angle action.
    pub angle_scale: f64,
    pub target_angle: f64,
    pub angle_tolerance: f64,
    /// Height above the target where the rotate-and-descend phase begins.
    pub descend_height: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            task: TaskVariant::PickPlace,
            gripper_start: [0.1, 0.1],
            target: [0.85, 0.85],
            id_spawn: Rect { x0: 0.45, x1: 0.85, y0: 0.15, y1: 0.4 },
            ood_spawn: Rect { x0: 0.45, x1: 0.85, y0: 0.4, y1: 0.55 },
            grasp_radius: 0.05,
            place_radius: 0.05,
            grid: 16,
            render_sigma: 4.0,
            max_steps: 80,
            action_scale: 0.05,
            angle_scale: core::f64::consts::PI / 12.0,
            target_angle: core::f64::consts::FRAC_PI_2,
            angle_tolerance: 0.15,
            descend_height: 0.15,
        }
    }
}

impl EnvConfig {
    pub fn with_task(task: TaskVariant) -> Self {
        Self { task, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.id_spawn.overlaps(&self.ood_spawn) {
            return bad("in-distribution and shifted spawn regions overlap");
        }
        if !(self.grasp_radius > 0.0 && self.place_radius > 0.0) {
            return bad("success radii must be positive");
        }
        if self.grid == 0 || !(self.render_sigma > 0.0) || self.max_steps == 0 || !(self.action_scale > 0.0) {
            return bad("grid, render_sigma, max_steps and action_scale must be positive");
        }
        for r in [&self.id_spawn, &self.ood_spawn] {
            if !(0.0 <= r.x0 && r.x0 < r.x1 && r.x1 <= 1.0 && 0.0 <= r.y0 && r.y0 < r.y1 && r.y1 <= 1.0) {
                return bad("spawn rectangles must be non-empty and inside the unit square");
            }
        }
        Ok(())
    }

    pub fn spawn(&self, dist: Distribution) -> &Rect {
        match dist {
            Distribution::InDistribution => &self.id_spawn,
            Distribution::OutOfDistribution => &self.ood_spawn,
        }
    }

    pub fn obs_dim(&self) -> usize {
        3 * self.grid * self.grid
    }

    pub fn schema(&self) -> Schema {
        Schema { d_p: 2, d_theta: self.task.d_theta(), action_dim: self.task.action_dim(), obs_dim: self.obs_dim() }
    }

    fn waypoint(&self) -> [f64; 2] {
        [self.target[0], (self.target[1] + self.descend_height).min(1.0)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Approach,
    Grasp,
    Transport,
    Rotate,
    Place,
    Done,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Approach => "approach",
            Phase::Grasp => "grasp",
            Phase::Transport => "transport",
            Phase::Rotate => "rotate",
            Phase::Place => "place",
            Phase::Done => "done",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub p: [f64; 2],
    pub angle: f64,
    pub g: f64,
    pub object: [f64; 2],
    pub held: bool,
    pub step: usize,
    pub phase: Phase,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub visual: Vec<f64>,
    pub proprio: ProprioState,
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    math::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]))
}

/// Grid cell `(row, col)` containing `pos`.
pub fn cell_of(pos: [f64; 2], grid: usize) -> (usize, usize) {
    let idx = |v: f64| ((v * grid as f64) as usize).min(grid - 1);
    (idx(pos[1]), idx(pos[0]))
}

fn splat(out: &mut [f64], grid: usize, pos: [f64; 2], amp: f64, sigma: f64) {
    let (cy, cx) = (pos[1] * grid as f64, pos[0] * grid as f64);
    let reach = (3.0 * sigma) as isize + 2;
    let (r0, c0) = (cy as isize, cx as isize);
    for r in (r0 - reach).max(0)..=(r0 + reach).min(grid as isize - 1) {
        for c in (c0 - reach).max(0)..=(c0 + reach).min(grid as isize - 1) {
            let dy = r as f64 + 0.5 - cy;
            let dx = c as f64 + 0.5 - cx;
            let d2 = dx * dx + dy * dy;
            if d2 <= 9.0 * sigma * sigma {
                let v = amp * math::exp(-d2 / (2.0 * sigma * sigma));
                let cell = &mut out[r as usize * grid + c as usize];
                *cell = cell.max(v);
            }
        }
    }
}

/// Channels `[object, target, gripper]`, each `grid x grid` row-major.
///
/// Gripper brightness encodes the opening; in the rotation task a dimmer
/// marker offset along the yaw direction encodes orientation.
pub fn render(cfg: &EnvConfig, s: &EnvState) -> Vec<f64> {
    let n = cfg.grid * cfg.grid;
    let mut out = vec![0.0; 3 * n];
    splat(&mut out[..n], cfg.grid, s.object, 1.0, cfg.render_sigma);
    splat(&mut out[n..2 * n], cfg.grid, cfg.target, 1.0, cfg.render_sigma);
    let gch = &mut out[2 * n..];
    splat(gch, cfg.grid, s.p, 0.5 + 0.5 * s.g, cfg.render_sigma);
    if cfg.task == TaskVariant::PickRotatePlace {
        let off = 1.5 / cfg.grid as f64;
        let m = [s.p[0] + off * math::cos(s.angle), s.p[1] + off * math::sin(s.angle)];
        splat(gch, cfg.grid, m, 0.3, cfg.render_sigma);
    }
    out
}

/// Cell with the largest value in `channel`, first in row-major order on ties.
pub fn argmax_cell(visual: &[f64], grid: usize, channel: usize) -> (usize, usize) {
    let n = grid * grid;
    let ch = &visual[channel * n..(channel + 1) * n];
    let mut best = 0;
    for (i, &v) in ch.iter().enumerate() {
        if v > ch[best] {
            best = i;
        }
    }
    (best / grid, best % grid)
}

pub fn proprio_of(cfg: &EnvConfig, s: &EnvState) -> ProprioState {
    let theta = if cfg.task.d_theta() > 0 { vec![0.0, 0.0, s.angle] } else { Vec::new() };
    ProprioState { p: s.p.to_vec(), theta, g: s.g }
}

pub fn observe(cfg: &EnvConfig, s: &EnvState) -> Observation {
    Observation { visual: render(cfg, s), proprio: proprio_of(cfg, s) }
}

pub fn reset(cfg: &EnvConfig, dist: Distribution, seed: u64) -> (EnvState, Observation) {
    let mut rng = SeededRng::new(seed);
    let object = cfg.spawn(dist).sample(&mut rng);
    let mut s = EnvState {
        p: cfg.gripper_start,
        angle: 0.0,
        g: 1.0,
        object,
        held: false,
        step: 0,
        phase: Phase::Approach,
        success: false,
    };
    s.phase = expert_phase(cfg, &s);
    let obs = observe(cfg, &s);
    (s, obs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub obs: Observation,
    pub done: bool,
    pub success: bool,
}

pub fn step(cfg: &EnvConfig, s: &EnvState, action: &[f64]) -> Result<StepOutcome> {
    let ad = cfg.task.action_dim();
    if action.len() != ad {
        return Err(arg_err!("action has {} components, task expects {ad}", action.len()));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(arg_err!("non-finite action {action:?}"));
    }
    let mut n = s.clone();
    n.step += 1;
    n.p = [
        (s.p[0] + cfg.action_scale * action[0]).clamp(0.0, 1.0),
        (s.p[1] + cfg.action_scale * action[1]).clamp(0.0, 1.0),
    ];
    if cfg.task == TaskVariant::PickRotatePlace {
        n.angle = s.angle + cfg.angle_scale * action[2];
    }
    n.g = (s.g + action[ad - 1]).clamp(0.0, 1.0);
    if n.held {
        n.object = n.p;
    }
    if !s.held && s.g >= 0.5 && n.g < 0.5 && dist2(n.p, s.object) <= cfg.grasp_radius {
        n.held = true;
        n.object = n.p;
    } else if s.held && s.g <= 0.5 && n.g > 0.5 {
        n.held = false;
        let placed = dist2(n.object, cfg.target) <= cfg.place_radius;
        let oriented = cfg.task == TaskVariant::PickPlace || (n.angle - cfg.target_angle).abs() <= cfg.angle_tolerance;
        n.success = placed && oriented;
    }
    n.phase = if n.success { Phase::Done } else { expert_phase(cfg, &n) };
    let done = n.success || n.step >= cfg.max_steps;
    let obs = observe(cfg, &n);
    let success = n.success;
    Ok(StepOutcome { state: n, obs, done, success })
}

/// Phase the scripted expert would be in at `s`.
pub fn expert_phase(cfg: &EnvConfig, s: &EnvState) -> Phase {
    if s.success {
        return Phase::Done;
    }
    if !s.held {
        return if dist2(s.p, s.object) > AT_EPS { Phase::Approach } else { Phase::Grasp };
    }
    let at_target = dist2(s.p, cfg.target) <= AT_EPS;
    let rotated = cfg.task == TaskVariant::PickPlace || (s.angle - cfg.target_angle).abs() <= AT_EPS;
    if at_target && rotated {
        return Phase::Place;
    }
    if s.g > 0.0 {
        return Phase::Grasp;
    }
    match cfg.task {
        TaskVariant::PickPlace => Phase::Transport,
        TaskVariant::PickRotatePlace => {
            if s.angle.abs() <= AT_EPS && dist2(s.p, cfg.waypoint()) > AT_EPS {
                Phase::Transport
            } else {
                Phase::Rotate
            }
        }
    }
}

/// Full-speed move toward `goal`, shortening the last step to land on it.
fn move_toward(p: [f64; 2], goal: [f64; 2], max_len: f64, scale: f64) -> [f64; 2] {
    let d = dist2(p, goal);
    if d <= AT_EPS {
        return [0.0, 0.0];
    }
    let len = d.min(max_len * scale);
    [(goal[0] - p[0]) / d * len / scale, (goal[1] - p[1]) / d * len / scale]
}

pub fn expert_policy(cfg: &EnvConfig, s: &EnvState) -> Vec<f64> {
    let (mut dp, mut dangle, mut dg) = ([0.0, 0.0], 0.0, 0.0);
    match expert_phase(cfg, s) {
        Phase::Approach => {
            dp = move_toward(s.p, s.object, 1.0, cfg.action_scale);
            if s.g < 1.0 {
                dg = GRIP_STEP;
            }
        }
        Phase::Grasp => dg = -GRIP_STEP,
        Phase::Transport => {
            let goal = if cfg.task == TaskVariant::PickRotatePlace { cfg.waypoint() } else { cfg.target };
            dp = move_toward(s.p, goal, 1.0, cfg.action_scale);
        }
        Phase::Rotate => {
            dp = move_toward(s.p, cfg.target, 0.5, cfg.action_scale);
            dangle = ((cfg.target_angle - s.angle) / cfg.angle_scale).clamp(-1.0, 1.0);
        }
        Phase::Place | Phase::Done => dg = GRIP_STEP,
    }
    match cfg.task {
        TaskVariant::PickPlace => vec![dp[0], dp[1], dg],
        TaskVariant::PickRotatePlace => vec![dp[0], dp[1], dangle, dg],
    }
}

/// Maps the current episode context to an action.
pub trait Controller {
    fn reset(&mut self, _episode_seed: u64) {}

    /// `history` holds every observation of the episode so far, the current one last.
    fn act(&mut self, cfg: &EnvConfig, state: &EnvState, history: &[Observation]) -> Result<Vec<f64>>;
}

/// The scripted expert as a controller.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpertController;

impl Controller for ExpertController {
    fn act(&mut self, cfg: &EnvConfig, state: &EnvState, _history: &[Observation]) -> Result<Vec<f64>> {
        Ok(expert_policy(cfg, state))
    }
}

/// Uniform actions in `[-1, 1]` per component.
#[derive(Debug, Clone)]
pub struct RandomController {
    rng: SeededRng,
}

impl RandomController {
    pub fn new(seed: u64) -> Self {
        Self { rng: SeededRng::new(seed) }
    }
}

impl Controller for RandomController {
    fn reset(&mut self, episode_seed: u64) {
        self.rng = SeededRng::with_stream(episode_seed, 7);
    }

    fn act(&mut self, cfg: &EnvConfig, _state: &EnvState, _history: &[Observation]) -> Result<Vec<f64>> {
        Ok((0..cfg.task.action_dim()).map(|_| self.rng.range(-1.0, 1.0)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub seed: u64,
    pub states: Vec<EnvState>,
    pub observations: Vec<Observation>,
    pub actions: Vec<Vec<f64>>,
    pub success: bool,
}

impl Episode {
    pub fn steps(&self) -> usize {
        self.actions.len()
    }
}

/// Rolls out `ctrl`; `override_ctrl` replaces its actions for steps in `window`.
pub fn rollout_with(
    cfg: &EnvConfig,
    dist: Distribution,
    seed: u64,
    ctrl: &mut dyn Controller,
    mut override_ctrl: Option<(&mut dyn Controller, core::ops::Range<usize>)>,
) -> Result<Episode> {
    let (mut s, obs) = reset(cfg, dist, seed);
    ctrl.reset(seed);
    if let Some((o, _)) = override_ctrl.as_mut() {
        o.reset(seed);
    }
    let mut ep = Episode { seed, states: vec![s.clone()], observations: vec![obs], actions: Vec::new(), success: false };
    loop {
        let t = s.step;
        let a = match override_ctrl.as_mut() {
            Some((o, w)) if w.contains(&t) => o.act(cfg, &s, &ep.observations)?,
            _ => ctrl.act(cfg, &s, &ep.observations)?,
        };
        let out = step(cfg, &s, &a)?;
        ep.actions.push(a);
        s = out.state;
        ep.states.push(s.clone());
        ep.observations.push(out.obs);
        if out.done {
            ep.success = out.success;
            return Ok(ep);
        }
    }
}

pub fn rollout(cfg: &EnvConfig, dist: Distribution, seed: u64, ctrl: &mut dyn Controller) -> Result<Episode> {
    rollout_with(cfg, dist, seed, ctrl, None)
}

/// State index after each expert phase switch: if the expert starts acting in
/// a new phase at state `s`, the boundary is `s + 1`, the first state reached
/// by the new motion.
pub fn expert_boundaries(ep: &Episode) -> Vec<usize> {
    let n = ep.states.len();
    (1..n)
        .filter(|&t| ep.states[t].phase != ep.states[t - 1].phase && ep.states[t].phase != Phase::Done)
        .map(|t| t + 1)
        .filter(|&b| b < n)
        .collect()
}

/// Converts a successful expert episode to a trajectory; the terminal state's
/// action is the expert's continued opening.
pub fn episode_to_trajectory(cfg: &EnvConfig, ep: &Episode, dist: Distribution) -> Result<Trajectory> {
    let states: Vec<ProprioState> = ep.observations.iter().map(|o| o.proprio.clone()).collect();
    let mut actions = ep.actions.clone();
    let last = ep.states.last().ok_or_else(|| Error::Internal("empty episode".into()))?;
    actions.push(expert_policy(cfg, last));
    let obs = ep.observations.iter().map(|o| o.visual.clone()).collect();
    let meta = TrajMeta { seed: ep.seed, task: cfg.task.as_str().to_string(), dist, boundaries: expert_boundaries(ep) };
    Trajectory::new(states, actions, obs, meta)
}

pub fn expert_trajectory(cfg: &EnvConfig, dist: Distribution, seed: u64) -> Result<Trajectory> {
    let ep = rollout(cfg, dist, seed, &mut ExpertController)?;
    if !ep.success {
        return Err(Error::Internal(format!("expert failed on seed {seed} ({}) after {} steps", dist.as_str(), ep.steps())));
    }
    episode_to_trajectory(cfg, &ep, dist)
}

/// `n` expert demonstrations; episode `k` uses `derive_seed(seed, k)`.
pub fn gen_demos(cfg: &EnvConfig, n: usize, seed: u64, dist: Distribution) -> Result<Dataset> {
    if n == 0 {
        return Err(arg_err!("need at least one demonstration"));
    }
    cfg.validate()?;
    let trajs = (0..n).map(|k| expert_trajectory(cfg, dist, derive_seed(seed, k as u64))).collect::<Result<Vec<_>>>()?;
    Dataset::new(cfg.schema(), trajs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub seed: u64,
    pub dist: Distribution,
    pub success: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub success_rate: f64,
    pub episodes: Vec<EpisodeLog>,
}

/// Seed used for evaluation episode `k`; disjoint from demo seeds by stream.
pub fn eval_seed(seed: u64, k: usize) -> u64 {
    derive_seed(derive_seed(seed, 0x5EED_E7A1), k as u64)
}

pub fn evaluate(ctrl: &mut dyn Controller, cfg: &EnvConfig, n: usize, dist: Distribution, seed: u64) -> Result<EvalReport> {
    if n == 0 {
        return Err(arg_err!("need at least one rollout"));
    }
    let mut episodes = Vec::with_capacity(n);
    for k in 0..n {
        let es = eval_seed(seed, k);
        let ep = rollout(cfg, dist, es, ctrl)?;
        episodes.push(EpisodeLog { seed: es, dist, success: ep.success, steps: ep.steps() });
    }
    let wins = episodes.iter().filter(|e| e.success).count();
    Ok(EvalReport { success_rate: wins as f64 / n as f64, episodes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    /// Overlaps an expert phase boundary.
    Transition,
    /// Lies inside the expert episode without touching a boundary.
    Consistent,
    /// Extends past the end of the expert episode.
    Beyond,
}

impl WindowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WindowKind::Transition => "transition",
            WindowKind::Consistent => "consistent",
            WindowKind::Beyond => "beyond",
        }
    }
}

/// Classifies `[start, start + width)` against the expert's boundaries for
/// the same episode seed.
pub fn classify_window(start: usize, width: usize, boundaries: &[usize], expert_len: usize) -> WindowKind {
    if boundaries.iter().any(|&b| b >= start && b < start + width) {
        WindowKind::Transition
    } else if start + width <= expert_len {
        WindowKind::Consistent
    } else {
        WindowKind::Beyond
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub start: usize,
    pub success_rate: f64,
    pub transition_episodes: usize,
    pub consistent_episodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionReport {
    pub baseline_rate: f64,
    pub windows: Vec<WindowResult>,
    /// Mean per-episode success drop over (episode, window) pairs of each kind.
    pub transition_drop: f64,
    pub consistent_drop: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterventionParams {
    pub window_width: usize,
    pub stride: usize,
    pub n_rollouts: usize,
    pub dist: Distribution,
    pub seed: u64,
}

impl Default for InterventionParams {
    fn default() -> Self {
        Self { window_width: 10, stride: 5, n_rollouts: 100, dist: Distribution::InDistribution, seed: 0 }
    }
}

/// Runs `base` while `alt` takes over for one window, for every window start
/// on the stride grid up to `max_steps`.
pub fn intervention_experiment(
    base: &mut dyn Controller,
    alt: &mut dyn Controller,
    cfg: &EnvConfig,
    params: &InterventionParams,
) -> Result<InterventionReport> {
    if params.window_width == 0 || params.stride == 0 || params.n_rollouts == 0 {
        return Err(arg_err!("window width, stride and rollout count must be positive"));
    }
    let seeds: Vec<u64> = (0..params.n_rollouts).map(|k| eval_seed(params.seed, k)).collect();
    let mut base_ok = Vec::with_capacity(seeds.len());
    let mut expert_info = Vec::with_capacity(seeds.len());
    for &s in &seeds {
        base_ok.push(rollout(cfg, params.dist, s, base)?.success);
        let ex = rollout(cfg, params.dist, s, &mut ExpertController)?;
        expert_info.push((expert_boundaries(&ex), ex.states.len()));
    }
    let baseline_rate = base_ok.iter().filter(|&&b| b).count() as f64 / seeds.len() as f64;
    let (mut tr_sum, mut tr_n, mut co_sum, mut co_n) = (0.0, 0usize, 0.0, 0usize);
    let mut windows = Vec::new();
    let mut start = 0;
    while start < cfg.max_steps {
        let mut wins = 0usize;
        let (mut te, mut ce) = (0usize, 0usize);
        for (k, &s) in seeds.iter().enumerate() {
            let ep = rollout_with(cfg, params.dist, s, base, Some((alt, start..start + params.window_width)))?;
            wins += ep.success as usize;
            let drop = base_ok[k] as u8 as f64 - ep.success as u8 as f64;
            let (b, len) = &expert_info[k];
            match classify_window(start, params.window_width, b, *len) {
                WindowKind::Transition => {
                    tr_sum += drop;
                    tr_n += 1;
                    te += 1;
                }
                WindowKind::Consistent => {
                    co_sum += drop;
                    co_n += 1;
                    ce += 1;
                }
                WindowKind::Beyond => {}
            }
        }
        windows.push(WindowResult {
            start,
            success_rate: wins as f64 / seeds.len() as f64,
            transition_episodes: te,
            consistent_episodes: ce,
        });
        start += params.stride;
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(InterventionReport {
        baseline_rate,
        windows,
        transition_drop: mean(tr_sum, tr_n),
        consistent_drop: mean(co_sum, co_n),
    })
}
