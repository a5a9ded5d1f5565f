//! Trajectory data model and motion representation.
//!
//! A [`Trajectory`] is a run of proprioceptive states with the action taken
//! and the flattened visual observation seen at every timestep. Motions are
//! endpoint differences of states, so they are additive along a trajectory.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Add;

use crate::error::{arg_err, Error, Result};

/// Gripper position, optional orientation and opening degree at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct ProprioState {
    pub p: Vec<f64>,
    /// Empty when the task carries no orientation.
    pub theta: Vec<f64>,
    /// Opening degree in `[0, 1]`; 1 is fully open.
    pub g: f64,
}

impl ProprioState {
    pub fn new(p: Vec<f64>, theta: Vec<f64>, g: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&g) {
            return Err(arg_err!("opening degree {g} outside [0, 1]"));
        }
        Ok(Self { p, theta, g })
    }

    pub fn dim(&self) -> usize {
        self.p.len() + self.theta.len() + 1
    }

    /// `p ++ theta ++ [g]`.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.p);
        out.extend_from_slice(&self.theta);
        out.push(self.g);
    }
}

/// Change in position, orientation and opening between two timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    pub dp: Vec<f64>,
    pub dtheta: Vec<f64>,
    pub dg: f64,
}

impl Motion {
    pub fn zero(d_p: usize, d_theta: usize) -> Self {
        Self { dp: alloc::vec![0.0; d_p], dtheta: alloc::vec![0.0; d_theta], dg: 0.0 }
    }

    pub fn between(a: &ProprioState, b: &ProprioState) -> Self {
        Self {
            dp: b.p.iter().zip(&a.p).map(|(x, y)| x - y).collect(),
            dtheta: b.theta.iter().zip(&a.theta).map(|(x, y)| x - y).collect(),
            dg: b.g - a.g,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.dg == 0.0 && self.dp.iter().chain(&self.dtheta).all(|&x| x == 0.0)
    }

    /// `dp ++ dtheta ++ [dg]`, the recurrent indicator's input layout.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dp.len() + self.dtheta.len() + 1);
        v.extend_from_slice(&self.dp);
        v.extend_from_slice(&self.dtheta);
        v.push(self.dg);
        v
    }

    pub fn same_shape(&self, other: &Motion) -> bool {
        self.dp.len() == other.dp.len() && self.dtheta.len() == other.dtheta.len()
    }
}

impl Add for &Motion {
    type Output = Motion;

    fn add(self, rhs: &Motion) -> Motion {
        Motion {
            dp: self.dp.iter().zip(&rhs.dp).map(|(a, b)| a + b).collect(),
            dtheta: self.dtheta.iter().zip(&rhs.dtheta).map(|(a, b)| a + b).collect(),
            dg: self.dg + rhs.dg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Distribution {
    InDistribution,
    OutOfDistribution,
}

impl Distribution {
    pub fn as_str(self) -> &'static str {
        match self {
            Distribution::InDistribution => "id",
            Distribution::OutOfDistribution => "ood",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "id" => Ok(Distribution::InDistribution),
            "ood" => Ok(Distribution::OutOfDistribution),
            other => Err(arg_err!("unknown distribution tag `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajMeta {
    pub seed: u64,
    pub task: String,
    pub dist: Distribution,
    /// Ground-truth phase boundaries recorded by the scripted expert, empty otherwise.
    pub boundaries: Vec<usize>,
}

/// Dimensions shared by every trajectory of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Schema {
    pub d_p: usize,
    pub d_theta: usize,
    pub action_dim: usize,
    pub obs_dim: usize,
}

impl Schema {
    pub fn state_dim(&self) -> usize {
        self.d_p + self.d_theta + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<ProprioState>,
    actions: Vec<Vec<f64>>,
    obs: Vec<Vec<f64>>,
    pub meta: TrajMeta,
}

impl Trajectory {
    pub fn new(
        states: Vec<ProprioState>,
        actions: Vec<Vec<f64>>,
        obs: Vec<Vec<f64>>,
        meta: TrajMeta,
    ) -> Result<Self> {
        let n = states.len();
        if n < 2 {
            return Err(arg_err!("trajectory needs at least 2 states, got {n}"));
        }
        if actions.len() != n || obs.len() != n {
            return Err(arg_err!(
                "length mismatch: {n} states, {} actions, {} observations",
                actions.len(),
                obs.len()
            ));
        }
        let (dp, dth) = (states[0].p.len(), states[0].theta.len());
        let (da, dobs) = (actions[0].len(), obs[0].len());
        for t in 0..n {
            let s = &states[t];
            if s.p.len() != dp || s.theta.len() != dth {
                return Err(arg_err!("state {t} has inconsistent dimensions"));
            }
            if !(0.0..=1.0).contains(&s.g) {
                return Err(arg_err!("state {t}: opening degree {} outside [0, 1]", s.g));
            }
            if actions[t].len() != da || obs[t].len() != dobs {
                return Err(arg_err!("timestep {t} has inconsistent action/observation width"));
            }
        }
        Ok(Self { states, actions, obs, meta })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[ProprioState] {
        &self.states
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }

    pub fn obs(&self) -> &[Vec<f64>] {
        &self.obs
    }

    pub fn schema(&self) -> Schema {
        Schema {
            d_p: self.states[0].p.len(),
            d_theta: self.states[0].theta.len(),
            action_dim: self.actions[0].len(),
            obs_dim: self.obs[0].len(),
        }
    }

    /// Copy with every position, orientation and opening multiplied by `c`.
    ///
    /// Openings may leave `[0, 1]`, so the copy bypasses validation; it exists
    /// for scale-invariance checks of the segmentation distance.
    pub fn scaled_states(&self, c: f64) -> Trajectory {
        let states = self
            .states
            .iter()
            .map(|s| ProprioState {
                p: s.p.iter().map(|x| x * c).collect(),
                theta: s.theta.iter().map(|x| x * c).collect(),
                g: s.g * c,
            })
            .collect();
        Trajectory { states, actions: self.actions.clone(), obs: self.obs.clone(), meta: self.meta.clone() }
    }
}

/// Motion from timestep `i` to timestep `j`.
pub fn motion_between(traj: &Trajectory, i: usize, j: usize) -> Result<Motion> {
    let n = traj.len();
    if i > j || j >= n {
        return Err(arg_err!("motion_between({i}, {j}) out of range for length {n}"));
    }
    Ok(Motion::between(&traj.states[i], &traj.states[j]))
}

/// Adjacent motions `m_{i:i+1}` for `i` in `0..N-1`.
pub fn delta_sequence(traj: &Trajectory) -> Result<Vec<Motion>> {
    if traj.len() < 2 {
        return Err(arg_err!("delta sequence needs at least 2 states"));
    }
    Ok(traj.states.windows(2).map(|w| Motion::between(&w[0], &w[1])).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Schema,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(schema: Schema, trajectories: Vec<Trajectory>) -> Result<Self> {
        for (k, t) in trajectories.iter().enumerate() {
            if t.schema() != schema {
                return Err(Error::Format(alloc::format!(
                    "trajectory {k} does not conform to dataset schema"
                )));
            }
        }
        Ok(Self { schema, trajectories })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Random piecewise-constant motion for property tests and benchmarks.
///
/// The `n` states are split into `regimes` runs of roughly equal length; each
/// run draws its own step direction, orientation rate and gripper trend, and
/// every step gets a little jitter. Actions record the step that follows each
/// state (the last repeats), observations are a single zero. For each regime
/// after the first, `meta.boundaries` holds the first state reached by its
/// motion.
pub fn synthetic_trajectory(seed: u64, n: usize, d_p: usize, d_theta: usize, regimes: usize) -> Result<Trajectory> {
    use crate::rng::SeededRng;
    if n < 2 || regimes == 0 || regimes > n - 1 || d_p == 0 {
        return Err(arg_err!("synthetic trajectory needs n >= 2, d_p >= 1 and 1..n-1 regimes"));
    }
    let mut rng = SeededRng::new(seed);
    let steps = n - 1;
    let starts: Vec<usize> = (0..regimes).map(|r| r * steps / regimes).collect();
    let mut states = Vec::with_capacity(n);
    let mut cur = ProprioState { p: alloc::vec![0.5; d_p], theta: alloc::vec![0.0; d_theta], g: 0.5 };
    states.push(cur.clone());
    let mut actions = Vec::with_capacity(n);
    let (mut dir, mut rate, mut trend) = (Vec::new(), Vec::new(), 0.0);
    for t in 0..steps {
        if starts.contains(&t) {
            dir = (0..d_p).map(|_| rng.normal()).collect();
            rate = (0..d_theta).map(|_| rng.normal()).collect();
            trend = [-0.02, 0.0, 0.02][rng.below(3)];
        }
        let dp: Vec<f64> = dir.iter().map(|d| 0.02 * (d + 0.2 * rng.normal())).collect();
        let dth: Vec<f64> = rate.iter().map(|r| 0.02 * (r + 0.2 * rng.normal())).collect();
        let g = (cur.g + trend).clamp(0.0, 1.0);
        let mut a = dp.clone();
        a.extend_from_slice(&dth);
        a.push(g - cur.g);
        actions.push(a);
        cur.p.iter_mut().zip(&dp).for_each(|(x, d)| *x += d);
        cur.theta.iter_mut().zip(&dth).for_each(|(x, d)| *x += d);
        cur.g = g;
        states.push(cur.clone());
    }
    actions.push(actions[steps - 1].clone());
    let meta = TrajMeta {
        seed,
        task: String::from("synthetic"),
        dist: Distribution::InDistribution,
        boundaries: starts[1..].iter().map(|s| s + 1).collect(),
    };
    Trajectory::new(states, actions, alloc::vec![alloc::vec![0.0]; n], meta)
}
