//! Motion-consistency distance, phase cost and change-point detection.
//!
//! A segmentation of a length-`N` trajectory is a strictly increasing set of
//! change indices `I ⊂ {1..N-1}`. The phases are the disjoint state blocks
//! `[0, i1-1], [i1, i2-1], ..., [ik, N-1]`; a block `[t1, t2]` is scored by
//! summing the distance between its overall motion `m_{t1:t2}` and each
//! adjacent motion `m_{i:i+1}` for `i` in `t1..t2`. The step that crosses a
//! change index belongs to no phase.
//!
//! [`segment_dp`] finds the optimal index set by dynamic programming over a
//! prefix-sum cost table (O(1) per block), [`segment_bruteforce`] enumerates
//! every feasible set and scores it by direct summation. Both break
//! near-ties (within [`TIE_TOLERANCE`]) the same way: fewer change points
//! first, then the lexicographically smallest index set.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, Error, Result};
use crate::math::{cosine, dot, norm, sign};
use crate::rng::SeededRng;
use crate::traj::{Motion, Trajectory};

/// Objectives closer than this are considered tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Default per-change-point penalty. Separating a stationary gripper phase only
/// gains `beta` per step kept inside it, and a three-state release phase keeps
/// two, so the penalty must stay below `2 * beta`.
pub const DEFAULT_PENALTY: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMode {
    /// Position/orientation cosines plus gripper-sign agreement.
    Gap,
    /// `1 - cos` between the mean phase action and each action.
    Cotpc,
}

impl DistanceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DistanceMode::Gap => "gap",
            DistanceMode::Cotpc => "cotpc",
        }
    }
}

/// How many change points the objective may use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChangeBudget {
    /// Minimize total cost plus `penalty * |I|`.
    Penalty(f64),
    /// Minimize total cost with exactly this many change points.
    Count(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegParams {
    pub alpha: f64,
    pub beta: f64,
    pub budget: ChangeBudget,
    pub min_phase_len: usize,
    pub mode: DistanceMode,
    /// Add `+beta` on gripper-sign mismatch instead of contributing nothing.
    pub mismatch_penalty: bool,
}

impl Default for SegParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 2e-3,
            budget: ChangeBudget::Penalty(DEFAULT_PENALTY),
            min_phase_len: 3,
            mode: DistanceMode::Gap,
            mismatch_penalty: false,
        }
    }
}

impl SegParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) || !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(arg_err!("alpha and beta must be finite and non-negative"));
        }
        if let ChangeBudget::Penalty(g) = self.budget {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(arg_err!("penalty must be finite and non-negative"));
            }
        }
        if self.min_phase_len < 2 {
            return Err(arg_err!("min_phase_len must be at least 2"));
        }
        Ok(())
    }

    fn penalty(&self) -> f64 {
        match self.budget {
            ChangeBudget::Penalty(g) => g,
            ChangeBudget::Count(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub change_indices: Vec<usize>,
    pub phase_costs: Vec<f64>,
    /// Sum of phase costs, plus `penalty * |I|` in penalized mode.
    pub total_cost: f64,
}

impl SegmentationResult {
    /// Inclusive `[start, end]` state ranges of each phase.
    pub fn phases(&self, n: usize) -> Vec<(usize, usize)> {
        phase_bounds(&self.change_indices, n)
    }
}

fn phase_bounds(indices: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(indices.len() + 1);
    let mut start = 0;
    for &i in indices {
        out.push((start, i - 1));
        start = i;
    }
    out.push((start, n - 1));
    out
}

/// Distance between a phase motion and one adjacent motion.
///
/// `d = -cos(dp) - alpha * cos(dtheta) - beta * [sgn(dg_phase) == sgn(dg_step)]`,
/// with `cos(0, x) = 0`, `sgn(0) = 0`, and the orientation term dropped when the
/// motions carry no orientation.
pub fn motion_distance(phase: &Motion, step: &Motion, params: &SegParams) -> Result<f64> {
    if !phase.same_shape(step) {
        return Err(arg_err!("phase and step motions differ in dimensionality"));
    }
    let mut d = -cosine(&phase.dp, &step.dp);
    if !phase.dtheta.is_empty() {
        d -= params.alpha * cosine(&phase.dtheta, &step.dtheta);
    }
    if sign(phase.dg) == sign(step.dg) {
        d -= params.beta;
    } else if params.mismatch_penalty {
        d += params.beta;
    }
    Ok(d)
}

/// `1 - cos(a1, a2)` with the zero-norm convention `cos = 0`.
pub fn cotpc_distance(a1: &[f64], a2: &[f64]) -> Result<f64> {
    if a1.len() != a2.len() {
        return Err(arg_err!("action dimensions differ: {} vs {}", a1.len(), a2.len()));
    }
    Ok(1.0 - cosine(a1, a2))
}

fn check_block(n: usize, t1: usize, t2: usize, min_len: usize) -> Result<()> {
    if t2 >= n || t1 >= t2 {
        return Err(arg_err!("phase [{t1}, {t2}] out of range for length {n}"));
    }
    if t2 - t1 + 1 < min_len {
        return Err(arg_err!("phase [{t1}, {t2}] shorter than min_phase_len {min_len}"));
    }
    Ok(())
}

/// Motion inconsistency of the phase `[t1, t2]`, by direct summation.
pub fn phase_cost(traj: &Trajectory, t1: usize, t2: usize, params: &SegParams) -> Result<f64> {
    check_block(traj.len(), t1, t2, params.min_phase_len)?;
    let states = traj.states();
    match params.mode {
        DistanceMode::Gap => {
            let phase = Motion::between(&states[t1], &states[t2]);
            let mut c = 0.0;
            for i in t1..t2 {
                let step = Motion::between(&states[i], &states[i + 1]);
                c += motion_distance(&phase, &step, params)?;
            }
            Ok(c)
        }
        DistanceMode::Cotpc => {
            let actions = traj.actions();
            let len = (t2 - t1) as f64;
            let mut mean = vec![0.0; actions[t1].len()];
            for a in &actions[t1..t2] {
                for (m, x) in mean.iter_mut().zip(a) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= len);
            let mut c = 0.0;
            for a in &actions[t1..t2] {
                c += cotpc_distance(&mean, a)?;
            }
            Ok(c)
        }
    }
}

/// Objective of an arbitrary index set, recomputed from direct phase costs.
pub fn objective(traj: &Trajectory, indices: &[usize], params: &SegParams) -> Result<SegmentationResult> {
    let n = traj.len();
    if indices.windows(2).any(|w| w[0] >= w[1]) || indices.iter().any(|&i| i == 0 || i >= n) {
        return Err(arg_err!("change indices must be strictly increasing within 1..{n}"));
    }
    let mut phase_costs = Vec::with_capacity(indices.len() + 1);
    for (s, e) in phase_bounds(indices, n) {
        phase_costs.push(phase_cost(traj, s, e, params)?);
    }
    let mut total = 0.0;
    for c in &phase_costs {
        total += c;
    }
    total += params.penalty() * indices.len() as f64;
    Ok(SegmentationResult { change_indices: indices.to_vec(), phase_costs, total_cost: total })
}

/// Prefix sums that give any block cost in O(1).
struct CostTable<'a> {
    traj: &'a Trajectory,
    params: SegParams,
    /// Prefix sums of unit step vectors: positions (gap) or actions (cotpc).
    unit_p: Vec<Vec<f64>>,
    unit_theta: Vec<Vec<f64>>,
    /// Prefix counts of gripper-step signs: [negative, zero, positive].
    signs: Vec<[usize; 3]>,
    /// Prefix sums of raw actions (cotpc).
    raw_actions: Vec<Vec<f64>>,
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n == 0.0 {
        vec![0.0; v.len()]
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

fn prefix(rows: impl Iterator<Item = Vec<f64>>, dim: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; dim]];
    for r in rows {
        let last = out.last().unwrap();
        let next = last.iter().zip(&r).map(|(a, b)| a + b).collect();
        out.push(next);
    }
    out
}

impl<'a> CostTable<'a> {
    fn new(traj: &'a Trajectory, params: &SegParams) -> Self {
        let states = traj.states();
        let n = states.len();
        let schema = traj.schema();
        let mut table = CostTable {
            traj,
            params: *params,
            unit_p: Vec::new(),
            unit_theta: Vec::new(),
            signs: Vec::new(),
            raw_actions: Vec::new(),
        };
        match params.mode {
            DistanceMode::Gap => {
                let steps: Vec<Motion> = (0..n - 1).map(|i| Motion::between(&states[i], &states[i + 1])).collect();
                table.unit_p = prefix(steps.iter().map(|m| unit(&m.dp)), schema.d_p);
                table.unit_theta = prefix(steps.iter().map(|m| unit(&m.dtheta)), schema.d_theta);
                let mut acc = [0usize; 3];
                table.signs.push(acc);
                for m in &steps {
                    acc[(sign(m.dg) + 1) as usize] += 1;
                    table.signs.push(acc);
                }
            }
            DistanceMode::Cotpc => {
                let actions = &traj.actions()[..n - 1];
                table.unit_p = prefix(actions.iter().map(|a| unit(a)), schema.action_dim);
                table.raw_actions = prefix(actions.iter().cloned(), schema.action_dim);
            }
        }
        table
    }

    fn block(&self, s: usize, e: usize) -> f64 {
        let len = (e - s) as f64;
        let diff = |p: &Vec<Vec<f64>>| -> Vec<f64> { p[e].iter().zip(&p[s]).map(|(a, b)| a - b).collect() };
        match self.params.mode {
            DistanceMode::Gap => {
                let states = self.traj.states();
                let phase = Motion::between(&states[s], &states[e]);
                let mut c = 0.0;
                let np = norm(&phase.dp);
                if np > 0.0 {
                    c -= dot(&phase.dp, &diff(&self.unit_p)) / np;
                }
                if !phase.dtheta.is_empty() {
                    let nt = norm(&phase.dtheta);
                    if nt > 0.0 {
                        c -= self.params.alpha * dot(&phase.dtheta, &diff(&self.unit_theta)) / nt;
                    }
                }
                let k = (sign(phase.dg) + 1) as usize;
                let matched = (self.signs[e][k] - self.signs[s][k]) as f64;
                c -= self.params.beta * matched;
                if self.params.mismatch_penalty {
                    c += self.params.beta * (len - matched);
                }
                c
            }
            DistanceMode::Cotpc => {
                let sum = diff(&self.raw_actions);
                let ns = norm(&sum);
                if ns == 0.0 {
                    len
                } else {
                    // mean = sum / len has the same direction as sum
                    len - dot(&sum, &diff(&self.unit_p)) / ns
                }
            }
        }
    }
}

fn max_changes(n: usize, min_len: usize) -> usize {
    n / min_len - 1
}

/// Globally optimal change-point set by dynamic programming, O(N^2 K).
pub fn segment_dp(traj: &Trajectory, params: &SegParams) -> Result<SegmentationResult> {
    params.validate()?;
    let n = traj.len();
    let m = params.min_phase_len;
    if n < m {
        return Err(arg_err!("trajectory of length {n} shorter than min_phase_len {m}"));
    }
    let k_max = match params.budget {
        ChangeBudget::Count(k) => {
            if n < (k + 1) * m {
                return Err(arg_err!("{k} change points infeasible for length {n} with min_phase_len {m}"));
            }
            k
        }
        ChangeBudget::Penalty(_) => max_changes(n, m),
    };
    let table = CostTable::new(traj, params);

    // Block costs for every feasible block [s, e].
    let mut cost = vec![f64::INFINITY; n * n];
    for s in 0..n {
        for e in (s + m - 1)..n {
            cost[s * n + e] = table.block(s, e);
        }
    }
    let c = |s: usize, e: usize| cost[s * n + e];

    // best[k][s]: min cost of splitting [s, N-1] into k+1 blocks.
    let mut best = vec![vec![f64::INFINITY; n + 1]; k_max + 1];
    for s in 0..n {
        if n - s >= m {
            best[0][s] = c(s, n - 1);
        }
    }
    for k in 1..=k_max {
        for s in 0..n {
            if n - s < (k + 1) * m {
                continue;
            }
            let mut v = f64::INFINITY;
            for i in (s + m)..=(n - k * m) {
                let cand = c(s, i - 1) + best[k - 1][i];
                if cand < v {
                    v = cand;
                }
            }
            best[k][s] = v;
        }
    }

    let gamma = params.penalty();
    let (k_lo, k_hi) = match params.budget {
        ChangeBudget::Count(k) => (k, k),
        ChangeBudget::Penalty(_) => (0, k_max),
    };
    let totals: Vec<(usize, f64)> =
        (k_lo..=k_hi).map(|k| (k, best[k][0] + gamma * k as f64)).filter(|(_, t)| t.is_finite()).collect();
    let optimum = totals.iter().map(|&(_, t)| t).fold(f64::INFINITY, f64::min);
    let threshold = optimum + TIE_TOLERANCE;
    let k_star = totals
        .iter()
        .find(|&&(_, t)| t <= threshold)
        .map(|&(k, _)| k)
        .ok_or_else(|| Error::Internal("no feasible segmentation".into()))?;

    // Smallest next index that still admits a completion within the threshold.
    let budget = threshold - gamma * k_star as f64;
    let mut indices = Vec::with_capacity(k_star);
    let mut acc = 0.0;
    let mut s = 0;
    for remaining in (1..=k_star).rev() {
        let mut chosen = None;
        for i in (s + m)..=(n - remaining * m) {
            let tail = best[remaining - 1][i];
            if tail.is_finite() && acc + c(s, i - 1) + tail <= budget {
                chosen = Some(i);
                break;
            }
        }
        let i = chosen.ok_or_else(|| Error::Internal("segmentation backtrack failed".into()))?;
        acc += c(s, i - 1);
        indices.push(i);
        s = i;
    }
    objective(traj, &indices, params)
}

/// Exhaustive oracle for [`segment_dp`]; refuses trajectories longer than 16.
pub fn segment_bruteforce(traj: &Trajectory, params: &SegParams) -> Result<SegmentationResult> {
    params.validate()?;
    let n = traj.len();
    if n > 16 {
        return Err(Error::Refused(alloc::format!("brute force limited to N <= 16, got {n}")));
    }
    let m = params.min_phase_len;
    let mut candidates: Vec<SegmentationResult> = Vec::new();
    for mask in 0u32..(1u32 << (n - 1)) {
        // bit b set <=> change index b + 1
        let indices: Vec<usize> = (0..n - 1).filter(|b| mask & (1 << b) != 0).map(|b| b + 1).collect();
        if let ChangeBudget::Count(k) = params.budget {
            if indices.len() != k {
                continue;
            }
        }
        if phase_bounds(&indices, n).iter().any(|&(s, e)| e + 1 - s < m) {
            continue;
        }
        candidates.push(objective(traj, &indices, params)?);
    }
    let optimum = candidates.iter().map(|r| r.total_cost).fold(f64::INFINITY, f64::min);
    candidates
        .into_iter()
        .filter(|r| r.total_cost <= optimum + TIE_TOLERANCE)
        .min_by(|a, b| {
            a.change_indices
                .len()
                .cmp(&b.change_indices.len())
                .then_with(|| a.change_indices.cmp(&b.change_indices))
        })
        .ok_or_else(|| arg_err!("no feasible segmentation for length {n}"))
}

/// Perturbs change indices: each index picks a random direction, then keeps
/// stepping one timestep that way with probability `p_shift` per step.
/// Results are clamped to `[1, n-1]`, sorted and deduplicated.
pub fn inject_index_noise(indices: &[usize], n: usize, p_shift: f64, seed: u64) -> Vec<usize> {
    let mut rng = SeededRng::new(seed);
    let hi = n.saturating_sub(1).max(1) as i64;
    let mut out: Vec<usize> = indices
        .iter()
        .map(|&i| {
            let dir: i64 = if rng.bernoulli(0.5) { 1 } else { -1 };
            let mut x = i as i64;
            while rng.bernoulli(p_shift) {
                x += dir;
            }
            x.clamp(1, hi) as usize
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// True when `found` and `truth` have the same size and, in sorted order,
/// each detected index lies within `tol` steps of its recorded counterpart.
pub fn boundaries_recovered(found: &[usize], truth: &[usize], tol: usize) -> bool {
    found.len() == truth.len() && found.iter().zip(truth).all(|(&f, &t)| f.abs_diff(t) <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traj::{Distribution, ProprioState, TrajMeta};
    use alloc::vec;

    fn motion(dp: &[f64], dtheta: &[f64], dg: f64) -> Motion {
        Motion { dp: dp.to_vec(), dtheta: dtheta.to_vec(), dg }
    }

    fn planar(points: &[(f64, f64)], g: &[f64]) -> Trajectory {
        let states: Vec<_> =
            points.iter().zip(g).map(|(&(x, y), &g)| ProprioState::new(vec![x, y], vec![], g).unwrap()).collect();
        let n = states.len();
        Trajectory::new(
            states,
            vec![vec![0.0, 0.0, 0.0]; n],
            vec![vec![0.0]; n],
            TrajMeta { seed: 0, task: "t".into(), dist: Distribution::InDistribution, boundaries: vec![] },
        )
        .unwrap()
    }

    #[test]
    fn identical_motions_hit_lower_bound() {
        let m = motion(&[0.3, -0.1, 0.2], &[0.1, 0.0, 0.4], 0.5);
        let d = motion_distance(&m, &m, &SegParams::default()).unwrap();
        assert!((d - (-2.002)).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_with_sign_mismatch_is_zero() {
        let a = motion(&[1.0, 0.0], &[], 0.2);
        let b = motion(&[0.0, 3.0], &[], -0.1);
        assert_eq!(motion_distance(&a, &b, &SegParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn mismatch_flag_adds_beta() {
        let a = motion(&[1.0, 0.0], &[], 0.2);
        let b = motion(&[0.0, 3.0], &[], -0.1);
        let p = SegParams { mismatch_penalty: true, ..SegParams::default() };
        assert_eq!(motion_distance(&a, &b, &p).unwrap(), 2e-3);
    }

    #[test]
    fn zero_gripper_steps_match() {
        let a = motion(&[1.0, 0.0], &[], 0.0);
        let b = motion(&[1.0, 0.0], &[], 0.0);
        assert!((motion_distance(&a, &b, &SegParams::default()).unwrap() + 1.002).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = motion(&[1.0, 0.0], &[], 0.0);
        let b = motion(&[1.0, 0.0, 0.0], &[], 0.0);
        assert!(motion_distance(&a, &b, &SegParams::default()).is_err());
        assert!(cotpc_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cotpc_reference_values() {
        assert!(cotpc_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap().abs() < 1e-15);
        assert_eq!(cotpc_distance(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), 1.0);
        assert!((cotpc_distance(&[1.0, -2.0], &[-1.0, 2.0]).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(cotpc_distance(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 1.0);
    }

    #[test]
    fn straight_phase_cost() {
        // constant velocity, opening monotonically decreasing
        let pts: Vec<_> = (0..8).map(|t| (0.1 * t as f64, 0.05 * t as f64)).collect();
        let g: Vec<_> = (0..8).map(|t| 1.0 - 0.1 * t as f64).collect();
        let traj = planar(&pts, &g);
        let p = SegParams::default();
        let c = phase_cost(&traj, 1, 6, &p).unwrap();
        assert!((c + (1.0 + p.beta) * 5.0).abs() < 1e-12);
    }

    #[test]
    fn minimal_phase_has_single_term() {
        let traj = planar(&[(0.0, 0.0), (0.2, 0.1), (0.5, 0.0), (0.6, 0.6)], &[1.0, 0.9, 0.9, 0.9]);
        let p = SegParams { min_phase_len: 2, ..SegParams::default() };
        let c = phase_cost(&traj, 1, 2, &p).unwrap();
        let m = motion_between_states(&traj, 1, 2);
        assert_eq!(c, motion_distance(&m, &m, &p).unwrap());
        assert!(phase_cost(&traj, 1, 1, &p).is_err());
        let p3 = SegParams::default();
        assert!(phase_cost(&traj, 1, 2, &p3).is_err());
    }

    fn motion_between_states(t: &Trajectory, i: usize, j: usize) -> Motion {
        crate::traj::motion_between(t, i, j).unwrap()
    }

    #[test]
    fn right_then_up_splits_at_ten() {
        let mut pts = Vec::new();
        for t in 0..=10 {
            pts.push((t as f64, 0.0));
        }
        for t in 1..=10 {
            pts.push((10.0, t as f64));
        }
        let g = vec![1.0; pts.len()];
        let traj = planar(&pts, &g);
        let p = SegParams { budget: ChangeBudget::Count(1), ..SegParams::default() };
        assert_eq!(segment_dp(&traj, &p).unwrap().change_indices, vec![10]);
    }

    #[test]
    fn constant_motion_has_no_change_points() {
        let pts: Vec<_> = (0..20).map(|t| (0.01 * t as f64, 0.02 * t as f64)).collect();
        let traj = planar(&pts, &[0.5; 20]);
        let r = segment_dp(&traj, &SegParams::default()).unwrap();
        assert!(r.change_indices.is_empty());
    }

    #[test]
    fn infeasible_count_rejected() {
        let pts: Vec<_> = (0..7).map(|t| (t as f64, 0.0)).collect();
        let traj = planar(&pts, &[1.0; 7]);
        let p = SegParams { budget: ChangeBudget::Count(2), ..SegParams::default() };
        assert!(matches!(segment_dp(&traj, &p), Err(Error::Argument(_))));
    }

    #[test]
    fn bruteforce_forced_and_refused() {
        let traj = planar(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)], &[1.0; 4]);
        let p = SegParams { budget: ChangeBudget::Count(1), min_phase_len: 2, ..SegParams::default() };
        assert_eq!(segment_bruteforce(&traj, &p).unwrap().change_indices, vec![2]);

        let pts: Vec<_> = (0..17).map(|t| (t as f64, 0.0)).collect();
        let long = planar(&pts, &[1.0; 17]);
        assert!(matches!(segment_bruteforce(&long, &SegParams::default()), Err(Error::Refused(_))));
    }

    #[test]
    fn recovery_needs_matching_counts() {
        assert!(boundaries_recovered(&[4, 10], &[5, 12], 2));
        assert!(!boundaries_recovered(&[4, 10], &[5, 13], 2));
        assert!(!boundaries_recovered(&[4], &[5, 12], 2));
        assert!(boundaries_recovered(&[], &[], 0));
    }

    #[test]
    fn zero_shift_probability_keeps_indices() {
        assert_eq!(inject_index_noise(&[3, 9, 14], 20, 0.0, 42), vec![3, 9, 14]);
    }

    #[test]
    fn noise_clamps_and_dedups() {
        for seed in 0..200 {
            let out = inject_index_noise(&[1, 2, 18], 20, 0.9, seed);
            assert!(out.iter().all(|&i| (1..=19).contains(&i)));
            assert!(out.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let p = SegParams { min_phase_len: 1, ..SegParams::default() };
        assert!(p.validate().is_err());
        let p = SegParams { budget: ChangeBudget::Penalty(-1.0), ..SegParams::default() };
        assert!(p.validate().is_err());
    }
}
