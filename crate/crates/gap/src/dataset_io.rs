//! Line-delimited demonstration files.
//!
//! Line 1 is a header `{version, D_p, D_theta, action_dim, obs_dim}`; every
//! following line is one timestep `{traj_id, t, p, theta, g, action, obs}`.
//! `theta` is omitted when the schema has no orientation. The `t = 0` record
//! of each trajectory also carries `meta` (seed, task, dist, boundaries).

use std::fs;
use std::path::Path;

use gap_core::traj::{Dataset, Distribution, ProprioState, Schema, TrajMeta, Trajectory};
use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};
use crate::fsutil::write_atomic;

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    #[serde(rename = "D_p")]
    d_p: usize,
    #[serde(rename = "D_theta")]
    d_theta: usize,
    action_dim: usize,
    obs_dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaRecord {
    seed: u64,
    task: String,
    dist: String,
    boundaries: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct RecordOut<'a> {
    traj_id: usize,
    t: usize,
    p: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    theta: Option<&'a [f64]>,
    g: f64,
    action: &'a [f64],
    obs: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<MetaRecord>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordIn {
    traj_id: usize,
    t: usize,
    p: Vec<f64>,
    theta: Option<Vec<f64>>,
    g: f64,
    action: Vec<f64>,
    obs: Vec<f64>,
    meta: Option<MetaRecord>,
}

fn json_line<T: Serialize>(out: &mut String, value: &T) {
    out.push_str(&serde_json::to_string(value).expect("plain data serializes"));
    out.push('\n');
}

/// Serializes `ds` exactly as [`save_dataset`] writes it.
pub fn dataset_to_string(ds: &Dataset) -> String {
    let s = ds.schema;
    let mut out = String::new();
    let header =
        Header { version: DATASET_VERSION, d_p: s.d_p, d_theta: s.d_theta, action_dim: s.action_dim, obs_dim: s.obs_dim };
    json_line(&mut out, &header);
    for (id, traj) in ds.trajectories.iter().enumerate() {
        for t in 0..traj.len() {
            let st = &traj.states()[t];
            let meta = (t == 0).then(|| MetaRecord {
                seed: traj.meta.seed,
                task: traj.meta.task.clone(),
                dist: traj.meta.dist.as_str().to_string(),
                boundaries: traj.meta.boundaries.clone(),
            });
            let rec = RecordOut {
                traj_id: id,
                t,
                p: &st.p,
                theta: (s.d_theta > 0).then_some(st.theta.as_slice()),
                g: st.g,
                action: &traj.actions()[t],
                obs: &traj.obs()[t],
                meta,
            };
            json_line(&mut out, &rec);
        }
    }
    out
}

struct Pending {
    states: Vec<ProprioState>,
    actions: Vec<Vec<f64>>,
    obs: Vec<Vec<f64>>,
    meta: TrajMeta,
}

impl Pending {
    fn finish(self, source: &str, line: usize) -> Result<Trajectory> {
        Trajectory::new(self.states, self.actions, self.obs, self.meta)
            .map_err(|e| GapError::format(source, format!("trajectory ending at line {line}: {e}")))
    }
}

/// Parses a demonstration file body; `source` names it in error messages.
pub fn dataset_from_str(text: &str, source: &str) -> Result<Dataset> {
    let bad = |line: usize, detail: String| GapError::format(source, format!("line {line}: {detail}"));
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
    let header: Header = serde_json::from_str(first).map_err(|e| bad(1, format!("bad header: {e}")))?;
    if header.version != DATASET_VERSION {
        return Err(bad(1, format!("unsupported version {} (expected {DATASET_VERSION})", header.version)));
    }
    let schema = Schema { d_p: header.d_p, d_theta: header.d_theta, action_dim: header.action_dim, obs_dim: header.obs_dim };
    let mut trajectories = Vec::new();
    let mut current: Option<Pending> = None;
    let mut last_line = 1;
    for (no, line) in lines {
        last_line = no;
        let rec: RecordIn = serde_json::from_str(line).map_err(|e| bad(no, e.to_string()))?;
        let theta = rec.theta.unwrap_or_default();
        if rec.p.len() != schema.d_p
            || theta.len() != schema.d_theta
            || rec.action.len() != schema.action_dim
            || rec.obs.len() != schema.obs_dim
        {
            return Err(bad(no, "record widths do not match the header schema".into()));
        }
        if rec.t == 0 {
            let expected = trajectories.len() + current.is_some() as usize;
            if rec.traj_id != expected {
                return Err(bad(no, format!("expected traj_id {expected}, found {}", rec.traj_id)));
            }
            if let Some(p) = current.take() {
                trajectories.push(p.finish(source, no - 1)?);
            }
            let m = rec.meta.ok_or_else(|| bad(no, "first record of a trajectory lacks `meta`".into()))?;
            let dist = Distribution::parse(&m.dist).map_err(|e| bad(no, e.to_string()))?;
            current = Some(Pending {
                states: Vec::new(),
                actions: Vec::new(),
                obs: Vec::new(),
                meta: TrajMeta { seed: m.seed, task: m.task, dist, boundaries: m.boundaries },
            });
        } else if rec.meta.is_some() {
            return Err(bad(no, "`meta` is only allowed on t = 0".into()));
        }
        let p = current.as_mut().ok_or_else(|| bad(no, "record before the first t = 0".into()))?;
        if rec.traj_id != trajectories.len() || rec.t != p.states.len() {
            return Err(bad(no, format!("out-of-order record (traj_id {}, t {})", rec.traj_id, rec.t)));
        }
        p.states.push(ProprioState::new(rec.p, theta, rec.g).map_err(|e| bad(no, e.to_string()))?);
        p.actions.push(rec.action);
        p.obs.push(rec.obs);
    }
    if let Some(p) = current.take() {
        trajectories.push(p.finish(source, last_line)?);
    }
    Dataset::new(schema, trajectories).map_err(|e| GapError::format(source, e.to_string()))
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, dataset_to_string(ds).as_bytes())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| GapError::io(path, e))?;
    dataset_from_str(&text, &path.display().to_string())
}
