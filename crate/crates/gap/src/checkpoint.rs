//! Binary parameter checkpoints.
//!
//! Layout: one JSON header line, then every tensor value followed by every
//! normalizer (`mean` then `std`) as little-endian f64 in header order, then
//! the SHA-256 of everything before it.

use std::path::Path;

use gap_core::indicator::IndicatorModel;
use gap_core::nnkit::{GroupTag, Normalizer, ParamGroup, Tensor};
use gap_core::policy::{Architecture, VPPolicy};
use gap_core::traj::Schema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PolicySection;
use crate::error::{GapError, Result};
use crate::fsutil::{read_bytes, write_atomic};

pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedNormalizer {
    pub name: String,
    pub normalizer: Normalizer,
}

/// Parameter groups plus everything needed to rebuild the model around them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub groups: Vec<ParamGroup>,
    pub normalizers: Vec<NamedNormalizer>,
    /// Free-form description of the model the groups belong to.
    pub config: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorDecl {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupDecl {
    name: String,
    tag: String,
    tensors: Vec<TensorDecl>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NormDecl {
    name: String,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    groups: Vec<GroupDecl>,
    normalizers: Vec<NormDecl>,
    config: serde_json::Value,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            version: CHECKPOINT_VERSION,
            groups: self
                .groups
                .iter()
                .map(|g| GroupDecl {
                    name: g.name.clone(),
                    tag: g.tag.as_str().into(),
                    tensors: g
                        .names()
                        .iter()
                        .zip(g.params())
                        .map(|(n, t)| TensorDecl { name: n.clone(), shape: t.shape().to_vec() })
                        .collect(),
                })
                .collect(),
            normalizers: self
                .normalizers
                .iter()
                .map(|n| NormDecl { name: n.name.clone(), dim: n.normalizer.mean.len() })
                .collect(),
            config: self.config.clone(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        let mut put = |xs: &[f64]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        for g in &self.groups {
            g.params().iter().for_each(|t| put(t.data()));
        }
        for n in &self.normalizers {
            put(&n.normalizer.mean);
            put(&n.normalizer.std);
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    /// `source` names the input in error messages.
    pub fn from_bytes(bytes: &[u8], source: &str) -> Result<Self> {
        let bad = |d: String| GapError::format(source, d);
        if bytes.len() < DIGEST_LEN {
            return Err(bad("truncated checkpoint".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch".into()));
        }
        let nl = body.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header".into()))?;
        let header: Header = serde_json::from_slice(&body[..nl]).map_err(|e| bad(format!("bad header: {e}")))?;
        if header.version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {} (expected {CHECKPOINT_VERSION})", header.version)));
        }
        let values = &body[nl + 1..];
        if values.len() % 8 != 0 {
            return Err(bad("value section is not a whole number of f64".into()));
        }
        let mut floats = values.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut take = |n: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = floats.by_ref().take(n).collect();
            if v.len() == n {
                Ok(v)
            } else {
                Err(bad("value section shorter than the header declares".into()))
            }
        };
        let mut groups = Vec::with_capacity(header.groups.len());
        for g in header.groups {
            let tag = GroupTag::parse(&g.tag).map_err(|e| bad(e.to_string()))?;
            let mut group = ParamGroup::new(&g.name, tag);
            for t in g.tensors {
                let n = t.shape.iter().product();
                let tensor = Tensor::from_vec(&t.shape, take(n)?).map_err(|e| bad(e.to_string()))?;
                group.push(&t.name, tensor);
            }
            groups.push(group);
        }
        let mut normalizers = Vec::with_capacity(header.normalizers.len());
        for n in header.normalizers {
            let mean = take(n.dim)?;
            let std = take(n.dim)?;
            normalizers.push(NamedNormalizer { name: n.name, normalizer: Normalizer { mean, std } });
        }
        if floats.next().is_some() {
            return Err(bad("trailing values after the declared tensors".into()));
        }
        Ok(Self { groups, normalizers, config: header.config })
    }

    pub fn normalizer(&self, name: &str) -> Option<&Normalizer> {
        self.normalizers.iter().find(|n| n.name == name).map(|n| &n.normalizer)
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    write_atomic(path, &ck.to_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&read_bytes(path)?, &path.display().to_string())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyEcho {
    kind: String,
    arch: String,
    d_p: usize,
    d_theta: usize,
    action_dim: usize,
    obs_dim: usize,
    policy: PolicySection,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndicatorEcho {
    kind: String,
    input_dim: usize,
    hidden_dim: usize,
}

fn grads_cleared(g: &ParamGroup) -> ParamGroup {
    let mut g = g.clone();
    g.zero_grads();
    g
}

pub fn policy_checkpoint(p: &VPPolicy) -> Checkpoint {
    let s = p.schema;
    let echo = PolicyEcho {
        kind: "policy".into(),
        arch: p.config.arch.as_str().into(),
        d_p: s.d_p,
        d_theta: s.d_theta,
        action_dim: s.action_dim,
        obs_dim: s.obs_dim,
        policy: PolicySection::from_config(&p.config),
    };
    Checkpoint {
        groups: p.groups().into_iter().map(grads_cleared).collect(),
        normalizers: vec![
            NamedNormalizer { name: "proprio".into(), normalizer: p.proprio_norm.clone() },
            NamedNormalizer { name: "action".into(), normalizer: p.action_norm.clone() },
        ],
        config: serde_json::to_value(echo).expect("echo serializes"),
    }
}

pub fn policy_from_checkpoint(ck: &Checkpoint, source: &str) -> Result<VPPolicy> {
    let bad = |d: String| GapError::format(source, d);
    let echo: PolicyEcho = serde_json::from_value(ck.config.clone()).map_err(|e| bad(format!("not a policy checkpoint: {e}")))?;
    if echo.kind != "policy" {
        return Err(bad(format!("expected a policy checkpoint, found `{}`", echo.kind)));
    }
    let arch = Architecture::parse(&echo.arch).map_err(|e| bad(e.to_string()))?;
    let schema = Schema { d_p: echo.d_p, d_theta: echo.d_theta, action_dim: echo.action_dim, obs_dim: echo.obs_dim };
    let mut p = VPPolicy::from_groups(echo.policy.config(arch), schema, ck.groups.clone())
        .map_err(|e| bad(e.to_string()))?;
    let pn = ck.normalizer("proprio").ok_or_else(|| bad("missing proprio normalizer".into()))?;
    let an = ck.normalizer("action").ok_or_else(|| bad("missing action normalizer".into()))?;
    p.set_normalizers(pn.clone(), an.clone()).map_err(|e| bad(e.to_string()))?;
    Ok(p)
}

pub fn indicator_checkpoint(m: &IndicatorModel) -> Checkpoint {
    let echo = IndicatorEcho { kind: "indicator".into(), input_dim: m.input_dim(), hidden_dim: m.lstm.hidden };
    Checkpoint {
        groups: vec![grads_cleared(&m.group)],
        normalizers: vec![NamedNormalizer { name: "delta".into(), normalizer: m.normalizer.clone() }],
        config: serde_json::to_value(echo).expect("echo serializes"),
    }
}

pub fn indicator_from_checkpoint(ck: &Checkpoint, source: &str) -> Result<IndicatorModel> {
    let bad = |d: String| GapError::format(source, d);
    let echo: IndicatorEcho =
        serde_json::from_value(ck.config.clone()).map_err(|e| bad(format!("not an indicator checkpoint: {e}")))?;
    if echo.kind != "indicator" || ck.groups.len() != 1 {
        return Err(bad("expected a single-group indicator checkpoint".into()));
    }
    let norm = ck.normalizer("delta").ok_or_else(|| bad("missing delta normalizer".into()))?;
    let m = IndicatorModel::from_parts(ck.groups[0].clone(), norm.clone()).map_err(|e| bad(e.to_string()))?;
    if m.input_dim() != echo.input_dim || m.lstm.hidden != echo.hidden_dim {
        return Err(bad("indicator shapes disagree with the header".into()));
    }
    Ok(m)
}
