//! Checkpoint file: magic, `u64` LE header length, JSON header, then the
//! parameter blob as little-endian `f64`. Every number that must survive
//! bit-exactly lives in the blob; the header holds shapes and configs.

use std::path::Path;

use pushrl_core::nn::{param_count, Activation, Mlp};
use pushrl_core::planner::{ActionBox, Ensemble, MpcConfig, Normalizer, StateEncoding};
use pushrl_core::sac::{PolicyNet, SacAgent, SacConfig, TwinCritic};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PUSHRLCK";
pub const CHECKPOINT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Mb,
    Mf,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Mb => "mb",
            AgentKind::Mf => "mf",
        }
    }
}

/// One contiguous slice of the blob. `activation` is set for networks and
/// absent for plain vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub activation: Option<Activation>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub schema_version: u32,
    pub kind: AgentKind,
    pub tensors: Vec<TensorEntry>,
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub blob: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MbMeta {
    encoding: StateEncoding,
    action_dim: usize,
    mpc: MpcConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MfMeta {
    sac: SacConfig,
    bounds: ActionBox,
}

/// Planner model: the ensemble and the controller settings it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct MbModel {
    pub ensemble: Ensemble,
    pub mpc: MpcConfig,
}

// Held once per process; boxing would only add indirection.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Mb(MbModel),
    /// Optimizer moments are not stored; a restored agent resumes with fresh
    /// Adam state.
    Mf(SacAgent),
}

impl TrainedModel {
    pub fn kind(&self) -> AgentKind {
        match self {
            TrainedModel::Mb(_) => AgentKind::Mb,
            TrainedModel::Mf(_) => AgentKind::Mf,
        }
    }
}

struct Writer {
    tensors: Vec<TensorEntry>,
    blob: Vec<f64>,
}

impl Writer {
    fn push(&mut self, name: String, dims: Vec<usize>, activation: Option<Activation>, data: &[f64]) {
        self.tensors.push(TensorEntry { name, dims, activation, offset: self.blob.len(), len: data.len() });
        self.blob.extend_from_slice(data);
    }

    fn net(&mut self, name: String, m: &Mlp) {
        self.push(name, m.dims().to_vec(), Some(m.activation()), m.params());
    }

    fn vector(&mut self, name: &str, v: &[f64]) {
        self.push(name.to_string(), vec![v.len()], None, v);
    }
}

struct Reader<'a> {
    ck: &'a Checkpoint,
}

impl Reader<'_> {
    fn entry(&self, name: &str) -> Result<(&TensorEntry, &[f64])> {
        let e = self
            .ck
            .header
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::format("checkpoint", format!("missing tensor `{name}`")))?;
        let data = e
            .offset
            .checked_add(e.len)
            .and_then(|end| self.ck.blob.get(e.offset..end))
            .ok_or_else(|| Error::format("checkpoint", format!("tensor `{name}` outside the blob")))?;
        Ok((e, data))
    }

    fn net(&self, name: &str) -> Result<Mlp> {
        let (e, data) = self.entry(name)?;
        let act = e.activation.ok_or_else(|| Error::format("checkpoint", format!("`{name}` is not a network")))?;
        if param_count(&e.dims) != e.len {
            return Err(Error::format("checkpoint", format!("`{name}` length disagrees with its dims")));
        }
        Ok(Mlp::from_params(&e.dims, act, data.to_vec())?)
    }

    fn vector(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.entry(name)?.1.to_vec())
    }
}

fn meta<T: for<'de> Deserialize<'de>>(v: &serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| Error::format("checkpoint header", e))
}

impl Checkpoint {
    pub fn from_model(model: &TrainedModel) -> Self {
        let mut w = Writer { tensors: Vec::new(), blob: Vec::new() };
        let meta = match model {
            TrainedModel::Mb(m) => {
                let e = &m.ensemble;
                for (i, member) in e.members().iter().enumerate() {
                    w.net(format!("member.{i}"), member);
                }
                w.vector("input_norm.mean", &e.input_normalizer().mean);
                w.vector("input_norm.std", &e.input_normalizer().std);
                w.vector("output_norm.mean", &e.output_normalizer().mean);
                w.vector("output_norm.std", &e.output_normalizer().std);
                serde_json::to_value(MbMeta { encoding: e.encoding().clone(), action_dim: e.action_dim(), mpc: m.mpc.clone() })
            }
            TrainedModel::Mf(a) => {
                w.net("policy".into(), a.policy().net());
                let c = a.critics();
                for i in 0..2 {
                    w.net(format!("q.{i}"), &c.q[i]);
                    w.net(format!("target.{i}"), &c.target[i]);
                }
                w.vector("log_alpha", &[a.log_alpha()]);
                serde_json::to_value(MfMeta { sac: a.config().clone(), bounds: a.policy().bounds().clone() })
            }
        }
        .expect("checkpoint metadata serializes");
        let header = Header { schema_version: CHECKPOINT_SCHEMA, kind: model.kind(), tensors: w.tensors, meta };
        Self { header, blob: w.blob }
    }

    pub fn to_model(&self) -> Result<TrainedModel> {
        if self.header.schema_version != CHECKPOINT_SCHEMA {
            return Err(Error::format("checkpoint", format!("schema {} (expected {CHECKPOINT_SCHEMA})", self.header.schema_version)));
        }
        let r = Reader { ck: self };
        match self.header.kind {
            AgentKind::Mb => {
                let m: MbMeta = meta(&self.header.meta)?;
                let count = self.header.tensors.iter().filter(|t| t.name.starts_with("member.")).count();
                let members = (0..count).map(|i| r.net(&format!("member.{i}"))).collect::<Result<Vec<_>>>()?;
                let input = Normalizer { mean: r.vector("input_norm.mean")?, std: r.vector("input_norm.std")? };
                let output = Normalizer { mean: r.vector("output_norm.mean")?, std: r.vector("output_norm.std")? };
                let ensemble = Ensemble::from_parts(m.encoding, m.action_dim, members, input, output)?;
                Ok(TrainedModel::Mb(MbModel { ensemble, mpc: m.mpc }))
            }
            AgentKind::Mf => {
                let m: MfMeta = meta(&self.header.meta)?;
                let policy = PolicyNet::from_parts(r.net("policy")?, m.bounds)?;
                let critics = TwinCritic::from_parts([r.net("q.0")?, r.net("q.1")?], [r.net("target.0")?, r.net("target.1")?])?;
                let log_alpha = r.vector("log_alpha")?;
                let [la] = log_alpha[..] else {
                    return Err(Error::format("checkpoint", "log_alpha must hold one value"));
                };
                Ok(TrainedModel::Mf(SacAgent::from_parts(m.sac, policy, critics, Some(la))?))
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + 8 * self.blob.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.blob {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |r: &str| Error::format("checkpoint", r);
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic bytes"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let end = usize::try_from(len)
            .ok()
            .and_then(|l| l.checked_add(16))
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("header length past the end"))?;
        let de = &mut serde_json::Deserializer::from_slice(&bytes[16..end]);
        let header: Header = serde_path_to_error::deserialize(de).map_err(|e| Error::format("checkpoint header", e))?;
        let rest = &bytes[end..];
        if !rest.len().is_multiple_of(8) {
            return Err(bad("blob is not a whole number of f64 values"));
        }
        let blob = rest.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(Self { header, blob })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    Checkpoint::from_model(model).save(path)
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    Checkpoint::load(path)?.to_model()
}
