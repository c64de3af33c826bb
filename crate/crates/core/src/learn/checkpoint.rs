//! Checkpoint container.
//!
//! ```text
//! magic "TOCK" | u32 version | u64 header length | JSON header
//! | params f32[n] | adam.m f32[n] | adam.v f32[n]
//! ```
//!
//! Integers and floats are little-endian. The header carries the network
//! spec, input shape, shape table, optimizer scalars, RNG position, step
//! counters and the verbatim run configuration.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{InputShape, NetworkSpec, ParamInfo, PolicyValueNet};
use super::ppo::Adam;
use super::train::{RngState, Trainer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TOCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub network: NetworkSpec,
    pub input: InputShape,
    pub n_actions: usize,
    pub param_count: usize,
    pub shape_table: Vec<ParamInfo>,
    pub adam_t: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub rng: RngState,
    pub seed: u64,
    pub timesteps: u64,
    pub updates: u64,
    pub episodes: u64,
    pub stage_index: usize,
    pub stage_steps: u64,
    /// Episodes in the learning-curve window as `(return, success)`.
    #[serde(default)]
    pub recent: Vec<(f64, bool)>,
    /// Run configuration text that produced the checkpoint.
    pub config: String,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f32>,
    pub adam_m: Vec<f32>,
    pub adam_v: Vec<f32>,
}

impl Checkpoint {
    pub fn from_trainer(t: &Trainer, config: &str) -> Self {
        let net = &t.net;
        Self {
            header: CheckpointHeader {
                network: net.spec().clone(),
                input: net.input_shape(),
                n_actions: net.n_actions(),
                param_count: net.param_count(),
                shape_table: net.shape_table().to_vec(),
                adam_t: t.adam.t,
                adam_beta1: t.adam.beta1,
                adam_beta2: t.adam.beta2,
                adam_eps: t.adam.eps,
                rng: RngState::capture(&t.rng),
                seed: t.seed,
                timesteps: t.timesteps,
                updates: t.updates,
                episodes: t.episodes,
                stage_index: t.stage_index,
                stage_steps: t.stage_steps,
                recent: t.recent.iter().copied().collect(),
                config: config.to_string(),
            },
            params: net.params().to_vec(),
            adam_m: t.adam.m.clone(),
            adam_v: t.adam.v.clone(),
        }
    }

    pub fn network(&self) -> Result<PolicyValueNet<f32>> {
        let h = &self.header;
        let net = PolicyValueNet::from_params(&h.network, h.input, h.n_actions, self.params.clone())?;
        if net.shape_table() != h.shape_table.as_slice() {
            return Err(Error::Shape("checkpoint shape table does not match its network spec".into()));
        }
        Ok(net)
    }

    /// Rebuilds the trainer state; the PPO settings come from the caller.
    pub fn into_trainer(self, ppo: super::ppo::PpoConfig) -> Result<Trainer> {
        let net = self.network()?;
        let h = self.header;
        let mut t = Trainer::new(net, ppo, h.seed)?;
        t.adam = Adam {
            m: self.adam_m,
            v: self.adam_v,
            t: h.adam_t,
            beta1: h.adam_beta1,
            beta2: h.adam_beta2,
            eps: h.adam_eps,
        };
        t.rng = h.rng.restore();
        t.timesteps = h.timesteps;
        t.updates = h.updates;
        t.episodes = h.episodes;
        t.stage_index = h.stage_index;
        t.stage_steps = h.stage_steps;
        t.recent = h.recent.into_iter().collect();
        Ok(t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header).map_err(|e| Error::Numeric(format!("checkpoint header: {e}")))?;
        let mut out = Vec::with_capacity(16 + header.len() + 12 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for block in [&self.params, &self.adam_m, &self.adam_v] {
            for x in block.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(source: &str, bytes: &[u8]) -> Result<Self> {
        let bad = |reason: &str| Error::parse(source, 0, reason.to_string());
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(bad(&format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(body).map_err(|e| bad(&format!("header: {e}")))?;
        let n = header.param_count;
        let rest = &bytes[16 + hlen..];
        if rest.len() != 12 * n {
            return Err(bad(&format!("expected {} payload bytes, found {}", 12 * n, rest.len())));
        }
        let read = |i: usize| -> Vec<f32> {
            rest[4 * n * i..4 * n * (i + 1)]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect()
        };
        Ok(Self {
            params: read(0),
            adam_m: read(1),
            adam_v: read(2),
            header,
        })
    }

    /// Writes via a temporary file and rename so an interrupted write never
    /// leaves a torn checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes()?)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&path.display().to_string(), &bytes)
    }
}
