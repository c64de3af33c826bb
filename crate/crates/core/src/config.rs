//! TOML run configuration.
//!
//! Every section is optional and falls back to the defaults shown by
//! `trajocc inspect --defaults`. Unknown keys are rejected.
//!
//! ```toml
//! seed = 0
//! name = "occ_FC"
//! cache_dir = "cache"
//!
//! [action_space]   # n_v, n_w, v_max, w_min, w_max
//! [primitives]     # horizon, samples
//! [grid]           # resolution, x_min .. z_max
//! [thresholds]     # priority, support
//! [weights]        # priority, support
//! [lidar]          # n_beams, fov, max_range, mount_x/y/z, range_jitter
//! [env]            # layout, n_stack, n_skip, dt, robot_radius, ...
//! [reward]         # mu_goal, mu_fail, alpha_target, alpha_step_pen, ...
//! [network]        # variant, hidden, channels, kernels, strides
//! [ppo]            # gamma, gae_lambda, clip_range, learning_rate, ...
//!
//! [train]
//! map = "T0S"              # single-map training for ppo.total_timesteps
//! checkpoint_every = 10    # updates between checkpoints
//! [[train.curriculum]]     # when present, replaces `map`
//! map = "T0S"
//! steps = 100000
//!
//! [eval]
//! maps = ["M1", "M2", "M3", "M4", "M5"]
//! episodes = 10
//! seed = 12345
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{Env, EnvConfig, EnvShared, RewardConfig};
use crate::error::{Error, Result};
use crate::kinematics::{ActionSpace, PrimitiveBank, DEFAULT_HORIZON, DEFAULT_SAMPLES};
use crate::learn::{NetworkSpec, PpoConfig, Stage, Variant};
use crate::voxel_grid::{ClassifiedGrid, GridSpec, Thresholds, VoxelWeights};
use crate::world::{load_map, LidarSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrimitiveConfig {
    pub horizon: f64,
    pub samples: usize,
}

impl Default for PrimitiveConfig {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            samples: DEFAULT_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub map: String,
    pub checkpoint_every: u64,
    pub curriculum: Vec<Stage>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            map: "T0S".into(),
            checkpoint_every: 10,
            curriculum: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub maps: Vec<String>,
    pub episodes: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            maps: crate::world::maps::TEST_MAPS.iter().map(|s| s.to_string()).collect(),
            episodes: 10,
            seed: 12345,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Method label used in benchmark tables.
    pub name: String,
    pub cache_dir: String,
    pub action_space: ActionSpace,
    pub primitives: PrimitiveConfig,
    pub grid: GridSpec,
    pub thresholds: Thresholds,
    pub weights: VoxelWeights,
    pub lidar: LidarSpec,
    pub env: EnvConfig,
    pub reward: RewardConfig,
    pub network: NetworkSpec,
    pub ppo: PpoConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            name: "occ_FC".into(),
            cache_dir: "cache".into(),
            action_space: ActionSpace::default(),
            primitives: PrimitiveConfig::default(),
            grid: GridSpec::default(),
            thresholds: Thresholds::default(),
            weights: VoxelWeights::default(),
            lidar: LidarSpec::default(),
            env: EnvConfig::default(),
            reward: RewardConfig::default(),
            network: NetworkSpec::default(),
            ppo: PpoConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(source: &str, text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: source.to_string(),
            reason: e.message().to_string() + &span_hint(text, e.span()),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)?;
        Ok((Self::from_toml(&path.display().to_string(), &text)?, text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<()> {
        self.action_space.validate()?;
        if !(self.primitives.horizon > 0.0 && self.primitives.horizon.is_finite()) {
            return Err(Error::config("primitives.horizon", "must be positive"));
        }
        if self.primitives.samples == 0 {
            return Err(Error::config("primitives.samples", "must be at least 1"));
        }
        self.grid.validate()?;
        self.thresholds.validate()?;
        self.weights.validate()?;
        self.lidar.validate()?;
        self.env.validate()?;
        self.reward.validate()?;
        self.network.validate()?;
        self.ppo.validate()?;
        if self.network.variant == Variant::Conv1d && self.env.layout == crate::env::Layout::Occ2d {
            return Err(Error::config("network.variant", "conv1d cannot take the occ2d layout; use conv2d"));
        }
        if self.network.variant == Variant::Conv2d && self.env.layout != crate::env::Layout::Occ2d {
            return Err(Error::config("network.variant", "conv2d needs the occ2d layout"));
        }
        for (i, st) in self.train.curriculum.iter().enumerate() {
            if st.steps == 0 {
                return Err(Error::config(format!("train.curriculum[{i}].steps"), "must be at least 1"));
            }
            load_map(&st.map).map_err(|e| Error::config(format!("train.curriculum[{i}].map"), e.to_string()))?;
        }
        if self.train.curriculum.is_empty() {
            load_map(&self.train.map).map_err(|e| Error::config("train.map", e.to_string()))?;
        }
        if self.train.checkpoint_every == 0 {
            return Err(Error::config("train.checkpoint_every", "must be at least 1"));
        }
        if self.eval.episodes == 0 {
            return Err(Error::config("eval.episodes", "must be at least 1"));
        }
        for (i, m) in self.eval.maps.iter().enumerate() {
            load_map(m).map_err(|e| Error::config(format!("eval.maps[{i}]"), e.to_string()))?;
        }
        Ok(())
    }

    /// Training stages: the explicit curriculum, or one stage on `train.map`.
    pub fn stages(&self) -> Vec<Stage> {
        if self.train.curriculum.is_empty() {
            vec![Stage {
                map: self.train.map.clone(),
                steps: self.ppo.total_timesteps,
            }]
        } else {
            self.train.curriculum.clone()
        }
    }

    pub fn bank(&self) -> Result<PrimitiveBank> {
        PrimitiveBank::build(self.action_space, self.primitives.horizon, self.primitives.samples)
    }

    /// Loads the classified grid from `cache_dir`, building it on a miss.
    pub fn classified_grid(&self, bank: &PrimitiveBank) -> Result<(ClassifiedGrid, bool)> {
        ClassifiedGrid::load_or_build(
            &PathBuf::from(&self.cache_dir),
            bank,
            self.grid,
            self.thresholds,
            self.weights,
        )
    }

    pub fn env_shared(&self) -> Result<EnvShared> {
        let bank = self.bank()?;
        let (grid, _) = self.classified_grid(&bank)?;
        Ok(EnvShared {
            bank: Arc::new(bank),
            grid: Arc::new(grid),
            lidar: self.lidar,
            reward: self.reward,
            env: self.env,
        })
    }
}

/// Builds an environment on a bundled map name or map file path.
pub fn make_env(shared: &EnvShared, map: &str, seed: u64) -> Result<Env> {
    Env::new(Arc::new(load_map(map)?), shared.clone(), seed)
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}
