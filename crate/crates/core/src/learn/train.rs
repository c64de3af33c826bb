use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::RolloutBuffer;
use super::net::{NetworkSpec, PolicyValueNet, Tape};
use super::policy::{argmax, sample_action};
use super::ppo::{ppo_update, Adam, LossStats, PpoConfig};
use crate::env::{Env, Outcome};
use crate::error::{Error, Result};

/// Episodes averaged into each learning-curve row.
pub const CURVE_WINDOW: usize = 100;

/// Mixes a run seed with a tag into an independent stream seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One curriculum stage: a map name (or path) and its step budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub map: String,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub stage: usize,
    pub map: String,
    pub timestep: u64,
    pub stage_timestep: u64,
    pub episodes: u64,
    /// Mean return over the last [`CURVE_WINDOW`] finished episodes.
    pub mean_reward: f64,
    pub success_rate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Serializable position of the trainer's random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// PPO learner state that persists across curriculum stages.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub net: PolicyValueNet<f32>,
    pub adam: Adam<f32>,
    pub ppo: PpoConfig,
    pub rng: ChaCha8Rng,
    pub seed: u64,
    pub timesteps: u64,
    pub updates: u64,
    pub episodes: u64,
    pub stage_index: usize,
    pub stage_steps: u64,
    pub curve: Vec<CurveRow>,
    pub(crate) recent: VecDeque<(f64, bool)>,
}

impl Trainer {
    pub fn new(net: PolicyValueNet<f32>, ppo: PpoConfig, seed: u64) -> Result<Self> {
        ppo.validate()?;
        let n = net.param_count();
        Ok(Self {
            net,
            adam: Adam::new(n),
            ppo,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 1)),
            seed,
            timesteps: 0,
            updates: 0,
            episodes: 0,
            stage_index: 0,
            stage_steps: 0,
            curve: Vec::new(),
            recent: VecDeque::new(),
        })
    }

    /// Freshly initialized network for `spec` sized for `env`.
    pub fn for_env(env: &Env, spec: &NetworkSpec, ppo: PpoConfig, seed: u64) -> Result<Self> {
        let (c, h, w) = env.shared().block_shape();
        let input = super::net::InputShape {
            channels: c,
            height: h,
            width: w,
            extra: crate::env::EXTRA_INPUTS,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
        let net = PolicyValueNet::new(spec, input, env.action_count(), &mut rng)?;
        Self::new(net, ppo, seed)
    }

    fn record_episode(&mut self, ret: f64, success: bool) {
        self.episodes += 1;
        if self.recent.len() == CURVE_WINDOW {
            self.recent.pop_front();
        }
        self.recent.push_back((ret, success));
    }

    fn window_means(&self) -> (f64, f64) {
        if self.recent.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        let n = self.recent.len() as f64;
        let r = self.recent.iter().map(|x| x.0).sum::<f64>() / n;
        let s = self.recent.iter().filter(|x| x.1).count() as f64 / n;
        (r, s)
    }

    /// Trains on `env` until this stage has consumed `steps` transitions.
    /// The final rollout is shortened so the budget is met exactly.
    /// `on_update` runs after every optimization step.
    pub fn train_stage(
        &mut self,
        env: &mut Env,
        stage: usize,
        steps: u64,
        on_update: &mut dyn FnMut(&Trainer) -> Result<()>,
    ) -> Result<()> {
        if stage != self.stage_index {
            self.stage_index = stage;
            self.stage_steps = 0;
        }
        let obs_len = self.net.input_shape().len();
        let scale = env.target_scale();
        let mut buf = RolloutBuffer::new(obs_len, self.ppo.n_rollout);
        let mut tape = Tape::default();
        let mut input = Vec::with_capacity(obs_len);
        let mut logits = Vec::with_capacity(self.net.n_actions());
        let map_name = env.map().name.clone();
        let mut obs = env.reset(None)?;
        let mut ep_return = 0.0;

        while self.stage_steps < steps {
            let n = (self.ppo.n_rollout as u64).min(steps - self.stage_steps) as usize;
            buf.clear();
            for _ in 0..n {
                obs.write_input(&mut input, scale);
                self.net.forward(&input, 1, &mut tape)?;
                logits.clear();
                logits.extend(tape.logits.iter().map(|&z| z as f64));
                let (a, lp) = sample_action(&logits, &mut self.rng)?;
                let value = tape.values[0] as f64;
                let r = env.step(a)?;
                ep_return += r.reward;
                buf.push(&input, a, lp, r.reward, value, r.done);
                if r.done {
                    self.record_episode(ep_return, r.outcome == Outcome::Goal);
                    ep_return = 0.0;
                    obs = env.reset(None)?;
                } else {
                    obs = r.observation;
                }
            }
            obs.write_input(&mut input, scale);
            self.net.forward(&input, 1, &mut tape)?;
            buf.finish(tape.values[0] as f64, self.ppo.gamma, self.ppo.gae_lambda);
            let stats = ppo_update(&mut self.net, &mut self.adam, &buf, &self.ppo, &mut self.rng)?;
            self.timesteps += n as u64;
            self.stage_steps += n as u64;
            self.updates += 1;
            self.push_curve(stage, &map_name, &stats);
            on_update(self)?;
        }
        Ok(())
    }

    fn push_curve(&mut self, stage: usize, map: &str, s: &LossStats) {
        let (mean_reward, success_rate) = self.window_means();
        self.curve.push(CurveRow {
            stage,
            map: map.to_string(),
            timestep: self.timesteps,
            stage_timestep: self.stage_steps,
            episodes: self.episodes,
            mean_reward,
            success_rate,
            policy_loss: s.policy_loss,
            value_loss: s.value_loss,
            entropy: s.entropy,
            approx_kl: s.approx_kl,
            clip_fraction: s.clip_fraction,
        });
    }

    /// Runs the stages in order, carrying parameters and optimizer state
    /// across them. Stages before `self.stage_index` are skipped, which is
    /// how an interrupted run resumes. `make_env(map, seed)` builds the
    /// environment for a stage.
    pub fn train_curriculum(
        &mut self,
        stages: &[Stage],
        make_env: &mut dyn FnMut(&str, u64) -> Result<Env>,
        on_update: &mut dyn FnMut(&Trainer) -> Result<()>,
        on_stage: &mut dyn FnMut(&Trainer, usize) -> Result<()>,
    ) -> Result<()> {
        if stages.is_empty() {
            return Err(Error::config("curriculum.stages", "needs at least one stage"));
        }
        for (i, st) in stages.iter().enumerate() {
            if i < self.stage_index {
                continue;
            }
            // reseeded from the global step count so a resumed stage does
            // not replay the episodes it already saw
            let mut env = make_env(&st.map, derive_seed(self.seed, 1000 + i as u64 + (self.timesteps << 8)))?;
            self.train_stage(&mut env, i, st.steps, on_update)?;
            on_stage(self, i)?;
        }
        self.stage_index = stages.len();
        self.stage_steps = 0;
        Ok(())
    }

    pub fn curve_csv(&self) -> String {
        curve_to_csv(&self.curve)
    }
}

pub const CURVE_HEADER: &str =
    "stage,map,timestep,stage_timestep,episodes,mean_reward,success_rate,policy_loss,value_loss,entropy,approx_kl,clip_fraction";

pub fn curve_to_csv(rows: &[CurveRow]) -> String {
    use std::fmt::Write as _;
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.stage,
            r.map,
            r.timestep,
            r.stage_timestep,
            r.episodes,
            r.mean_reward,
            r.success_rate,
            r.policy_loss,
            r.value_loss,
            r.entropy,
            r.approx_kl,
            r.clip_fraction
        );
    }
    s
}

pub fn curve_from_csv(text: &str) -> Result<Vec<CurveRow>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let perr = |what: &str| Error::parse("learning curve", i + 2, format!("bad {what}"));
        let get = |j: usize| rec.get(j).ok_or_else(|| perr("column count"));
        let f = |j: usize, what: &str| get(j)?.parse::<f64>().map_err(|_| perr(what));
        let u = |j: usize, what: &str| get(j)?.parse::<u64>().map_err(|_| perr(what));
        rows.push(CurveRow {
            stage: u(0, "stage")? as usize,
            map: get(1)?.to_string(),
            timestep: u(2, "timestep")?,
            stage_timestep: u(3, "stage_timestep")?,
            episodes: u(4, "episodes")?,
            mean_reward: f(5, "mean_reward")?,
            success_rate: f(6, "success_rate")?,
            policy_loss: f(7, "policy_loss")?,
            value_loss: f(8, "value_loss")?,
            entropy: f(9, "entropy")?,
            approx_kl: f(10, "approx_kl")?,
            clip_fraction: f(11, "clip_fraction")?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalPolicy {
    /// Argmax of the logits.
    Greedy,
    /// Uniformly random actions, as a baseline.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map: String,
    pub episodes: usize,
    pub successes: usize,
    pub collisions: usize,
    pub timeouts: usize,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    /// Mean episode duration in seconds over successful episodes; NaN if none.
    pub mean_time_to_goal: f64,
    pub mean_return: f64,
}

/// Runs `episodes` episodes; episode `e` is reset with a seed derived from
/// `seed` and `e`, so reports are reproducible and comparable across policies.
pub fn evaluate(
    net: &PolicyValueNet<f32>,
    env: &mut Env,
    episodes: usize,
    seed: u64,
    policy: EvalPolicy,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::Usage("evaluation needs at least one episode".into()));
    }
    if net.input_shape().len() != env.shared().input_len() || net.n_actions() != env.action_count() {
        return Err(Error::Shape(format!(
            "network takes {} inputs / {} actions, environment produces {} / {}",
            net.input_shape().len(),
            net.n_actions(),
            env.shared().input_len(),
            env.action_count()
        )));
    }
    let scale = env.target_scale();
    let dt = env.shared().env.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let mut tape = Tape::default();
    let mut input = Vec::new();
    let mut logits = Vec::new();
    let (mut succ, mut coll, mut tout) = (0, 0, 0);
    let mut time_sum = 0.0;
    let mut ret_sum = 0.0;
    for e in 0..episodes {
        let mut obs = env.reset(Some(derive_seed(seed, 10_000 + e as u64)))?;
        loop {
            let a = match policy {
                EvalPolicy::Greedy => {
                    obs.write_input(&mut input, scale);
                    net.forward(&input, 1, &mut tape)?;
                    logits.clear();
                    logits.extend(tape.logits.iter().map(|&z| z as f64));
                    argmax(&logits)
                }
                EvalPolicy::Random => rng.gen_range(0..env.action_count()),
            };
            let r = env.step(a)?;
            ret_sum += r.reward;
            if r.done {
                match r.outcome {
                    Outcome::Goal => {
                        succ += 1;
                        time_sum += env.step_count() as f64 * dt;
                    }
                    Outcome::Collision => coll += 1,
                    Outcome::Timeout => tout += 1,
                    Outcome::Running => unreachable!("done implies a terminal outcome"),
                }
                break;
            }
            obs = r.observation;
        }
    }
    let n = episodes as f64;
    Ok(EvalReport {
        map: env.map().name.clone(),
        episodes,
        successes: succ,
        collisions: coll,
        timeouts: tout,
        success_rate: succ as f64 / n,
        collision_rate: coll as f64 / n,
        timeout_rate: tout as f64 / n,
        mean_time_to_goal: if succ > 0 { time_sum / succ as f64 } else { f64::NAN },
        mean_return: ret_sum / n,
    })
}
