use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Running,
    Goal,
    Collision,
    Timeout,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        self != Outcome::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Running => "running",
            Outcome::Goal => "goal",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub mu_goal: f64,
    pub mu_fail: f64,
    pub alpha_target: f64,
    /// Spread over the episode as `alpha_step_pen / n_max_ep_ts` per step.
    pub alpha_step_pen: f64,
    pub tau_target: f64,
    /// Minimum allowed distance from the robot center to any obstacle.
    pub tau_fail: f64,
    pub n_max_ep_ts: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            mu_goal: 20.0,
            mu_fail: -20.0,
            alpha_target: 10.0,
            alpha_step_pen: -5.0,
            tau_target: 0.3,
            tau_fail: 0.25,
            n_max_ep_ts: 500,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, bool, &str); 7] = [
            ("reward.mu_goal", self.mu_goal > 0.0, "must be positive"),
            ("reward.mu_fail", self.mu_fail < 0.0, "must be negative"),
            ("reward.alpha_target", self.alpha_target >= 0.0, "must be non-negative"),
            ("reward.alpha_step_pen", self.alpha_step_pen < 0.0, "must be negative"),
            ("reward.tau_target", self.tau_target > 0.0, "must be positive"),
            ("reward.tau_fail", self.tau_fail >= 0.0, "must be non-negative"),
            ("reward.n_max_ep_ts", self.n_max_ep_ts > 0, "must be at least 1"),
        ];
        for (path, ok, reason) in checks {
            if !ok {
                return Err(Error::config(path, reason));
            }
        }
        Ok(())
    }

    /// Per-step bound on the magnitude of non-terminal rewards.
    pub fn step_bound(&self, v_max: f64, dt: f64) -> f64 {
        self.alpha_target * v_max * dt + self.alpha_step_pen.abs() / self.n_max_ep_ts as f64
    }
}

/// Reward and outcome of one transition. `step_count` counts steps taken
/// in the episode including this one.
pub fn compute_reward(d_prev: f64, d_now: f64, d_obs: f64, step_count: usize, cfg: &RewardConfig) -> (f64, Outcome) {
    if d_now < cfg.tau_target {
        return (cfg.mu_goal, Outcome::Goal);
    }
    if d_obs < cfg.tau_fail {
        return (cfg.mu_fail, Outcome::Collision);
    }
    if step_count > cfg.n_max_ep_ts {
        return (cfg.mu_fail, Outcome::Timeout);
    }
    let progress = cfg.alpha_target * (d_prev - d_now);
    let penalty = cfg.alpha_step_pen / cfg.n_max_ep_ts as f64;
    (progress + penalty, Outcome::Running)
}
