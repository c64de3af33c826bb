use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::RolloutBuffer;
use super::net::{PolicyValueNet, Tape};
use super::policy::{entropy, log_softmax};
use super::scalar::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub learning_rate: f64,
    pub n_epochs: usize,
    pub minibatch_size: usize,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub n_rollout: usize,
    pub total_timesteps: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_range: 0.2,
            learning_rate: 3e-4,
            n_epochs: 10,
            minibatch_size: 64,
            ent_coef: 0.01,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            n_rollout: 2048,
            total_timesteps: 200_000,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, bool, &str); 10] = [
            ("ppo.gamma", (0.0..1.0).contains(&self.gamma), "must be in [0, 1)"),
            ("ppo.gae_lambda", (0.0..=1.0).contains(&self.gae_lambda), "must be in [0, 1]"),
            ("ppo.clip_range", self.clip_range > 0.0, "must be positive"),
            ("ppo.learning_rate", self.learning_rate >= 0.0 && self.learning_rate.is_finite(), "must be non-negative"),
            ("ppo.n_epochs", self.n_epochs > 0, "must be at least 1"),
            ("ppo.minibatch_size", self.minibatch_size > 0, "must be at least 1"),
            ("ppo.ent_coef", self.ent_coef >= 0.0, "must be non-negative"),
            ("ppo.vf_coef", self.vf_coef >= 0.0, "must be non-negative"),
            ("ppo.max_grad_norm", self.max_grad_norm > 0.0, "must be positive"),
            ("ppo.n_rollout", self.n_rollout > 0, "must be at least 1"),
        ];
        for (path, ok, reason) in checks {
            if !ok {
                return Err(Error::config(path, reason));
            }
        }
        Ok(())
    }
}

/// Loss terms averaged over a minibatch (or over an update).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// One minibatch, observations row-major.
#[derive(Debug, Clone, Copy)]
pub struct Minibatch<'a, S> {
    pub obs: &'a [S],
    pub actions: &'a [usize],
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

impl<S> Minibatch<'_, S> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Clipped-surrogate loss
/// `-mean(min(rho A, clip(rho) A)) + c_v mean((V - R)^2) - c_e mean(H)`,
/// with its parameter gradient written to `grad` when given.
pub fn ppo_loss<S: Scalar>(
    net: &PolicyValueNet<S>,
    mb: &Minibatch<'_, S>,
    cfg: &PpoConfig,
    tape: &mut Tape<S>,
    grad: Option<&mut [S]>,
) -> Result<LossStats> {
    let b = mb.len();
    if b == 0 {
        return Err(Error::Shape("empty minibatch".into()));
    }
    net.forward(mb.obs, b, tape)?;
    let k = net.n_actions();
    let inv_b = 1.0 / b as f64;
    let eps = cfg.clip_range;
    let mut stats = LossStats::default();
    let mut dlogits = vec![S::zero(); b * k];
    let mut dvalues = vec![S::zero(); b];
    let mut z = Vec::with_capacity(k);
    let mut lp = Vec::with_capacity(k);
    for i in 0..b {
        z.clear();
        z.extend(tape.logits[i * k..(i + 1) * k].iter().map(|x| x.as_f64()));
        log_softmax(&z, &mut lp);
        let a = mb.actions[i];
        let adv = mb.advantages[i];
        let log_ratio = lp[a] - mb.old_log_probs[i];
        let rho = log_ratio.exp();
        let clipped = rho.clamp(1.0 - eps, 1.0 + eps);
        let surrogate = (rho * adv).min(clipped * adv);
        let h = entropy(&lp);
        let v = tape.values[i].as_f64();
        let verr = v - mb.returns[i];

        stats.policy_loss -= surrogate * inv_b;
        stats.value_loss += verr * verr * inv_b;
        stats.entropy += h * inv_b;
        stats.approx_kl += (rho - 1.0 - log_ratio) * inv_b;
        if (rho - 1.0).abs() > eps {
            stats.clip_fraction += inv_b;
        }

        let dlogp = if rho * adv <= clipped * adv { -rho * adv * inv_b } else { 0.0 };
        let row = &mut dlogits[i * k..(i + 1) * k];
        for (j, g) in row.iter_mut().enumerate() {
            let p = lp[j].exp();
            let onehot = if j == a { 1.0 } else { 0.0 };
            let d_ent = if p > 0.0 { cfg.ent_coef * inv_b * p * (lp[j] + h) } else { 0.0 };
            *g = S::from_f64(dlogp * (onehot - p) + d_ent);
        }
        dvalues[i] = S::from_f64(2.0 * cfg.vf_coef * verr * inv_b);
    }
    stats.loss = stats.policy_loss + cfg.vf_coef * stats.value_loss - cfg.ent_coef * stats.entropy;
    if !stats.loss.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss (policy {}, value {}, entropy {})",
            stats.policy_loss, stats.value_loss, stats.entropy
        )));
    }
    if let Some(grad) = grad {
        net.backward(tape, &dlogits, &dvalues, grad);
    }
    Ok(stats)
}

/// Scales `grad` so its global norm is at most `max_norm`; returns the norm
/// before clipping.
pub fn clip_grad_norm<S: Scalar>(grad: &mut [S], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = S::from_f64(max_norm / (norm + 1e-6));
        grad.iter_mut().for_each(|g| *g = *g * s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<S: Scalar> {
    pub m: Vec<S>,
    pub v: Vec<S>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<S: Scalar> Adam<S> {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![S::zero(); n],
            v: vec![S::zero(); n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
        }
    }

    pub fn step(&mut self, params: &mut [S], grad: &[S], lr: f64) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (S::from_f64(self.beta1), S::from_f64(self.beta2));
        let (one_b1, one_b2) = (S::from_f64(1.0 - self.beta1), S::from_f64(1.0 - self.beta2));
        let step = S::from_f64(lr / c1);
        let inv_c2 = S::from_f64(1.0 / c2);
        let eps = S::from_f64(self.eps);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + one_b1 * g;
            self.v[i] = b2 * self.v[i] + one_b2 * g * g;
            params[i] = params[i] - step * self.m[i] / ((self.v[i] * inv_c2).sqrt() + eps);
        }
    }
}

/// Shifts and scales to mean 0, standard deviation 1.
pub fn normalize(x: &mut [f64]) {
    let n = x.len() as f64;
    if x.is_empty() {
        return;
    }
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    x.iter_mut().for_each(|a| *a = (*a - mean) / std);
}

/// Runs the configured epochs of shuffled minibatch updates over a finished
/// buffer and returns the averaged loss terms.
pub fn ppo_update<R: Rng>(
    net: &mut PolicyValueNet<f32>,
    adam: &mut Adam<f32>,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<LossStats> {
    let n = buffer.len();
    if n == 0 || buffer.advantages.len() != n {
        return Err(Error::Usage("ppo_update needs a finished, non-empty buffer".into()));
    }
    let mut adv = buffer.advantages.clone();
    normalize(&mut adv);
    let obs_len = buffer.obs_len();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut tape = Tape::default();
    let mut grad = vec![0.0f32; net.param_count()];
    let (mut obs, mut act, mut olp, mut a_mb, mut r_mb) = (vec![], vec![], vec![], vec![], vec![]);
    let mut total = LossStats::default();
    let mut count = 0usize;
    for _ in 0..cfg.n_epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks(cfg.minibatch_size) {
            obs.clear();
            act.clear();
            olp.clear();
            a_mb.clear();
            r_mb.clear();
            for &i in chunk {
                obs.extend_from_slice(&buffer.obs[i * obs_len..(i + 1) * obs_len]);
                act.push(buffer.actions[i]);
                olp.push(buffer.log_probs[i]);
                a_mb.push(adv[i]);
                r_mb.push(buffer.returns[i]);
            }
            let mb = Minibatch {
                obs: &obs,
                actions: &act,
                old_log_probs: &olp,
                advantages: &a_mb,
                returns: &r_mb,
            };
            let mut s = ppo_loss(net, &mb, cfg, &mut tape, Some(&mut grad))?;
            s.grad_norm = clip_grad_norm(&mut grad, cfg.max_grad_norm);
            adam.step(net.params_mut(), &grad, cfg.learning_rate);
            total.loss += s.loss;
            total.policy_loss += s.policy_loss;
            total.value_loss += s.value_loss;
            total.entropy += s.entropy;
            total.approx_kl += s.approx_kl;
            total.clip_fraction += s.clip_fraction;
            total.grad_norm += s.grad_norm;
            count += 1;
        }
    }
    let c = count as f64;
    Ok(LossStats {
        loss: total.loss / c,
        policy_loss: total.policy_loss / c,
        value_loss: total.value_loss / c,
        entropy: total.entropy / c,
        approx_kl: total.approx_kl / c,
        clip_fraction: total.clip_fraction / c,
        grad_norm: total.grad_norm / c,
    })
}
