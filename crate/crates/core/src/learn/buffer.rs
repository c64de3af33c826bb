/// On-policy transition store for one rollout.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    obs_len: usize,
    pub obs: Vec<f32>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// `true` when the transition ended its episode.
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(obs_len: usize, capacity: usize) -> Self {
        Self {
            obs_len,
            obs: Vec::with_capacity(obs_len * capacity),
            actions: Vec::with_capacity(capacity),
            log_probs: Vec::with_capacity(capacity),
            rewards: Vec::with_capacity(capacity),
            values: Vec::with_capacity(capacity),
            dones: Vec::with_capacity(capacity),
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn obs_len(&self) -> usize {
        self.obs_len
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn clear(&mut self) {
        self.obs.clear();
        self.actions.clear();
        self.log_probs.clear();
        self.rewards.clear();
        self.values.clear();
        self.dones.clear();
        self.advantages.clear();
        self.returns.clear();
    }

    pub fn push(&mut self, obs: &[f32], action: usize, log_prob: f64, reward: f64, value: f64, done: bool) {
        debug_assert_eq!(obs.len(), self.obs_len);
        self.obs.extend_from_slice(obs);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
    }

    pub fn observation(&self, i: usize) -> &[f32] {
        &self.obs[i * self.obs_len..(i + 1) * self.obs_len]
    }

    /// Fills `advantages` and `returns`; `bootstrap_value` is the value of
    /// the state after the last stored transition.
    pub fn finish(&mut self, bootstrap_value: f64, gamma: f64, lambda: f64) {
        let (a, r) = compute_gae(&self.rewards, &self.values, &self.dones, bootstrap_value, gamma, lambda);
        self.advantages = a;
        self.returns = r;
    }
}

/// Generalized advantage estimates and value targets, computed backwards:
/// `delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t` and
/// `A_t = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "buffer columns differ in length");
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        adv[t] = delta + gamma * lambda * live * next_adv;
        next_value = values[t];
        next_adv = adv[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn myopic_and_one_step_limits() {
        let r = [1.0, -2.0, 0.5, 3.0];
        let v = [0.2, 0.4, -0.1, 1.0];
        let d = [false, true, false, false];
        let (a, _) = compute_gae(&r, &v, &d, 0.7, 0.0, 0.95);
        for t in 0..4 {
            assert_eq!(a[t], r[t] - v[t]);
        }
        let (a, _) = compute_gae(&r, &v, &d, 0.7, 0.9, 0.0);
        let next = [0.4, 0.0, 1.0, 0.7];
        for t in 0..4 {
            let live = if d[t] { 0.0 } else { 1.0 };
            assert_eq!(a[t], r[t] + 0.9 * next[t] * live - v[t]);
        }
    }

    #[test]
    fn undiscounted_zero_values_is_reward_to_go() {
        let r = [1.0, 2.0, 3.0, 4.0, 5.0];
        let d = [false, false, true, false, true];
        let (a, ret) = compute_gae(&r, &[0.0; 5], &d, 100.0, 1.0, 1.0);
        assert_eq!(a, vec![6.0, 5.0, 3.0, 9.0, 5.0]);
        assert_eq!(ret, a);
    }

    #[test]
    fn bootstrap_used_only_without_done() {
        let (a, _) = compute_gae(&[0.0], &[0.0], &[false], 2.0, 0.5, 1.0);
        assert_eq!(a, vec![1.0]);
        let (a, _) = compute_gae(&[0.0], &[0.0], &[true], 2.0, 0.5, 1.0);
        assert_eq!(a, vec![0.0]);
    }

    #[test]
    fn buffer_round_trip() {
        let mut b = RolloutBuffer::new(2, 4);
        b.push(&[1.0, 2.0], 3, -0.5, 1.0, 0.0, false);
        b.push(&[3.0, 4.0], 1, -0.7, 2.0, 0.0, true);
        assert_eq!(b.observation(1), &[3.0, 4.0]);
        b.finish(9.0, 1.0, 1.0);
        assert_eq!(b.returns, vec![3.0, 2.0]);
        b.clear();
        assert!(b.is_empty() && b.advantages.is_empty());
    }
}
