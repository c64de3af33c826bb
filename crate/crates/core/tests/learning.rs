use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use trajocc::env::{Env, EnvConfig, EnvShared, Layout, RewardConfig};
use trajocc::kinematics::{ActionSpace, PrimitiveBank, DEFAULT_HORIZON, DEFAULT_SAMPLES};
use trajocc::learn::{
    evaluate, ppo_update, sample_action, softmax, Adam, EvalPolicy, InputShape, NetworkSpec, PolicyValueNet,
    PpoConfig, RolloutBuffer, Tape,
};
use trajocc::voxel_grid::{ClassifiedGrid, GridSpec, Thresholds, VoxelWeights};
use trajocc::world::{load_map, LidarSpec};

#[test]
fn one_step_bandit_concentrates_on_the_rewarded_action() {
    let n_actions = 105;
    let best = 37;
    let input = InputShape { channels: 1, height: 8, width: 1, extra: 4 };
    let spec = NetworkSpec { hidden: vec![64, 64], ..NetworkSpec::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut net = PolicyValueNet::<f32>::new(&spec, input, n_actions, &mut rng).unwrap();
    // with clip 0.2 every other action keeps at least 0.8x its probability
    // per update, so 10k steps need at least ~21 updates to pass 99%
    let cfg = PpoConfig { n_rollout: 256, ..PpoConfig::default() };
    let mut adam = Adam::new(net.param_count());
    let obs = vec![0.5f32; input.len()];
    let mut tape = Tape::default();
    let mut steps = 0;
    let prob = |net: &PolicyValueNet<f32>, tape: &mut Tape<f32>| {
        net.forward(&obs, 1, tape).unwrap();
        softmax(&tape.logits.iter().map(|&z| z as f64).collect::<Vec<_>>())[best]
    };
    while steps < 10_000 {
        let mut buf = RolloutBuffer::new(input.len(), cfg.n_rollout);
        for _ in 0..cfg.n_rollout.min(10_000 - steps) {
            net.forward(&obs, 1, &mut tape).unwrap();
            let logits: Vec<f64> = tape.logits.iter().map(|&z| z as f64).collect();
            let (a, lp) = sample_action(&logits, &mut rng).unwrap();
            let r = if a == best { 1.0 } else { 0.0 };
            buf.push(&obs, a, lp, r, tape.values[0] as f64, true);
            steps += 1;
        }
        buf.finish(0.0, cfg.gamma, cfg.gae_lambda);
        ppo_update(&mut net, &mut adam, &buf, &cfg, &mut rng).unwrap();
    }
    let p = prob(&net, &mut tape);
    assert!(p > 0.99, "p(best) = {p}");
}

#[test]
fn random_policy_rarely_reaches_m4_goals() {
    let bank = PrimitiveBank::build(ActionSpace::default(), DEFAULT_HORIZON, DEFAULT_SAMPLES).unwrap();
    let grid = ClassifiedGrid::build(&bank, GridSpec::default(), Thresholds::default(), &VoxelWeights::default()).unwrap();
    let shared = EnvShared {
        bank: Arc::new(bank),
        grid: Arc::new(grid),
        lidar: LidarSpec::default(),
        reward: RewardConfig::default(),
        env: EnvConfig { layout: Layout::Occ1d, ..EnvConfig::default() },
    };
    let mut env = Env::new(Arc::new(load_map("M4").unwrap()), shared.clone(), 0).unwrap();
    let input = InputShape { channels: 1, height: 525, width: 1, extra: 4 };
    let net = PolicyValueNet::<f32>::zeros(&NetworkSpec::default(), input, 105).unwrap();
    let r = evaluate(&net, &mut env, 100, 12345, EvalPolicy::Random).unwrap();
    assert_eq!(r.episodes, 100);
    assert!((r.success_rate + r.collision_rate + r.timeout_rate - 1.0).abs() < 1e-12);
    assert!(r.success_rate < 0.10, "{r:?}");
}
