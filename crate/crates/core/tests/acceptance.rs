//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Pass substrings as arguments to run a subset,
//! e.g. `cargo test --test acceptance -- gae raycaster`.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajocc::env::{compute_reward, Env, EnvConfig, EnvShared, Layout, Outcome, RewardConfig};
use trajocc::kinematics::{ActionSpace, Point3, PrimitiveBank, DEFAULT_HORIZON, DEFAULT_SAMPLES};
use trajocc::learn::{
    compute_gae, evaluate, ppo_loss, EvalPolicy, InputShape, Minibatch, NetworkSpec, PolicyValueNet, PpoConfig,
    Tape, Trainer, Variant,
};
use trajocc::occupancy::{evaluate_all, evaluate_into};
use trajocc::voxel_grid::{
    ClassifiedGrid, GridSpec, OccupancyArray, Thresholds, VoxelWeights,
};
use trajocc::world::{load_map, raycast, LidarSpec, Rect, Shape, Vec2};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- occupancy

struct Instance {
    spec: GridSpec,
    bank: PrimitiveBank,
    thresholds: Thresholds,
    weights: VoxelWeights,
    grid: ClassifiedGrid,
}

fn dyadic(rng: &mut ChaCha8Rng, steps: u32, denom: f64) -> f64 {
    rng.gen_range(1..=steps) as f64 / denom
}

/// Small random grid and primitive bank; weights are dyadic so sums are exact.
fn random_instance(rng: &mut ChaCha8Rng, max_voxels: usize) -> Instance {
    loop {
        let res = [0.1, 0.125, 0.2, 0.25][rng.gen_range(0..4)];
        let nx = rng.gen_range(2..=20usize);
        let ny = rng.gen_range(2..=20usize).min((max_voxels / nx).max(2));
        let nz = if rng.gen_bool(0.2) { 2 } else { 1 };
        if nx * ny * nz > max_voxels {
            continue;
        }
        let x_min = -res * rng.gen_range(0..4) as f64;
        let y_min = -res * (ny / 2) as f64;
        let z_min = -0.5 * res * nz as f64;
        let spec = GridSpec {
            resolution: res,
            x_min,
            x_max: x_min + res * nx as f64,
            y_min,
            y_max: y_min + res * ny as f64,
            z_min,
            z_max: z_min + res * nz as f64,
        };
        let w_span = rng.gen_range(0.1..1.5);
        let space = ActionSpace::new(
            rng.gen_range(1..=4),
            rng.gen_range(1..=5),
            rng.gen_range(0.2..1.0),
            -w_span,
            rng.gen_range(0.1..1.5),
        )
        .expect("valid action space");
        let horizon = rng.gen_range(0.5..3.0);
        let n_t = rng.gen_range(2..=10);
        let bank = PrimitiveBank::build(space, horizon, n_t).expect("bank");
        let p = rng.gen_range(0.05..0.3);
        let thresholds = Thresholds { priority: p, support: p + rng.gen_range(0.05..0.4) };
        let weights = VoxelWeights { priority: dyadic(rng, 16, 8.0), support: dyadic(rng, 16, 8.0) };
        let grid = ClassifiedGrid::build(&bank, spec, thresholds, &weights).expect("grid");
        if grid.trajectories().iter().any(|t| t.is_empty()) {
            continue;
        }
        return Instance { spec, bank, thresholds, weights, grid };
    }
}

fn random_occupancy(rng: &mut ChaCha8Rng, n: usize, dyadic_levels: bool) -> OccupancyArray {
    let sigma_max = [0.5, 1.0, 2.0][rng.gen_range(0..3)];
    let mut occ = OccupancyArray::new(n, sigma_max);
    let density = rng.gen_range(0.0..0.5);
    for u in 0..n {
        if rng.gen_bool(density) {
            let s = if dyadic_levels {
                sigma_max * rng.gen_range(1..=4) as f64 / 4.0
            } else {
                sigma_max * rng.gen_range(0.0..=1.0)
            };
            occ.set(u, s);
        }
    }
    occ
}

/// Exhaustive per-voxel, per-trajectory re-derivation from the bank and
/// grid geometry, without the classified grid.
fn naive_occupancy(inst: &Instance, occ: &OccupancyArray) -> Vec<f64> {
    let s = &inst.spec;
    let r = s.resolution;
    let (nx, ny, nz) = s.dims();
    let sigma_max = occ.sigma_max();
    let mut out = Vec::new();
    for traj in inst.bank.trajectories() {
        let n_t = traj.points.len();
        let mut rows: Vec<(usize, usize, bool, f64)> = Vec::new();
        for iz in 0..nz {
            for iy in 0..ny {
                for ix in 0..nx {
                    let u = ix + nx * (iy + ny * iz);
                    let c = [
                        s.x_min + (ix as f64 + 0.5) * r,
                        s.y_min + (iy as f64 + 0.5) * r,
                        s.z_min + (iz as f64 + 0.5) * r,
                    ];
                    let mut best_m = 0;
                    let mut best_d2 = f64::INFINITY;
                    for (m, p) in traj.points.iter().enumerate() {
                        let (dx, dy, dz) = (c[0] - p.x, c[1] - p.y, c[2] - p.z);
                        let d2 = dx * dx + dy * dy + dz * dz;
                        if d2 < best_d2 {
                            best_d2 = d2;
                            best_m = m;
                        }
                    }
                    let d = best_d2.sqrt();
                    if d < inst.thresholds.priority {
                        rows.push((u, best_m, true, inst.weights.priority));
                    } else if d < inst.thresholds.support {
                        rows.push((u, best_m, false, inst.weights.support));
                    }
                }
            }
        }
        let crash = rows
            .iter()
            .filter(|row| row.2 && occ.get(row.0) > 0.0)
            .map(|row| row.1)
            .min()
            .unwrap_or(n_t);
        let mut w = 0.0;
        let mut ws = 0.0;
        for &(u, m, _, beta) in &rows {
            w += beta;
            ws += if m < crash { occ.get(u) } else { sigma_max } * beta;
        }
        out.push(ws / (sigma_max * w));
    }
    out
}

fn occupancy_bounds() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut values = 0usize;
    for _ in 0..10_000 {
        let inst = random_instance(&mut rng, 200);
        let occ = random_occupancy(&mut rng, inst.spec.len(), false);
        let h = evaluate_all(&inst.grid, &occ).expect("evaluate");
        if h.values.len() != inst.bank.len() {
            return verdict(false, "length mismatch");
        }
        if let Some(bad) = h.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return verdict(false, format!("H = {bad} outside [0, 1]"));
        }
        values += h.values.len();
    }
    verdict(true, format!("10000 instances, {values} values in [0, 1]"))
}

fn oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut values = 0usize;
    let mut done = 0;
    while done < 100 {
        let inst = random_instance(&mut rng, 5000);
        if inst.bank.len() > 20 {
            continue;
        }
        let occ = random_occupancy(&mut rng, inst.spec.len(), true);
        let h = evaluate_all(&inst.grid, &occ).expect("evaluate").values;
        let oracle = naive_occupancy(&inst, &occ);
        if h != oracle {
            return verdict(false, format!("instance {done}: {h:?} vs {oracle:?}"));
        }
        values += h.len();
        done += 1;
    }
    verdict(true, format!("100 instances, {values} values bit-identical"))
}

fn monotonicity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for i in 0..1000 {
        let inst = random_instance(&mut rng, 400);
        let n = inst.spec.len();
        let mut occ = random_occupancy(&mut rng, n, false);
        let before = evaluate_all(&inst.grid, &occ).expect("evaluate").values;
        let u = rng.gen_range(0..n);
        let old = occ.get(u);
        let raised = if rng.gen_bool(0.5) || old == 0.0 {
            rng.gen_range(old..=occ.sigma_max())
        } else {
            occ.sigma_max()
        };
        occ.set(u, raised.max(old));
        let after = evaluate_all(&inst.grid, &occ).expect("evaluate").values;
        if let Some(j) = (0..before.len()).find(|&j| after[j] < before[j]) {
            return verdict(false, format!("instance {i}: H[{j}] fell {} -> {}", before[j], after[j]));
        }
    }
    verdict(true, "1000 instances, no value decreased")
}

fn beta_scale_invariance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let inst = random_instance(&mut rng, 400);
        let occ = random_occupancy(&mut rng, inst.spec.len(), false);
        // arbitrary per-voxel weights, then a common positive factor
        let mut base = inst.grid.clone();
        for tv in base.trajectories_mut() {
            for v in tv.voxels.iter_mut() {
                v.beta = rng.gen_range(0.01..5.0);
            }
        }
        let c = 10f64.powf(rng.gen_range(-3.0..3.0));
        let mut scaled = base.clone();
        for tv in scaled.trajectories_mut() {
            for v in tv.voxels.iter_mut() {
                v.beta *= c;
            }
        }
        let a = evaluate_all(&base, &occ).expect("evaluate").values;
        let b = evaluate_all(&scaled, &occ).expect("evaluate").values;
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
    }
    verdict(worst <= 1e-12, format!("1000 instances, max |dH| = {worst:.2e}"))
}

fn throughput() -> Verdict {
    let bank = PrimitiveBank::build(ActionSpace::default(), DEFAULT_HORIZON, DEFAULT_SAMPLES).expect("bank");
    let spec = GridSpec::default();
    let grid = ClassifiedGrid::build(&bank, spec, Thresholds::default(), &VoxelWeights::default()).expect("grid");
    // a realistic scan: robot inside the small static map
    let map = load_map("T0S").expect("map");
    let lidar = LidarSpec::default();
    let shapes: Vec<Shape> = map.shapes.clone();
    let scan = raycast(Vec2::new(1.5, 1.6), 0.0, Some(&map.bounds), &shapes, &lidar);
    let pts = trajocc::world::scan_to_points(&scan, &lidar);
    let mut occ = OccupancyArray::new(spec.len(), 1.0);
    occ.update(&pts, &spec);
    let mut out = Vec::with_capacity(grid.len());
    for _ in 0..100 {
        evaluate_into(&grid, &occ, &mut out).expect("evaluate");
    }
    let mut times = Vec::new();
    for _ in 0..2000 {
        let t = Instant::now();
        evaluate_into(&grid, &occ, &mut out).expect("evaluate");
        times.push(t.elapsed().as_secs_f64());
    }
    times.sort_by(|a, b| a.total_cmp(b));
    let median = times[times.len() / 2] * 1e3;
    let p99 = times[times.len() * 99 / 100] * 1e3;
    verdict(
        out.len() == 105 && median < 1.0,
        format!("{} trajectories, {} occupied voxels, median {median:.4} ms, p99 {p99:.4} ms", out.len(), occ.occupied_count()),
    )
}

// --------------------------------------------------------------- kinematics

fn rk4_endpoint(v: f64, w: f64, horizon: f64, steps: usize) -> (f64, f64) {
    let f = |s: [f64; 3]| [v * s[2].cos(), v * s[2].sin(), w];
    let h = horizon / steps as f64;
    let mut s = [0.0; 3];
    for _ in 0..steps {
        let k1 = f(s);
        let k2 = f([s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1], s[2] + 0.5 * h * k1[2]]);
        let k3 = f([s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1], s[2] + 0.5 * h * k2[2]]);
        let k4 = f([s[0] + h * k3[0], s[1] + h * k3[1], s[2] + h * k3[2]]);
        for i in 0..3 {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    (s[0], s[1])
}

fn kinematics() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst_end: f64 = 0.0;
    let mut worst_spacing: f64 = 0.0;
    for _ in 0..1000 {
        let v = rng.gen_range(0.0..1.0);
        let w = match rng.gen_range(0..4) {
            0 => 0.0,
            1 => rng.gen_range(-1e-6..1e-6),
            _ => rng.gen_range(-1.5..1.5),
        };
        let horizon = rng.gen_range(0.2..5.0);
        let n_t = rng.gen_range(2..=30);
        let a = trajocc::kinematics::ActionTuple { v, w, index: 0 };
        let traj = trajocc::kinematics::rollout_trajectory(&a, horizon, n_t);
        let end = traj.points.last().expect("samples");
        let (x, y) = rk4_endpoint(v, w, horizon, 4000);
        worst_end = worst_end.max((end.x - x).hypot(end.y - y));
        let mut prev = Point3::default();
        let gaps: Vec<f64> = traj
            .points
            .iter()
            .map(|p| {
                let g = p.distance(&prev);
                prev = *p;
                g
            })
            .collect();
        let lo = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = gaps.iter().cloned().fold(0.0, f64::max);
        worst_spacing = worst_spacing.max(hi - lo);
    }
    verdict(
        worst_end <= 1e-9 && worst_spacing <= 1e-9,
        format!("1000 triples, max endpoint error {worst_end:.2e} m, max spacing spread {worst_spacing:.2e} m"),
    )
}

// ---------------------------------------------------------------- raycaster

fn circle_oracle(o: Vec2, d: Vec2, c: Vec2, r: f64) -> Option<f64> {
    // |o + t d - c|^2 = r^2 with |d| = 1
    let (fx, fy) = (o.x - c.x, o.y - c.y);
    let b = 2.0 * (fx * d.x + fy * d.y);
    let cc = fx * fx + fy * fy - r * r;
    let disc = b * b - 4.0 * cc;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / 2.0;
    (t >= 0.0).then_some(t)
}

fn segment_hit(o: Vec2, d: Vec2, p: Vec2, q: Vec2) -> Option<f64> {
    let e = q - p;
    let den = d.x * e.y - d.y * e.x;
    if den == 0.0 {
        return None;
    }
    let w = p - o;
    let t = (w.x * e.y - w.y * e.x) / den;
    let s = (w.x * d.y - w.y * d.x) / den;
    (t >= 0.0 && (0.0..=1.0).contains(&s)).then_some(t)
}

fn rect_edges(r: &Rect) -> [(Vec2, Vec2); 4] {
    let a = Vec2::new(r.x_min, r.y_min);
    let b = Vec2::new(r.x_max, r.y_min);
    let c = Vec2::new(r.x_max, r.y_max);
    let d = Vec2::new(r.x_min, r.y_max);
    [(a, b), (b, c), (c, d), (d, a)]
}

fn box_oracle(o: Vec2, d: Vec2, r: &Rect) -> Option<f64> {
    rect_edges(r).iter().filter_map(|&(p, q)| segment_hit(o, d, p, q)).min_by(|a, b| a.total_cmp(b))
}

fn raycaster() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst: f64 = 0.0;
    let mut beams = 0usize;
    let mut empty_ok = true;
    let mut scenes = 0;
    while scenes < 10_000 {
        let n_shapes = if scenes % 10 == 0 { 0 } else { rng.gen_range(1..=5) };
        let shapes: Vec<Shape> = (0..n_shapes)
            .map(|_| {
                let c = Vec2::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
                if rng.gen_bool(0.5) {
                    Shape::Circle { center: c, radius: rng.gen_range(0.05..1.0) }
                } else {
                    Shape::Box { center: c, half: Vec2::new(rng.gen_range(0.05..1.0), rng.gen_range(0.05..1.0)) }
                }
            })
            .collect();
        let origin = Vec2::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
        if shapes.iter().any(|s| s.distance(origin) < 1e-3) {
            continue;
        }
        let bounds = (n_shapes > 0 && rng.gen_bool(0.5)).then(|| Rect::new(-5.0, -5.0, 5.0, 5.0));
        let spec = LidarSpec {
            n_beams: rng.gen_range(8..=64),
            max_range: rng.gen_range(1.0..10.0),
            ..LidarSpec::default()
        };
        let heading = rng.gen_range(-3.14..3.14);
        let scan = raycast(origin, heading, bounds.as_ref(), &shapes, &spec);
        for (b, &got) in scan.ranges.iter().enumerate() {
            let d = Vec2::from_angle(heading + spec.beam_angle(b));
            let mut want = spec.max_range;
            for s in &shapes {
                let hit = match *s {
                    Shape::Circle { center, radius } => circle_oracle(origin, d, center, radius),
                    Shape::Box { .. } => box_oracle(origin, d, &s.bounding_rect()),
                };
                if let Some(t) = hit {
                    want = want.min(t);
                }
            }
            if let Some(r) = &bounds {
                if let Some(t) = box_oracle(origin, d, r) {
                    want = want.min(t);
                }
            }
            if n_shapes == 0 && got != spec.max_range {
                empty_ok = false;
            }
            worst = worst.max((got - want).abs());
            beams += 1;
        }
        scenes += 1;
    }
    verdict(
        worst <= 1e-9 && empty_ok,
        format!("10000 scenes, {beams} beams, max error {worst:.2e} m, empty scenes saturate: {empty_ok}"),
    )
}

// ------------------------------------------------------------------- reward

struct Transition {
    d_prev: f64,
    d_now: f64,
    d_obs: f64,
    step: usize,
}

type Row = (Outcome, fn(&Transition, &RewardConfig) -> bool, fn(&Transition, &RewardConfig) -> f64);

const REWARD_TABLE: [Row; 4] = [
    (Outcome::Goal, |t, c| t.d_now < c.tau_target, |_, c| c.mu_goal),
    (Outcome::Collision, |t, c| t.d_obs < c.tau_fail, |_, c| c.mu_fail),
    (Outcome::Timeout, |t, c| t.step > c.n_max_ep_ts, |_, c| c.mu_fail),
    (
        Outcome::Running,
        |_, _| true,
        |t, c| c.alpha_target * (t.d_prev - t.d_now) + c.alpha_step_pen / c.n_max_ep_ts as f64,
    ),
];

fn reward_oracle(t: &Transition, c: &RewardConfig) -> (f64, Outcome) {
    let row = REWARD_TABLE.iter().find(|row| (row.1)(t, c)).expect("last row always matches");
    ((row.2)(t, c), row.0)
}

fn reward() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let v_max = ActionSpace::default().v_max;
    let dt = EnvConfig::default().dt;
    let mut counts = [0usize; 4];
    let mut worst_ratio: f64 = 0.0;
    for i in 0..1000 {
        let cfg = if i % 2 == 0 {
            RewardConfig::default()
        } else {
            RewardConfig {
                mu_goal: rng.gen_range(1.0..50.0),
                mu_fail: -rng.gen_range(1.0..50.0),
                alpha_target: rng.gen_range(0.0..20.0),
                alpha_step_pen: -rng.gen_range(0.1..10.0),
                tau_target: rng.gen_range(0.1..0.5),
                tau_fail: rng.gen_range(0.1..0.5),
                n_max_ep_ts: rng.gen_range(50..1000),
            }
        };
        let d_now = rng.gen_range(0.0..3.0);
        let t = Transition {
            d_prev: (d_now + rng.gen_range(-v_max * dt..=v_max * dt)).max(0.0),
            d_now,
            d_obs: rng.gen_range(0.0..1.5),
            step: rng.gen_range(1..=cfg.n_max_ep_ts + cfg.n_max_ep_ts / 5),
        };
        let got = compute_reward(t.d_prev, t.d_now, t.d_obs, t.step, &cfg);
        let want = reward_oracle(&t, &cfg);
        if got != want {
            return verdict(false, format!("transition {i}: {got:?} vs {want:?}"));
        }
        counts[REWARD_TABLE.iter().position(|r| r.0 == got.1).expect("known outcome")] += 1;
        if got.1 == Outcome::Running {
            worst_ratio = worst_ratio.max(got.0.abs() / cfg.step_bound(v_max, dt));
        }
    }
    // non-terminal rewards along real episodes, including moving agents
    let shared = shared(Layout::Occ1d);
    let mut env_steps = 0;
    for (k, map) in ["T0S", "T0D"].iter().enumerate() {
        let mut env = Env::new(Arc::new(load_map(map).expect("map")), shared.clone(), 11 + k as u64).expect("env");
        let bound = shared.reward.step_bound(v_max, dt);
        env.reset(None).expect("reset");
        for _ in 0..1000 {
            let r = env.step(rng.gen_range(0..env.action_count())).expect("step");
            env_steps += 1;
            if r.outcome == Outcome::Running {
                worst_ratio = worst_ratio.max(r.reward.abs() / bound);
            }
            if r.done {
                env.reset(None).expect("reset");
            }
        }
    }
    verdict(
        worst_ratio <= 1.0,
        format!(
            "1000 table transitions (goal {}, collision {}, timeout {}, running {}) exact; {env_steps} env steps; max |r|/bound = {worst_ratio:.3}",
            counts[0], counts[1], counts[2], counts[3]
        ),
    )
}

// ----------------------------------------------------------------- learning

fn gradient_check() -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for variant in [Variant::Fc, Variant::Conv1d] {
        let spec = NetworkSpec { variant, hidden: vec![16, 12], channels: vec![4, 3, 3], kernels: vec![5, 3, 3], strides: vec![2, 2, 1] };
        let input = match variant {
            Variant::Fc => InputShape { channels: 1, height: 40, width: 1, extra: 4 },
            _ => InputShape { channels: 5, height: 24, width: 1, extra: 4 },
        };
        let n_actions = 7;
        let batch = 8;
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        for k in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(800 + k);
            let mut net = PolicyValueNet::<f64>::new(&spec, input, n_actions, &mut rng).expect("net");
            // jitter every parameter, biases included, so no pre-activation sits on a ReLU kink
            net.params_mut().iter_mut().for_each(|p| *p += rng.gen_range(-0.1..0.1));
            let obs: Vec<f64> = (0..batch * input.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let actions: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..n_actions)).collect();
            let mut tape = Tape::default();
            net.forward(&obs, batch, &mut tape).expect("forward");
            let mut lp = Vec::new();
            let old: Vec<f64> = (0..batch)
                .map(|i| {
                    trajocc::learn::log_softmax(&tape.logits[i * n_actions..(i + 1) * n_actions], &mut lp);
                    // ratios both inside and outside the clip range
                    lp[actions[i]] + rng.gen_range(-0.4..0.4)
                })
                .collect();
            let adv: Vec<f64> = (0..batch).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ret: Vec<f64> = (0..batch).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mb = Minibatch { obs: &obs, actions: &actions, old_log_probs: &old, advantages: &adv, returns: &ret };
            let cfg = PpoConfig::default();
            let mut grad = vec![0.0; net.param_count()];
            ppo_loss(&net, &mb, &cfg, &mut tape, Some(&mut grad)).expect("loss");
            let h = 1e-6;
            for i in 0..net.param_count() {
                let p0 = net.params()[i];
                net.params_mut()[i] = p0 + h;
                let up = ppo_loss(&net, &mb, &cfg, &mut tape, None).expect("loss").loss;
                net.params_mut()[i] = p0 - h;
                let down = ppo_loss(&net, &mb, &cfg, &mut tape, None).expect("loss").loss;
                net.params_mut()[i] = p0;
                let num = (up - down) / (2.0 * h);
                let rel = (grad[i] - num).abs() / grad[i].abs().max(num.abs()).max(1e-5);
                worst = worst.max(rel);
            }
            checked += net.param_count();
        }
        pass &= worst < 1e-4;
        details.push(format!("{} 5 nets/{checked} params max rel {worst:.2e}", variant.as_str()));
    }
    verdict(pass, details.join("; "))
}

fn gae_direct(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let next_v = |t: usize| if t + 1 < n { values[t + 1] } else { bootstrap };
    let delta: Vec<f64> =
        (0..n).map(|t| rewards[t] + gamma * next_v(t) * if dones[t] { 0.0 } else { 1.0 } - values[t]).collect();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            let mut l = 0;
            loop {
                sum += (gamma * lambda).powi(l as i32) * delta[t + l];
                if dones[t + l] || t + l + 1 == n {
                    break;
                }
                l += 1;
            }
            sum
        })
        .collect()
}

fn gae() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    // dyadic buffers: every term is exactly representable, so any summation
    // order gives the same bits
    for b in 0..100 {
        let n = rng.gen_range(1..=64);
        let gamma = [0.5, 0.75, 0.875][rng.gen_range(0..3)];
        let lambda = [0.5, 0.75, 1.0][rng.gen_range(0..3)];
        let mut since = 0;
        let dones: Vec<bool> = (0..n)
            .map(|_| {
                since += 1;
                let d = since >= 6 || rng.gen_bool(0.2);
                if d {
                    since = 0;
                }
                d
            })
            .collect();
        let q = |rng: &mut ChaCha8Rng| rng.gen_range(-64..=64) as f64 / 16.0;
        let rewards: Vec<f64> = (0..n).map(|_| q(&mut rng)).collect();
        let values: Vec<f64> = (0..n).map(|_| q(&mut rng)).collect();
        let bootstrap = q(&mut rng);
        let (adv, ret) = compute_gae(&rewards, &values, &dones, bootstrap, gamma, lambda);
        let want = gae_direct(&rewards, &values, &dones, bootstrap, gamma, lambda);
        if adv != want {
            return verdict(false, format!("dyadic buffer {b}: {adv:?} vs {want:?}"));
        }
        if (0..n).any(|t| ret[t] != adv[t] + values[t]) {
            return verdict(false, format!("dyadic buffer {b}: returns != advantages + values"));
        }
    }
    // general buffers at the training defaults
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=512);
        let dones: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.02)).collect();
        let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let bootstrap = rng.gen_range(-10.0..10.0);
        let (adv, _) = compute_gae(&rewards, &values, &dones, bootstrap, 0.99, 0.95);
        let want = gae_direct(&rewards, &values, &dones, bootstrap, 0.99, 0.95);
        for (a, w) in adv.iter().zip(&want) {
            worst = worst.max((a - w).abs() / w.abs().max(1.0));
        }
    }
    verdict(
        worst <= 1e-12,
        format!("100 dyadic buffers bit-identical; 100 buffers at gamma 0.99 lambda 0.95 max rel {worst:.1e}"),
    )
}

// ----------------------------------------------------------------- training

fn shared(layout: Layout) -> EnvShared {
    let bank = PrimitiveBank::build(ActionSpace::default(), DEFAULT_HORIZON, DEFAULT_SAMPLES).expect("bank");
    let grid =
        ClassifiedGrid::build(&bank, GridSpec::default(), Thresholds::default(), &VoxelWeights::default()).expect("grid");
    EnvShared {
        bank: Arc::new(bank),
        grid: Arc::new(grid),
        lidar: LidarSpec::default(),
        reward: RewardConfig::default(),
        env: EnvConfig { layout, ..EnvConfig::default() },
    }
}

fn env_for(shared: &EnvShared, map: &str, seed: u64) -> Env {
    Env::new(Arc::new(load_map(map).expect("map")), shared.clone(), seed).expect("env")
}

const EVAL_EPISODES: usize = 100;
const EVAL_SEED: u64 = 12345;
const EVAL_EVERY: u64 = 10 * 2048;

fn success(t: &Trainer, shared: &EnvShared, map: &str) -> f64 {
    let mut env = env_for(shared, map, EVAL_SEED);
    evaluate(&t.net, &mut env, EVAL_EPISODES, EVAL_SEED, EvalPolicy::Greedy).expect("eval").success_rate
}

fn new_trainer(shared: &EnvShared, seed: u64) -> Trainer {
    let env = env_for(shared, "T0S", 0);
    Trainer::for_env(&env, &NetworkSpec::default(), PpoConfig::default(), seed).expect("trainer")
}

fn determinism() -> Verdict {
    let s = shared(Layout::Occ1d);
    let run = || {
        let mut t = new_trainer(&s, 7);
        let mut env = env_for(&s, "T0S", 70);
        t.train_stage(&mut env, 0, 10_000, &mut |_| Ok(())).expect("train");
        (t.curve_csv(), t.timesteps)
    };
    let (a, steps) = run();
    let (b, _) = run();
    verdict(
        a == b && steps == 10_000,
        format!("{steps} steps, {} curve rows, identical: {}", a.lines().count() - 1, a == b),
    )
}

fn median(mut x: Vec<f64>) -> f64 {
    x.sort_by(|a, b| a.total_cmp(b));
    x[x.len() / 2]
}

fn pct(x: &[f64]) -> String {
    x.iter().map(|v| format!("{:.0}%", 100.0 * v)).collect::<Vec<_>>().join("/")
}

const SEEDS: [u64; 3] = [0, 1, 2];
const STAGE_STEPS: u64 = 100_000;
const STATIC_BUDGET: u64 = 300_000;

/// Results of the shared training runs.
#[derive(Default)]
struct Training {
    static_evals: Vec<(u64, f64)>,
    occ_m4: Vec<f64>,
    laser_m4: Vec<f64>,
    curriculum_t0d: Vec<f64>,
    t0d_only: Vec<f64>,
    minutes: f64,
}

/// Trains in stage 0 up to `budget` steps, evaluating greedily on `map`
/// every `EVAL_EVERY` steps and at the end; stops early once `stop` holds.
fn train_with_evals(
    t: &mut Trainer,
    env: &mut Env,
    s: &EnvShared,
    map: &str,
    budget: u64,
    evals: &mut Vec<(u64, f64)>,
    stop: impl Fn(f64) -> bool,
) {
    while t.stage_steps < budget {
        let next = ((t.stage_steps / EVAL_EVERY + 1) * EVAL_EVERY).min(budget);
        t.train_stage(env, 0, next, &mut |_| Ok(())).expect("train");
        let sr = success(t, s, map);
        evals.push((t.stage_steps, sr));
        if stop(sr) {
            return;
        }
    }
}

fn run_training(want_static: bool, want_dynamic: bool, want_repr: bool) -> Training {
    let start = Instant::now();
    let occ = shared(Layout::Occ1d);
    let laser = shared(Layout::Laser1d);
    let mut out = Training::default();
    for &seed in &SEEDS {
        // T0S stage shared by the representation and curriculum checks
        let mut t = new_trainer(&occ, seed);
        let mut env = env_for(&occ, "T0S", derive(seed, 1000));
        if seed == SEEDS[0] && want_static {
            let mut evals = Vec::new();
            train_with_evals(&mut t, &mut env, &occ, "T0S", STAGE_STEPS, &mut evals, |_| false);
            let snapshot = t.clone();
            let mut cont = t.clone();
            if !evals.iter().any(|e| e.1 >= 0.8) {
                train_with_evals(&mut cont, &mut env, &occ, "T0S", STATIC_BUDGET, &mut evals, |sr| sr >= 0.8);
            }
            out.static_evals = evals;
            t = snapshot;
        } else {
            t.train_stage(&mut env, 0, STAGE_STEPS, &mut |_| Ok(())).expect("train");
        }
        if want_repr {
            out.occ_m4.push(success(&t, &occ, "M4"));
            let mut lt = new_trainer(&laser, seed);
            let mut lenv = env_for(&laser, "T0S", derive(seed, 1000));
            lt.train_stage(&mut lenv, 0, STAGE_STEPS, &mut |_| Ok(())).expect("train");
            out.laser_m4.push(success(&lt, &laser, "M4"));
        }
        if want_dynamic {
            let mut denv = env_for(&occ, "T0D", derive(seed, 1001));
            t.train_stage(&mut denv, 1, STAGE_STEPS, &mut |_| Ok(())).expect("train");
            out.curriculum_t0d.push(success(&t, &occ, "T0D"));
            let mut only = new_trainer(&occ, seed);
            let mut oenv = env_for(&occ, "T0D", derive(seed, 1000));
            only.train_stage(&mut oenv, 0, 2 * STAGE_STEPS, &mut |_| Ok(())).expect("train");
            out.t0d_only.push(success(&only, &occ, "T0D"));
        }
    }
    out.minutes = start.elapsed().as_secs_f64() / 60.0;
    out
}

fn derive(seed: u64, tag: u64) -> u64 {
    trajocc::learn::derive_seed(seed, tag)
}

fn static_training(tr: &Training) -> Verdict {
    let best = tr.static_evals.iter().cloned().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap_or((0, 0.0));
    let reached = tr.static_evals.iter().find(|e| e.1 >= 0.8);
    let trace: Vec<String> = tr.static_evals.iter().map(|e| format!("{}k:{:.0}%", e.0 / 1000, 100.0 * e.1)).collect();
    verdict(
        reached.is_some(),
        format!(
            "best {:.0}% at {} steps (needs 80% within {STATIC_BUDGET}); evals {}",
            100.0 * best.1,
            best.0,
            trace.join(" ")
        ),
    )
}

fn dynamic_training(tr: &Training) -> Verdict {
    let c = median(tr.curriculum_t0d.clone());
    let o = median(tr.t0d_only.clone());
    verdict(
        c >= 0.6 && c - o >= 0.1,
        format!(
            "T0D success, curriculum median {:.0}% ({}), T0D-only median {:.0}% ({}); needs >= 60% and a 10 point lead",
            100.0 * c,
            pct(&tr.curriculum_t0d),
            100.0 * o,
            pct(&tr.t0d_only)
        ),
    )
}

fn representation(tr: &Training) -> Verdict {
    let o = median(tr.occ_m4.clone());
    let l = median(tr.laser_m4.clone());
    verdict(
        o > l,
        format!("M4 success, occ_FC median {:.0}% ({}), laser_FC median {:.0}% ({})", 100.0 * o, pct(&tr.occ_m4), 100.0 * l, pct(&tr.laser_m4)),
    )
}

// ------------------------------------------------------------------- driver

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));
    let mut failures = 0;
    let mut report = |name: &str, secs: f64, o: Verdict| {
        println!("{} {name} ({secs:.1}s): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failures += 1;
        }
    };
    let checks: [(&str, fn() -> Verdict); 10] = [
        ("occupancy_bounds", occupancy_bounds),
        ("oracle_equivalence", oracle_equivalence),
        ("monotonicity", monotonicity),
        ("beta_scale_invariance", beta_scale_invariance),
        ("kinematics_vs_rk4", kinematics),
        ("raycaster", raycaster),
        ("reward", reward),
        ("gradient_check", gradient_check),
        ("gae", gae),
        ("determinism", determinism),
    ];
    for (name, f) in checks {
        if selected(name) {
            let t = Instant::now();
            let o = f();
            report(name, t.elapsed().as_secs_f64(), o);
        }
    }
    let (s, d, r) = (selected("static_training"), selected("dynamic_training"), selected("representation"));
    if s || d || r {
        let t = Instant::now();
        let tr = run_training(s, d, r);
        let secs = t.elapsed().as_secs_f64();
        println!("     training runs took {:.1} min", tr.minutes);
        if s {
            report("static_training", secs, static_training(&tr));
        }
        if d {
            report("dynamic_training", secs, dynamic_training(&tr));
        }
        if r {
            report("representation", secs, representation(&tr));
        }
    }
    if selected("throughput") {
        let t = Instant::now();
        let o = throughput();
        report("throughput", t.elapsed().as_secs_f64(), o);
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
