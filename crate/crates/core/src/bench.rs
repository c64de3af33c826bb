//! Command implementations behind the `trajocc` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{make_env, RunConfig};
use crate::error::{Error, Result};
use crate::learn::{curve_from_csv, curve_to_csv, evaluate, Checkpoint, EvalPolicy, EvalReport, Trainer};
use crate::voxel_grid::VoxelClass;

pub const CONFIG_FILE: &str = "config.toml";
pub const CURVE_FILE: &str = "curve.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const EVAL_FILE: &str = "eval.csv";
pub const BENCHMARK_FILE: &str = "benchmark.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputeStats {
    pub cache_path: PathBuf,
    pub cache_hit: bool,
    /// `(priority, support)` voxel counts per trajectory.
    pub per_trajectory: Vec<(usize, usize)>,
}

impl PrecomputeStats {
    pub fn totals(&self) -> (usize, usize) {
        self.per_trajectory
            .iter()
            .fold((0, 0), |(p, s), &(a, b)| (p + a, s + b))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("trajectory,priority,support\n");
        for (j, (p, q)) in self.per_trajectory.iter().enumerate() {
            let _ = writeln!(s, "{j},{p},{q}");
        }
        s
    }
}

pub fn precompute(cfg: &RunConfig) -> Result<PrecomputeStats> {
    let bank = cfg.bank()?;
    let (grid, cache_hit) = cfg.classified_grid(&bank)?;
    let key = crate::voxel_grid::ClassifiedGrid::cache_key(&bank, &cfg.grid, &cfg.thresholds, &cfg.weights);
    let per_trajectory = grid
        .trajectories()
        .iter()
        .map(|tv| {
            let p = tv.voxels.iter().filter(|v| v.class == VoxelClass::Priority).count();
            (p, tv.voxels.len() - p)
        })
        .collect();
    Ok(PrecomputeStats {
        cache_path: crate::voxel_grid::ClassifiedGrid::cache_path(Path::new(&cfg.cache_dir), &key),
        cache_hit,
        per_trajectory,
    })
}

/// Progress messages from long-running commands.
pub trait Progress {
    fn message(&mut self, msg: &str);
}

impl<F: FnMut(&str)> Progress for F {
    fn message(&mut self, msg: &str) {
        self(msg)
    }
}

/// Trains according to `cfg` into `out`, writing the verbatim config, the
/// learning curve and checkpoints. With `resume`, continues from
/// `out/checkpoint.bin` when present.
pub fn train(cfg: &RunConfig, config_text: &str, out: &Path, resume: bool, log: &mut dyn Progress) -> Result<Trainer> {
    fs::create_dir_all(out)?;
    let shared = cfg.env_shared()?;
    let stages = cfg.stages();
    let ck_path = out.join(CHECKPOINT_FILE);
    let curve_path = out.join(CURVE_FILE);

    let mut trainer = if resume && ck_path.exists() {
        let ck = Checkpoint::load(&ck_path)?;
        let mut t = ck.into_trainer(cfg.ppo)?;
        if curve_path.exists() {
            let rows = curve_from_csv(&fs::read_to_string(&curve_path)?)?;
            t.curve = rows.into_iter().filter(|r| r.timestep <= t.timesteps).collect();
        }
        log.message(&format!("resuming at step {} (stage {})", t.timesteps, t.stage_index));
        t
    } else {
        let env = make_env(&shared, &stages[0].map, cfg.seed)?;
        Trainer::for_env(&env, &cfg.network, cfg.ppo, cfg.seed)?
    };
    let expected = shared.input_len();
    if trainer.net.input_shape().len() != expected {
        return Err(Error::Shape(format!(
            "checkpoint network takes {} inputs, configuration produces {expected}",
            trainer.net.input_shape().len()
        )));
    }
    fs::write(out.join(CONFIG_FILE), config_text)?;
    log.message(&format!(
        "{}: {} parameters, {} stage(s)",
        cfg.name,
        trainer.net.param_count(),
        stages.len()
    ));

    let every = cfg.train.checkpoint_every;
    let save = |t: &Trainer| -> Result<()> {
        fs::write(&curve_path, curve_to_csv(&t.curve))?;
        Checkpoint::from_trainer(t, config_text).save(&ck_path)
    };
    let mut on_update = |t: &Trainer| -> Result<()> {
        if let Some(r) = t.curve.last() {
            log.message(&format!(
                "step {:>8}  stage {} {:<4} episodes {:>6}  reward {:>8.2}  success {:.2}",
                r.timestep, r.stage, r.map, r.episodes, r.mean_reward, r.success_rate
            ));
        }
        if t.updates % every == 0 {
            save(t)?;
        }
        Ok(())
    };
    let mut stage_log = Vec::new();
    let mut on_stage = |t: &Trainer, i: usize| -> Result<()> {
        stage_log.push(format!("stage {i} ({}) finished at step {}", stages[i].map, t.timesteps));
        Checkpoint::from_trainer(t, config_text).save(&out.join(format!("checkpoint-stage{i}.bin")))
    };
    trainer.train_curriculum(
        &stages,
        &mut |m, s| make_env(&shared, m, s),
        &mut on_update,
        &mut on_stage,
    )?;
    for l in &stage_log {
        log.message(l);
    }
    fs::write(&curve_path, curve_to_csv(&trainer.curve))?;
    Checkpoint::from_trainer(&trainer, config_text).save(&ck_path)?;
    Ok(trainer)
}

/// Loads a checkpoint and checks that its network fits `cfg`.
pub fn load_policy(cfg: &RunConfig, checkpoint: &Path) -> Result<crate::learn::PolicyValueNet<f32>> {
    let ck = Checkpoint::load(checkpoint)?;
    let net = ck.network()?;
    let shared = cfg.env_shared()?;
    if net.input_shape().len() != shared.input_len() || net.n_actions() != shared.bank.len() {
        return Err(Error::Shape(format!(
            "checkpoint network ({} inputs, {} actions) does not match the configured layout `{}` ({} inputs, {} actions)",
            net.input_shape().len(),
            net.n_actions(),
            cfg.env.layout,
            shared.input_len(),
            shared.bank.len()
        )));
    }
    Ok(net)
}

pub fn eval(cfg: &RunConfig, checkpoint: &Path, maps: &[String], episodes: usize, seed: u64) -> Result<Vec<EvalReport>> {
    let net = load_policy(cfg, checkpoint)?;
    let shared = cfg.env_shared()?;
    maps.iter()
        .map(|m| {
            let mut env = make_env(&shared, m, seed)?;
            evaluate(&net, &mut env, episodes, seed, EvalPolicy::Greedy)
        })
        .collect()
}

pub const EVAL_HEADER: &str =
    "method,map,episodes,success_rate,collision_rate,timeout_rate,mean_time_to_goal,mean_return";

pub fn eval_to_csv(method: &str, reports: &[EvalReport]) -> String {
    let mut s = String::from(EVAL_HEADER);
    s.push('\n');
    for r in reports {
        push_eval_row(&mut s, method, r);
    }
    s
}

fn push_eval_row(s: &mut String, method: &str, r: &EvalReport) {
    let _ = writeln!(
        s,
        "{method},{},{},{},{},{},{},{}",
        r.map, r.episodes, r.success_rate, r.collision_rate, r.timeout_rate, r.mean_time_to_goal, r.mean_return
    );
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub method: String,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub rank: usize,
    pub method: String,
    pub mean_success: f64,
}

/// Ranks methods by mean success across maps, best first; ties keep input order.
pub fn summarize(rows: &[BenchmarkRow]) -> Vec<SummaryRow> {
    let mut methods: Vec<String> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let mut out: Vec<SummaryRow> = methods
        .into_iter()
        .map(|m| {
            let rs: Vec<f64> = rows.iter().filter(|r| r.method == m).map(|r| r.report.success_rate).collect();
            SummaryRow {
                rank: 0,
                mean_success: rs.iter().sum::<f64>() / rs.len() as f64,
                method: m,
            }
        })
        .collect();
    out.sort_by(|a, b| b.mean_success.total_cmp(&a.mean_success));
    for (i, r) in out.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    out
}

/// Trains (or reuses a finished run in `out/<name>`) and evaluates each
/// configuration on its evaluation maps. Writes `benchmark.csv` and
/// `summary.csv` into `out`.
pub fn benchmark(
    configs: &[(RunConfig, String)],
    out: &Path,
    episodes: Option<usize>,
    log: &mut dyn Progress,
) -> Result<(Vec<BenchmarkRow>, Vec<SummaryRow>)> {
    if configs.len() < 2 {
        return Err(Error::Usage("benchmark needs at least two run configurations".into()));
    }
    let mut names: Vec<&str> = configs.iter().map(|(c, _)| c.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::config("name", "benchmark configurations need distinct names"));
    }
    fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    for (cfg, text) in configs {
        let dir = out.join(&cfg.name);
        let ck = dir.join(CHECKPOINT_FILE);
        let total: u64 = cfg.stages().iter().map(|s| s.steps).sum();
        let finished = Checkpoint::load(&ck).map(|c| c.header.timesteps >= total).unwrap_or(false);
        if finished {
            log.message(&format!("{}: reusing finished run in {}", cfg.name, dir.display()));
        } else {
            train(cfg, text, &dir, true, log)?;
        }
        let n = episodes.unwrap_or(cfg.eval.episodes);
        let reports = eval(cfg, &ck, &cfg.eval.maps, n, cfg.eval.seed)?;
        fs::write(dir.join(EVAL_FILE), eval_to_csv(&cfg.name, &reports))?;
        rows.extend(reports.into_iter().map(|report| BenchmarkRow {
            method: cfg.name.clone(),
            report,
        }));
    }
    let mut csv = String::from(EVAL_HEADER);
    csv.push('\n');
    for r in &rows {
        push_eval_row(&mut csv, &r.method, &r.report);
    }
    fs::write(out.join(BENCHMARK_FILE), csv)?;
    let summary = summarize(&rows);
    let mut s = String::from("rank,method,mean_success\n");
    for r in &summary {
        let _ = writeln!(s, "{},{},{}", r.rank, r.method, r.mean_success);
    }
    fs::write(out.join(SUMMARY_FILE), s)?;
    Ok((rows, summary))
}
