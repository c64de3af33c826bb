use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trajocc::bench::{self, CHECKPOINT_FILE, EVAL_FILE};
use trajocc::config::RunConfig;
use trajocc::env::Layout;
use trajocc::learn::Checkpoint;
use trajocc::voxel_grid::ClassifiedGrid;
use trajocc::world::{builtin_maps, load_map, WorldMap};
use trajocc::{Error, Result};

#[derive(Parser)]
#[command(name = "trajocc", version, about = "Trajectory-occupancy navigation: precompute, train, evaluate, benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the observation layout.
    #[arg(long, value_parser = parse_layout)]
    layout: Option<Layout>,
}

fn parse_layout(s: &str) -> std::result::Result<Layout, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Build the primitive bank and classified grid, and print voxel statistics.
    Precompute {
        #[command(flatten)]
        common: Common,
        /// Also write per-trajectory counts to this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a policy (single map or curriculum).
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint with greedy actions.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint file, or a run directory containing one.
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        /// Maps to evaluate on (defaults to the configured list).
        #[arg(long = "map")]
        maps: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate several configurations and rank them.
    Benchmark {
        /// Two or more run configurations.
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "runs/benchmark")]
        out: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Describe a checkpoint, grid cache, map or configuration file.
    Inspect {
        path: Option<PathBuf>,
        /// Print the default configuration as TOML.
        #[arg(long)]
        defaults: bool,
    },
    /// List the bundled maps.
    MapList,
}

fn load_config(common: &Common) -> Result<(RunConfig, String)> {
    let (mut cfg, mut text) = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => {
            let c = RunConfig::default();
            let t = c.to_toml();
            (c, t)
        }
    };
    let overridden = common.seed.is_some() || common.layout.is_some();
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(l) = common.layout {
        cfg.env.layout = l;
    }
    if overridden {
        cfg.validate()?;
        // the stored config must reproduce the run on its own
        text = cfg.to_toml();
    }
    Ok((cfg, text))
}

fn stderr_log(msg: &str) {
    eprintln!("{msg}");
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Precompute { common, out } => {
            let (cfg, _) = load_config(&common)?;
            let stats = bench::precompute(&cfg)?;
            let (p, s) = stats.totals();
            let n = stats.per_trajectory.len();
            println!(
                "{} trajectories, cache {} ({})",
                n,
                if stats.cache_hit { "hit" } else { "miss, built" },
                stats.cache_path.display()
            );
            println!("priority voxels: {p} total, {:.1} per trajectory", p as f64 / n as f64);
            println!("support voxels:  {s} total, {:.1} per trajectory", s as f64 / n as f64);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("voxels.csv"), stats.to_csv())?;
            }
        }
        Command::Train { common, out, resume } => {
            let (cfg, text) = load_config(&common)?;
            let t = bench::train(&cfg, &text, &out, resume, &mut stderr_log)?;
            println!("trained {} steps; outputs in {}", t.timesteps, out.display());
        }
        Command::Eval {
            common,
            checkpoint,
            episodes,
            maps,
            out,
        } => {
            let ck_path = if checkpoint.is_dir() {
                checkpoint.join(CHECKPOINT_FILE)
            } else {
                checkpoint
            };
            let (cfg, _) = if common.config.is_some() {
                load_config(&common)?
            } else {
                let ck = Checkpoint::load(&ck_path)?;
                let mut cfg = RunConfig::from_toml(&ck_path.display().to_string(), &ck.header.config)?;
                if let Some(l) = common.layout {
                    cfg.env.layout = l;
                }
                let text = ck.header.config;
                (cfg, text)
            };
            let maps = if maps.is_empty() { cfg.eval.maps.clone() } else { maps };
            let seed = common.seed.unwrap_or(cfg.eval.seed);
            let reports = bench::eval(&cfg, &ck_path, &maps, episodes.unwrap_or(cfg.eval.episodes), seed)?;
            let csv = bench::eval_to_csv(&cfg.name, &reports);
            print!("{csv}");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join(EVAL_FILE), csv)?;
            }
        }
        Command::Benchmark {
            configs,
            seed,
            out,
            episodes,
        } => {
            let loaded = configs
                .iter()
                .map(|p| {
                    load_config(&Common {
                        config: Some(p.clone()),
                        seed,
                        layout: None,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let (_, summary) = bench::benchmark(&loaded, &out, episodes, &mut stderr_log)?;
            println!("rank,method,mean_success");
            for r in summary {
                println!("{},{},{:.3}", r.rank, r.method, r.mean_success);
            }
        }
        Command::Inspect { path, defaults } => {
            if defaults {
                print!("{}", RunConfig::default().to_toml());
            }
            if let Some(p) = path {
                inspect(&p)?;
            } else if !defaults {
                return Err(Error::Usage("inspect needs a path or --defaults".into()));
            }
        }
        Command::MapList => {
            println!("name,width,height,static,agents");
            for m in builtin_maps() {
                print_map_row(&m);
            }
        }
    }
    Ok(())
}

fn print_map_row(m: &WorldMap) {
    println!(
        "{},{},{},{},{}",
        m.name,
        m.bounds.width(),
        m.bounds.height(),
        m.shapes.len(),
        m.agents.len()
    );
}

fn inspect(p: &Path) -> Result<()> {
    let bytes = std::fs::read(p)?;
    if bytes.starts_with(b"TOCK") {
        let ck = Checkpoint::from_bytes(&p.display().to_string(), &bytes)?;
        let h = &ck.header;
        println!("checkpoint: {} network, {} parameters", h.network.variant.as_str(), h.param_count);
        println!(
            "input: {}x{}x{} block + {} extra; {} actions",
            h.input.channels, h.input.height, h.input.width, h.input.extra, h.n_actions
        );
        println!("steps: {} ({} updates, {} episodes), stage {}", h.timesteps, h.updates, h.episodes, h.stage_index);
        for t in &h.shape_table {
            println!("  {:<16} {:?}", t.name, t.shape);
        }
    } else if bytes.starts_with(b"TOCG") {
        let (grid, key) = ClassifiedGrid::read_cache(p)?;
        let (nx, ny, nz) = grid.spec().dims();
        println!("grid cache {}: {nx}x{ny}x{nz} voxels, {} trajectories, {} samples each", &key[..16], grid.len(), grid.samples_per_trajectory());
    } else {
        let text = String::from_utf8_lossy(&bytes);
        if text.trim_start().starts_with("trajocc-map") || text.lines().any(|l| l.trim() == "trajocc-map 1") {
            let m = load_map(&p.display().to_string())?;
            println!("name,width,height,static,agents");
            print_map_row(&m);
        } else {
            let cfg = RunConfig::from_toml(&p.display().to_string(), &text)?;
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}
