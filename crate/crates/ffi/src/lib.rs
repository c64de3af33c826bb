//! C ABI over the occupancy evaluator and the navigation environment.
//!
//! Every function returns a [`TrajoccStatus`]; on failure the message is
//! available from [`trajocc_last_error_message`] on the same thread until
//! the next failing call. Handles are opaque and must be released with the
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use trajocc::config::RunConfig;
use trajocc::env::{Env, EnvShared, Outcome};
use trajocc::kinematics::{PrimitiveBank, Point3};
use trajocc::occupancy::evaluate_into;
use trajocc::voxel_grid::{ClassifiedGrid, OccupancyArray};
use trajocc::world::load_map;
use trajocc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajoccStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Usage = 3,
    Parse = 4,
    Shape = 5,
    Numeric = 6,
    Range = 7,
    Io = 8,
    Panic = 9,
    InvalidUtf8 = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajoccOutcome {
    Running = 0,
    Goal = 1,
    Collision = 2,
    Timeout = 3,
}

impl From<Outcome> for TrajoccOutcome {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Running => TrajoccOutcome::Running,
            Outcome::Goal => TrajoccOutcome::Goal,
            Outcome::Collision => TrajoccOutcome::Collision,
            Outcome::Timeout => TrajoccOutcome::Timeout,
        }
    }
}

/// Primitive bank and classified grid for scoring range hits.
pub struct TrajoccEvaluator {
    grid: ClassifiedGrid,
    occ: OccupancyArray,
    points: Vec<Point3>,
    h: Vec<f64>,
}

/// One navigation environment instance.
pub struct TrajoccEnv {
    env: Env,
    target_scale: f64,
    input: Vec<f32>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> TrajoccStatus {
    match e {
        Error::Config { .. } => TrajoccStatus::Config,
        Error::Usage(_) => TrajoccStatus::Usage,
        Error::MapConfig { .. } | Error::Parse { .. } | Error::Csv(_) => TrajoccStatus::Parse,
        Error::Shape(_) => TrajoccStatus::Shape,
        Error::Numeric(_) => TrajoccStatus::Numeric,
        Error::Range { .. } | Error::DegenerateTrajectory(_) => TrajoccStatus::Range,
        Error::Io(_) => TrajoccStatus::Io,
    }
}

struct Fail(TrajoccStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TrajoccStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TrajoccStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            TrajoccStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(TrajoccStatus::NullPointer, format!("`{what}` is null"))
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn opt_str<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| Fail(TrajoccStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

fn config_from(text: Option<&str>) -> Result<RunConfig, Fail> {
    Ok(match text {
        Some(t) => RunConfig::from_toml("<config>", t)?,
        None => RunConfig::default(),
    })
}

fn build_grid(cfg: &RunConfig) -> Result<(PrimitiveBank, ClassifiedGrid), Fail> {
    let bank = cfg.bank()?;
    let grid = ClassifiedGrid::build(&bank, cfg.grid, cfg.thresholds, &cfg.weights)?;
    Ok((bank, grid))
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn trajocc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn trajocc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Builds an evaluator from a TOML run configuration (null for defaults).
///
/// # Safety
/// `config_toml` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trajocc_evaluator_new(config_toml: *const c_char, out: *mut *mut TrajoccEvaluator) -> TrajoccStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let cfg = config_from(opt_str(config_toml, "config_toml")?)?;
        let (_, grid) = build_grid(&cfg)?;
        let occ = OccupancyArray::new(grid.spec().len(), 1.0);
        *out = Box::into_raw(Box::new(TrajoccEvaluator {
            grid,
            occ,
            points: Vec::new(),
            h: Vec::new(),
        }));
        Ok(())
    })
}

/// # Safety
/// `ev` must come from [`trajocc_evaluator_new`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trajocc_evaluator_num_trajectories(ev: *const TrajoccEvaluator, out: *mut usize) -> TrajoccStatus {
    guard(|| {
        let ev = ev.as_ref().ok_or_else(|| null("ev"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = ev.grid.len();
        Ok(())
    })
}

/// Scores every trajectory against robot-frame hit points given as
/// `n_points` consecutive `(x, y, z)` triples. Writes one value in `[0, 1]`
/// per trajectory into `out_h`, which must hold `out_len` entries.
///
/// # Safety
/// `points` must hold `3 * n_points` doubles (may be null when
/// `n_points == 0`); `out_h` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn trajocc_evaluator_evaluate(
    ev: *mut TrajoccEvaluator,
    points: *const f64,
    n_points: usize,
    out_h: *mut f64,
    out_len: usize,
) -> TrajoccStatus {
    guard(|| {
        let ev = ev.as_mut().ok_or_else(|| null("ev"))?;
        if points.is_null() && n_points > 0 {
            return Err(null("points"));
        }
        if out_h.is_null() {
            return Err(null("out_h"));
        }
        if out_len != ev.grid.len() {
            return Err(Error::Shape(format!("out_len is {out_len}, evaluator has {} trajectories", ev.grid.len())).into());
        }
        let xyz: &[f64] = if n_points == 0 { &[] } else { std::slice::from_raw_parts(points, 3 * n_points) };
        ev.points.clear();
        ev.points.extend(xyz.chunks_exact(3).map(|p| Point3::new(p[0], p[1], p[2])));
        ev.occ.update(&ev.points, ev.grid.spec());
        evaluate_into(&ev.grid, &ev.occ, &mut ev.h)?;
        std::slice::from_raw_parts_mut(out_h, out_len).copy_from_slice(&ev.h);
        Ok(())
    })
}

/// # Safety
/// `ev` must be null or come from [`trajocc_evaluator_new`], and must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn trajocc_evaluator_free(ev: *mut TrajoccEvaluator) {
    if !ev.is_null() {
        drop(Box::from_raw(ev));
    }
}

/// Creates an environment on a bundled map name or map file path.
///
/// # Safety
/// `config_toml` must be null or NUL-terminated; `map` must be
/// NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trajocc_env_new(
    config_toml: *const c_char,
    map: *const c_char,
    seed: u64,
    out: *mut *mut TrajoccEnv,
) -> TrajoccStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let cfg = config_from(opt_str(config_toml, "config_toml")?)?;
        let map = opt_str(map, "map")?.ok_or_else(|| null("map"))?;
        let (bank, grid) = build_grid(&cfg)?;
        let shared = EnvShared {
            bank: Arc::new(bank),
            grid: Arc::new(grid),
            lidar: cfg.lidar,
            reward: cfg.reward,
            env: cfg.env,
        };
        let env = Env::new(Arc::new(load_map(map)?), shared, seed)?;
        *out = Box::into_raw(Box::new(TrajoccEnv {
            target_scale: env.target_scale(),
            env,
            input: Vec::new(),
        }));
        Ok(())
    })
}

/// Length of the flat observation: stacked block, then target distance,
/// target angle, previous linear and angular velocity.
///
/// # Safety
/// `env` must come from [`trajocc_env_new`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trajocc_env_obs_len(env: *const TrajoccEnv, out: *mut usize) -> TrajoccStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = env.env.shared().input_len();
        Ok(())
    })
}

/// # Safety
/// `env` must come from [`trajocc_env_new`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trajocc_env_num_actions(env: *const TrajoccEnv, out: *mut usize) -> TrajoccStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = env.env.action_count();
        Ok(())
    })
}

unsafe fn write_obs(env: &mut TrajoccEnv, obs: &trajocc::env::Observation, out: *mut f32, len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("obs"));
    }
    obs.write_input(&mut env.input, env.target_scale);
    if len != env.input.len() {
        return Err(Error::Shape(format!("obs_len is {len}, observation has {} values", env.input.len())).into());
    }
    std::slice::from_raw_parts_mut(out, len).copy_from_slice(&env.input);
    Ok(())
}

/// Starts an episode seeded with `seed` and writes the first observation.
///
/// # Safety
/// `env` must come from [`trajocc_env_new`]; `obs` must hold `obs_len` floats.
#[no_mangle]
pub unsafe extern "C" fn trajocc_env_reset(env: *mut TrajoccEnv, seed: u64, obs: *mut f32, obs_len: usize) -> TrajoccStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        let o = env.env.reset(Some(seed))?;
        write_obs(env, &o, obs, obs_len)
    })
}

/// Applies one discrete action. `done` receives 1 when the episode ended.
///
/// # Safety
/// `env` must come from [`trajocc_env_new`]; `obs` must hold `obs_len`
/// floats; `reward`, `done` and `outcome` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trajocc_env_step(
    env: *mut TrajoccEnv,
    action: usize,
    obs: *mut f32,
    obs_len: usize,
    reward: *mut f64,
    done: *mut i32,
    outcome: *mut TrajoccOutcome,
) -> TrajoccStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        if reward.is_null() || done.is_null() || outcome.is_null() {
            return Err(null("reward/done/outcome"));
        }
        let r = env.env.step(action)?;
        write_obs(env, &r.observation, obs, obs_len)?;
        *reward = r.reward;
        *done = i32::from(r.done);
        *outcome = r.outcome.into();
        Ok(())
    })
}

/// # Safety
/// `env` must be null or come from [`trajocc_env_new`], and must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn trajocc_env_free(env: *mut TrajoccEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}
