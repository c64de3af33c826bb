//! Velocity-space discretization and the motion-primitive bank.
//!
//! Every discrete action `(v, w)` owns exactly one pre-sampled trajectory,
//! obtained by holding the command constant over a fixed horizon and
//! sampling the closed-form unicycle arc in the robot frame.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point in the robot frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn distance_sq(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }
}

/// `sin(x) / x`, continuous through zero.
pub(crate) fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Exact displacement of a unicycle holding `(v, w)` for `t` seconds from
/// heading `heading`. Returns `(dx, dy, dtheta)`.
///
/// Uses the half-angle form `v t cos(h + wt/2) sinc(wt/2)`, which equals
/// `(v/w)(sin(h + wt) - sin h)` but stays well conditioned as `w -> 0`.
pub fn arc_displacement(v: f64, w: f64, t: f64, heading: f64) -> (f64, f64, f64) {
    let half = 0.5 * w * t;
    let chord = v * t * sinc(half);
    let mid = heading + half;
    (chord * mid.cos(), chord * mid.sin(), w * t)
}

/// Bounds of the discretized velocity command space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionSpace {
    pub n_v: usize,
    pub n_w: usize,
    pub v_max: f64,
    pub w_min: f64,
    pub w_max: f64,
}

impl Default for ActionSpace {
    fn default() -> Self {
        Self {
            n_v: 5,
            n_w: 21,
            v_max: 0.75,
            w_min: -1.5,
            w_max: 1.5,
        }
    }
}

impl ActionSpace {
    pub fn new(n_v: usize, n_w: usize, v_max: f64, w_min: f64, w_max: f64) -> Result<Self> {
        let space = Self {
            n_v,
            n_w,
            v_max,
            w_min,
            w_max,
        };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_v == 0 {
            return Err(Error::config("action_space.n_v", "must be at least 1"));
        }
        if self.n_w == 0 {
            return Err(Error::config("action_space.n_w", "must be at least 1"));
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return Err(Error::config("action_space.v_max", "must be positive"));
        }
        if !(self.w_min < self.w_max) || !self.w_min.is_finite() || !self.w_max.is_finite() {
            return Err(Error::config("action_space.w_min", "requires w_min < w_max"));
        }
        Ok(())
    }

    /// Total number of discrete actions.
    pub fn len(&self) -> usize {
        self.n_v * self.n_w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn v_grid(&self) -> Vec<f64> {
        linspace(0.0, self.v_max, self.n_v)
    }

    pub fn w_grid(&self) -> Vec<f64> {
        linspace(self.w_min, self.w_max, self.n_w)
    }

    /// Row-major (v outer, w inner) enumeration of all actions.
    pub fn discretize(&self) -> Vec<ActionTuple> {
        let vs = self.v_grid();
        let ws = self.w_grid();
        let mut out = Vec::with_capacity(self.len());
        for &v in &vs {
            for &w in &ws {
                out.push(ActionTuple {
                    v,
                    w,
                    index: out.len(),
                });
            }
        }
        out
    }

    pub fn action(&self, index: usize) -> Result<ActionTuple> {
        if index >= self.len() {
            return Err(Error::Range {
                what: "action",
                index,
                limit: self.len(),
            });
        }
        let (iv, iw) = (index / self.n_w, index % self.n_w);
        Ok(ActionTuple {
            v: grid_value(0.0, self.v_max, self.n_v, iv),
            w: grid_value(self.w_min, self.w_max, self.n_w, iw),
            index,
        })
    }
}

/// Endpoint-inclusive uniform grid. A single-point grid is the lower bound.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| grid_value(lo, hi, n, i)).collect()
}

fn grid_value(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    if n <= 1 {
        lo
    } else {
        lo + i as f64 * ((hi - lo) / (n - 1) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionTuple {
    pub v: f64,
    pub w: f64,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub action_index: usize,
    pub points: Vec<Point3>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Samples the constant-command arc at `t_i = i * horizon / n_t`, `i = 1..=n_t`.
pub fn rollout_trajectory(action: &ActionTuple, horizon: f64, n_t: usize) -> Trajectory {
    debug_assert!(horizon > 0.0 && n_t >= 2);
    let points = (1..=n_t)
        .map(|i| {
            let t = i as f64 * horizon / n_t as f64;
            let (x, y, _) = arc_displacement(action.v, action.w, t, 0.0);
            Point3::new(x, y, 0.0)
        })
        .collect();
    Trajectory {
        action_index: action.index,
        points,
    }
}

/// Index-aligned trajectories, one per discrete action.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveBank {
    space: ActionSpace,
    horizon: f64,
    n_t: usize,
    actions: Vec<ActionTuple>,
    trajectories: Vec<Trajectory>,
}

pub const DEFAULT_HORIZON: f64 = 2.5;
pub const DEFAULT_SAMPLES: usize = 20;

impl PrimitiveBank {
    pub fn build(space: ActionSpace, horizon: f64, n_t: usize) -> Result<Self> {
        space.validate()?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::config("primitives.horizon", "must be positive"));
        }
        if n_t < 2 {
            return Err(Error::config("primitives.n_t", "must be at least 2"));
        }
        let actions = space.discretize();
        let trajectories = actions
            .iter()
            .map(|a| rollout_trajectory(a, horizon, n_t))
            .collect();
        Ok(Self {
            space,
            horizon,
            n_t,
            actions,
            trajectories,
        })
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn samples_per_trajectory(&self) -> usize {
        self.n_t
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn actions(&self) -> &[ActionTuple] {
        &self.actions
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn trajectory(&self, index: usize) -> &Trajectory {
        &self.trajectories[index]
    }

    pub fn index_to_action(&self, index: usize) -> Result<ActionTuple> {
        self.actions.get(index).copied().ok_or(Error::Range {
            what: "action",
            index,
            limit: self.actions.len(),
        })
    }

    /// Inverse of [`index_to_action`](Self::index_to_action); matches on the exact grid values.
    pub fn action_to_index(&self, v: f64, w: f64) -> Option<usize> {
        self.actions
            .iter()
            .position(|a| a.v == v && a.w == w)
    }

    /// Plain-text dump: a `#`-prefixed magic line, one header line, then one
    /// `traj point x y z` line per sample.
    pub fn to_text(&self) -> String {
        let s = &self.space;
        let mut out = String::new();
        out.push_str("# trajocc primitive-bank v1\n");
        let _ = writeln!(
            out,
            "n_v={} n_w={} horizon={:?} n_t={} v_max={:?} w_min={:?} w_max={:?}",
            s.n_v, s.n_w, self.horizon, self.n_t, s.v_max, s.w_min, s.w_max
        );
        for traj in &self.trajectories {
            for (i, p) in traj.points.iter().enumerate() {
                let _ = writeln!(out, "{} {} {:?} {:?} {:?}", traj.action_index, i, p.x, p.y, p.z);
            }
        }
        out
    }

    /// Parses [`to_text`](Self::to_text) output. Header values drive the
    /// rebuild; the point lines are checked against it.
    pub fn from_text(text: &str) -> Result<Self> {
        const SRC: &str = "primitive-bank";
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == "# trajocc primitive-bank v1" => {}
            _ => return Err(Error::parse(SRC, 1, "missing `# trajocc primitive-bank v1` header")),
        }
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::parse(SRC, 2, "missing parameter line"))?;
        let mut kv = std::collections::HashMap::new();
        for tok in header.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::parse(SRC, hline + 1, format!("expected key=value, got `{tok}`")))?;
            kv.insert(k, v);
        }
        let get = |k: &str| -> Result<&str> {
            kv.get(k)
                .copied()
                .ok_or_else(|| Error::parse(SRC, hline + 1, format!("missing `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse::<f64>()
                .map_err(|e| Error::parse(SRC, hline + 1, format!("`{k}`: {e}")))
        };
        let int = |k: &str| -> Result<usize> {
            get(k)?
                .parse::<usize>()
                .map_err(|e| Error::parse(SRC, hline + 1, format!("`{k}`: {e}")))
        };
        let space = ActionSpace::new(int("n_v")?, int("n_w")?, num("v_max")?, num("w_min")?, num("w_max")?)?;
        let bank = Self::build(space, num("horizon")?, int("n_t")?)?;
        let mut seen = 0usize;
        for (lineno, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(Error::parse(SRC, lineno + 1, "expected `traj point x y z`"));
            }
            let parse_err = |e: &dyn std::fmt::Display| Error::parse(SRC, lineno + 1, e.to_string());
            let j: usize = f[0].parse().map_err(|e| parse_err(&e))?;
            let i: usize = f[1].parse().map_err(|e| parse_err(&e))?;
            let p = Point3::new(
                f[2].parse().map_err(|e| parse_err(&e))?,
                f[3].parse().map_err(|e| parse_err(&e))?,
                f[4].parse().map_err(|e| parse_err(&e))?,
            );
            let expected = bank
                .trajectories
                .get(j)
                .and_then(|t| t.points.get(i))
                .ok_or_else(|| Error::parse(SRC, lineno + 1, "point index outside header shape"))?;
            if expected.distance(&p) > 1e-9 {
                return Err(Error::parse(SRC, lineno + 1, "point disagrees with header parameters"));
            }
            seen += 1;
        }
        if seen != bank.len() * bank.n_t {
            return Err(Error::parse(SRC, 0, format!("expected {} points, found {seen}", bank.len() * bank.n_t)));
        }
        Ok(bank)
    }
}
