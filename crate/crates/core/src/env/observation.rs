use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{wrap_angle, LidarSpec, RobotState, ScanFrame, Vec2};

/// Arrangement of the stacked perception block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layout {
    #[serde(rename = "occ1d")]
    Occ1d,
    #[serde(rename = "occch")]
    OccCh,
    #[serde(rename = "occ2d")]
    Occ2d,
    #[serde(rename = "laser1d")]
    Laser1d,
    #[serde(rename = "laserch")]
    LaserCh,
}

impl Layout {
    pub const ALL: [Layout; 5] = [Layout::Occ1d, Layout::OccCh, Layout::Occ2d, Layout::Laser1d, Layout::LaserCh];

    pub fn is_laser(self) -> bool {
        matches!(self, Layout::Laser1d | Layout::LaserCh)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Layout::Occ1d => "occ1d",
            Layout::OccCh => "occch",
            Layout::Occ2d => "occ2d",
            Layout::Laser1d => "laser1d",
            Layout::LaserCh => "laserch",
        }
    }

    /// `(channels, height, width)` of the block for frames of `frame_len`.
    pub fn block_shape(self, frame_len: usize, n_stack: usize) -> (usize, usize, usize) {
        match self {
            Layout::Occ1d | Layout::Laser1d => (1, frame_len * n_stack, 1),
            Layout::OccCh | Layout::LaserCh => (n_stack, frame_len, 1),
            Layout::Occ2d => (1, frame_len, n_stack),
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Layout::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Usage(format!("unknown layout `{s}` (expected occ1d|occch|occ2d|laser1d|laserch)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TargetObs {
    pub d_target: f64,
    pub theta_target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionObs {
    pub v_pre: f64,
    pub w_pre: f64,
}

pub fn build_target_obs(state: &RobotState, goal: Vec2) -> TargetObs {
    let delta = goal - state.position();
    let d_target = delta.norm();
    let theta_target = if d_target == 0.0 {
        0.0
    } else {
        wrap_angle(delta.y.atan2(delta.x) - state.theta)
    };
    TargetObs { d_target, theta_target }
}

/// Every fourth beam starting at beam 0, scaled by the maximum range.
pub fn build_laser_obs(scan: &ScanFrame, spec: &LidarSpec) -> Vec<f64> {
    scan.ranges
        .iter()
        .step_by(LASER_STRIDE)
        .map(|r| (r / spec.max_range).clamp(0.0, 1.0))
        .collect()
}

pub const LASER_STRIDE: usize = 4;

/// Ring of recent per-step frames; the stacked view picks `n_stack`
/// frames `n_skip + 1` steps apart, newest first.
#[derive(Debug, Clone)]
pub struct StackBuffer {
    n_stack: usize,
    n_skip: usize,
    frames: VecDeque<Vec<f64>>,
}

impl StackBuffer {
    pub fn new(n_stack: usize, n_skip: usize) -> Result<Self> {
        if n_stack == 0 {
            return Err(Error::config("env.n_stack", "must be at least 1"));
        }
        Ok(Self {
            n_stack,
            n_skip,
            frames: VecDeque::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        (self.n_stack - 1) * (self.n_skip + 1) + 1
    }

    pub fn n_stack(&self) -> usize {
        self.n_stack
    }

    pub fn n_skip(&self) -> usize {
        self.n_skip
    }

    /// Clears the history and fills it with copies of `first`.
    pub fn reset(&mut self, first: &[f64]) {
        self.frames.clear();
        for _ in 0..self.capacity() {
            self.frames.push_back(first.to_vec());
        }
    }

    pub fn push(&mut self, frame: &[f64]) {
        if self.frames.is_empty() {
            self.reset(frame);
            return;
        }
        let mut buf = if self.frames.len() >= self.capacity() {
            self.frames.pop_back().unwrap_or_default()
        } else {
            Vec::new()
        };
        buf.clear();
        buf.extend_from_slice(frame);
        self.frames.push_front(buf);
    }

    pub fn is_warm(&self) -> bool {
        !self.frames.is_empty()
    }

    /// Stacked frames, newest first.
    pub fn stacked(&self) -> impl Iterator<Item = &[f64]> {
        let last = self.frames.len().saturating_sub(1);
        (0..self.n_stack).map(move |k| self.frames[(k * (self.n_skip + 1)).min(last)].as_slice())
    }

    pub fn frame_len(&self) -> usize {
        self.frames.front().map_or(0, Vec::len)
    }
}

/// Policy input: stacked perception block plus target and previous action.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub layout: Layout,
    /// `(channels, height, width)`, flattened row-major in `block`.
    pub shape: (usize, usize, usize),
    pub block: Vec<f32>,
    pub target: TargetObs,
    pub action: ActionObs,
}

impl Observation {
    pub fn block_len(&self) -> usize {
        self.block.len()
    }

    /// Length of the flat network input: block, then `d, theta, v, w`.
    pub fn input_len(&self) -> usize {
        self.block.len() + EXTRA_INPUTS
    }

    pub fn write_input(&self, out: &mut Vec<f32>, target_scale: f64) {
        out.clear();
        out.extend_from_slice(&self.block);
        out.extend_from_slice(&[
            (self.target.d_target * target_scale) as f32,
            self.target.theta_target as f32,
            self.action.v_pre as f32,
            self.action.w_pre as f32,
        ]);
    }

    pub fn to_input(&self, target_scale: f64) -> Vec<f32> {
        let mut v = Vec::with_capacity(self.input_len());
        self.write_input(&mut v, target_scale);
        v
    }
}

/// Target distance, target angle, previous `v`, previous `w`.
pub const EXTRA_INPUTS: usize = 4;

pub fn build_observation(layout: Layout, stack: &StackBuffer, target: TargetObs, action: ActionObs) -> Observation {
    let n = stack.frame_len();
    let s = stack.n_stack();
    let shape = layout.block_shape(n, s);
    let mut block = vec![0.0f32; n * s];
    match layout {
        Layout::Occ2d => {
            for (t, frame) in stack.stacked().enumerate() {
                for (j, &h) in frame.iter().enumerate() {
                    block[j * s + t] = h as f32;
                }
            }
        }
        _ => {
            for (t, frame) in stack.stacked().enumerate() {
                for (j, &h) in frame.iter().enumerate() {
                    block[t * n + j] = h as f32;
                }
            }
        }
    }
    Observation {
        layout,
        shape,
        block,
        target,
        action,
    }
}
