//! Episodic navigation environment: sensing, occupancy scoring, frame
//! stacking, reward and termination.

mod observation;
mod reward;

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use observation::{
    build_laser_obs, build_observation, build_target_obs, ActionObs, Layout, Observation, StackBuffer, TargetObs,
    EXTRA_INPUTS, LASER_STRIDE,
};
pub use reward::{compute_reward, Outcome, RewardConfig};

use crate::error::{Error, Result};
use crate::kinematics::{PrimitiveBank, Point3};
use crate::occupancy::evaluate_into;
use crate::voxel_grid::{ClassifiedGrid, OccupancyArray};
use crate::world::{sample_start_goal, scan_to_points_into, LidarSpec, RobotState, ScanFrame, Vec2, World, WorldMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub layout: Layout,
    pub n_stack: usize,
    pub n_skip: usize,
    /// Control period in seconds.
    pub dt: f64,
    pub robot_radius: f64,
    pub min_start_goal_separation: f64,
    /// Divide the target distance by the map diagonal.
    pub normalize_target: bool,
    /// Start every agent at a random point of its loop.
    pub randomize_agents: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            layout: Layout::Occ1d,
            n_stack: 5,
            n_skip: 2,
            dt: 0.1,
            robot_radius: 0.2,
            min_start_goal_separation: 1.0,
            normalize_target: false,
            randomize_agents: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_stack == 0 {
            return Err(Error::config("env.n_stack", "must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("env.dt", "must be positive"));
        }
        if !(self.robot_radius >= 0.0) {
            return Err(Error::config("env.robot_radius", "must be non-negative"));
        }
        if !(self.min_start_goal_separation >= 0.0) {
            return Err(Error::config("env.min_start_goal_separation", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub outcome: Outcome,
}

/// Everything an environment instance needs that is shared and immutable.
#[derive(Debug, Clone)]
pub struct EnvShared {
    pub bank: Arc<PrimitiveBank>,
    pub grid: Arc<ClassifiedGrid>,
    pub lidar: LidarSpec,
    pub reward: RewardConfig,
    pub env: EnvConfig,
}

impl EnvShared {
    pub fn validate(&self) -> Result<()> {
        self.lidar.validate()?;
        self.reward.validate()?;
        self.env.validate()?;
        if self.bank.len() != self.grid.len() {
            return Err(Error::Shape(format!(
                "bank has {} primitives, grid classifies {}",
                self.bank.len(),
                self.grid.len()
            )));
        }
        Ok(())
    }

    pub fn frame_len(&self) -> usize {
        if self.env.layout.is_laser() {
            self.lidar.n_beams.div_ceil(LASER_STRIDE)
        } else {
            self.bank.len()
        }
    }

    /// `(channels, height, width)` of the observation block.
    pub fn block_shape(&self) -> (usize, usize, usize) {
        self.env.layout.block_shape(self.frame_len(), self.env.n_stack)
    }

    pub fn input_len(&self) -> usize {
        self.frame_len() * self.env.n_stack + EXTRA_INPUTS
    }
}

#[derive(Debug, Clone)]
struct TraceRow {
    step: usize,
    state: RobotState,
    action: Option<usize>,
    reward: f64,
    outcome: Outcome,
    h: Vec<f64>,
}

const START_TRIES: usize = 1000;

pub struct Env {
    shared: EnvShared,
    world: World,
    rng: ChaCha8Rng,
    state: RobotState,
    goal: Vec2,
    stack: StackBuffer,
    occ: OccupancyArray,
    points: Vec<Point3>,
    frame: Vec<f64>,
    h: Vec<f64>,
    prev_action: ActionObs,
    d_prev: f64,
    step_count: usize,
    done: bool,
    trace: Option<(bool, Vec<TraceRow>)>,
}

impl Env {
    pub fn new(map: Arc<WorldMap>, shared: EnvShared, seed: u64) -> Result<Self> {
        shared.validate()?;
        map.validate()?;
        let occ = OccupancyArray::new(shared.grid.spec().len(), 1.0);
        let stack = StackBuffer::new(shared.env.n_stack, shared.env.n_skip)?;
        Ok(Self {
            world: World::new(map),
            shared,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: RobotState::default(),
            goal: Vec2::default(),
            stack,
            occ,
            points: Vec::new(),
            frame: Vec::new(),
            h: Vec::new(),
            prev_action: ActionObs::default(),
            d_prev: 0.0,
            step_count: 0,
            done: true,
            trace: None,
        })
    }

    pub fn shared(&self) -> &EnvShared {
        &self.shared
    }

    pub fn map(&self) -> &WorldMap {
        self.world.map()
    }

    /// Swaps the map; takes effect at the next reset.
    pub fn set_map(&mut self, map: Arc<WorldMap>) -> Result<()> {
        map.validate()?;
        self.world = World::new(map);
        self.done = true;
        Ok(())
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn goal(&self) -> Vec2 {
        self.goal
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Occupancy values of the most recent frame (empty for laser layouts).
    pub fn last_occupancy(&self) -> &[f64] {
        &self.h
    }

    pub fn action_count(&self) -> usize {
        self.shared.bank.len()
    }

    pub fn target_scale(&self) -> f64 {
        if self.shared.env.normalize_target {
            1.0 / self.world.map().bounds.diagonal()
        } else {
            1.0
        }
    }

    /// Starts recording one row per step; `with_h` adds the occupancy values.
    pub fn enable_trace(&mut self, with_h: bool) {
        self.trace = Some((with_h, Vec::new()));
    }

    /// Starts a new episode. `seed` reseeds the episode generator.
    pub fn reset(&mut self, seed: Option<u64>) -> Result<Observation> {
        if let Some(s) = seed {
            self.rng = ChaCha8Rng::seed_from_u64(s);
        }
        let map = self.world.map().clone();
        let cfg = self.shared.env;
        let tau_fail = self.shared.reward.tau_fail;
        let mut placed = false;
        for _ in 0..START_TRIES {
            let (start, heading, goal) = sample_start_goal(&map, &mut self.rng, cfg.min_start_goal_separation)?;
            if cfg.randomize_agents {
                let travel: Vec<f64> = map
                    .agents
                    .iter()
                    .map(|a| {
                        let l = a.loop_length();
                        if l > 0.0 {
                            self.rng.gen_range(0.0..l)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                self.world.reset();
                self.world.set_agent_travel(&travel);
            } else {
                self.world.reset();
            }
            self.state = RobotState {
                x: start.x,
                y: start.y,
                theta: heading,
                v: 0.0,
                w: 0.0,
            };
            self.goal = goal;
            // leave a margin so the first step cannot be a forced collision,
            // and only accept goals the robot footprint fits around
            let at_goal = RobotState { x: goal.x, y: goal.y, ..self.state };
            if self.world.obstacle_distance(&self.state, 0.0) >= tau_fail + 2.0 * cfg.robot_radius
                && self.world.obstacle_distance(&at_goal, 0.0) >= tau_fail + cfg.robot_radius
            {
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::MapConfig {
                map: map.name.clone(),
                reason: "could not place the robot and goal clear of obstacles".into(),
            });
        }
        self.step_count = 0;
        self.done = false;
        self.prev_action = ActionObs::default();
        self.perceive()?;
        self.stack.reset(&self.frame);
        let target = build_target_obs(&self.state, self.goal);
        self.d_prev = target.d_target;
        if let Some((_, rows)) = &mut self.trace {
            rows.clear();
        }
        self.record(None, 0.0, Outcome::Running);
        Ok(build_observation(cfg.layout, &self.stack, target, self.prev_action))
    }

    fn perceive(&mut self) -> Result<()> {
        let mut scan = self.world.scan(&self.state, &self.shared.lidar);
        let jitter = self.shared.lidar.range_jitter;
        if jitter > 0.0 {
            let max = self.shared.lidar.max_range;
            for r in scan.ranges.iter_mut().filter(|r| **r < max) {
                *r = (*r + self.rng.gen_range(-jitter..=jitter)).clamp(0.0, max);
            }
        }
        if self.shared.env.layout.is_laser() {
            self.frame = build_laser_obs(&scan, &self.shared.lidar);
        } else {
            self.occupancy_from_scan(&scan)?;
            self.frame.clone_from(&self.h);
        }
        Ok(())
    }

    fn occupancy_from_scan(&mut self, scan: &ScanFrame) -> Result<()> {
        scan_to_points_into(scan, &self.shared.lidar, &mut self.points);
        self.occ.update(&self.points, self.shared.grid.spec());
        evaluate_into(&self.shared.grid, &self.occ, &mut self.h)
    }

    pub fn step(&mut self, action_index: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage("step called on a finished episode; call reset first".into()));
        }
        let action = self.shared.bank.index_to_action(action_index)?;
        self.state = self.world.step(&self.state, &action, self.shared.env.dt);
        self.step_count += 1;
        self.perceive()?;
        self.stack.push(&self.frame);

        let target = build_target_obs(&self.state, self.goal);
        let d_obs = self.world.obstacle_distance(&self.state, 0.0);
        let (reward, outcome) = compute_reward(self.d_prev, target.d_target, d_obs, self.step_count, &self.shared.reward);
        self.d_prev = target.d_target;
        self.prev_action = ActionObs {
            v_pre: action.v,
            w_pre: action.w,
        };
        self.done = outcome.is_terminal();
        self.record(Some(action_index), reward, outcome);
        Ok(StepResult {
            observation: build_observation(self.shared.env.layout, &self.stack, target, self.prev_action),
            reward,
            done: self.done,
            outcome,
        })
    }

    fn record(&mut self, action: Option<usize>, reward: f64, outcome: Outcome) {
        if let Some((with_h, rows)) = &mut self.trace {
            rows.push(TraceRow {
                step: self.step_count,
                state: self.state,
                action,
                reward,
                outcome,
                h: if *with_h { self.h.clone() } else { Vec::new() },
            });
        }
    }

    /// Writes the recorded episode as CSV with header
    /// `step,time,x,y,theta,v,w,action,reward,outcome[,h0,h1,...]`.
    pub fn write_trace(&self, path: &Path) -> Result<()> {
        let Some((with_h, rows)) = &self.trace else {
            return Err(Error::Usage("tracing was not enabled".into()));
        };
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(w, "step,time,x,y,theta,v,w,action,reward,outcome")?;
        if *with_h {
            for j in 0..self.shared.bank.len() {
                write!(w, ",h{j}")?;
            }
        }
        writeln!(w)?;
        for r in rows {
            let action = r.action.map_or(String::new(), |a| a.to_string());
            write!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.step,
                r.step as f64 * self.shared.env.dt,
                r.state.x,
                r.state.y,
                r.state.theta,
                r.state.v,
                r.state.w,
                action,
                r.reward,
                r.outcome.as_str()
            )?;
            for h in &r.h {
                write!(w, ",{h}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}
