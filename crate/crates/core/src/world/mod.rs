//! Physics-free planar world: a disc robot under exact unicycle motion,
//! static shapes, scripted agents and an analytic range sensor.

pub mod geometry;
pub mod lidar;
pub mod maps;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use geometry::{wrap_angle, Rect, Shape, Vec2};
pub use lidar::{scan_to_points, scan_to_points_into, LidarSpec, ScanFrame};
pub use maps::{builtin_map, builtin_maps, load_map, sample_start_goal, AgentScript, WorldMap};

use crate::kinematics::{arc_displacement, ActionTuple};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    /// Heading, wrapped to `(-pi, pi]`.
    pub theta: f64,
    pub v: f64,
    pub w: f64,
}

impl RobotState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Advances the robot along the exact arc of `(v, w)` for `dt` seconds.
pub fn step_robot(state: &RobotState, v: f64, w: f64, dt: f64) -> RobotState {
    let (dx, dy, dth) = arc_displacement(v, w, dt, state.theta);
    RobotState {
        x: state.x + dx,
        y: state.y + dy,
        theta: wrap_angle(state.theta + dth),
        v,
        w,
    }
}

/// Ranges for a sensor at `origin` with robot heading `heading`, against
/// the given shapes and (optionally) the inside of `bounds`.
pub fn raycast(origin: Vec2, heading: f64, bounds: Option<&Rect>, shapes: &[Shape], spec: &LidarSpec) -> ScanFrame {
    let ranges = (0..spec.n_beams)
        .map(|b| {
            let dir = Vec2::from_angle(heading + spec.beam_angle(b));
            let mut best = spec.max_range;
            if let Some(r) = bounds {
                if let Some(t) = r.ray_exit(origin, dir) {
                    best = best.min(t);
                }
            }
            for s in shapes {
                if let Some(t) = s.ray_hit(origin, dir) {
                    best = best.min(t);
                }
            }
            best
        })
        .collect();
    ScanFrame { ranges }
}

/// Mutable simulation state for one map instance.
#[derive(Debug, Clone)]
pub struct World {
    map: Arc<WorldMap>,
    agent_travel: Vec<f64>,
    time: f64,
    shapes_buf: Vec<Shape>,
}

impl World {
    pub fn new(map: Arc<WorldMap>) -> Self {
        let n = map.agents.len();
        let mut w = Self {
            map,
            agent_travel: vec![0.0; n],
            time: 0.0,
            shapes_buf: Vec::new(),
        };
        w.refresh_shapes();
        w
    }

    pub fn map(&self) -> &WorldMap {
        &self.map
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Puts every agent back at the start of its script.
    pub fn reset(&mut self) {
        self.agent_travel.iter_mut().for_each(|s| *s = 0.0);
        self.time = 0.0;
        self.refresh_shapes();
    }

    /// Sets every agent's distance along its script; used to randomize phase.
    pub fn set_agent_travel(&mut self, travel: &[f64]) {
        self.agent_travel.copy_from_slice(travel);
        self.refresh_shapes();
    }

    pub fn agent_travel(&self) -> &[f64] {
        &self.agent_travel
    }

    fn refresh_shapes(&mut self) {
        self.shapes_buf.clear();
        self.shapes_buf.extend_from_slice(&self.map.shapes);
        for (a, &s) in self.map.agents.iter().zip(&self.agent_travel) {
            self.shapes_buf.push(a.shape_at(s));
        }
    }

    /// Static shapes followed by the agents' current footprints.
    pub fn obstacles(&self) -> &[Shape] {
        &self.shapes_buf
    }

    pub fn agent_positions(&self) -> Vec<Vec2> {
        self.map
            .agents
            .iter()
            .zip(&self.agent_travel)
            .map(|(a, &s)| a.position_at(s))
            .collect()
    }

    pub fn advance_agents(&mut self, dt: f64) {
        for (a, s) in self.map.agents.iter().zip(self.agent_travel.iter_mut()) {
            *s += a.speed * dt;
        }
        self.time += dt;
        self.refresh_shapes();
    }

    /// Applies one control period: robot arc plus agent scripts.
    pub fn step(&mut self, state: &RobotState, action: &ActionTuple, dt: f64) -> RobotState {
        debug_assert!(dt > 0.0);
        self.advance_agents(dt);
        step_robot(state, action.v, action.w, dt)
    }

    pub fn scan(&self, state: &RobotState, spec: &LidarSpec) -> ScanFrame {
        let (s, c) = state.theta.sin_cos();
        let m = spec.mount();
        let origin = Vec2::new(state.x + c * m.x - s * m.y, state.y + s * m.x + c * m.y);
        raycast(origin, state.theta, Some(&self.map.bounds), &self.shapes_buf, spec)
    }

    /// Clearance between the robot disc and the nearest shape, agent or wall.
    pub fn obstacle_distance(&self, state: &RobotState, robot_radius: f64) -> f64 {
        let p = state.position();
        let nearest = self
            .shapes_buf
            .iter()
            .map(|s| s.distance(p))
            .fold(self.map.bounds.wall_distance(p), f64::min);
        (nearest - robot_radius).max(0.0)
    }

    /// Independent overlap test: does the robot disc touch anything?
    pub fn in_contact(&self, state: &RobotState, robot_radius: f64) -> bool {
        let p = state.position();
        let b = &self.map.bounds;
        let outside_walls = p.x - robot_radius <= b.x_min
            || p.x + robot_radius >= b.x_max
            || p.y - robot_radius <= b.y_min
            || p.y + robot_radius >= b.y_max;
        outside_walls || self.shapes_buf.iter().any(|s| s.touches_disc(p, robot_radius))
    }
}
