//! Map descriptions and the bundled training/testing suite.
//!
//! Map files are line oriented; `#` starts a comment.
//!
//! ```text
//! trajocc-map 1
//! name T0S
//! bounds <x_min> <y_min> <x_max> <y_max>
//! start  <x_min> <y_min> <x_max> <y_max>
//! goal   <x_min> <y_min> <x_max> <y_max>
//! box    <cx> <cy> <width> <height>
//! circle <cx> <cy> <radius>
//! agent box <width> <height> <speed> <x,y> <x,y> ...
//! agent circle <radius> <speed> <x,y> <x,y> ...
//! ```
//!
//! Agents follow their waypoints at constant speed and loop back to the
//! first waypoint after the last.

use rand::Rng;

use super::geometry::{Rect, Shape, Vec2};
use crate::error::{Error, Result};

pub const MAP_FORMAT_VERSION: u32 = 1;

/// Kinematic waypoint follower with a fixed footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentScript {
    /// Footprint centered at the origin.
    pub footprint: Shape,
    pub speed: f64,
    pub waypoints: Vec<Vec2>,
}

impl AgentScript {
    /// Length of the closed waypoint loop.
    pub fn loop_length(&self) -> f64 {
        let n = self.waypoints.len();
        if n < 2 {
            return 0.0;
        }
        (0..n)
            .map(|i| self.waypoints[i].distance(self.waypoints[(i + 1) % n]))
            .sum()
    }

    /// Position after travelling `s` meters along the loop.
    pub fn position_at(&self, s: f64) -> Vec2 {
        let n = self.waypoints.len();
        let total = self.loop_length();
        if n < 2 || total <= 0.0 {
            return self.waypoints.first().copied().unwrap_or_default();
        }
        let mut rem = s.rem_euclid(total);
        for i in 0..n {
            let (a, b) = (self.waypoints[i], self.waypoints[(i + 1) % n]);
            let seg = a.distance(b);
            if rem <= seg && seg > 0.0 {
                return a + (b - a) * (rem / seg);
            }
            rem -= seg;
        }
        self.waypoints[0]
    }

    pub fn shape_at(&self, s: f64) -> Shape {
        self.footprint.with_center(self.position_at(s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldMap {
    pub name: String,
    pub bounds: Rect,
    pub shapes: Vec<Shape>,
    pub agents: Vec<AgentScript>,
    pub start_region: Rect,
    pub goal_region: Rect,
}

impl WorldMap {
    pub fn validate(&self) -> Result<()> {
        let err = |reason: String| Error::MapConfig {
            map: self.name.clone(),
            reason,
        };
        if !self.bounds.is_valid() {
            return Err(err("bounds must have positive area".into()));
        }
        for (label, r) in [("start", &self.start_region), ("goal", &self.goal_region)] {
            if !r.is_valid() || !self.bounds.contains_rect(r) {
                return Err(err(format!("{label} region must be a valid rectangle inside bounds")));
            }
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.waypoints.is_empty() {
                return Err(err(format!("agent {i} has no waypoints")));
            }
            if !(a.speed >= 0.0 && a.speed.is_finite()) {
                return Err(err(format!("agent {i} speed must be non-negative")));
            }
            for w in &a.waypoints {
                if !self.bounds.contains_rect(&a.footprint.with_center(*w).bounding_rect()) {
                    return Err(err(format!("agent {i} waypoint ({}, {}) leaves bounds", w.x, w.y)));
                }
            }
        }
        Ok(())
    }

    pub fn parse(source_name: &str, text: &str) -> Result<Self> {
        let mut name = None;
        let mut bounds = None;
        let mut start = None;
        let mut goal = None;
        let mut shapes = Vec::new();
        let mut agents = Vec::new();
        let mut version_seen = false;

        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let perr = |reason: String| Error::parse(source_name, lineno, reason);
            let nums = |from: usize, count: usize| -> Result<Vec<f64>> {
                if toks.len() != from + count {
                    return Err(perr(format!("`{}` expects {count} numbers", toks[0])));
                }
                toks[from..]
                    .iter()
                    .map(|t| t.parse::<f64>().map_err(|e| perr(format!("`{t}`: {e}"))))
                    .collect()
            };
            let rect = |v: Vec<f64>| Rect::new(v[0], v[1], v[2], v[3]);
            match toks[0] {
                "trajocc-map" => {
                    let v: u32 = toks
                        .get(1)
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| perr("missing format version".into()))?;
                    if v != MAP_FORMAT_VERSION {
                        return Err(perr(format!("unsupported map format version {v}")));
                    }
                    version_seen = true;
                }
                "name" => name = Some(toks[1..].join(" ")),
                "bounds" => bounds = Some(rect(nums(1, 4)?)),
                "start" => start = Some(rect(nums(1, 4)?)),
                "goal" => goal = Some(rect(nums(1, 4)?)),
                "box" => {
                    let v = nums(1, 4)?;
                    shapes.push(Shape::Box {
                        center: Vec2::new(v[0], v[1]),
                        half: Vec2::new(v[2] / 2.0, v[3] / 2.0),
                    });
                }
                "circle" => {
                    let v = nums(1, 3)?;
                    shapes.push(Shape::Circle {
                        center: Vec2::new(v[0], v[1]),
                        radius: v[2],
                    });
                }
                "agent" => {
                    let kind = toks.get(1).copied().unwrap_or("");
                    let n_size = match kind {
                        "box" => 2,
                        "circle" => 1,
                        _ => return Err(perr(format!("unknown agent footprint `{kind}`"))),
                    };
                    if toks.len() < 3 + n_size + 1 {
                        return Err(perr("agent needs size, speed and at least one waypoint".into()));
                    }
                    let num = |t: &str| t.parse::<f64>().map_err(|e| perr(format!("`{t}`: {e}")));
                    let footprint = if n_size == 2 {
                        Shape::Box {
                            center: Vec2::default(),
                            half: Vec2::new(num(toks[2])? / 2.0, num(toks[3])? / 2.0),
                        }
                    } else {
                        Shape::Circle {
                            center: Vec2::default(),
                            radius: num(toks[2])?,
                        }
                    };
                    let speed = num(toks[2 + n_size])?;
                    let waypoints = toks[3 + n_size..]
                        .iter()
                        .map(|t| {
                            let (x, y) = t
                                .split_once(',')
                                .ok_or_else(|| perr(format!("waypoint `{t}` must be x,y")))?;
                            Ok(Vec2::new(num(x)?, num(y)?))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    agents.push(AgentScript {
                        footprint,
                        speed,
                        waypoints,
                    });
                }
                other => return Err(perr(format!("unknown directive `{other}`"))),
            }
        }
        if !version_seen {
            return Err(Error::parse(source_name, 1, "missing `trajocc-map <version>` line"));
        }
        let missing = |what: &str| Error::parse(source_name, 0, format!("missing `{what}`"));
        let map = WorldMap {
            name: name.ok_or_else(|| missing("name"))?,
            bounds: bounds.ok_or_else(|| missing("bounds"))?,
            shapes,
            agents,
            start_region: start.ok_or_else(|| missing("start"))?,
            goal_region: goal.ok_or_else(|| missing("goal"))?,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut s = format!("trajocc-map {MAP_FORMAT_VERSION}\nname {}\n", self.name);
        let r = |s: &mut String, k: &str, r: &Rect| {
            let _ = writeln!(s, "{k} {} {} {} {}", r.x_min, r.y_min, r.x_max, r.y_max);
        };
        r(&mut s, "bounds", &self.bounds);
        r(&mut s, "start", &self.start_region);
        r(&mut s, "goal", &self.goal_region);
        for sh in &self.shapes {
            let _ = match *sh {
                Shape::Box { center, half } => {
                    writeln!(s, "box {} {} {} {}", center.x, center.y, 2.0 * half.x, 2.0 * half.y)
                }
                Shape::Circle { center, radius } => writeln!(s, "circle {} {} {}", center.x, center.y, radius),
            };
        }
        for a in &self.agents {
            let size = match a.footprint {
                Shape::Box { half, .. } => format!("box {} {}", 2.0 * half.x, 2.0 * half.y),
                Shape::Circle { radius, .. } => format!("circle {radius}"),
            };
            let wps: Vec<String> = a.waypoints.iter().map(|w| format!("{},{}", w.x, w.y)).collect();
            let _ = writeln!(s, "agent {size} {} {}", a.speed, wps.join(" "));
        }
        s
    }
}

const BUNDLED: &[(&str, &str)] = &[
    ("T0S", include_str!("../../maps/t0s.map")),
    ("T1S", include_str!("../../maps/t1s.map")),
    ("T0D", include_str!("../../maps/t0d.map")),
    ("T1D", include_str!("../../maps/t1d.map")),
    ("T2D", include_str!("../../maps/t2d.map")),
    ("M1", include_str!("../../maps/m1.map")),
    ("M2", include_str!("../../maps/m2.map")),
    ("M3", include_str!("../../maps/m3.map")),
    ("M4", include_str!("../../maps/m4.map")),
    ("M5", include_str!("../../maps/m5.map")),
];

/// Training curriculum order.
pub const TRAINING_MAPS: [&str; 5] = ["T0S", "T1S", "T0D", "T1D", "T2D"];
pub const TEST_MAPS: [&str; 5] = ["M1", "M2", "M3", "M4", "M5"];

/// The bundled suite, training maps first.
pub fn builtin_maps() -> Vec<WorldMap> {
    BUNDLED
        .iter()
        .map(|(name, text)| WorldMap::parse(name, text).expect("bundled map must parse"))
        .collect()
}

pub fn builtin_map(name: &str) -> Result<WorldMap> {
    BUNDLED
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(n, text)| WorldMap::parse(n, text))
        .unwrap_or_else(|| {
            Err(Error::MapConfig {
                map: name.to_string(),
                reason: "no bundled map with this name".into(),
            })
        })
}

/// Resolves a bundled map name or a path to a map file.
pub fn load_map(name_or_path: &str) -> Result<WorldMap> {
    if let Ok(m) = builtin_map(name_or_path) {
        return Ok(m);
    }
    let text = std::fs::read_to_string(name_or_path)?;
    WorldMap::parse(name_or_path, &text)
}

const MAX_GOAL_TRIES: usize = 1000;

/// Uniform start (with uniform heading) and goal samples from the map's
/// regions; goals within `min_separation` of the start are redrawn.
pub fn sample_start_goal<R: Rng>(
    map: &WorldMap,
    rng: &mut R,
    min_separation: f64,
) -> Result<(Vec2, f64, Vec2)> {
    use std::f64::consts::PI;
    let uniform = |rng: &mut R, r: &Rect| Vec2::new(rng.gen_range(r.x_min..=r.x_max), rng.gen_range(r.y_min..=r.y_max));
    let start = uniform(rng, &map.start_region);
    let heading = super::geometry::wrap_angle(rng.gen_range(-PI..PI));
    for _ in 0..MAX_GOAL_TRIES {
        let goal = uniform(rng, &map.goal_region);
        if goal.distance(start) >= min_separation {
            return Ok((start, heading, goal));
        }
    }
    Err(Error::MapConfig {
        map: map.name.clone(),
        reason: format!("no goal at least {min_separation} m from start after {MAX_GOAL_TRIES} draws"),
    })
}
