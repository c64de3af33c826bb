//! Planar shapes and the ray/distance queries the simulator needs.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Axis-aligned rectangle given by its corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn is_valid(&self) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn contains_rect(&self, o: &Rect) -> bool {
        o.x_min >= self.x_min && o.x_max <= self.x_max && o.y_min >= self.y_min && o.y_max <= self.y_max
    }

    /// Distance from an interior point to the nearest wall; 0 outside.
    pub fn wall_distance(&self, p: Vec2) -> f64 {
        if !self.contains(p) {
            return 0.0;
        }
        (p.x - self.x_min)
            .min(self.x_max - p.x)
            .min(p.y - self.y_min)
            .min(self.y_max - p.y)
    }

    /// Ray parameter at which a ray from an interior point leaves the
    /// rectangle; `Some(0)` from outside.
    pub fn ray_exit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        if !self.contains(origin) {
            return Some(0.0);
        }
        let mut t = f64::INFINITY;
        if dir.x > 0.0 {
            t = t.min((self.x_max - origin.x) / dir.x);
        } else if dir.x < 0.0 {
            t = t.min((self.x_min - origin.x) / dir.x);
        }
        if dir.y > 0.0 {
            t = t.min((self.y_max - origin.y) / dir.y);
        } else if dir.y < 0.0 {
            t = t.min((self.y_min - origin.y) / dir.y);
        }
        t.is_finite().then_some(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// Axis-aligned box with half extents.
    Box { center: Vec2, half: Vec2 },
    Circle { center: Vec2, radius: f64 },
}

impl Shape {
    pub fn center(&self) -> Vec2 {
        match *self {
            Shape::Box { center, .. } | Shape::Circle { center, .. } => center,
        }
    }

    pub fn with_center(&self, c: Vec2) -> Shape {
        match *self {
            Shape::Box { half, .. } => Shape::Box { center: c, half },
            Shape::Circle { radius, .. } => Shape::Circle { center: c, radius },
        }
    }

    pub fn bounding_rect(&self) -> Rect {
        match *self {
            Shape::Box { center, half } => Rect::new(
                center.x - half.x,
                center.y - half.y,
                center.x + half.x,
                center.y + half.y,
            ),
            Shape::Circle { center, radius } => Rect::new(
                center.x - radius,
                center.y - radius,
                center.x + radius,
                center.y + radius,
            ),
        }
    }

    /// Nearest non-negative ray parameter hitting the shape, with `dir` a
    /// unit vector. A ray starting inside hits at 0.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        match *self {
            Shape::Box { center, half } => {
                let mut t_enter = f64::NEG_INFINITY;
                let mut t_exit = f64::INFINITY;
                for (o, d, lo, hi) in [
                    (origin.x, dir.x, center.x - half.x, center.x + half.x),
                    (origin.y, dir.y, center.y - half.y, center.y + half.y),
                ] {
                    if d == 0.0 {
                        if o < lo || o > hi {
                            return None;
                        }
                    } else {
                        let (a, b) = ((lo - o) / d, (hi - o) / d);
                        t_enter = t_enter.max(a.min(b));
                        t_exit = t_exit.min(a.max(b));
                    }
                }
                if t_exit < t_enter || t_exit < 0.0 {
                    None
                } else {
                    Some(t_enter.max(0.0))
                }
            }
            Shape::Circle { center, radius } => {
                let oc = origin - center;
                let b = oc.dot(dir);
                // perpendicular offset form, stable for small radii
                let h = oc - dir * b;
                let disc = radius * radius - h.dot(h);
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let (t0, t1) = (-b - sq, -b + sq);
                if t1 < 0.0 {
                    None
                } else {
                    Some(t0.max(0.0))
                }
            }
        }
    }

    /// Euclidean distance from `p` to the shape surface; 0 inside.
    pub fn distance(&self, p: Vec2) -> f64 {
        match *self {
            Shape::Box { center, half } => {
                let dx = ((p.x - center.x).abs() - half.x).max(0.0);
                let dy = ((p.y - center.y).abs() - half.y).max(0.0);
                dx.hypot(dy)
            }
            Shape::Circle { center, radius } => (p.distance(center) - radius).max(0.0),
        }
    }

    /// Overlap test between the shape and a closed disc.
    pub fn touches_disc(&self, c: Vec2, r: f64) -> bool {
        match *self {
            Shape::Box { center, half } => {
                let q = Vec2::new(
                    c.x.clamp(center.x - half.x, center.x + half.x),
                    c.y.clamp(center.y - half.y, center.y + half.y),
                );
                let d = q - c;
                d.dot(d) <= r * r
            }
            Shape::Circle { center, radius } => {
                let d = center - c;
                d.dot(d) <= (radius + r) * (radius + r)
            }
        }
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}
