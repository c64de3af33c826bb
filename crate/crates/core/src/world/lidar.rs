use serde::{Deserialize, Serialize};

use super::geometry::Vec2;
use crate::error::{Error, Result};
use crate::kinematics::Point3;

/// Planar range sensor. Beam `b` points at `angle_min + b * increment` in
/// the robot frame; a full-circle sensor starts at 0, a partial one at
/// `-fov / 2` and spans the fov endpoint-inclusively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarSpec {
    pub n_beams: usize,
    pub fov: f64,
    pub max_range: f64,
    pub mount_x: f64,
    pub mount_y: f64,
    pub mount_z: f64,
    /// Half-width of uniform range jitter; 0 disables it.
    #[serde(default)]
    pub range_jitter: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            n_beams: 360,
            fov: 2.0 * std::f64::consts::PI,
            max_range: 5.0,
            mount_x: 0.0,
            mount_y: 0.0,
            mount_z: 0.0,
            range_jitter: 0.0,
        }
    }
}

impl LidarSpec {
    pub fn validate(&self) -> Result<()> {
        use std::f64::consts::PI;
        if self.n_beams == 0 {
            return Err(Error::config("lidar.n_beams", "must be at least 1"));
        }
        if !(self.fov > 0.0 && self.fov <= 2.0 * PI + 1e-12) {
            return Err(Error::config("lidar.fov", "must be in (0, 2*pi]"));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(Error::config("lidar.max_range", "must be positive"));
        }
        if !(self.range_jitter >= 0.0) {
            return Err(Error::config("lidar.range_jitter", "must be non-negative"));
        }
        Ok(())
    }

    fn full_circle(&self) -> bool {
        self.fov >= 2.0 * std::f64::consts::PI - 1e-12
    }

    pub fn beam_angle(&self, b: usize) -> f64 {
        if self.full_circle() {
            b as f64 * self.fov / self.n_beams as f64
        } else if self.n_beams == 1 {
            0.0
        } else {
            -0.5 * self.fov + b as f64 * self.fov / (self.n_beams - 1) as f64
        }
    }

    pub fn beam_angles(&self) -> Vec<f64> {
        (0..self.n_beams).map(|b| self.beam_angle(b)).collect()
    }

    pub fn mount(&self) -> Vec2 {
        Vec2::new(self.mount_x, self.mount_y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanFrame {
    pub ranges: Vec<f64>,
}

/// Robot-frame hit points; saturated beams produce nothing.
pub fn scan_to_points(scan: &ScanFrame, spec: &LidarSpec) -> Vec<Point3> {
    let mut out = Vec::new();
    scan_to_points_into(scan, spec, &mut out);
    out
}

pub fn scan_to_points_into(scan: &ScanFrame, spec: &LidarSpec, out: &mut Vec<Point3>) {
    out.clear();
    for (b, &r) in scan.ranges.iter().enumerate() {
        if r < spec.max_range {
            let phi = spec.beam_angle(b);
            out.push(Point3::new(
                spec.mount_x + r * phi.cos(),
                spec.mount_y + r * phi.sin(),
                spec.mount_z,
            ));
        }
    }
}
