//! Per-trajectory occupancy value `H = W_scaled / (sigma_max * W)`.
//!
//! `W` sums the weights of a trajectory's Priority and Support voxels.
//! `W_scaled` weights each voxel by its own occupancy, except that every
//! voxel whose nearest sample lies at or beyond the crash index (the first
//! sample index with an occupied Priority voxel) counts as fully occupied.

use crate::error::{Error, Result};
use crate::voxel_grid::{ClassifiedGrid, OccupancyArray, TrajectoryVoxels};

/// Sampling-point index of the first occupied Priority voxel, or `n_t` when
/// nothing on the Priority band is occupied.
pub fn crash_index(voxels: &TrajectoryVoxels, occ: &OccupancyArray, n_t: usize) -> usize {
    voxels
        .priority()
        .filter(|v| occ.get(v.u as usize) > 0.0)
        .map(|v| v.m as usize)
        .min()
        .unwrap_or(n_t)
}

/// `W_j`, the total voxel weight of the trajectory band.
pub fn weight_sum(traj_id: usize, voxels: &TrajectoryVoxels) -> Result<f64> {
    if voxels.is_empty() {
        return Err(Error::DegenerateTrajectory(traj_id));
    }
    Ok(voxels.voxels.iter().map(|v| v.beta).sum())
}

/// `W_j^scaled`; voxels with `m >= u_crash` contribute `sigma_max * beta`.
pub fn scaled_weight_sum(voxels: &TrajectoryVoxels, occ: &OccupancyArray, u_crash: usize) -> f64 {
    let sigma_max = occ.sigma_max();
    voxels
        .voxels
        .iter()
        .map(|v| {
            let alpha = if (v.m as usize) < u_crash {
                occ.get(v.u as usize)
            } else {
                sigma_max
            };
            alpha * v.beta
        })
        .sum()
}

pub fn occupancy_value(traj_id: usize, w: f64, w_scaled: f64, sigma_max: f64) -> Result<f64> {
    if !(w > 0.0) || !(sigma_max > 0.0) {
        return Err(Error::DegenerateTrajectory(traj_id));
    }
    let h = w_scaled / (sigma_max * w);
    debug_assert!(h <= 1.0 + 1e-12, "occupancy value {h} above 1");
    // rounding guard when sigma_max != 1
    Ok(h.clamp(0.0, 1.0))
}

/// One occupancy value per trajectory, index-aligned with the primitive bank.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyVector {
    pub values: Vec<f64>,
}

impl OccupancyVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn evaluate_trajectory(
    traj_id: usize,
    voxels: &TrajectoryVoxels,
    occ: &OccupancyArray,
    n_t: usize,
) -> Result<f64> {
    let w = weight_sum(traj_id, voxels)?;
    let u_crash = crash_index(voxels, occ, n_t);
    let w_scaled = scaled_weight_sum(voxels, occ, u_crash);
    occupancy_value(traj_id, w, w_scaled, occ.sigma_max())
}

pub fn evaluate_all(grid: &ClassifiedGrid, occ: &OccupancyArray) -> Result<OccupancyVector> {
    let mut values = Vec::with_capacity(grid.len());
    evaluate_into(grid, occ, &mut values)?;
    Ok(OccupancyVector { values })
}

/// Allocation-free variant of [`evaluate_all`] for the environment step loop.
pub fn evaluate_into(grid: &ClassifiedGrid, occ: &OccupancyArray, out: &mut Vec<f64>) -> Result<()> {
    if occ.values().len() != grid.spec().len() {
        return Err(Error::Shape(format!(
            "occupancy array has {} cells, grid has {}",
            occ.values().len(),
            grid.spec().len()
        )));
    }
    out.clear();
    let n_t = grid.samples_per_trajectory();
    for (j, tv) in grid.trajectories().iter().enumerate() {
        out.push(evaluate_trajectory(j, tv, occ, n_t)?);
    }
    Ok(())
}
