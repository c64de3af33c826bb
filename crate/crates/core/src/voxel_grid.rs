//! Robot-centered voxel grid: offline Priority/Support classification per
//! trajectory and the online occupancy array.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kinematics::{Point3, PrimitiveBank, Trajectory};

/// Axis-aligned grid in the robot frame with cubic voxels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub resolution: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            resolution: 0.1,
            x_min: -0.5,
            x_max: 3.0,
            y_min: -3.0,
            y_max: 3.0,
            z_min: -0.05,
            z_max: 0.05,
        }
    }
}

fn cells(lo: f64, hi: f64, res: f64) -> usize {
    (((hi - lo) / res) - 1e-9).ceil().max(1.0) as usize
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::config("grid.resolution", "must be positive"));
        }
        for (name, lo, hi) in [
            ("grid.x", self.x_min, self.x_max),
            ("grid.y", self.y_min, self.y_max),
            ("grid.z", self.z_min, self.z_max),
        ] {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::config(name, "extent must have min < max"));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (
            cells(self.x_min, self.x_max, self.resolution),
            cells(self.y_min, self.y_max, self.resolution),
            cells(self.z_min, self.z_max, self.resolution),
        )
    }

    pub fn len(&self) -> usize {
        let (nx, ny, nz) = self.dims();
        nx * ny * nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// x varies fastest, then y, then z.
    pub fn linearize(&self, ix: usize, iy: usize, iz: usize) -> Result<usize> {
        let (nx, ny, nz) = self.dims();
        for (what, i, n) in [("voxel x", ix, nx), ("voxel y", iy, ny), ("voxel z", iz, nz)] {
            if i >= n {
                return Err(Error::Range { what, index: i, limit: n });
            }
        }
        Ok(ix + nx * (iy + ny * iz))
    }

    pub fn delinearize(&self, u: usize) -> Result<(usize, usize, usize)> {
        let (nx, ny, _) = self.dims();
        if u >= self.len() {
            return Err(Error::Range {
                what: "voxel",
                index: u,
                limit: self.len(),
            });
        }
        Ok((u % nx, (u / nx) % ny, u / (nx * ny)))
    }

    pub fn center(&self, u: usize) -> Result<Point3> {
        let (ix, iy, iz) = self.delinearize(u)?;
        let r = self.resolution;
        Ok(Point3::new(
            self.x_min + (ix as f64 + 0.5) * r,
            self.y_min + (iy as f64 + 0.5) * r,
            self.z_min + (iz as f64 + 0.5) * r,
        ))
    }

    /// The linearized center-position array `A_p`.
    pub fn centers(&self) -> Vec<Point3> {
        (0..self.len()).map(|u| self.center(u).expect("in range")).collect()
    }

    /// Voxel containing `p`; cells are closed below and open above.
    pub fn cell_of(&self, p: &Point3) -> Option<usize> {
        let (nx, ny, nz) = self.dims();
        let idx = |v: f64, lo: f64, n: usize| -> Option<usize> {
            let f = ((v - lo) / self.resolution).floor();
            (f >= 0.0 && f < n as f64).then_some(f as usize)
        };
        let ix = idx(p.x, self.x_min, nx)?;
        let iy = idx(p.y, self.y_min, ny)?;
        let iz = idx(p.z, self.z_min, nz)?;
        Some(ix + nx * (iy + ny * iz))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VoxelClass {
    Priority,
    Support,
}

/// One classified voxel of a trajectory: position index `u`, weight `beta`,
/// nearest sample index `m`, and class flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Voxel {
    pub u: u32,
    pub beta: f64,
    pub m: u32,
    pub class: VoxelClass,
}

impl Voxel {
    pub fn is_priority(&self) -> bool {
        self.class == VoxelClass::Priority
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub priority: f64,
    pub support: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            priority: 0.3,
            support: 0.5,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.priority > 0.0) {
            return Err(Error::config("thresholds.priority", "must be positive"));
        }
        if !(self.priority < self.support) || !self.support.is_finite() {
            return Err(Error::config("thresholds.support", "requires priority < support"));
        }
        Ok(())
    }

    /// Closed-open bands: `[0, priority)` and `[priority, support)`.
    pub fn classify(&self, distance: f64) -> Option<VoxelClass> {
        if distance < self.priority {
            Some(VoxelClass::Priority)
        } else if distance < self.support {
            Some(VoxelClass::Support)
        } else {
            None
        }
    }
}

pub trait WeightFn {
    fn weight(&self, distance: f64, class: VoxelClass) -> f64;
}

impl<F: Fn(f64, VoxelClass) -> f64> WeightFn for F {
    fn weight(&self, distance: f64, class: VoxelClass) -> f64 {
        self(distance, class)
    }
}

/// Two-level weighting by class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VoxelWeights {
    pub priority: f64,
    pub support: f64,
}

impl Default for VoxelWeights {
    fn default() -> Self {
        Self {
            priority: 1.0,
            support: 0.5,
        }
    }
}

impl VoxelWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.priority > 0.0 && self.priority.is_finite()) {
            return Err(Error::config("weights.priority", "must be positive"));
        }
        if !(self.support > 0.0 && self.support.is_finite()) {
            return Err(Error::config("weights.support", "must be positive"));
        }
        Ok(())
    }
}

impl WeightFn for VoxelWeights {
    fn weight(&self, _distance: f64, class: VoxelClass) -> f64 {
        match class {
            VoxelClass::Priority => self.priority,
            VoxelClass::Support => self.support,
        }
    }
}

/// Index of the closest sample and its distance; ties go to the smaller index.
pub fn nearest_sample_index(center: &Point3, traj: &Trajectory) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (i, p) in traj.points.iter().enumerate() {
        let d2 = center.distance_sq(p);
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    (best.0, best.1.sqrt())
}

/// All classified voxels of one trajectory, ordered by `u`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryVoxels {
    pub voxels: Vec<Voxel>,
}

impl TrajectoryVoxels {
    pub fn priority(&self) -> impl Iterator<Item = &Voxel> {
        self.voxels.iter().filter(|v| v.is_priority())
    }

    pub fn support(&self) -> impl Iterator<Item = &Voxel> {
        self.voxels.iter().filter(|v| !v.is_priority())
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }
}

pub fn classify_voxels(
    centers: &[Point3],
    traj: &Trajectory,
    thresholds: &Thresholds,
    weights: &dyn WeightFn,
) -> TrajectoryVoxels {
    let voxels = centers
        .iter()
        .enumerate()
        .filter_map(|(u, c)| {
            let (m, d) = nearest_sample_index(c, traj);
            thresholds.classify(d).map(|class| Voxel {
                u: u as u32,
                beta: weights.weight(d, class),
                m: m as u32,
                class,
            })
        })
        .collect();
    TrajectoryVoxels { voxels }
}

/// Per-trajectory voxel classification over a shared grid. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedGrid {
    spec: GridSpec,
    thresholds: Thresholds,
    n_t: usize,
    centers: Vec<Point3>,
    trajectories: Vec<TrajectoryVoxels>,
}

const CACHE_MAGIC: &[u8; 4] = b"TOCG";
const CACHE_VERSION: u32 = 1;

impl ClassifiedGrid {
    pub fn build(
        bank: &PrimitiveBank,
        spec: GridSpec,
        thresholds: Thresholds,
        weights: &dyn WeightFn,
    ) -> Result<Self> {
        spec.validate()?;
        thresholds.validate()?;
        let centers = spec.centers();
        let trajectories = bank
            .trajectories()
            .iter()
            .map(|t| classify_voxels(&centers, t, &thresholds, weights))
            .collect();
        Ok(Self {
            spec,
            thresholds,
            n_t: bank.samples_per_trajectory(),
            centers,
            trajectories,
        })
    }

    /// Assembles a grid from explicit voxel sets, e.g. for synthetic tests.
    pub fn from_parts(
        spec: GridSpec,
        thresholds: Thresholds,
        n_t: usize,
        trajectories: Vec<TrajectoryVoxels>,
    ) -> Result<Self> {
        spec.validate()?;
        let n = spec.len();
        for tv in &trajectories {
            for v in &tv.voxels {
                if v.u as usize >= n {
                    return Err(Error::Range {
                        what: "voxel",
                        index: v.u as usize,
                        limit: n,
                    });
                }
                if v.m as usize >= n_t {
                    return Err(Error::Range {
                        what: "sample",
                        index: v.m as usize,
                        limit: n_t,
                    });
                }
            }
        }
        Ok(Self {
            spec,
            thresholds,
            n_t,
            centers: spec.centers(),
            trajectories,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn samples_per_trajectory(&self) -> usize {
        self.n_t
    }

    pub fn centers(&self) -> &[Point3] {
        &self.centers
    }

    pub fn trajectories(&self) -> &[TrajectoryVoxels] {
        &self.trajectories
    }

    pub fn trajectories_mut(&mut self) -> &mut [TrajectoryVoxels] {
        &mut self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Content hash of everything the classification depends on.
    pub fn cache_key(
        bank: &PrimitiveBank,
        spec: &GridSpec,
        thresholds: &Thresholds,
        weights: &VoxelWeights,
    ) -> String {
        let mut h = Sha256::new();
        h.update(bank.to_text().as_bytes());
        h.update(format!("{spec:?}|{thresholds:?}|{weights:?}").as_bytes());
        hex::encode(h.finalize())
    }

    pub fn cache_path(dir: &Path, key: &str) -> PathBuf {
        dir.join(format!("grid-{}.bin", &key[..16]))
    }

    /// Loads a cached classification if the key matches, otherwise builds
    /// and writes it. Returns the grid and whether the cache was hit.
    pub fn load_or_build(
        dir: &Path,
        bank: &PrimitiveBank,
        spec: GridSpec,
        thresholds: Thresholds,
        weights: VoxelWeights,
    ) -> Result<(Self, bool)> {
        let key = Self::cache_key(bank, &spec, &thresholds, &weights);
        let path = Self::cache_path(dir, &key);
        if path.exists() {
            if let Ok((grid, stored)) = Self::read_cache(&path) {
                if stored == key && grid.len() == bank.len() {
                    return Ok((grid, true));
                }
            }
        }
        let grid = Self::build(bank, spec, thresholds, &weights)?;
        fs::create_dir_all(dir)?;
        grid.write_cache(&path, &key)?;
        Ok((grid, false))
    }

    /// Little-endian binary layout:
    /// magic `TOCG`, u32 version, 64-byte hex key, 7 f64 grid fields,
    /// 2 f64 thresholds, u32 n_t, u32 trajectory count, then per trajectory
    /// a u32 voxel count followed by `(u: u32, m: u32, beta: f64, class: u8)`.
    pub fn write_cache(&self, path: &Path, key: &str) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        let mut k = [b'0'; 64];
        let kb = key.as_bytes();
        k[..kb.len().min(64)].copy_from_slice(&kb[..kb.len().min(64)]);
        buf.extend_from_slice(&k);
        let s = &self.spec;
        for v in [
            s.resolution,
            s.x_min,
            s.x_max,
            s.y_min,
            s.y_max,
            s.z_min,
            s.z_max,
            self.thresholds.priority,
            self.thresholds.support,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&(self.n_t as u32).to_le_bytes());
        buf.extend_from_slice(&(self.trajectories.len() as u32).to_le_bytes());
        for tv in &self.trajectories {
            buf.extend_from_slice(&(tv.voxels.len() as u32).to_le_bytes());
            for v in &tv.voxels {
                buf.extend_from_slice(&v.u.to_le_bytes());
                buf.extend_from_slice(&v.m.to_le_bytes());
                buf.extend_from_slice(&v.beta.to_le_bytes());
                buf.push(v.is_priority() as u8);
            }
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<(Self, String)> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let src = path.display().to_string();
        let mut r = ByteReader { bytes: &bytes, pos: 0, src: &src };
        if r.take(4)? != CACHE_MAGIC {
            return Err(Error::parse(&src, 0, "not a classified-grid cache"));
        }
        if r.u32()? != CACHE_VERSION {
            return Err(Error::parse(&src, 0, "unsupported cache version"));
        }
        let key = String::from_utf8_lossy(r.take(64)?).into_owned();
        let mut f = [0.0; 9];
        for v in f.iter_mut() {
            *v = r.f64()?;
        }
        let spec = GridSpec {
            resolution: f[0],
            x_min: f[1],
            x_max: f[2],
            y_min: f[3],
            y_max: f[4],
            z_min: f[5],
            z_max: f[6],
        };
        let thresholds = Thresholds {
            priority: f[7],
            support: f[8],
        };
        let n_t = r.u32()? as usize;
        let n_traj = r.u32()? as usize;
        let mut trajectories = Vec::with_capacity(n_traj);
        for _ in 0..n_traj {
            let n = r.u32()? as usize;
            let mut voxels = Vec::with_capacity(n);
            for _ in 0..n {
                let u = r.u32()?;
                let m = r.u32()?;
                let beta = r.f64()?;
                let class = if r.take(1)?[0] == 1 {
                    VoxelClass::Priority
                } else {
                    VoxelClass::Support
                };
                voxels.push(Voxel { u, beta, m, class });
            }
            trajectories.push(TrajectoryVoxels { voxels });
        }
        let grid = Self::from_parts(spec, thresholds, n_t, trajectories)?;
        Ok((grid, key))
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    src: &'a str,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::parse(self.src, 0, "truncated cache file"));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Linearized per-voxel occupancy `A_sigma`, values in `[0, sigma_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyArray {
    sigma: Vec<f64>,
    sigma_max: f64,
}

impl OccupancyArray {
    pub fn new(len: usize, sigma_max: f64) -> Self {
        assert!(sigma_max > 0.0, "sigma_max must be positive");
        Self {
            sigma: vec![0.0; len],
            sigma_max,
        }
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn values(&self) -> &[f64] {
        &self.sigma
    }

    pub fn get(&self, u: usize) -> f64 {
        self.sigma[u]
    }

    /// Stores `value` clamped to `[0, sigma_max]`.
    pub fn set(&mut self, u: usize, value: f64) {
        self.sigma[u] = value.clamp(0.0, self.sigma_max);
    }

    pub fn clear(&mut self) {
        self.sigma.iter_mut().for_each(|s| *s = 0.0);
    }

    pub fn occupied_count(&self) -> usize {
        self.sigma.iter().filter(|&&s| s > 0.0).count()
    }

    /// Clear-then-mark binary update from robot-frame hit points; hits
    /// outside the grid are ignored.
    pub fn update(&mut self, hits: &[Point3], spec: &GridSpec) {
        self.clear();
        for p in hits {
            if let Some(u) = spec.cell_of(p) {
                self.sigma[u] = self.sigma_max;
            }
        }
    }
}
