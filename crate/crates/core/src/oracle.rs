//! Synthetic sintering simulator used as ground truth.
//!
//! Each step moves every node by three contributions:
//!
//! * shrink: `-c (p - centroid)` with `c = shrink_gain * max(0, T - activation_temp)`
//! * sag: `(0, 0, -sag_gain * h * u)`, `h` the height above the tray and `u` the
//!   empty fraction of the voxel column below the node's starting voxel
//! * drag: Slip nodes keep only `1 - friction_coeff` of their horizontal motion
//!   and stay on the tray vertically; Fixed nodes do not move.
//!
//! It is deliberately simple so every property can be checked by hand.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{voxel_centers, VoxelGrid};
use crate::graphbuild::{default_node_types, NodeType, Trajectory};
use crate::store::{self, StoreError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("voxel grid has no occupied voxels")]
    EmptyGrid,
    #[error("invalid sintering profile: {0}")]
    InvalidProfile(String),
}

/// Furnace schedule and deformation gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinterProfile {
    /// Temperature (°C) at every frame; its length is the frame count `T`.
    pub temperature: Vec<f64>,
    /// Contraction rate per °C above activation, per step.
    pub shrink_gain: f64,
    /// Sag rate per step (per mm of height, scaled by the unsupported fraction).
    pub sag_gain: f64,
    pub friction_coeff: f64,
    pub activation_temp: f64,
}

/// Piecewise-linear ramp, hold and cool schedule over `steps` frames.
pub fn ramp_hold_cool(steps: usize, ambient: f64, peak: f64, ramp_fraction: f64, hold_fraction: f64) -> Vec<f64> {
    let ramp = ((ramp_fraction * steps as f64).round() as usize).min(steps);
    let hold = ((hold_fraction * steps as f64).round() as usize).min(steps - ramp);
    let cool = steps - ramp - hold;
    (0..steps)
        .map(|t| {
            if t < ramp {
                ambient + (peak - ambient) * t as f64 / ramp as f64
            } else if t < ramp + hold {
                peak
            } else {
                let s = (t - ramp - hold + 1) as f64 / cool as f64;
                peak - (peak - ambient) * s
            }
        })
        .collect()
}

impl SinterProfile {
    pub fn steps(&self) -> usize {
        self.temperature.len()
    }

    /// Contraction coefficient `c` at a temperature.
    pub fn shrink_rate(&self, celsius: f64) -> f64 {
        self.shrink_gain * (celsius - self.activation_temp).max(0.0)
    }

    /// Linear size ratio after the whole schedule under pure shrink.
    pub fn contraction_factor(&self) -> f64 {
        let n = self.temperature.len().saturating_sub(1);
        self.temperature[..n]
            .iter()
            .map(|&t| 1.0 - self.shrink_rate(t))
            .product()
    }

    /// Chooses `shrink_gain` so that [`Self::contraction_factor`] equals `target`.
    pub fn calibrate_shrink(&mut self, target: f64) -> Result<(), OracleError> {
        if !(target > 0.0 && target <= 1.0) {
            return Err(OracleError::InvalidProfile(format!("contraction target {target}")));
        }
        let excess: f64 = self
            .temperature
            .iter()
            .take(self.temperature.len().saturating_sub(1))
            .map(|&t| (t - self.activation_temp).max(0.0))
            .fold(0.0, f64::max);
        if excess == 0.0 {
            self.shrink_gain = 0.0;
            return if target == 1.0 {
                Ok(())
            } else {
                Err(OracleError::InvalidProfile(
                    "temperature never exceeds activation".into(),
                ))
            };
        }
        // The factor decreases monotonically in the gain; c must stay below 1.
        let (mut lo, mut hi) = (0.0, 1.0 / excess);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            self.shrink_gain = mid;
            if self.contraction_factor() > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.shrink_gain = 0.5 * (lo + hi);
        Ok(())
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: &str| Err(OracleError::InvalidProfile(m.into()));
        if self.temperature.is_empty() {
            return bad("empty temperature schedule");
        }
        if self.temperature.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return bad("temperatures must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.friction_coeff) {
            return bad("friction_coeff must lie in [0, 1]");
        }
        if !(self.shrink_gain >= 0.0 && self.sag_gain >= 0.0) {
            return bad("gains must be non-negative");
        }
        Ok(())
    }
}

impl Default for SinterProfile {
    /// 240 frames: 20 → 1380 °C over 40 %, hold 40 %, cool 20 %, calibrated to a
    /// 0.79 linear (≈ 0.49 volumetric) contraction. Shrinkage is active from the
    /// first heated frame so the seed window of a rollout already carries motion.
    fn default() -> Self {
        ProfileSpec::default().build().expect("default profile is valid")
    }
}

/// JSON form of a profile. Either `shrink_gain` or `target_contraction` fixes the
/// shrink strength; an explicit `temperature` array overrides the ramp fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileSpec {
    pub steps: usize,
    pub ambient_temp: f64,
    pub peak_temp: f64,
    pub ramp_fraction: f64,
    pub hold_fraction: f64,
    pub temperature: Option<Vec<f64>>,
    pub shrink_gain: Option<f64>,
    pub target_contraction: f64,
    pub sag_gain: f64,
    pub friction_coeff: f64,
    pub activation_temp: f64,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec {
            steps: 240,
            ambient_temp: 20.0,
            peak_temp: 1380.0,
            ramp_fraction: 0.4,
            hold_fraction: 0.4,
            temperature: None,
            shrink_gain: None,
            target_contraction: 0.79,
            sag_gain: 1e-4,
            friction_coeff: 0.3,
            activation_temp: 20.0,
        }
    }
}

impl ProfileSpec {
    pub fn build(&self) -> Result<SinterProfile, OracleError> {
        let temperature = match &self.temperature {
            Some(t) => t.clone(),
            None => ramp_hold_cool(
                self.steps,
                self.ambient_temp,
                self.peak_temp,
                self.ramp_fraction,
                self.hold_fraction,
            ),
        };
        let mut profile = SinterProfile {
            temperature,
            shrink_gain: self.shrink_gain.unwrap_or(0.0),
            sag_gain: self.sag_gain,
            friction_coeff: self.friction_coeff,
            activation_temp: self.activation_temp,
        };
        profile.validate()?;
        if self.shrink_gain.is_none() {
            profile.calibrate_shrink(self.target_contraction)?;
        }
        Ok(profile)
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        store::read_json(path)
    }
}

/// Per-node quantities fixed at frame 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportField {
    /// Empty fraction of the voxel column below each node, in `[0, 1]`.
    pub unsupported: Vec<f64>,
    pub build_plane_z: f64,
}

impl SupportField {
    /// Fully supported nodes on a tray at `build_plane_z`.
    pub fn supported(nodes: usize, build_plane_z: f64) -> Self {
        SupportField {
            unsupported: vec![0.0; nodes],
            build_plane_z,
        }
    }

    /// Column occupancy below every occupied voxel; the tray is the grid's bottom
    /// face under the lowest occupied layer.
    pub fn from_grid(grid: &VoxelGrid) -> Self {
        let coords = grid.occupied_coords();
        let kmin = coords.iter().map(|c| c[2]).min().unwrap_or(0);
        let unsupported = coords
            .iter()
            .map(|&[i, j, k]| {
                let below = k - kmin;
                if below == 0 {
                    return 0.0;
                }
                let empty = (kmin..k).filter(|&kk| !grid.get(i, j, kk)).count();
                empty as f64 / below as f64
            })
            .collect();
        SupportField {
            unsupported,
            build_plane_z: grid.origin[2] + kmin as f64 * grid.voxel_size,
        }
    }
}

/// Advances positions by one frame at temperature `celsius`.
pub fn step_oracle(
    pos: &[[f64; 3]],
    types: &[NodeType],
    celsius: f64,
    profile: &SinterProfile,
    support: &SupportField,
) -> Vec<[f64; 3]> {
    let n = pos.len();
    if n == 0 {
        return Vec::new();
    }
    let mut centroid = [0.0; 3];
    for p in pos {
        for d in 0..3 {
            centroid[d] += p[d];
        }
    }
    for c in centroid.iter_mut() {
        *c /= n as f64;
    }
    let c = profile.shrink_rate(celsius);
    let keep = 1.0 - profile.friction_coeff;
    let plane = support.build_plane_z;

    pos.iter()
        .zip(types)
        .zip(&support.unsupported)
        .map(|((p, t), &u)| {
            let h = p[2] - plane;
            let mut d = [
                -c * (p[0] - centroid[0]),
                -c * (p[1] - centroid[1]),
                -c * (p[2] - centroid[2]) - profile.sag_gain * h * u,
            ];
            match t {
                NodeType::Free => {}
                NodeType::Fixed => d = [0.0; 3],
                NodeType::Slip => {
                    d[0] *= keep;
                    d[1] *= keep;
                    d[2] = 0.0;
                }
            }
            let mut q = [p[0] + d[0], p[1] + d[1], p[2] + d[2]];
            if *t == NodeType::Slip {
                q[2] = q[2].max(plane);
            }
            q
        })
        .collect()
}

/// Runs the oracle over the whole profile, starting from the voxel centers.
pub fn generate_trajectory(
    grid: &VoxelGrid,
    profile: &SinterProfile,
    part_id: &str,
) -> Result<Trajectory, OracleError> {
    let start = voxel_centers(grid);
    if start.is_empty() {
        return Err(OracleError::EmptyGrid);
    }
    let types = default_node_types(&start, grid.voxel_size);
    generate_with_types(grid, profile, part_id, types)
}

/// [`generate_trajectory`] with caller-chosen node types (e.g. to pin nodes).
pub fn generate_with_types(
    grid: &VoxelGrid,
    profile: &SinterProfile,
    part_id: &str,
    node_types: Vec<NodeType>,
) -> Result<Trajectory, OracleError> {
    profile.validate()?;
    let start = voxel_centers(grid);
    if start.is_empty() {
        return Err(OracleError::EmptyGrid);
    }
    if node_types.len() != start.len() {
        return Err(OracleError::InvalidProfile(format!(
            "{} node types for {} nodes",
            node_types.len(),
            start.len()
        )));
    }
    let support = SupportField::from_grid(grid);
    let mut frames = Vec::with_capacity(profile.steps());
    frames.push(start);
    for k in 0..profile.steps() - 1 {
        let next = step_oracle(&frames[k], &node_types, profile.temperature[k], profile, &support);
        frames.push(next);
    }
    Ok(Trajectory {
        part_id: part_id.to_string(),
        voxel_size: grid.voxel_size,
        temperature: profile.temperature.clone(),
        node_types,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_grid(n: usize) -> VoxelGrid {
        let mut g = VoxelGrid::new([0.0; 3], 1.0, [n, n, n]).unwrap();
        g.fill_block([0; 3], [n; 3]);
        g
    }

    fn flat_profile(steps: usize, temp: f64) -> SinterProfile {
        SinterProfile {
            temperature: vec![temp; steps],
            shrink_gain: 1e-5,
            sag_gain: 0.0,
            friction_coeff: 0.0,
            activation_temp: 600.0,
        }
    }

    #[test]
    fn below_activation_nothing_moves() {
        let pos = vec![[0.5, 0.5, 0.5], [3.0, 1.0, 2.0]];
        let types = vec![NodeType::Free; 2];
        let p = flat_profile(2, 500.0);
        let out = step_oracle(&pos, &types, 500.0, &p, &SupportField::supported(2, 0.0));
        assert_eq!(out, pos);
    }

    #[test]
    fn symmetric_pair_contracts_toward_midpoint() {
        let d = 2.0;
        let pos = vec![[-d, 0.0, 5.0], [d, 0.0, 5.0]];
        let types = vec![NodeType::Free; 2];
        let profile = SinterProfile {
            temperature: vec![700.0],
            shrink_gain: 0.01 / 100.0,
            sag_gain: 0.0,
            friction_coeff: 0.0,
            activation_temp: 600.0,
        };
        let out = step_oracle(&pos, &types, 700.0, &profile, &SupportField::supported(2, 0.0));
        assert!((out[0][0] - (-d + 0.01 * d)).abs() < 1e-15);
        assert!((out[1][0] - (d - 0.01 * d)).abs() < 1e-15);
        assert_eq!(out[0][2], 5.0);
    }

    #[test]
    fn single_node_does_not_shrink() {
        let pos = vec![[1.0, 2.0, 3.0]];
        let p = flat_profile(2, 1000.0);
        let out = step_oracle(&pos, &[NodeType::Free], 1000.0, &p, &SupportField::supported(1, 0.0));
        assert_eq!(out, pos);
    }

    #[test]
    fn zero_gains_freeze_the_part() {
        let mut profile = SinterProfile::default();
        profile.shrink_gain = 0.0;
        profile.sag_gain = 0.0;
        let traj = generate_trajectory(&cube_grid(3), &profile, "c").unwrap();
        assert_eq!(traj.num_frames(), 240);
        assert!(traj.frames.iter().all(|f| *f == traj.frames[0]));
    }

    #[test]
    fn empty_grid_rejected() {
        let g = VoxelGrid::new([0.0; 3], 1.0, [2, 2, 2]).unwrap();
        assert_eq!(
            generate_trajectory(&g, &SinterProfile::default(), "e").unwrap_err(),
            OracleError::EmptyGrid
        );
    }

    #[test]
    fn calibration_hits_target() {
        let p = SinterProfile::default();
        assert!((p.contraction_factor() - 0.79).abs() < 1e-12);
        assert!((p.contraction_factor().powi(3) - 0.493).abs() < 1e-3);
    }

    #[test]
    fn schedule_shape() {
        let t = ramp_hold_cool(10, 20.0, 1380.0, 0.4, 0.4);
        assert_eq!(t.len(), 10);
        assert_eq!(t[0], 20.0);
        assert_eq!(&t[4..8], &[1380.0; 4]);
        assert_eq!(t[9], 20.0);
    }

    #[test]
    fn invalid_profiles() {
        let mut p = SinterProfile::default();
        p.friction_coeff = 1.5;
        assert!(p.validate().is_err());
        p.friction_coeff = 0.5;
        p.sag_gain = -1.0;
        assert!(p.validate().is_err());
        p.sag_gain = 0.0;
        p.temperature[3] = -5.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn overhang_is_unsupported() {
        // Two-layer bridge: bottom pillars at x = 0 and x = 2, top layer spans x = 0..3.
        let mut g = VoxelGrid::new([0.0; 3], 1.0, [3, 1, 2]).unwrap();
        g.set(0, 0, 0, true);
        g.set(2, 0, 0, true);
        g.fill_block([0, 0, 1], [3, 1, 2]);
        let s = SupportField::from_grid(&g);
        // occupancy order: (0,0,0), (2,0,0), (0,0,1), (1,0,1), (2,0,1)
        assert_eq!(s.unsupported, vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(s.build_plane_z, 0.0);
    }

    #[test]
    fn fixed_and_slip_constraints() {
        let grid = cube_grid(3);
        let start = voxel_centers(&grid);
        let mut types = default_node_types(&start, 1.0);
        types[13] = NodeType::Fixed; // center voxel
        let traj = generate_with_types(&grid, &SinterProfile::default(), "c", types.clone()).unwrap();
        let plane = traj.build_plane_z();
        for f in &traj.frames {
            assert_eq!(f[13], start[13]);
            for (p, t) in f.iter().zip(&types) {
                if *t == NodeType::Slip {
                    assert!(p[2] >= plane);
                }
            }
        }
    }

    #[test]
    fn profile_spec_json() {
        let spec: ProfileSpec = serde_json::from_str(r#"{"steps": 50, "sag_gain": 0.0}"#).unwrap();
        let p = spec.build().unwrap();
        assert_eq!(p.steps(), 50);
        assert!((p.contraction_factor() - 0.79).abs() < 1e-12);
    }
}
