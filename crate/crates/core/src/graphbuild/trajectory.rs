//! Node trajectories and their on-disk directory format.
//!
//! ```text
//! <dir>/meta.json       part_id, T, N, voxel_size, temperature[T], node_type_counts
//! <dir>/positions.bin   T·N·3 little-endian f32, frame-major then node-major
//! <dir>/node_types.bin  N bytes (0 = Free, 1 = Fixed, 2 = Slip)
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::store::{self, StoreError};

/// Boundary condition class of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum NodeType {
    Free = 0,
    Fixed = 1,
    Slip = 2,
}

impl NodeType {
    pub const COUNT: usize = 3;

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(NodeType::Free),
            1 => Some(NodeType::Fixed),
            2 => Some(NodeType::Slip),
            _ => None,
        }
    }

    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self as usize] = 1.0;
        v
    }
}

/// Default typing: bottom-layer nodes rest on the tray and slip; everything else is free.
pub fn default_node_types(initial: &[[f64; 3]], voxel_size: f64) -> Vec<NodeType> {
    let zmin = initial.iter().map(|p| p[2]).fold(f64::INFINITY, f64::min);
    initial
        .iter()
        .map(|p| {
            if p[2] < zmin + 0.5 * voxel_size {
                NodeType::Slip
            } else {
                NodeType::Free
            }
        })
        .collect()
}

/// Time-indexed node positions of one part.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub part_id: String,
    pub voxel_size: f64,
    /// Furnace temperature (°C) at every frame.
    pub temperature: Vec<f64>,
    pub node_types: Vec<NodeType>,
    /// `frames[t][i]` is the position of node `i` at frame `t`, in mm.
    pub frames: Vec<Vec<[f64; 3]>>,
}

impl Trajectory {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_types.len()
    }

    /// Height of the tray: half a voxel below the lowest node of frame 0.
    pub fn build_plane_z(&self) -> f64 {
        let zmin = self
            .frames
            .first()
            .map(|f| f.iter().map(|p| p[2]).fold(f64::INFINITY, f64::min))
            .unwrap_or(0.0);
        zmin - 0.5 * self.voxel_size
    }

    /// Checks frame/temperature/node-count consistency.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.node_types.len();
        if self.temperature.len() != self.frames.len() {
            return Err(format!(
                "temperature has {} entries for {} frames",
                self.temperature.len(),
                self.frames.len()
            ));
        }
        if let Some((t, f)) = self.frames.iter().enumerate().find(|(_, f)| f.len() != n) {
            return Err(format!("frame {t} has {} nodes, expected {n}", f.len()));
        }
        if !(self.voxel_size > 0.0) {
            return Err(format!("voxel size {} is not positive", self.voxel_size));
        }
        Ok(())
    }

    /// Copy with every position rounded to `f32`, i.e. what survives a disk round trip.
    pub fn quantized(&self) -> Trajectory {
        let mut out = self.clone();
        for p in out.frames.iter_mut().flatten() {
            for x in p.iter_mut() {
                *x = *x as f32 as f64;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTypeCounts {
    pub free: usize,
    pub fixed: usize,
    pub slip: usize,
}

impl NodeTypeCounts {
    pub fn of(types: &[NodeType]) -> Self {
        let mut c = NodeTypeCounts::default();
        for t in types {
            match t {
                NodeType::Free => c.free += 1,
                NodeType::Fixed => c.fixed += 1,
                NodeType::Slip => c.slip += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub part_id: String,
    #[serde(rename = "T")]
    pub num_frames: usize,
    #[serde(rename = "N")]
    pub num_nodes: usize,
    pub voxel_size: f64,
    pub temperature: Vec<f64>,
    pub node_type_counts: NodeTypeCounts,
}

pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<(), StoreError> {
    traj.validate().map_err(|m| StoreError::invalid(dir, m))?;
    store::create_dir(dir)?;
    let meta = TrajectoryMeta {
        part_id: traj.part_id.clone(),
        num_frames: traj.num_frames(),
        num_nodes: traj.num_nodes(),
        voxel_size: traj.voxel_size,
        temperature: traj.temperature.clone(),
        node_type_counts: NodeTypeCounts::of(&traj.node_types),
    };
    store::write_json(&dir.join("meta.json"), &meta)?;

    let mut pos = Vec::with_capacity(traj.num_frames() * traj.num_nodes() * 12);
    for p in traj.frames.iter().flatten() {
        for x in p {
            pos.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    store::write_bytes(&dir.join("positions.bin"), &pos)?;
    let types: Vec<u8> = traj.node_types.iter().map(|t| *t as u8).collect();
    store::write_bytes(&dir.join("node_types.bin"), &types)
}

pub fn read_trajectory(dir: &Path) -> Result<Trajectory, StoreError> {
    let meta: TrajectoryMeta = store::read_json(&dir.join("meta.json"))?;
    let (t, n) = (meta.num_frames, meta.num_nodes);

    let types_path = dir.join("node_types.bin");
    let raw_types = store::read_bytes(&types_path)?;
    if raw_types.len() != n {
        return Err(StoreError::invalid(
            &types_path,
            format!("{} node types for N = {n}", raw_types.len()),
        ));
    }
    let node_types = raw_types
        .iter()
        .map(|&b| NodeType::from_byte(b))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| StoreError::invalid(&types_path, "node type byte out of range"))?;
    if NodeTypeCounts::of(&node_types) != meta.node_type_counts {
        return Err(StoreError::invalid(
            &types_path,
            "node type counts disagree with meta.json",
        ));
    }

    let pos_path = dir.join("positions.bin");
    let raw = store::read_bytes(&pos_path)?;
    if raw.len() != t * n * 12 {
        return Err(StoreError::invalid(
            &pos_path,
            format!("{} bytes, expected {}", raw.len(), t * n * 12),
        ));
    }
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let frames = values
        .chunks_exact(3 * n.max(1))
        .take(t)
        .map(|frame| frame.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect())
        .collect::<Vec<Vec<[f64; 3]>>>();
    let frames = if n == 0 { vec![Vec::new(); t] } else { frames };

    let traj = Trajectory {
        part_id: meta.part_id,
        voxel_size: meta.voxel_size,
        temperature: meta.temperature,
        node_types,
        frames,
    };
    traj.validate().map_err(|m| StoreError::invalid(dir, m))?;
    Ok(traj)
}
