//! Part geometry: binary STL meshes, solid voxelization and the `.vox` grid format.

mod stl;
mod vox;
mod voxel;

pub use stl::{box_mesh, boxes_mesh, parse_stl, sphere_mesh, write_stl, Triangle, TriangleMesh};
pub use vox::{read_vox, write_vox, VOX_MAGIC};
pub use voxel::{voxel_centers, voxelize, VoxelGrid, Voxelization};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("non-finite vertex in triangle {triangle}")]
    NonFiniteVertex { triangle: usize },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("mesh has no triangles")]
    DegenerateMesh,
    #[error("voxel size must be positive and finite, got {0}")]
    InvalidVoxelSize(f64),
}
