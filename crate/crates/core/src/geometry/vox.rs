//! `.vox` occupancy files.
//!
//! ```text
//! magic      "VFGVOX01"            8 bytes
//! origin     f64 x 3               little-endian
//! voxel_size f64
//! dims       u32 x 3
//! occupancy  ceil(nvox / 8) bytes  bit i of the grid is bit (i % 8) of byte i / 8
//! ```

use super::voxel::VoxelGrid;
use super::GeometryError;

pub const VOX_MAGIC: &[u8; 8] = b"VFGVOX01";
const HEADER_LEN: usize = 8 + 8 * 4 + 4 * 3;

pub fn write_vox(grid: &VoxelGrid) -> Vec<u8> {
    let nvox = grid.len();
    let mut out = Vec::with_capacity(HEADER_LEN + nvox.div_ceil(8));
    out.extend_from_slice(VOX_MAGIC);
    for x in grid.origin {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.extend_from_slice(&grid.voxel_size.to_le_bytes());
    for d in grid.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    let mut bits = vec![0u8; nvox.div_ceil(8)];
    for (i, &o) in grid.occupancy.iter().enumerate() {
        if o {
            bits[i / 8] |= 1 << (i % 8);
        }
    }
    out.extend_from_slice(&bits);
    out
}

pub fn read_vox(bytes: &[u8]) -> Result<VoxelGrid, GeometryError> {
    if bytes.len() < HEADER_LEN {
        return Err(GeometryError::TruncatedFile {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if &bytes[..8] != VOX_MAGIC {
        return Err(GeometryError::UnsupportedFormat("missing VFGVOX01 magic".into()));
    }
    let f64_at = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    let origin = [f64_at(8), f64_at(16), f64_at(24)];
    let voxel_size = f64_at(32);
    let dims = [u32_at(40), u32_at(44), u32_at(48)];
    let nvox = dims[0] * dims[1] * dims[2];
    let expected = HEADER_LEN + nvox.div_ceil(8);
    if bytes.len() != expected {
        return Err(GeometryError::TruncatedFile {
            expected,
            actual: bytes.len(),
        });
    }
    let mut grid = VoxelGrid::new(origin, voxel_size, dims)?;
    let bits = &bytes[HEADER_LEN..];
    for (i, o) in grid.occupancy.iter_mut().enumerate() {
        *o = bits[i / 8] >> (i % 8) & 1 == 1;
    }
    Ok(grid)
}
