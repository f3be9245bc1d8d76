//! Solid voxelization by ray parity.
//!
//! Every voxel row along x shares one ray line `(y_c, z_c)`. The line is
//! intersected with each facet once; a voxel is inside iff an odd number of
//! crossings lie strictly beyond its center in +x.

use rayon::prelude::*;

use super::stl::TriangleMesh;
use super::GeometryError;

/// Dense occupancy grid, x-fastest then y then z.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub origin: [f64; 3],
    pub voxel_size: f64,
    pub dims: [usize; 3],
    pub occupancy: Vec<bool>,
}

impl VoxelGrid {
    /// Empty grid; fails when `voxel_size` is not a positive finite number.
    pub fn new(origin: [f64; 3], voxel_size: f64, dims: [usize; 3]) -> Result<Self, GeometryError> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(GeometryError::InvalidVoxelSize(voxel_size));
        }
        Ok(VoxelGrid {
            origin,
            voxel_size,
            dims,
            occupancy: vec![false; dims[0] * dims[1] * dims[2]],
        })
    }

    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let i = index % self.dims[0];
        let j = (index / self.dims[0]) % self.dims[1];
        let k = index / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupancy[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: bool) {
        let idx = self.index(i, j, k);
        self.occupancy[idx] = value;
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Grid coordinates of occupied voxels in occupancy order.
    pub fn occupied_coords(&self) -> Vec<[usize; 3]> {
        self.occupancy
            .iter()
            .enumerate()
            .filter(|(_, &o)| o)
            .map(|(idx, _)| self.coords(idx))
            .collect()
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let s = self.voxel_size;
        [
            self.origin[0] + (i as f64 + 0.5) * s,
            self.origin[1] + (j as f64 + 0.5) * s,
            self.origin[2] + (k as f64 + 0.5) * s,
        ]
    }

    /// Fills the axis-aligned block of voxel indices `[lo, hi)`.
    pub fn fill_block(&mut self, lo: [usize; 3], hi: [usize; 3]) {
        for k in lo[2]..hi[2] {
            for j in lo[1]..hi[1] {
                for i in lo[0]..hi[0] {
                    self.set(i, j, k, true);
                }
            }
        }
    }
}

/// One center per occupied voxel, in occupancy order.
pub fn voxel_centers(grid: &VoxelGrid) -> Vec<[f64; 3]> {
    grid.occupied_coords()
        .into_iter()
        .map(|[i, j, k]| grid.center(i, j, k))
        .collect()
}

/// Result of [`voxelize`]: the grid plus the number of voxels whose parity
/// could not be decided even after perturbing the ray.
#[derive(Debug, Clone, PartialEq)]
pub struct Voxelization {
    pub grid: VoxelGrid,
    pub ambiguous: usize,
}

/// Facet projected onto the yz plane, with its plane equation for solving x.
struct Facet {
    a: [f64; 3],
    b: [f64; 3],
    c: [f64; 3],
    ymin: f64,
    ymax: f64,
    zmin: f64,
    zmax: f64,
}

enum Crossing {
    Miss,
    Hit(f64),
    Degenerate,
}

impl Facet {
    fn new(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> Self {
        Facet {
            a,
            b,
            c,
            ymin: a[1].min(b[1]).min(c[1]),
            ymax: a[1].max(b[1]).max(c[1]),
            zmin: a[2].min(b[2]).min(c[2]),
            zmax: a[2].max(b[2]).max(c[2]),
        }
    }

    fn cross(&self, y: f64, z: f64) -> Crossing {
        if y < self.ymin || y > self.ymax || z < self.zmin || z > self.zmax {
            return Crossing::Miss;
        }
        let (a, b, c) = (self.a, self.b, self.c);
        let area = orient(a[1], a[2], b[1], b[2], c[1], c[2]);
        if area == 0.0 {
            // Facet is parallel to the ray; its neighbours carry the crossing.
            return Crossing::Miss;
        }
        let w0 = orient(b[1], b[2], c[1], c[2], y, z);
        let w1 = orient(c[1], c[2], a[1], a[2], y, z);
        let w2 = orient(a[1], a[2], b[1], b[2], y, z);
        if w0 == 0.0 || w1 == 0.0 || w2 == 0.0 {
            let on_boundary = [w0, w1, w2].iter().all(|&w| w == 0.0 || (w > 0.0) == (area > 0.0));
            return if on_boundary {
                Crossing::Degenerate
            } else {
                Crossing::Miss
            };
        }
        let inside = if area > 0.0 {
            w0 > 0.0 && w1 > 0.0 && w2 > 0.0
        } else {
            w0 < 0.0 && w1 < 0.0 && w2 < 0.0
        };
        if !inside {
            return Crossing::Miss;
        }
        let x = (w0 * a[0] + w1 * b[0] + w2 * c[0]) / area;
        Crossing::Hit(x)
    }
}

#[inline]
fn orient(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Crossing abscissae of the +x ray line at `(y, z)`, or `None` if the line
/// grazes an edge or vertex.
fn row_crossings(facets: &[Facet], y: f64, z: f64) -> Option<Vec<f64>> {
    let mut xs = Vec::new();
    for f in facets {
        match f.cross(y, z) {
            Crossing::Miss => {}
            Crossing::Hit(x) => xs.push(x),
            Crossing::Degenerate => return None,
        }
    }
    xs.sort_by(f64::total_cmp);
    Some(xs)
}

/// Solid-voxelizes a watertight mesh.
///
/// The grid origin is the bounding-box minimum snapped down to a multiple of
/// `voxel_size`. Rays that graze an edge or vertex are retried once from an
/// origin shifted by `1e-9 * voxel_size`; rows that stay ambiguous are left
/// empty and counted in [`Voxelization::ambiguous`].
pub fn voxelize(mesh: &TriangleMesh, voxel_size: f64) -> Result<Voxelization, GeometryError> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(GeometryError::InvalidVoxelSize(voxel_size));
    }
    let (lo, hi) = mesh.bounds().ok_or(GeometryError::DegenerateMesh)?;
    let mut origin = [0.0; 3];
    let mut dims = [0usize; 3];
    for d in 0..3 {
        origin[d] = (lo[d] / voxel_size).floor() * voxel_size;
        dims[d] = ((hi[d] - origin[d]) / voxel_size).ceil().max(0.0) as usize;
    }
    let mut grid = VoxelGrid::new(origin, voxel_size, dims)?;

    let facets: Vec<Facet> = mesh
        .triangles
        .iter()
        .map(|t| Facet::new(t.vertex_f64(0), t.vertex_f64(1), t.vertex_f64(2)))
        .collect();
    let eps = 1e-9 * voxel_size;
    let [nx, ny, _] = dims;

    let slices: Vec<(Vec<bool>, usize)> = (0..dims[2])
        .into_par_iter()
        .map(|k| {
            let mut slab = vec![false; nx * ny];
            let mut ambiguous = 0;
            for j in 0..ny {
                let c = grid.center(0, j, k);
                let (y, z) = (c[1], c[2]);
                let xs = row_crossings(&facets, y, z)
                    .or_else(|| row_crossings(&facets, y + eps, z + 0.618_033_988_749_895 * eps));
                let Some(xs) = xs else {
                    ambiguous += nx;
                    continue;
                };
                for i in 0..nx {
                    let xc = origin[0] + (i as f64 + 0.5) * voxel_size;
                    if xs.iter().any(|&x| x == xc) {
                        ambiguous += 1;
                        continue;
                    }
                    let beyond = xs.len() - xs.partition_point(|&x| x <= xc);
                    slab[i + nx * j] = beyond % 2 == 1;
                }
            }
            (slab, ambiguous)
        })
        .collect();

    let mut ambiguous = 0;
    for (k, (slab, amb)) in slices.into_iter().enumerate() {
        let start = k * nx * ny;
        grid.occupancy[start..start + nx * ny].copy_from_slice(&slab);
        ambiguous += amb;
    }
    if ambiguous > 0 {
        log::warn!("voxelize: {ambiguous} voxels with ambiguous ray parity left empty");
    }
    Ok(Voxelization { grid, ambiguous })
}
