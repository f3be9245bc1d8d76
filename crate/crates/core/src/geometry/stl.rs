//! Binary STL reading and writing.
//!
//! Layout: 80-byte header, `u32` little-endian triangle count, then one
//! 50-byte record per triangle (normal + three vertices as little-endian
//! `f32`, followed by a 2-byte attribute word).

use super::GeometryError;

const HEADER_LEN: usize = 80;
const RECORD_LEN: usize = 50;

/// One facet as stored in the file. Coordinates are kept at file precision so
/// a parse/write cycle is bit-exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub normal: [f32; 3],
    pub vertices: [[f32; 3]; 3],
}

impl Triangle {
    /// Builds a facet and fills in the right-handed unit normal.
    pub fn new(v0: [f32; 3], v1: [f32; 3], v2: [f32; 3]) -> Self {
        let e1 = sub(v1, v0);
        let e2 = sub(v2, v0);
        let n = [
            e1[1] * e2[2] - e1[2] * e2[1],
            e1[2] * e2[0] - e1[0] * e2[2],
            e1[0] * e2[1] - e1[1] * e2[0],
        ];
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        let normal = if len > 0.0 {
            [n[0] / len, n[1] / len, n[2] / len]
        } else {
            [0.0; 3]
        };
        Triangle {
            normal,
            vertices: [v0, v1, v2],
        }
    }

    pub fn vertex_f64(&self, i: usize) -> [f64; 3] {
        let v = self.vertices[i];
        [v[0] as f64, v[1] as f64, v[2] as f64]
    }
}

fn sub(a: [f32; 3], b: [f32; 3]) -> [f32; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// A triangle soup in millimetres.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub triangles: Vec<Triangle>,
}

impl TriangleMesh {
    pub fn new(triangles: Vec<Triangle>) -> Self {
        TriangleMesh { triangles }
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Axis-aligned bounding box `(min, max)`, or `None` for an empty mesh.
    pub fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        let mut iter = self.triangles.iter().flat_map(|t| (0..3).map(|i| t.vertex_f64(i)));
        let first = iter.next()?;
        let (mut lo, mut hi) = (first, first);
        for v in iter {
            for d in 0..3 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        Some((lo, hi))
    }

    /// Returns a copy shifted by `offset` (computed in `f32`, the storage precision).
    pub fn translated(&self, offset: [f32; 3]) -> Self {
        let triangles = self
            .triangles
            .iter()
            .map(|t| {
                let mut t = *t;
                for v in t.vertices.iter_mut() {
                    for d in 0..3 {
                        v[d] += offset[d];
                    }
                }
                t
            })
            .collect();
        TriangleMesh { triangles }
    }
}

/// Parses a binary STL file.
///
/// ASCII STL (`solid ...` text) is rejected with `UnsupportedFormat` when the
/// byte length does not match the binary layout.
pub fn parse_stl(bytes: &[u8]) -> Result<TriangleMesh, GeometryError> {
    let looks_ascii = bytes.starts_with(b"solid") && bytes.iter().all(|b| b.is_ascii());
    if bytes.len() < HEADER_LEN + 4 {
        if looks_ascii {
            return Err(GeometryError::UnsupportedFormat("ASCII STL".into()));
        }
        return Err(GeometryError::TruncatedFile {
            expected: HEADER_LEN + 4,
            actual: bytes.len(),
        });
    }
    let count = u32::from_le_bytes(bytes[HEADER_LEN..HEADER_LEN + 4].try_into().unwrap()) as usize;
    let expected = HEADER_LEN + 4 + RECORD_LEN * count;
    if bytes.len() != expected {
        if looks_ascii {
            return Err(GeometryError::UnsupportedFormat("ASCII STL".into()));
        }
        return Err(GeometryError::TruncatedFile {
            expected,
            actual: bytes.len(),
        });
    }

    let mut triangles = Vec::with_capacity(count);
    for (index, rec) in bytes[HEADER_LEN + 4..].chunks_exact(RECORD_LEN).enumerate() {
        let mut f = [0f32; 12];
        for (i, x) in f.iter_mut().enumerate() {
            *x = f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap());
        }
        if f[3..].iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFiniteVertex { triangle: index });
        }
        triangles.push(Triangle {
            normal: [f[0], f[1], f[2]],
            vertices: [[f[3], f[4], f[5]], [f[6], f[7], f[8]], [f[9], f[10], f[11]]],
        });
    }
    Ok(TriangleMesh { triangles })
}

/// Serializes a mesh as binary STL with a blank header and zero attributes.
pub fn write_stl(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 + RECORD_LEN * mesh.len());
    let mut header = [0u8; HEADER_LEN];
    let tag = b"binary STL written by sinter-gnn";
    header[..tag.len()].copy_from_slice(tag);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.len() as u32).to_le_bytes());
    for t in &mesh.triangles {
        for x in t.normal.iter().chain(t.vertices.iter().flatten()) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&[0u8; 2]);
    }
    out
}

/// Closed, outward-oriented mesh of the box `[min, max]` (12 triangles).
pub fn box_mesh(min: [f32; 3], max: [f32; 3]) -> TriangleMesh {
    let c = |i: usize| -> [f32; 3] {
        [
            if i & 1 == 0 { min[0] } else { max[0] },
            if i & 2 == 0 { min[1] } else { max[1] },
            if i & 4 == 0 { min[2] } else { max[2] },
        ]
    };
    // Corner indices of each face, counter-clockwise seen from outside.
    const FACES: [[usize; 4]; 6] = [
        [0, 2, 3, 1], // z-
        [4, 5, 7, 6], // z+
        [0, 1, 5, 4], // y-
        [2, 6, 7, 3], // y+
        [0, 4, 6, 2], // x-
        [1, 3, 7, 5], // x+
    ];
    let mut triangles = Vec::with_capacity(12);
    for f in FACES {
        triangles.push(Triangle::new(c(f[0]), c(f[1]), c(f[2])));
        triangles.push(Triangle::new(c(f[0]), c(f[2]), c(f[3])));
    }
    TriangleMesh { triangles }
}

/// Union of boxes whose faces may touch; the caller keeps boxes disjoint in volume.
/// Coincident internal faces cancel under ray parity, so the result voxelizes as the
/// union solid.
pub fn boxes_mesh(boxes: &[([f32; 3], [f32; 3])]) -> TriangleMesh {
    let mut triangles = Vec::new();
    for (lo, hi) in boxes {
        triangles.extend(box_mesh(*lo, *hi).triangles);
    }
    TriangleMesh { triangles }
}

/// Closed UV sphere. `segments` around the axis, `rings` from pole to pole.
pub fn sphere_mesh(center: [f32; 3], radius: f32, segments: usize, rings: usize) -> TriangleMesh {
    use std::f64::consts::PI;
    let point = |ring: usize, seg: usize| -> [f32; 3] {
        let theta = PI * ring as f64 / rings as f64;
        let phi = 2.0 * PI * (seg % segments) as f64 / segments as f64;
        let r = radius as f64;
        [
            center[0] + (r * theta.sin() * phi.cos()) as f32,
            center[1] + (r * theta.sin() * phi.sin()) as f32,
            center[2] + (r * theta.cos()) as f32,
        ]
    };
    let mut triangles = Vec::new();
    for ring in 0..rings {
        for seg in 0..segments {
            let a = point(ring, seg);
            let b = point(ring + 1, seg);
            let c = point(ring + 1, seg + 1);
            let d = point(ring, seg + 1);
            if ring != 0 {
                triangles.push(Triangle::new(a, b, d));
            }
            if ring + 1 != rings {
                triangles.push(Triangle::new(b, c, d));
            }
        }
    }
    TriangleMesh { triangles }
}
