//! Static 3-d tree for fixed-radius neighbour queries.
//!
//! The tree is stored implicitly: `order` is a permutation of point indices
//! arranged so that the median of every sub-range is that range's splitting
//! node, with the split axis chosen as the widest extent of the range.

pub struct KdTree<'a> {
    points: &'a [[f64; 3]],
    order: Vec<usize>,
    axes: Vec<u8>,
}

const LEAF_SIZE: usize = 8;

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [[f64; 3]]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0u8; points.len()];
        build(points, &mut order, &mut axes);
        KdTree { points, order, axes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Appends to `out` every index `j` with `|p_j - query|² <= radius²`.
    /// Output order is unspecified.
    pub fn within_radius(&self, query: [f64; 3], radius: f64, out: &mut Vec<usize>) {
        let r2 = radius * radius;
        self.search(0, self.order.len(), query, radius, r2, out);
    }

    fn search(&self, lo: usize, hi: usize, q: [f64; 3], r: f64, r2: f64, out: &mut Vec<usize>) {
        if hi - lo <= LEAF_SIZE {
            for &idx in &self.order[lo..hi] {
                if dist2(self.points[idx], q) <= r2 {
                    out.push(idx);
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let axis = self.axes[mid] as usize;
        let p = self.points[idx];
        if dist2(p, q) <= r2 {
            out.push(idx);
        }
        let delta = q[axis] - p[axis];
        // Points left of `mid` have coordinate <= split, right ones >= split.
        if delta <= r {
            self.search(lo, mid, q, r, r2, out);
        }
        if delta >= -r {
            self.search(mid + 1, hi, q, r, r2, out);
        }
    }
}

#[inline]
pub(crate) fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

fn build(points: &[[f64; 3]], order: &mut [usize], axes: &mut [u8]) {
    if order.len() <= LEAF_SIZE {
        return;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        for d in 0..3 {
            lo[d] = lo[d].min(points[i][d]);
            hi[d] = hi[d].max(points[i][d]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    axes[mid] = axis as u8;
    let (left, rest) = order.split_at_mut(mid);
    let (left_axes, rest_axes) = axes.split_at_mut(mid);
    build(points, left, left_axes);
    build(points, &mut rest[1..], &mut rest_axes[1..]);
}
