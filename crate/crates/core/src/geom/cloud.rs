//! Point clouds and an exact k-nearest-neighbor index.

use ndarray::Array2;

use crate::error::{NvfError, Result};

use super::vec3::Vec3;

/// A point set, optionally carrying per-point feature rows attached by the
/// shape encoder.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub features: Option<Array2<f32>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Vec3>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(NvfError::invalid(format!("non-finite point {p:?}")));
        }
        Ok(PointCloud { points, features: None })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// kd-tree over a point set. Median split on the longest axis; exact k-NN
/// with ties broken by the lower point index. Read-only after construction.
#[derive(Debug, Clone)]
pub struct PointIndex {
    points: Vec<Vec3>,
    nodes: Vec<KdNode>,
    order: Vec<u32>,
    root: u32,
}

#[derive(Debug, Clone)]
enum KdNode {
    Leaf { lo: Vec3, hi: Vec3, start: u32, count: u32 },
    Inner { lo: Vec3, hi: Vec3, left: u32, right: u32 },
}

impl KdNode {
    #[inline]
    fn dist_sq(&self, q: Vec3) -> f64 {
        let (lo, hi) = match self {
            KdNode::Leaf { lo, hi, .. } | KdNode::Inner { lo, hi, .. } => (lo, hi),
        };
        let dx = (lo.x - q.x).max(0.0).max(q.x - hi.x);
        let dy = (lo.y - q.y).max(0.0).max(q.y - hi.y);
        let dz = (lo.z - q.z).max(0.0).max(q.z - hi.z);
        dx * dx + dy * dy + dz * dz
    }
}

const KD_LEAF: usize = 16;

impl PointIndex {
    pub fn build(points: &[Vec3]) -> Result<PointIndex> {
        if points.is_empty() {
            return Err(NvfError::invalid("cannot index an empty point set"));
        }
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        let root = build_kd(&mut nodes, &mut order, points, 0, points.len());
        Ok(PointIndex { points: points.to_vec(), nodes, order, root })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points to `q`, sorted by ascending distance, ties by
    /// lower index. Distances are Euclidean (not squared).
    pub fn knn(&self, q: Vec3, k: usize) -> Vec<(u32, f64)> {
        let mut best: Vec<(f64, u32)> = Vec::with_capacity(k + 1);
        self.knn_rec(self.root, q, k, &mut best);
        best.into_iter().map(|(d2, i)| (i, d2.sqrt())).collect()
    }

    fn knn_rec(&self, node: u32, q: Vec3, k: usize, best: &mut Vec<(f64, u32)>) {
        match &self.nodes[node as usize] {
            KdNode::Leaf { start, count, .. } => {
                for &i in &self.order[*start as usize..(*start + *count) as usize] {
                    let d2 = (self.points[i as usize] - q).norm_sq();
                    let key = (d2, i);
                    if best.len() < k {
                        let pos = best.partition_point(|&e| e < key);
                        best.insert(pos, key);
                    } else if key < best[k - 1] {
                        let pos = best.partition_point(|&e| e < key);
                        best.insert(pos, key);
                        best.pop();
                    }
                }
            }
            KdNode::Inner { left, right, .. } => {
                let dl = self.nodes[*left as usize].dist_sq(q);
                let dr = self.nodes[*right as usize].dist_sq(q);
                let (first, d_first, second, d_second) = if dl <= dr {
                    (*left, dl, *right, dr)
                } else {
                    (*right, dr, *left, dl)
                };
                // Visit on equality: an equidistant point with a lower index
                // may hide behind the bound.
                if best.len() < k || d_first <= best[k - 1].0 {
                    self.knn_rec(first, q, k, best);
                }
                if best.len() < k || d_second <= best[k - 1].0 {
                    self.knn_rec(second, q, k, best);
                }
            }
        }
    }

    /// Nearest single point: `(index, squared distance)`.
    pub fn nearest(&self, q: Vec3) -> (u32, f64) {
        let mut best = (f64::INFINITY, u32::MAX);
        self.nearest_rec(self.root, q, &mut best);
        (best.1, best.0)
    }

    fn nearest_rec(&self, node: u32, q: Vec3, best: &mut (f64, u32)) {
        match &self.nodes[node as usize] {
            KdNode::Leaf { start, count, .. } => {
                for &i in &self.order[*start as usize..(*start + *count) as usize] {
                    let d2 = (self.points[i as usize] - q).norm_sq();
                    if (d2, i) < *best {
                        *best = (d2, i);
                    }
                }
            }
            KdNode::Inner { left, right, .. } => {
                let dl = self.nodes[*left as usize].dist_sq(q);
                let dr = self.nodes[*right as usize].dist_sq(q);
                let (first, d_first, second, d_second) = if dl <= dr {
                    (*left, dl, *right, dr)
                } else {
                    (*right, dr, *left, dl)
                };
                if d_first <= best.0 {
                    self.nearest_rec(first, q, best);
                }
                if d_second <= best.0 {
                    self.nearest_rec(second, q, best);
                }
            }
        }
    }
}

fn bounds_of(points: &[Vec3], order: &[u32]) -> (Vec3, Vec3) {
    let mut lo = Vec3::splat(f64::INFINITY);
    let mut hi = Vec3::splat(f64::NEG_INFINITY);
    for &i in order {
        lo = lo.min_by_component(points[i as usize]);
        hi = hi.max_by_component(points[i as usize]);
    }
    (lo, hi)
}

fn build_kd(
    nodes: &mut Vec<KdNode>,
    order: &mut [u32],
    points: &[Vec3],
    start: usize,
    end: usize,
) -> u32 {
    let (lo, hi) = bounds_of(points, &order[start..end]);
    let count = end - start;
    if count <= KD_LEAF {
        nodes.push(KdNode::Leaf { lo, hi, start: start as u32, count: count as u32 });
        return (nodes.len() - 1) as u32;
    }

    let extent = hi - lo;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = start + count / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        let pa = points[a as usize][axis];
        let pb = points[b as usize][axis];
        pa.partial_cmp(&pb).unwrap().then(a.cmp(&b))
    });

    let left = build_kd(nodes, order, points, start, mid);
    let right = build_kd(nodes, order, points, mid, end);
    nodes.push(KdNode::Inner { lo, hi, left, right });
    (nodes.len() - 1) as u32
}

/// The `k` nearest cloud points to `q`, sorted by ascending Euclidean
/// distance, ties by lower index. Errors when `k` exceeds the cloud size.
pub fn nearest_point_on_cloud(cloud: &PointCloud, q: Vec3, k: usize) -> Result<Vec<(u32, f64)>> {
    if k > cloud.len() {
        return Err(NvfError::invalid(format!(
            "k = {k} exceeds cloud size {}",
            cloud.len()
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let index = PointIndex::build(&cloud.points)?;
    Ok(index.knn(q, k))
}
