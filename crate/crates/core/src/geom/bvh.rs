//! Bounding-volume hierarchy over triangles and the exact nearest-point
//! query it accelerates.
//!
//! Queries return bit-identical results to an exhaustive per-triangle scan:
//! the per-triangle computation is shared, equal distances are broken by the
//! lowest triangle index, and subtrees are pruned only when strictly farther
//! than the current best.

use crate::error::{NvfError, Result};

use super::mesh::{DisplacementSample, TriangleMesh};
use super::tri::closest_point_on_triangle;
use super::vec3::Vec3;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            lo: Vec3::splat(f64::INFINITY),
            hi: Vec3::splat(f64::NEG_INFINITY),
        }
    }

    fn grow_point(&mut self, p: Vec3) {
        self.lo = self.lo.min_by_component(p);
        self.hi = self.hi.max_by_component(p);
    }

    fn grow(&mut self, other: &Aabb) {
        self.lo = self.lo.min_by_component(other.lo);
        self.hi = self.hi.max_by_component(other.hi);
    }

    fn contains(&self, other: &Aabb) -> bool {
        self.lo.x <= other.lo.x
            && self.lo.y <= other.lo.y
            && self.lo.z <= other.lo.z
            && self.hi.x >= other.hi.x
            && self.hi.y >= other.hi.y
            && self.hi.z >= other.hi.z
    }

    /// Squared distance from `p` to the box (0 inside).
    #[inline]
    fn dist_sq(&self, p: Vec3) -> f64 {
        let dx = (self.lo.x - p.x).max(0.0).max(p.x - self.hi.x);
        let dy = (self.lo.y - p.y).max(0.0).max(p.y - self.hi.y);
        let dz = (self.lo.z - p.z).max(0.0).max(p.z - self.hi.z);
        dx * dx + dy * dy + dz * dz
    }
}

#[derive(Debug)]
enum Node {
    Leaf {
        bbox: Aabb,
        /// Range into `Bvh::order`.
        start: u32,
        count: u32,
    },
    Inner {
        bbox: Aabb,
        left: u32,
        right: u32,
    },
}

impl Node {
    fn bbox(&self) -> &Aabb {
        match self {
            Node::Leaf { bbox, .. } | Node::Inner { bbox, .. } => bbox,
        }
    }
}

/// Median-split AABB tree over mesh triangles. Construction is
/// single-threaded; queries are read-only and safe to run concurrently.
#[derive(Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Triangle indices grouped by leaf, sorted ascending within each leaf.
    order: Vec<u32>,
    root: u32,
    pub leaf_size: usize,
}

pub const DEFAULT_LEAF_SIZE: usize = 8;

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Result<Bvh> {
        Bvh::build_with_leaf_size(mesh, DEFAULT_LEAF_SIZE)
    }

    pub fn build_with_leaf_size(mesh: &TriangleMesh, leaf_size: usize) -> Result<Bvh> {
        if mesh.is_empty() {
            return Err(NvfError::invalid("cannot build a BVH over an empty mesh"));
        }
        let leaf_size = leaf_size.max(1);

        let n = mesh.triangles.len();
        let mut boxes = Vec::with_capacity(n);
        let mut centroids = Vec::with_capacity(n);
        for t in 0..n {
            let [a, b, c] = mesh.triangle_vertices(t);
            let mut bb = Aabb::empty();
            bb.grow_point(a);
            bb.grow_point(b);
            bb.grow_point(c);
            boxes.push(bb);
            centroids.push((a + b + c) / 3.0);
        }

        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::new();
        let root = build_node(&mut nodes, &mut order, &boxes, &centroids, 0, n, leaf_size);
        // Lowest-index tie-break needs ascending triangle order inside leaves.
        for node in &nodes {
            if let Node::Leaf { start, count, .. } = node {
                let s = *start as usize;
                let e = s + *count as usize;
                order[s..e].sort_unstable();
            }
        }
        Ok(Bvh { nodes, order, root, leaf_size })
    }

    pub fn triangle_count(&self) -> usize {
        self.order.len()
    }

    /// Invariant checks used by tests: each triangle in exactly one leaf,
    /// parent boxes containing child boxes.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = vec![false; self.order.len()];
        for node in &self.nodes {
            match node {
                Node::Leaf { start, count, .. } => {
                    for &t in &self.order[*start as usize..(*start + *count) as usize] {
                        if seen[t as usize] {
                            return Err(NvfError::invalid(format!(
                                "triangle {t} appears in more than one leaf"
                            )));
                        }
                        seen[t as usize] = true;
                    }
                }
                Node::Inner { bbox, left, right } => {
                    for child in [*left, *right] {
                        if !bbox.contains(self.nodes[child as usize].bbox()) {
                            return Err(NvfError::invalid("parent box does not contain child"));
                        }
                    }
                }
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(NvfError::invalid("triangle missing from all leaves"));
        }
        Ok(())
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    order: &mut [u32],
    boxes: &[Aabb],
    centroids: &[Vec3],
    start: usize,
    end: usize,
    leaf_size: usize,
) -> u32 {
    let mut bbox = Aabb::empty();
    for &t in &order[start..end] {
        bbox.grow(&boxes[t as usize]);
    }

    let count = end - start;
    if count <= leaf_size {
        nodes.push(Node::Leaf { bbox, start: start as u32, count: count as u32 });
        return (nodes.len() - 1) as u32;
    }

    // Median split along the longest centroid axis.
    let mut clo = Vec3::splat(f64::INFINITY);
    let mut chi = Vec3::splat(f64::NEG_INFINITY);
    for &t in &order[start..end] {
        clo = clo.min_by_component(centroids[t as usize]);
        chi = chi.max_by_component(centroids[t as usize]);
    }
    let extent = chi - clo;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };

    let mid = start + count / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        let ca = centroids[a as usize][axis];
        let cb = centroids[b as usize][axis];
        ca.partial_cmp(&cb).unwrap().then(a.cmp(&b))
    });

    let left = build_node(nodes, order, boxes, centroids, start, mid, leaf_size);
    let right = build_node(nodes, order, boxes, centroids, mid, end, leaf_size);
    let mut bb = Aabb::empty();
    bb.grow(nodes[left as usize].bbox());
    bb.grow(nodes[right as usize].bbox());
    nodes.push(Node::Inner { bbox: bb, left, right });
    (nodes.len() - 1) as u32
}

/// Exact nearest point on the mesh surface for query `q`.
///
/// Vertex, edge, and interior closest points are all handled; equal distances
/// resolve to the lowest triangle index.
pub fn nearest_point_on_mesh(mesh: &TriangleMesh, bvh: &Bvh, q: Vec3) -> DisplacementSample {
    debug_assert_eq!(bvh.triangle_count(), mesh.triangles.len());
    let mut best_d2 = f64::INFINITY;
    let mut best_tri = u32::MAX;
    let mut best_point = q;

    // Iterative traversal, nearer child first.
    let mut stack: Vec<u32> = Vec::with_capacity(64);
    stack.push(bvh.root);
    while let Some(id) = stack.pop() {
        match &bvh.nodes[id as usize] {
            Node::Leaf { bbox, start, count } => {
                if bbox.dist_sq(q) > best_d2 {
                    continue;
                }
                for &t in &bvh.order[*start as usize..(*start + *count) as usize] {
                    let [a, b, c] = mesh.triangle_vertices(t as usize);
                    let p = closest_point_on_triangle(q, a, b, c);
                    let d2 = (p - q).norm_sq();
                    if d2 < best_d2 || (d2 == best_d2 && t < best_tri) {
                        best_d2 = d2;
                        best_tri = t;
                        best_point = p;
                    }
                }
            }
            Node::Inner { bbox, left, right } => {
                if bbox.dist_sq(q) > best_d2 {
                    continue;
                }
                let dl = bvh.nodes[*left as usize].bbox().dist_sq(q);
                let dr = bvh.nodes[*right as usize].bbox().dist_sq(q);
                // Push the farther child first so the nearer pops first.
                if dl <= dr {
                    stack.push(*right);
                    stack.push(*left);
                } else {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
    }

    DisplacementSample { query: q, displacement: best_point - q, triangle: best_tri }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::fixtures;

    /// Exhaustive scan; the reference the BVH path is checked against.
    fn nearest_brute(mesh: &TriangleMesh, q: Vec3) -> DisplacementSample {
        let mut best_d2 = f64::INFINITY;
        let mut best_tri = u32::MAX;
        let mut best_point = q;
        for t in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.triangle_vertices(t);
            let p = closest_point_on_triangle(q, a, b, c);
            let d2 = (p - q).norm_sq();
            if d2 < best_d2 {
                best_d2 = d2;
                best_tri = t as u32;
                best_point = p;
            }
        }
        DisplacementSample { query: q, displacement: best_point - q, triangle: best_tri }
    }

    fn lcg_points(n: usize, seed: u64) -> Vec<Vec3> {
        let mut state = seed.wrapping_mul(2862933555777941757).wrapping_add(1);
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 1.2 - 0.6
        };
        (0..n).map(|_| Vec3::new(next(), next(), next())).collect()
    }

    #[test]
    fn bvh_invariants_hold() {
        let mesh = fixtures::torus(48, 24);
        let bvh = Bvh::build(&mesh).unwrap();
        bvh.check_invariants().unwrap();
    }

    #[test]
    fn sphere_distance_from_center() {
        let mesh = fixtures::sphere(64, 32);
        let bvh = Bvh::build(&mesh).unwrap();
        let s = nearest_point_on_mesh(&mesh, &bvh, Vec3::ZERO);
        // One chord-sag of the tessellation.
        let sag = fixtures::SPHERE_RADIUS * (1.0 - (std::f64::consts::PI / 32.0).cos());
        assert!((s.distance() - fixtures::SPHERE_RADIUS).abs() <= sag + 1e-12);
    }

    #[test]
    fn query_on_triangle_interior_has_zero_displacement() {
        let mesh = TriangleMesh {
            vertices: vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            triangles: vec![[0, 1, 2]],
        };
        let bvh = Bvh::build(&mesh).unwrap();
        let s = nearest_point_on_mesh(&mesh, &bvh, Vec3::new(0.3, 0.3, 0.0));
        assert_eq!(s.displacement, Vec3::ZERO);
        assert_eq!(s.triangle, 0);
    }

    #[test]
    fn bvh_matches_brute_force_exactly_on_torus() {
        let mesh = fixtures::torus(32, 16);
        let bvh = Bvh::build(&mesh).unwrap();
        for q in lcg_points(1000, 7) {
            let fast = nearest_point_on_mesh(&mesh, &bvh, q);
            let slow = nearest_brute(&mesh, q);
            assert_eq!(fast.triangle, slow.triangle, "tie-break mismatch at {q:?}");
            assert_eq!(fast.displacement, slow.displacement);
        }
    }

    #[test]
    fn shared_edge_tie_breaks_to_lower_index() {
        // Two triangles sharing the edge x=0..1,y=0: the closest point for a
        // query below that edge lies on it, equidistant from both.
        let mesh = TriangleMesh {
            vertices: vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.5, 1.0, 0.5),
                Vec3::new(0.5, 1.0, -0.5),
            ],
            triangles: vec![[0, 1, 2], [0, 1, 3]],
        };
        let bvh = Bvh::build(&mesh).unwrap();
        let s = nearest_point_on_mesh(&mesh, &bvh, Vec3::new(0.5, -1.0, 0.0));
        assert_eq!(s.triangle, 0);
    }

    #[test]
    fn displacement_lands_on_surface() {
        let mesh = fixtures::sphere(32, 16);
        let bvh = Bvh::build(&mesh).unwrap();
        for q in lcg_points(200, 11) {
            let s = nearest_point_on_mesh(&mesh, &bvh, q);
            if s.distance() > 0.0 {
                let back = nearest_point_on_mesh(&mesh, &bvh, s.nearest());
                assert!(back.distance() < 1e-9, "nearest point not on surface");
            }
        }
    }
}
