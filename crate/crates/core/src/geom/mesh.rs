//! Triangle meshes and the displacement samples they induce.

use crate::error::{NvfError, Result};

use super::vec3::Vec3;

/// An indexed triangle mesh. Meshes may be open, multi-layered, or
/// self-intersecting; no watertightness is assumed anywhere.
#[derive(Debug, Clone, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

/// A query point together with the displacement to its nearest surface
/// point. Distance and direction are derived views of the same vector.
#[derive(Debug, Clone, Copy)]
pub struct DisplacementSample {
    pub query: Vec3,
    /// `nearest - query`.
    pub displacement: Vec3,
    /// Index of the triangle carrying the nearest point.
    pub triangle: u32,
}

impl DisplacementSample {
    /// Unsigned distance to the surface.
    #[inline]
    pub fn distance(&self) -> f64 {
        self.displacement.norm()
    }

    /// Unit direction toward the nearest surface point; `None` on the
    /// surface itself.
    #[inline]
    pub fn direction(&self) -> Option<Vec3> {
        self.displacement.normalized()
    }

    /// The nearest point on the surface.
    #[inline]
    pub fn nearest(&self) -> Vec3 {
        self.query + self.displacement
    }
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = TriangleMesh { vertices, triangles };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(NvfError::invalid(format!(
                    "triangle {i} references vertex out of range (vertex count {n})"
                )));
            }
        }
        if let Some(v) = self.vertices.iter().find(|v| !v.is_finite()) {
            return Err(NvfError::invalid(format!("non-finite vertex {v:?}")));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() || self.triangles.is_empty()
    }

    pub fn triangle_vertices(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(t);
        0.5 * (b - a).cross(c - a).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Axis-aligned bounding box over all vertices.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.vertices.iter();
        let first = *it.next()?;
        let mut lo = first;
        let mut hi = first;
        for &v in it {
            lo = lo.min_by_component(v);
            hi = hi.max_by_component(v);
        }
        Some((lo, hi))
    }

    /// Edges incident to exactly one triangle. Zero for a closed surface.
    pub fn boundary_edge_count(&self) -> usize {
        use std::collections::HashMap;
        let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let key = (a.min(b), a.max(b));
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        counts.values().filter(|&&c| c == 1).count()
    }
}

/// Uniform rescale and translation produced by [`normalize_to_unit_cube`].
/// `normalized = (original + offset) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitCubeTransform {
    pub scale: f64,
    pub offset: Vec3,
}

impl UnitCubeTransform {
    pub const IDENTITY: UnitCubeTransform =
        UnitCubeTransform { scale: 1.0, offset: Vec3::ZERO };

    #[inline]
    pub fn apply(&self, p: Vec3) -> Vec3 {
        (p + self.offset) * self.scale
    }

    #[inline]
    pub fn invert(&self, p: Vec3) -> Vec3 {
        p / self.scale - self.offset
    }
}

/// Rescales a mesh so its bounding box is centered at the origin and the
/// longest axis spans exactly 1.0 (all coordinates in [-0.5, 0.5]).
///
/// Returns the normalized mesh plus the transform that was applied, so
/// outputs can be mapped back to the original frame.
pub fn normalize_to_unit_cube(mesh: &TriangleMesh) -> Result<(TriangleMesh, UnitCubeTransform)> {
    let (lo, hi) = mesh
        .bounds()
        .ok_or_else(|| NvfError::invalid("cannot normalize an empty mesh"))?;
    let extent = hi - lo;
    let longest = extent.x.max(extent.y).max(extent.z);
    if longest <= 0.0 {
        return Err(NvfError::invalid("degenerate mesh: zero extent on all axes"));
    }
    let center = (lo + hi) * 0.5;
    let transform = UnitCubeTransform { scale: 1.0 / longest, offset: -center };
    let vertices = mesh.vertices.iter().map(|&v| transform.apply(v)).collect();
    Ok((TriangleMesh { vertices, triangles: mesh.triangles.clone() }, transform))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_mesh(lo: Vec3, hi: Vec3) -> TriangleMesh {
        // Two triangles per face of an axis-aligned box.
        let v = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
        let corners = [
            v(lo.x, lo.y, lo.z),
            v(hi.x, lo.y, lo.z),
            v(hi.x, hi.y, lo.z),
            v(lo.x, hi.y, lo.z),
            v(lo.x, lo.y, hi.z),
            v(hi.x, lo.y, hi.z),
            v(hi.x, hi.y, hi.z),
            v(lo.x, hi.y, hi.z),
        ];
        let quads = [
            [0u32, 3, 2, 1],
            [4, 5, 6, 7],
            [0, 1, 5, 4],
            [2, 3, 7, 6],
            [1, 2, 6, 5],
            [0, 4, 7, 3],
        ];
        let mut triangles = Vec::new();
        for q in quads {
            triangles.push([q[0], q[1], q[2]]);
            triangles.push([q[0], q[2], q[3]]);
        }
        TriangleMesh { vertices: corners.to_vec(), triangles }
    }

    #[test]
    fn normalize_cube() {
        let mesh = box_mesh(Vec3::ZERO, Vec3::splat(2.0));
        let (out, tf) = normalize_to_unit_cube(&mesh).unwrap();
        let (lo, hi) = out.bounds().unwrap();
        assert_eq!(lo, Vec3::splat(-0.5));
        assert_eq!(hi, Vec3::splat(0.5));
        assert_eq!(tf.scale, 0.5);
    }

    #[test]
    fn normalize_already_normalized_is_identity() {
        let mesh = box_mesh(Vec3::splat(-0.5), Vec3::splat(0.5));
        let (out, tf) = normalize_to_unit_cube(&mesh).unwrap();
        assert_eq!(tf, UnitCubeTransform::IDENTITY);
        for (a, b) in out.vertices.iter().zip(&mesh.vertices) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn normalize_elongated_box() {
        let mesh = box_mesh(Vec3::ZERO, Vec3::new(4.0, 2.0, 1.0));
        let (out, _) = normalize_to_unit_cube(&mesh).unwrap();
        let (lo, hi) = out.bounds().unwrap();
        assert!((lo.x + 0.5).abs() < 1e-12 && (hi.x - 0.5).abs() < 1e-12);
        assert!((lo.y + 0.25).abs() < 1e-12 && (hi.y - 0.25).abs() < 1e-12);
        assert!((lo.z + 0.125).abs() < 1e-12 && (hi.z - 0.125).abs() < 1e-12);
    }

    #[test]
    fn normalize_degenerate_errors() {
        let mesh = TriangleMesh {
            vertices: vec![Vec3::ZERO, Vec3::ZERO, Vec3::ZERO],
            triangles: vec![[0, 1, 2]],
        };
        assert!(normalize_to_unit_cube(&mesh).is_err());
    }

    #[test]
    fn boundary_edges_of_box_are_zero() {
        let mesh = box_mesh(Vec3::ZERO, Vec3::splat(1.0));
        assert_eq!(mesh.boundary_edge_count(), 0);
    }

    #[test]
    fn round_trip_transform() {
        let mesh = box_mesh(Vec3::new(1.0, 2.0, 3.0), Vec3::new(5.0, 3.0, 4.0));
        let (out, tf) = normalize_to_unit_cube(&mesh).unwrap();
        for (orig, norm) in mesh.vertices.iter().zip(&out.vertices) {
            let back = tf.invert(*norm);
            assert!((back - *orig).norm() < 1e-12);
        }
    }
}
