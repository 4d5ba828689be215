//! Exact closest point on a triangle.

use super::vec3::Vec3;

/// Closest point to `p` on triangle `(a, b, c)`, handling vertex, edge, and
/// interior regions exactly (Voronoi-region case analysis).
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;

    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }

    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return a + ab * t;
    }

    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return a + ac * t;
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * t;
    }

    // Interior. For degenerate (collinear) triangles the denominator is 0 and
    // one of the edge branches above has already fired.
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    const B: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    const C: Vec3 = Vec3::new(0.0, 1.0, 0.0);

    #[test]
    fn interior_projection() {
        let p = Vec3::new(0.25, 0.25, 5.0);
        let q = closest_point_on_triangle(p, A, B, C);
        assert!((q - Vec3::new(0.25, 0.25, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn vertex_regions() {
        assert_eq!(closest_point_on_triangle(Vec3::new(-1.0, -1.0, 0.3), A, B, C), A);
        assert_eq!(closest_point_on_triangle(Vec3::new(2.0, -0.5, 0.0), A, B, C), B);
        assert_eq!(closest_point_on_triangle(Vec3::new(-0.5, 2.0, -1.0), A, B, C), C);
    }

    #[test]
    fn edge_regions() {
        let q = closest_point_on_triangle(Vec3::new(0.5, -1.0, 0.0), A, B, C);
        assert!((q - Vec3::new(0.5, 0.0, 0.0)).norm() < 1e-12);
        let q = closest_point_on_triangle(Vec3::new(-1.0, 0.5, 0.0), A, B, C);
        assert!((q - Vec3::new(0.0, 0.5, 0.0)).norm() < 1e-12);
        // Hypotenuse.
        let q = closest_point_on_triangle(Vec3::new(1.0, 1.0, 0.0), A, B, C);
        assert!((q - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn point_on_triangle_maps_to_itself() {
        let p = Vec3::new(0.2, 0.3, 0.0);
        let q = closest_point_on_triangle(p, A, B, C);
        assert!((q - p).norm() < 1e-15);
    }
}
