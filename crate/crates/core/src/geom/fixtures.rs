//! Analytic test meshes, generated on demand so the repository ships no
//! binary data. All fixtures fit inside the unit cube [-0.5, 0.5]^3.

use super::mesh::TriangleMesh;
use super::vec3::Vec3;

pub const SPHERE_RADIUS: f64 = 0.3;
pub const TORUS_MAJOR: f64 = 0.3;
pub const TORUS_MINOR: f64 = 0.1;
pub const DISK_RADIUS: f64 = 0.35;
/// The two-plane fixture puts planes at z = +/- PLANE_GAP / 2.
pub const PLANE_GAP: f64 = 0.2;

/// UV sphere of radius 0.3 centered at the origin. Closed.
pub fn sphere(longitudes: usize, latitudes: usize) -> TriangleMesh {
    let lon = longitudes.max(3);
    let lat = latitudes.max(2);
    let r = SPHERE_RADIUS;

    let mut vertices = vec![Vec3::new(0.0, 0.0, r)];
    for i in 1..lat {
        let theta = std::f64::consts::PI * i as f64 / lat as f64;
        let (st, ct) = theta.sin_cos();
        for j in 0..lon {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / lon as f64;
            let (sp, cp) = phi.sin_cos();
            vertices.push(Vec3::new(r * st * cp, r * st * sp, r * ct));
        }
    }
    vertices.push(Vec3::new(0.0, 0.0, -r));
    let south = (vertices.len() - 1) as u32;

    let ring = |i: usize, j: usize| -> u32 { (1 + (i - 1) * lon + (j % lon)) as u32 };
    let mut triangles = Vec::new();
    for j in 0..lon {
        triangles.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for i in 1..lat - 1 {
        for j in 0..lon {
            let a = ring(i, j);
            let b = ring(i, j + 1);
            let c = ring(i + 1, j);
            let d = ring(i + 1, j + 1);
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    for j in 0..lon {
        triangles.push([south, ring(lat - 1, j + 1), ring(lat - 1, j)]);
    }
    TriangleMesh { vertices, triangles }
}

/// Torus with major radius 0.3 and minor radius 0.1, lying in the xy-plane.
/// Closed.
pub fn torus(major_segments: usize, minor_segments: usize) -> TriangleMesh {
    let nu = major_segments.max(3);
    let nv = minor_segments.max(3);
    let mut vertices = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = 2.0 * std::f64::consts::PI * i as f64 / nu as f64;
        let (su, cu) = u.sin_cos();
        for j in 0..nv {
            let v = 2.0 * std::f64::consts::PI * j as f64 / nv as f64;
            let (sv, cv) = v.sin_cos();
            let w = TORUS_MAJOR + TORUS_MINOR * cv;
            vertices.push(Vec3::new(w * cu, w * su, TORUS_MINOR * sv));
        }
    }
    let at = |i: usize, j: usize| -> u32 { ((i % nu) * nv + (j % nv)) as u32 };
    let mut triangles = Vec::new();
    for i in 0..nu {
        for j in 0..nv {
            let a = at(i, j);
            let b = at(i + 1, j);
            let c = at(i + 1, j + 1);
            let d = at(i, j + 1);
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    TriangleMesh { vertices, triangles }
}

/// Flat disk of radius 0.35 in the z = 0 plane. Open: its rim is a boundary.
pub fn disk(rings: usize, segments: usize) -> TriangleMesh {
    let nr = rings.max(1);
    let ns = segments.max(3);
    let mut vertices = vec![Vec3::ZERO];
    for i in 1..=nr {
        let rho = DISK_RADIUS * i as f64 / nr as f64;
        for j in 0..ns {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / ns as f64;
            vertices.push(Vec3::new(rho * phi.cos(), rho * phi.sin(), 0.0));
        }
    }
    let at = |i: usize, j: usize| -> u32 { (1 + (i - 1) * ns + (j % ns)) as u32 };
    let mut triangles = Vec::new();
    for j in 0..ns {
        triangles.push([0, at(1, j), at(1, j + 1)]);
    }
    for i in 1..nr {
        for j in 0..ns {
            let a = at(i, j);
            let b = at(i, j + 1);
            let c = at(i + 1, j);
            let d = at(i + 1, j + 1);
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    TriangleMesh { vertices, triangles }
}

/// Two parallel square sheets at z = +/- 0.1 spanning [-0.5, 0.5]^2. The
/// midplane z = 0 is equidistant from both: the ridge locus of the distance
/// field.
pub fn two_planes() -> TriangleMesh {
    let h = PLANE_GAP / 2.0;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (base, z) in [(0u32, h), (4u32, -h)] {
        vertices.push(Vec3::new(-0.5, -0.5, z));
        vertices.push(Vec3::new(0.5, -0.5, z));
        vertices.push(Vec3::new(0.5, 0.5, z));
        vertices.push(Vec3::new(-0.5, 0.5, z));
        triangles.push([base, base + 1, base + 2]);
        triangles.push([base, base + 2, base + 3]);
    }
    TriangleMesh { vertices, triangles }
}

/// Fixture lookup by name, at default tessellation. Names: `sphere`,
/// `torus`, `disk`, `planes`.
pub fn by_name(name: &str) -> Option<TriangleMesh> {
    match name {
        "sphere" => Some(sphere(64, 32)),
        "torus" => Some(torus(48, 24)),
        "disk" => Some(disk(12, 48)),
        "planes" => Some(two_planes()),
        _ => None,
    }
}

/// All fixture names accepted by [`by_name`].
pub const FIXTURE_NAMES: [&str; 4] = ["sphere", "torus", "disk", "planes"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_is_closed_and_on_radius() {
        let mesh = sphere(24, 12);
        assert_eq!(mesh.boundary_edge_count(), 0);
        for v in &mesh.vertices {
            assert!((v.norm() - SPHERE_RADIUS).abs() < 1e-12);
        }
    }

    #[test]
    fn torus_is_closed() {
        let mesh = torus(16, 8);
        assert_eq!(mesh.boundary_edge_count(), 0);
        assert_eq!(mesh.triangles.len(), 16 * 8 * 2);
    }

    #[test]
    fn disk_has_boundary() {
        let mesh = disk(4, 16);
        assert_eq!(mesh.boundary_edge_count(), 16);
    }

    #[test]
    fn fixtures_fit_in_unit_cube() {
        for name in FIXTURE_NAMES {
            let mesh = by_name(name).unwrap();
            let (lo, hi) = mesh.bounds().unwrap();
            for c in [lo.x, lo.y, lo.z, hi.x, hi.y, hi.z] {
                assert!(c.abs() <= 0.5 + 1e-12, "{name} exceeds the unit cube");
            }
            mesh.validate().unwrap();
        }
    }

    #[test]
    fn default_fixtures_stay_under_5k_triangles() {
        for name in FIXTURE_NAMES {
            let mesh = by_name(name).unwrap();
            assert!(mesh.triangles.len() <= 5000, "{name} too finely tessellated");
        }
    }

    #[test]
    fn plane_fixture_geometry() {
        let mesh = two_planes();
        assert_eq!(mesh.triangles.len(), 4);
        let (lo, hi) = mesh.bounds().unwrap();
        assert_eq!(lo.z, -PLANE_GAP / 2.0);
        assert_eq!(hi.z, PLANE_GAP / 2.0);
    }
}
