//! Property tests for the geometry oracle: BVH answers are exactly the
//! brute-force answers, displacements land on the surface, and analytic
//! shapes agree with their tessellations.

use nvf_core::geom::{
    closest_point_on_triangle, fixtures, nearest_point_on_mesh, sample_queries, sample_surface,
    Bvh, DisplacementSample, PointCloud, TriangleMesh, Vec3,
};
use proptest::prelude::*;

/// Exhaustive per-triangle scan: the oracle the BVH is held to.
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

/// Random triangle soup from a seed: arbitrary topology, may self-intersect.
fn soup_mesh(seed: u64, triangles: usize) -> TriangleMesh {
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(0xdead_beef);
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    let mut vertices = Vec::new();
    let mut tris = Vec::new();
    for t in 0..triangles {
        let base = Vec3::new(next(), next(), next()) * 0.8;
        for _ in 0..3 {
            vertices.push(base + Vec3::new(next(), next(), next()) * 0.2);
        }
        tris.push([3 * t as u32, 3 * t as u32 + 1, 3 * t as u32 + 2]);
    }
    TriangleMesh { vertices, triangles: tris }
}

fn lcg_queries(n: usize, seed: u64) -> Vec<Vec3> {
    let mut state = seed.wrapping_mul(0x2545f4914f6cdd1d).wrapping_add(7);
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 1.2 - 0.6
    };
    (0..n).map(|_| Vec3::new(next(), next(), next())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bvh_equals_brute_force_on_random_soups(seed in 0u64..1000, tris in 1usize..120) {
        let mesh = soup_mesh(seed, tris);
        let bvh = Bvh::build(&mesh).unwrap();
        bvh.check_invariants().unwrap();
        for q in lcg_queries(60, seed ^ 0xabc) {
            let fast = nearest_point_on_mesh(&mesh, &bvh, q);
            let slow = nearest_brute(&mesh, q);
            prop_assert_eq!(fast.triangle, slow.triangle);
            prop_assert_eq!(fast.displacement.x.to_bits(), slow.displacement.x.to_bits());
            prop_assert_eq!(fast.displacement.y.to_bits(), slow.displacement.y.to_bits());
            prop_assert_eq!(fast.displacement.z.to_bits(), slow.displacement.z.to_bits());
        }
    }

    #[test]
    fn displacement_sample_invariants(seed in 0u64..1000) {
        let mesh = fixtures::torus(24, 12);
        let bvh = Bvh::build(&mesh).unwrap();
        for q in lcg_queries(40, seed) {
            let s = nearest_point_on_mesh(&mesh, &bvh, q);
            // |displacement| == distance by construction; direction *
            // distance rebuilds the displacement.
            let d = s.distance();
            prop_assert!((s.displacement.norm() - d).abs() < 1e-9);
            if let Some(g) = s.direction() {
                let rebuilt = g * d;
                prop_assert!((rebuilt - s.displacement).norm() < 1e-9);
            }
            // The nearest point really is on the mesh.
            if d > 0.0 {
                let back = nearest_point_on_mesh(&mesh, &bvh, s.nearest());
                prop_assert!(back.distance() < 1e-9);
            }
        }
    }

    #[test]
    fn query_sampler_is_pure(seed in 0u64..500) {
        let mesh = fixtures::sphere(16, 8);
        let cloud = sample_surface(&mesh, 128, seed).unwrap();
        let a = sample_queries(&cloud, 64, &[0.01], 0.25, seed ^ 5).unwrap();
        let b = sample_queries(&cloud, 64, &[0.01], 0.25, seed ^ 5).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn analytic_sphere_distances_match_within_chord_sag() {
    let lon = 64;
    let lat = 32;
    let mesh = fixtures::sphere(lon, lat);
    let bvh = Bvh::build(&mesh).unwrap();
    let r = fixtures::SPHERE_RADIUS;
    // Worst-case facet sag: the planar quad's farthest point from the
    // sphere sits near the quad center, a half-diagonal away in angle.
    let theta_lat = std::f64::consts::PI / lat as f64;
    let theta_lon = 2.0 * std::f64::consts::PI / lon as f64;
    let diag = (theta_lat * theta_lat + theta_lon * theta_lon).sqrt();
    let sag = r * (1.0 - (diag / 2.0).cos()) + 1e-9;
    for q in lcg_queries(500, 99) {
        let s = nearest_point_on_mesh(&mesh, &bvh, q);
        let analytic = (q.norm() - r).abs();
        assert!(
            (s.distance() - analytic).abs() <= sag + 1e-12,
            "tessellated distance {} vs analytic {} at {:?}",
            s.distance(),
            analytic,
            q
        );
    }
}

#[test]
fn cloud_knn_matches_exhaustive_sort() {
    let mesh = fixtures::torus(32, 16);
    let cloud = sample_surface(&mesh, 2048, 3).unwrap();
    let index = nvf_core::geom::PointIndex::build(&cloud.points).unwrap();
    for q in lcg_queries(2000, 17) {
        let fast = index.knn(q, 16);
        let mut all: Vec<(f64, u32)> = cloud
            .points
            .iter()
            .enumerate()
            .map(|(i, &p)| ((p - q).norm_sq(), i as u32))
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (slot, &(d2, i)) in all[..16].iter().enumerate() {
            assert_eq!(fast[slot].0, i);
            assert_eq!(fast[slot].1.to_bits(), d2.sqrt().to_bits());
        }
    }
}

#[test]
fn normalization_composes_with_sampling() {
    // Normalize a shifted, scaled torus; sampled points stay in the cube.
    let mut mesh = fixtures::torus(16, 8);
    for v in &mut mesh.vertices {
        *v = *v * 3.0 + Vec3::new(10.0, -4.0, 2.0);
    }
    let (normalized, _) = nvf_core::geom::normalize_to_unit_cube(&mesh).unwrap();
    let cloud: PointCloud = sample_surface(&normalized, 512, 0).unwrap();
    for p in &cloud.points {
        assert!(p.x.abs() <= 0.5 + 1e-9 && p.y.abs() <= 0.5 + 1e-9 && p.z.abs() <= 0.5 + 1e-9);
    }
}
