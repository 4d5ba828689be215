//! Deterministic surface and query-point samplers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{NvfError, Result};

use super::cloud::PointCloud;
use super::mesh::TriangleMesh;
use super::vec3::Vec3;

/// Half-extent of the padded cube queries and extraction lattices live in.
/// Slightly larger than the unit cube so boundary lattice cells still see
/// valid field values.
pub const PADDED_HALF: f64 = 0.55;

/// Samples `n` points area-weighted-uniform on the mesh surface. Pure
/// function of `(mesh, n, seed)`.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if mesh.is_empty() {
        return Err(NvfError::invalid("cannot sample an empty mesh"));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(NvfError::invalid("mesh has zero surface area"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.random::<f64>() * total;
        let t = cumulative.partition_point(|&c| c <= r).min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle_vertices(t);
        // Square-root warp gives uniform barycentric coordinates.
        let su = rng.random::<f64>().sqrt();
        let v = rng.random::<f64>();
        points.push(a * (1.0 - su) + b * (su * (1.0 - v)) + c * (su * v));
    }
    PointCloud::from_points(points)
}

/// Samples training/evaluation query positions: a near-surface fraction made
/// of Gaussian-perturbed cloud points (sigma drawn uniformly from
/// `noise_sigmas`) and a `uniform_fraction` of uniform samples in the padded
/// cube. Pure function of the inputs and `seed`.
pub fn sample_queries(
    cloud: &PointCloud,
    n: usize,
    noise_sigmas: &[f64],
    uniform_fraction: f64,
    seed: u64,
) -> Result<Vec<Vec3>> {
    if !(0.0..=1.0).contains(&uniform_fraction) {
        return Err(NvfError::invalid(format!(
            "uniform_fraction must lie in [0, 1], got {uniform_fraction}"
        )));
    }
    if cloud.is_empty() && uniform_fraction < 1.0 {
        return Err(NvfError::invalid("near-surface queries need a nonempty cloud"));
    }

    let n_uniform = ((uniform_fraction * n as f64).round() as usize).min(n);
    let n_near = n - n_uniform;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queries = Vec::with_capacity(n);
    for _ in 0..n_near {
        let p = cloud.points[rng.random_range(0..cloud.len())];
        let sigma = if noise_sigmas.is_empty() {
            0.0
        } else {
            noise_sigmas[rng.random_range(0..noise_sigmas.len())]
        };
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        let nz: f64 = rng.sample(StandardNormal);
        queries.push(p + Vec3::new(nx, ny, nz) * sigma);
    }
    for _ in 0..n_uniform {
        let mut coord = || rng.random::<f64>() * (2.0 * PADDED_HALF) - PADDED_HALF;
        queries.push(Vec3::new(coord(), coord(), coord()));
    }
    Ok(queries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::fixtures;

    #[test]
    fn single_triangle_points_lie_on_it() {
        let mesh = TriangleMesh {
            vertices: vec![
                Vec3::ZERO,
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            triangles: vec![[0, 1, 2]],
        };
        let cloud = sample_surface(&mesh, 3, 0).unwrap();
        assert_eq!(cloud.len(), 3);
        for p in &cloud.points {
            // Inside the triangle: z = 0, barycentric coordinates valid.
            assert_eq!(p.z, 0.0);
            assert!(p.x >= 0.0 && p.y >= 0.0 && p.x + p.y <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn area_weighting_matches_binomial_bound() {
        // Two triangles with area ratio 9:1.
        let mesh = TriangleMesh {
            vertices: vec![
                Vec3::ZERO,
                Vec3::new(9.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(-1.0, 0.0, 0.0),
                Vec3::new(0.0, -1.0, 0.0),
            ],
            triangles: vec![[0, 1, 2], [0, 3, 4]],
        };
        let n = 100_000;
        let cloud = sample_surface(&mesh, n, 42).unwrap();
        let big = cloud.points.iter().filter(|p| p.x >= 0.0 && p.y >= 0.0).count();
        // p = 0.9: 3-sigma binomial bound on the count.
        let p = 0.9;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (big as f64 - n as f64 * p).abs() <= 3.0 * sigma,
            "{big} of {n} landed on the large triangle"
        );
    }

    #[test]
    fn surface_sampling_is_deterministic() {
        let mesh = fixtures::sphere(16, 8);
        let a = sample_surface(&mesh, 500, 7).unwrap();
        let b = sample_surface(&mesh, 500, 7).unwrap();
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn uniform_queries_stay_in_padded_cube() {
        let cloud = PointCloud::from_points(vec![Vec3::ZERO]).unwrap();
        let qs = sample_queries(&cloud, 1000, &[0.01], 1.0, 3).unwrap();
        assert_eq!(qs.len(), 1000);
        for q in qs {
            assert!(q.x.abs() <= PADDED_HALF && q.y.abs() <= PADDED_HALF && q.z.abs() <= PADDED_HALF);
        }
    }

    #[test]
    fn zero_noise_queries_coincide_with_cloud() {
        let mesh = fixtures::sphere(16, 8);
        let cloud = sample_surface(&mesh, 64, 1).unwrap();
        let qs = sample_queries(&cloud, 200, &[0.0], 0.0, 9).unwrap();
        for q in qs {
            assert!(cloud.points.iter().any(|&p| (p - q).norm() == 0.0));
        }
    }

    #[test]
    fn gaussian_norm_mean_matches_monte_carlo() {
        // All queries perturb a single point at the origin, so |q| is the
        // norm of a 3D Gaussian with sigma = 0.01.
        let cloud = PointCloud::from_points(vec![Vec3::ZERO]).unwrap();
        let sigma = 0.01;
        let qs = sample_queries(&cloud, 40_000, &[sigma], 0.0, 11).unwrap();
        let mean: f64 = qs.iter().map(|q| q.norm()).sum::<f64>() / qs.len() as f64;

        // Independent Monte-Carlo estimate of E|N(0, sigma^2 I_3)| from a
        // different generator.
        let mut rng = ChaCha8Rng::seed_from_u64(999);
        let m = 40_000;
        let mc: f64 = (0..m)
            .map(|_| {
                let x: f64 = rng.sample(StandardNormal);
                let y: f64 = rng.sample(StandardNormal);
                let z: f64 = rng.sample(StandardNormal);
                (x * x + y * y + z * z).sqrt() * sigma
            })
            .sum::<f64>()
            / m as f64;

        // Both estimates target sigma * sqrt(8/pi); allow a few standard
        // errors of slack on their difference.
        assert!((mean - mc).abs() < 3e-4, "empirical {mean} vs monte-carlo {mc}");
        let analytic = sigma * (8.0 / std::f64::consts::PI).sqrt();
        assert!((mean - analytic).abs() < 3e-4);
    }

    #[test]
    fn query_sampling_is_deterministic() {
        let mesh = fixtures::torus(24, 12);
        let cloud = sample_surface(&mesh, 256, 5).unwrap();
        let a = sample_queries(&cloud, 512, &[0.003, 0.01, 0.03], 0.05, 21).unwrap();
        let b = sample_queries(&cloud, 512, &[0.003, 0.01, 0.03], 0.05, 21).unwrap();
        assert_eq!(a, b);
    }
}
