//! Shared setup for the pipeline benchmarks: deterministic fixture meshes,
//! clouds, and models.

use nvf_core::geom::{fixtures, sample_queries, sample_surface, PointCloud, TriangleMesh, Vec3};
use nvf_core::model::{FeaturedCloud, ModelConfig, VectorFieldModel};

pub fn torus() -> TriangleMesh {
    fixtures::torus(48, 24)
}

pub fn cloud(n: usize) -> PointCloud {
    sample_surface(&fixtures::sphere(64, 32), n, 7).unwrap()
}

pub fn queries(cloud: &PointCloud, n: usize) -> Vec<Vec3> {
    sample_queries(cloud, n, &[0.003, 0.01, 0.03], 0.05, 13).unwrap()
}

pub fn small_model() -> (VectorFieldModel<f32>, FeaturedCloud<f32>) {
    let model: VectorFieldModel<f32> =
        VectorFieldModel::init(ModelConfig::small(), 3).unwrap();
    let fcloud = model.encode_cloud(&cloud(2048)).unwrap();
    (model, fcloud)
}

pub fn default_model() -> (VectorFieldModel<f32>, FeaturedCloud<f32>) {
    let model: VectorFieldModel<f32> =
        VectorFieldModel::init(ModelConfig::default(), 3).unwrap();
    let fcloud = model.encode_cloud(&cloud(2048)).unwrap();
    (model, fcloud)
}
