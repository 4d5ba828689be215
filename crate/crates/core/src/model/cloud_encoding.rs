//! Per-point shape encoding.
//!
//! Each cloud point gets a feature row computed from itself and its K
//! nearest cloud points: a two-layer MLP over (position, mean neighbor
//! offset, componentwise max neighbor offset). Features therefore depend
//! only on local neighborhoods, and identical neighborhoods produce
//! identical features.
//!
//! Geometry (k-NN index, neighborhoods, encoder inputs) is independent of
//! the model parameters and lives in [`CloudGeometry`], shared across
//! re-encodings during training.

use std::sync::Arc;

use ndarray::Array2;

use crate::error::{NvfError, Result};
use crate::geom::{PointCloud, PointIndex, Vec3};
use crate::numeric::Real;

use super::layers::leaky_relu;
use super::{ModelConfig, VectorFieldModel};

/// Parameter-independent cloud state: positions, the exact k-NN index, and
/// the per-point encoder inputs. Built once per cloud.
#[derive(Debug)]
pub struct CloudGeometry<F: Real> {
    pub positions: Vec<Vec3>,
    pub index: PointIndex,
    /// (N, 3) positions in model precision.
    pub pos: Array2<F>,
    /// (N, 9) encoder inputs: position, mean neighbor offset, max offset.
    pub enc_input: Array2<F>,
    /// (N, K) encoder neighborhoods, ascending distance, ties by index.
    pub knn: Array2<u32>,
}

impl<F: Real> CloudGeometry<F> {
    /// Errors when the cloud has fewer points than the neighbor count K.
    pub fn build(config: &ModelConfig, cloud: &PointCloud) -> Result<Self> {
        let k = config.neighbors;
        let n = cloud.len();
        if n < k {
            return Err(NvfError::invalid(format!(
                "cloud has {n} points but the encoder needs at least {k}"
            )));
        }
        let index = PointIndex::build(&cloud.points)?;

        let mut knn = Array2::<u32>::zeros((n, k));
        let mut enc_input = Array2::<F>::zeros((n, ModelConfig::ENCODER_INPUT_WIDTH));
        for (i, &p) in cloud.points.iter().enumerate() {
            let hits = index.knn(p, k);
            let mut mean = Vec3::ZERO;
            let mut max = Vec3::splat(f64::NEG_INFINITY);
            for (slot, &(j, _)) in hits.iter().enumerate() {
                knn[[i, slot]] = j;
                let offset = cloud.points[j as usize] - p;
                mean += offset;
                max = max.max_by_component(offset);
            }
            mean = mean / k as f64;
            let pos_part = if config.absolute_coords { p } else { Vec3::ZERO };
            for (c, v) in [pos_part, mean, max].iter().enumerate() {
                enc_input[[i, c * 3]] = F::c(v.x);
                enc_input[[i, c * 3 + 1]] = F::c(v.y);
                enc_input[[i, c * 3 + 2]] = F::c(v.z);
            }
        }

        let mut pos = Array2::<F>::zeros((n, 3));
        for (i, p) in cloud.points.iter().enumerate() {
            pos[[i, 0]] = F::c(p.x);
            pos[[i, 1]] = F::c(p.y);
            pos[[i, 2]] = F::c(p.z);
        }

        Ok(CloudGeometry { positions: cloud.points.clone(), index, pos, enc_input, knn })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// A cloud with encoder features attached: the operational input to query
/// embedding and field prediction. Read-only; safe to share across threads.
#[derive(Debug, Clone)]
pub struct FeaturedCloud<F: Real> {
    pub geo: Arc<CloudGeometry<F>>,
    /// (N, C) encoder output features.
    pub features: Array2<F>,
    /// (N, hidden) encoder pre-activations (tape for the backward pass).
    pub enc_hidden_pre: Array2<F>,
}

impl<F: Real> FeaturedCloud<F> {
    pub fn len(&self) -> usize {
        self.geo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.geo.is_empty()
    }

    /// Copies the features onto a [`PointCloud`] in f32, the model I/O
    /// precision.
    pub fn attach_to(&self, cloud: &mut PointCloud) {
        cloud.features = Some(self.features.mapv(|v| v.as_f32()));
    }
}

impl<F: Real> VectorFieldModel<F> {
    /// Runs the per-point encoder over the cloud.
    pub fn encode_cloud(&self, cloud: &PointCloud) -> Result<FeaturedCloud<F>> {
        let geo = Arc::new(CloudGeometry::build(&self.config, cloud)?);
        Ok(self.encode_geometry(geo))
    }

    /// Re-encodes prebuilt geometry (training re-runs this every step as
    /// encoder parameters move).
    pub fn encode_geometry(&self, geo: Arc<CloudGeometry<F>>) -> FeaturedCloud<F> {
        let slope = self.leaky_slope();
        let enc_hidden_pre = self.encoder.l1.forward(&geo.enc_input);
        let hidden = leaky_relu(&enc_hidden_pre, slope);
        let features = self.encoder.l2.forward(&hidden);
        FeaturedCloud { geo, features, enc_hidden_pre }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{fixtures, sample_surface};

    fn test_model(absolute: bool) -> VectorFieldModel<f64> {
        let config = ModelConfig { absolute_coords: absolute, ..ModelConfig::small() };
        VectorFieldModel::init(config, 11).unwrap()
    }

    #[test]
    fn feature_shape() {
        let model = test_model(true);
        let cloud = sample_surface(&fixtures::sphere(16, 8), 128, 0).unwrap();
        let fc = model.encode_cloud(&cloud).unwrap();
        assert_eq!(fc.features.shape(), &[128, model.config.feature_width]);
    }

    #[test]
    fn too_small_cloud_errors() {
        let model = test_model(true);
        let cloud = sample_surface(&fixtures::sphere(16, 8), 8, 0).unwrap();
        assert!(model.encode_cloud(&cloud).is_err());
    }

    #[test]
    fn permutation_equivariance() {
        let model = test_model(true);
        let cloud = sample_surface(&fixtures::torus(24, 12), 100, 3).unwrap();
        let fc = model.encode_cloud(&cloud).unwrap();

        // Rotate storage order by 37 and re-encode.
        let shift = 37;
        let mut permuted = cloud.points.clone();
        permuted.rotate_left(shift);
        let cloud2 = PointCloud::from_points(permuted).unwrap();
        let fc2 = model.encode_cloud(&cloud2).unwrap();

        for i in 0..cloud.len() {
            let j = (i + cloud.len() - shift) % cloud.len();
            for c in 0..model.config.feature_width {
                assert_eq!(fc.features[[i, c]], fc2.features[[j, c]]);
            }
        }
    }

    #[test]
    fn duplicated_points_share_features() {
        let model = test_model(true);
        let mut points = sample_surface(&fixtures::sphere(16, 8), 64, 5).unwrap().points;
        points.push(points[10]);
        let cloud = PointCloud::from_points(points).unwrap();
        let fc = model.encode_cloud(&cloud).unwrap();
        for c in 0..model.config.feature_width {
            assert_eq!(fc.features[[10, c]], fc.features[[64, c]]);
        }
    }

    #[test]
    fn translation_invariance_without_absolute_positions() {
        let model = test_model(false);
        let cloud = sample_surface(&fixtures::sphere(16, 8), 96, 9).unwrap();
        let fc = model.encode_cloud(&cloud).unwrap();

        let shifted: Vec<Vec3> =
            cloud.points.iter().map(|&p| p + Vec3::new(0.07, -0.31, 0.12)).collect();
        let cloud2 = PointCloud::from_points(shifted).unwrap();
        let fc2 = model.encode_cloud(&cloud2).unwrap();

        for i in 0..cloud.len() {
            for c in 0..model.config.feature_width {
                let a = fc.features[[i, c]];
                let b = fc2.features[[i, c]];
                assert!(
                    (a - b).abs() < 1e-9,
                    "feature changed under translation: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn re_encoding_shared_geometry_matches_fresh_encoding() {
        let model = test_model(true);
        let cloud = sample_surface(&fixtures::sphere(16, 8), 128, 2).unwrap();
        let fresh = model.encode_cloud(&cloud).unwrap();
        let geo = Arc::new(CloudGeometry::build(&model.config, &cloud).unwrap());
        let reused = model.encode_geometry(geo);
        assert_eq!(fresh.features, reused.features);
    }
}
