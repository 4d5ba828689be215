//! Scalar unsigned-distance baseline.
//!
//! The baseline shares the whole architecture but ends in a 1-wide head: it
//! predicts only the distance. Recovering a direction then requires probing
//! the field — six extra forward passes for a central difference — which is
//! precisely the cost and the ridge ambiguity the vector field avoids.

use ndarray::Array2;

use crate::error::{NvfError, Result};
use crate::geom::Vec3;
use crate::numeric::Real;

use super::cloud_encoding::FeaturedCloud;
use super::forward::infer_batch;
use super::VectorFieldModel;

/// Gradient-norm level below which a finite-difference direction is
/// reported as ambiguous. A healthy unsigned distance field has unit-norm
/// gradient almost everywhere; values far below that indicate a ridge.
pub const DEFAULT_AMBIGUITY_THRESHOLD: f64 = 0.5;

/// Hard floor: below this the gradient has no usable direction at all.
pub const DEGENERATE_GRADIENT_NORM: f64 = 1e-12;

/// A finite-difference direction estimate from the scalar baseline.
#[derive(Debug, Clone, Copy)]
pub struct UdfDirection<F: Real> {
    /// Unit direction toward the surface (`-grad / |grad|`), absent when
    /// the gradient is degenerate.
    pub direction: Option<[F; 3]>,
    pub gradient_norm: F,
    /// Set when the gradient norm falls below the ambiguity threshold —
    /// including all degenerate cases.
    pub ambiguous: bool,
}

/// Scalar distance prediction at `q`: one forward pass.
pub fn udf_baseline_forward<F: Real>(
    model: &VectorFieldModel<F>,
    fcloud: &FeaturedCloud<F>,
    q: Vec3,
) -> Result<F> {
    if model.config.output_dim != 1 {
        return Err(NvfError::invalid("the UDF baseline needs a scalar output head"));
    }
    let pred = infer_batch(model, fcloud, &[q])?;
    Ok(pred[[0, 0]])
}

/// Direction at `q` by central finite differences: six extra distance
/// forwards, no backward pass. `h` is the probe step.
pub fn udf_baseline_direction<F: Real>(
    model: &VectorFieldModel<F>,
    fcloud: &FeaturedCloud<F>,
    q: Vec3,
    h: f64,
    ambiguity_threshold: f64,
) -> Result<UdfDirection<F>> {
    if model.config.output_dim != 1 {
        return Err(NvfError::invalid("the UDF baseline needs a scalar output head"));
    }
    if h <= 0.0 {
        return Err(NvfError::invalid(format!("probe step must be positive, got {h}")));
    }

    let probes = [
        q + Vec3::new(h, 0.0, 0.0),
        q - Vec3::new(h, 0.0, 0.0),
        q + Vec3::new(0.0, h, 0.0),
        q - Vec3::new(0.0, h, 0.0),
        q + Vec3::new(0.0, 0.0, h),
        q - Vec3::new(0.0, 0.0, h),
    ];
    let values = infer_batch(model, fcloud, &probes)?;
    model.counters.add_fd_probes(6);

    let two_h = F::c(2.0 * h);
    let grad = [
        (values[[0, 0]] - values[[1, 0]]) / two_h,
        (values[[2, 0]] - values[[3, 0]]) / two_h,
        (values[[4, 0]] - values[[5, 0]]) / two_h,
    ];
    let norm = (grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2]).sqrt();

    if norm < F::c(DEGENERATE_GRADIENT_NORM) {
        return Ok(UdfDirection { direction: None, gradient_norm: norm, ambiguous: true });
    }
    // Opposite of the distance gradient points at the surface.
    let direction = [-grad[0] / norm, -grad[1] / norm, -grad[2] / norm];
    Ok(UdfDirection {
        direction: Some(direction),
        gradient_norm: norm,
        ambiguous: norm < F::c(ambiguity_threshold),
    })
}

/// Batched finite-difference directions: six probe batches for the whole
/// query set. Identical math to [`udf_baseline_direction`], vectorized.
pub fn udf_direction_batch<F: Real>(
    model: &VectorFieldModel<F>,
    fcloud: &FeaturedCloud<F>,
    queries: &[Vec3],
    h: f64,
    ambiguity_threshold: f64,
) -> Result<Vec<UdfDirection<F>>> {
    if model.config.output_dim != 1 {
        return Err(NvfError::invalid("the UDF baseline needs a scalar output head"));
    }
    if h <= 0.0 {
        return Err(NvfError::invalid(format!("probe step must be positive, got {h}")));
    }
    let n = queries.len();
    let mut plus = vec![Array2::<F>::zeros((0, 0)); 0];
    let mut minus = vec![Array2::<F>::zeros((0, 0)); 0];
    for axis in 0..3 {
        let mut step = Vec3::ZERO;
        match axis {
            0 => step.x = h,
            1 => step.y = h,
            _ => step.z = h,
        }
        let probes_p: Vec<Vec3> = queries.iter().map(|&q| q + step).collect();
        let probes_m: Vec<Vec3> = queries.iter().map(|&q| q - step).collect();
        plus.push(infer_batch(model, fcloud, &probes_p)?);
        minus.push(infer_batch(model, fcloud, &probes_m)?);
    }
    model.counters.add_fd_probes(6 * n as u64);

    let two_h = F::c(2.0 * h);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let grad = [
            (plus[0][[i, 0]] - minus[0][[i, 0]]) / two_h,
            (plus[1][[i, 0]] - minus[1][[i, 0]]) / two_h,
            (plus[2][[i, 0]] - minus[2][[i, 0]]) / two_h,
        ];
        let norm = (grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2]).sqrt();
        if norm < F::c(DEGENERATE_GRADIENT_NORM) {
            out.push(UdfDirection { direction: None, gradient_norm: norm, ambiguous: true });
        } else {
            out.push(UdfDirection {
                direction: Some([-grad[0] / norm, -grad[1] / norm, -grad[2] / norm]),
                gradient_norm: norm,
                ambiguous: norm < F::c(ambiguity_threshold),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{fixtures, sample_surface};
    use crate::model::ModelConfig;

    #[test]
    fn direction_queries_cost_six_forwards_and_zero_backwards() {
        let model: VectorFieldModel<f64> =
            VectorFieldModel::init(ModelConfig::small().into_baseline(), 3).unwrap();
        let cloud = sample_surface(&fixtures::sphere(16, 8), 128, 0).unwrap();
        let fcloud = model.encode_cloud(&cloud).unwrap();
        model.counters.reset();
        let _ = udf_baseline_direction(
            &model,
            &fcloud,
            Vec3::new(0.1, 0.0, 0.0),
            0.01,
            DEFAULT_AMBIGUITY_THRESHOLD,
        )
        .unwrap();
        let counts = model.counters.snapshot();
        assert_eq!(counts.forwards, 6);
        assert_eq!(counts.fd_probes, 6);
        assert_eq!(counts.backwards, 0);
    }

    #[test]
    fn batch_directions_match_single_queries() {
        let model: VectorFieldModel<f64> =
            VectorFieldModel::init(ModelConfig::small().into_baseline(), 7).unwrap();
        let cloud = sample_surface(&fixtures::sphere(16, 8), 128, 0).unwrap();
        let fcloud = model.encode_cloud(&cloud).unwrap();
        let queries = [
            Vec3::new(0.1, -0.2, 0.05),
            Vec3::new(0.0, 0.35, 0.0),
            Vec3::new(-0.3, 0.1, 0.2),
        ];
        let batch =
            udf_direction_batch(&model, &fcloud, &queries, 0.01, DEFAULT_AMBIGUITY_THRESHOLD)
                .unwrap();
        for (q, b) in queries.iter().zip(&batch) {
            let single = udf_baseline_direction(
                &model,
                &fcloud,
                *q,
                0.01,
                DEFAULT_AMBIGUITY_THRESHOLD,
            )
            .unwrap();
            assert_eq!(single.gradient_norm, b.gradient_norm);
            assert_eq!(single.direction.is_some(), b.direction.is_some());
            if let (Some(a), Some(c)) = (single.direction, b.direction) {
                assert_eq!(a, c);
            }
        }
    }

    #[test]
    fn vector_model_is_rejected() {
        let model: VectorFieldModel<f64> =
            VectorFieldModel::init(ModelConfig::small(), 3).unwrap();
        let cloud = sample_surface(&fixtures::sphere(16, 8), 128, 0).unwrap();
        let fcloud = model.encode_cloud(&cloud).unwrap();
        assert!(udf_baseline_forward(&model, &fcloud, Vec3::ZERO).is_err());
    }

    #[test]
    fn nonpositive_step_is_rejected() {
        let model: VectorFieldModel<f64> =
            VectorFieldModel::init(ModelConfig::small().into_baseline(), 3).unwrap();
        let cloud = sample_surface(&fixtures::sphere(16, 8), 128, 0).unwrap();
        let fcloud = model.encode_cloud(&cloud).unwrap();
        assert!(udf_baseline_direction(&model, &fcloud, Vec3::ZERO, 0.0, 0.5).is_err());
    }

    #[test]
    fn constant_head_flags_degenerate_gradient() {
        let mut model: VectorFieldModel<f64> =
            VectorFieldModel::init(ModelConfig::small().into_baseline(), 5).unwrap();
        model.head.l3.w.fill(0.0);
        model.head.l3.b[0] = 0.2;
        let cloud = sample_surface(&fixtures::sphere(16, 8), 128, 0).unwrap();
        let fcloud = model.encode_cloud(&cloud).unwrap();
        let r = udf_baseline_direction(&model, &fcloud, Vec3::new(0.05, 0.0, 0.0), 0.01, 0.5)
            .unwrap();
        assert!(r.direction.is_none());
        assert!(r.ambiguous);
        assert_eq!(r.gradient_norm, 0.0);
    }
}
