//! Training: the displacement + commitment objective, Adam with epoch-step
//! learning-rate decay, ground-truth labeling through the exact geometry
//! oracle, and the loop tying them together.

mod adam;

pub use adam::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::codebook_stats;
use crate::error::{NvfError, Result};
use crate::geom::{
    nearest_point_on_mesh, sample_queries, sample_surface, Bvh, PointCloud, TriangleMesh, Vec3,
    PADDED_HALF,
};
use crate::model::{backward_batch, forward_batch, CloudGeometry, ModelGrads, VectorFieldModel};
use crate::numeric::Real;

/// Training hyperparameters. Serializable as the JSON config the CLI reads;
/// every field has a CLI flag override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplier applied at each decay epoch.
    pub decay_factor: f64,
    /// Epochs at which the learning rate decays; strictly increasing.
    pub decay_epochs: Vec<usize>,
    /// Weight of the commitment term.
    pub lambda: f64,
    /// Clouds drawn per optimization step.
    pub clouds_per_step: usize,
    /// Queries drawn per cloud per step.
    pub queries_per_cloud: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub seed: u64,
    pub use_codebook: bool,
    /// Train the scalar-distance baseline instead of the vector field.
    pub baseline_mode: bool,
    /// Points sampled per mesh for the input cloud.
    pub cloud_points: usize,
    /// Labeled query pool per mesh; steps draw batches from it.
    pub query_pool_per_mesh: usize,
    /// Near-surface noise scales for query sampling.
    pub noise_sigmas: Vec<f64>,
    /// Fraction of queries drawn uniformly from the padded cube.
    pub uniform_fraction: f64,
    /// Re-seed codes unused for many consecutive batches.
    pub dead_code_revival: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            decay_factor: 0.3,
            decay_epochs: vec![30, 70, 120],
            lambda: 0.001,
            clouds_per_step: 4,
            queries_per_cloud: 512,
            epochs: 150,
            steps_per_epoch: 8,
            seed: 0,
            use_codebook: true,
            baseline_mode: false,
            cloud_points: 2048,
            query_pool_per_mesh: 16384,
            noise_sigmas: vec![0.003, 0.01, 0.03],
            uniform_fraction: 0.05,
            dead_code_revival: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(NvfError::invalid("lambda must be nonnegative"));
        }
        if !self.decay_epochs.windows(2).all(|w| w[0] < w[1]) {
            return Err(NvfError::invalid("decay epochs must be strictly increasing"));
        }
        if self.clouds_per_step == 0 || self.queries_per_cloud == 0 || self.steps_per_epoch == 0 {
            return Err(NvfError::invalid("batch sizes must be positive"));
        }
        if !(0.0..=1.0).contains(&self.uniform_fraction) {
            return Err(NvfError::invalid("uniform_fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Per-epoch training log row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epoch: usize,
    pub displacement_loss: f64,
    pub commitment_loss: f64,
    pub total_loss: f64,
    pub perplexity: f64,
    pub wall_clock_s: f64,
}

pub const TRAIN_LOG_HEADER: &str =
    "epoch,displacement_loss,commitment_loss,total_loss,perplexity,wall_clock_s";

/// Renders records as CSV with the fixed header.
pub fn records_to_csv(records: &[TrainRecord]) -> String {
    let mut out = String::from(TRAIN_LOG_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch, r.displacement_loss, r.commitment_loss, r.total_loss, r.perplexity,
            r.wall_clock_s
        ));
    }
    out
}

/// Learning rate at `epoch`: the base rate times `decay_factor` for every
/// configured decay boundary at or below the epoch.
pub fn learning_rate_at(config: &TrainConfig, epoch: usize) -> f64 {
    let decays = config.decay_epochs.iter().filter(|&&e| epoch >= e).count();
    config.learning_rate * config.decay_factor.powi(decays as i32)
}

/// Loss terms for one batch, accumulated in f64.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Mean over queries of the L1 displacement error.
    pub displacement: f64,
    /// Mean over queries of the summed squared embedding residual.
    pub commitment: f64,
    /// displacement + lambda * commitment.
    pub total: f64,
}

/// The training objective. `z_hat` carries the stop-gradient convention:
/// the term pulls `z` toward it, never the reverse.
pub fn loss<F: Real>(
    pred: ArrayView2<F>,
    target: ArrayView2<F>,
    z: ArrayView2<F>,
    z_hat: ArrayView2<F>,
    lambda: f64,
) -> Result<LossBreakdown> {
    if pred.shape() != target.shape() || z.shape() != z_hat.shape() || pred.nrows() != z.nrows() {
        return Err(NvfError::invalid("loss batch shapes disagree"));
    }
    let b = pred.nrows() as f64;
    let mut disp = 0.0f64;
    for (p, t) in pred.iter().zip(target.iter()) {
        disp += (p.as_f64() - t.as_f64()).abs();
    }
    disp /= b;
    let mut commit = 0.0f64;
    for (a, q) in z.iter().zip(z_hat.iter()) {
        let d = a.as_f64() - q.as_f64();
        commit += d * d;
    }
    commit /= b;
    Ok(LossBreakdown { displacement: disp, commitment: commit, total: disp + lambda * commit })
}

/// Ground-truth training target for one query: the exact displacement
/// (clamped to the padded-cube diagonal) or its scalar norm in baseline
/// mode.
fn label_query(mesh: &TriangleMesh, bvh: &Bvh, q: Vec3, baseline: bool) -> Vec<f64> {
    let sample = nearest_point_on_mesh(mesh, bvh, q);
    let mut disp = sample.displacement;
    let max_norm = 2.0 * PADDED_HALF * 3.0f64.sqrt();
    let norm = disp.norm();
    if norm > max_norm {
        disp = disp * (max_norm / norm);
    }
    if baseline {
        vec![disp.norm()]
    } else {
        vec![disp.x, disp.y, disp.z]
    }
}

/// Labels a batch of queries against the exact oracle, in parallel. Output
/// order matches input order, so results are identical at any thread count.
pub fn label_queries<F: Real>(
    mesh: &TriangleMesh,
    bvh: &Bvh,
    queries: &[Vec3],
    baseline: bool,
) -> Array2<F> {
    let out_dim = if baseline { 1 } else { 3 };
    let rows: Vec<Vec<f64>> = queries
        .par_iter()
        .map(|&q| label_query(mesh, bvh, q, baseline))
        .collect();
    let mut out = Array2::<F>::zeros((queries.len(), out_dim));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[[i, j]] = F::c(v);
        }
    }
    out
}

/// One mesh's cached training data: fixed cloud, labeled query pool, and
/// prebuilt cloud geometry.
struct MeshItem<F: Real> {
    geometry: Arc<CloudGeometry<F>>,
    pool: Vec<Vec3>,
    targets: Array2<F>,
}

/// Trains the model in place over the mesh dataset. Deterministic for a
/// fixed config and seed. Returns one record per epoch; aborts with a
/// diagnostic on a non-finite loss.
pub fn train<F: Real>(
    model: &mut VectorFieldModel<F>,
    meshes: &[TriangleMesh],
    config: &TrainConfig,
) -> Result<Vec<TrainRecord>> {
    config.validate()?;
    if meshes.is_empty() {
        return Err(NvfError::invalid("training needs a nonempty dataset"));
    }
    let expected_out = if config.baseline_mode { 1 } else { 3 };
    if model.config.output_dim != expected_out {
        return Err(NvfError::invalid(format!(
            "model output dim {} does not match {} mode",
            model.config.output_dim,
            if config.baseline_mode { "baseline" } else { "vector-field" }
        )));
    }
    model.config.use_codebook = config.use_codebook;

    // Per-mesh caches: cloud, labeled pool, geometry.
    let mut items = Vec::with_capacity(meshes.len());
    for (i, mesh) in meshes.iter().enumerate() {
        let mesh_seed = config.seed.wrapping_add((i as u64).wrapping_mul(0x9e3779b97f4a7c15));
        let cloud = sample_surface(mesh, config.cloud_points, mesh_seed)?;
        let bvh = Bvh::build(mesh)?;
        let pool = sample_queries(
            &cloud,
            config.query_pool_per_mesh,
            &config.noise_sigmas,
            config.uniform_fraction,
            mesh_seed ^ 0x71e9_3a5b,
        )?;
        let targets = label_queries::<F>(mesh, &bvh, &pool, config.baseline_mode);
        let geometry = Arc::new(CloudGeometry::build(&model.config, &cloud)?);
        items.push(MeshItem { geometry, pool, targets });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::<F>::new();
    let mut records = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lr = learning_rate_at(config, epoch);
        let mut epoch_disp = 0.0f64;
        let mut epoch_commit = 0.0f64;
        let mut epoch_assignments: Vec<Array2<u32>> = Vec::new();

        for step in 0..config.steps_per_epoch {
            let chosen: Vec<usize> =
                (0..config.clouds_per_step).map(|_| rng.random_range(0..items.len())).collect();
            let total_queries = (chosen.len() * config.queries_per_cloud) as f64;

            let mut grads: Option<ModelGrads<F>> = None;
            let mut step_disp = 0.0f64;
            let mut step_commit = 0.0f64;
            let mut ema_z: Vec<Array2<F>> = Vec::new();
            let mut ema_idx: Vec<Array2<u32>> = Vec::new();

            for &mi in &chosen {
                let item = &items[mi];
                let mut queries = Vec::with_capacity(config.queries_per_cloud);
                let mut target = Array2::<F>::zeros((config.queries_per_cloud, expected_out));
                for row in 0..config.queries_per_cloud {
                    let pick = rng.random_range(0..item.pool.len());
                    queries.push(item.pool[pick]);
                    for c in 0..expected_out {
                        target[[row, c]] = item.targets[[pick, c]];
                    }
                }

                let fcloud = model.encode_geometry(Arc::clone(&item.geometry));
                let (pred, tape) = forward_batch(model, &fcloud, &queries)?;

                let mut d_pred = Array2::<F>::zeros(pred.raw_dim());
                for ((r, c), dp) in d_pred.indexed_iter_mut() {
                    let diff = pred[[r, c]].as_f64() - target[[r, c]].as_f64();
                    step_disp += diff.abs();
                    *dp = if diff > 0.0 {
                        F::c(1.0 / total_queries)
                    } else if diff < 0.0 {
                        F::c(-1.0 / total_queries)
                    } else {
                        F::zero()
                    };
                }

                let d_zq = tape.z_hat.as_ref().map(|z_hat| {
                    let mut dz = tape.z_q.clone();
                    dz -= z_hat;
                    for v in dz.iter() {
                        let r = v.as_f64();
                        step_commit += r * r;
                    }
                    dz.mapv_into(|v| F::c(2.0 * config.lambda / total_queries) * v)
                });

                if config.use_codebook {
                    ema_z.push(tape.z_q.clone());
                    ema_idx.push(tape.code_indices.clone().expect("codebook indices recorded"));
                }

                let cloud_grads = backward_batch(model, &fcloud, tape, &d_pred, d_zq.as_ref())?;
                match &mut grads {
                    Some(g) => g.add_assign(&cloud_grads),
                    None => grads = Some(cloud_grads),
                }
            }

            let step_disp = step_disp / total_queries;
            let step_commit = step_commit / total_queries;
            let step_total = step_disp + config.lambda * step_commit;
            if !step_total.is_finite() {
                return Err(NvfError::numerical(format!(
                    "non-finite loss at epoch {epoch} step {step}: displacement {step_disp}, commitment {step_commit}"
                )));
            }

            let grads = grads.expect("at least one cloud per step");
            adam.step(
                model.param_views_mut(),
                grads.views().into_iter().collect(),
                lr,
            );

            if config.use_codebook {
                let rows: usize = ema_z.iter().map(|z| z.nrows()).sum();
                let d = model.config.embed_width;
                let h = model.config.heads;
                let mut z_all = Array2::<F>::zeros((rows, d));
                let mut idx_all = Array2::<u32>::zeros((rows, h));
                let mut at = 0;
                for (z, idx) in ema_z.iter().zip(&ema_idx) {
                    z_all.slice_mut(ndarray::s![at..at + z.nrows(), ..]).assign(z);
                    idx_all.slice_mut(ndarray::s![at..at + z.nrows(), ..]).assign(idx);
                    at += z.nrows();
                }
                model.codebook.ema_update(z_all.view(), &idx_all)?;
                if config.dead_code_revival {
                    model.codebook.revive_dead_codes(z_all.view(), &mut rng)?;
                }
                epoch_assignments.push(idx_all);
            }

            epoch_disp += step_disp;
            epoch_commit += step_commit;
        }

        let steps = config.steps_per_epoch as f64;
        let displacement_loss = epoch_disp / steps;
        let commitment_loss = epoch_commit / steps;
        let perplexity = if epoch_assignments.is_empty() {
            0.0
        } else {
            let rows: usize = epoch_assignments.iter().map(|a| a.nrows()).sum();
            let h = model.config.heads;
            let mut all = Array2::<u32>::zeros((rows, h));
            let mut at = 0;
            for a in &epoch_assignments {
                all.slice_mut(ndarray::s![at..at + a.nrows(), ..]).assign(a);
                at += a.nrows();
            }
            codebook_stats(&model.codebook, &all).mean_perplexity()
        };

        records.push(TrainRecord {
            epoch,
            displacement_loss,
            commitment_loss,
            total_loss: displacement_loss + config.lambda * commitment_loss,
            perplexity,
            wall_clock_s: started.elapsed().as_secs_f64(),
        });
    }

    Ok(records)
}

/// Mean L1 displacement error of the model on freshly sampled held-out
/// queries, labeled by the exact oracle.
pub fn held_out_l1<F: Real>(
    model: &VectorFieldModel<F>,
    mesh: &TriangleMesh,
    cloud: &PointCloud,
    n_queries: usize,
    seed: u64,
    config: &TrainConfig,
) -> Result<f64> {
    let bvh = Bvh::build(mesh)?;
    let queries = sample_queries(
        cloud,
        n_queries,
        &config.noise_sigmas,
        config.uniform_fraction,
        seed,
    )?;
    let targets = label_queries::<F>(mesh, &bvh, &queries, model.config.output_dim == 1);
    let fcloud = model.encode_cloud(cloud)?;
    let pred = crate::model::infer_batch(model, &fcloud, &queries)?;
    let mut total = 0.0f64;
    for (p, t) in pred.iter().zip(targets.iter()) {
        total += (p.as_f64() - t.as_f64()).abs();
    }
    Ok(total / queries.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::fixtures;
    use crate::model::ModelConfig;
    use ndarray::array;

    #[test]
    fn schedule_matches_step_decay() {
        let config = TrainConfig::default();
        assert_eq!(learning_rate_at(&config, 0), 0.001);
        assert_eq!(learning_rate_at(&config, 29), 0.001);
        assert!((learning_rate_at(&config, 30) - 0.001 * 0.3).abs() < 1e-15);
        assert!((learning_rate_at(&config, 69) - 0.001 * 0.3).abs() < 1e-15);
        assert!((learning_rate_at(&config, 70) - 0.001 * 0.3f64.powi(2)).abs() < 1e-15);
        assert!((learning_rate_at(&config, 120) - 0.001 * 0.3f64.powi(3)).abs() < 1e-15);
        assert!((learning_rate_at(&config, 149) - 0.001 * 0.3f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn loss_zero_for_perfect_prediction() {
        let pred = array![[0.1, 0.2, 0.3]];
        let z = array![[1.0, 2.0]];
        let b = loss::<f64>(pred.view(), pred.view(), z.view(), z.view(), 0.5).unwrap();
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn loss_single_axis_offset() {
        let pred = array![[0.1, 0.0, 0.0]];
        let gt = array![[0.0, 0.0, 0.0]];
        let z = array![[0.0]];
        let b = loss::<f64>(pred.view(), gt.view(), z.view(), z.view(), 0.0).unwrap();
        assert!((b.total - 0.1).abs() < 1e-15);
    }

    #[test]
    fn loss_matches_independent_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pred = Array2::from_shape_simple_fn((16, 3), || rng.random::<f64>() - 0.5);
        let gt = Array2::from_shape_simple_fn((16, 3), || rng.random::<f64>() - 0.5);
        let z = Array2::from_shape_simple_fn((16, 8), || rng.random::<f64>() - 0.5);
        let zh = Array2::from_shape_simple_fn((16, 8), || rng.random::<f64>() - 0.5);
        let lambda = 0.001;
        let b = loss::<f64>(pred.view(), gt.view(), z.view(), zh.view(), lambda).unwrap();

        let mut disp = 0.0;
        for r in 0..16 {
            for c in 0..3 {
                disp += (pred[[r, c]] - gt[[r, c]]).abs();
            }
        }
        disp /= 16.0;
        let mut commit = 0.0;
        for r in 0..16 {
            for c in 0..8 {
                commit += (z[[r, c]] - zh[[r, c]]).powi(2);
            }
        }
        commit /= 16.0;
        assert!((b.displacement - disp).abs() < 1e-12);
        assert!((b.commitment - commit).abs() < 1e-12);
        assert!((b.total - (disp + lambda * commit)).abs() < 1e-12);
    }

    #[test]
    fn zero_lr_training_leaves_parameters_unchanged() {
        let mut model: VectorFieldModel<f32> =
            VectorFieldModel::init(ModelConfig::small(), 0).unwrap();
        let before: Vec<f32> =
            model.param_views().iter().flat_map(|(_, v)| v.iter().copied().collect::<Vec<_>>()).collect();
        let config = TrainConfig {
            learning_rate: 0.0,
            epochs: 1,
            steps_per_epoch: 2,
            clouds_per_step: 1,
            queries_per_cloud: 32,
            cloud_points: 64,
            query_pool_per_mesh: 256,
            use_codebook: false,
            ..TrainConfig::default()
        };
        let records = train(&mut model, &[fixtures::sphere(16, 8)], &config).unwrap();
        assert_eq!(records.len(), 1);
        let after: Vec<f32> =
            model.param_views().iter().flat_map(|(_, v)| v.iter().copied().collect::<Vec<_>>()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn training_is_deterministic() {
        let config = TrainConfig {
            epochs: 2,
            steps_per_epoch: 2,
            clouds_per_step: 2,
            queries_per_cloud: 24,
            cloud_points: 64,
            query_pool_per_mesh: 128,
            ..TrainConfig::default()
        };
        let meshes = [fixtures::sphere(16, 8), fixtures::torus(16, 8)];
        let run = || {
            let mut model: VectorFieldModel<f32> =
                VectorFieldModel::init(ModelConfig::small(), 7).unwrap();
            let records = train(&mut model, &meshes, &config).unwrap();
            let params: Vec<f32> = model
                .param_views()
                .iter()
                .flat_map(|(_, v)| v.iter().copied().collect::<Vec<_>>())
                .collect();
            (records, params)
        };
        let (r1, p1) = run();
        let (r2, p2) = run();
        // Bitwise-identical numeric stream; wall-clock is the one field
        // allowed to differ.
        assert_eq!(r1.len(), r2.len());
        for (a, b) in r1.iter().zip(&r2) {
            assert_eq!(a.epoch, b.epoch);
            assert_eq!(a.displacement_loss.to_bits(), b.displacement_loss.to_bits());
            assert_eq!(a.commitment_loss.to_bits(), b.commitment_loss.to_bits());
            assert_eq!(a.total_loss.to_bits(), b.total_loss.to_bits());
            assert_eq!(a.perplexity.to_bits(), b.perplexity.to_bits());
        }
        assert_eq!(p1, p2);
    }

    #[test]
    fn record_totals_decompose() {
        let config = TrainConfig {
            epochs: 2,
            steps_per_epoch: 2,
            clouds_per_step: 1,
            queries_per_cloud: 32,
            cloud_points: 64,
            query_pool_per_mesh: 256,
            lambda: 0.25,
            ..TrainConfig::default()
        };
        let mut model: VectorFieldModel<f32> =
            VectorFieldModel::init(ModelConfig::small(), 3).unwrap();
        let records = train(&mut model, &[fixtures::sphere(16, 8)], &config).unwrap();
        for r in &records {
            assert!(
                (r.total_loss - (r.displacement_loss + 0.25 * r.commitment_loss)).abs() < 1e-6
            );
        }
    }

    #[test]
    fn codes_move_only_via_ema() {
        // With revival off and lr > 0, parameter updates must leave codes
        // untouched except through the EMA path; with the codebook disabled
        // codes never change at all.
        let config = TrainConfig {
            epochs: 1,
            steps_per_epoch: 2,
            clouds_per_step: 1,
            queries_per_cloud: 16,
            cloud_points: 64,
            query_pool_per_mesh: 64,
            use_codebook: false,
            ..TrainConfig::default()
        };
        let mut model: VectorFieldModel<f32> =
            VectorFieldModel::init(ModelConfig::small(), 9).unwrap();
        let before = model.codebook.codes().clone();
        train(&mut model, &[fixtures::sphere(16, 8)], &config).unwrap();
        assert_eq!(&before, model.codebook.codes());
    }

    #[test]
    fn csv_has_fixed_header() {
        let records = vec![TrainRecord {
            epoch: 0,
            displacement_loss: 0.5,
            commitment_loss: 0.25,
            total_loss: 0.50025,
            perplexity: 12.0,
            wall_clock_s: 0.125,
        }];
        let csv = records_to_csv(&records);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), TRAIN_LOG_HEADER);
        assert_eq!(lines.next().unwrap(), "0,0.5,0.25,0.50025,12,0.125");
    }
}
