//! Finite-difference gradient oracle, shared by the crate's own tests and
//! the acceptance suite (feature `testsupport`).
//!
//! Central-finite-difference verification of the analytic backward pass.
//!
//! The numerical oracle is an independent f64 re-implementation of the
//! forward computation: it reads the model's parameter tensors but shares no
//! forward code with the crate. Geometry (neighbor lists, encoder inputs) is
//! parameter-independent and precomputed once; everything parameters touch
//! is re-evaluated per probe.
//!
//! The code assignment is frozen at the unperturbed model's choice, because
//! that piecewise branch is exactly the function the backward pass
//! differentiates (the nearest-code lookup stops the gradient); without
//! freezing, an index flip inside the probe interval makes the difference
//! quotient measure a jump, not a derivative. Leaky-ReLU kinks can still
//! land inside a probe interval: probes that disagree at h = 1e-4 are
//! re-measured at h = 1e-5 and 1e-6 and must converge to the analytic value.

use ndarray::Array2;

use crate::geom::{fixtures, sample_queries, sample_surface, PointCloud, PointIndex, Vec3};
use crate::model::{backward_batch, forward_batch, ModelConfig, VectorFieldModel};

/// Parameter-independent geometry shared by every probe.
pub struct Geometry {
    /// (N, 9) encoder inputs: position, mean neighbor offset, max offset.
    pub enc_input: Array2<f64>,
    /// (B*K, 10) signature inputs without the feature block.
    pub sig_geo: Array2<f64>,
    /// (B*K) cloud index feeding each signature row.
    pub neighbor_idx: Vec<u32>,
}

pub struct GradCheckFixture {
    pub model: VectorFieldModel<f64>,
    pub geo: Geometry,
    pub cloud: PointCloud,
    pub queries: Vec<Vec3>,
    pub targets: Array2<f64>,
    pub lambda: f64,
    /// Code assignment of the unperturbed model; pins the branch the oracle
    /// evaluates. `None` when the codebook is off.
    pub frozen_indices: Option<Array2<u32>>,
}

/// Builds the geometric inputs directly from their documented definitions.
pub fn build_geometry(points: &[Vec3], queries: &[Vec3], k: usize) -> Geometry {
    let index = PointIndex::build(points).unwrap();
    let n = points.len();

    let mut enc_input = Array2::<f64>::zeros((n, 9));
    for (i, &p) in points.iter().enumerate() {
        let hits = index.knn(p, k);
        let mut mean = Vec3::ZERO;
        let mut max = Vec3::splat(f64::NEG_INFINITY);
        for &(j, _) in &hits {
            let off = points[j as usize] - p;
            mean += off;
            max = max.max_by_component(off);
        }
        mean = mean / k as f64;
        for (c, v) in [p, mean, max].iter().enumerate() {
            enc_input[[i, 3 * c]] = v.x;
            enc_input[[i, 3 * c + 1]] = v.y;
            enc_input[[i, 3 * c + 2]] = v.z;
        }
    }

    let b = queries.len();
    let mut sig_geo = Array2::<f64>::zeros((b * k, 10));
    let mut neighbor_idx = vec![0u32; b * k];
    for (qi, &q) in queries.iter().enumerate() {
        for (slot, &(j, _)) in index.knn(q, k).iter().enumerate() {
            let row = qi * k + slot;
            neighbor_idx[row] = j;
            let p = points[j as usize];
            let off = p - q;
            let vals =
                [q.x, q.y, q.z, p.x, p.y, p.z, off.x, off.y, off.z, off.norm()];
            for (c, v) in vals.into_iter().enumerate() {
                sig_geo[[row, c]] = v;
            }
        }
    }
    Geometry { enc_input, sig_geo, neighbor_idx }
}

pub fn gradcheck_fixture(seed: u64, batch: usize, output_dim: usize, use_codebook: bool) -> GradCheckFixture {
    let config = ModelConfig { output_dim, use_codebook, ..ModelConfig::small() };
    let neighbors = config.neighbors;
    let model: VectorFieldModel<f64> = VectorFieldModel::init(config, seed).unwrap();
    let mesh = fixtures::sphere(16, 8);
    let cloud = sample_surface(&mesh, 64, seed ^ 0xa5).unwrap();
    let queries = sample_queries(&cloud, batch, &[0.01, 0.03], 0.25, seed ^ 0x3c).unwrap();
    // Deterministic synthetic targets, bounded away from the predictions so
    // the L1 objective stays smooth across every probe.
    let mut t = 0.0f64;
    let targets = Array2::from_shape_simple_fn((batch, output_dim), || {
        t += 1.0;
        0.3 * (t * 0.7).sin()
    });

    let geo = build_geometry(&cloud.points, &queries, neighbors);
    let fcloud = model.encode_cloud(&cloud).unwrap();
    let (_, tape) = forward_batch(&model, &fcloud, &queries).unwrap();
    let frozen_indices = tape.code_indices.clone();

    GradCheckFixture { model, geo, cloud, queries, targets, lambda: 0.001, frozen_indices }
}

fn lrelu(m: &Array2<f64>, slope: f64) -> Array2<f64> {
    m.mapv(|v| if v > 0.0 { v } else { v * slope })
}

/// Which part of the model a probed parameter belongs to, by slot order in
/// `param_views`. Upstream stages are unaffected by the probe and may be
/// reused exactly.
#[derive(Clone, Copy, PartialEq)]
enum Stage {
    Encoder,
    Signature,
    Head,
}

fn stage_of(slot: usize) -> Stage {
    match slot {
        0..=3 => Stage::Encoder,
        4..=7 => Stage::Signature,
        _ => Stage::Head,
    }
}

/// Encoder features (N, C) from raw parameter tensors.
fn oracle_features(fx: &GradCheckFixture, model: &VectorFieldModel<f64>) -> Array2<f64> {
    let slope = model.config.leaky_slope;
    let h1 =
        lrelu(&(fx.geo.enc_input.dot(&model.encoder.l1.w.t()) + &model.encoder.l1.b), slope);
    h1.dot(&model.encoder.l2.w.t()) + &model.encoder.l2.b
}

/// Query embeddings (B, D) from features.
fn oracle_embeddings(fx: &GradCheckFixture, model: &VectorFieldModel<f64>, feats: &Array2<f64>) -> Array2<f64> {
    let cfg = &model.config;
    let slope = cfg.leaky_slope;
    let b = fx.queries.len();
    let (k, c, d) = (cfg.neighbors, cfg.feature_width, cfg.embed_width);

    let mut sig_in = Array2::<f64>::zeros((b * k, 10 + c));
    sig_in.slice_mut(ndarray::s![.., 0..10]).assign(&fx.geo.sig_geo);
    for row in 0..b * k {
        let j = fx.geo.neighbor_idx[row] as usize;
        for ch in 0..c {
            sig_in[[row, 10 + ch]] = feats[[j, ch]];
        }
    }
    let s1 = lrelu(&(sig_in.dot(&model.signature.l1.w.t()) + &model.signature.l1.b), slope);
    let sig_out = s1.dot(&model.signature.l2.w.t()) + &model.signature.l2.b;
    sig_out.into_shape_with_order((b, d)).unwrap()
}

/// Loss from embeddings: frozen-branch quantization, head, L1 + commitment.
fn oracle_loss(fx: &GradCheckFixture, model: &VectorFieldModel<f64>, z: &Array2<f64>) -> f64 {
    let cfg = &model.config;
    let slope = cfg.leaky_slope;
    let b = fx.queries.len();
    let d = cfg.embed_width;

    let (z_hat, commit) = match &fx.frozen_indices {
        Some(indices) => {
            let seg = cfg.segment_width();
            let mut z_hat = Array2::<f64>::zeros((b, d));
            for row in 0..b {
                for head in 0..cfg.heads {
                    let code = indices[[row, head]] as usize;
                    for j in 0..seg {
                        z_hat[[row, head * seg + j]] = model.codebook.codes()[[head, code, j]];
                    }
                }
            }
            let mut commit = 0.0;
            for (a, bb) in z.iter().zip(z_hat.iter()) {
                let diff = a - bb;
                commit += diff * diff;
            }
            (z_hat, commit / b as f64)
        }
        None => (z.clone(), 0.0),
    };

    let mut head_in = Array2::<f64>::zeros((b, 2 * d));
    head_in.slice_mut(ndarray::s![.., 0..d]).assign(z);
    head_in.slice_mut(ndarray::s![.., d..2 * d]).assign(&z_hat);
    let a1 = lrelu(&(head_in.dot(&model.head.l1.w.t()) + &model.head.l1.b), slope);
    let a2 = lrelu(&(a1.dot(&model.head.l2.w.t()) + &model.head.l2.b), slope);
    let pred = a2.dot(&model.head.l3.w.t()) + &model.head.l3.b;

    let mut l1 = 0.0;
    for (p, t) in pred.iter().zip(fx.targets.iter()) {
        l1 += (p - t).abs();
    }
    l1 / b as f64 + fx.lambda * commit
}

/// Full objective; cached upstream stages may be supplied when the probed
/// parameter provably cannot change them.
pub fn objective(fx: &GradCheckFixture, model: &VectorFieldModel<f64>) -> f64 {
    let feats = oracle_features(fx, model);
    let z = oracle_embeddings(fx, model, &feats);
    oracle_loss(fx, model, &z)
}

/// The implementation-side loss at the same parameters, for cross-checking
/// that oracle and implementation compute the same function.
pub fn implementation_loss(fx: &GradCheckFixture) -> f64 {
    let fcloud = fx.model.encode_cloud(&fx.cloud).unwrap();
    let (pred, tape) = forward_batch(&fx.model, &fcloud, &fx.queries).unwrap();
    let b = pred.nrows() as f64;
    let mut l1 = 0.0;
    for (p, t) in pred.iter().zip(fx.targets.iter()) {
        l1 += (p - t).abs();
    }
    let mut commit = 0.0;
    if let Some(z_hat) = &tape.z_hat {
        for (z, zh) in tape.z_q.iter().zip(z_hat.iter()) {
            let diff = z - zh;
            commit += diff * diff;
        }
        commit /= b;
    }
    l1 / b + fx.lambda * commit
}

pub fn analytic_gradients(fx: &GradCheckFixture) -> Vec<(String, Vec<f64>)> {
    let model = &fx.model;
    let fcloud = model.encode_cloud(&fx.cloud).unwrap();
    let (pred, tape) = forward_batch(model, &fcloud, &fx.queries).unwrap();
    let b = pred.nrows() as f64;

    let mut d_pred = Array2::<f64>::zeros(pred.raw_dim());
    for ((r, c), dp) in d_pred.indexed_iter_mut() {
        let diff = pred[[r, c]] - fx.targets[[r, c]];
        *dp = if diff > 0.0 {
            1.0 / b
        } else if diff < 0.0 {
            -1.0 / b
        } else {
            0.0
        };
    }
    let d_zq_extra = tape.z_hat.as_ref().map(|z_hat| {
        let mut dz = tape.z_q.clone();
        dz -= z_hat;
        dz.mapv_into(|v| 2.0 * fx.lambda * v / b)
    });

    let grads = backward_batch(model, &fcloud, tape, &d_pred, d_zq_extra.as_ref()).unwrap();
    grads
        .views()
        .into_iter()
        .map(|(name, view)| (name.to_string(), view.iter().copied().collect()))
        .collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn check_all_parameters(fx: &mut GradCheckFixture, tol: f64) {
    // The oracle must evaluate the same function as the implementation.
    let direct = implementation_loss(fx);
    let recomputed = objective(fx, &fx.model);
    assert!(
        (direct - recomputed).abs() < 1e-12,
        "oracle objective diverged from the implementation: {direct} vs {recomputed}"
    );

    // Precondition for the L1 oracle: residuals stay clear of the kink.
    {
        let fcloud = fx.model.encode_cloud(&fx.cloud).unwrap();
        let (pred, _) = forward_batch(&fx.model, &fcloud, &fx.queries).unwrap();
        let margin = pred
            .iter()
            .zip(fx.targets.iter())
            .map(|(p, t)| (p - t).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(margin > 1e-2, "fixture too close to an L1 kink: margin {margin}");
    }

    let analytic = analytic_gradients(fx);
    let n_slots = fx.model.param_views().len();
    let mut worst = 0.0f64;
    let mut kink_retries = 0usize;
    let mut total = 0usize;

    // Upstream stage outputs at the unperturbed parameters. A probe of a
    // later stage cannot change them, so they are reused exactly.
    let feats0 = oracle_features(fx, &fx.model);
    let z0 = oracle_embeddings(fx, &fx.model, &feats0);

    for slot in 0..n_slots {
        let name = analytic[slot].0.clone();
        let len = analytic[slot].1.len();
        let stage = stage_of(slot);
        let eval = |fx: &GradCheckFixture, model: &VectorFieldModel<f64>| -> f64 {
            match stage {
                Stage::Encoder => objective(fx, model),
                Stage::Signature => {
                    let z = oracle_embeddings(fx, model, &feats0);
                    oracle_loss(fx, model, &z)
                }
                Stage::Head => oracle_loss(fx, model, &z0),
            }
        };
        for elem in 0..len {
            total += 1;
            let exact = analytic[slot].1[elem];
            let mut accepted = false;
            for (attempt, h) in [1e-4, 1e-5, 1e-6].into_iter().enumerate() {
                let orig = {
                    let mut vs = fx.model.param_views_mut();
                    let s = vs[slot].1.as_slice_mut().unwrap();
                    let o = s[elem];
                    s[elem] = o + h;
                    o
                };
                let plus = eval(fx, &fx.model);
                {
                    let mut vs = fx.model.param_views_mut();
                    vs[slot].1.as_slice_mut().unwrap()[elem] = orig - h;
                }
                let minus = eval(fx, &fx.model);
                {
                    let mut vs = fx.model.param_views_mut();
                    vs[slot].1.as_slice_mut().unwrap()[elem] = orig;
                }
                let numeric = (plus - minus) / (2.0 * h);
                let rel = rel_err(exact, numeric);
                if rel < tol {
                    if attempt > 0 {
                        kink_retries += 1;
                    } else if rel > worst {
                        worst = rel;
                    }
                    accepted = true;
                    break;
                }
            }
            assert!(
                accepted,
                "gradient mismatch persists as h -> 0 at {name}[{elem}]: analytic {exact:.6e}"
            );
        }
    }
    // Kink crossings must be rare; systematic disagreement is a bug.
    assert!(
        kink_retries * 100 <= total,
        "{kink_retries} of {total} probes straddled activation kinks"
    );
    eprintln!(
        "gradient check: {total} parameters verified, worst clean relative error {worst:.3e}, {kink_retries} kink retries"
    );
}

