//! Query embedding, field prediction, and the hand-derived backward pass.

use ndarray::{s, Array1, Array2};

use crate::error::{NvfError, Result};
use crate::geom::Vec3;
use crate::numeric::Real;

use super::cloud_encoding::FeaturedCloud;
use super::layers::{leaky_relu, leaky_relu_backward, LinearGrads};
use super::VectorFieldModel;

/// Recorded intermediates for one mini-batch. Consumed (moved) by exactly
/// one backward pass.
#[derive(Debug)]
pub struct Tape<F: Real> {
    /// (B*K) neighbor index per signature row.
    pub neighbor_idx: Vec<u32>,
    /// (B*K, 10+C) signature inputs.
    pub sig_input: Array2<F>,
    /// (B*K, hidden) signature pre-activations.
    pub sig_hidden_pre: Array2<F>,
    /// (B, D) continuous query embeddings.
    pub z_q: Array2<F>,
    /// (B, D) quantized embeddings (copy of selected codes), when the
    /// codebook is active.
    pub z_hat: Option<Array2<F>>,
    /// (B, H) selected code indices, when the codebook is active.
    pub code_indices: Option<Array2<u32>>,
    /// (B, 2D) head input.
    pub head_input: Array2<F>,
    pub head_h1_pre: Array2<F>,
    pub head_h2_pre: Array2<F>,
    /// (B, out) predictions.
    pub predictions: Array2<F>,
}

/// One inference result: the predicted displacement with its derived
/// distance/direction views. All three are faces of the same forward pass.
#[derive(Debug, Clone, Copy)]
pub struct FieldSample<F: Real> {
    pub displacement: [F; 3],
}

impl<F: Real> FieldSample<F> {
    /// Unsigned distance: the norm of the predicted displacement.
    #[inline]
    pub fn distance(&self) -> F {
        let [x, y, z] = self.displacement;
        (x * x + y * y + z * z).sqrt()
    }

    /// Unit direction toward the surface; `None` below 1e-12.
    #[inline]
    pub fn direction(&self) -> Option<[F; 3]> {
        let d = self.distance();
        if d < F::c(1e-12) {
            None
        } else {
            let [x, y, z] = self.displacement;
            Some([x / d, y / d, z / d])
        }
    }
}

/// Gradients for every trainable tensor, in the same order as
/// [`VectorFieldModel::param_views`]. Codebook codes have no slot here: the
/// quantization lookup stops the gradient.
#[derive(Debug, Clone)]
pub struct ModelGrads<F: Real> {
    pub encoder_l1: LinearGrads<F>,
    pub encoder_l2: LinearGrads<F>,
    pub signature_l1: LinearGrads<F>,
    pub signature_l2: LinearGrads<F>,
    pub head_l1: LinearGrads<F>,
    pub head_l2: LinearGrads<F>,
    pub head_l3: LinearGrads<F>,
}

impl<F: Real> ModelGrads<F> {
    pub fn zeros(model: &VectorFieldModel<F>) -> Self {
        ModelGrads {
            encoder_l1: model.encoder.l1.zeros_like(),
            encoder_l2: model.encoder.l2.zeros_like(),
            signature_l1: model.signature.l1.zeros_like(),
            signature_l2: model.signature.l2.zeros_like(),
            head_l1: model.head.l1.zeros_like(),
            head_l2: model.head.l2.zeros_like(),
            head_l3: model.head.l3.zeros_like(),
        }
    }

    /// Elementwise accumulation, used when a step spans several clouds.
    pub fn add_assign(&mut self, other: &ModelGrads<F>) {
        for (a, b) in self.views_mut().into_iter().zip(other.views()) {
            ndarray::Zip::from(a.1).and(b.1).for_each(|x, &y| *x = *x + y);
        }
    }

    pub fn views(&self) -> Vec<(&'static str, ndarray::ArrayViewD<'_, F>)> {
        vec![
            ("encoder.l1.w", self.encoder_l1.w.view().into_dyn()),
            ("encoder.l1.b", self.encoder_l1.b.view().into_dyn()),
            ("encoder.l2.w", self.encoder_l2.w.view().into_dyn()),
            ("encoder.l2.b", self.encoder_l2.b.view().into_dyn()),
            ("signature.l1.w", self.signature_l1.w.view().into_dyn()),
            ("signature.l1.b", self.signature_l1.b.view().into_dyn()),
            ("signature.l2.w", self.signature_l2.w.view().into_dyn()),
            ("signature.l2.b", self.signature_l2.b.view().into_dyn()),
            ("head.l1.w", self.head_l1.w.view().into_dyn()),
            ("head.l1.b", self.head_l1.b.view().into_dyn()),
            ("head.l2.w", self.head_l2.w.view().into_dyn()),
            ("head.l2.b", self.head_l2.b.view().into_dyn()),
            ("head.l3.w", self.head_l3.w.view().into_dyn()),
            ("head.l3.b", self.head_l3.b.view().into_dyn()),
        ]
    }

    pub fn views_mut(&mut self) -> Vec<(&'static str, ndarray::ArrayViewMutD<'_, F>)> {
        vec![
            ("encoder.l1.w", self.encoder_l1.w.view_mut().into_dyn()),
            ("encoder.l1.b", self.encoder_l1.b.view_mut().into_dyn()),
            ("encoder.l2.w", self.encoder_l2.w.view_mut().into_dyn()),
            ("encoder.l2.b", self.encoder_l2.b.view_mut().into_dyn()),
            ("signature.l1.w", self.signature_l1.w.view_mut().into_dyn()),
            ("signature.l1.b", self.signature_l1.b.view_mut().into_dyn()),
            ("signature.l2.w", self.signature_l2.w.view_mut().into_dyn()),
            ("signature.l2.b", self.signature_l2.b.view_mut().into_dyn()),
            ("head.l1.w", self.head_l1.w.view_mut().into_dyn()),
            ("head.l1.b", self.head_l1.b.view_mut().into_dyn()),
            ("head.l2.w", self.head_l2.w.view_mut().into_dyn()),
            ("head.l2.b", self.head_l2.b.view_mut().into_dyn()),
            ("head.l3.w", self.head_l3.w.view_mut().into_dyn()),
            ("head.l3.b", self.head_l3.b.view_mut().into_dyn()),
        ]
    }
}

/// Output of the embedding stage for a batch of queries.
struct EmbedOut<F: Real> {
    neighbor_idx: Vec<u32>,
    sig_input: Array2<F>,
    sig_hidden_pre: Array2<F>,
    z_q: Array2<F>,
}

fn embed_queries_core<F: Real>(
    model: &VectorFieldModel<F>,
    fcloud: &FeaturedCloud<F>,
    queries: &[Vec3],
) -> EmbedOut<F> {
    let cfg = &model.config;
    let (b, k, c) = (queries.len(), cfg.neighbors, cfg.feature_width);
    let in_width = cfg.signature_input_width();

    let mut neighbor_idx = vec![0u32; b * k];
    let mut sig_input = Array2::<F>::zeros((b * k, in_width));
    for (qi, &q) in queries.iter().enumerate() {
        // Nearest cloud points in ascending distance order, ties by index:
        // a property of the data, not of cloud storage order.
        let hits = fcloud.geo.index.knn(q, k);
        let qf = [F::c(q.x), F::c(q.y), F::c(q.z)];
        for (slot, &(j, _)) in hits.iter().enumerate() {
            let row = qi * k + slot;
            neighbor_idx[row] = j;
            let p = [
                fcloud.geo.pos[[j as usize, 0]],
                fcloud.geo.pos[[j as usize, 1]],
                fcloud.geo.pos[[j as usize, 2]],
            ];
            let off = [p[0] - qf[0], p[1] - qf[1], p[2] - qf[2]];
            let dist = (off[0] * off[0] + off[1] * off[1] + off[2] * off[2]).sqrt();
            if cfg.absolute_coords {
                for a in 0..3 {
                    sig_input[[row, a]] = qf[a];
                    sig_input[[row, 3 + a]] = p[a];
                }
            }
            for a in 0..3 {
                sig_input[[row, 6 + a]] = off[a];
            }
            sig_input[[row, 9]] = dist;
            for ch in 0..c {
                sig_input[[row, 10 + ch]] = fcloud.features[[j as usize, ch]];
            }
        }
    }

    let slope = model.leaky_slope();
    let sig_hidden_pre = model.signature.l1.forward(&sig_input);
    let hidden = leaky_relu(&sig_hidden_pre, slope);
    let sig_out = model.signature.l2.forward(&hidden); // (B*K, D/K)

    // Concatenate the K signatures of each query, already in ascending
    // neighbor-distance order.
    let z_q = sig_out
        .into_shape_with_order((b, cfg.embed_width))
        .expect("signature rows reshape to (B, D)");

    EmbedOut { neighbor_idx, sig_input, sig_hidden_pre, z_q }
}

/// Continuous embedding of a single query: K signatures concatenated in
/// ascending neighbor-distance order.
pub fn embed_query<F: Real>(
    model: &VectorFieldModel<F>,
    fcloud: &FeaturedCloud<F>,
    q: Vec3,
) -> Array1<F> {
    let out = embed_queries_core(model, fcloud, &[q]);
    out.z_q.row(0).to_owned()
}

struct HeadOut<F: Real> {
    head_input: Array2<F>,
    h1_pre: Array2<F>,
    h2_pre: Array2<F>,
    pred: Array2<F>,
}

fn head_forward<F: Real>(
    model: &VectorFieldModel<F>,
    z_q: &Array2<F>,
    z_hat: &Array2<F>,
) -> HeadOut<F> {
    let d = model.config.embed_width;
    let b = z_q.nrows();
    let mut head_input = Array2::<F>::zeros((b, 2 * d));
    head_input.slice_mut(s![.., 0..d]).assign(z_q);
    head_input.slice_mut(s![.., d..2 * d]).assign(z_hat);

    let slope = model.leaky_slope();
    let h1_pre = model.head.l1.forward(&head_input);
    let a1 = leaky_relu(&h1_pre, slope);
    let h2_pre = model.head.l2.forward(&a1);
    let a2 = leaky_relu(&h2_pre, slope);
    let pred = model.head.l3.forward(&a2);
    HeadOut { head_input, h1_pre, h2_pre, pred }
}

/// Displacement prediction from a pair of embeddings (continuous and
/// quantized). One forward pass; distance and direction are views of the
/// returned vectors.
pub fn predict_displacement<F: Real>(
    model: &VectorFieldModel<F>,
    z_q: &Array2<F>,
    z_hat: &Array2<F>,
) -> Result<Array2<F>> {
    let d = model.config.embed_width;
    if z_q.ncols() != d || z_hat.ncols() != d || z_q.nrows() != z_hat.nrows() {
        return Err(NvfError::invalid("embedding widths do not match the model"));
    }
    Ok(head_forward(model, z_q, z_hat).pred)
}

fn forward_core<F: Real>(
    model: &VectorFieldModel<F>,
    fcloud: &FeaturedCloud<F>,
    queries: &[Vec3],
    record: bool,
) -> Result<(Array2<F>, Option<Tape<F>>)> {
    let embed = embed_queries_core(model, fcloud, queries);

    // Without quantization the head still sees a width-2D input; the second
    // half is the continuous embedding itself.
    let (z_hat, code_indices) = if model.config.use_codebook {
        let q = model.codebook.quantize_batch(embed.z_q.view())?;
        (Some(q.quantized), Some(q.indices))
    } else {
        (None, None)
    };

    let head = head_forward(model, &embed.z_q, z_hat.as_ref().unwrap_or(&embed.z_q));
    model.counters.add_forwards(queries.len() as u64);

    let pred = head.pred.clone();
    let tape = if record {
        Some(Tape {
            neighbor_idx: embed.neighbor_idx,
            sig_input: embed.sig_input,
            sig_hidden_pre: embed.sig_hidden_pre,
            z_q: embed.z_q,
            z_hat,
            code_indices,
            head_input: head.head_input,
            head_h1_pre: head.h1_pre,
            head_h2_pre: head.h2_pre,
            predictions: head.pred,
        })
    } else {
        None
    };
    Ok((pred, tape))
}

/// Training forward pass: predictions plus the tape for [`backward_batch`].
pub fn forward_batch<F: Real>(
    model: &VectorFieldModel<F>,
    fcloud: &FeaturedCloud<F>,
    queries: &[Vec3],
) -> Result<(Array2<F>, Tape<F>)> {
    let (pred, tape) = forward_core(model, fcloud, queries, true)?;
    Ok((pred, tape.expect("tape recorded")))
}

/// Inference forward pass: no tape, no gradients, one forward per query.
pub fn infer_batch<F: Real>(
    model: &VectorFieldModel<F>,
    fcloud: &FeaturedCloud<F>,
    queries: &[Vec3],
) -> Result<Array2<F>> {
    Ok(forward_core(model, fcloud, queries, false)?.0)
}

/// Inference returning displacement samples (vector-field models only).
pub fn infer_samples<F: Real>(
    model: &VectorFieldModel<F>,
    fcloud: &FeaturedCloud<F>,
    queries: &[Vec3],
) -> Result<Vec<FieldSample<F>>> {
    if model.config.output_dim != 3 {
        return Err(NvfError::invalid("displacement inference needs a 3D output head"));
    }
    let pred = infer_batch(model, fcloud, queries)?;
    Ok(pred
        .outer_iter()
        .map(|row| FieldSample { displacement: [row[0], row[1], row[2]] })
        .collect())
}

/// Exact analytic gradients for every trainable parameter.
///
/// `d_pred` is the loss gradient at the predictions; `d_zq_extra`, when
/// given, is added to the embedding gradient (the commitment term). No
/// gradient flows into codebook entries: when the codebook is active the
/// quantized half of the head input is a stopped branch.
pub fn backward_batch<F: Real>(
    model: &VectorFieldModel<F>,
    fcloud: &FeaturedCloud<F>,
    tape: Tape<F>,
    d_pred: &Array2<F>,
    d_zq_extra: Option<&Array2<F>>,
) -> Result<ModelGrads<F>> {
    let cfg = &model.config;
    let b = tape.predictions.nrows();
    if d_pred.shape() != tape.predictions.shape() {
        return Err(NvfError::invalid(format!(
            "upstream gradient shape {:?} does not match predictions {:?}",
            d_pred.shape(),
            tape.predictions.shape()
        )));
    }
    if let Some(extra) = d_zq_extra {
        if extra.shape() != tape.z_q.shape() {
            return Err(NvfError::invalid("embedding gradient shape mismatch"));
        }
    }

    let slope = model.leaky_slope();
    let d = cfg.embed_width;
    let mut grads = ModelGrads::zeros(model);

    // Head.
    let a2 = leaky_relu(&tape.head_h2_pre, slope);
    let d_a2 = model.head.l3.backward(&a2, d_pred, &mut grads.head_l3);
    let d_h2 = leaky_relu_backward(&tape.head_h2_pre, &d_a2, slope);
    let a1 = leaky_relu(&tape.head_h1_pre, slope);
    let d_a1 = model.head.l2.backward(&a1, &d_h2, &mut grads.head_l2);
    let d_h1 = leaky_relu_backward(&tape.head_h1_pre, &d_a1, slope);
    let d_head_in = model.head.l1.backward(&tape.head_input, &d_h1, &mut grads.head_l1);

    // Split the head-input gradient. The quantized half is discarded when
    // the codebook is active (nearest-code lookup stops the gradient); with
    // the codebook off both halves are the continuous embedding.
    let mut d_zq = d_head_in.slice(s![.., 0..d]).to_owned();
    if tape.code_indices.is_none() {
        d_zq += &d_head_in.slice(s![.., d..2 * d]);
    }
    if let Some(extra) = d_zq_extra {
        d_zq += extra;
    }

    // Signature MLP, rows grouped (query, neighbor) in ascending-distance
    // order exactly as assembled in the forward pass.
    let d_sig_out = d_zq
        .into_shape_with_order((b * cfg.neighbors, cfg.signature_width()))
        .expect("embedding gradient reshapes to signature rows");
    let sig_a = leaky_relu(&tape.sig_hidden_pre, slope);
    let d_sig_a = model.signature.l2.backward(&sig_a, &d_sig_out, &mut grads.signature_l2);
    let d_sig_pre = leaky_relu_backward(&tape.sig_hidden_pre, &d_sig_a, slope);
    let d_sig_in =
        model.signature.l1.backward(&tape.sig_input, &d_sig_pre, &mut grads.signature_l1);

    // Scatter feature gradients back to cloud points.
    let n = fcloud.len();
    let c = cfg.feature_width;
    let mut d_features = Array2::<F>::zeros((n, c));
    for (row, &j) in tape.neighbor_idx.iter().enumerate() {
        for ch in 0..c {
            d_features[[j as usize, ch]] =
                d_features[[j as usize, ch]] + d_sig_in[[row, 10 + ch]];
        }
    }

    // Encoder.
    let enc_a = leaky_relu(&fcloud.enc_hidden_pre, slope);
    let d_enc_a = model.encoder.l2.backward(&enc_a, &d_features, &mut grads.encoder_l2);
    let d_enc_pre = leaky_relu_backward(&fcloud.enc_hidden_pre, &d_enc_a, slope);
    let _ = model.encoder.l1.backward(&fcloud.geo.enc_input, &d_enc_pre, &mut grads.encoder_l1);

    model.counters.add_backwards(b as u64);
    Ok(grads)
}
