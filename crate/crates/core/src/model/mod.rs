//! The learnable vector field.
//!
//! Pipeline per query: a per-point encoder attaches features to the input
//! cloud; the query's K nearest cloud points each yield a signature from the
//! tuple (query, point, offset, distance, point feature); signatures
//! concatenate in ascending-distance order into the query embedding; the
//! multi-head codebook quantizes the embedding; and the displacement head
//! maps (embedding, quantized embedding) to the output vector. Distance and
//! direction are read directly off the predicted displacement, so inference
//! is a single forward pass per query — never a differentiation.
//!
//! Training gradients are hand-derived; [`forward::backward_batch`] consumes
//! the tape recorded by [`forward::forward_batch`].

mod baseline;
mod cloud_encoding;
mod counters;
mod forward;
mod layers;

pub use baseline::{
    udf_baseline_direction, udf_baseline_forward, udf_direction_batch, UdfDirection,
    DEFAULT_AMBIGUITY_THRESHOLD, DEGENERATE_GRADIENT_NORM,
};
pub use cloud_encoding::{CloudGeometry, FeaturedCloud};
pub use counters::{OpCounters, OpCounts};
pub use forward::{
    backward_batch, embed_query, forward_batch, infer_batch, infer_samples,
    predict_displacement, FieldSample, ModelGrads, Tape,
};
pub use layers::{leaky_relu, leaky_relu_backward, Linear, LinearGrads};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::MultiHeadCodebook;
use crate::error::{NvfError, Result};
use crate::numeric::Real;

/// Architecture hyperparameters. The embedding width must divide evenly
/// into both the per-neighbor signatures (K of them) and the codebook heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// K: nearest cloud points consulted per query.
    pub neighbors: usize,
    /// C: per-point feature width produced by the encoder.
    pub feature_width: usize,
    /// D: query embedding width.
    pub embed_width: usize,
    /// H: codebook heads.
    pub heads: usize,
    /// R: codes per head.
    pub codes_per_head: usize,
    pub encoder_hidden: usize,
    pub signature_hidden: usize,
    pub head_hidden: usize,
    pub leaky_slope: f64,
    /// Feed absolute positions to the encoder and signature MLPs. When
    /// false, only relative quantities enter, making features
    /// translation-invariant.
    pub absolute_coords: bool,
    pub ema_gamma: f64,
    pub commitment_beta: f64,
    /// Quantize embeddings through the codebook. When off the head sees the
    /// continuous embedding in both input halves, keeping sizes matched.
    pub use_codebook: bool,
    /// 3 for the vector field, 1 for the scalar-distance baseline.
    pub output_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            neighbors: 16,
            feature_width: 32,
            embed_width: 256,
            heads: 4,
            codes_per_head: 128,
            encoder_hidden: 64,
            signature_hidden: 64,
            head_hidden: 512,
            leaky_slope: 0.01,
            absolute_coords: true,
            ema_gamma: 0.99,
            commitment_beta: 0.25,
            use_codebook: true,
            output_dim: 3,
        }
    }
}

impl ModelConfig {
    /// Desk-scale variant used by gradient checks and fast tests: D = 64.
    pub fn small() -> Self {
        ModelConfig {
            feature_width: 16,
            embed_width: 64,
            codes_per_head: 32,
            head_hidden: 128,
            ..ModelConfig::default()
        }
    }

    /// Same architecture with a scalar distance output.
    pub fn into_baseline(mut self) -> Self {
        self.output_dim = 1;
        self
    }

    /// Signature width per neighbor: D / K.
    pub fn signature_width(&self) -> usize {
        self.embed_width / self.neighbors
    }

    /// Code segment width: D / H.
    pub fn segment_width(&self) -> usize {
        self.embed_width / self.heads
    }

    /// Width of the tuple each signature consumes: query (3), neighbor (3),
    /// offset (3), distance (1), neighbor feature (C).
    pub fn signature_input_width(&self) -> usize {
        10 + self.feature_width
    }

    /// Encoder input per point: position (3), mean neighbor offset (3),
    /// max neighbor offset (3).
    pub const ENCODER_INPUT_WIDTH: usize = 9;

    pub fn validate(&self) -> Result<()> {
        if self.embed_width == 0 || self.neighbors == 0 || self.heads == 0 {
            return Err(NvfError::invalid("model dimensions must be positive"));
        }
        if self.embed_width % self.neighbors != 0 {
            return Err(NvfError::invalid(format!(
                "embed width {} not divisible by neighbor count {}",
                self.embed_width, self.neighbors
            )));
        }
        if self.embed_width % self.heads != 0 {
            return Err(NvfError::invalid(format!(
                "embed width {} not divisible by head count {}",
                self.embed_width, self.heads
            )));
        }
        if self.output_dim != 1 && self.output_dim != 3 {
            return Err(NvfError::invalid("output_dim must be 1 or 3"));
        }
        if !(0.0 < self.ema_gamma && self.ema_gamma < 1.0) {
            return Err(NvfError::invalid("ema_gamma must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Per-point encoder parameters: two dense layers over local statistics.
#[derive(Debug, Clone)]
pub struct EncoderParams<F: Real> {
    pub l1: Linear<F>,
    pub l2: Linear<F>,
}

/// Signature MLP: (10 + C) -> hidden -> D/K, applied per (query, neighbor).
#[derive(Debug, Clone)]
pub struct SignatureParams<F: Real> {
    pub l1: Linear<F>,
    pub l2: Linear<F>,
}

/// Displacement head: (2D) -> hidden -> hidden -> output, final layer
/// linear (displacements are unbounded within the cube).
#[derive(Debug, Clone)]
pub struct HeadParams<F: Real> {
    pub l1: Linear<F>,
    pub l2: Linear<F>,
    pub l3: Linear<F>,
}

/// The complete field model: encoder, signature MLP, codebook, displacement
/// head, and the structural op counters.
#[derive(Debug)]
pub struct VectorFieldModel<F: Real> {
    pub config: ModelConfig,
    pub encoder: EncoderParams<F>,
    pub signature: SignatureParams<F>,
    pub head: HeadParams<F>,
    pub codebook: MultiHeadCodebook<F>,
    pub counters: OpCounters,
    pub init_seed: u64,
}

impl<F: Real> Clone for VectorFieldModel<F> {
    fn clone(&self) -> Self {
        VectorFieldModel {
            config: self.config.clone(),
            encoder: self.encoder.clone(),
            signature: self.signature.clone(),
            head: self.head.clone(),
            codebook: self.codebook.clone(),
            counters: self.counters.clone(),
            init_seed: self.init_seed,
        }
    }
}

impl<F: Real> VectorFieldModel<F> {
    /// Seeded random initialization.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderParams {
            l1: Linear::init(config.encoder_hidden, ModelConfig::ENCODER_INPUT_WIDTH, &mut rng),
            l2: Linear::init(config.feature_width, config.encoder_hidden, &mut rng),
        };
        let signature = SignatureParams {
            l1: Linear::init(config.signature_hidden, config.signature_input_width(), &mut rng),
            l2: Linear::init(config.signature_width(), config.signature_hidden, &mut rng),
        };
        let head = HeadParams {
            l1: Linear::init(config.head_hidden, 2 * config.embed_width, &mut rng),
            l2: Linear::init(config.head_hidden, config.head_hidden, &mut rng),
            l3: Linear::init(config.output_dim, config.head_hidden, &mut rng),
        };
        let codebook = MultiHeadCodebook::new(
            config.heads,
            config.codes_per_head,
            config.segment_width(),
            config.ema_gamma,
            config.commitment_beta,
            seed ^ 0x5eed_c0de,
        )?;
        Ok(VectorFieldModel {
            config,
            encoder,
            signature,
            head,
            codebook,
            counters: OpCounters::default(),
            init_seed: seed,
        })
    }

    pub fn leaky_slope(&self) -> F {
        F::c(self.config.leaky_slope)
    }

    /// Casts all parameters to another precision. Counters restart at zero.
    pub fn cast<G: Real>(&self) -> VectorFieldModel<G> {
        VectorFieldModel {
            config: self.config.clone(),
            encoder: EncoderParams { l1: self.encoder.l1.cast(), l2: self.encoder.l2.cast() },
            signature: SignatureParams {
                l1: self.signature.l1.cast(),
                l2: self.signature.l2.cast(),
            },
            head: HeadParams {
                l1: self.head.l1.cast(),
                l2: self.head.l2.cast(),
                l3: self.head.l3.cast(),
            },
            codebook: self.codebook.cast(),
            counters: OpCounters::default(),
            init_seed: self.init_seed,
        }
    }

    /// All trainable tensors in fixed declaration order. Codebook entries
    /// are deliberately absent: codes receive no gradients and move only via
    /// EMA.
    pub fn param_views(&self) -> Vec<(&'static str, ndarray::ArrayViewD<'_, F>)> {
        vec![
            ("encoder.l1.w", self.encoder.l1.w.view().into_dyn()),
            ("encoder.l1.b", self.encoder.l1.b.view().into_dyn()),
            ("encoder.l2.w", self.encoder.l2.w.view().into_dyn()),
            ("encoder.l2.b", self.encoder.l2.b.view().into_dyn()),
            ("signature.l1.w", self.signature.l1.w.view().into_dyn()),
            ("signature.l1.b", self.signature.l1.b.view().into_dyn()),
            ("signature.l2.w", self.signature.l2.w.view().into_dyn()),
            ("signature.l2.b", self.signature.l2.b.view().into_dyn()),
            ("head.l1.w", self.head.l1.w.view().into_dyn()),
            ("head.l1.b", self.head.l1.b.view().into_dyn()),
            ("head.l2.w", self.head.l2.w.view().into_dyn()),
            ("head.l2.b", self.head.l2.b.view().into_dyn()),
            ("head.l3.w", self.head.l3.w.view().into_dyn()),
            ("head.l3.b", self.head.l3.b.view().into_dyn()),
        ]
    }

    /// Mutable counterpart of [`Self::param_views`], same order.
    pub fn param_views_mut(&mut self) -> Vec<(&'static str, ndarray::ArrayViewMutD<'_, F>)> {
        vec![
            ("encoder.l1.w", self.encoder.l1.w.view_mut().into_dyn()),
            ("encoder.l1.b", self.encoder.l1.b.view_mut().into_dyn()),
            ("encoder.l2.w", self.encoder.l2.w.view_mut().into_dyn()),
            ("encoder.l2.b", self.encoder.l2.b.view_mut().into_dyn()),
            ("signature.l1.w", self.signature.l1.w.view_mut().into_dyn()),
            ("signature.l1.b", self.signature.l1.b.view_mut().into_dyn()),
            ("signature.l2.w", self.signature.l2.w.view_mut().into_dyn()),
            ("signature.l2.b", self.signature.l2.b.view_mut().into_dyn()),
            ("head.l1.w", self.head.l1.w.view_mut().into_dyn()),
            ("head.l1.b", self.head.l1.b.view_mut().into_dyn()),
            ("head.l2.w", self.head.l2.w.view_mut().into_dyn()),
            ("head.l2.b", self.head.l2.b.view_mut().into_dyn()),
            ("head.l3.w", self.head.l3.w.view_mut().into_dyn()),
            ("head.l3.b", self.head.l3.b.view_mut().into_dyn()),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.param_views().iter().map(|(_, v)| v.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_dimensions() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.signature_width(), 16);
        assert_eq!(c.segment_width(), 64);
        assert_eq!(c.signature_input_width(), 42);
    }

    #[test]
    fn invalid_divisibility_is_rejected() {
        let c = ModelConfig { embed_width: 100, ..ModelConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let a: VectorFieldModel<f32> = VectorFieldModel::init(ModelConfig::small(), 3).unwrap();
        let b: VectorFieldModel<f32> = VectorFieldModel::init(ModelConfig::small(), 3).unwrap();
        assert_eq!(a.encoder.l1.w, b.encoder.l1.w);
        assert_eq!(a.head.l3.w, b.head.l3.w);
        assert_eq!(a.codebook.codes(), b.codebook.codes());
    }

    #[test]
    fn param_views_cover_all_layers() {
        let m: VectorFieldModel<f32> = VectorFieldModel::init(ModelConfig::small(), 0).unwrap();
        assert_eq!(m.param_views().len(), 14);
        assert!(m.param_count() > 0);
    }
}
