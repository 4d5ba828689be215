//! Multi-head vector quantization with exponential-moving-average code
//! updates.
//!
//! A width-D embedding is split into H segments; each segment is snapped to
//! the nearest code of its own sub-codebook, so H heads of R codes represent
//! R^H distinct quantized embeddings. The nearest-code lookup carries no
//! gradient: codes move only through the EMA accumulators, and the
//! commitment term pulls the continuous embedding toward its codes.

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{NvfError, Result};
use crate::numeric::Real;

/// Smoothing floor for the EMA count denominator.
pub const EMA_COUNT_EPS: f64 = 1e-5;
/// Codes unselected for this many consecutive batches are eligible for
/// revival.
pub const DEAD_CODE_BATCHES: u32 = 512;
/// Standard deviation of the random code initialization.
pub const CODE_INIT_SIGMA: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct MultiHeadCodebook<F: Real> {
    /// (heads, codes, segment width)
    codes: Array3<F>,
    /// (heads, codes)
    ema_counts: Array2<F>,
    /// (heads, codes, segment width)
    ema_sums: Array3<F>,
    /// EMA decay in (0, 1).
    pub gamma: f64,
    /// Weight of the code-side term in the loss-based update mode.
    pub beta: f64,
    /// Consecutive batches each code went unselected.
    unused_batches: Array2<u32>,
}

/// Result of quantizing one width-D embedding.
#[derive(Debug, Clone)]
pub struct QuantizationResult<F: Real> {
    /// Quantized embedding: per head, an exact copy of the selected code.
    pub quantized: Array1<F>,
    /// Selected code index per head.
    pub indices: Vec<u32>,
    /// Euclidean residual per head.
    pub residual_norms: Vec<F>,
}

/// Batched quantization used by training and inference.
#[derive(Debug, Clone)]
pub struct QuantizationBatch<F: Real> {
    /// (batch, D)
    pub quantized: Array2<F>,
    /// (batch, heads)
    pub indices: Array2<u32>,
}

/// Per-head usage report over a set of recent assignments.
#[derive(Debug, Clone)]
pub struct CodebookStats {
    /// (heads, codes) assignment counts.
    pub histogram: Vec<Vec<u64>>,
    /// exp(entropy) of the per-head assignment distribution.
    pub perplexity: Vec<f64>,
}

impl CodebookStats {
    pub fn mean_perplexity(&self) -> f64 {
        if self.perplexity.is_empty() {
            return 0.0;
        }
        self.perplexity.iter().sum::<f64>() / self.perplexity.len() as f64
    }
}

impl<F: Real> MultiHeadCodebook<F> {
    /// Randomly initialized codebook: `heads` sub-codebooks of `codes` codes,
    /// each of width `segment_width`, drawn i.i.d. normal sigma = 0.1.
    pub fn new(
        heads: usize,
        codes: usize,
        segment_width: usize,
        gamma: f64,
        beta: f64,
        seed: u64,
    ) -> Result<Self> {
        if heads == 0 || codes == 0 || segment_width == 0 {
            return Err(NvfError::invalid("codebook dimensions must be positive"));
        }
        if !(0.0 < gamma && gamma < 1.0) {
            return Err(NvfError::invalid(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let code_array = Array3::from_shape_simple_fn((heads, codes, segment_width), || {
            let v: f64 = rng.sample(StandardNormal);
            F::c(v * CODE_INIT_SIGMA)
        });
        Ok(MultiHeadCodebook {
            codes: code_array,
            ema_counts: Array2::zeros((heads, codes)),
            ema_sums: Array3::zeros((heads, codes, segment_width)),
            gamma,
            beta,
            unused_batches: Array2::zeros((heads, codes)),
        })
    }

    /// Reassembles a codebook from serialized state.
    pub fn from_parts(
        codes: Array3<F>,
        ema_counts: Array2<F>,
        ema_sums: Array3<F>,
        gamma: f64,
        beta: f64,
    ) -> Result<Self> {
        if codes.shape()[0] != ema_counts.shape()[0]
            || codes.shape()[1] != ema_counts.shape()[1]
            || codes.shape() != ema_sums.shape()
        {
            return Err(NvfError::invalid("codebook state shapes disagree"));
        }
        let unused = Array2::zeros((codes.shape()[0], codes.shape()[1]));
        Ok(MultiHeadCodebook { codes, ema_counts, ema_sums, gamma, beta, unused_batches: unused })
    }

    pub fn heads(&self) -> usize {
        self.codes.shape()[0]
    }

    pub fn code_count(&self) -> usize {
        self.codes.shape()[1]
    }

    pub fn segment_width(&self) -> usize {
        self.codes.shape()[2]
    }

    pub fn embed_width(&self) -> usize {
        self.heads() * self.segment_width()
    }

    pub fn codes(&self) -> &Array3<F> {
        &self.codes
    }

    pub fn ema_counts(&self) -> &Array2<F> {
        &self.ema_counts
    }

    pub fn ema_sums(&self) -> &Array3<F> {
        &self.ema_sums
    }

    /// Overwrites one code and its accumulators (tests, deserialization).
    pub fn set_code(&mut self, head: usize, code: usize, value: &[F], count: F) {
        for (j, &v) in value.iter().enumerate() {
            self.codes[[head, code, j]] = v;
            self.ema_sums[[head, code, j]] = v * count;
        }
        self.ema_counts[[head, code]] = count;
    }

    /// Nearest code per head by Euclidean distance, ties to the lowest code
    /// index. The lookup is a pure read and propagates no gradient.
    pub fn quantize(&self, embedding: ArrayView1<F>) -> Result<QuantizationResult<F>> {
        let (h, dim) = (self.heads(), self.segment_width());
        if embedding.len() != h * dim {
            return Err(NvfError::invalid(format!(
                "embedding width {} does not match codebook width {}",
                embedding.len(),
                h * dim
            )));
        }
        let mut quantized = Array1::zeros(h * dim);
        let mut indices = Vec::with_capacity(h);
        let mut residual_norms = Vec::with_capacity(h);
        for head in 0..h {
            let segment = embedding.slice(ndarray::s![head * dim..(head + 1) * dim]);
            let (best, d2) = self.nearest_code(head, segment);
            indices.push(best);
            residual_norms.push(d2.sqrt());
            quantized
                .slice_mut(ndarray::s![head * dim..(head + 1) * dim])
                .assign(&self.codes.index_axis(Axis(0), head).row(best as usize));
        }
        Ok(QuantizationResult { quantized, indices, residual_norms })
    }

    #[inline]
    fn nearest_code(&self, head: usize, segment: ArrayView1<F>) -> (u32, F) {
        let sub = self.codes.index_axis(Axis(0), head);
        let mut best = 0u32;
        let mut best_d2 = F::infinity();
        for (r, code) in sub.outer_iter().enumerate() {
            let mut d2 = F::zero();
            for (a, b) in segment.iter().zip(code.iter()) {
                let d = *a - *b;
                d2 = d2 + d * d;
            }
            if d2 < best_d2 {
                best_d2 = d2;
                best = r as u32;
            }
        }
        (best, best_d2)
    }

    /// Quantizes every row of `embeddings` (batch, D).
    pub fn quantize_batch(&self, embeddings: ArrayView2<F>) -> Result<QuantizationBatch<F>> {
        let (h, dim) = (self.heads(), self.segment_width());
        let b = embeddings.nrows();
        if embeddings.ncols() != h * dim {
            return Err(NvfError::invalid(format!(
                "embedding width {} does not match codebook width {}",
                embeddings.ncols(),
                h * dim
            )));
        }
        let mut quantized = Array2::zeros((b, h * dim));
        let mut indices = Array2::zeros((b, h));
        for (row, z) in embeddings.outer_iter().enumerate() {
            for head in 0..h {
                let segment = z.slice(ndarray::s![head * dim..(head + 1) * dim]);
                let (best, _) = self.nearest_code(head, segment);
                indices[[row, head]] = best;
                quantized
                    .slice_mut(ndarray::s![row, head * dim..(head + 1) * dim])
                    .assign(&self.codes.index_axis(Axis(0), head).row(best as usize));
            }
        }
        Ok(QuantizationBatch { quantized, indices })
    }

    /// EMA update from one batch of embeddings and their selected indices.
    ///
    /// Per selected code: count and running sum decay by `gamma` toward the
    /// batch statistics, and the code becomes `sum / max(count, 1e-5)`.
    /// Unselected codes are untouched (their dead-batch counters advance).
    pub fn ema_update(&mut self, embeddings: ArrayView2<F>, indices: &Array2<u32>) -> Result<()> {
        let (h, dim) = (self.heads(), self.segment_width());
        let b = embeddings.nrows();
        if indices.nrows() != b || indices.ncols() != h || embeddings.ncols() != h * dim {
            return Err(NvfError::invalid("ema_update batch shapes disagree"));
        }
        let gamma = F::c(self.gamma);
        let one_m_gamma = F::one() - gamma;
        let eps = F::c(EMA_COUNT_EPS);

        for head in 0..h {
            let mut n_selected = vec![0u64; self.code_count()];
            let mut batch_sum = Array2::<F>::zeros((self.code_count(), dim));
            for row in 0..b {
                let r = indices[[row, head]] as usize;
                n_selected[r] += 1;
                let segment = embeddings.slice(ndarray::s![row, head * dim..(head + 1) * dim]);
                let mut acc = batch_sum.row_mut(r);
                acc += &segment;
            }
            for r in 0..self.code_count() {
                if n_selected[r] == 0 {
                    self.unused_batches[[head, r]] = self.unused_batches[[head, r]].saturating_add(1);
                    continue;
                }
                self.unused_batches[[head, r]] = 0;
                let count = self.ema_counts[[head, r]] * gamma
                    + one_m_gamma * F::c(n_selected[r] as f64);
                self.ema_counts[[head, r]] = count;
                let denom = if count > eps { count } else { eps };
                for j in 0..dim {
                    let s = self.ema_sums[[head, r, j]] * gamma + one_m_gamma * batch_sum[[r, j]];
                    self.ema_sums[[head, r, j]] = s;
                    self.codes[[head, r, j]] = s / denom;
                }
            }
        }
        Ok(())
    }

    /// Re-seeds codes that went unselected for [`DEAD_CODE_BATCHES`]
    /// consecutive updates to random segments of `recent` embeddings.
    /// Returns the number of revived codes.
    pub fn revive_dead_codes(
        &mut self,
        recent: ArrayView2<F>,
        rng: &mut ChaCha8Rng,
    ) -> Result<usize> {
        let (h, dim) = (self.heads(), self.segment_width());
        if recent.ncols() != h * dim || recent.nrows() == 0 {
            return Err(NvfError::invalid("revival pool shape mismatch"));
        }
        let mut revived = 0;
        for head in 0..h {
            for r in 0..self.code_count() {
                if self.unused_batches[[head, r]] < DEAD_CODE_BATCHES {
                    continue;
                }
                let row = rng.random_range(0..recent.nrows());
                let segment = recent.slice(ndarray::s![row, head * dim..(head + 1) * dim]);
                for j in 0..dim {
                    self.codes[[head, r, j]] = segment[j];
                    self.ema_sums[[head, r, j]] = segment[j];
                }
                self.ema_counts[[head, r]] = F::one();
                self.unused_batches[[head, r]] = 0;
                revived += 1;
            }
        }
        Ok(revived)
    }

    /// Casts the codebook to another scalar type (f32 checkpoints to f64
    /// oracles and back).
    pub fn cast<G: Real>(&self) -> MultiHeadCodebook<G> {
        MultiHeadCodebook {
            codes: self.codes.mapv(|v| G::c(v.as_f64())),
            ema_counts: self.ema_counts.mapv(|v| G::c(v.as_f64())),
            ema_sums: self.ema_sums.mapv(|v| G::c(v.as_f64())),
            gamma: self.gamma,
            beta: self.beta,
            unused_batches: self.unused_batches.clone(),
        }
    }
}

/// Sum over heads of the squared residual between the embedding and its
/// selected codes. Under the stop-gradient convention this term contributes
/// gradients only to the continuous embedding, never to the codes.
pub fn commitment_loss<F: Real>(
    embedding: ArrayView1<F>,
    result: &QuantizationResult<F>,
) -> F {
    let mut total = F::zero();
    for (a, b) in embedding.iter().zip(result.quantized.iter()) {
        let d = *a - *b;
        total = total + d * d;
    }
    total
}

/// Usage histogram and perplexity over one batch of assignments (batch,
/// heads).
pub fn codebook_stats<F: Real>(
    book: &MultiHeadCodebook<F>,
    assignments: &Array2<u32>,
) -> CodebookStats {
    let h = book.heads();
    let r = book.code_count();
    let mut histogram = vec![vec![0u64; r]; h];
    for row in assignments.outer_iter() {
        for (head, &code) in row.iter().enumerate() {
            histogram[head][code as usize] += 1;
        }
    }
    let perplexity = histogram
        .iter()
        .map(|counts| {
            let total: u64 = counts.iter().sum();
            if total == 0 {
                return 1.0;
            }
            let mut entropy = 0.0;
            for &c in counts {
                if c > 0 {
                    let p = c as f64 / total as f64;
                    entropy -= p * p.ln();
                }
            }
            entropy.exp()
        })
        .collect();
    CodebookStats { histogram, perplexity }
}
