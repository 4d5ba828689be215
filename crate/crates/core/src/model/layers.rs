//! Dense layers with hand-derived backward passes.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numeric::Real;

/// Fully connected layer. Weights are stored `(out, in)`, inputs arrive as
/// `(batch, in)` rows.
#[derive(Debug, Clone)]
pub struct Linear<F: Real> {
    pub w: Array2<F>,
    pub b: Array1<F>,
}

/// Gradient accumulator matching a [`Linear`].
#[derive(Debug, Clone)]
pub struct LinearGrads<F: Real> {
    pub w: Array2<F>,
    pub b: Array1<F>,
}

impl<F: Real> Linear<F> {
    /// Kaiming-normal initialization for leaky-ReLU networks.
    pub fn init(out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let sigma = (2.0 / in_dim as f64).sqrt();
        let w = Array2::from_shape_simple_fn((out_dim, in_dim), || {
            let v: f64 = rng.sample(StandardNormal);
            F::c(v * sigma)
        });
        Linear { w, b: Array1::zeros(out_dim) }
    }

    pub fn zeros_like(&self) -> LinearGrads<F> {
        LinearGrads { w: Array2::zeros(self.w.raw_dim()), b: Array1::zeros(self.b.raw_dim()) }
    }

    /// `x (batch, in) -> (batch, out)` pre-activation.
    pub fn forward(&self, x: &Array2<F>) -> Array2<F> {
        let mut y = x.dot(&self.w.t());
        y += &self.b;
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(
        &self,
        x: &Array2<F>,
        dy: &Array2<F>,
        grads: &mut LinearGrads<F>,
    ) -> Array2<F> {
        grads.w += &dy.t().dot(x);
        grads.b += &dy.sum_axis(ndarray::Axis(0));
        dy.dot(&self.w)
    }

    pub fn cast<G: Real>(&self) -> Linear<G> {
        Linear {
            w: self.w.mapv(|v| G::c(v.as_f64())),
            b: self.b.mapv(|v| G::c(v.as_f64())),
        }
    }
}

/// In-place leaky ReLU on a pre-activation matrix.
pub fn leaky_relu<F: Real>(x: &Array2<F>, slope: F) -> Array2<F> {
    x.mapv(|v| if v > F::zero() { v } else { v * slope })
}

/// Multiplies `dy` by the leaky-ReLU derivative taken at pre-activation `pre`.
pub fn leaky_relu_backward<F: Real>(pre: &Array2<F>, dy: &Array2<F>, slope: F) -> Array2<F> {
    let mut out = dy.clone();
    out.zip_mut_with(pre, |d, &p| {
        if p <= F::zero() {
            *d = *d * slope;
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn forward_matches_manual_matvec() {
        let layer = Linear::<f64> {
            w: array![[1.0, 2.0], [0.5, -1.0], [0.0, 3.0]],
            b: array![0.1, -0.2, 0.0],
        };
        let x = array![[2.0, 1.0]];
        let y = layer.forward(&x);
        assert_eq!(y, array![[4.1, -0.2, 3.0]]);
    }

    #[test]
    fn backward_shapes_and_values() {
        let layer = Linear::<f64> { w: array![[1.0, 2.0], [3.0, 4.0]], b: array![0.0, 0.0] };
        let x = array![[1.0, -1.0], [0.5, 2.0]];
        let dy = array![[1.0, 0.0], [0.0, 1.0]];
        let mut grads = layer.zeros_like();
        let dx = layer.backward(&x, &dy, &mut grads);
        // dW = dy^T x
        assert_eq!(grads.w, array![[1.0, -1.0], [0.5, 2.0]]);
        assert_eq!(grads.b, array![1.0, 1.0]);
        // dx = dy W
        assert_eq!(dx, array![[1.0, 2.0], [3.0, 4.0]]);
    }

    #[test]
    fn leaky_relu_round_trip() {
        let pre = array![[1.0, -2.0], [0.0, 3.0]];
        let act = leaky_relu(&pre, 0.01);
        assert_eq!(act, array![[1.0, -0.02], [0.0, 3.0]]);
        let dy = array![[1.0, 1.0], [1.0, 1.0]];
        let dx = leaky_relu_backward(&pre, &dy, 0.01);
        assert_eq!(dx, array![[1.0, 0.01], [0.01, 1.0]]);
    }

    #[test]
    fn init_is_deterministic() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let la = Linear::<f32>::init(8, 4, &mut a);
        let lb = Linear::<f32>::init(8, 4, &mut b);
        assert_eq!(la.w, lb.w);
    }
}
