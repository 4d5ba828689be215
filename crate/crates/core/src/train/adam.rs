//! Adam optimizer over the model's parameter list.

use ndarray::ArrayD;

use crate::numeric::Real;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second-moment state, one slot per parameter tensor in visit order.
#[derive(Debug, Clone)]
pub struct Adam<F: Real> {
    m: Vec<ArrayD<F>>,
    v: Vec<ArrayD<F>>,
    t: u64,
}

impl<F: Real> Adam<F> {
    pub fn new() -> Self {
        Adam { m: Vec::new(), v: Vec::new(), t: 0 }
    }

    /// One update with bias correction. `params` and `grads` must arrive in
    /// the same fixed order every step.
    pub fn step(
        &mut self,
        params: Vec<(&'static str, ndarray::ArrayViewMutD<'_, F>)>,
        grads: Vec<(&'static str, ndarray::ArrayViewD<'_, F>)>,
        lr: f64,
    ) {
        if self.m.is_empty() {
            for (_, g) in &grads {
                self.m.push(ArrayD::zeros(g.raw_dim()));
                self.v.push(ArrayD::zeros(g.raw_dim()));
            }
        }
        self.t += 1;
        let b1 = F::c(ADAM_BETA1);
        let b2 = F::c(ADAM_BETA2);
        let one = F::one();
        let bc1 = F::c(1.0 - ADAM_BETA1.powi(self.t as i32));
        let bc2 = F::c(1.0 - ADAM_BETA2.powi(self.t as i32));
        let eps = F::c(ADAM_EPS);
        let lr = F::c(lr);

        for (slot, ((_, mut p), (_, g))) in params.into_iter().zip(grads).enumerate() {
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            ndarray::Zip::from(&mut *m).and(&g).for_each(|m, &g| {
                *m = b1 * *m + (one - b1) * g;
            });
            ndarray::Zip::from(&mut *v).and(&g).for_each(|v, &g| {
                *v = b2 * *v + (one - b2) * g * g;
            });
            ndarray::Zip::from(&mut p).and(&*m).and(&*v).for_each(|p, &m, &v| {
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

impl<F: Real> Default for Adam<F> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};

    fn run_step(p: &mut ArrayD<f64>, g: &ArrayD<f64>, adam: &mut Adam<f64>, lr: f64) {
        adam.step(
            vec![("p", p.view_mut())],
            vec![("p", g.view())],
            lr,
        );
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = ArrayD::from_elem(IxDyn(&[3]), 1.5);
        let g = ArrayD::zeros(IxDyn(&[3]));
        let mut adam = Adam::new();
        for _ in 0..10 {
            run_step(&mut p, &g, &mut adam, 0.1);
        }
        assert!(p.iter().all(|&v| v == 1.5));
    }

    #[test]
    fn first_step_moves_against_gradient_sign() {
        let mut p = ArrayD::zeros(IxDyn(&[4]));
        let mut g = ArrayD::zeros(IxDyn(&[4]));
        g[[0]] = 0.3;
        g[[1]] = -2.0;
        g[[2]] = 1e-4;
        g[[3]] = -5.0e-3;
        let mut adam = Adam::new();
        run_step(&mut p, &g, &mut adam, 0.01);
        for i in 0..4 {
            assert!(p[[i]] * g[[i]] < 0.0, "update direction must oppose the gradient");
        }
    }

    #[test]
    fn quadratic_converges_to_minimum() {
        // f(x, y) = (x - 1.2)^2 + 4 (y + 0.7)^2
        let mut p = ArrayD::zeros(IxDyn(&[2]));
        let mut adam = Adam::new();
        for _ in 0..1500 {
            let mut g = ArrayD::zeros(IxDyn(&[2]));
            g[[0]] = 2.0 * (p[[0]] - 1.2);
            g[[1]] = 8.0 * (p[[1]] + 0.7);
            run_step(&mut p, &g, &mut adam, 0.05);
        }
        assert!((p[[0]] - 1.2).abs() < 1e-3, "x = {}", p[[0]]);
        assert!((p[[1]] + 0.7).abs() < 1e-3, "y = {}", p[[1]]);
    }
}
