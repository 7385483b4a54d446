use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Adam moment estimates for gradient ascent on a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam<T> {
    pub step_size: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    first: Vec<T>,
    second: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(len: usize, step_size: T) -> Self {
        Self {
            step_size,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            first: vec![T::zero(); len],
            second: vec![T::zero(); len],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.t as usize
    }

    /// Moves `theta` uphill along `grad`.
    pub fn ascend(&mut self, theta: &mut [T], grad: &[T]) {
        assert_eq!(theta.len(), self.first.len());
        assert_eq!(grad.len(), self.first.len());
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        for i in 0..theta.len() {
            let g = grad[i];
            self.first[i] = self.beta1 * self.first[i] + (one - self.beta1) * g;
            self.second[i] = self.beta2 * self.second[i] + (one - self.beta2) * g * g;
            let m_hat = self.first[i] / c1;
            let v_hat = self.second[i] / c2;
            theta[i] += self.step_size * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
