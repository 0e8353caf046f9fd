//! Adam over a flat parameter vector.

use crate::Scalar;

#[derive(Clone, Debug)]
pub struct Adam<T> {
    learning_rate: T,
    beta1: T,
    beta2: T,
    epsilon: T,
    step: i32,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> Adam<T> {
    /// β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(num_params: usize, learning_rate: T) -> Self {
        Self::with_betas(
            num_params,
            learning_rate,
            T::from_f64_lossy(0.9),
            T::from_f64_lossy(0.999),
            T::from_f64_lossy(1e-8),
        )
    }

    pub fn with_betas(num_params: usize, learning_rate: T, beta1: T, beta2: T, epsilon: T) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: vec![T::zero(); num_params],
            v: vec![T::zero(); num_params],
        }
    }

    /// One bias-corrected update of `params` against `grads`.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let one = T::one();
        let correction1 = one - self.beta1.powi(self.step);
        let correction2 = one - self.beta2.powi(self.step);
        let lr = self.learning_rate;
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (one - self.beta1) * g;
            *v = self.beta2 * *v + (one - self.beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }
}
