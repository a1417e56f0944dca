use serde::{Deserialize, Serialize};

use super::{Real, Tensor};

/// Adaptive-moment optimizer hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, one slot per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn for_params(params: &[Tensor<T>]) -> Self {
        Self {
            m: params
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect(),
            v: params
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect(),
            step: 0,
        }
    }
}

impl Adam {
    /// Applies one bias-corrected update in place and bumps the step counter.
    ///
    /// # Panics
    /// If `params`, `grads` and the state slots disagree in count or shape.
    pub fn step<T: Real>(
        &self,
        params: &mut [Tensor<T>],
        grads: &[Tensor<T>],
        state: &mut AdamState<T>,
        lr: f64,
    ) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        assert_eq!(params.len(), state.m.len(), "one state slot per parameter");
        state.step += 1;
        let t = state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - self.beta1), T::of(1.0 - self.beta2));
        let step_size = T::of(lr / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(self.eps);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(p.shape(), g.shape(), "gradient shape for parameter {i}");
            let m = state.m[i].data_mut();
            let v = state.v[i].data_mut();
            for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = b1 * m[j] + one_b1 * gj;
                v[j] = b2 * v[j] + one_b2 * gj * gj;
                let denom = (v[j] * inv_bc2).sqrt() + eps;
                *w -= step_size * m[j] / denom;
            }
        }
    }
}

/// Piecewise-constant learning rate: `base` until `decay_at` steps have been
/// taken, then `base * factor`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrSchedule {
    pub base: f64,
    pub decay_at: u64,
    pub factor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base: 1e-3,
            decay_at: u64::MAX,
            factor: 0.1,
        }
    }
}

impl LrSchedule {
    pub fn constant(base: f64) -> Self {
        Self {
            base,
            decay_at: u64::MAX,
            factor: 1.0,
        }
    }

    /// Rate for the update that follows `steps_taken` completed updates.
    pub fn at(&self, steps_taken: u64) -> f64 {
        if steps_taken < self.decay_at {
            self.base
        } else {
            self.base * self.factor
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_run(lr: f64, steps: usize) -> f64 {
        let adam = Adam::default();
        let mut w = vec![Tensor::<f64>::scalar(0.0)];
        let mut state = AdamState::for_params(&w);
        for _ in 0..steps {
            let g = Tensor::scalar(2.0 * (w[0].item() - 3.0));
            adam.step(&mut w, &[g], &mut state, lr);
        }
        w[0].item()
    }

    /// The textbook scalar recurrence, written out independently.
    fn reference_run(lr: f64, steps: usize) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut w, mut m, mut v) = (0.0f64, 0.0, 0.0);
        for t in 1..=steps {
            let g = 2.0 * (w - 3.0);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - b1.powi(t as i32));
            let vhat = v / (1.0 - b2.powi(t as i32));
            w -= lr * mhat / (vhat.sqrt() + eps);
        }
        w
    }

    #[test]
    fn zero_lr_leaves_params() {
        assert_eq!(quadratic_run(0.0, 10), 0.0);
    }

    #[test]
    fn zero_grad_leaves_params() {
        let adam = Adam::default();
        let mut w = vec![Tensor::<f64>::from_f64([3], &[1.0, -2.0, 0.5]).unwrap()];
        let before = w.clone();
        let mut state = AdamState::for_params(&w);
        for _ in 0..5 {
            adam.step(&mut w, &[Tensor::zeros([3])], &mut state, 0.1);
        }
        assert_eq!(w, before);
        assert_eq!(state.step, 5);
    }

    #[test]
    fn quadratic_converges_in_200_steps() {
        let reference = reference_run(0.1, 200);
        assert!(
            (reference - 3.0).abs() <= 1e-2,
            "reference reached {reference}"
        );
        let w = quadratic_run(0.1, 200);
        assert!((w - reference).abs() < 1e-12);
        assert!((w - 3.0).abs() <= 1e-2);
    }

    #[test]
    fn schedule_decays_once() {
        let s = LrSchedule {
            base: 1e-3,
            decay_at: 12,
            factor: 0.1,
        };
        assert_eq!(s.at(11), 1e-3);
        assert!((s.at(12) - 1e-4).abs() < 1e-18);
    }
}
