//! Adam with bias correction.

use crate::tensor::Tensor;

/// Per-parameter first/second moment buffers plus a shared step counter.
#[derive(Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    moments: Vec<Moment>,
}

#[derive(Debug)]
struct Moment {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(params: &[Tensor], lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            moments: params
                .iter()
                .map(|p| Moment {
                    m: vec![0.0; p.len()],
                    v: vec![0.0; p.len()],
                })
                .collect(),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update from the gradients currently stored on `params`.
    /// `params` must be the same tensors, in the same order, as at
    /// construction.
    pub fn step(&mut self, params: &[Tensor]) {
        assert_eq!(params.len(), self.moments.len(), "parameter set changed");
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (p, slot) in params.iter().zip(self.moments.iter_mut()) {
            let grad = p.grad().expect("trainable parameter carries a gradient");
            let mut values = p.to_vec();
            for i in 0..values.len() {
                let g = grad[i];
                slot.m[i] = self.beta1 * slot.m[i] + (1.0 - self.beta1) * g;
                slot.v[i] = self.beta2 * slot.v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = slot.m[i] / bc1;
                let v_hat = slot.v[i] / bc2;
                values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            p.set_values(&values);
        }
    }
}
