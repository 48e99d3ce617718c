use crate::model::TransBiLstm;
use crate::nn::param::{named, tensors_mut, zeros_like};

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: TransBiLstm,
    v: TransBiLstm,
}

impl Adam {
    pub fn new(model: &TransBiLstm, learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros_like(model),
            v: zeros_like(model),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, model: &mut TransBiLstm, grad: &TransBiLstm) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);
        let grads = named(grad);
        let params = tensors_mut(model);
        let ms = tensors_mut(&mut self.m);
        let vs = tensors_mut(&mut self.v);
        for (((p, (_, g)), m), v) in params.into_iter().zip(grads).zip(ms).zip(vs) {
            let p = p.data_mut();
            let (m, v) = (m.data_mut(), v.data_mut());
            for (i, &gi) in g.data().iter().enumerate() {
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}
