//! Adam with decoupled weight decay, and a step learning-rate schedule.

use crate::element::Element;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct AdamW<T: Element = f32> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Element> AdamW<T> {
    pub fn new(weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of every parameter that carries a gradient. Parameters
    /// without a gradient buffer are left untouched (decay included).
    pub fn step(&mut self, params: &mut [Tensor<T>], lr: f64) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter set changed between steps");
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Some(g) = p.grad().map(<[T]>::to_vec) else {
                continue;
            };
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                let gj = g[j].f64();
                let mj = self.beta1 * m[j].f64() + (1.0 - self.beta1) * gj;
                let vj = self.beta2 * v[j].f64() + (1.0 - self.beta2) * gj * gj;
                m[j] = T::lit(mj);
                v[j] = T::lit(vj);
                let mut x = w.f64();
                x -= lr * self.weight_decay * x;
                x -= lr * (mj / bc1) / ((vj / bc2).sqrt() + self.eps);
                *w = T::lit(x);
            }
        }
    }
}

/// `lr(e) = lr0 · gamma^floor(e / step_size)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLr {
    pub base_lr: f64,
    pub step_size: usize,
    pub gamma: f64,
}

impl StepLr {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.base_lr * self.gamma.powi((epoch / self.step_size) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_schedule_values() {
        let s = StepLr {
            base_lr: 1e-4,
            step_size: 50,
            gamma: 0.9,
        };
        assert_eq!(s.lr_at(0), 1e-4);
        assert_eq!(s.lr_at(49), 1e-4);
        assert!((s.lr_at(50) - 9e-5).abs() < 1e-18);
        assert!((s.lr_at(100) - 8.1e-5).abs() < 1e-18);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut p = Tensor::<f64>::new(&[2], vec![1.0, -1.0]).unwrap().with_grad();
        p.accumulate_grad(&[0.5, -2.0]);
        let mut opt = AdamW::new(0.0);
        opt.step(std::slice::from_mut(&mut p), 0.1);
        // bias-corrected first step is lr·sign(g) up to eps
        assert!((p.data()[0] - 0.9).abs() < 1e-6);
        assert!((p.data()[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn decay_is_decoupled_from_gradient_scale() {
        let mut p = Tensor::<f64>::new(&[1], vec![2.0]).unwrap().with_grad();
        p.accumulate_grad(&[0.0]);
        let mut opt = AdamW::new(0.5);
        opt.step(std::slice::from_mut(&mut p), 0.1);
        assert!((p.data()[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-12);
    }
}
