use std::collections::HashMap;

use ndarray::{Array2, Zip};

use super::Module;

/// Adam with a constant learning rate. Parameters whose name matches
/// `frozen` are left untouched. Updated weights are rounded to `f32` so a
/// model can always be saved and reloaded exactly.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    state: HashMap<String, (Array2<f64>, Array2<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            state: HashMap::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, model: &mut impl Module) {
        self.step_filtered(model, |_| true);
    }

    pub fn step_filtered(&mut self, model: &mut impl Module, trainable: impl Fn(&str) -> bool) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = self.lr;
        let state = &mut self.state;
        model.visit_mut("", &mut |name, p| {
            if !trainable(&name) {
                return;
            }
            let (m, v) = state
                .entry(name)
                .or_insert_with(|| (Array2::zeros(p.value.raw_dim()), Array2::zeros(p.value.raw_dim())));
            Zip::from(&mut p.value)
                .and(&p.grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let update = lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    *w = (*w - update) as f32 as f64;
                });
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;

    #[test]
    fn first_step_moves_each_weight_by_lr() {
        let mut lin = Linear::zeroed(2, 1);
        lin.w.grad = ndarray::array![[0.5], [-2.0]];
        lin.b.grad = ndarray::array![[0.0]];
        let mut opt = Adam::new(0.01);
        opt.step(&mut lin);
        assert!((lin.w.value[[0, 0]] + 0.01).abs() < 1e-6);
        assert!((lin.w.value[[1, 0]] - 0.01).abs() < 1e-6);
        assert_eq!(lin.b.value[[0, 0]], 0.0);
    }
}
