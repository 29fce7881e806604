//! Minimal dense network toolkit on `ndarray` with hand-written backward
//! passes. Activations are row-major `(tokens, features)` matrices; every
//! layer's `backward` accumulates into its parameters' `grad` and returns the
//! gradient with respect to its input.

mod layers;
mod optim;
mod tensorfile;
mod transformer;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;

pub use layers::{gelu, gelu_backward, Dropout, LayerNorm, LnCache, Linear};
pub use optim::Adam;
pub use tensorfile::{load_module, read_tensors, save_module, write_tensors};
pub use transformer::{AttnCache, LayerCache, MultiHeadAttention, TransformerLayer};

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

impl Param {
    pub fn new(value: Array2<f64>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Param { value, grad }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Param::new(Array2::zeros((rows, cols)))
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Param::new(Array2::from_elem((rows, cols), v))
    }

    /// Gaussian init, rounded to `f32` so checkpoints store weights exactly.
    pub fn normal(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Self {
        Param::new(Array2::from_shape_fn((rows, cols), |_| {
            let z: f64 = rng.sample(StandardNormal);
            (z * std) as f32 as f64
        }))
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Named parameter traversal in a fixed order.
pub trait Module {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param));

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, p| p.grad.fill(0.0));
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| n += p.value.len());
        n
    }

    fn grad_norm(&self) -> f64 {
        let mut s = 0.0;
        self.visit("", &mut |_, p| s += p.grad.iter().map(|g| g * g).sum::<f64>());
        s.sqrt()
    }

    fn scale_grads(&mut self, factor: f64) {
        self.visit_mut("", &mut |_, p| p.grad *= factor);
    }

    /// Flattened copy of all values, for bitwise comparisons.
    fn flat_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit("", &mut |_, p| out.extend(p.value.iter().copied()));
        out
    }
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// `-ln p`, floored at the smallest positive `f64` but letting NaN through
/// so divergence is not masked.
pub fn neg_log_prob(p: f64) -> f64 {
    if p.is_nan() {
        p
    } else {
        -p.max(f64::MIN_POSITIVE).ln()
    }
}

/// Mean cross-entropy of row-wise softmax against integer targets, with the
/// gradient w.r.t. the logits (already divided by the row count).
pub fn softmax_cross_entropy(logits: &Array2<f64>, targets: &[usize]) -> (f64, Array2<f64>) {
    assert_eq!(logits.nrows(), targets.len());
    let n = targets.len() as f64;
    let mut probs = softmax_rows(logits);
    let mut loss = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        loss += neg_log_prob(probs[[i, t]]);
        probs[[i, t]] -= 1.0;
    }
    probs /= n;
    (loss / n, probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let logits = Array2::zeros((2, 5));
        let (loss, grad) = softmax_cross_entropy(&logits, &[0, 3]);
        assert!((loss - 5f64.ln()).abs() < 1e-12);
        assert!((grad.sum()).abs() < 1e-12);
        assert!((grad[[0, 0]] - (0.2 - 1.0) / 2.0).abs() < 1e-12);
    }
}
