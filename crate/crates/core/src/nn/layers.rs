use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;

use super::{join, Module, Param};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
}

impl Linear {
    pub fn new(input: usize, output: usize, rng: &mut Rng) -> Self {
        Linear {
            w: Param::normal(input, output, (1.0 / input as f64).sqrt(), rng),
            b: Param::zeros(1, output),
        }
    }

    pub fn zeroed(input: usize, output: usize) -> Self {
        Linear {
            w: Param::zeros(input, output),
            b: Param::zeros(1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.value.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.value.ncols()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.value) + &self.b.value
    }

    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        self.w.grad += &x.t().dot(dy);
        self.b.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&self.w.value.t())
    }
}

impl Module for Linear {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        f(join(prefix, "weight"), &self.w);
        f(join(prefix, "bias"), &self.b);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "weight"), &mut self.w);
        f(join(prefix, "bias"), &mut self.b);
    }
}

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Param,
    pub beta: Param,
}

#[derive(Debug, Clone)]
pub struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Param::filled(1, dim, 1.0),
            beta: Param::zeros(1, dim),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LnCache) {
        let n = x.ncols() as f64;
        let mean = x.sum_axis(Axis(1)) / n;
        let centered = x - &mean.view().insert_axis(Axis(1));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
        let xhat = centered * &inv_std.view().insert_axis(Axis(1));
        let y = &xhat * &self.gamma.value + &self.beta.value;
        (y, LnCache { xhat, inv_std })
    }

    pub fn backward(&mut self, cache: &LnCache, dy: &Array2<f64>) -> Array2<f64> {
        let LnCache { xhat, inv_std } = cache;
        self.gamma.grad += &(dy * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.beta.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dxhat = dy * &self.gamma.value;
        let n = dy.ncols() as f64;
        let sum_d = dxhat.sum_axis(Axis(1)).insert_axis(Axis(1));
        let sum_dx = (&dxhat * xhat).sum_axis(Axis(1)).insert_axis(Axis(1));
        let mut dx = dxhat * n - &sum_d - &(xhat * &sum_dx);
        dx *= &(inv_std / n).insert_axis(Axis(1));
        dx
    }
}

impl Module for LayerNorm {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        f(join(prefix, "gamma"), &self.gamma);
        f(join(prefix, "beta"), &self.beta);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "gamma"), &mut self.gamma);
        f(join(prefix, "beta"), &mut self.beta);
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh approximation of GELU.
pub fn gelu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| 0.5 * v * (1.0 + (GELU_C * (v + 0.044715 * v * v * v)).tanh()))
}

pub fn gelu_backward(x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut out = dy.clone();
    ndarray::Zip::from(&mut out).and(x).for_each(|d, &v| {
        let t = (GELU_C * (v + 0.044715 * v * v * v)).tanh();
        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * v * v);
        *d *= 0.5 * (1.0 + t) + 0.5 * v * dt;
    });
    out
}

/// Inverted dropout; `None` mask means the layer was inactive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout(pub f64);

impl Dropout {
    pub fn forward(&self, x: Array2<f64>, rng: Option<&mut Rng>) -> (Array2<f64>, Option<Array2<f64>>) {
        match rng {
            Some(rng) if self.0 > 0.0 => {
                let keep = 1.0 - self.0;
                let mask = Array2::from_shape_fn(x.raw_dim(), |_| {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                (x * &mask, Some(mask))
            }
            _ => (x, None),
        }
    }

    pub fn backward(mask: &Option<Array2<f64>>, dy: Array2<f64>) -> Array2<f64> {
        match mask {
            Some(m) => dy * m,
            None => dy,
        }
    }
}
