use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{gelu, gelu_backward, join, Linear, Module, Param};
use crate::rng::rng_from_seed;

pub const N_CLASSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Relu,
}

impl Activation {
    fn forward(self, x: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Gelu => gelu(x),
            Activation::Relu => x.mapv(|v| v.max(0.0)),
        }
    }

    fn backward(self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Gelu => gelu_backward(x, dy),
            Activation::Relu => dy * &x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub input_dim: usize,
    pub hidden_dims: (usize, usize),
    pub n_classes: usize,
    pub activation: Activation,
}

impl HeadSpec {
    /// Both hidden widths equal to the input width.
    pub fn matching(input_dim: usize) -> Self {
        HeadSpec {
            input_dim,
            hidden_dims: (input_dim, input_dim),
            n_classes: N_CLASSES,
            activation: Activation::Gelu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes != N_CLASSES {
            return Err(Error::validation(format!("head must have {N_CLASSES} classes, got {}", self.n_classes)));
        }
        if self.input_dim == 0 || self.hidden_dims.0 == 0 || self.hidden_dims.1 == 0 {
            return Err(Error::validation("head dimensions must be positive"));
        }
        Ok(())
    }
}

/// Two fully connected layers and a final linear layer producing class
/// logits; softmax is applied by the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub spec: HeadSpec,
    pub l1: Linear,
    pub l2: Linear,
    pub l3: Linear,
}

pub struct HeadCache {
    x: Array2<f64>,
    a1: Array2<f64>,
    h1: Array2<f64>,
    a2: Array2<f64>,
    h2: Array2<f64>,
}

impl ClassifierHead {
    pub fn new(spec: &HeadSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_from_seed(seed);
        let (d1, d2) = spec.hidden_dims;
        Ok(ClassifierHead {
            spec: spec.clone(),
            l1: Linear::new(spec.input_dim, d1, &mut rng),
            l2: Linear::new(d1, d2, &mut rng),
            l3: Linear::new(d2, spec.n_classes, &mut rng),
        })
    }

    pub fn zeroed(spec: &HeadSpec) -> Result<Self> {
        spec.validate()?;
        let (d1, d2) = spec.hidden_dims;
        Ok(ClassifierHead {
            spec: spec.clone(),
            l1: Linear::zeroed(spec.input_dim, d1),
            l2: Linear::zeroed(d1, d2),
            l3: Linear::zeroed(d2, spec.n_classes),
        })
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, HeadCache) {
        let act = self.spec.activation;
        let a1 = self.l1.forward(x);
        let h1 = act.forward(&a1);
        let a2 = self.l2.forward(&h1);
        let h2 = act.forward(&a2);
        let logits = self.l3.forward(&h2);
        (
            logits,
            HeadCache {
                x: x.clone(),
                a1,
                h1,
                a2,
                h2,
            },
        )
    }

    pub fn backward(&mut self, cache: &HeadCache, dlogits: &Array2<f64>) -> Array2<f64> {
        let act = self.spec.activation;
        let dh2 = self.l3.backward(&cache.h2, dlogits);
        let da2 = act.backward(&cache.a2, &dh2);
        let dh1 = self.l2.backward(&cache.h1, &da2);
        let da1 = act.backward(&cache.a1, &dh1);
        self.l1.backward(&cache.x, &da1)
    }
}

impl Module for ClassifierHead {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.l1.visit(&join(prefix, "fc1"), f);
        self.l2.visit(&join(prefix, "fc2"), f);
        self.l3.visit(&join(prefix, "out"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.l1.visit_mut(&join(prefix, "fc1"), f);
        self.l2.visit_mut(&join(prefix, "fc2"), f);
        self.l3.visit_mut(&join(prefix, "out"), f);
    }
}
