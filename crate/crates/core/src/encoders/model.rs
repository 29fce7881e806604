use ndarray::{Array2, Axis};

use crate::nn::{gelu, gelu_backward, join, Dropout, LayerCache, LayerNorm, LnCache, Linear, Module, Param, TransformerLayer};
use crate::rng::{rng_from_seed, Rng};

use super::EncoderSpec;

/// Token + position embeddings, embedding LayerNorm, then a stack of
/// post-norm transformer layers. The pooled vector is the first state.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerEncoder {
    pub spec: EncoderSpec,
    pub tok_emb: Param,
    pub pos_emb: Param,
    pub emb_ln: LayerNorm,
    pub layers: Vec<TransformerLayer>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    ids: Vec<u32>,
    emb_ln: LnCache,
    emb_drop: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
}

impl EncoderCache {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl TransformerEncoder {
    pub fn new(spec: &EncoderSpec, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let h = spec.hidden_size;
        TransformerEncoder {
            spec: spec.clone(),
            tok_emb: Param::normal(spec.vocab_size, h, 0.02, &mut rng),
            pos_emb: Param::normal(spec.max_positions, h, 0.02, &mut rng),
            emb_ln: LayerNorm::new(h),
            layers: (0..spec.n_layers)
                .map(|_| TransformerLayer::new(h, spec.n_heads, spec.ff_size, spec.dropout, &mut rng))
                .collect(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.spec.hidden_size
    }

    /// Hidden states for `ids`; dropout is active only when `rng` is given.
    pub fn forward(&self, ids: &[u32], mut rng: Option<&mut Rng>) -> (Array2<f64>, EncoderCache) {
        let h = self.spec.hidden_size;
        let mut x = Array2::zeros((ids.len(), h));
        for (i, &id) in ids.iter().enumerate() {
            let mut row = x.row_mut(i);
            row += &self.tok_emb.value.row(id as usize);
            row += &self.pos_emb.value.row(i);
        }
        let (x, emb_ln) = self.emb_ln.forward(&x);
        let drop = Dropout(self.spec.dropout);
        let (mut x, emb_drop) = drop.forward(x, rng.as_deref_mut());
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward(&x, rng.as_deref_mut());
            caches.push(c);
            x = y;
        }
        (
            x,
            EncoderCache {
                ids: ids.to_vec(),
                emb_ln,
                emb_drop,
                layers: caches,
            },
        )
    }

    pub fn backward(&mut self, cache: &EncoderCache, dstates: &Array2<f64>) {
        let mut d = dstates.clone();
        for (layer, c) in self.layers.iter_mut().zip(&cache.layers).rev() {
            d = layer.backward(c, &d);
        }
        let d = Dropout::backward(&cache.emb_drop, d);
        let dx = self.emb_ln.backward(&cache.emb_ln, &d);
        for (i, &id) in cache.ids.iter().enumerate() {
            let mut t = self.tok_emb.grad.row_mut(id as usize);
            t += &dx.row(i);
            let mut p = self.pos_emb.grad.row_mut(i);
            p += &dx.row(i);
        }
    }
}

impl Module for TransformerEncoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        f(join(prefix, "embeddings.token"), &self.tok_emb);
        f(join(prefix, "embeddings.position"), &self.pos_emb);
        self.emb_ln.visit(&join(prefix, "embeddings.ln"), f);
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("layer{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "embeddings.token"), &mut self.tok_emb);
        f(join(prefix, "embeddings.position"), &mut self.pos_emb);
        self.emb_ln.visit_mut(&join(prefix, "embeddings.ln"), f);
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("layer{i}")), f);
        }
    }
}

/// Dense + GELU + LayerNorm transform, then a decoder tied to the token
/// embedding matrix plus an output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmHead {
    pub dense: Linear,
    pub ln: LayerNorm,
    pub bias: Param,
}

pub struct MlmHeadCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    ln: LnCache,
    z: Array2<f64>,
}

impl MlmHead {
    pub fn new(hidden: usize, vocab: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        MlmHead {
            dense: Linear::new(hidden, hidden, &mut rng),
            ln: LayerNorm::new(hidden),
            bias: Param::zeros(1, vocab),
        }
    }

    pub fn forward(&self, x: &Array2<f64>, tok_emb: &Param) -> (Array2<f64>, MlmHeadCache) {
        let pre = self.dense.forward(x);
        let (z, ln) = self.ln.forward(&gelu(&pre));
        let logits = z.dot(&tok_emb.value.t()) + &self.bias.value;
        (
            logits,
            MlmHeadCache {
                x: x.clone(),
                pre,
                ln,
                z,
            },
        )
    }

    pub fn backward(&mut self, cache: &MlmHeadCache, dlogits: &Array2<f64>, tok_emb: &mut Param) -> Array2<f64> {
        self.bias.grad += &dlogits.sum_axis(Axis(0)).insert_axis(Axis(0));
        tok_emb.grad += &dlogits.t().dot(&cache.z);
        let dz = dlogits.dot(&tok_emb.value);
        let dact = self.ln.backward(&cache.ln, &dz);
        let dpre = gelu_backward(&cache.pre, &dact);
        self.dense.backward(&cache.x, &dpre)
    }
}

impl Module for MlmHead {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.dense.visit(&join(prefix, "dense"), f);
        self.ln.visit(&join(prefix, "ln"), f);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.dense.visit_mut(&join(prefix, "dense"), f);
        self.ln.visit_mut(&join(prefix, "ln"), f);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Encoder plus MLM head: the unit trained by generic pretraining and
/// domain adaptation.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmModel {
    pub encoder: TransformerEncoder,
    pub head: MlmHead,
}

impl MlmModel {
    /// Mean cross-entropy over `targets` (position, original id). Gradients
    /// are accumulated, multiplied by `grad_scale`, when it is given.
    pub fn loss(
        &mut self,
        input: &[u32],
        targets: &[(usize, u32)],
        rng: Option<&mut Rng>,
        grad_scale: Option<f64>,
    ) -> f64 {
        if targets.is_empty() {
            return 0.0;
        }
        let (states, cache) = self.encoder.forward(input, rng);
        let rows: Vec<usize> = targets.iter().map(|t| t.0).collect();
        let gathered = states.select(Axis(0), &rows);
        let (logits, head_cache) = self.head.forward(&gathered, &self.encoder.tok_emb);
        let labels: Vec<usize> = targets.iter().map(|t| t.1 as usize).collect();
        let (loss, mut dlogits) = crate::nn::softmax_cross_entropy(&logits, &labels);
        if let Some(scale) = grad_scale {
            dlogits *= scale;
            let dg = self.head.backward(&head_cache, &dlogits, &mut self.encoder.tok_emb);
            let mut dstates = Array2::zeros(states.raw_dim());
            for (k, &r) in rows.iter().enumerate() {
                let mut row = dstates.row_mut(r);
                row += &dg.row(k);
            }
            self.encoder.backward(&cache, &dstates);
        }
        loss
    }
}

impl Module for MlmModel {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.head.visit(&join(prefix, "mlm"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.head.visit_mut(&join(prefix, "mlm"), f);
    }
}
