use ndarray::{s, Array2};

use super::layers::{gelu, gelu_backward, Dropout, LayerNorm, LnCache, Linear};
use super::{join, softmax_rows, Module, Param};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub n_heads: usize,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

#[derive(Debug, Clone)]
pub struct AttnCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
}

impl MultiHeadAttention {
    pub fn new(hidden: usize, n_heads: usize, rng: &mut Rng) -> Self {
        assert!(hidden % n_heads == 0, "hidden size must divide into heads");
        MultiHeadAttention {
            n_heads,
            q: Linear::new(hidden, hidden, rng),
            k: Linear::new(hidden, hidden, rng),
            v: Linear::new(hidden, hidden, rng),
            o: Linear::new(hidden, hidden, rng),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, AttnCache) {
        let (q, k, v) = (self.q.forward(x), self.k.forward(x), self.v.forward(x));
        let d = x.ncols() / self.n_heads;
        let scale = 1.0 / (d as f64).sqrt();
        let mut ctx = Array2::zeros(x.raw_dim());
        let mut probs = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let cols = s![.., h * d..(h + 1) * d];
            let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            let p = softmax_rows(&scores);
            ctx.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
            probs.push(p);
        }
        let out = self.o.forward(&ctx);
        (
            out,
            AttnCache {
                x: x.clone(),
                q,
                k,
                v,
                probs,
                ctx,
            },
        )
    }

    pub fn backward(&mut self, cache: &AttnCache, dy: &Array2<f64>) -> Array2<f64> {
        let dctx = self.o.backward(&cache.ctx, dy);
        let d = dctx.ncols() / self.n_heads;
        let scale = 1.0 / (d as f64).sqrt();
        let mut dq = Array2::zeros(dctx.raw_dim());
        let mut dk = Array2::zeros(dctx.raw_dim());
        let mut dv = Array2::zeros(dctx.raw_dim());
        for h in 0..self.n_heads {
            let cols = s![.., h * d..(h + 1) * d];
            let p = &cache.probs[h];
            let dc = dctx.slice(cols);
            dv.slice_mut(cols).assign(&p.t().dot(&dc));
            let dp = dc.dot(&cache.v.slice(cols).t());
            let row_dot = (&dp * p).sum_axis(ndarray::Axis(1)).insert_axis(ndarray::Axis(1));
            let ds = (dp - &row_dot) * p * scale;
            dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
        }
        self.q.backward(&cache.x, &dq) + self.k.backward(&cache.x, &dk) + self.v.backward(&cache.x, &dv)
    }
}

impl Module for MultiHeadAttention {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.q.visit(&join(prefix, "query"), f);
        self.k.visit(&join(prefix, "key"), f);
        self.v.visit(&join(prefix, "value"), f);
        self.o.visit(&join(prefix, "output"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.q.visit_mut(&join(prefix, "query"), f);
        self.k.visit_mut(&join(prefix, "key"), f);
        self.v.visit_mut(&join(prefix, "value"), f);
        self.o.visit_mut(&join(prefix, "output"), f);
    }
}

/// Post-norm encoder block: `LN(x + attn(x))` then `LN(h + ff(h))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerLayer {
    pub attn: MultiHeadAttention,
    pub ln1: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub ln2: LayerNorm,
    pub dropout: Dropout,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    attn: AttnCache,
    drop1: Option<Array2<f64>>,
    ln1: LnCache,
    h1: Array2<f64>,
    f_pre: Array2<f64>,
    f_act: Array2<f64>,
    drop2: Option<Array2<f64>>,
    ln2: LnCache,
}

impl TransformerLayer {
    pub fn new(hidden: usize, n_heads: usize, ff: usize, dropout: f64, rng: &mut Rng) -> Self {
        TransformerLayer {
            attn: MultiHeadAttention::new(hidden, n_heads, rng),
            ln1: LayerNorm::new(hidden),
            ff1: Linear::new(hidden, ff, rng),
            ff2: Linear::new(ff, hidden, rng),
            ln2: LayerNorm::new(hidden),
            dropout: Dropout(dropout),
        }
    }

    pub fn forward(&self, x: &Array2<f64>, mut rng: Option<&mut Rng>) -> (Array2<f64>, LayerCache) {
        let (a, attn) = self.attn.forward(x);
        let (a, drop1) = self.dropout.forward(a, rng.as_deref_mut());
        let (h1, ln1) = self.ln1.forward(&(a + x));
        let f_pre = self.ff1.forward(&h1);
        let f_act = gelu(&f_pre);
        let f = self.ff2.forward(&f_act);
        let (f, drop2) = self.dropout.forward(f, rng);
        let (out, ln2) = self.ln2.forward(&(f + &h1));
        (
            out,
            LayerCache {
                attn,
                drop1,
                ln1,
                h1,
                f_pre,
                f_act,
                drop2,
                ln2,
            },
        )
    }

    pub fn backward(&mut self, cache: &LayerCache, dy: &Array2<f64>) -> Array2<f64> {
        let dsum2 = self.ln2.backward(&cache.ln2, dy);
        let df = Dropout::backward(&cache.drop2, dsum2.clone());
        let dact = self.ff2.backward(&cache.f_act, &df);
        let dpre = gelu_backward(&cache.f_pre, &dact);
        let dh1 = self.ff1.backward(&cache.h1, &dpre) + dsum2;
        let dsum1 = self.ln1.backward(&cache.ln1, &dh1);
        let da = Dropout::backward(&cache.drop1, dsum1.clone());
        self.attn.backward(&cache.attn, &da) + dsum1
    }
}

impl Module for TransformerLayer {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.attn.visit(&join(prefix, "attention"), f);
        self.ln1.visit(&join(prefix, "ln1"), f);
        self.ff1.visit(&join(prefix, "ff1"), f);
        self.ff2.visit(&join(prefix, "ff2"), f);
        self.ln2.visit(&join(prefix, "ln2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.attn.visit_mut(&join(prefix, "attention"), f);
        self.ln1.visit_mut(&join(prefix, "ln1"), f);
        self.ff1.visit_mut(&join(prefix, "ff1"), f);
        self.ff2.visit_mut(&join(prefix, "ff2"), f);
        self.ln2.visit_mut(&join(prefix, "ln2"), f);
    }
}
