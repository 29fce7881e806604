use ndarray::{Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::GrayscaleImage;
use crate::error::{Error, Result};
use crate::nn::{join, Dropout, LayerCache, LayerNorm, LnCache, Linear, Module, Param, TransformerLayer};
use crate::rng::{rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VisionKind {
    PatchTransformer,
    Convolutional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisionSpec {
    pub kind: VisionKind,
    pub input_size: (usize, usize),
    pub normalize_pixels: bool,
    /// Fraction of rows at the bottom of the image that are blanked, standing
    /// in for cropping the field of view.
    pub crop_bottom: f64,
    pub hidden_size: usize,
    pub patch_size: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_size: usize,
    pub conv_channels: (usize, usize),
    pub dropout: f64,
}

impl Default for VisionSpec {
    fn default() -> Self {
        VisionSpec {
            kind: VisionKind::Convolutional,
            input_size: (64, 64),
            normalize_pixels: true,
            crop_bottom: 0.0,
            hidden_size: 64,
            patch_size: 8,
            n_layers: 1,
            n_heads: 4,
            ff_size: 128,
            conv_channels: (8, 16),
            dropout: 0.0,
        }
    }
}

impl VisionSpec {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.input_size;
        let fail = |m: String| Err(Error::validation(format!("vision spec: {m}")));
        if h != w || h < 16 {
            return fail(format!("input size {h}x{w} must be square and at least 16"));
        }
        if !(0.0..1.0).contains(&self.crop_bottom) {
            return fail("crop_bottom must lie in [0, 1)".into());
        }
        if self.hidden_size == 0 {
            return fail("hidden_size must be positive".into());
        }
        match self.kind {
            VisionKind::PatchTransformer => {
                if self.patch_size == 0 || h % self.patch_size != 0 {
                    return fail(format!("patch size {} must divide {h}", self.patch_size));
                }
                if self.n_heads == 0 || self.hidden_size % self.n_heads != 0 || self.n_layers == 0 {
                    return fail("hidden_size must divide into a positive number of heads".into());
                }
            }
            VisionKind::Convolutional => {
                if self.conv_channels.0 == 0 || self.conv_channels.1 == 0 {
                    return fail("conv channels must be positive".into());
                }
            }
        }
        Ok(())
    }

    /// Validates size, applies the bottom crop and maps `[0, 1]` pixels to
    /// `[-1, 1]` when normalization is on.
    pub fn prepare(&self, image: &GrayscaleImage) -> Result<Array2<f64>> {
        let (h, w) = self.input_size;
        if (image.height(), image.width()) != (h, w) {
            return Err(Error::validation(format!(
                "image is {}x{}, model expects {h}x{w}",
                image.height(),
                image.width()
            )));
        }
        let keep_rows = h - (self.crop_bottom * h as f64).round() as usize;
        Ok(Array2::from_shape_fn((h, w), |(r, c)| {
            let v = if r < keep_rows { image.get(r, c) } else { 0.0 };
            if self.normalize_pixels {
                2.0 * v - 1.0
            } else {
                v
            }
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Augmentation {
    Hflip,
    Vflip,
    Rotate,
    Translate,
}

pub const MAX_ROTATION_DEG: f64 = 15.0;
pub const MAX_TRANSLATION: f64 = 0.1;

fn bilinear(img: &GrayscaleImage, y: f64, x: f64) -> f64 {
    let (h, w) = (img.height() as isize, img.width() as isize);
    let (y0, x0) = (y.floor() as isize, x.floor() as isize);
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let px = |r: isize, c: isize| {
        if r < 0 || c < 0 || r >= h || c >= w {
            0.0
        } else {
            img.get(r as usize, c as usize)
        }
    };
    px(y0, x0) * (1.0 - fy) * (1.0 - fx)
        + px(y0, x0 + 1) * (1.0 - fy) * fx
        + px(y0 + 1, x0) * fy * (1.0 - fx)
        + px(y0 + 1, x0 + 1) * fy * fx
}

/// Random training-time transform: flips with probability 0.5 each, rotation
/// uniform in ±15°, translation uniform in ±10% per axis. Uncovered pixels
/// become 0.
pub fn augment(image: &GrayscaleImage, augs: &[Augmentation], rng: &mut Rng) -> GrayscaleImage {
    let (h, w) = (image.height(), image.width());
    let hflip = augs.contains(&Augmentation::Hflip) && rng.gen_bool(0.5);
    let vflip = augs.contains(&Augmentation::Vflip) && rng.gen_bool(0.5);
    let angle = if augs.contains(&Augmentation::Rotate) {
        rng.gen_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG).to_radians()
    } else {
        0.0
    };
    let (ty, tx) = if augs.contains(&Augmentation::Translate) {
        (
            rng.gen_range(-MAX_TRANSLATION..=MAX_TRANSLATION) * h as f64,
            rng.gen_range(-MAX_TRANSLATION..=MAX_TRANSLATION) * w as f64,
        )
    } else {
        (0.0, 0.0)
    };
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (sin, cos) = angle.sin_cos();
    let mut pixels = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            // Inverse map from output pixel to source coordinates.
            let (dy, dx) = (r as f64 - cy - ty, c as f64 - cx - tx);
            let mut sy = cos * dy + sin * dx + cy;
            let mut sx = -sin * dy + cos * dx + cx;
            if vflip {
                sy = h as f64 - 1.0 - sy;
            }
            if hflip {
                sx = w as f64 - 1.0 - sx;
            }
            pixels.push(bilinear(image, sy, sx).clamp(0.0, 1.0));
        }
    }
    GrayscaleImage::new(h, w, pixels).expect("same shape")
}

pub fn hflip(image: &GrayscaleImage) -> GrayscaleImage {
    let (h, w) = (image.height(), image.width());
    let pixels = (0..h * w).map(|i| image.get(i / w, w - 1 - i % w)).collect();
    GrayscaleImage::new(h, w, pixels).expect("same shape")
}

/// 3x3 same-padding patches: row `r*w + c`, column `k*cin + ci`.
fn im2col(x: &Array2<f64>, h: usize, w: usize) -> Array2<f64> {
    let cin = x.ncols();
    let mut cols = Array2::zeros((h * w, 9 * cin));
    for r in 0..h {
        for c in 0..w {
            let mut row = cols.row_mut(r * w + c);
            for k in 0..9 {
                let (rr, cc) = (r as isize + k as isize / 3 - 1, c as isize + k as isize % 3 - 1);
                if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                    continue;
                }
                let src = x.row(rr as usize * w + cc as usize);
                row.slice_mut(ndarray::s![k * cin..(k + 1) * cin]).assign(&src);
            }
        }
    }
    cols
}

fn col2im(dcols: &Array2<f64>, h: usize, w: usize, cin: usize) -> Array2<f64> {
    let mut dx = Array2::zeros((h * w, cin));
    for r in 0..h {
        for c in 0..w {
            let row = dcols.row(r * w + c);
            for k in 0..9 {
                let (rr, cc) = (r as isize + k as isize / 3 - 1, c as isize + k as isize % 3 - 1);
                if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                    continue;
                }
                let mut dst = dx.row_mut(rr as usize * w + cc as usize);
                dst += &row.slice(ndarray::s![k * cin..(k + 1) * cin]);
            }
        }
    }
    dx
}

/// 2x2 max pooling; returns pooled map and the source row of every output.
fn maxpool2(x: &Array2<f64>, h: usize, w: usize) -> (Array2<f64>, Vec<usize>) {
    let (ho, wo, ch) = (h / 2, w / 2, x.ncols());
    let mut out = Array2::zeros((ho * wo, ch));
    let mut arg = vec![0; ho * wo * ch];
    for r in 0..ho {
        for c in 0..wo {
            for k in 0..ch {
                let mut best = (f64::NEG_INFINITY, 0);
                for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let src = (2 * r + dr) * w + 2 * c + dc;
                    if x[[src, k]] > best.0 {
                        best = (x[[src, k]], src);
                    }
                }
                out[[r * wo + c, k]] = best.0;
                arg[(r * wo + c) * ch + k] = best.1;
            }
        }
    }
    (out, arg)
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

fn relu_backward(x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut d = dy.clone();
    ndarray::Zip::from(&mut d).and(x).for_each(|d, &v| {
        if v <= 0.0 {
            *d = 0.0;
        }
    });
    d
}

/// conv3x3 → ReLU → maxpool2 → conv3x3 → ReLU → global max pool → linear.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvEncoder {
    size: usize,
    pub conv1: Linear,
    pub conv2: Linear,
    pub proj: Linear,
}

pub struct ConvCache {
    cols1: Array2<f64>,
    z1: Array2<f64>,
    pool_arg: Vec<usize>,
    cols2: Array2<f64>,
    z2: Array2<f64>,
    gmax_arg: Vec<usize>,
    g: Array2<f64>,
}

impl ConvEncoder {
    fn new(spec: &VisionSpec, rng: &mut Rng) -> Self {
        let (c1, c2) = spec.conv_channels;
        ConvEncoder {
            size: spec.input_size.0,
            conv1: Linear::new(9, c1, rng),
            conv2: Linear::new(9 * c1, c2, rng),
            proj: Linear::new(c2, spec.hidden_size, rng),
        }
    }

    fn forward(&self, img: &Array2<f64>) -> (Array2<f64>, ConvCache) {
        let (h, w) = (self.size, self.size);
        let x = img.clone().into_shape_with_order((h * w, 1)).expect("contiguous");
        let cols1 = im2col(&x, h, w);
        let z1 = self.conv1.forward(&cols1);
        let (p1, pool_arg) = maxpool2(&relu(&z1), h, w);
        let cols2 = im2col(&p1, h / 2, w / 2);
        let z2 = self.conv2.forward(&cols2);
        let r2 = relu(&z2);
        let gmax_arg: Vec<usize> = r2
            .axis_iter(Axis(1))
            .map(|col| {
                col.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect();
        let g = Array2::from_shape_fn((1, r2.ncols()), |(_, k)| r2[[gmax_arg[k], k]]);
        let out = self.proj.forward(&g);
        (
            out,
            ConvCache {
                cols1,
                z1,
                pool_arg,
                cols2,
                z2,
                gmax_arg,
                g,
            },
        )
    }

    fn backward(&mut self, cache: &ConvCache, dout: &Array2<f64>) {
        let (h, w) = (self.size, self.size);
        let dg = self.proj.backward(&cache.g, dout);
        let mut dr2 = Array2::zeros(cache.z2.raw_dim());
        for (k, &i) in cache.gmax_arg.iter().enumerate() {
            dr2[[i, k]] = dg[[0, k]];
        }
        let dz2 = relu_backward(&cache.z2, &dr2);
        let dcols2 = self.conv2.backward(&cache.cols2, &dz2);
        let c1 = cache.z1.ncols();
        let dp1 = col2im(&dcols2, h / 2, w / 2, c1);
        let mut dr1 = Array2::zeros(cache.z1.raw_dim());
        for (o, row) in dp1.rows().into_iter().enumerate() {
            for (k, &d) in row.iter().enumerate() {
                dr1[[cache.pool_arg[o * c1 + k], k]] += d;
            }
        }
        let dz1 = relu_backward(&cache.z1, &dr1);
        self.conv1.backward(&cache.cols1, &dz1);
    }
}

impl Module for ConvEncoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.proj.visit(&join(prefix, "proj"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.conv1.visit_mut(&join(prefix, "conv1"), f);
        self.conv2.visit_mut(&join(prefix, "conv2"), f);
        self.proj.visit_mut(&join(prefix, "proj"), f);
    }
}

/// Non-overlapping patches embedded linearly, a learned class token and
/// position embeddings, then transformer layers; pooled = class-token state.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchEncoder {
    size: usize,
    patch: usize,
    dropout: Dropout,
    pub embed: Linear,
    pub cls: Param,
    pub pos: Param,
    pub ln: LayerNorm,
    pub layers: Vec<TransformerLayer>,
}

pub struct PatchCache {
    patches: Array2<f64>,
    ln: LnCache,
    drop: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
}

impl PatchEncoder {
    fn new(spec: &VisionSpec, rng: &mut Rng) -> Self {
        let p = spec.patch_size;
        let n = (spec.input_size.0 / p).pow(2);
        let hdim = spec.hidden_size;
        PatchEncoder {
            size: spec.input_size.0,
            patch: p,
            dropout: Dropout(spec.dropout),
            embed: Linear::new(p * p, hdim, rng),
            cls: Param::normal(1, hdim, 0.02, rng),
            pos: Param::normal(n + 1, hdim, 0.02, rng),
            ln: LayerNorm::new(hdim),
            layers: (0..spec.n_layers)
                .map(|_| TransformerLayer::new(hdim, spec.n_heads, spec.ff_size, spec.dropout, rng))
                .collect(),
        }
    }

    fn forward(&self, img: &Array2<f64>, mut rng: Option<&mut Rng>) -> (Array2<f64>, PatchCache) {
        let (p, g) = (self.patch, self.size / self.patch);
        let patches = Array2::from_shape_fn((g * g, p * p), |(i, j)| {
            img[[(i / g) * p + j / p, (i % g) * p + j % p]]
        });
        let emb = self.embed.forward(&patches);
        let mut x = Array2::zeros((g * g + 1, emb.ncols()));
        x.row_mut(0).assign(&self.cls.value.row(0));
        x.slice_mut(ndarray::s![1.., ..]).assign(&emb);
        x += &self.pos.value;
        let (x, ln) = self.ln.forward(&x);
        let (mut x, drop) = self.dropout.forward(x, rng.as_deref_mut());
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward(&x, rng.as_deref_mut());
            layers.push(c);
            x = y;
        }
        let pooled = x.slice(ndarray::s![0..1, ..]).to_owned();
        (pooled, PatchCache { patches, ln, drop, layers })
    }

    fn backward(&mut self, cache: &PatchCache, dpooled: &Array2<f64>) {
        let rows = cache.patches.nrows() + 1;
        let mut d = Array2::zeros((rows, dpooled.ncols()));
        d.row_mut(0).assign(&dpooled.row(0));
        for (layer, c) in self.layers.iter_mut().zip(&cache.layers).rev() {
            d = layer.backward(c, &d);
        }
        let d = Dropout::backward(&cache.drop, d);
        let dx = self.ln.backward(&cache.ln, &d);
        self.pos.grad += &dx;
        let mut cls = self.cls.grad.row_mut(0);
        cls += &dx.row(0);
        self.embed.backward(&cache.patches, &dx.slice(ndarray::s![1.., ..]).to_owned());
    }
}

impl Module for PatchEncoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.embed.visit(&join(prefix, "patch_embed"), f);
        f(join(prefix, "cls"), &self.cls);
        f(join(prefix, "position"), &self.pos);
        self.ln.visit(&join(prefix, "ln"), f);
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("layer{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.embed.visit_mut(&join(prefix, "patch_embed"), f);
        f(join(prefix, "cls"), &mut self.cls);
        f(join(prefix, "position"), &mut self.pos);
        self.ln.visit_mut(&join(prefix, "ln"), f);
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("layer{i}")), f);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VisionBackbone {
    Patch(PatchEncoder),
    Conv(ConvEncoder),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisionEncoder {
    pub spec: VisionSpec,
    pub backbone: VisionBackbone,
}

pub enum VisionCache {
    Patch(PatchCache),
    Conv(ConvCache),
}

impl VisionEncoder {
    pub fn new(spec: &VisionSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_from_seed(seed);
        let backbone = match spec.kind {
            VisionKind::PatchTransformer => VisionBackbone::Patch(PatchEncoder::new(spec, &mut rng)),
            VisionKind::Convolutional => VisionBackbone::Conv(ConvEncoder::new(spec, &mut rng)),
        };
        Ok(VisionEncoder {
            spec: spec.clone(),
            backbone,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.spec.hidden_size
    }

    /// Pooled `1 x hidden` embedding of a prepared image.
    pub fn forward(&self, img: &Array2<f64>, rng: Option<&mut Rng>) -> (Array2<f64>, VisionCache) {
        match &self.backbone {
            VisionBackbone::Patch(p) => {
                let (y, c) = p.forward(img, rng);
                (y, VisionCache::Patch(c))
            }
            VisionBackbone::Conv(c) => {
                let (y, cache) = c.forward(img);
                (y, VisionCache::Conv(cache))
            }
        }
    }

    pub fn backward(&mut self, cache: &VisionCache, dpooled: &Array2<f64>) {
        match (&mut self.backbone, cache) {
            (VisionBackbone::Patch(p), VisionCache::Patch(c)) => p.backward(c, dpooled),
            (VisionBackbone::Conv(m), VisionCache::Conv(c)) => m.backward(c, dpooled),
            _ => unreachable!("cache produced by a different backbone"),
        }
    }
}

impl Module for VisionEncoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        match &self.backbone {
            VisionBackbone::Patch(p) => p.visit(prefix, f),
            VisionBackbone::Conv(c) => c.visit(prefix, f),
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        match &mut self.backbone {
            VisionBackbone::Patch(p) => p.visit_mut(prefix, f),
            VisionBackbone::Conv(c) => c.visit_mut(prefix, f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn im2col_round_trip_counts_overlaps() {
        let x = Array2::from_elem((16, 1), 1.0);
        let cols = im2col(&x, 4, 4);
        let back = col2im(&cols, 4, 4, 1);
        // Corner pixels appear in 4 windows, interior ones in 9.
        assert_eq!(back[[0, 0]], 4.0);
        assert_eq!(back[[5, 0]], 9.0);
    }

    #[test]
    fn augment_identity_and_flip() {
        let img = GrayscaleImage::new(16, 16, (0..256).map(|i| i as f64 / 255.0).collect()).unwrap();
        let same = augment(&img, &[], &mut rng_from_seed(0));
        assert_eq!(same, img);
        assert_eq!(hflip(&hflip(&img)), img);
    }

    #[test]
    fn wrong_size_is_rejected() {
        let spec = VisionSpec::default();
        assert!(spec.prepare(&GrayscaleImage::filled(32, 32, 0.1)).is_err());
        assert!(VisionSpec { input_size: (64, 32), ..spec.clone() }.validate().is_err());
        assert_eq!(spec.prepare(&GrayscaleImage::filled(64, 64, 0.5)).unwrap()[[0, 0]], 0.0);
    }
}
