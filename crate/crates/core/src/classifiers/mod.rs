//! Deauville score classifiers over text, images, or both, with a shared
//! three-layer head.

mod bundle;
mod head;
mod train;
mod vision;

use ndarray::{concatenate, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

pub use bundle::{load_bundle, save_bundle, MODEL_FILE};
pub use head::{Activation, ClassifierHead, HeadCache, HeadSpec, N_CLASSES};
pub use train::{accumulate_batch_gradients, evaluate, train_classifier, EarlyStopper, EpochLog, StopDecision, TrainConfig, TrainLog};
pub use vision::{
    augment, hflip, Augmentation, ConvEncoder, PatchEncoder, VisionBackbone, VisionEncoder, VisionKind, VisionSpec,
    MAX_ROTATION_DEG, MAX_TRANSLATION,
};

use crate::corpus::{DeauvilleLabel, GrayscaleImage};
use crate::encoders::{EncoderCache, MlmHead, TransformerEncoder};
use crate::error::{Error, Result};
use crate::nn::{softmax_rows, Module, Param};
use crate::rng::Rng;
use vision::VisionCache;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Text,
    Vision,
    Multimodal,
}

impl ModelKind {
    pub fn uses_text(self) -> bool {
        self != ModelKind::Vision
    }

    pub fn uses_image(self) -> bool {
        self != ModelKind::Text
    }
}

/// One exam as model input.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub exam_id: String,
    pub ids: Vec<u32>,
    pub image: Option<GrayscaleImage>,
    pub label: Option<DeauvilleLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub exam_id: String,
    pub probs: [f64; N_CLASSES],
    pub predicted: DeauvilleLabel,
}

impl Prediction {
    /// Argmax with ties resolved toward the lower class.
    pub fn from_probs(exam_id: impl Into<String>, probs: [f64; N_CLASSES]) -> Self {
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        Prediction {
            exam_id: exam_id.into(),
            probs,
            predicted: DeauvilleLabel::from_index(best).expect("index < 5"),
        }
    }
}

/// Text and/or vision encoders feeding one head. A text model carries the
/// MLM head of its source checkpoint untouched so the fine-tuned encoder can
/// be saved as a full checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub kind: ModelKind,
    pub text: Option<TransformerEncoder>,
    pub vision: Option<VisionEncoder>,
    pub head: ClassifierHead,
    pub carried_mlm_head: Option<MlmHead>,
}

pub(crate) struct ForwardCache {
    text: Option<EncoderCache>,
    vision: Option<VisionCache>,
}

impl Classifier {
    pub fn new(
        kind: ModelKind,
        text: Option<(TransformerEncoder, MlmHead)>,
        vision: Option<VisionEncoder>,
        hidden_dims: Option<(usize, usize)>,
        seed: u64,
    ) -> Result<Self> {
        if kind.uses_text() != text.is_some() || kind.uses_image() != vision.is_some() {
            return Err(Error::validation(format!("{kind:?} model needs exactly its own encoders")));
        }
        let input_dim = fusion_input_dim(text.as_ref().map(|t| &t.0), vision.as_ref());
        let mut spec = HeadSpec::matching(input_dim);
        if let Some(dims) = hidden_dims {
            spec.hidden_dims = dims;
        }
        let head = ClassifierHead::new(&spec, seed)?;
        let (text, carried_mlm_head) = match text {
            Some((e, h)) => (Some(e), Some(h)),
            None => (None, None),
        };
        Ok(Classifier {
            kind,
            text,
            vision,
            head,
            carried_mlm_head,
        })
    }

    pub fn check_dims(&self) -> Result<()> {
        let expected = fusion_input_dim(self.text.as_ref(), self.vision.as_ref());
        if self.head.spec.input_dim != expected {
            return Err(Error::validation(format!(
                "head input_dim {} does not match encoder output {expected}",
                self.head.spec.input_dim
            )));
        }
        Ok(())
    }

    fn check_example(&self, ex: &Example) -> Result<()> {
        if let Some(enc) = &self.text {
            if ex.ids.is_empty() {
                return Err(Error::validation(format!("{}: empty token sequence", ex.exam_id)));
            }
            enc.spec.check_ids(&ex.ids)?;
        }
        if let Some(v) = &self.vision {
            let img = ex
                .image
                .as_ref()
                .ok_or_else(|| Error::validation(format!("{}: missing image", ex.exam_id)))?;
            v.spec.prepare(img)?;
        }
        Ok(())
    }

    pub fn check_examples(&self, examples: &[Example]) -> Result<()> {
        examples.iter().try_for_each(|e| self.check_example(e))
    }

    /// Concatenated pooled features `1 x input_dim`.
    pub(crate) fn features(
        &self,
        ex: &Example,
        image: Option<&GrayscaleImage>,
        mut rng: Option<&mut Rng>,
    ) -> (Array2<f64>, ForwardCache) {
        let mut parts = Vec::new();
        let mut cache = ForwardCache {
            text: None,
            vision: None,
        };
        if let Some(enc) = &self.text {
            let (states, c) = enc.forward(&ex.ids, rng.as_deref_mut());
            parts.push(states.slice(ndarray::s![0..1, ..]).to_owned());
            cache.text = Some(c);
        }
        if let Some(v) = &self.vision {
            let img = v.spec.prepare(image.expect("image checked")).expect("image checked");
            let (pooled, c) = v.forward(&img, rng);
            parts.push(pooled);
            cache.vision = Some(c);
        }
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        (concatenate(Axis(1), &views).expect("single rows"), cache)
    }

    pub(crate) fn backward_features(&mut self, cache: &ForwardCache, dfeat: &Array2<f64>) {
        let mut offset = 0;
        if let (Some(enc), Some(c)) = (&mut self.text, &cache.text) {
            let h = enc.hidden_size();
            let mut dstates = Array2::zeros((c.len(), h));
            dstates
                .row_mut(0)
                .assign(&dfeat.slice(ndarray::s![0, offset..offset + h]));
            enc.backward(c, &dstates);
            offset += h;
        }
        if let (Some(v), Some(c)) = (&mut self.vision, &cache.vision) {
            let h = v.hidden_size();
            v.backward(c, &dfeat.slice(ndarray::s![0..1, offset..offset + h]).to_owned());
        }
    }

    pub fn predict_probs(&self, ex: &Example) -> Result<[f64; N_CLASSES]> {
        self.check_example(ex)?;
        let (feat, _) = self.features(ex, ex.image.as_ref(), None);
        let (logits, _) = self.head.forward(&feat);
        let probs = softmax_rows(&logits);
        Ok(std::array::from_fn(|i| probs[[0, i]]))
    }

    pub fn predict(&self, ex: &Example) -> Result<Prediction> {
        Ok(Prediction::from_probs(ex.exam_id.clone(), self.predict_probs(ex)?))
    }

    pub fn predict_all(&self, examples: &[Example]) -> Result<Vec<Prediction>> {
        examples.iter().map(|e| self.predict(e)).collect()
    }

    /// Gradient L2 norms of the text and vision pathways.
    pub fn pathway_grad_norms(&self) -> (f64, f64) {
        (
            self.text.as_ref().map_or(0.0, |t| t.grad_norm()),
            self.vision.as_ref().map_or(0.0, |v| v.grad_norm()),
        )
    }
}

impl Module for Classifier {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        if let Some(t) = &self.text {
            t.visit(&crate::nn::join(prefix, "text"), f);
        }
        if let Some(v) = &self.vision {
            v.visit(&crate::nn::join(prefix, "vision"), f);
        }
        self.head.visit(&crate::nn::join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        if let Some(t) = &mut self.text {
            t.visit_mut(&crate::nn::join(prefix, "text"), f);
        }
        if let Some(v) = &mut self.vision {
            v.visit_mut(&crate::nn::join(prefix, "vision"), f);
        }
        self.head.visit_mut(&crate::nn::join(prefix, "head"), f);
    }
}

pub fn fusion_input_dim(text: Option<&TransformerEncoder>, vision: Option<&VisionEncoder>) -> usize {
    text.map_or(0, |t| t.hidden_size()) + vision.map_or(0, |v| v.hidden_size())
}

fn probs_of(head: &ClassifierHead, feat: &Array2<f64>, exam_id: &str) -> Result<Prediction> {
    if feat.ncols() != head.spec.input_dim {
        return Err(Error::validation(format!(
            "feature dimension {} does not match head input_dim {}",
            feat.ncols(),
            head.spec.input_dim
        )));
    }
    let (logits, _) = head.forward(feat);
    let p = softmax_rows(&logits);
    Ok(Prediction::from_probs(exam_id, std::array::from_fn(|i| p[[0, i]])))
}

pub fn predict_text(
    exam_id: &str,
    ids: &[u32],
    encoder: &TransformerEncoder,
    head: &ClassifierHead,
) -> Result<Prediction> {
    let (_, pooled) = pooled_text(ids, encoder)?;
    probs_of(head, &pooled.insert_axis(Axis(0)), exam_id)
}

fn pooled_text(ids: &[u32], encoder: &TransformerEncoder) -> Result<(Array2<f64>, Array1<f64>)> {
    if ids.is_empty() {
        return Err(Error::validation("empty token sequence"));
    }
    encoder.spec.check_ids(ids)?;
    let (states, _) = encoder.forward(ids, None);
    let pooled = states.row(0).to_owned();
    Ok((states, pooled))
}

pub fn predict_vision(
    exam_id: &str,
    image: &GrayscaleImage,
    vision: &VisionEncoder,
    head: &ClassifierHead,
) -> Result<Prediction> {
    let img = vision.spec.prepare(image)?;
    let (pooled, _) = vision.forward(&img, None);
    probs_of(head, &pooled, exam_id)
}

pub fn predict_multimodal(
    exam_id: &str,
    ids: &[u32],
    image: &GrayscaleImage,
    text: &TransformerEncoder,
    vision: &VisionEncoder,
    head: &ClassifierHead,
) -> Result<Prediction> {
    let (_, t) = pooled_text(ids, text)?;
    let img = vision.spec.prepare(image)?;
    let (v, _) = vision.forward(&img, None);
    let feat = concatenate(Axis(1), &[t.insert_axis(Axis(0)).view(), v.view()]).expect("single rows");
    probs_of(head, &feat, exam_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_to_lowest_class() {
        let p = Prediction::from_probs("x", [0.2; 5]);
        assert_eq!(p.predicted.value(), 1);
        let p = Prediction::from_probs("x", [0.1, 0.3, 0.3, 0.2, 0.1]);
        assert_eq!(p.predicted.value(), 2);
    }
}
