use std::collections::HashSet;
use std::path::Path;

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::vision::{augment, Augmentation};
use super::{Classifier, Example};
use crate::error::{Error, Result};
use crate::nn::{softmax_cross_entropy, Adam, Module};
use crate::corpus::GrayscaleImage;
use crate::rng::{rng_for, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Image augmentations, applied to training batches only.
    pub augmentations: Vec<Augmentation>,
    /// Train only the head; encoder weights stay bitwise unchanged.
    pub freeze_encoder: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 10,
            early_stop_patience: 3,
            batch_size: 16,
            seed: 0,
            augmentations: Vec::new(),
            freeze_encoder: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be at least 1"));
        }
        if self.early_stop_patience >= self.max_epochs {
            return Err(Error::validation(format!(
                "early_stop_patience {} must be below max_epochs {}",
                self.early_stop_patience, self.max_epochs
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::validation("learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best validation loss; signals a stop after `patience`
/// consecutive epochs without strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        match self.best {
            Some((_, best)) if val_loss >= best => {
                self.stale += 1;
                if self.stale >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, val_loss));
                self.stale = 0;
                StopDecision::Improved
            }
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|b| b.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.epochs {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Vec<EpochLog>> {
        let mut r = csv::Reader::from_path(path)?;
        Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
    }
}

fn labels_of(examples: &[Example]) -> Result<Vec<usize>> {
    examples
        .iter()
        .map(|e| {
            e.label
                .map(|l| l.index())
                .ok_or_else(|| Error::validation(format!("{}: missing label", e.exam_id)))
        })
        .collect()
}

/// Mean cross-entropy and accuracy in inference mode.
pub fn evaluate(model: &Classifier, examples: &[Example]) -> Result<(f64, f64)> {
    if examples.is_empty() {
        return Err(Error::validation("cannot evaluate on an empty split"));
    }
    let labels = labels_of(examples)?;
    let (mut loss, mut correct) = (0.0, 0usize);
    for (ex, &y) in examples.iter().zip(&labels) {
        let p = model.predict(ex)?;
        loss += crate::nn::neg_log_prob(p.probs[y]);
        correct += usize::from(p.predicted.index() == y);
    }
    let n = examples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

struct BatchItem<'a> {
    example: &'a Example,
    /// Augmented replacement for the example's image.
    image: Option<GrayscaleImage>,
    /// Dropout stream; `None` runs the encoders in inference mode.
    rng: Option<Rng>,
    label: usize,
}

/// Mean cross-entropy of one batch; gradients accumulate into the head and,
/// when `into_encoders` is set, into the encoders.
fn forward_backward(model: &mut Classifier, items: Vec<BatchItem<'_>>, into_encoders: bool) -> f64 {
    let mut feats = Vec::with_capacity(items.len());
    let mut caches = Vec::with_capacity(items.len());
    let mut targets = Vec::with_capacity(items.len());
    for mut item in items {
        let image = item.image.as_ref().or(item.example.image.as_ref());
        let (f, c) = model.features(item.example, image, item.rng.as_mut());
        feats.push(f);
        caches.push(c);
        targets.push(item.label);
    }
    let views: Vec<_> = feats.iter().map(|f| f.view()).collect();
    let x: Array2<f64> = concatenate(Axis(0), &views).expect("equal widths");
    let (logits, head_cache) = model.head.forward(&x);
    let (loss, dlogits) = softmax_cross_entropy(&logits, &targets);
    let dfeat = model.head.backward(&head_cache, &dlogits);
    if into_encoders {
        for (k, c) in caches.iter().enumerate() {
            model.backward_features(c, &dfeat.slice(ndarray::s![k..k + 1, ..]).to_owned());
        }
    }
    loss
}

/// Accumulates gradients of the mean batch cross-entropy without dropout or
/// augmentation and returns the loss. Used to inspect a single training step.
pub fn accumulate_batch_gradients(model: &mut Classifier, batch: &[Example]) -> Result<f64> {
    model.check_dims()?;
    model.check_examples(batch)?;
    let labels = labels_of(batch)?;
    let items = batch
        .iter()
        .zip(labels)
        .map(|(example, label)| BatchItem {
            example,
            image: None,
            rng: None,
            label,
        })
        .collect();
    Ok(forward_backward(model, items, true))
}

fn is_head_param(name: &str) -> bool {
    name.starts_with("head.")
}

/// Mini-batch Adam on mean cross-entropy with early stopping on validation
/// loss. Returns the weights of the best validation epoch.
pub fn train_classifier(
    mut model: Classifier,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
) -> Result<(Classifier, TrainLog)> {
    cfg.validate()?;
    model.check_dims()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::validation("train and validation splits must be non-empty"));
    }
    let train_ids: HashSet<&str> = train.iter().map(|e| e.exam_id.as_str()).collect();
    if let Some(e) = val.iter().find(|e| train_ids.contains(e.exam_id.as_str())) {
        return Err(Error::validation(format!("{} is in both train and validation splits", e.exam_id)));
    }
    model.check_examples(train)?;
    model.check_examples(val)?;
    let labels = labels_of(train)?;
    labels_of(val)?;

    let n = train.len();
    let mut opt = Adam::new(cfg.learning_rate);
    let mut stopper = EarlyStopper::new(cfg.early_stop_patience);
    let mut best = model.clone();
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(cfg.seed, "classifier-order", epoch as u64));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.zero_grad();
            let items: Vec<BatchItem<'_>> = batch
                .iter()
                .map(|&i| {
                    let ex = &train[i];
                    let mut rng = rng_for(cfg.seed, "classifier-sample", (epoch * n + i) as u64);
                    let image = match &ex.image {
                        Some(img) if !cfg.augmentations.is_empty() => Some(augment(img, &cfg.augmentations, &mut rng)),
                        _ => None,
                    };
                    BatchItem {
                        example: ex,
                        image,
                        rng: (!cfg.freeze_encoder).then_some(rng),
                        label: labels[i],
                    }
                })
                .collect();
            let loss = forward_backward(&mut model, items, !cfg.freeze_encoder);
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("non-finite classifier loss in epoch {epoch}")));
            }
            loss_sum += loss * batch.len() as f64;
            if cfg.freeze_encoder {
                opt.step_filtered(&mut model, is_head_param);
            } else {
                opt.step(&mut model);
            }
        }
        let (val_loss, val_acc) = evaluate(&model, val)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence(format!("non-finite validation loss in epoch {epoch}")));
        }
        let train_loss = loss_sum / n as f64;
        log::info!("epoch {epoch}: train {train_loss:.4} val {val_loss:.4} acc {val_acc:.3}");
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_acc,
        });
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best = model.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    log.best_epoch = stopper.best_epoch().expect("at least one epoch");
    best.zero_grad();
    Ok((best, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stop_trace() {
        let mut s = EarlyStopper::new(3);
        let trace = [0.9, 0.8, 0.82, 0.83, 0.84];
        let decisions: Vec<_> = trace.iter().enumerate().map(|(i, &l)| s.observe(i + 1, l)).collect();
        assert_eq!(decisions[4], StopDecision::Stop);
        assert!(decisions[..4].iter().all(|d| *d != StopDecision::Stop));
        assert_eq!(s.best_epoch(), Some(2));
    }

    #[test]
    fn patience_must_be_below_max_epochs() {
        let cfg = TrainConfig { max_epochs: 3, early_stop_patience: 3, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
