use std::collections::BTreeMap;

use rand::seq::{index::sample, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{corpus_fingerprint, Checkpoint, CheckpointProvenance, EncoderSpec, MlmHead, MlmModel, Stage, TransformerEncoder};
use crate::error::{Error, Result};
use crate::nn::{Adam, Module};
use crate::preprocess::{is_special, MASK, N_SPECIAL, PAD};
use crate::rng::{derive_seed, rng_for, Rng};
use crate::util::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlmConfig {
    pub mask_rate: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Proportions of selected positions replaced by the mask token, by a
    /// random token, or left unchanged.
    pub mask_action_split: [f64; 3],
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlmConfig {
    fn default() -> Self {
        MlmConfig {
            mask_rate: 0.15,
            epochs: 3,
            learning_rate: 1e-4,
            mask_action_split: [0.8, 0.1, 0.1],
            batch_size: 16,
            seed: 0,
        }
    }
}

impl MlmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_rate > 0.0 && self.mask_rate < 1.0) {
            return Err(Error::validation(format!("mask_rate {} outside (0, 1)", self.mask_rate)));
        }
        let split = self.mask_action_split;
        if split.iter().any(|p| *p < 0.0) || (split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("mask_action_split {split:?} must be non-negative and sum to 1")));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::validation("learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSequence {
    pub ids: Vec<u32>,
    /// Selected position → original token id.
    pub targets: BTreeMap<usize, u32>,
}

impl MaskedSequence {
    fn target_list(&self) -> Vec<(usize, u32)> {
        self.targets.iter().map(|(&p, &t)| (p, t)).collect()
    }
}

fn mask_unchecked(ids: &[u32], cfg: &MlmConfig, vocab_size: usize, rng: &mut Rng) -> MaskedSequence {
    let maskable: Vec<usize> = (0..ids.len())
        .filter(|&i| !is_special(ids[i]) && ids[i] != PAD)
        .collect();
    let k = (cfg.mask_rate * maskable.len() as f64).round() as usize;
    let mut chosen: Vec<usize> = sample(rng, maskable.len(), k).into_iter().map(|j| maskable[j]).collect();
    chosen.sort_unstable();
    let mut out = ids.to_vec();
    let mut targets = BTreeMap::new();
    let [p_mask, p_random, _] = cfg.mask_action_split;
    for pos in chosen {
        targets.insert(pos, ids[pos]);
        let u: f64 = rng.gen();
        if u < p_mask {
            out[pos] = MASK;
        } else if u < p_mask + p_random {
            out[pos] = rng.gen_range(N_SPECIAL..vocab_size as u32);
        }
    }
    MaskedSequence { ids: out, targets }
}

/// Selects `round(rate * maskable)` non-special positions uniformly without
/// replacement, then for each selected position (ascending) draws one
/// uniform to choose mask / random token / keep.
pub fn mask_tokens(ids: &[u32], cfg: &MlmConfig, vocab_size: usize, rng: &mut Rng) -> Result<MaskedSequence> {
    cfg.validate()?;
    if !ids.iter().any(|&id| !is_special(id)) {
        return Err(Error::validation("sequence has no maskable tokens"));
    }
    if vocab_size <= N_SPECIAL as usize {
        return Err(Error::validation("vocabulary has no non-special tokens"));
    }
    Ok(mask_unchecked(ids, cfg, vocab_size, rng))
}

fn check_corpus(spec: &EncoderSpec, corpus: &[Vec<u32>]) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::validation("MLM corpus is empty"));
    }
    corpus.iter().try_for_each(|seq| spec.check_ids(seq))
}

/// Runs `cfg.epochs` passes of masked-token prediction with Adam, re-masking
/// every epoch. Returns the mean masked-token loss of each epoch.
pub fn train_mlm(model: &mut MlmModel, corpus: &[Vec<u32>], cfg: &MlmConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_corpus(&model.encoder.spec, corpus)?;
    let vocab = model.encoder.spec.vocab_size;
    let n = corpus.len() as u64;
    let mut opt = Adam::new(cfg.learning_rate);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs as u64 {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut rng_for(cfg.seed, "mlm-order", epoch));
        let (mut loss_sum, mut count) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let masked: Vec<(usize, MaskedSequence)> = batch
                .iter()
                .map(|&i| {
                    let mut rng = rng_for(cfg.seed, "mlm-mask", epoch * n + i as u64);
                    (i, mask_unchecked(&corpus[i], cfg, vocab, &mut rng))
                })
                .collect();
            let total: usize = masked.iter().map(|(_, m)| m.targets.len()).sum();
            if total == 0 {
                continue;
            }
            model.zero_grad();
            for (i, m) in &masked {
                if m.targets.is_empty() {
                    continue;
                }
                let mut drop_rng = rng_for(cfg.seed, "mlm-dropout", epoch * n + *i as u64);
                let share = m.targets.len() as f64 / total as f64;
                let loss = model.loss(&m.ids, &m.target_list(), Some(&mut drop_rng), Some(share));
                if !loss.is_finite() {
                    return Err(Error::Divergence(format!("non-finite MLM loss in epoch {}", epoch + 1)));
                }
                loss_sum += loss * m.targets.len() as f64;
                count += m.targets.len();
            }
            opt.step(model);
        }
        let mean = if count == 0 { 0.0 } else { loss_sum / count as f64 };
        log::info!("mlm epoch {}/{}: loss {mean:.4}", epoch + 1, cfg.epochs);
        losses.push(mean);
    }
    Ok(losses)
}

/// `exp` of the mean masked-token cross-entropy with a fixed masking seed,
/// in inference mode.
pub fn masked_perplexity(model: &MlmModel, corpus: &[Vec<u32>], cfg: &MlmConfig, seed: u64) -> Result<f64> {
    cfg.validate()?;
    check_corpus(&model.encoder.spec, corpus)?;
    let vocab = model.encoder.spec.vocab_size;
    let mut scratch = model.clone();
    let (mut sum, mut count) = (0.0, 0usize);
    for (i, seq) in corpus.iter().enumerate() {
        let m = mask_unchecked(seq, cfg, vocab, &mut rng_for(seed, "eval-mask", i as u64));
        if m.targets.is_empty() {
            continue;
        }
        sum += scratch.loss(&m.ids, &m.target_list(), None, None) * m.targets.len() as f64;
        count += m.targets.len();
    }
    if count == 0 {
        return Err(Error::validation("held-out corpus yields no masked tokens"));
    }
    Ok((sum / count as f64).exp())
}

fn config_hash(op: &str, cfg: &MlmConfig, parent: Option<&str>, corpus: &[Vec<u32>]) -> String {
    let payload = serde_json::json!({
        "op": op,
        "config": cfg,
        "parent": parent,
        "corpus": corpus_fingerprint(corpus),
    });
    sha256_hex(payload.to_string().as_bytes())
}

pub fn random_init(spec: &EncoderSpec, seed: u64) -> Result<Checkpoint> {
    spec.validate()?;
    let model = MlmModel {
        encoder: TransformerEncoder::new(spec, derive_seed(seed, "init-encoder", 0)),
        head: MlmHead::new(spec.hidden_size, spec.vocab_size, derive_seed(seed, "init-mlm-head", 0)),
    };
    let spec_json = serde_json::to_string(spec)?;
    Ok(Checkpoint {
        stage: Stage::RandomInit,
        model,
        provenance: CheckpointProvenance {
            config_hash: sha256_hex(format!("random-init {seed} {spec_json}").as_bytes()),
            seed,
            ..CheckpointProvenance::default()
        },
    })
}

/// Pretrains a freshly initialized encoder on generic (non-domain) text.
pub fn generic_pretrain(spec: &EncoderSpec, corpus: &[Vec<u32>], cfg: &MlmConfig) -> Result<Checkpoint> {
    let base = random_init(spec, cfg.seed)?;
    continue_pretraining(&base, corpus, cfg, Stage::GenericPretrained, "generic-pretrain")
}

/// Continues MLM training of `base` on in-domain text.
pub fn domain_adapt(base: &Checkpoint, corpus: &[Vec<u32>], cfg: &MlmConfig) -> Result<Checkpoint> {
    if base.stage > Stage::GenericPretrained {
        return Err(Error::validation(format!(
            "domain adaptation needs a random-init or generic-pretrained base, got {:?}",
            base.stage
        )));
    }
    continue_pretraining(base, corpus, cfg, Stage::DomainAdapted, "domain-adapt")
}

fn continue_pretraining(
    base: &Checkpoint,
    corpus: &[Vec<u32>],
    cfg: &MlmConfig,
    stage: Stage,
    op: &str,
) -> Result<Checkpoint> {
    let stage = base.stage.advance(stage)?;
    let mut model = base.model.clone();
    let epoch_losses = train_mlm(&mut model, corpus, cfg)?;
    model.zero_grad();
    Ok(Checkpoint {
        stage,
        model,
        provenance: CheckpointProvenance {
            config_hash: config_hash(op, cfg, Some(&base.provenance.config_hash), corpus),
            parent_hash: Some(base.provenance.config_hash.clone()),
            seed: cfg.seed,
            corpus_size: corpus.len(),
            epoch_losses,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_counts_are_exact() {
        let ids: Vec<u32> = std::iter::once(2).chain((0..100).map(|i| 5 + i % 40)).chain([3]).collect();
        let cfg = MlmConfig::default();
        let m = mask_tokens(&ids, &cfg, 60, &mut rng_for(1, "t", 0)).unwrap();
        assert_eq!(m.targets.len(), 15);
        assert!(!m.targets.contains_key(&0) && !m.targets.contains_key(&101));
        let pure = MlmConfig { mask_action_split: [1.0, 0.0, 0.0], ..cfg.clone() };
        let m = mask_tokens(&ids, &pure, 60, &mut rng_for(1, "t", 0)).unwrap();
        assert!(m.targets.keys().all(|&p| m.ids[p] == MASK));
        assert!(mask_tokens(&[2, 3], &cfg, 60, &mut rng_for(1, "t", 0)).is_err());
    }
}
