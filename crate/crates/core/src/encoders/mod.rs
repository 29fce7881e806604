//! Small transformer text encoders, masked-language-model pretraining and
//! domain adaptation, and encoder checkpoints.

mod mlm;
mod model;

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

pub use mlm::{
    domain_adapt, generic_pretrain, mask_tokens, masked_perplexity, random_init, train_mlm, MaskedSequence,
    MlmConfig,
};
pub use model::{EncoderCache, MlmHead, MlmModel, TransformerEncoder};

use crate::error::{Error, IoContext, Result};
use crate::nn::{load_module, save_module};
use crate::preprocess::{TokenSequence, N_SPECIAL};
use crate::util::{read_json, sha256_hex, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSpec {
    pub n_layers: usize,
    pub n_heads: usize,
    pub hidden_size: usize,
    pub ff_size: usize,
    pub max_positions: usize,
    pub vocab_size: usize,
    pub dropout: f64,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec {
            n_layers: 2,
            n_heads: 4,
            hidden_size: 64,
            ff_size: 128,
            max_positions: 512,
            vocab_size: 0,
            dropout: 0.1,
        }
    }
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::validation(format!("encoder spec: {m}")));
        if self.n_layers == 0 || self.n_heads == 0 || self.hidden_size == 0 || self.ff_size == 0 {
            return fail("layer, head, hidden and feed-forward sizes must be positive".into());
        }
        if self.hidden_size % self.n_heads != 0 {
            return fail(format!("hidden_size {} not divisible by n_heads {}", self.hidden_size, self.n_heads));
        }
        if self.max_positions < 3 {
            return fail("max_positions must be at least 3".into());
        }
        if self.vocab_size <= N_SPECIAL as usize {
            return fail(format!("vocab_size {} leaves no room beyond special tokens", self.vocab_size));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn check_ids(&self, ids: &[u32]) -> Result<()> {
        if ids.len() > self.max_positions {
            return Err(Error::validation(format!(
                "sequence of {} tokens exceeds max_positions {}",
                ids.len(),
                self.max_positions
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= self.vocab_size) {
            return Err(Error::validation(format!(
                "token id {bad} outside encoder vocabulary of {}",
                self.vocab_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    RandomInit,
    GenericPretrained,
    DomainAdapted,
    FineTuned,
}

impl Stage {
    pub fn advance(self, next: Stage) -> Result<Stage> {
        if next > self {
            Ok(next)
        } else {
            Err(Error::validation(format!("cannot move checkpoint from {self:?} to {next:?}")))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointProvenance {
    pub config_hash: String,
    pub parent_hash: Option<String>,
    pub seed: u64,
    pub corpus_size: usize,
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stage: Stage,
    pub model: MlmModel,
    pub provenance: CheckpointProvenance,
}

/// A checkpoint persisted on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRef {
    pub path: PathBuf,
    pub stage: Stage,
    pub spec: EncoderSpec,
    pub provenance: CheckpointProvenance,
}

#[derive(Serialize, Deserialize)]
struct SpecFile {
    stage: Stage,
    encoder: EncoderSpec,
}

pub const SPEC_FILE: &str = "spec.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const PROVENANCE_FILE: &str = "provenance.json";

impl Checkpoint {
    pub fn spec(&self) -> &EncoderSpec {
        &self.model.encoder.spec
    }

    pub fn encoder(&self) -> &TransformerEncoder {
        &self.model.encoder
    }

    pub fn save(&self, dir: &Path) -> Result<CheckpointRef> {
        std::fs::create_dir_all(dir).at(dir)?;
        write_json(
            &dir.join(SPEC_FILE),
            &SpecFile {
                stage: self.stage,
                encoder: self.spec().clone(),
            },
        )?;
        save_module(&self.model, &dir.join(WEIGHTS_FILE))?;
        write_json(&dir.join(PROVENANCE_FILE), &self.provenance)?;
        Ok(CheckpointRef {
            path: dir.to_path_buf(),
            stage: self.stage,
            spec: self.spec().clone(),
            provenance: self.provenance.clone(),
        })
    }

    pub fn load(dir: &Path) -> Result<Checkpoint> {
        let spec: SpecFile = read_json(&dir.join(SPEC_FILE))?;
        spec.encoder.validate()?;
        let mut model = MlmModel {
            encoder: TransformerEncoder::new(&spec.encoder, 0),
            head: MlmHead::new(spec.encoder.hidden_size, spec.encoder.vocab_size, 0),
        };
        load_module(&mut model, &dir.join(WEIGHTS_FILE))?;
        Ok(Checkpoint {
            stage: spec.stage,
            model,
            provenance: read_json(&dir.join(PROVENANCE_FILE))?,
        })
    }
}

impl CheckpointRef {
    pub fn open(dir: &Path) -> Result<CheckpointRef> {
        let spec: SpecFile = read_json(&dir.join(SPEC_FILE))?;
        Ok(CheckpointRef {
            path: dir.to_path_buf(),
            stage: spec.stage,
            spec: spec.encoder,
            provenance: read_json(&dir.join(PROVENANCE_FILE))?,
        })
    }

    pub fn load(&self) -> Result<Checkpoint> {
        Checkpoint::load(&self.path)
    }
}

/// Pluggable text encoder. Externally pretrained encoders can implement this
/// to stand in for [`TransformerEncoder`] in frozen-encoder classifiers.
pub trait EncoderBackend: Send + Sync {
    fn hidden_size(&self) -> usize;
    fn vocab_size(&self) -> usize;
    fn encode_ids(&self, ids: &[u32]) -> Result<Array2<f64>>;
}

impl EncoderBackend for TransformerEncoder {
    fn hidden_size(&self) -> usize {
        self.spec.hidden_size
    }

    fn vocab_size(&self) -> usize {
        self.spec.vocab_size
    }

    fn encode_ids(&self, ids: &[u32]) -> Result<Array2<f64>> {
        self.spec.check_ids(ids)?;
        Ok(self.forward(ids, None).0)
    }
}

/// Inference-mode hidden states and pooled (first-token) vector.
pub fn encode(seq: &TokenSequence, encoder: &dyn EncoderBackend) -> Result<(Array2<f64>, Array1<f64>)> {
    if seq.is_empty() {
        return Err(Error::validation("cannot encode an empty sequence"));
    }
    let states = encoder.encode_ids(&seq.ids)?;
    let pooled = states.row(0).to_owned();
    Ok((states, pooled))
}

pub(crate) fn corpus_fingerprint(corpus: &[Vec<u32>]) -> String {
    let mut bytes = Vec::new();
    for seq in corpus {
        for id in seq {
            bytes.extend_from_slice(&id.to_le_bytes());
        }
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
    }
    sha256_hex(&bytes)
}
