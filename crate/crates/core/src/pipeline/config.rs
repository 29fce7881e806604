use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifiers::{TrainConfig, VisionSpec};
use crate::corpus::CorpusSpec;
use crate::encoders::{EncoderSpec, MlmConfig};
use crate::error::{Error, Result};
use crate::eval::{SplitConfig, Weighting};
use crate::extraction::PatternGrammar;
use crate::preprocess::{NormalizationConfig, DEFAULT_LIMIT};
use crate::util::sha256_hex;

/// Model arms compared in a benchmark run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    /// Text classifier on the generic-pretrained encoder.
    TextGeneric,
    /// Text classifier on the domain-adapted encoder.
    TextDa,
    Vision,
    /// Domain-adapted text encoder fused with the vision encoder.
    Multimodal,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::TextGeneric, Arm::TextDa, Arm::Vision, Arm::Multimodal];

    pub fn name(self) -> &'static str {
        match self {
            Arm::TextGeneric => "text-generic",
            Arm::TextDa => "text-da",
            Arm::Vision => "vision",
            Arm::Multimodal => "multimodal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    /// Existing corpus directory; when unset the corpus is generated from `spec`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub spec: CorpusSpec,
    /// Documents of generic text used for generic pretraining.
    pub generic_documents: usize,
    pub generic_seed: u64,
    /// Domain reports kept out of adaptation for the perplexity check.
    pub heldout_reports: usize,
    pub heldout_seed: u64,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            path: None,
            spec: CorpusSpec::default(),
            generic_documents: 2000,
            generic_seed: 1,
            heldout_reports: 200,
            heldout_seed: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    pub vocab_size: usize,
    /// Token limit of model inputs, at most the encoder's `max_positions`.
    pub limit: usize,
}

impl Default for InputSection {
    fn default() -> Self {
        InputSection {
            vocab_size: 1000,
            limit: DEFAULT_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisionSection {
    pub model: VisionSpec,
    pub train: TrainConfig,
}

impl Default for VisionSection {
    fn default() -> Self {
        use crate::classifiers::Augmentation::*;
        VisionSection {
            model: VisionSpec::default(),
            train: TrainConfig {
                augmentations: vec![Hflip, Vflip, Rotate, Translate],
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub splits: SplitConfig,
    pub weighting: Weighting,
    pub arms: Vec<Arm>,
    /// Optional `exam_id,predicted_ds` file scored as a reference row.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expert_file: Option<PathBuf>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            splits: SplitConfig::default(),
            weighting: Weighting::Linear,
            arms: Arm::ALL.to_vec(),
            expert_file: None,
        }
    }
}

/// One benchmark run. Relative paths are resolved against the directory of
/// the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds model initialization (heads, vision encoders); every other
    /// stochastic stage has its own seed in its section.
    pub seed: u64,
    /// Fold jobs trained concurrently.
    pub workers: usize,
    pub grammar: PathBuf,
    /// Keep a model bundle for every arm and fold.
    pub save_models: bool,
    pub corpus: CorpusSection,
    pub normalization: NormalizationConfig,
    pub inputs: InputSection,
    pub encoder: EncoderSpec,
    pub generic_pretraining: MlmConfig,
    pub domain_adaptation: MlmConfig,
    /// Optional `(d1, d2)` widths of the classifier head; defaults to the input width.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head_hidden: Option<(usize, usize)>,
    pub text: TrainConfig,
    pub vision: VisionSection,
    pub multimodal: TrainConfig,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            workers: 1,
            grammar: PathBuf::new(),
            save_models: false,
            corpus: CorpusSection::default(),
            normalization: NormalizationConfig::default(),
            inputs: InputSection::default(),
            encoder: EncoderSpec::default(),
            generic_pretraining: MlmConfig::default(),
            domain_adaptation: MlmConfig::default(),
            head_hidden: None,
            text: TrainConfig::default(),
            vision: VisionSection::default(),
            multimodal: TrainConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Parses a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = crate::util::read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.grammar = resolve(base, &self.grammar);
        if let Some(p) = &self.corpus.path {
            self.corpus.path = Some(resolve(base, p));
        }
        if let Some(p) = &self.eval.expert_file {
            self.eval.expert_file = Some(resolve(base, p));
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::validation(format!("config does not serialize: {e}")))
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_toml_string()?.as_bytes()))
    }

    /// Checks every section and referenced path without doing any work.
    pub fn validate(&self) -> Result<PatternGrammar> {
        if self.workers == 0 {
            return Err(Error::validation("workers must be at least 1"));
        }
        if !self.grammar.is_file() {
            return Err(Error::validation(format!("grammar file {} does not exist", self.grammar.display())));
        }
        let grammar = PatternGrammar::load(&self.grammar)?;
        match &self.corpus.path {
            Some(p) if !p.join(crate::corpus::MANIFEST_FILE).is_file() => {
                return Err(Error::validation(format!("corpus directory {} has no manifest", p.display())));
            }
            Some(_) => {}
            None => self.corpus.spec.validate()?,
        }
        if let Some(p) = &self.eval.expert_file {
            if !p.is_file() {
                return Err(Error::validation(format!("expert file {} does not exist", p.display())));
            }
        }
        crate::preprocess::Normalizer::new(self.normalization.clone())?;
        if self.inputs.vocab_size <= crate::preprocess::N_SPECIAL as usize {
            return Err(Error::validation("inputs.vocab_size leaves no room beyond special tokens"));
        }
        if self.inputs.limit < 3 || self.inputs.limit > self.encoder.max_positions {
            return Err(Error::validation(format!(
                "inputs.limit {} must lie in 3..={} (encoder max_positions)",
                self.inputs.limit, self.encoder.max_positions
            )));
        }
        EncoderSpec {
            vocab_size: self.inputs.vocab_size,
            ..self.encoder.clone()
        }
        .validate()?;
        self.generic_pretraining.validate()?;
        self.domain_adaptation.validate()?;
        self.text.validate()?;
        self.vision.train.validate()?;
        self.vision.model.validate()?;
        self.multimodal.validate()?;
        if self.corpus.path.is_none() && self.corpus.spec.image_size != self.vision.model.input_size {
            let uses_images = self.eval.arms.iter().any(|a| matches!(a, Arm::Vision | Arm::Multimodal));
            if uses_images {
                return Err(Error::validation(format!(
                    "corpus image size {:?} differs from vision input size {:?}",
                    self.corpus.spec.image_size, self.vision.model.input_size
                )));
            }
        }
        if let Some((a, b)) = self.head_hidden {
            if a == 0 || b == 0 {
                return Err(Error::validation("head_hidden widths must be positive"));
            }
        }
        self.eval.splits.validate()?;
        if self.eval.arms.is_empty() {
            return Err(Error::validation("eval.arms is empty"));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(a) = self.eval.arms.iter().find(|a| !seen.insert(**a)) {
            return Err(Error::validation(format!("arm {} listed twice", a.name())));
        }
        if self.corpus.generic_documents == 0 && self.eval.arms.iter().any(|a| *a != Arm::Vision) {
            return Err(Error::validation("generic pretraining needs corpus.generic_documents > 0"));
        }
        Ok(grammar)
    }
}
