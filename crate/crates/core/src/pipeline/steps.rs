//! Stage building blocks shared by the experiment runner and the CLI verbs.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Arm, ExperimentConfig, InputSection};
use crate::classifiers::{
    train_classifier, Classifier, Example, ModelKind, Prediction, TrainConfig, TrainLog, VisionEncoder, VisionSpec, N_CLASSES,
};
use crate::corpus::{DeauvilleLabel, ExamRecord, ReportDocument};
use crate::encoders::Checkpoint;
use crate::error::{Error, IoContext, Result};
use crate::eval::{ScoredPrediction, SplitPlan};
use crate::extraction::{assign_exam_label, Extractor};
use crate::preprocess::{
    build_input, read_sequences, write_section_maps, write_sequences, NormalizationConfig, Normalizer, TokenSequence,
    Vocabulary, SEP, START,
};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub exam_id: String,
    /// Highest score mentioned; `None` excludes the exam from supervised work.
    pub label: Option<DeauvilleLabel>,
    pub n_mentions: usize,
}

pub fn extract_labels(corpus: &[ExamRecord], extractor: &Extractor) -> Vec<LabelRow> {
    corpus
        .iter()
        .map(|exam| {
            let mentions = extractor.find_in_report(&exam.report);
            LabelRow {
                exam_id: exam.exam_id.clone(),
                label: assign_exam_label(&mentions),
                n_mentions: mentions.len(),
            }
        })
        .collect()
}

pub fn write_labels(path: &Path, rows: &[LabelRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["exam_id", "label", "n_mentions"])?;
    for r in rows {
        let label = r.label.map(|l| l.value().to_string()).unwrap_or_default();
        w.write_record([r.exam_id.as_str(), &label, &r.n_mentions.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("").trim();
            let label = match field(1) {
                "" => None,
                s => Some(DeauvilleLabel::new(
                    s.parse().map_err(|_| Error::validation(format!("bad label `{s}` in {}", path.display())))?,
                )?),
            };
            Ok(LabelRow {
                exam_id: field(0).to_string(),
                label,
                n_mentions: field(2).parse().map_err(|_| Error::validation(format!("bad mention count in {}", path.display())))?,
            })
        })
        .collect()
}

/// Counts reconciling the extracted labels with the corpus labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub total: usize,
    pub included: usize,
    pub excluded: usize,
    /// Exams carrying a label in the source corpus.
    pub corpus_labeled: usize,
    /// Included exams whose extracted label equals the corpus label.
    pub agreeing: usize,
}

pub fn extract_summary(corpus: &[ExamRecord], rows: &[LabelRow]) -> ExtractSummary {
    let included = rows.iter().filter(|r| r.label.is_some()).count();
    ExtractSummary {
        total: rows.len(),
        included,
        excluded: rows.len() - included,
        corpus_labeled: corpus.iter().filter(|e| e.label.is_some()).count(),
        agreeing: corpus
            .iter()
            .zip(rows)
            .filter(|(e, r)| r.label.is_some() && e.label == r.label)
            .count(),
    }
}

/// Copies of the exams with every mention removed and the extracted label
/// in place of the source label.
pub fn redact_corpus(corpus: &[ExamRecord], extractor: &Extractor, rows: &[LabelRow]) -> Vec<ExamRecord> {
    corpus
        .iter()
        .zip(rows)
        .map(|(exam, row)| ExamRecord {
            report: extractor.redact_report(&exam.report),
            label: row.label,
            provenance: None,
            ..exam.clone()
        })
        .collect()
}

pub fn normalize_reports(corpus: &[ExamRecord], normalizer: &Normalizer) -> Vec<ReportDocument> {
    corpus
        .iter()
        .map(|e| e.report.map_sections(|s| normalizer.normalize(s)))
        .collect()
}

/// Text the subword vocabulary is trained on: generic documents followed by
/// the impression and findings of every domain report.
pub fn vocab_training_text(generic: &[String], reports: &[ReportDocument]) -> Vec<String> {
    generic
        .iter()
        .cloned()
        .chain(reports.iter().map(|r| format!("{} {}", r.impression, r.findings)))
        .collect()
}

/// `[START, text, SEP]` truncated to `limit`, for generic documents.
pub fn plain_sequence(text: &str, vocab: &Vocabulary, limit: usize) -> Vec<u32> {
    let mut ids = vec![START];
    ids.extend(vocab.encode(text).into_iter().take(limit.saturating_sub(2)));
    ids.push(SEP);
    ids
}

pub fn report_sequences(reports: &[ReportDocument], vocab: &Vocabulary, limit: usize) -> Result<Vec<TokenSequence>> {
    reports.iter().map(|r| build_input(r, vocab, limit)).collect()
}

/// Files of a preprocessed corpus directory.
pub const SEQUENCES_FILE: &str = "sequences.txt";
pub const SECTIONS_FILE: &str = "sections.jsonl";
pub const EXAMS_FILE: &str = "exams.txt";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const SETTINGS_FILE: &str = "settings.toml";

/// Everything needed to turn a redacted report into model input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSettings {
    pub normalization: NormalizationConfig,
    pub inputs: InputSection,
}

impl Default for PreprocessSettings {
    fn default() -> Self {
        PreprocessSettings {
            normalization: NormalizationConfig::default(),
            inputs: InputSection::default(),
        }
    }
}

impl PreprocessSettings {
    pub fn load(path: &Path) -> Result<Self> {
        crate::util::read_toml(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::validation(format!("settings do not serialize: {e}")))?;
        fs::write(path, text).at(path)
    }
}

/// Normalizes and tokenizes every exam of `corpus`.
pub fn prepare_inputs(corpus: &[ExamRecord], settings: &PreprocessSettings, vocab: &Vocabulary) -> Result<Vec<TokenSequence>> {
    let normalizer = Normalizer::new(settings.normalization.clone())?;
    report_sequences(&normalize_reports(corpus, &normalizer), vocab, settings.inputs.limit)
}

/// Writes a preprocessed corpus directory.
pub fn write_prepared(
    dir: &Path,
    exam_ids: &[String],
    sequences: &[TokenSequence],
    vocab: &Vocabulary,
    settings: &PreprocessSettings,
) -> Result<()> {
    fs::create_dir_all(dir).at(dir)?;
    write_sequences(&dir.join(SEQUENCES_FILE), sequences)?;
    write_section_maps(&dir.join(SECTIONS_FILE), sequences)?;
    write_lines(&dir.join(EXAMS_FILE), exam_ids)?;
    vocab.save(&dir.join(VOCAB_FILE))?;
    settings.save(&dir.join(SETTINGS_FILE))
}

/// `(exam ids, token sequences)` of a preprocessed corpus directory.
pub fn read_prepared(dir: &Path) -> Result<(Vec<String>, Vec<Vec<u32>>)> {
    let ids = read_lines(&dir.join(EXAMS_FILE))?;
    let seqs = read_sequences(&dir.join(SEQUENCES_FILE))?;
    if ids.len() != seqs.len() {
        return Err(Error::validation(format!(
            "{}: {} exam ids but {} sequences",
            dir.display(),
            ids.len(),
            seqs.len()
        )));
    }
    Ok((ids, seqs))
}

pub fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut s = String::new();
    for l in lines {
        s.push_str(l);
        s.push('\n');
    }
    fs::write(path, s).at(path)
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path).at(path)?.lines().map(str::to_string).collect())
}

/// Labeled examples keyed by exam id.
pub fn labeled_examples(corpus: &[ExamRecord], exam_ids: &[String], sequences: Vec<Vec<u32>>) -> Result<BTreeMap<String, Example>> {
    if exam_ids.len() != sequences.len() {
        return Err(Error::validation(format!(
            "{} exam ids but {} token sequences",
            exam_ids.len(),
            sequences.len()
        )));
    }
    let by_id: HashMap<&str, &ExamRecord> = corpus.iter().map(|e| (e.exam_id.as_str(), e)).collect();
    let mut out = BTreeMap::new();
    for (id, ids) in exam_ids.iter().zip(sequences) {
        let exam = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::validation(format!("token sequence for unknown exam {id}")))?;
        if let Some(label) = exam.label {
            out.insert(
                id.clone(),
                Example {
                    exam_id: id.clone(),
                    ids,
                    image: exam.image.clone(),
                    label: Some(label),
                },
            );
        }
    }
    Ok(out)
}

pub fn select(examples: &BTreeMap<String, Example>, ids: &[String]) -> Result<Vec<Example>> {
    ids.iter()
        .map(|id| {
            examples
                .get(id)
                .cloned()
                .ok_or_else(|| Error::validation(format!("split references unknown or unlabeled exam {id}")))
        })
        .collect()
}

/// Training settings of an arm, with the per-fold seed.
pub fn arm_train_config(cfg: &ExperimentConfig, arm: Arm, iteration: usize) -> TrainConfig {
    let base = match arm {
        Arm::TextGeneric | Arm::TextDa => &cfg.text,
        Arm::Vision => &cfg.vision.train,
        Arm::Multimodal => &cfg.multimodal,
    };
    TrainConfig {
        seed: derive_seed(base.seed, "fold", iteration as u64),
        ..base.clone()
    }
}

/// Untrained classifier of an arm. Both text arms get the same head
/// initialization for a given fold, so they differ only in the encoder.
pub fn build_classifier(
    cfg: &ExperimentConfig,
    arm: Arm,
    iteration: usize,
    generic: Option<&Checkpoint>,
    adapted: Option<&Checkpoint>,
) -> Result<Classifier> {
    let head_seed = derive_seed(cfg.seed, "head", iteration as u64);
    let text_of = |c: Option<&Checkpoint>| {
        c.map(|c| (c.model.encoder.clone(), c.model.head.clone()))
            .ok_or_else(|| Error::validation(format!("arm {} needs an encoder checkpoint", arm.name())))
    };
    let vision = || VisionEncoder::new(&cfg.vision.model, derive_seed(cfg.seed, "vision-init", iteration as u64));
    match arm {
        Arm::TextGeneric => Classifier::new(ModelKind::Text, Some(text_of(generic)?), None, cfg.head_hidden, head_seed),
        Arm::TextDa => Classifier::new(ModelKind::Text, Some(text_of(adapted)?), None, cfg.head_hidden, head_seed),
        Arm::Vision => Classifier::new(ModelKind::Vision, None, Some(vision()?), cfg.head_hidden, head_seed),
        Arm::Multimodal => Classifier::new(ModelKind::Multimodal, Some(text_of(adapted)?), Some(vision()?), cfg.head_hidden, head_seed),
    }
}

pub struct FoldOutcome {
    pub model: Classifier,
    pub log: TrainLog,
    pub predictions: Vec<ScoredPrediction>,
}

/// Trains one arm on one split and predicts its test set.
pub fn run_fold(
    cfg: &ExperimentConfig,
    arm: Arm,
    plan: &SplitPlan,
    examples: &BTreeMap<String, Example>,
    generic: Option<&Checkpoint>,
    adapted: Option<&Checkpoint>,
) -> Result<FoldOutcome> {
    let model = build_classifier(cfg, arm, plan.iteration, generic, adapted)?;
    let train = select(examples, &plan.train_ids)?;
    let val = select(examples, &plan.val_ids)?;
    let test = select(examples, &plan.test_ids)?;
    let (model, log) = train_classifier(model, &train, &val, &arm_train_config(cfg, arm, plan.iteration))?;
    let predictions = test
        .iter()
        .map(|ex| {
            Ok(ScoredPrediction {
                prediction: model.predict(ex)?,
                truth: ex.label.expect("labeled"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldOutcome { model, log, predictions })
}

/// `exam_id,p1..p5,predicted[,truth]`.
pub fn predictions_csv(predictions: &[Prediction], truths: Option<&[DeauvilleLabel]>) -> String {
    let mut s = String::from("exam_id,p1,p2,p3,p4,p5,predicted");
    if truths.is_some() {
        s.push_str(",truth");
    }
    s.push('\n');
    for (i, p) in predictions.iter().enumerate() {
        let _ = write!(s, "{}", p.exam_id);
        for v in p.probs {
            let _ = write!(s, ",{v:.6}");
        }
        let _ = write!(s, ",{}", p.predicted.value());
        if let Some(t) = truths {
            let _ = write!(s, ",{}", t[i].value());
        }
        s.push('\n');
    }
    s
}

pub fn write_scored_predictions(path: &Path, scored: &[ScoredPrediction]) -> Result<()> {
    let preds: Vec<Prediction> = scored.iter().map(|s| s.prediction.clone()).collect();
    let truths: Vec<DeauvilleLabel> = scored.iter().map(|s| s.truth).collect();
    fs::write(path, predictions_csv(&preds, Some(&truths))).at(path)
}

pub fn read_scored_predictions(path: &Path) -> Result<Vec<ScoredPrediction>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let bad = || Error::validation(format!("malformed prediction row in {}", path.display()));
            if rec.len() != 8 {
                return Err(bad());
            }
            let mut probs = [0.0; N_CLASSES];
            for (k, p) in probs.iter_mut().enumerate() {
                *p = rec[k + 1].parse().map_err(|_| bad())?;
            }
            let label = |s: &str| -> Result<DeauvilleLabel> { DeauvilleLabel::new(s.parse().map_err(|_| bad())?) };
            Ok(ScoredPrediction {
                prediction: Prediction {
                    exam_id: rec[0].to_string(),
                    probs,
                    predicted: label(&rec[6])?,
                },
                truth: label(&rec[7])?,
            })
        })
        .collect()
}

pub fn write_id_lines(path: &Path, sequences: &[Vec<u32>]) -> Result<()> {
    let lines: Vec<String> = sequences
        .iter()
        .map(|s| s.iter().map(u32::to_string).collect::<Vec<_>>().join(" "))
        .collect();
    write_lines(path, &lines)
}

/// Settings of a stand-alone `train` job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainJobConfig {
    /// Redacted corpus directory; exam labels and images come from here.
    pub corpus: PathBuf,
    /// Preprocessed corpus directory (token sequences, vocabulary, settings).
    pub inputs: PathBuf,
    /// Encoder checkpoint for text and multimodal models.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encoder: Option<PathBuf>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head_hidden: Option<(usize, usize)>,
    pub train: TrainConfig,
    pub vision: VisionSpec,
}

impl Default for TrainJobConfig {
    fn default() -> Self {
        TrainJobConfig {
            corpus: PathBuf::new(),
            inputs: PathBuf::new(),
            encoder: None,
            seed: 0,
            head_hidden: None,
            train: TrainConfig::default(),
            vision: VisionSpec::default(),
        }
    }
}

impl TrainJobConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: TrainJobConfig = crate::util::read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let abs = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        cfg.corpus = abs(&cfg.corpus);
        cfg.inputs = abs(&cfg.inputs);
        cfg.encoder = cfg.encoder.as_deref().map(abs);
        Ok(cfg)
    }
}

/// Subdirectory of a model bundle holding the vocabulary and preprocessing settings.
pub const BUNDLE_INPUTS_DIR: &str = "inputs";

pub struct TrainJobOutcome {
    pub log: TrainLog,
    /// Test-set accuracy when the split has a test set.
    pub test_accuracy: Option<f64>,
}

/// Trains one model on one split plan and saves it as a bundle in `out`.
pub fn run_train_job(kind: ModelKind, job: &TrainJobConfig, plan: &SplitPlan, out: &Path) -> Result<TrainJobOutcome> {
    job.train.validate()?;
    let (_, corpus) = crate::corpus::load_corpus(&job.corpus)?;
    let (ids, seqs) = read_prepared(&job.inputs)?;
    let examples = labeled_examples(&corpus, &ids, seqs)?;
    let source = match (kind.uses_text(), &job.encoder) {
        (true, Some(p)) => Some(Checkpoint::load(p)?),
        (true, None) => return Err(Error::validation(format!("{kind:?} model needs `encoder` in the job config"))),
        (false, _) => None,
    };
    let vision = if kind.uses_image() {
        Some(VisionEncoder::new(&job.vision, derive_seed(job.seed, "vision-init", plan.iteration as u64))?)
    } else {
        None
    };
    let model = Classifier::new(
        kind,
        source.as_ref().map(|c| (c.model.encoder.clone(), c.model.head.clone())),
        vision,
        job.head_hidden,
        derive_seed(job.seed, "head", plan.iteration as u64),
    )?;
    let train = select(&examples, &plan.train_ids)?;
    let val = select(&examples, &plan.val_ids)?;
    let (model, log) = train_classifier(model, &train, &val, &job.train)?;
    let test_accuracy = if plan.test_ids.is_empty() {
        None
    } else {
        Some(crate::classifiers::evaluate(&model, &select(&examples, &plan.test_ids)?)?.1)
    };
    let provenance = crate::encoders::CheckpointProvenance {
        config_hash: crate::util::sha256_hex(serde_json::to_string(&(job, plan))?.as_bytes()),
        parent_hash: source.as_ref().map(|s| s.provenance.config_hash.clone()),
        seed: job.train.seed,
        corpus_size: train.len(),
        epoch_losses: log.epochs.iter().map(|e| e.train_loss).collect(),
    };
    crate::classifiers::save_bundle(out, &model, &log, &provenance)?;
    let inputs = out.join(BUNDLE_INPUTS_DIR);
    fs::create_dir_all(&inputs).at(&inputs)?;
    for name in [VOCAB_FILE, SETTINGS_FILE] {
        let from = job.inputs.join(name);
        fs::copy(&from, inputs.join(name)).at(&from)?;
    }
    Ok(TrainJobOutcome { log, test_accuracy })
}

/// Predicts every exam of a (redacted) corpus with a saved bundle.
pub fn predict_corpus(bundle: &Path, corpus: &[ExamRecord]) -> Result<Vec<Prediction>> {
    let model = crate::classifiers::load_bundle(bundle)?;
    let sequences = if model.kind.uses_text() {
        let inputs = bundle.join(BUNDLE_INPUTS_DIR);
        let vocab = Vocabulary::load(&inputs.join(VOCAB_FILE))?;
        let settings = PreprocessSettings::load(&inputs.join(SETTINGS_FILE))?;
        prepare_inputs(corpus, &settings, &vocab)?.into_iter().map(|s| s.ids).collect()
    } else {
        vec![Vec::new(); corpus.len()]
    };
    corpus
        .iter()
        .zip(sequences)
        .map(|(exam, ids)| {
            model.predict(&Example {
                exam_id: exam.exam_id.clone(),
                ids,
                image: exam.image.clone(),
                label: None,
            })
        })
        .collect()
}
