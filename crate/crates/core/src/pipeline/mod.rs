//! Config-driven benchmark runner. Each stage writes into its own
//! subdirectory of the output directory and is recorded, with checksums of
//! every file it wrote, in `run_manifest.json` once it completes.

mod config;
pub mod steps;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{Arm, CorpusSection, EvalSection, ExperimentConfig, InputSection, VisionSection};

use crate::classifiers::save_bundle;
use crate::corpus::{generate_corpus, generate_generic_text, load_corpus, save_corpus, CorpusSpec};
use crate::encoders::{domain_adapt, generic_pretrain, masked_perplexity, Checkpoint, CheckpointProvenance, EncoderSpec};
use crate::error::{Error, IoContext, Result};
use crate::eval::{aggregate, compare_expert, make_splits, make_stratified_splits, read_label_csv, report, FoldResult, MetricSummary, SplitPlan};
use crate::extraction::{Extractor, PatternGrammar};
use crate::preprocess::{read_sequences, train_subword_vocab, Normalizer, Vocabulary};
use crate::rng::rng_for;
use crate::util::{read_json, sha256_hex, write_json};
use steps::*;

pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const GRAMMAR_FILE: &str = "grammar.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Corpus,
    Extract,
    Preprocess,
    Pretrain,
    Adapt,
    Splits,
    Classifiers,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Corpus,
        Stage::Extract,
        Stage::Preprocess,
        Stage::Pretrain,
        Stage::Adapt,
        Stage::Splits,
        Stage::Classifiers,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Corpus => "corpus",
            Stage::Extract => "extract",
            Stage::Preprocess => "preprocess",
            Stage::Pretrain => "pretrain",
            Stage::Adapt => "adapt",
            Stage::Splits => "splits",
            Stage::Classifiers => "classifiers",
            Stage::Eval => "eval",
        }
    }

    /// Output subdirectory of the stage.
    pub fn dir(self) -> &'static str {
        self.name()
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Path relative to the output directory -> SHA-256.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    /// Copied config and grammar.
    pub setup: BTreeMap<String, String>,
    /// Completed stages in execution order.
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn completed(&self) -> Vec<Stage> {
        self.stages.iter().map(|s| s.stage).collect()
    }

    /// Every file path recorded, relative to the output directory.
    pub fn files(&self) -> impl Iterator<Item = &String> {
        self.setup.keys().chain(self.stages.iter().flat_map(|s| s.files.keys()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub heldout_reports: usize,
    pub generic: f64,
    pub adapted: f64,
    /// `1 - adapted / generic`.
    pub relative_drop: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub ran: Vec<Stage>,
    pub skipped: Vec<Stage>,
}

fn seeds_of(cfg: &ExperimentConfig) -> BTreeMap<String, u64> {
    [
        ("global", cfg.seed),
        ("corpus", cfg.corpus.spec.seed),
        ("generic_text", cfg.corpus.generic_seed),
        ("heldout", cfg.corpus.heldout_seed),
        ("generic_pretraining", cfg.generic_pretraining.seed),
        ("domain_adaptation", cfg.domain_adaptation.seed),
        ("splits", cfg.eval.splits.seed),
        ("text", cfg.text.seed),
        ("vision", cfg.vision.train.seed),
        ("multimodal", cfg.multimodal.seed),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn stage_seed(cfg: &ExperimentConfig, stage: Stage) -> Option<u64> {
    match stage {
        Stage::Corpus => Some(cfg.corpus.spec.seed),
        Stage::Pretrain => Some(cfg.generic_pretraining.seed),
        Stage::Adapt => Some(cfg.domain_adaptation.seed),
        Stage::Splits => Some(cfg.eval.splits.seed),
        Stage::Classifiers => Some(cfg.seed),
        Stage::Extract | Stage::Preprocess | Stage::Eval => None,
    }
}

fn list_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir).at(dir)?.collect::<std::io::Result<_>>().at(dir)?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if path.is_dir() {
            list_files(root, &path, out)?;
        } else {
            let bytes = fs::read(&path).at(&path)?;
            let rel = path.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
            out.insert(rel, sha256_hex(&bytes));
        }
    }
    Ok(())
}

fn verify_files(root: &Path, files: &BTreeMap<String, String>) -> Result<()> {
    for (rel, expected) in files {
        let path = root.join(rel);
        let bytes = fs::read(&path).map_err(|e| Error::Unrecoverable(format!("{}: {e}", path.display())))?;
        if &sha256_hex(&bytes) != expected {
            return Err(Error::Unrecoverable(format!("checksum mismatch for {}", path.display())));
        }
    }
    Ok(())
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    grammar: PatternGrammar,
    out: &'a Path,
    manifest: RunManifest,
}

impl Run<'_> {
    fn dir(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.dir())
    }

    fn save_manifest(&self) -> Result<()> {
        write_json(&self.out.join(RUN_MANIFEST), &self.manifest)
    }

    fn execute(&mut self, stage: Stage) -> Result<()> {
        let dir = self.dir(stage);
        if dir.exists() {
            fs::remove_dir_all(&dir).at(&dir)?;
        }
        fs::create_dir_all(&dir).at(&dir)?;
        log::info!("stage {}: start", stage.name());
        match stage {
            Stage::Corpus => self.corpus(&dir),
            Stage::Extract => self.extract(&dir),
            Stage::Preprocess => self.preprocess(&dir),
            Stage::Pretrain => self.pretrain(&dir),
            Stage::Adapt => self.adapt(&dir),
            Stage::Splits => self.splits(&dir),
            Stage::Classifiers => self.classifiers(&dir),
            Stage::Eval => self.eval(&dir),
        }
        .map_err(|e| e.in_stage(stage.name()))?;
        let mut files = BTreeMap::new();
        list_files(self.out, &dir, &mut files)?;
        self.manifest.stages.push(StageRecord {
            stage,
            config_hash: sha256_hex(format!("{}:{}", stage.name(), self.manifest.config_hash).as_bytes()),
            seed: stage_seed(self.cfg, stage),
            files,
        });
        self.save_manifest()?;
        log::info!("stage {}: done", stage.name());
        Ok(())
    }

    fn uses_text(&self) -> bool {
        self.cfg.eval.arms.iter().any(|a| *a != Arm::Vision)
    }

    fn corpus(&self, dir: &Path) -> Result<()> {
        let c = &self.cfg.corpus;
        let (main, heldout, spec) = match &c.path {
            Some(path) => {
                let (manifest, mut exams) = load_corpus(path)?;
                exams.sort_by(|a, b| a.exam_id.cmp(&b.exam_id));
                let mut order: Vec<usize> = (0..exams.len()).collect();
                rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng_for(c.heldout_seed, "heldout", 0));
                let held: std::collections::HashSet<usize> = order.into_iter().take(c.heldout_reports).collect();
                let (h, m): (Vec<_>, Vec<_>) = exams.into_iter().enumerate().partition(|(i, _)| held.contains(i));
                let strip = |v: Vec<(usize, _)>| v.into_iter().map(|(_, e)| e).collect::<Vec<_>>();
                (strip(m), strip(h), manifest.spec)
            }
            None => {
                let main = generate_corpus(&c.spec)?;
                let heldout = if c.heldout_reports > 0 {
                    generate_corpus(&CorpusSpec {
                        n_exams: c.heldout_reports,
                        seed: c.heldout_seed,
                        with_images: false,
                        ..c.spec.clone()
                    })?
                } else {
                    Vec::new()
                };
                (main, heldout, Some(c.spec.clone()))
            }
        };
        save_corpus(&dir.join("main"), &main, spec.as_ref(), None)?;
        if !heldout.is_empty() {
            save_corpus(&dir.join("heldout"), &heldout, None, Some("held out from adaptation"))?;
        }
        write_lines(&dir.join("generic.txt"), &generate_generic_text(c.generic_documents, c.generic_seed))
    }

    fn extract(&self, dir: &Path) -> Result<()> {
        let extractor = Extractor::new(self.grammar.clone())?;
        let src = self.dir(Stage::Corpus);
        let (_, main) = load_corpus(&src.join("main"))?;
        let rows = extract_labels(&main, &extractor);
        write_labels(&dir.join("labels.csv"), &rows)?;
        let summary = extract_summary(&main, &rows);
        log::info!("extract: {} of {} exams labeled", summary.included, summary.total);
        write_json(&dir.join("summary.json"), &summary)?;
        save_corpus(&dir.join("redacted"), &redact_corpus(&main, &extractor, &rows), None, Some("redacted"))?;
        if src.join("heldout").exists() {
            let (_, held) = load_corpus(&src.join("heldout"))?;
            let held_rows = extract_labels(&held, &extractor);
            save_corpus(&dir.join("heldout"), &redact_corpus(&held, &extractor, &held_rows), None, Some("redacted"))?;
        }
        Ok(())
    }

    fn preprocess(&self, dir: &Path) -> Result<()> {
        let settings = PreprocessSettings {
            normalization: self.cfg.normalization.clone(),
            inputs: self.cfg.inputs.clone(),
        };
        let normalizer = Normalizer::new(settings.normalization.clone())?;
        let src = self.dir(Stage::Extract);
        let (_, main) = load_corpus(&src.join("redacted"))?;
        let docs = normalize_reports(&main, &normalizer);
        let generic: Vec<String> = read_lines(&self.dir(Stage::Corpus).join("generic.txt"))?
            .iter()
            .map(|t| normalizer.normalize(t))
            .collect();
        let vocab = train_subword_vocab(&vocab_training_text(&generic, &docs), settings.inputs.vocab_size)?;
        let limit = settings.inputs.limit;
        let ids: Vec<String> = main.iter().map(|e| e.exam_id.clone()).collect();
        write_prepared(dir, &ids, &report_sequences(&docs, &vocab, limit)?, &vocab, &settings)?;
        let generic_ids: Vec<Vec<u32>> = generic.iter().map(|t| plain_sequence(t, &vocab, limit)).collect();
        write_id_lines(&dir.join("generic.seq"), &generic_ids)?;
        if src.join("heldout").exists() {
            let (_, held) = load_corpus(&src.join("heldout"))?;
            write_id_lines(
                &dir.join("heldout.seq"),
                &prepare_inputs(&held, &settings, &vocab)?.into_iter().map(|s| s.ids).collect::<Vec<_>>(),
            )?;
        }
        Ok(())
    }

    fn encoder_spec(&self) -> Result<EncoderSpec> {
        let vocab = Vocabulary::load(&self.dir(Stage::Preprocess).join(VOCAB_FILE))?;
        Ok(EncoderSpec {
            vocab_size: vocab.len(),
            ..self.cfg.encoder.clone()
        })
    }

    fn pretrain(&self, dir: &Path) -> Result<()> {
        if !self.uses_text() {
            return Ok(());
        }
        let corpus = read_sequences(&self.dir(Stage::Preprocess).join("generic.seq"))?;
        let ckpt = generic_pretrain(&self.encoder_spec()?, &corpus, &self.cfg.generic_pretraining)?;
        log::info!("generic pretraining losses {:?}", ckpt.provenance.epoch_losses);
        ckpt.save(&dir.join("checkpoint"))?;
        Ok(())
    }

    fn adapt(&self, dir: &Path) -> Result<()> {
        if !self.uses_text() {
            return Ok(());
        }
        let base = Checkpoint::load(&self.dir(Stage::Pretrain).join("checkpoint"))?;
        let pre = self.dir(Stage::Preprocess);
        let (_, corpus) = read_prepared(&pre)?;
        let cfg = &self.cfg.domain_adaptation;
        let adapted = domain_adapt(&base, &corpus, cfg)?;
        log::info!("domain adaptation losses {:?}", adapted.provenance.epoch_losses);
        adapted.save(&dir.join("checkpoint"))?;
        let heldout_path = pre.join("heldout.seq");
        if heldout_path.exists() {
            let heldout = read_sequences(&heldout_path)?;
            let generic = masked_perplexity(&base.model, &heldout, cfg, cfg.seed)?;
            let adapted = masked_perplexity(&adapted.model, &heldout, cfg, cfg.seed)?;
            let report = PerplexityReport {
                heldout_reports: heldout.len(),
                generic,
                adapted,
                relative_drop: 1.0 - adapted / generic,
            };
            log::info!("held-out perplexity {generic:.2} -> {adapted:.2}");
            write_json(&dir.join("perplexity.json"), &report)?;
        }
        Ok(())
    }

    fn splits(&self, dir: &Path) -> Result<()> {
        let rows = read_labels(&self.dir(Stage::Extract).join("labels.csv"))?;
        let labelled: Vec<_> = rows.into_iter().filter_map(|r| r.label.map(|l| (r.exam_id, l))).collect();
        let cfg = &self.cfg.eval.splits;
        let plans = if cfg.stratified {
            make_stratified_splits(&labelled, cfg)?
        } else {
            make_splits(&labelled.into_iter().map(|(id, _)| id).collect::<Vec<_>>(), cfg)?
        };
        write_json(&dir.join("splits.json"), &plans)
    }

    fn classifiers(&self, dir: &Path) -> Result<()> {
        let (_, corpus) = load_corpus(&self.dir(Stage::Extract).join("redacted"))?;
        let pre = self.dir(Stage::Preprocess);
        let (ids, seqs) = read_prepared(&pre)?;
        let examples = labeled_examples(&corpus, &ids, seqs)?;
        let plans: Vec<SplitPlan> = read_json(&self.dir(Stage::Splits).join("splits.json"))?;
        let (generic, adapted) = if self.uses_text() {
            (
                Some(Checkpoint::load(&self.dir(Stage::Pretrain).join("checkpoint"))?),
                Some(Checkpoint::load(&self.dir(Stage::Adapt).join("checkpoint"))?),
            )
        } else {
            (None, None)
        };
        let jobs: Vec<(Arm, &SplitPlan)> = self
            .cfg
            .eval
            .arms
            .iter()
            .flat_map(|&arm| plans.iter().map(move |p| (arm, p)))
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.workers)
            .build()
            .map_err(|e| Error::validation(format!("cannot start worker pool: {e}")))?;
        let results: Vec<Result<()>> = pool.install(|| {
            jobs.par_iter()
                .map(|&(arm, plan)| {
                    let fold_dir = dir.join(arm.name()).join(format!("fold{}", plan.iteration));
                    fs::create_dir_all(&fold_dir).at(&fold_dir)?;
                    let outcome = run_fold(self.cfg, arm, plan, &examples, generic.as_ref(), adapted.as_ref())?;
                    let correct = outcome.predictions.iter().filter(|p| p.truth == p.prediction.predicted).count();
                    log::info!(
                        "{} fold {}: test accuracy {:.3} (best epoch {})",
                        arm.name(),
                        plan.iteration,
                        correct as f64 / outcome.predictions.len() as f64,
                        outcome.log.best_epoch
                    );
                    write_scored_predictions(&fold_dir.join("predictions.csv"), &outcome.predictions)?;
                    outcome.log.write_csv(&fold_dir.join("train_log.csv"))?;
                    if self.cfg.save_models {
                        let source = match arm {
                            Arm::TextGeneric => generic.as_ref(),
                            Arm::TextDa | Arm::Multimodal => adapted.as_ref(),
                            Arm::Vision => None,
                        };
                        let train_cfg = arm_train_config(self.cfg, arm, plan.iteration);
                        let provenance = CheckpointProvenance {
                            config_hash: sha256_hex(
                                format!("fine-tune {} {} {}", arm.name(), plan.iteration, self.manifest.config_hash).as_bytes(),
                            ),
                            parent_hash: source.map(|s| s.provenance.config_hash.clone()),
                            seed: train_cfg.seed,
                            corpus_size: plan.train_ids.len(),
                            epoch_losses: outcome.log.epochs.iter().map(|e| e.train_loss).collect(),
                        };
                        save_bundle(&fold_dir.join("model"), &outcome.model, &outcome.log, &provenance)?;
                    }
                    Ok(())
                })
                .collect()
        });
        results.into_iter().collect()
    }

    fn eval(&self, dir: &Path) -> Result<()> {
        let plans: Vec<SplitPlan> = read_json(&self.dir(Stage::Splits).join("splits.json"))?;
        let weighting = self.cfg.eval.weighting;
        let summaries = self
            .cfg
            .eval
            .arms
            .iter()
            .map(|arm| {
                let folds = plans
                    .iter()
                    .map(|p| {
                        let path = self
                            .dir(Stage::Classifiers)
                            .join(arm.name())
                            .join(format!("fold{}", p.iteration))
                            .join("predictions.csv");
                        FoldResult::new(p.iteration, read_scored_predictions(&path)?, weighting)
                    })
                    .collect::<Result<Vec<_>>>()?;
                aggregate(arm.name(), weighting, folds)
            })
            .collect::<Result<Vec<MetricSummary>>>()?;
        let expert = match &self.cfg.eval.expert_file {
            Some(path) => {
                let rows = read_labels(&self.dir(Stage::Extract).join("labels.csv"))?;
                let truths = rows.into_iter().filter_map(|r| r.label.map(|l| (r.exam_id, l))).collect();
                Some(compare_expert(&read_label_csv(path)?, &truths, weighting)?)
            }
            None => None,
        };
        report(dir, &summaries, expert.as_ref())?;
        write_json(&dir.join("summaries.json"), &summaries)?;
        if let Some(e) = &expert {
            write_json(&dir.join("expert.json"), e)?;
        }
        Ok(())
    }
}

fn run_stages(run: &mut Run<'_>, until: Option<Stage>) -> Result<RunOutcome> {
    let done = run.manifest.completed();
    let mut outcome = RunOutcome {
        out_dir: run.out.to_path_buf(),
        ran: Vec::new(),
        skipped: done.clone(),
    };
    for stage in Stage::ALL {
        if done.contains(&stage) {
            continue;
        }
        if until.is_some_and(|u| stage > u) {
            break;
        }
        run.execute(stage)?;
        outcome.ran.push(stage);
    }
    Ok(outcome)
}

/// Runs every stage (or stages up to and including `until`) into `out`.
/// An existing run directory is cleared first; any other non-empty
/// directory is refused.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, until: Option<Stage>) -> Result<RunOutcome> {
    let grammar = cfg.validate()?;
    if out.exists() && fs::read_dir(out).at(out)?.next().is_some() {
        if !out.join(RUN_MANIFEST).is_file() {
            return Err(Error::validation(format!(
                "{} is not empty and holds no run manifest",
                out.display()
            )));
        }
        for name in Stage::ALL.iter().map(|s| s.dir()).chain([RUN_MANIFEST, CONFIG_FILE, GRAMMAR_FILE]) {
            let p = out.join(name);
            if p.is_dir() {
                fs::remove_dir_all(&p).at(&p)?;
            } else if p.exists() {
                fs::remove_file(&p).at(&p)?;
            }
        }
    }
    fs::create_dir_all(out).at(out)?;
    let grammar_text = fs::read(&cfg.grammar).at(&cfg.grammar)?;
    let mut stored = cfg.clone();
    stored.grammar = PathBuf::from(GRAMMAR_FILE);
    let config_text = stored.to_toml_string()?;
    fs::write(out.join(GRAMMAR_FILE), &grammar_text).at(out.join(GRAMMAR_FILE))?;
    fs::write(out.join(CONFIG_FILE), &config_text).at(out.join(CONFIG_FILE))?;
    let setup = [(CONFIG_FILE, config_text.as_bytes()), (GRAMMAR_FILE, grammar_text.as_slice())]
        .into_iter()
        .map(|(k, v)| (k.to_string(), sha256_hex(v)))
        .collect();
    let mut run = Run {
        cfg,
        grammar,
        out,
        manifest: RunManifest {
            config_hash: sha256_hex(format!("{config_text}\n{}", sha256_hex(&grammar_text)).as_bytes()),
            seeds: seeds_of(cfg),
            setup,
            stages: Vec::new(),
        },
    };
    run.save_manifest()?;
    run_stages(&mut run, until)
}

/// Reads and checks a run directory's manifest: every recorded file must
/// match its checksum.
pub fn load_run_manifest(out: &Path) -> Result<RunManifest> {
    let path = out.join(RUN_MANIFEST);
    let bytes = fs::read(&path).map_err(|e| Error::Unrecoverable(format!("{}: {e}", path.display())))?;
    let manifest: RunManifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::Unrecoverable(format!("corrupted run manifest: {e}")))?;
    let order = manifest.completed();
    if order.iter().zip(Stage::ALL).any(|(a, b)| *a != b) {
        return Err(Error::Unrecoverable(format!("stage order {order:?} in manifest is not a prefix of the pipeline")));
    }
    verify_files(out, &manifest.setup)?;
    for s in &manifest.stages {
        verify_files(out, &s.files)?;
    }
    Ok(manifest)
}

/// Continues an interrupted run. Completed stages are verified by checksum
/// and skipped; a finished run is a no-op.
pub fn resume(out: &Path, until: Option<Stage>) -> Result<RunOutcome> {
    let manifest = load_run_manifest(out)?;
    let cfg = ExperimentConfig::load(&out.join(CONFIG_FILE)).map_err(|e| Error::Unrecoverable(format!("stored config: {e}")))?;
    let config_text = cfg_text_for_hash(&cfg)?;
    let grammar_text = fs::read(out.join(GRAMMAR_FILE)).map_err(|e| Error::Unrecoverable(e.to_string()))?;
    let hash = sha256_hex(format!("{config_text}\n{}", sha256_hex(&grammar_text)).as_bytes());
    if hash != manifest.config_hash {
        return Err(Error::Unrecoverable("stored config does not match the manifest hash".into()));
    }
    let grammar = cfg.validate().map_err(|e| Error::Unrecoverable(format!("stored config: {e}")))?;
    let mut run = Run {
        cfg: &cfg,
        grammar,
        out,
        manifest,
    };
    run_stages(&mut run, until)
}

fn cfg_text_for_hash(cfg: &ExperimentConfig) -> Result<String> {
    let mut stored = cfg.clone();
    stored.grammar = PathBuf::from(GRAMMAR_FILE);
    stored.to_toml_string()
}
