use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deauville::classifiers::ModelKind;
use deauville::corpus::{corpus_stats, generate_corpus, generate_generic_text, load_corpus, save_corpus, CorpusSpec};
use deauville::encoders::{domain_adapt, generic_pretrain, Checkpoint, EncoderSpec, MlmConfig};
use deauville::error::{Error, Result};
use deauville::eval::{compare_expert, read_label_csv, truth_map, SplitPlan, Weighting};
use deauville::extraction::{mine_context_ngrams, Extractor, PatternGrammar};
use deauville::pipeline::steps::{
    extract_labels, extract_summary, plain_sequence, predict_corpus, predictions_csv, prepare_inputs, read_prepared,
    redact_corpus, run_train_job, vocab_training_text, write_labels, write_prepared, PreprocessSettings, TrainJobConfig,
};
use deauville::pipeline::{resume, run_experiment, ExperimentConfig, Stage};
use deauville::preprocess::{train_subword_vocab, Normalizer, Vocabulary};

/// Deauville score extraction, domain-adapted report encoders and
/// Monte Carlo benchmark runs.
#[derive(Parser)]
#[command(name = "deauville", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or inspect synthetic corpora.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Deauville score extraction and redaction.
    #[command(subcommand)]
    Extract(ExtractCmd),
    /// Normalization, vocabulary and model-input construction.
    #[command(subcommand)]
    Preprocess(PreprocessCmd),
    /// Masked-language-model pretraining and domain adaptation.
    #[command(subcommand)]
    Encoder(EncoderCmd),
    /// Train a classifier on one split.
    Train(TrainArgs),
    /// Predict Deauville scores for every exam of a corpus.
    Predict(PredictArgs),
    /// Benchmark evaluation and expert comparison.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Run a benchmark config end to end.
    Run(RunArgs),
    /// Continue an interrupted run.
    Resume(ResumeArgs),
}

#[derive(Subcommand)]
enum CorpusCmd {
    Generate {
        /// Corpus spec (TOML); defaults are used for missing keys.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    Stats { dir: PathBuf },
}

#[derive(Subcommand)]
enum ExtractCmd {
    /// Write `exam_id,label,n_mentions` for every exam.
    Labels {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Copy a corpus with every mention removed.
    Redact {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Most frequent n-grams around a term.
    Ngrams {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "deauville")]
        term: String,
        #[arg(long, default_value_t = 2)]
        min_n: usize,
        #[arg(long, default_value_t = 4)]
        max_n: usize,
        #[arg(long, default_value_t = 3)]
        window: usize,
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
}

#[derive(Subcommand)]
enum PreprocessCmd {
    /// Tokenize a corpus. The vocabulary is trained on the corpus and saved
    /// to `--vocab` unless that file already exists.
    Run {
        #[arg(long)]
        corpus: PathBuf,
        /// Preprocessing settings (TOML with `[normalization]` and `[inputs]`).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum EncoderCmd {
    /// Pretrain a fresh encoder on generated generic text.
    PretrainGeneric {
        #[arg(long)]
        vocab: PathBuf,
        /// Encoder spec (TOML); `vocab_size` is taken from the vocabulary.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// One document per line; generated when omitted.
        #[arg(long)]
        text: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        documents: usize,
        #[arg(long, default_value_t = 512)]
        limit: usize,
        #[command(flatten)]
        mlm: MlmArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Continue MLM training of a checkpoint on a preprocessed domain corpus.
    Adapt {
        #[arg(long)]
        base: PathBuf,
        /// Preprocessed corpus directory.
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        mlm: MlmArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct MlmArgs {
    #[arg(long, default_value_t = 3)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.15)]
    mask_rate: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl MlmArgs {
    fn config(&self) -> MlmConfig {
        MlmConfig {
            epochs: self.epochs,
            learning_rate: self.lr,
            mask_rate: self.mask_rate,
            batch_size: self.batch_size,
            seed: self.seed,
            ..MlmConfig::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Text,
    Vision,
    Multimodal,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(value_enum)]
    kind: KindArg,
    /// JSON split plan, or a list of plans (see `--iteration`).
    #[arg(long)]
    split: PathBuf,
    /// Iteration to use when the split file holds several plans.
    #[arg(long, default_value_t = 1)]
    iteration: usize,
    /// Train job config (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Run a benchmark config (same as `run`).
    Run {
        #[arg(long)]
        bench: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an `exam_id,predicted_ds` file against reference labels.
    Expert {
        #[arg(long)]
        file: PathBuf,
        /// `exam_id,label[,...]` file, e.g. the output of `extract labels`.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value = "linear")]
        weighting: String,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Stop after this stage.
    #[arg(long)]
    until: Option<String>,
}

#[derive(Args)]
struct ResumeArgs {
    dir: PathBuf,
    #[arg(long)]
    until: Option<String>,
}

fn grammar_of(path: Option<&Path>) -> Result<PatternGrammar> {
    match path {
        Some(p) => PatternGrammar::load(p),
        None => Ok(PatternGrammar::default()),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn until_of(s: Option<&str>) -> Result<Option<Stage>> {
    s.map(str::parse).transpose()
}

fn read_plan(path: &Path, iteration: usize) -> Result<SplitPlan> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if let Ok(plan) = serde_json::from_slice::<SplitPlan>(&bytes) {
        return Ok(plan);
    }
    let plans: Vec<SplitPlan> = serde_json::from_slice(&bytes)?;
    plans
        .into_iter()
        .find(|p| p.iteration == iteration)
        .ok_or_else(|| Error::validation(format!("{} has no iteration {iteration}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Corpus(CorpusCmd::Generate { spec, out }) => {
            let spec = match spec {
                Some(p) => deauville::read_toml::<CorpusSpec>(&p)?,
                None => CorpusSpec::default(),
            };
            let corpus = generate_corpus(&spec)?;
            let manifest = save_corpus(&out, &corpus, Some(&spec), None)?;
            print_json(&manifest.stats)
        }
        Command::Corpus(CorpusCmd::Stats { dir }) => {
            let (_, corpus) = load_corpus(&dir)?;
            print_json(&corpus_stats(&corpus)?)
        }
        Command::Extract(ExtractCmd::Labels { corpus, grammar, out }) => {
            let extractor = Extractor::new(grammar_of(grammar.as_deref())?)?;
            let (_, exams) = load_corpus(&corpus)?;
            let rows = extract_labels(&exams, &extractor);
            write_labels(&out, &rows)?;
            print_json(&extract_summary(&exams, &rows))
        }
        Command::Extract(ExtractCmd::Redact { corpus, grammar, out }) => {
            let extractor = Extractor::new(grammar_of(grammar.as_deref())?)?;
            let (_, exams) = load_corpus(&corpus)?;
            let rows = extract_labels(&exams, &extractor);
            save_corpus(&out, &redact_corpus(&exams, &extractor, &rows), None, Some("redacted"))?;
            print_json(&extract_summary(&exams, &rows))
        }
        Command::Extract(ExtractCmd::Ngrams { corpus, term, min_n, max_n, window, top }) => {
            let (_, exams) = load_corpus(&corpus)?;
            let reports: Vec<_> = exams.into_iter().map(|e| e.report).collect();
            let report = mine_context_ngrams(&reports, &term, (min_n, max_n), window)?;
            for (gram, count) in report.entries.iter().take(top) {
                println!("{count}\t{gram}");
            }
            Ok(())
        }
        Command::Preprocess(PreprocessCmd::Run { corpus, config, vocab, out }) => {
            let settings = match config {
                Some(p) => PreprocessSettings::load(&p)?,
                None => PreprocessSettings::default(),
            };
            let (_, exams) = load_corpus(&corpus)?;
            let vocabulary = if vocab.exists() {
                Vocabulary::load(&vocab)?
            } else {
                let normalizer = Normalizer::new(settings.normalization.clone())?;
                let docs = deauville::pipeline::steps::normalize_reports(&exams, &normalizer);
                let v = train_subword_vocab(&vocab_training_text(&[], &docs), settings.inputs.vocab_size)?;
                v.save(&vocab)?;
                v
            };
            let seqs = prepare_inputs(&exams, &settings, &vocabulary)?;
            let ids: Vec<String> = exams.iter().map(|e| e.exam_id.clone()).collect();
            write_prepared(&out, &ids, &seqs, &vocabulary, &settings)?;
            let truncated = seqs.iter().filter(|s| s.len() == settings.inputs.limit).count();
            println!("{} sequences written ({truncated} at the {}-token limit)", seqs.len(), settings.inputs.limit);
            Ok(())
        }
        Command::Encoder(EncoderCmd::PretrainGeneric { vocab, spec, text, documents, limit, mlm, out }) => {
            let vocabulary = Vocabulary::load(&vocab)?;
            let mut spec = match spec {
                Some(p) => deauville::read_toml::<EncoderSpec>(&p)?,
                None => EncoderSpec::default(),
            };
            spec.vocab_size = vocabulary.len();
            let limit = limit.min(spec.max_positions);
            let docs = match text {
                Some(p) => fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?.lines().map(str::to_string).collect(),
                None => generate_generic_text(documents, mlm.seed),
            };
            let normalizer = Normalizer::new(Default::default())?;
            let corpus: Vec<Vec<u32>> = docs.iter().map(|d| plain_sequence(&normalizer.normalize(d), &vocabulary, limit)).collect();
            let ckpt = generic_pretrain(&spec, &corpus, &mlm.config())?;
            ckpt.save(&out)?;
            print_json(&ckpt.provenance)
        }
        Command::Encoder(EncoderCmd::Adapt { base, corpus, mlm, out }) => {
            let base = Checkpoint::load(&base)?;
            let (_, seqs) = read_prepared(&corpus)?;
            let ckpt = domain_adapt(&base, &seqs, &mlm.config())?;
            ckpt.save(&out)?;
            print_json(&ckpt.provenance)
        }
        Command::Train(args) => {
            let kind = match args.kind {
                KindArg::Text => ModelKind::Text,
                KindArg::Vision => ModelKind::Vision,
                KindArg::Multimodal => ModelKind::Multimodal,
            };
            let job = TrainJobConfig::load(&args.config)?;
            let plan = read_plan(&args.split, args.iteration)?;
            let outcome = run_train_job(kind, &job, &plan, &args.out)?;
            println!("best epoch {}", outcome.log.best_epoch);
            if let Some(acc) = outcome.test_accuracy {
                println!("test accuracy {acc:.4}");
            }
            Ok(())
        }
        Command::Predict(args) => {
            let (_, exams) = load_corpus(&args.corpus)?;
            let preds = predict_corpus(&args.model, &exams)?;
            write_file(&args.out, predictions_csv(&preds, None))
        }
        Command::Eval(EvalCmd::Run { bench, out }) => run_config(&bench, &out, None),
        Command::Eval(EvalCmd::Expert { file, truth, weighting }) => {
            let weighting: Weighting = weighting.parse()?;
            let truths = truth_map(read_label_csv(&truth)?)?;
            print_json(&compare_expert(&read_label_csv(&file)?, &truths, weighting)?)
        }
        Command::Run(args) => run_config(&args.config, &args.out, until_of(args.until.as_deref())?),
        Command::Resume(args) => {
            let outcome = resume(&args.dir, until_of(args.until.as_deref())?)?;
            report_outcome(&outcome);
            Ok(())
        }
    }
}

fn report_outcome(outcome: &deauville::pipeline::RunOutcome) {
    let names = |v: &[Stage]| v.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ");
    if outcome.ran.is_empty() {
        println!("nothing to do; completed stages: {}", names(&outcome.skipped));
    } else {
        println!("ran: {}", names(&outcome.ran));
    }
}

fn run_config(config: &Path, out: &Path, until: Option<Stage>) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let outcome = run_experiment(&cfg, out, until)?;
    report_outcome(&outcome);
    let results = out.join(deauville::pipeline::Stage::Eval.dir()).join(deauville::eval::RESULTS_FILE);
    if let Ok(table) = fs::read_to_string(results) {
        print!("{table}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
