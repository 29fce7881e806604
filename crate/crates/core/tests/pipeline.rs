use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use deauville::eval::RESULTS_FILE;
use deauville::pipeline::{load_run_manifest, resume, run_experiment, ExperimentConfig, Stage, RUN_MANIFEST};
use deauville::Error;

fn smoke_config() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.cfg");
    ExperimentConfig::load(&path).unwrap()
}

fn files_under(root: &Path) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    out
}

fn results(dir: &Path) -> Vec<u8> {
    fs::read(dir.join(Stage::Eval.dir()).join(RESULTS_FILE)).unwrap()
}

#[test]
fn full_run_resume_and_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    let cfg = smoke_config();
    let outcome = run_experiment(&cfg, &full, None).unwrap();
    assert_eq!(outcome.ran, Stage::ALL.to_vec());

    // Every artifact is recorded with a checksum.
    let manifest = load_run_manifest(&full).unwrap();
    let recorded: BTreeSet<String> = manifest.files().cloned().collect();
    let mut on_disk = files_under(&full);
    on_disk.remove(RUN_MANIFEST);
    assert_eq!(recorded, on_disk);
    assert!(manifest.seeds.len() >= 5);

    // A finished run resumes as a no-op.
    let again = resume(&full, None).unwrap();
    assert!(again.ran.is_empty());
    assert_eq!(again.skipped, Stage::ALL.to_vec());

    // Interrupted after adaptation, then resumed: same results, fold
    // parallelism notwithstanding.
    let staged = tmp.path().join("staged");
    let serial = ExperimentConfig { workers: 1, ..cfg.clone() };
    let first = run_experiment(&serial, &staged, Some(Stage::Adapt)).unwrap();
    assert_eq!(first.ran, Stage::ALL[..5].to_vec());
    assert!(!staged.join(Stage::Splits.dir()).exists());
    let rest = resume(&staged, None).unwrap();
    assert_eq!(rest.skipped, Stage::ALL[..5].to_vec());
    assert_eq!(rest.ran, Stage::ALL[5..].to_vec());
    assert_eq!(results(&staged), results(&full));

    // Rerunning into an existing run directory starts over.
    run_experiment(&cfg, &full, Some(Stage::Corpus)).unwrap();
    assert!(!full.join(Stage::Eval.dir()).exists());
}

fn corrupt(dir: &Path, file: &str) {
    let p = dir.join(file);
    let mut bytes = fs::read(&p).unwrap();
    bytes.push(b'\n');
    fs::write(&p, bytes).unwrap();
}

#[test]
fn tampering_is_unrecoverable() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    run_experiment(&smoke_config(), &out, Some(Stage::Extract)).unwrap();
    corrupt(&out, "extract/labels.csv");
    let err = resume(&out, None).unwrap_err();
    assert!(matches!(err, Error::Unrecoverable(_)), "{err}");
    assert_eq!(err.exit_code(), 4);

    run_experiment(&smoke_config(), &out, Some(Stage::Corpus)).unwrap();
    fs::write(out.join(RUN_MANIFEST), b"{ not json").unwrap();
    assert!(matches!(resume(&out, None).unwrap_err(), Error::Unrecoverable(_)));

    assert!(matches!(resume(&tmp.path().join("missing"), None).unwrap_err(), Error::Unrecoverable(_)));
}

#[test]
fn invalid_configs_fail_before_any_work() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let missing = ExperimentConfig { grammar: PathBuf::from("/nonexistent/grammar.toml"), ..smoke_config() };
    let err = run_experiment(&missing, &out, None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(!out.exists());

    let mut too_long = smoke_config();
    too_long.inputs.limit = too_long.encoder.max_positions + 1;
    assert_eq!(run_experiment(&too_long, &out, None).unwrap_err().exit_code(), 2);

    let mut bad_splits = smoke_config();
    bad_splits.eval.splits.fractions = (0.8, 0.3, 0.1);
    assert_eq!(run_experiment(&bad_splits, &out, None).unwrap_err().exit_code(), 2);

    let busy = tmp.path().join("busy");
    fs::create_dir_all(&busy).unwrap();
    fs::write(busy.join("notes.txt"), "keep me").unwrap();
    assert_eq!(run_experiment(&smoke_config(), &busy, None).unwrap_err().exit_code(), 2);
    assert!(busy.join("notes.txt").exists());

    assert!(ExperimentConfig::from_toml_str("seed = 1\nunknown_key = 2\n").is_err());
}
