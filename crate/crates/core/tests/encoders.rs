use deauville::corpus::{generate_corpus, generate_generic_text, CorpusSpec};
use deauville::encoders::{
    domain_adapt, encode, generic_pretrain, mask_tokens, masked_perplexity, random_init, Checkpoint, CheckpointRef,
    EncoderSpec, MlmConfig, Stage,
};
use deauville::preprocess::{
    build_input, build_input_ids, is_special, normalize, train_subword_vocab, NormalizationConfig, Vocabulary,
    MASK, START,
};
use deauville::rng::rng_for;
use proptest::prelude::*;

const LIMIT: usize = 64;

struct Texts {
    vocab: Vocabulary,
    generic: Vec<Vec<u32>>,
    domain: Vec<Vec<u32>>,
    heldout: Vec<Vec<u32>>,
}

fn domain_sequences(vocab: &Vocabulary, n: usize, seed: u64) -> Vec<Vec<u32>> {
    let spec = CorpusSpec { n_exams: n, seed, with_images: false, ..CorpusSpec::default() };
    generate_corpus(&spec)
        .unwrap()
        .into_iter()
        .map(|e| {
            let mut report = e.report.clone();
            report.impression = normalize(&report.impression, &NormalizationConfig::default()).unwrap();
            report.findings = normalize(&report.findings, &NormalizationConfig::default()).unwrap();
            build_input(&report, vocab, LIMIT).unwrap().ids
        })
        .collect()
}

fn texts() -> Texts {
    let generic_text = generate_generic_text(200, 5);
    let spec = CorpusSpec { n_exams: 200, seed: 6, with_images: false, ..CorpusSpec::default() };
    let mut training: Vec<String> = generic_text.clone();
    for e in generate_corpus(&spec).unwrap() {
        training.push(normalize(&e.report.full_text(), &NormalizationConfig::default()).unwrap());
    }
    let vocab = train_subword_vocab(&training, 300).unwrap();
    let generic = generic_text
        .iter()
        .map(|t| build_input_ids(&vocab.encode(t), &[], LIMIT).ids)
        .collect();
    Texts {
        domain: domain_sequences(&vocab, 200, 6),
        heldout: domain_sequences(&vocab, 40, 7),
        generic,
        vocab,
    }
}

fn spec(vocab: &Vocabulary) -> EncoderSpec {
    EncoderSpec {
        n_layers: 2,
        n_heads: 4,
        hidden_size: 32,
        ff_size: 64,
        max_positions: LIMIT,
        vocab_size: vocab.len(),
        dropout: 0.1,
    }
}

fn mlm(epochs: usize, seed: u64) -> MlmConfig {
    MlmConfig { epochs, learning_rate: 1e-3, seed, ..MlmConfig::default() }
}

#[test]
fn checkpoint_round_trips_exactly() {
    let t = texts();
    let ckpt = generic_pretrain(&spec(&t.vocab), &t.generic[..40], &mlm(1, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let r = ckpt.save(dir.path()).unwrap();
    let back = Checkpoint::load(dir.path()).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(CheckpointRef::open(dir.path()).unwrap(), r);
    assert_eq!(r.stage, Stage::GenericPretrained);
}

#[test]
fn zero_epochs_keeps_weights_and_advances_stage() {
    let t = texts();
    let base = random_init(&spec(&t.vocab), 9).unwrap();
    let adapted = domain_adapt(&base, &t.domain, &mlm(0, 1)).unwrap();
    assert_eq!(adapted.model, base.model);
    assert_eq!(adapted.stage, Stage::DomainAdapted);
    assert!(adapted.provenance.epoch_losses.is_empty());
    assert_eq!(adapted.provenance.parent_hash.as_deref(), Some(base.provenance.config_hash.as_str()));
    assert!(domain_adapt(&adapted, &t.domain, &mlm(1, 1)).is_err());
}

#[test]
fn pretraining_is_deterministic_and_loss_falls_each_epoch() {
    let t = texts();
    let a = generic_pretrain(&spec(&t.vocab), &t.generic, &mlm(3, 21)).unwrap();
    let b = generic_pretrain(&spec(&t.vocab), &t.generic, &mlm(3, 21)).unwrap();
    assert_eq!(a, b);
    let losses = &a.provenance.epoch_losses;
    assert_eq!(losses.len(), 3);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    let c = generic_pretrain(&spec(&t.vocab), &t.generic, &mlm(3, 22)).unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn adaptation_lowers_heldout_perplexity() {
    let t = texts();
    let base = generic_pretrain(&spec(&t.vocab), &t.generic, &mlm(2, 31)).unwrap();
    let adapted = domain_adapt(&base, &t.domain, &mlm(3, 32)).unwrap();
    let cfg = MlmConfig::default();
    let before = masked_perplexity(&base.model, &t.heldout, &cfg, 77).unwrap();
    let after = masked_perplexity(&adapted.model, &t.heldout, &cfg, 77).unwrap();
    assert!(after < before, "{before} -> {after}");
}

#[test]
fn pooled_vector_is_first_token_state() {
    let t = texts();
    let ckpt = random_init(&spec(&t.vocab), 2).unwrap();
    let seq = build_input_ids(&t.domain[0][1..10], &[], LIMIT);
    let (states, pooled) = encode(&seq, ckpt.encoder()).unwrap();
    assert_eq!(states.nrows(), seq.len());
    assert_eq!(pooled, states.row(0).to_owned());
    assert_eq!(seq.ids[0], START);
}

#[test]
fn inputs_outside_the_spec_are_rejected() {
    let t = texts();
    let s = spec(&t.vocab);
    let too_long = vec![vec![7u32; LIMIT + 1]];
    assert!(generic_pretrain(&s, &too_long, &mlm(1, 1)).is_err());
    let bad_id = vec![vec![2, s.vocab_size as u32, 3]];
    assert!(generic_pretrain(&s, &bad_id, &mlm(1, 1)).is_err());
    assert!(generic_pretrain(&s, &[], &mlm(1, 1)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mask_counts_follow_rate_and_replay(
        body in prop::collection::vec(5u32..300, 1..200),
        seed in any::<u64>(),
        rate in 0.05f64..0.5,
    ) {
        let ids: Vec<u32> = std::iter::once(START).chain(body.iter().copied()).chain([3]).collect();
        let cfg = MlmConfig { mask_rate: rate, ..MlmConfig::default() };
        let m = mask_tokens(&ids, &cfg, 300, &mut rng_for(seed, "p", 0)).unwrap();
        let maskable = ids.iter().filter(|&&id| !is_special(id)).count();
        prop_assert_eq!(m.targets.len(), (rate * maskable as f64).round() as usize);
        for (&pos, &orig) in &m.targets {
            prop_assert_eq!(ids[pos], orig);
            prop_assert!(!is_special(orig));
        }
        for (pos, (&a, &b)) in ids.iter().zip(&m.ids).enumerate() {
            if a != b {
                prop_assert!(m.targets.contains_key(&pos));
                prop_assert!(b == MASK || !is_special(b));
            }
        }
        let again = mask_tokens(&ids, &cfg, 300, &mut rng_for(seed, "p", 0)).unwrap();
        prop_assert_eq!(again, m);
    }
}
