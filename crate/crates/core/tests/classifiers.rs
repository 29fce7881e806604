use deauville::classifiers::{
    accumulate_batch_gradients, evaluate, fusion_input_dim, hflip, load_bundle, predict_text, predict_vision,
    save_bundle, train_classifier, Augmentation, Classifier, ClassifierHead, Example, HeadSpec, ModelKind,
    TrainConfig, VisionEncoder, VisionKind, VisionSpec,
};
use deauville::corpus::{generate_image, DeauvilleLabel};
use deauville::encoders::{random_init, CheckpointProvenance, EncoderSpec, TransformerEncoder};
use deauville::nn::Module;
use proptest::prelude::*;

fn enc_spec(hidden: usize) -> EncoderSpec {
    EncoderSpec {
        n_layers: 1,
        n_heads: 2,
        hidden_size: hidden,
        ff_size: 2 * hidden,
        max_positions: 32,
        vocab_size: 40,
        dropout: 0.0,
    }
}

fn text_model(seed: u64) -> Classifier {
    let ckpt = random_init(&enc_spec(16), seed).unwrap();
    Classifier::new(ModelKind::Text, Some((ckpt.model.encoder, ckpt.model.head)), None, None, seed + 1).unwrap()
}

fn label(v: u8) -> DeauvilleLabel {
    DeauvilleLabel::new(v).unwrap()
}

/// Class `c` reports use only tokens `5 + 6(c-1) .. 5 + 6c`.
fn separable(prefix: &str, n_per_class: usize) -> Vec<Example> {
    let mut out = Vec::new();
    for c in 1..=5u8 {
        for k in 0..n_per_class {
            let base = 5 + 6 * (c as u32 - 1);
            let ids = vec![2, base + k as u32 % 6, base + (k as u32 + 2) % 6, 3, base + (k as u32 + 4) % 6, 3];
            out.push(Example { exam_id: format!("{prefix}{c}-{k}"), ids, image: None, label: Some(label(c)) });
        }
    }
    out
}

fn image_examples(prefix: &str, n: usize, size: usize, seed: u64) -> Vec<Example> {
    (0..n)
        .map(|i| {
            let l = label((i % 5) as u8 + 1);
            Example {
                exam_id: format!("{prefix}{i}"),
                ids: Vec::new(),
                image: Some(generate_image(l, (size, size), seed * 1000 + i as u64).unwrap().image),
                label: Some(l),
            }
        })
        .collect()
}

fn vision_spec(size: usize) -> VisionSpec {
    VisionSpec { input_size: (size, size), hidden_size: 16, conv_channels: (4, 8), ..VisionSpec::default() }
}

#[test]
fn zero_head_gives_uniform_probs_and_lowest_class() {
    let encoder = TransformerEncoder::new(&enc_spec(16), 3);
    let head = ClassifierHead::zeroed(&HeadSpec::matching(16)).unwrap();
    let p = predict_text("x", &[2, 9, 10, 3, 3], &encoder, &head).unwrap();
    for q in p.probs {
        assert!((q - 0.2).abs() < 1e-12);
    }
    assert_eq!(p.predicted.value(), 1);
    let wrong = ClassifierHead::zeroed(&HeadSpec::matching(8)).unwrap();
    assert!(predict_text("x", &[2, 9, 3], &encoder, &wrong).is_err());
}

#[test]
fn separable_toy_task_is_fit() {
    let train = separable("t", 2);
    let val = separable("v", 2);
    let cfg = TrainConfig { learning_rate: 3e-3, max_epochs: 60, early_stop_patience: 59, batch_size: 5, seed: 1, ..TrainConfig::default() };
    let (model, log) = train_classifier(text_model(4), &train, &val, &cfg).unwrap();
    let (_, acc) = evaluate(&model, &train).unwrap();
    assert_eq!(acc, 1.0);
    let best = &log.epochs[log.best_epoch - 1];
    assert!(log.epochs.iter().all(|e| e.val_loss >= best.val_loss));
}

#[test]
fn fixed_seed_rerun_is_identical() {
    let train = separable("t", 3);
    let val = separable("v", 1);
    let cfg = TrainConfig { max_epochs: 4, early_stop_patience: 2, batch_size: 4, seed: 9, ..TrainConfig::default() };
    let a = train_classifier(text_model(5), &train, &val, &cfg).unwrap();
    let b = train_classifier(text_model(5), &train, &val, &cfg).unwrap();
    assert_eq!(a, b);
    let c = train_classifier(text_model(5), &train, &val, &TrainConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.1, c.1);
}

#[test]
fn frozen_encoder_stays_bitwise_unchanged() {
    let train = separable("t", 2);
    let val = separable("v", 1);
    let start = text_model(6);
    let cfg = TrainConfig { max_epochs: 3, early_stop_patience: 2, freeze_encoder: true, seed: 2, ..TrainConfig::default() };
    let (model, _) = train_classifier(start.clone(), &train, &val, &cfg).unwrap();
    assert_eq!(model.text, start.text);
    assert_ne!(model.head, start.head);
    let (full, _) = train_classifier(start.clone(), &train, &val, &TrainConfig { freeze_encoder: false, ..cfg }).unwrap();
    assert_ne!(full.text, start.text);
}

#[test]
fn training_rejects_bad_splits() {
    let train = separable("t", 1);
    let cfg = TrainConfig { max_epochs: 2, early_stop_patience: 1, ..TrainConfig::default() };
    assert!(train_classifier(text_model(1), &train, &[], &cfg).is_err());
    assert!(train_classifier(text_model(1), &train, &train[..1], &cfg).is_err());
    let mut unlabeled = separable("v", 1);
    unlabeled[0].label = None;
    assert!(train_classifier(text_model(1), &train, &unlabeled, &cfg).is_err());
}

#[test]
fn non_finite_loss_is_divergence() {
    let mut model = text_model(3);
    model.head.visit_mut("", &mut |_, p| p.value.fill(f64::NAN));
    let cfg = TrainConfig { max_epochs: 2, early_stop_patience: 1, ..TrainConfig::default() };
    let err = train_classifier(model, &separable("t", 1), &separable("v", 1), &cfg).unwrap_err();
    assert!(matches!(err, deauville::Error::Divergence(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn fusion_dimension_and_gradients_reach_both_pathways() {
    let ckpt = random_init(&EncoderSpec { vocab_size: 40, max_positions: 32, ..EncoderSpec::default() }, 1).unwrap();
    let vision = VisionEncoder::new(&VisionSpec::default(), 2).unwrap();
    assert_eq!(fusion_input_dim(Some(&ckpt.model.encoder), Some(&vision)), 128);
    let mut model = Classifier::new(
        ModelKind::Multimodal,
        Some((ckpt.model.encoder, ckpt.model.head)),
        Some(vision),
        None,
        3,
    )
    .unwrap();
    assert_eq!(model.head.spec.input_dim, 128);
    let mut batch = image_examples("m", 4, 64, 1);
    for (i, e) in batch.iter_mut().enumerate() {
        e.ids = vec![2, 10 + i as u32, 11, 3, 12, 3];
    }
    model.zero_grad();
    accumulate_batch_gradients(&mut model, &batch).unwrap();
    let (t, v) = model.pathway_grad_norms();
    assert!(t > 0.0 && v > 0.0, "text {t} vision {v}");
}

#[test]
fn vision_rejects_wrong_image_size() {
    let vision = VisionEncoder::new(&vision_spec(32), 1).unwrap();
    let head = ClassifierHead::new(&HeadSpec::matching(16), 1).unwrap();
    let img = generate_image(label(3), (48, 48), 1).unwrap().image;
    assert!(predict_vision("x", &img, &vision, &head).is_err());
    let ok = generate_image(label(3), (32, 32), 1).unwrap().image;
    assert_eq!(predict_vision("x", &ok, &vision, &head).unwrap().probs.len(), 5);
}

#[test]
fn flip_augmented_vision_model_is_flip_consistent() {
    let train = image_examples("t", 500, 32, 1);
    let val = image_examples("v", 50, 32, 2);
    let test = image_examples("h", 100, 32, 3);
    let spec = VisionSpec { input_size: (32, 32), ..VisionSpec::default() };
    let model = Classifier::new(ModelKind::Vision, None, Some(VisionEncoder::new(&spec, 4).unwrap()), None, 5).unwrap();
    let cfg = TrainConfig {
        max_epochs: 12,
        early_stop_patience: 3,
        seed: 6,
        augmentations: vec![Augmentation::Hflip],
        ..TrainConfig::default()
    };
    let (model, _) = train_classifier(model, &train, &val, &cfg).unwrap();
    let (_, acc) = evaluate(&model, &test).unwrap();
    assert!(acc > 0.4, "test accuracy {acc}");
    let same = test
        .iter()
        .filter(|e| {
            let flipped = Example { image: e.image.as_ref().map(hflip), ..(*e).clone() };
            model.predict(e).unwrap().predicted == model.predict(&flipped).unwrap().predicted
        })
        .count();
    assert!(same >= 90, "{same}/100 unchanged under horizontal flip");
}

#[test]
fn bundles_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let train = separable("t", 2);
    let val = separable("v", 1);
    let cfg = TrainConfig { max_epochs: 2, early_stop_patience: 1, ..TrainConfig::default() };
    let (text, log) = train_classifier(text_model(7), &train, &val, &cfg).unwrap();
    save_bundle(&dir.path().join("text"), &text, &log, &CheckpointProvenance::default()).unwrap();
    let back = load_bundle(&dir.path().join("text")).unwrap();
    assert_eq!(back, text);
    assert_eq!(back.predict_all(&val).unwrap(), text.predict_all(&val).unwrap());

    for kind in [VisionKind::Convolutional, VisionKind::PatchTransformer] {
        let spec = VisionSpec { kind, ..vision_spec(32) };
        let model = Classifier::new(ModelKind::Vision, None, Some(VisionEncoder::new(&spec, 8).unwrap()), None, 9).unwrap();
        let path = dir.path().join(format!("{kind:?}"));
        save_bundle(&path, &model, &log, &CheckpointProvenance::default()).unwrap();
        assert_eq!(load_bundle(&path).unwrap(), model);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probabilities_are_valid(body in prop::collection::vec(5u32..40, 1..30), seed in 0u64..20) {
        let model = text_model(seed);
        let mut ids = vec![2];
        ids.extend(body);
        ids.push(3);
        let ex = Example { exam_id: "p".into(), ids, image: None, label: None };
        let p = model.predict(&ex).unwrap();
        prop_assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(p.probs.iter().all(|&q| q >= 0.0));
        let best = p.probs.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert_eq!(p.probs.iter().position(|&q| q == best).unwrap() + 1, p.predicted.value() as usize);
    }
}
