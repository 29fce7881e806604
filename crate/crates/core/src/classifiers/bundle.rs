//! Trained model directory: `model.json`, `head.bin`, `train_log.csv`, an
//! `encoder/` checkpoint for text models and `vision.bin` for image models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Classifier, ClassifierHead, HeadSpec, ModelKind, TrainLog, VisionEncoder, VisionSpec};
use crate::encoders::{Checkpoint, CheckpointProvenance, MlmModel, Stage};
use crate::error::{Error, IoContext, Result};
use crate::nn::{load_module, save_module};
use crate::util::{read_json, write_json};

pub const MODEL_FILE: &str = "model.json";
const HEAD_FILE: &str = "head.bin";
const VISION_FILE: &str = "vision.bin";
const LOG_FILE: &str = "train_log.csv";
const ENCODER_DIR: &str = "encoder";

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    kind: ModelKind,
    head: HeadSpec,
    vision: Option<VisionSpec>,
    best_epoch: usize,
}

pub fn save_bundle(dir: &Path, model: &Classifier, log: &TrainLog, encoder_provenance: &CheckpointProvenance) -> Result<()> {
    std::fs::create_dir_all(dir).at(dir)?;
    write_json(
        &dir.join(MODEL_FILE),
        &ModelFile {
            kind: model.kind,
            head: model.head.spec.clone(),
            vision: model.vision.as_ref().map(|v| v.spec.clone()),
            best_epoch: log.best_epoch,
        },
    )?;
    save_module(&model.head, &dir.join(HEAD_FILE))?;
    if let (Some(encoder), Some(mlm)) = (&model.text, &model.carried_mlm_head) {
        Checkpoint {
            stage: Stage::FineTuned,
            model: MlmModel {
                encoder: encoder.clone(),
                head: mlm.clone(),
            },
            provenance: encoder_provenance.clone(),
        }
        .save(&dir.join(ENCODER_DIR))?;
    }
    if let Some(v) = &model.vision {
        save_module(v, &dir.join(VISION_FILE))?;
    }
    log.write_csv(&dir.join(LOG_FILE))
}

pub fn load_bundle(dir: &Path) -> Result<Classifier> {
    let file: ModelFile = read_json(&dir.join(MODEL_FILE))?;
    let mut head = ClassifierHead::zeroed(&file.head)?;
    load_module(&mut head, &dir.join(HEAD_FILE))?;
    let (text, carried_mlm_head) = if file.kind.uses_text() {
        let ckpt = Checkpoint::load(&dir.join(ENCODER_DIR))?;
        (Some(ckpt.model.encoder), Some(ckpt.model.head))
    } else {
        (None, None)
    };
    let vision = match (&file.vision, file.kind.uses_image()) {
        (Some(spec), true) => {
            let mut v = VisionEncoder::new(spec, 0)?;
            load_module(&mut v, &dir.join(VISION_FILE))?;
            Some(v)
        }
        (None, true) => return Err(Error::validation("image model bundle lacks a vision spec")),
        _ => None,
    };
    let model = Classifier {
        kind: file.kind,
        text,
        vision,
        head,
        carried_mlm_head,
    };
    model.check_dims()?;
    Ok(model)
}
