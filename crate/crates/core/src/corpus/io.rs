//! On-disk corpus layout: `manifest.json`, one `<exam_id>.report.json` per
//! exam and a 16-bit binary PGM per image.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::generate::{corpus_stats, template_counts, CorpusStats};
use super::types::{CorpusSpec, DeauvilleLabel, ExamRecord, GrayscaleImage, Provenance, ReportDocument};
use crate::error::{Error, IoContext, Result};
use crate::util::sha256_hex;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<CorpusSpec>,
    /// Free-form note on how the corpus was derived (e.g. "redacted").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived: Option<String>,
    pub exams: Vec<String>,
    pub stats: CorpusStats,
    pub template_counts: BTreeMap<String, usize>,
    /// SHA-256 of every file in the directory except the manifest.
    pub checksums: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReportFile {
    exam_id: String,
    indication: String,
    findings: String,
    impression: String,
    label: Option<DeauvilleLabel>,
    dictator_id: String,
    exam_date: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

pub fn write_pgm(image: &GrayscaleImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", image.width(), image.height()).into_bytes();
    for &p in image.pixels() {
        let q = (p * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn read_pgm(bytes: &[u8]) -> Result<GrayscaleImage> {
    let bad = |msg: &str| Error::validation(format!("malformed PGM: {msg}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(bad("expected P5 magic"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("non-numeric header field"));
    let (width, height, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    let data = bytes.get(pos..).ok_or_else(|| bad("missing raster"))?;
    let pixels: Vec<f64> = match maxval {
        1..=255 => {
            if data.len() != width * height {
                return Err(bad("raster size"));
            }
            data.iter().map(|&v| v as f64 / maxval as f64).collect()
        }
        256..=65535 => {
            if data.len() != 2 * width * height {
                return Err(bad("raster size"));
            }
            data.chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / maxval as f64)
                .collect()
        }
        _ => return Err(bad("maxval")),
    };
    GrayscaleImage::new(height, width, pixels)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], checksums: &mut BTreeMap<String, String>) -> Result<()> {
    let path = dir.join(name);
    let mut f = fs::File::create(&path).at(&path)?;
    f.write_all(bytes).at(&path)?;
    checksums.insert(name.to_string(), sha256_hex(bytes));
    Ok(())
}

pub fn save_corpus(
    dir: &Path,
    corpus: &[ExamRecord],
    spec: Option<&CorpusSpec>,
    derived: Option<&str>,
) -> Result<CorpusManifest> {
    fs::create_dir_all(dir).at(dir)?;
    let mut checksums = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for exam in corpus {
        if !seen.insert(exam.exam_id.as_str()) {
            return Err(Error::validation(format!("duplicate exam id {}", exam.exam_id)));
        }
        let report = ReportFile {
            exam_id: exam.exam_id.clone(),
            indication: exam.report.indication.clone(),
            findings: exam.report.findings.clone(),
            impression: exam.report.impression.clone(),
            label: exam.label,
            dictator_id: exam.dictator_id.clone(),
            exam_date: exam.exam_date,
            provenance: exam.provenance.clone(),
        };
        let json = serde_json::to_vec_pretty(&report)?;
        write_file(dir, &format!("{}.report.json", exam.exam_id), &json, &mut checksums)?;
        if let Some(image) = &exam.image {
            write_file(dir, &format!("{}.pgm", exam.exam_id), &write_pgm(image), &mut checksums)?;
        }
    }
    let manifest = CorpusManifest {
        spec: spec.cloned(),
        derived: derived.map(str::to_string),
        exams: corpus.iter().map(|e| e.exam_id.clone()).collect(),
        stats: corpus_stats(corpus)?,
        template_counts: template_counts(corpus),
        checksums,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).at(&path)?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<CorpusManifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).at(&path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Loads a corpus directory, verifying every file against the manifest checksums.
pub fn load_corpus(dir: &Path) -> Result<(CorpusManifest, Vec<ExamRecord>)> {
    let manifest = load_manifest(dir)?;
    let read_checked = |name: &str| -> Result<Option<Vec<u8>>> {
        let Some(expected) = manifest.checksums.get(name) else {
            return Ok(None);
        };
        let path = dir.join(name);
        let bytes = fs::read(&path).at(&path)?;
        if &sha256_hex(&bytes) != expected {
            return Err(Error::Unrecoverable(format!("checksum mismatch for {}", path.display())));
        }
        Ok(Some(bytes))
    };
    let mut exams = Vec::with_capacity(manifest.exams.len());
    for id in &manifest.exams {
        let name = format!("{id}.report.json");
        let bytes = read_checked(&name)?
            .ok_or_else(|| Error::Unrecoverable(format!("manifest lacks checksum for {name}")))?;
        let r: ReportFile = serde_json::from_slice(&bytes)?;
        let image = read_checked(&format!("{id}.pgm"))?
            .map(|b| read_pgm(&b))
            .transpose()?;
        exams.push(ExamRecord {
            exam_id: r.exam_id,
            report: ReportDocument {
                indication: r.indication,
                findings: r.findings,
                impression: r.impression,
            },
            image,
            label: r.label,
            dictator_id: r.dictator_id,
            exam_date: r.exam_date,
            provenance: r.provenance,
        });
    }
    Ok((manifest, exams))
}
