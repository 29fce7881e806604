use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physician-assigned Deauville score, always in `1..=5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct DeauvilleLabel(u8);

impl DeauvilleLabel {
    pub const ALL: [DeauvilleLabel; 5] = [
        DeauvilleLabel(1),
        DeauvilleLabel(2),
        DeauvilleLabel(3),
        DeauvilleLabel(4),
        DeauvilleLabel(5),
    ];

    pub fn new(value: u8) -> Result<Self> {
        if (1..=5).contains(&value) {
            Ok(DeauvilleLabel(value))
        } else {
            Err(Error::validation(format!("Deauville score {value} outside 1..=5")))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Zero-based class index used by the classifiers.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Result<Self> {
        Self::new(index as u8 + 1)
    }
}

impl TryFrom<u8> for DeauvilleLabel {
    type Error = Error;
    fn try_from(value: u8) -> Result<Self> {
        Self::new(value)
    }
}

impl From<DeauvilleLabel> for u8 {
    fn from(label: DeauvilleLabel) -> u8 {
        label.0
    }
}

impl fmt::Display for DeauvilleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub indication: String,
    pub findings: String,
    pub impression: String,
}

impl ReportDocument {
    pub fn sections(&self) -> [(&'static str, &str); 3] {
        [
            ("indication", &self.indication),
            ("findings", &self.findings),
            ("impression", &self.impression),
        ]
    }

    /// Applies `f` to each section, preserving the section structure.
    pub fn map_sections(&self, mut f: impl FnMut(&str) -> String) -> ReportDocument {
        ReportDocument {
            indication: f(&self.indication),
            findings: f(&self.findings),
            impression: f(&self.impression),
        }
    }

    pub fn try_map_sections(
        &self,
        mut f: impl FnMut(&str) -> Result<String>,
    ) -> Result<ReportDocument> {
        Ok(ReportDocument {
            indication: f(&self.indication)?,
            findings: f(&self.findings)?,
            impression: f(&self.impression)?,
        })
    }

    pub fn full_text(&self) -> String {
        format!("{}\n{}\n{}", self.indication, self.findings, self.impression)
    }
}

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayscaleImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl GrayscaleImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::validation("image dimensions must be positive"));
        }
        if pixels.len() != height * width {
            return Err(Error::validation(format!(
                "image has {} pixels, expected {height}x{width}",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::validation(format!("pixel value {bad} outside [0,1]")));
        }
        Ok(GrayscaleImage {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        GrayscaleImage {
            height,
            width,
            pixels: vec![value.clamp(0.0, 1.0); height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Writes a pixel, clamping into `[0, 1]`.
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.pixels[row * self.width + col] = value.clamp(0.0, 1.0);
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }
}

/// Generator-side ground truth attached to synthetic exams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Class whose uptake language and image appearance were rendered.
    pub uptake_class: u8,
    /// Mention template ids planted in the report, in order of appearance.
    pub mention_templates: Vec<String>,
    /// Every score planted in the report (ranges expanded).
    pub planted_scores: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExamRecord {
    pub exam_id: String,
    pub report: ReportDocument,
    pub image: Option<GrayscaleImage>,
    pub label: Option<DeauvilleLabel>,
    pub dictator_id: String,
    pub exam_date: NaiveDate,
    pub provenance: Option<Provenance>,
}

/// Relative frequencies of the mention surface forms planted by the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MentionStyleMix {
    /// Weight per mention template id; normalized at sampling time.
    pub templates: BTreeMap<String, f64>,
    pub misspelling_rate: f64,
    pub number_word_rate: f64,
    /// Probability of an additional lower-scored lesion-specific mention.
    pub multi_score_rate: f64,
    pub range_rate: f64,
}

impl Default for MentionStyleMix {
    fn default() -> Self {
        let templates = crate::corpus::templates::MENTION_TEMPLATES
            .iter()
            .map(|t| (t.id.to_string(), 1.0))
            .collect();
        MentionStyleMix {
            templates,
            misspelling_rate: 0.12,
            number_word_rate: 0.15,
            multi_score_rate: 0.2,
            range_rate: 0.08,
        }
    }
}

/// Intensity anchors of the MIP-like image generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntensityAnchors {
    pub background: f64,
    pub mediastinum: f64,
    pub liver: f64,
    pub moderate_margin: f64,
}

impl Default for IntensityAnchors {
    fn default() -> Self {
        IntensityAnchors {
            background: 0.1,
            mediastinum: 0.35,
            liver: 0.6,
            moderate_margin: 0.2,
        }
    }
}

impl IntensityAnchors {
    pub fn validate(&self) -> Result<()> {
        let IntensityAnchors {
            background: b,
            mediastinum: m,
            liver: l,
            moderate_margin: d,
        } = *self;
        if !(0.0 <= b && b < m && m < l && l + d < 1.0 && d > 0.0) {
            return Err(Error::validation(format!(
                "intensity anchors must satisfy 0 <= background < mediastinum < liver < liver + margin < 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub n_exams: usize,
    pub class_weights: [f64; 5],
    pub mention_style_mix: MentionStyleMix,
    pub seed: u64,
    pub image_size: (usize, usize),
    pub with_images: bool,
    pub n_dictators: usize,
    /// Fraction of exams whose report carries no Deauville mention.
    pub unmentioned_fraction: f64,
    /// Probability that the assigned score differs by one from the rendered uptake class.
    pub label_noise: f64,
    /// Probability that a findings sentence uses language of an adjacent class.
    pub language_noise: f64,
    /// Standard deviation of additive pixel noise on corpus images.
    pub image_noise: f64,
    pub intensity: IntensityAnchors,
}

/// Deauville score frequencies of the reference cohort (scores 1..5).
pub const REFERENCE_CLASS_COUNTS: [u32; 5] = [313, 355, 155, 221, 620];

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_exams: 1664,
            class_weights: CorpusSpec::reference_weights(),
            mention_style_mix: MentionStyleMix::default(),
            seed: 0,
            image_size: (64, 64),
            with_images: true,
            n_dictators: 44,
            unmentioned_fraction: 0.0,
            label_noise: 0.1,
            language_noise: 0.25,
            image_noise: 0.05,
            intensity: IntensityAnchors::default(),
        }
    }
}

impl CorpusSpec {
    pub fn reference_weights() -> [f64; 5] {
        let total: u32 = REFERENCE_CLASS_COUNTS.iter().sum();
        REFERENCE_CLASS_COUNTS.map(|c| c as f64 / total as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_exams == 0 {
            return Err(Error::validation("n_exams must be positive"));
        }
        if self.class_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::validation("class weights must be non-negative"));
        }
        let total: f64 = self.class_weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "class weights sum to {total}, expected 1"
            )));
        }
        if self.image_size.0 < 16 || self.image_size.1 < 16 {
            return Err(Error::validation("image size must be at least 16x16"));
        }
        if self.n_dictators == 0 {
            return Err(Error::validation("n_dictators must be positive"));
        }
        let mix = &self.mention_style_mix;
        if mix.templates.is_empty() || mix.templates.values().all(|w| *w <= 0.0) {
            return Err(Error::validation("mention style mix needs a positive template weight"));
        }
        for id in mix.templates.keys() {
            if crate::corpus::templates::mention_template(id).is_none() {
                return Err(Error::validation(format!("unknown mention template `{id}`")));
            }
        }
        for (name, p) in [
            ("misspelling_rate", mix.misspelling_rate),
            ("number_word_rate", mix.number_word_rate),
            ("multi_score_rate", mix.multi_score_rate),
            ("range_rate", mix.range_rate),
            ("unmentioned_fraction", self.unmentioned_fraction),
            ("label_noise", self.label_noise),
            ("language_noise", self.language_noise),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!("{name} must lie in [0,1], got {p}")));
            }
        }
        if !(0.0..1.0).contains(&self.image_noise) {
            return Err(Error::validation("image_noise must lie in [0,1)"));
        }
        self.intensity.validate()
    }
}
