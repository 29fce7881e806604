//! Exam data model and the synthetic report/image generator.

mod generate;
pub mod image;
mod io;
pub mod templates;
mod types;

pub use generate::{corpus_stats, generate_corpus, generate_generic_text, template_counts, CorpusStats};
pub use image::{generate_image, generate_image_with, Lesion, SyntheticImage};
pub use io::{load_corpus, load_manifest, read_pgm, save_corpus, write_pgm, CorpusManifest, MANIFEST_FILE};
pub use types::{
    CorpusSpec, DeauvilleLabel, ExamRecord, GrayscaleImage, IntensityAnchors, MentionStyleMix,
    Provenance, ReportDocument, REFERENCE_CLASS_COUNTS,
};
