use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, SEP, START};
use crate::corpus::ReportDocument;
use crate::error::{Error, IoContext, Result};

pub const DEFAULT_LIMIT: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Impression,
    Findings,
}

/// Half-open span `[start, end)` of ids drawn from one report section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionSpan {
    pub section: Section,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub section_map: Vec<SectionSpan>,
    pub limit: usize,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn section_len(&self, section: Section) -> usize {
        self.section_map
            .iter()
            .filter(|s| s.section == section)
            .map(|s| s.end - s.start)
            .sum()
    }
}

/// Lays out `[start, impression, sep, findings prefix, sep]` within `limit`.
/// The findings part and its separator are omitted when no findings token fits.
/// An impression longer than `limit - 3` keeps its first `limit - 2` tokens.
pub fn build_input_ids(impression: &[u32], findings: &[u32], limit: usize) -> TokenSequence {
    assert!(limit >= 3, "input limit must leave room for special tokens");
    let mut ids = Vec::with_capacity(limit.min(impression.len() + findings.len() + 3));
    let mut section_map = Vec::new();
    ids.push(START);
    let imp = if impression.len() > limit - 3 {
        &impression[..impression.len().min(limit - 2)]
    } else {
        impression
    };
    if !imp.is_empty() {
        section_map.push(SectionSpan {
            section: Section::Impression,
            start: 1,
            end: 1 + imp.len(),
        });
    }
    ids.extend_from_slice(imp);
    ids.push(SEP);
    let budget = limit.saturating_sub(ids.len() + 1);
    let take = findings.len().min(budget);
    if take > 0 {
        section_map.push(SectionSpan {
            section: Section::Findings,
            start: ids.len(),
            end: ids.len() + take,
        });
        ids.extend_from_slice(&findings[..take]);
        ids.push(SEP);
    }
    TokenSequence {
        ids,
        section_map,
        limit,
    }
}

pub fn build_input(report: &ReportDocument, vocab: &Vocabulary, limit: usize) -> Result<TokenSequence> {
    if limit < 3 {
        return Err(Error::validation(format!("input limit {limit} is below 3")));
    }
    Ok(build_input_ids(
        &vocab.encode(&report.impression),
        &vocab.encode(&report.findings),
        limit,
    ))
}

/// One line per sequence: space-separated ids.
pub fn write_sequences(path: &Path, sequences: &[TokenSequence]) -> Result<()> {
    let mut out = Vec::new();
    for seq in sequences {
        let line: Vec<String> = seq.ids.iter().map(u32::to_string).collect();
        writeln!(out, "{}", line.join(" ")).expect("write to vec");
    }
    std::fs::write(path, out).at(path)
}

pub fn read_sequences(path: &Path) -> Result<Vec<Vec<u32>>> {
    let text = std::fs::read_to_string(path).at(path)?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            line.split_whitespace()
                .map(|t| {
                    t.parse()
                        .map_err(|_| Error::validation(format!("{}:{}: bad id `{t}`", path.display(), i + 1)))
                })
                .collect()
        })
        .collect()
}

/// Sidecar with one JSON array of section spans per line.
pub fn write_section_maps(path: &Path, sequences: &[TokenSequence]) -> Result<()> {
    let mut out = Vec::new();
    for seq in sequences {
        serde_json::to_writer(&mut out, &seq.section_map)?;
        out.push(b'\n');
    }
    std::fs::write(path, out).at(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(imp: usize, fin: usize, limit: usize) -> TokenSequence {
        build_input_ids(&vec![10; imp], &vec![20; fin], limit)
    }

    #[test]
    fn impression_first_layout() {
        let s = run(100, 600, 512);
        assert_eq!(s.len(), 512);
        assert_eq!(s.section_len(Section::Impression), 100);
        assert_eq!(s.section_len(Section::Findings), 409);
        assert_eq!((s.ids[0], s.ids[101], s.ids[511]), (START, SEP, SEP));
    }

    #[test]
    fn under_budget_keeps_everything() {
        assert_eq!(run(50, 50, 512).len(), 103);
    }

    #[test]
    fn long_impression_is_head_truncated() {
        let s = run(600, 0, 512);
        assert_eq!(s.len(), 512);
        assert_eq!(s.section_len(Section::Impression), 510);
        let s = run(509, 40, 512);
        assert_eq!(s.section_len(Section::Impression), 509);
        assert_eq!(s.section_len(Section::Findings), 0);
        assert_eq!(s.len(), 511);
    }
}
