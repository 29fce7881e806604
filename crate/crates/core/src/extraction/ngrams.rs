use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::lexer::{lex, TokenKind};
use super::levenshtein;
use crate::corpus::ReportDocument;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramReport {
    pub term: String,
    pub window: usize,
    /// `(ngram, frequency)` by descending frequency, ties broken alphabetically.
    pub entries: Vec<(String, usize)>,
}

const NUMBER_WORDS: [&str; 5] = ["one", "two", "three", "four", "five"];

fn mining_tokens(text: &str) -> Vec<String> {
    lex(text)
        .into_iter()
        .filter_map(|t| match t.kind {
            TokenKind::Punct => None,
            TokenKind::Number if t.is_decimal() => Some("<x>".to_string()),
            TokenKind::Number => Some("<n>".to_string()),
            TokenKind::Word => {
                let w = t.text.to_lowercase();
                Some(if NUMBER_WORDS.contains(&w.as_str()) { "<n>".to_string() } else { w })
            }
        })
        .collect()
}

fn fuzzy_match(token: &str, term: &str) -> bool {
    token == term
        || (token.chars().next() == term.chars().next()
            && levenshtein(token, term) <= 2.min(term.chars().count() / 3))
}

/// Counts n-grams (score slots abstracted to `<n>`) overlapping the region
/// `[i - window, i + window]` around each fuzzy occurrence `i` of `term`.
/// Fuzzy occurrences are folded onto `term` so misspellings aggregate.
pub fn mine_context_ngrams(
    corpus: &[ReportDocument],
    term: &str,
    n_range: (usize, usize),
    window: usize,
) -> Result<NgramReport> {
    let term = term.trim().to_lowercase();
    if term.is_empty() {
        return Err(Error::validation("n-gram term must not be empty"));
    }
    if corpus.is_empty() {
        return Err(Error::validation("n-gram corpus is empty"));
    }
    let (lo, hi) = n_range;
    if lo == 0 || lo > hi {
        return Err(Error::validation(format!("invalid n-gram range {lo}..={hi}")));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for report in corpus {
        for (_, section) in report.sections() {
            let mut tokens = mining_tokens(section);
            let hits: Vec<usize> = (0..tokens.len())
                .filter(|&i| fuzzy_match(&tokens[i], &term))
                .collect();
            for &i in &hits {
                tokens[i] = term.clone();
            }
            let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
            for &i in &hits {
                let region = (i.saturating_sub(window), i + window);
                for n in lo..=hi {
                    if n > tokens.len() {
                        break;
                    }
                    let first = region.0.saturating_sub(n - 1);
                    let last = region.1.min(tokens.len() - n);
                    for s in first..=last {
                        if seen.insert((s, n)) {
                            *counts.entry(tokens[s..s + n].join(" ")).or_default() += 1;
                        }
                    }
                }
            }
        }
    }
    let mut entries: Vec<(String, usize)> = counts.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(NgramReport {
        term,
        window,
        entries,
    })
}
