//! Deauville score mention detection, exam labeling and redaction.

mod grammar;
mod lexer;
mod ngrams;

use serde::{Deserialize, Serialize};

pub use grammar::{PatternGrammar, TemplateDef};
pub use lexer::{lex, Token, TokenKind};
pub use ngrams::{mine_context_ngrams, NgramReport};

use crate::corpus::{DeauvilleLabel, ReportDocument};
use crate::error::{Error, Result};
use grammar::{CompiledTemplate, Element};

/// A detected score mention. `start..end` is a byte span into the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DsMention {
    pub start: usize,
    pub end: usize,
    pub score: u8,
    pub pattern_id: String,
    pub surface: String,
}

pub fn levenshtein(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.chars().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != *cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

impl PatternGrammar {
    pub fn is_trigger(&self, word: &str) -> bool {
        let lower = word.to_lowercase();
        if self.trigger_terms.iter().any(|t| *t == lower) {
            return true;
        }
        self.fuzzy_prefixes.iter().any(|p| lower.starts_with(p.as_str()))
            && self
                .trigger_terms
                .iter()
                .any(|t| levenshtein(&lower, t) <= self.max_edit_distance)
    }
}

fn score_token(tok: &Token<'_>, grammar: &PatternGrammar) -> Option<u8> {
    match tok.kind {
        TokenKind::Number if !tok.is_decimal() => {
            tok.text.parse::<u8>().ok().filter(|v| (1..=5).contains(v))
        }
        TokenKind::Word => grammar.score_of_word(&tok.text.to_lowercase()),
        _ => None,
    }
}

/// Reads a score or an ascending range (`4-5`, `4 to 5`) starting at `j`.
fn score_slot(tokens: &[Token<'_>], j: usize, grammar: &PatternGrammar) -> Option<(Vec<u8>, usize)> {
    let first = score_token(tokens.get(j)?, grammar)?;
    let joiner = tokens.get(j + 1).is_some_and(|t| {
        (t.kind == TokenKind::Punct && matches!(t.text, "-" | "–" | "—"))
            || (t.kind == TokenKind::Word && t.text.eq_ignore_ascii_case("to"))
    });
    if joiner {
        if let Some(last) = tokens.get(j + 2).and_then(|t| score_token(t, grammar)) {
            if last > first {
                return Some(((first..=last).collect(), j + 3));
            }
        }
    }
    Some((vec![first], j + 1))
}

fn match_at(
    tokens: &[Token<'_>],
    start: usize,
    template: &CompiledTemplate,
    grammar: &PatternGrammar,
) -> Option<(usize, Vec<u8>)> {
    let mut j = start;
    let mut scores = None;
    for (k, el) in template.elements.iter().enumerate() {
        if k > 0 && !matches!(el, Element::Punct(_)) {
            while tokens.get(j).is_some_and(|t| {
                t.kind == TokenKind::Punct && grammar.skip_punctuation.contains(t.text)
            }) {
                j += 1;
            }
        }
        let tok = tokens.get(j)?;
        match el {
            Element::Trigger => {
                if tok.kind != TokenKind::Word || !grammar.is_trigger(tok.text) {
                    return None;
                }
                j += 1;
            }
            Element::Score => {
                let (s, next) = score_slot(tokens, j, grammar)?;
                scores = Some(s);
                j = next;
            }
            Element::Word(w) => {
                if tok.kind != TokenKind::Word || tok.text.to_lowercase() != *w {
                    return None;
                }
                j += 1;
            }
            Element::Number(n) => {
                if tok.kind != TokenKind::Number || tok.text != n {
                    return None;
                }
                j += 1;
            }
            Element::Punct(c) => {
                if tok.kind != TokenKind::Punct || !tok.text.starts_with(*c) {
                    return None;
                }
                j += 1;
            }
        }
    }
    scores.map(|s| (j, s))
}

pub(crate) fn find_mentions_compiled(
    text: &str,
    grammar: &PatternGrammar,
    templates: &[CompiledTemplate],
) -> Vec<DsMention> {
    let tokens = lex(text);
    let mut candidates = Vec::new();
    for i in 0..tokens.len() {
        for t in templates {
            if let Some((end, scores)) = match_at(&tokens, i, t, grammar) {
                candidates.push((i, end, t.id.as_str(), scores));
            }
        }
    }
    // Leftmost, then longest, then pattern id so template order never matters.
    candidates.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)).then(a.2.cmp(b.2)));
    let mut mentions = Vec::new();
    let mut next_free = 0;
    for (i, end, id, scores) in candidates {
        if i < next_free {
            continue;
        }
        next_free = end;
        let (s, e) = (tokens[i].start, tokens[end - 1].end);
        for score in scores {
            mentions.push(DsMention {
                start: s,
                end: e,
                score,
                pattern_id: id.to_string(),
                surface: text[s..e].to_string(),
            });
        }
    }
    mentions
}

/// All non-overlapping mentions, leftmost-longest, case-insensitive.
pub fn find_mentions(text: &str, grammar: &PatternGrammar) -> Vec<DsMention> {
    let templates = grammar
        .compile()
        .expect("grammar templates were validated on construction");
    find_mentions_compiled(text, grammar, &templates)
}

/// Precompiled matcher for repeated use over a corpus.
pub struct Extractor {
    grammar: PatternGrammar,
    templates: Vec<CompiledTemplate>,
}

impl Extractor {
    pub fn new(grammar: PatternGrammar) -> Result<Self> {
        grammar.validate()?;
        let templates = grammar.compile()?;
        Ok(Extractor { grammar, templates })
    }

    pub fn grammar(&self) -> &PatternGrammar {
        &self.grammar
    }

    pub fn find(&self, text: &str) -> Vec<DsMention> {
        find_mentions_compiled(text, &self.grammar, &self.templates)
    }

    pub fn find_in_report(&self, report: &ReportDocument) -> Vec<DsMention> {
        report
            .sections()
            .iter()
            .flat_map(|(_, text)| self.find(text))
            .collect()
    }

    /// Removes mentions until none remain; a single pass can expose a new
    /// mention when redaction joins a stray trigger to a following score.
    pub fn redact_text(&self, text: &str) -> String {
        let mut current = text.to_string();
        loop {
            let mentions = self.find(&current);
            if mentions.is_empty() {
                return current;
            }
            current = redact(&current, &mentions).expect("spans come from this text");
        }
    }

    pub fn redact_report(&self, report: &ReportDocument) -> ReportDocument {
        report.map_sections(|s| self.redact_text(s))
    }
}

/// Exam-level label: the highest mentioned score, or `None` (exam excluded).
pub fn assign_exam_label(mentions: &[DsMention]) -> Option<DeauvilleLabel> {
    mentions
        .iter()
        .map(|m| m.score)
        .max()
        .map(|s| DeauvilleLabel::new(s).expect("mention scores are within 1..=5"))
}

/// Replaces every mention span by a single space, keeping all other text.
pub fn redact(text: &str, mentions: &[DsMention]) -> Result<String> {
    let mut spans: Vec<(usize, usize)> = Vec::with_capacity(mentions.len());
    for m in mentions {
        if m.start > m.end
            || m.end > text.len()
            || !text.is_char_boundary(m.start)
            || !text.is_char_boundary(m.end)
        {
            return Err(Error::validation(format!(
                "mention span {}..{} is outside the text (len {})",
                m.start,
                m.end,
                text.len()
            )));
        }
        spans.push((m.start, m.end));
    }
    spans.sort_unstable();
    spans.dedup();
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for (s, e) in spans {
        if s < cursor {
            if e > cursor {
                return Err(Error::validation("overlapping mention spans"));
            }
            continue;
        }
        out.push_str(&text[cursor..s]);
        out.push(' ');
        cursor = e;
    }
    out.push_str(&text[cursor..]);
    Ok(out)
}
