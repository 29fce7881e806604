use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lexer::{lex, TokenKind};
use crate::error::{Error, Result};

/// One mention pattern, written with `{T}` for the trigger word and `{S}`
/// for the score slot, e.g. `"{T} score of {S}"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateDef {
    pub id: String,
    pub pattern: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternGrammar {
    pub trigger_terms: Vec<String>,
    /// Tokens starting with one of these prefixes are edit-distance candidates.
    pub fuzzy_prefixes: Vec<String>,
    pub max_edit_distance: usize,
    /// Punctuation that may sit between template elements without breaking a match.
    pub skip_punctuation: String,
    pub number_words: BTreeMap<String, u8>,
    pub templates: Vec<TemplateDef>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Element {
    Trigger,
    Score,
    Word(String),
    Number(String),
    Punct(char),
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledTemplate {
    pub id: String,
    pub elements: Vec<Element>,
}

impl Default for PatternGrammar {
    fn default() -> Self {
        let templates = [
            ("score_of", "{T} score of {S}"),
            ("on_scale", "{S} on the {T} scale"),
            ("bare", "{T} {S}"),
            ("colon", "{T} score {S}"),
            ("criteria", "{T} criteria score {S}"),
            ("out_of", "{T} score {S} out of 5"),
            ("slash", "{T} {S}/5"),
            ("category", "{T} category {S}"),
            ("is", "{T} score is {S}"),
            ("by_criteria", "{S} by {T} criteria"),
            ("grade", "{T} grade {S}"),
        ]
        .into_iter()
        .map(|(id, pattern)| TemplateDef {
            id: id.to_string(),
            pattern: pattern.to_string(),
        })
        .collect();
        PatternGrammar {
            trigger_terms: ["deauville", "deauvile", "deuville", "duaville", "dauville"]
                .map(String::from)
                .to_vec(),
            fuzzy_prefixes: vec!["deau".into(), "deuv".into()],
            max_edit_distance: 2,
            skip_punctuation: ":=,()".into(),
            number_words: [("one", 1), ("two", 2), ("three", 3), ("four", 4), ("five", 5)]
                .into_iter()
                .map(|(w, v)| (w.to_string(), v))
                .collect(),
            templates,
        }
    }
}

impl PatternGrammar {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let grammar: PatternGrammar = toml::from_str(text)?;
        grammar.validate()?;
        Ok(grammar)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let grammar: PatternGrammar = crate::util::read_toml(path)?;
        grammar.validate()?;
        Ok(grammar)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("grammar serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.trigger_terms.is_empty() || self.trigger_terms.iter().any(|t| t.trim().is_empty()) {
            return Err(Error::validation("grammar needs non-empty trigger terms"));
        }
        for (word, value) in &self.number_words {
            if !(1..=5).contains(value) {
                return Err(Error::validation(format!("number word `{word}` maps to {value}")));
            }
        }
        let mut ids = std::collections::HashSet::new();
        for t in &self.templates {
            if !ids.insert(t.id.as_str()) {
                return Err(Error::validation(format!("duplicate template id `{}`", t.id)));
            }
        }
        let compiled = self.compile()?;
        // Each template must read back the score it was rendered with.
        for t in &compiled {
            for score in 1..=5u8 {
                let text = render(t, &self.trigger_terms[0], &score.to_string());
                let found = super::find_mentions_compiled(&text, self, &compiled);
                if found.is_empty() || found.iter().any(|m| m.score != score) {
                    return Err(Error::validation(format!(
                        "template `{}` is ambiguous: `{text}` yields {:?}",
                        t.id,
                        found.iter().map(|m| m.score).collect::<Vec<_>>()
                    )));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn compile(&self) -> Result<Vec<CompiledTemplate>> {
        self.templates.iter().map(compile_template).collect()
    }

    pub(crate) fn score_of_word(&self, word: &str) -> Option<u8> {
        self.number_words.get(word).copied()
    }
}

fn compile_template(def: &TemplateDef) -> Result<CompiledTemplate> {
    let mut elements = Vec::new();
    let mut rest = def.pattern.as_str();
    while !rest.is_empty() {
        let next = [("{T}", Element::Trigger), ("{S}", Element::Score)]
            .into_iter()
            .filter_map(|(tag, el)| rest.find(tag).map(|at| (at, tag, el)))
            .min_by_key(|(at, _, _)| *at);
        let (literal, tail) = match &next {
            Some((at, tag, _)) => (&rest[..*at], &rest[at + tag.len()..]),
            None => (rest, ""),
        };
        for tok in lex(literal) {
            elements.push(match tok.kind {
                TokenKind::Word => Element::Word(tok.text.to_lowercase()),
                TokenKind::Number => Element::Number(tok.text.to_string()),
                TokenKind::Punct => Element::Punct(tok.text.chars().next().expect("non-empty")),
            });
        }
        if let Some((_, _, el)) = next {
            elements.push(el);
        }
        rest = tail;
    }
    let count = |e: &Element| elements.iter().filter(|x| *x == e).count();
    if count(&Element::Trigger) != 1 || count(&Element::Score) != 1 {
        return Err(Error::validation(format!(
            "template `{}` must contain exactly one {{T}} and one {{S}}",
            def.id
        )));
    }
    Ok(CompiledTemplate {
        id: def.id.clone(),
        elements,
    })
}

fn render(t: &CompiledTemplate, trigger: &str, score: &str) -> String {
    let mut out = String::new();
    for el in &t.elements {
        match el {
            Element::Punct(c) => out.push(*c),
            other => {
                if !out.is_empty() {
                    out.push(' ');
                }
                match other {
                    Element::Trigger => out.push_str(trigger),
                    Element::Score => out.push_str(score),
                    Element::Word(w) | Element::Number(w) => out.push_str(w),
                    Element::Punct(_) => unreachable!(),
                }
            }
        }
    }
    out
}
