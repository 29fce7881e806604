//! Byte-pair-encoding style subword vocabulary over characters, with an
//! end-of-word marker on the final symbol of each word.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, IoContext, Result};

pub const END_OF_WORD: &str = "</w>";

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const START: u32 = 2;
pub const SEP: u32 = 3;
pub const MASK: u32 = 4;
pub const SPECIAL_TOKENS: [&str; 5] = ["<pad>", "<unk>", "<s>", "</s>", "<mask>"];
pub const N_SPECIAL: u32 = SPECIAL_TOKENS.len() as u32;

const FILE_MAGIC: &str = "deauville-bpe 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

pub fn is_special(id: u32) -> bool {
    id < N_SPECIAL
}

fn initial_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    chars
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if i + 1 == chars.len() {
                format!("{c}{END_OF_WORD}")
            } else {
                c.to_string()
            }
        })
        .collect()
}

fn apply_merge(symbols: &mut Vec<String>, left: &str, right: &str) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            let merged = format!("{}{}", symbols[i], symbols[i + 1]);
            symbols[i] = merged;
            symbols.remove(i + 1);
        }
        i += 1;
    }
}

/// Learns merges by repeatedly joining the most frequent adjacent pair
/// (ties broken lexicographically) until `vocab_size` tokens exist or no
/// pair occurs at least twice.
pub fn train_subword_vocab(corpus: &[String], vocab_size: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::validation("vocabulary corpus is empty"));
    }
    let mut word_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for text in corpus {
        for word in text.split_whitespace() {
            *word_counts.entry(word).or_default() += 1;
        }
    }
    let mut words: Vec<(Vec<String>, usize)> = word_counts
        .into_iter()
        .map(|(w, c)| (initial_symbols(w), c))
        .collect();
    let mut base: Vec<String> = words.iter().flat_map(|(s, _)| s.iter().cloned()).collect();
    base.sort();
    base.dedup();
    let floor = SPECIAL_TOKENS.len() + base.len();
    if vocab_size <= floor {
        return Err(Error::validation(format!(
            "vocab_size {vocab_size} must exceed {} special tokens + {} base symbols",
            SPECIAL_TOKENS.len(),
            base.len()
        )));
    }
    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).chain(base).collect();
    let mut merges = Vec::new();
    while tokens.len() < vocab_size {
        let mut pairs: HashMap<(&str, &str), usize> = HashMap::new();
        for (symbols, count) in &words {
            for w in symbols.windows(2) {
                *pairs.entry((w[0].as_str(), w[1].as_str())).or_default() += count;
            }
        }
        let best = pairs
            .into_iter()
            .filter(|(_, c)| *c >= 2)
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
        let Some(((l, r), _)) = best else { break };
        let (l, r) = (l.to_string(), r.to_string());
        for (symbols, _) in &mut words {
            apply_merge(symbols, &l, &r);
        }
        tokens.push(format!("{l}{r}"));
        merges.push((l, r));
    }
    Vocabulary::from_parts(tokens, merges)
}

impl Vocabulary {
    pub fn from_parts(tokens: Vec<String>, merges: Vec<(String, String)>) -> Result<Self> {
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*special) {
                return Err(Error::validation(format!("token id {i} must be `{special}`")));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::validation(format!("invalid token {t:?}")));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::validation(format!("duplicate token {t:?}")));
            }
        }
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        Ok(Vocabulary {
            tokens,
            index,
            merges,
            ranks,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    fn segment(&self, word: &str) -> Vec<String> {
        let mut symbols = initial_symbols(word);
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|r| (*r, w)))
                .min_by_key(|(r, _)| *r)
                .map(|(_, w)| (w[0].clone(), w[1].clone()));
            match best {
                Some((l, r)) => apply_merge(&mut symbols, &l, &r),
                None => return symbols,
            }
        }
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.split_whitespace()
            .flat_map(|w| self.segment(w))
            .map(|s| self.id(&s).unwrap_or(UNK))
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if is_special(id) && id != UNK {
                continue;
            }
            match self.token(id) {
                Some(t) => out.push_str(&t.replace(END_OF_WORD, " ")),
                None => out.push_str(SPECIAL_TOKENS[UNK as usize]),
            }
        }
        out.trim_end().to_string()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{FILE_MAGIC}\ntokens {}\n", self.tokens.len());
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        let _ = writeln!(s, "merges {}", self.merges.len());
        for (l, r) in &self.merges {
            let _ = writeln!(s, "{l} {r}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::validation(format!("vocabulary file: {msg}"));
        let mut lines = text.lines();
        if lines.next() != Some(FILE_MAGIC) {
            return Err(bad("missing header".into()));
        }
        let count = |prefix: &str, line: Option<&str>| -> Result<usize> {
            line.and_then(|l| l.strip_prefix(prefix))
                .and_then(|n| n.trim().parse().ok())
                .ok_or_else(|| bad(format!("expected `{prefix}<count>`")))
        };
        let n_tokens = count("tokens ", lines.next())?;
        let tokens: Vec<String> = lines.by_ref().take(n_tokens).map(str::to_string).collect();
        if tokens.len() != n_tokens {
            return Err(bad("truncated token list".into()));
        }
        let n_merges = count("merges ", lines.next())?;
        let mut merges = Vec::with_capacity(n_merges);
        for _ in 0..n_merges {
            let line = lines.next().ok_or_else(|| bad("truncated merge list".into()))?;
            let (l, r) = line
                .split_once(' ')
                .ok_or_else(|| bad(format!("malformed merge `{line}`")))?;
            merges.push((l.to_string(), r.to_string()));
        }
        Vocabulary::from_parts(tokens, merges)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).at(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path).at(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_traced_merge_on_tiny_corpus() {
        // Symbols: a a a b</w> and a a b</w>. Pair counts: (a,a)=3, (a,b</w>)=2.
        let v = train_subword_vocab(&["aaab".into(), "aab".into()], 9).unwrap();
        assert_eq!(v.merges()[0], ("a".to_string(), "a".to_string()));
        assert!(v.id("aa").is_some());
    }

    #[test]
    fn too_small_vocab_is_rejected() {
        // 5 specials + {a, b</w>} = 7 tokens before any merge.
        assert!(train_subword_vocab(&["aaab".into()], 7).is_err());
        assert!(train_subword_vocab(&[], 50).is_err());
    }

    #[test]
    fn text_format_round_trip() {
        let v = train_subword_vocab(&["the liver uptake".into(), "liver liver uptake".into()], 40).unwrap();
        let back = Vocabulary::from_text(&v.to_text()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.encode("liver uptake"), v.encode("liver uptake"));
    }

    #[test]
    fn unknown_characters_map_to_unk() {
        let v = train_subword_vocab(&["abc".into()], 20).unwrap();
        let ids = v.encode("abz");
        assert!(ids.contains(&UNK));
    }
}
