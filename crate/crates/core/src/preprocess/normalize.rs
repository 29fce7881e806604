use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Synonym {
    pub variant: String,
    pub canonical: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationConfig {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    /// Characters removed by the punctuation pass. A `.` between two digits is kept.
    pub punctuation: String,
    pub strip_dates: bool,
    /// Decimal places kept by rounding; `None` disables rounding.
    pub round_numbers_to: Option<u32>,
    pub synonym_map: Vec<Synonym>,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        let synonym_map = [
            ("standardized uptake value", "suvmax"),
            ("maximum suv", "suvmax"),
            ("max suv", "suvmax"),
            ("suv", "suvmax"),
            ("lymphadenopathy", "adenopathy"),
            ("hepatic", "liver"),
        ]
        .into_iter()
        .map(|(v, c)| Synonym {
            variant: v.to_string(),
            canonical: c.to_string(),
        })
        .collect();
        NormalizationConfig {
            lowercase: true,
            strip_punctuation: true,
            punctuation: "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~–—".to_string(),
            strip_dates: true,
            round_numbers_to: Some(1),
            synonym_map,
        }
    }
}

const MONTHS: &str = "january|february|march|april|may|june|july|august|september|october|november|december|jan|feb|mar|apr|jun|jul|aug|sep|sept|oct|nov|dec";

fn date_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let numeric = r"\b\d{1,2}/\d{1,2}/\d{2,4}\b|\b\d{4}-\d{1,2}-\d{1,2}\b";
        let day_month = format!(r"\b\d{{1,2}}(?:st|nd|rd|th)?\s+(?:of\s+)?(?:{MONTHS})\.?,?\s+\d{{4}}\b");
        let month_day = format!(r"\b(?:{MONTHS})\.?\s+\d{{1,2}}(?:st|nd|rd|th)?,?\s+\d{{4}}\b");
        let month_year = format!(r"\b(?:{MONTHS})\.?\s+\d{{4}}\b");
        Regex::new(&format!("(?i){numeric}|{day_month}|{month_day}|{month_year}"))
            .expect("date pattern compiles")
    })
}

fn decimal_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(\d+)\.(\d+)").expect("decimal pattern compiles"))
}

/// Rounds a decimal literal half away from zero using digit arithmetic, so
/// `0.15` and `2.675` round the way they read.
pub fn round_decimal_str(int_part: &str, frac_part: &str, places: usize) -> String {
    if frac_part.len() <= places {
        return format!("{int_part}.{frac_part}");
    }
    let round_up = frac_part.as_bytes()[places] >= b'5';
    let mut digits: Vec<u8> = int_part.bytes().chain(frac_part[..places].bytes()).collect();
    if round_up {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, b'1');
                break;
            }
            i -= 1;
            if digits[i] == b'9' {
                digits[i] = b'0';
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - places;
    let int = std::str::from_utf8(&digits[..split]).expect("ascii digits");
    if places == 0 {
        int.to_string()
    } else {
        let frac = std::str::from_utf8(&digits[split..]).expect("ascii digits");
        format!("{int}.{frac}")
    }
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn remove_punctuation(text: &str, punctuation: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        let decimal_point = c == '.'
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit());
        if punctuation.contains(c) && !decimal_point {
            out.push(' ');
        } else {
            out.push(c);
        }
    }
    out
}

/// Compiled normalizer; construction validates the synonym map.
#[derive(Debug, Clone)]
pub struct Normalizer {
    config: NormalizationConfig,
    synonyms: Option<(Regex, Vec<(String, String)>)>,
}

fn word_pattern(phrase: &str) -> String {
    let words: Vec<String> = phrase.split_whitespace().map(regex::escape).collect();
    format!(r"\b{}\b", words.join(r"\s+"))
}

impl Normalizer {
    pub fn new(config: NormalizationConfig) -> Result<Self> {
        let mut pairs: Vec<(String, String)> = config
            .synonym_map
            .iter()
            .map(|s| (collapse_whitespace(&s.variant.to_lowercase()), collapse_whitespace(&s.canonical.to_lowercase())))
            .collect();
        for (v, _) in &pairs {
            if v.is_empty() {
                return Err(Error::validation("synonym variant must not be empty"));
            }
        }
        // A canonical form that still contains a variant would be rewritten
        // again on a second pass.
        for (_, canonical) in &pairs {
            for (variant, _) in &pairs {
                let re = Regex::new(&word_pattern(variant)).expect("escaped pattern");
                if re.is_match(canonical) {
                    return Err(Error::validation(format!(
                        "synonym map is cyclic: canonical `{canonical}` contains variant `{variant}`"
                    )));
                }
            }
        }
        let synonyms = if pairs.is_empty() {
            None
        } else {
            // Longest variants first so multi-word phrases win over their parts.
            pairs.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
            let alternation: Vec<String> = pairs.iter().map(|(v, _)| word_pattern(v)).collect();
            let re = Regex::new(&format!("(?i){}", alternation.join("|"))).expect("escaped pattern");
            Some((re, pairs))
        };
        Ok(Normalizer { config, synonyms })
    }

    pub fn config(&self) -> &NormalizationConfig {
        &self.config
    }

    pub fn normalize(&self, text: &str) -> String {
        let cfg = &self.config;
        let mut s = if cfg.lowercase { text.to_lowercase() } else { text.to_string() };
        if cfg.strip_dates {
            s = date_regex().replace_all(&s, " ").into_owned();
        }
        if let Some(places) = cfg.round_numbers_to {
            s = decimal_regex()
                .replace_all(&s, |caps: &regex::Captures<'_>| {
                    round_decimal_str(&caps[1], &caps[2], places as usize)
                })
                .into_owned();
        }
        if cfg.strip_punctuation {
            s = remove_punctuation(&s, &cfg.punctuation);
        }
        if cfg.strip_dates && cfg.strip_punctuation {
            // Punctuation removal can expose forms like "march, 2017".
            s = date_regex().replace_all(&s, " ").into_owned();
        }
        s = collapse_whitespace(&s);
        if let Some((re, pairs)) = &self.synonyms {
            s = re
                .replace_all(&s, |caps: &regex::Captures<'_>| {
                    let found = collapse_whitespace(&caps[0].to_lowercase());
                    pairs
                        .iter()
                        .find(|(v, _)| *v == found)
                        .map(|(_, c)| c.clone())
                        .unwrap_or_else(|| caps[0].to_string())
                })
                .into_owned();
            s = collapse_whitespace(&s);
        }
        s
    }
}

/// One-shot normalization. Prefer [`Normalizer`] when normalizing many texts.
pub fn normalize(text: &str, config: &NormalizationConfig) -> Result<String> {
    Ok(Normalizer::new(config.clone())?.normalize(text))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_norm(text: &str) -> String {
        normalize(text, &NormalizationConfig::default()).unwrap()
    }

    #[test]
    fn rounds_and_strips_punctuation() {
        assert_eq!(default_norm("SUVmax of 7.23."), "suvmax of 7.2");
        assert_eq!(default_norm(""), "");
        assert_eq!(default_norm("value 0.15, 2.675 and 9.96"), "value 0.2 2.7 and 10.0");
    }

    #[test]
    fn rewrites_synonyms_on_word_boundaries() {
        let cfg = NormalizationConfig {
            synonym_map: vec![Synonym {
                variant: "standardized uptake value".into(),
                canonical: "suvmax".into(),
            }],
            ..NormalizationConfig::default()
        };
        assert_eq!(normalize("standardized uptake value", &cfg).unwrap(), "suvmax");
        assert_eq!(default_norm("SUV 3.1 and maximum SUV of 4.44; SUVmax 2"), "suvmax 3.1 and suvmax of 4.4 suvmax 2");
    }

    #[test]
    fn strips_dates_in_several_formats() {
        assert_eq!(default_norm("Compared with 3/14/2017."), "compared with");
        assert_eq!(default_norm("prior 14 March 2017, stable"), "prior stable");
        assert_eq!(default_norm("exam 2017-03-14 and March 4, 2016"), "exam and");
    }

    #[test]
    fn cyclic_synonyms_rejected() {
        let cfg = NormalizationConfig {
            synonym_map: vec![
                Synonym { variant: "a b".into(), canonical: "c".into() },
                Synonym { variant: "c".into(), canonical: "d".into() },
            ],
            ..NormalizationConfig::default()
        };
        assert!(Normalizer::new(cfg).is_err());
    }

    #[test]
    fn rounding_digit_arithmetic() {
        assert_eq!(round_decimal_str("7", "25", 1), "7.3");
        assert_eq!(round_decimal_str("99", "96", 1), "100.0");
        assert_eq!(round_decimal_str("7", "6", 0), "8");
        assert_eq!(round_decimal_str("7", "2", 1), "7.2");
    }
}
