use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::image::{add_noise, generate_image_with};
use super::templates::{self as tpl, MentionTemplate};
use super::types::{CorpusSpec, DeauvilleLabel, ExamRecord, Provenance, ReportDocument};
use crate::error::{Error, Result};
use crate::rng::{rng_for, Rng};

/// Per-dictator reporting habits.
#[derive(Debug, Clone)]
struct DictatorStyle {
    date_format: usize,
    suv_phrase: &'static str,
    trigger_case: usize,
    /// Indices of the class sentence templates this dictator favours.
    preferred: [Vec<usize>; 5],
}

impl DictatorStyle {
    fn new(seed: u64, dictator: usize) -> Self {
        let mut rng = rng_for(seed, "dictator", dictator as u64);
        let date_format = rng.gen_range(0..4);
        let suv_phrase = *tpl::SUV_PHRASES.choose(&mut rng).expect("non-empty");
        let trigger_case = match rng.gen_range(0..10) {
            0..=6 => 0,
            7..=8 => 1,
            _ => 2,
        };
        let preferred = std::array::from_fn(|class| {
            let n = tpl::CLASS_FINDINGS[class].len();
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx.truncate(6.min(n));
            idx.sort_unstable();
            idx
        });
        DictatorStyle {
            date_format,
            suv_phrase,
            trigger_case,
            preferred,
        }
    }

    fn format_date(&self, date: NaiveDate) -> String {
        let month = tpl::MONTHS[date.month0() as usize];
        match self.date_format {
            0 => format!("{}/{}/{}", date.month(), date.day(), date.year()),
            1 => format!("{} {} {}", date.day(), month, date.year()),
            2 => date.format("%Y-%m-%d").to_string(),
            _ => format!("{} {}, {}", month, date.day(), date.year()),
        }
    }

    fn trigger(&self, word: &str) -> String {
        match self.trigger_case {
            0 => word.to_string(),
            1 => word.to_lowercase(),
            _ => word.to_uppercase(),
        }
    }
}

fn first_exam_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2008, 1, 1).expect("valid date")
}

fn sample_class(rng: &mut Rng, weights: &[f64; 5]) -> u8 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i as u8 + 1;
        }
    }
    // Rounding slack lands on the last class with positive weight.
    weights.iter().rposition(|w| *w > 0.0).map_or(5, |i| i as u8 + 1)
}

fn adjacent(rng: &mut Rng, class: u8) -> u8 {
    match class {
        1 => 2,
        5 => 4,
        c if rng.gen_bool(0.5) => c - 1,
        c => c + 1,
    }
}

fn suv_value(rng: &mut Rng, range: (f64, f64)) -> String {
    format!("{:.2}", rng.gen_range(range.0..range.1))
}

struct ReportBuilder<'a> {
    rng: Rng,
    style: &'a DictatorStyle,
    spec: &'a CorpusSpec,
    template_weights: &'a [(&'static MentionTemplate, f64)],
}

impl ReportBuilder<'_> {
    fn fill(&mut self, sentence: &str, class: u8) -> String {
        let site = *tpl::SITES.choose(&mut self.rng).expect("non-empty");
        let suv = self
            .style
            .suv_phrase
            .replace("{x}", &suv_value(&mut self.rng, tpl::CLASS_SUV_RANGE[class as usize - 1]));
        let liver = self.style.suv_phrase.replace("{x}", &suv_value(&mut self.rng, (2.0, 3.0)));
        let pool = self.style.suv_phrase.replace("{x}", &suv_value(&mut self.rng, (1.4, 2.1)));
        sentence
            .replace("{site}", site)
            .replace("{suv}", &suv)
            .replace("{liver_suv}", &liver)
            .replace("{pool_suv}", &pool)
    }

    fn class_sentence(&mut self, class: u8) -> String {
        let idx = *self.style.preferred[class as usize - 1]
            .choose(&mut self.rng)
            .expect("non-empty");
        let sentence = tpl::CLASS_FINDINGS[class as usize - 1][idx];
        self.fill(sentence, class)
    }

    fn pick_template(&mut self) -> &'static MentionTemplate {
        let total: f64 = self.template_weights.iter().map(|(_, w)| w).sum();
        let mut u = self.rng.gen::<f64>() * total;
        for (t, w) in self.template_weights {
            if u < *w {
                return t;
            }
            u -= w;
        }
        self.template_weights.last().expect("validated non-empty").0
    }

    fn score_surface(&mut self, scores: &[u8]) -> String {
        let words = self.rng.gen_bool(self.spec.mention_style_mix.number_word_rate);
        let render = |s: u8| {
            if words {
                tpl::NUMBER_WORDS[s as usize - 1].to_string()
            } else {
                s.to_string()
            }
        };
        match scores {
            [s] => render(*s),
            [lo, .., hi] => {
                if words || self.rng.gen_bool(0.3) {
                    format!("{} to {}", render(*lo), render(*hi))
                } else {
                    format!("{}-{}", render(*lo), render(*hi))
                }
            }
            [] => unreachable!("mentions carry at least one score"),
        }
    }

    /// Renders one mention; returns the surface, template id and planted scores.
    fn mention(&mut self, score: u8, allow_range: bool) -> (String, &'static str, Vec<u8>) {
        let template = self.pick_template();
        let mix = &self.spec.mention_style_mix;
        let scores: Vec<u8> = if allow_range && score >= 2 && self.rng.gen_bool(mix.range_rate) {
            vec![score - 1, score]
        } else {
            vec![score]
        };
        let word = if self.rng.gen_bool(mix.misspelling_rate) {
            *tpl::TRIGGER_MISSPELLINGS.choose(&mut self.rng).expect("non-empty")
        } else {
            "Deauville"
        };
        let trigger = self.style.trigger(word);
        let surface = self.score_surface(&scores);
        let text = template.pattern.replace("{T}", &trigger).replace("{S}", &surface);
        (text, template.id, scores)
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn build_exam(
    spec: &CorpusSpec,
    styles: &[DictatorStyle],
    template_weights: &[(&'static MentionTemplate, f64)],
    index: usize,
) -> Result<ExamRecord> {
    let mut rng = rng_for(spec.seed, "exam", index as u64);
    let dictator = rng.gen_range(0..styles.len());
    let style = &styles[dictator];
    let assigned = sample_class(&mut rng, &spec.class_weights);
    let uptake = if rng.gen_bool(spec.label_noise) {
        adjacent(&mut rng, assigned)
    } else {
        assigned
    };
    let mentioned = !rng.gen_bool(spec.unmentioned_fraction);
    let exam_date = first_exam_date() + Duration::days(rng.gen_range(0..3650));
    let prior_date = exam_date - Duration::days(rng.gen_range(30..400));
    let image_seed = rng.gen::<u64>();
    let noise_seed = rng.gen::<u64>();

    let mut b = ReportBuilder {
        rng,
        style,
        spec,
        template_weights,
    };

    let indication = tpl::INDICATIONS
        .choose(&mut b.rng)
        .expect("non-empty")
        .replace("{dx}", tpl::DIAGNOSES.choose(&mut b.rng).expect("non-empty"))
        .replace("{phase}", tpl::PHASES.choose(&mut b.rng).expect("non-empty"))
        .replace("{date}", &style.format_date(prior_date));
    let indication = capitalize(&indication);

    let mut findings: Vec<String> = tpl::NEUTRAL_FINDINGS
        .choose_multiple(&mut b.rng, 2)
        .copied()
        .collect::<Vec<_>>()
        .into_iter()
        .map(|s| b.fill(s, uptake))
        .collect();
    let n_class = b.rng.gen_range(2..=3);
    for _ in 0..n_class {
        let class = if b.rng.gen_bool(spec.language_noise) {
            adjacent(&mut b.rng, uptake)
        } else {
            uptake
        };
        findings.push(b.class_sentence(class));
    }
    findings.shuffle(&mut b.rng);

    let mut templates_used = Vec::new();
    let mut planted = Vec::new();
    let summary = *tpl::CLASS_IMPRESSIONS[uptake as usize - 1]
        .choose(&mut b.rng)
        .expect("non-empty");
    let mut impression = vec![b.fill(summary, uptake)];

    let label = if mentioned {
        let multi = assigned >= 2 && b.rng.gen_bool(spec.mention_style_mix.multi_score_rate);
        if multi {
            let lesion_score = b.rng.gen_range(1..assigned);
            let (m, id, scores) = b.mention(lesion_score, false);
            let sentence = tpl::LESION_MENTION_SENTENCES
                .choose(&mut b.rng)
                .expect("non-empty")
                .replace("{M}", &m);
            let sentence = capitalize(&b.fill(&sentence, uptake));
            let at = b.rng.gen_range(0..=findings.len());
            findings.insert(at, sentence);
            templates_used.push(id.to_string());
            planted.extend(scores);
        }
        let (m, id, scores) = b.mention(assigned, true);
        let lead = tpl::MENTION_LEADS.choose(&mut b.rng).expect("non-empty");
        impression.push(format!("{lead} {m}."));
        templates_used.push(id.to_string());
        planted.extend(scores);
        Some(DeauvilleLabel::new(assigned)?)
    } else {
        None
    };
    if b.rng.gen_bool(0.3) {
        impression.push(format!(
            "Compared with {}.",
            style.format_date(prior_date)
        ));
    }

    let image = match (spec.with_images, label) {
        (true, Some(_)) => {
            let synth = generate_image_with(
                DeauvilleLabel::new(uptake)?,
                spec.image_size,
                image_seed,
                &spec.intensity,
            )?;
            let mut noise_rng = crate::rng::rng_from_seed(noise_seed);
            Some(add_noise(&synth.image, spec.image_noise, &mut noise_rng))
        }
        _ => None,
    };

    Ok(ExamRecord {
        exam_id: format!("exam-{:05}", index + 1),
        report: ReportDocument {
            indication,
            findings: findings.join(" "),
            impression: impression.join(" "),
        },
        image,
        label,
        dictator_id: format!("dr{:02}", dictator + 1),
        exam_date,
        provenance: Some(Provenance {
            uptake_class: uptake,
            mention_templates: templates_used,
            planted_scores: planted,
        }),
    })
}

/// Generates a labeled synthetic corpus. Each exam draws from its own
/// seed stream, so the parallel map is identical to a serial loop.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<ExamRecord>> {
    spec.validate()?;
    let styles: Vec<DictatorStyle> = (0..spec.n_dictators)
        .map(|d| DictatorStyle::new(spec.seed, d))
        .collect();
    let template_weights: Vec<(&'static MentionTemplate, f64)> = spec
        .mention_style_mix
        .templates
        .iter()
        .filter(|(_, w)| **w > 0.0)
        .map(|(id, w)| (tpl::mention_template(id).expect("validated"), *w))
        .collect();
    (0..spec.n_exams)
        .into_par_iter()
        .map(|i| build_exam(spec, &styles, &template_weights, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    /// Exams per assigned score 1..5.
    pub class_counts: [usize; 5],
    /// Exams without an assigned score.
    pub unlabeled: usize,
    pub dictator_counts: BTreeMap<String, usize>,
}

pub fn corpus_stats(corpus: &[ExamRecord]) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::validation("corpus is empty"));
    }
    let mut stats = CorpusStats {
        total: corpus.len(),
        class_counts: [0; 5],
        unlabeled: 0,
        dictator_counts: BTreeMap::new(),
    };
    for exam in corpus {
        match exam.label {
            Some(l) => stats.class_counts[l.index()] += 1,
            None => stats.unlabeled += 1,
        }
        *stats.dictator_counts.entry(exam.dictator_id.clone()).or_default() += 1;
    }
    Ok(stats)
}

/// Simple English sentences standing in for a general-domain pretraining corpus.
pub fn generate_generic_text(n_documents: usize, seed: u64) -> Vec<String> {
    use tpl::generic::*;
    (0..n_documents)
        .map(|i| {
            let mut rng = rng_for(seed, "generic", i as u64);
            let n_sentences = rng.gen_range(2..=4);
            (0..n_sentences)
                .map(|_| {
                    let mut parts = vec![*SUBJECTS.choose(&mut rng).expect("non-empty")];
                    if rng.gen_bool(0.3) {
                        parts.push(ADVERBS.choose(&mut rng).expect("non-empty"));
                    }
                    parts.push(VERBS.choose(&mut rng).expect("non-empty"));
                    parts.push(OBJECTS.choose(&mut rng).expect("non-empty"));
                    parts.push(PLACES.choose(&mut rng).expect("non-empty"));
                    if rng.gen_bool(0.4) {
                        parts.push(CLAUSES.choose(&mut rng).expect("non-empty"));
                    }
                    capitalize(&parts.join(" ")) + "."
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// Mention template usage counts, as recorded in a corpus manifest.
pub fn template_counts(corpus: &[ExamRecord]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for exam in corpus {
        if let Some(p) = &exam.provenance {
            for id in &p.mention_templates {
                *counts.entry(id.clone()).or_default() += 1;
            }
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, weights: [f64; 5], seed: u64) -> CorpusSpec {
        CorpusSpec {
            n_exams: n,
            class_weights: weights,
            seed,
            image_size: (32, 32),
            ..CorpusSpec::default()
        }
    }

    #[test]
    fn degenerate_weights_give_single_class() {
        let corpus = generate_corpus(&spec(5, [1.0, 0.0, 0.0, 0.0, 0.0], 7)).unwrap();
        assert_eq!(corpus.len(), 5);
        assert!(corpus.iter().all(|e| e.label.unwrap().value() == 1));
    }

    #[test]
    fn deterministic_under_seed() {
        let s = CorpusSpec {
            with_images: false,
            ..spec(300, [0.2; 5], 3)
        };
        let a = generate_corpus(&s).unwrap();
        let b = generate_corpus(&s).unwrap();
        assert_eq!(a, b);
        let c = generate_corpus(&CorpusSpec { seed: 4, ..s }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(generate_corpus(&spec(0, [0.2; 5], 0)).is_err());
        assert!(generate_corpus(&spec(3, [0.3; 5], 0)).is_err());
    }

    #[test]
    fn stats_partition_corpus() {
        let corpus = generate_corpus(&CorpusSpec {
            unmentioned_fraction: 0.4,
            with_images: false,
            ..spec(200, [0.2; 5], 1)
        })
        .unwrap();
        let stats = corpus_stats(&corpus).unwrap();
        assert_eq!(stats.class_counts.iter().sum::<usize>() + stats.unlabeled, 200);
        assert_eq!(stats.dictator_counts.values().sum::<usize>(), 200);
        assert!(stats.unlabeled > 40 && stats.unlabeled < 120);
        assert!(corpus_stats(&[]).is_err());
        let one = corpus_stats(&corpus[..1]).unwrap();
        assert_eq!(one.class_counts.iter().sum::<usize>() + one.unlabeled, 1);
    }

    #[test]
    fn images_only_for_labeled_exams() {
        let corpus = generate_corpus(&CorpusSpec {
            unmentioned_fraction: 0.5,
            ..spec(40, [0.2; 5], 2)
        })
        .unwrap();
        for exam in &corpus {
            assert_eq!(exam.image.is_some(), exam.label.is_some());
        }
    }

    #[test]
    fn generic_text_is_deterministic() {
        let a = generate_generic_text(10, 5);
        assert_eq!(a, generate_generic_text(10, 5));
        assert!(a.iter().all(|d| !d.to_lowercase().contains("deauville")));
    }
}
