use std::collections::BTreeSet;

use deauville::corpus::{generate_corpus, templates::MENTION_TEMPLATES, CorpusSpec, MentionStyleMix};
use deauville::extraction::{
    assign_exam_label, find_mentions, mine_context_ngrams, redact, Extractor, PatternGrammar,
};
use proptest::prelude::*;

const WORDS: [&str; 5] = ["one", "two", "three", "four", "five"];

/// Every literal rendering of every (trigger variant, template, score form).
fn brute_force_renderings(grammar: &PatternGrammar) -> Vec<(String, Vec<u8>)> {
    let mut forms: Vec<(String, Vec<u8>)> = Vec::new();
    for s in 1..=5u8 {
        forms.push((s.to_string(), vec![s]));
        forms.push((WORDS[s as usize - 1].to_string(), vec![s]));
        for t in s + 1..=5 {
            let scores: Vec<u8> = (s..=t).collect();
            let (ws, wt) = (WORDS[s as usize - 1], WORDS[t as usize - 1]);
            for (a, b) in [(s.to_string(), t.to_string()), (ws.to_string(), wt.to_string())] {
                forms.push((format!("{a}-{b}"), scores.clone()));
                forms.push((format!("{a} to {b}"), scores.clone()));
            }
        }
    }
    let mut out = Vec::new();
    for def in &grammar.templates {
        for trigger in &grammar.trigger_terms {
            for (surface, scores) in &forms {
                let text = def.pattern.replace("{T}", trigger).replace("{S}", surface);
                out.push((text.to_lowercase(), scores.clone()));
            }
        }
    }
    out
}

/// Scores found by literal substring search, keeping the longest rendering
/// at each start offset and skipping overlaps left to right.
/// Skippable punctuation is deleted up front, mirroring the matcher's rule
/// that it may sit between template elements.
fn brute_force_scores(text: &str, grammar: &PatternGrammar) -> Vec<u8> {
    let stripped: String = text
        .chars()
        .filter(|c| !grammar.skip_punctuation.contains(*c))
        .collect();
    let lower = stripped.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let mut hits: Vec<(usize, usize, Vec<u8>)> = Vec::new();
    for (rendered, scores) in brute_force_renderings(grammar) {
        let mut from = 0;
        while let Some(at) = lower[from..].find(&rendered) {
            let start = from + at;
            let end = start + rendered.len();
            let bounded = |i: usize| {
                lower[..i].chars().last().map_or(true, |c| !c.is_alphanumeric())
            };
            let after_ok = lower[end..].chars().next().map_or(true, |c| !c.is_alphanumeric());
            if bounded(start) && after_ok {
                hits.push((start, end, scores.clone()));
            }
            from = start + 1;
        }
    }
    hits.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut out = Vec::new();
    let mut free = 0;
    for (s, e, scores) in hits {
        if s >= free {
            out.extend(scores);
            free = e;
        }
    }
    out
}

#[test]
fn range_mention_matches_brute_force_oracle() {
    let grammar = PatternGrammar::default();
    let text = "Deauvile score 4-5 for the splenic lesion.";
    let found: Vec<u8> = find_mentions(text, &grammar).iter().map(|m| m.score).collect();
    assert_eq!(found, vec![4, 5]);
    assert_eq!(brute_force_scores(text, &grammar), found);
}

#[test]
fn generated_reports_agree_with_brute_force_oracle() {
    let grammar = PatternGrammar::default();
    let mut mix = MentionStyleMix::default();
    // Generated misspellings outside the grammar's variant list need the
    // fuzzy path, which the literal oracle cannot see.
    mix.misspelling_rate = 0.0;
    let corpus = generate_corpus(&CorpusSpec {
        n_exams: 300,
        seed: 21,
        with_images: false,
        mention_style_mix: mix,
        ..CorpusSpec::default()
    })
    .unwrap();
    for exam in &corpus {
        for (_, section) in exam.report.sections() {
            let found: Vec<u8> = find_mentions(section, &grammar).iter().map(|m| m.score).collect();
            assert_eq!(found, brute_force_scores(section, &grammar), "{section}");
        }
    }
}

#[test]
fn planted_labels_are_recovered_and_redaction_is_clean() {
    let extractor = Extractor::new(PatternGrammar::default()).unwrap();
    let corpus = generate_corpus(&CorpusSpec {
        n_exams: 500,
        seed: 5,
        with_images: false,
        unmentioned_fraction: 0.2,
        ..CorpusSpec::default()
    })
    .unwrap();
    for exam in &corpus {
        let mentions = extractor.find_in_report(&exam.report);
        assert_eq!(assign_exam_label(&mentions), exam.label, "{}", exam.report.full_text());
        let planted: BTreeSet<u8> = exam.provenance.as_ref().unwrap().planted_scores.iter().copied().collect();
        let found: BTreeSet<u8> = mentions.iter().map(|m| m.score).collect();
        assert_eq!(found, planted);
        let redacted = exam.report.map_sections(|s| redact(s, &extractor.find(s)).unwrap());
        assert!(extractor.find_in_report(&redacted).is_empty());
    }
}

#[test]
fn planted_dominant_template_ranks_first() {
    let mut mix = MentionStyleMix::default();
    for (id, w) in mix.templates.iter_mut() {
        *w = if id == "score_of" { 0.6 } else { 0.4 / (MENTION_TEMPLATES.len() - 1) as f64 };
    }
    mix.multi_score_rate = 0.0;
    mix.range_rate = 0.0;
    let corpus = generate_corpus(&CorpusSpec {
        n_exams: 400,
        seed: 8,
        with_images: false,
        mention_style_mix: mix,
        ..CorpusSpec::default()
    })
    .unwrap();
    let planted = deauville::corpus::template_counts(&corpus);
    let top = planted.iter().max_by_key(|(_, c)| **c).unwrap().0;
    assert_eq!(top, "score_of");
    let reports: Vec<_> = corpus.iter().map(|e| e.report.clone()).collect();
    let mined = mine_context_ngrams(&reports, "deauville", (4, 4), 0).unwrap();
    assert_eq!(mined.entries[0].0, "deauville score of <n>");
}

fn mention_strategy() -> impl Strategy<Value = (String, Vec<u8>)> {
    let triggers = prop::sample::select(vec![
        "Deauville", "deauville", "DEAUVILLE", "Deauvile", "Deuville", "Duaville", "Dauville",
        "Deauvillle",
    ]);
    let template = prop::sample::select(MENTION_TEMPLATES.iter().map(|t| t.pattern).collect::<Vec<_>>());
    (triggers, template, 1u8..=5, 0u8..=2, any::<bool>()).prop_map(|(t, p, s, extra, words)| {
        let hi = (s + extra).min(5);
        let render = |v: u8| if words { WORDS[v as usize - 1].to_string() } else { v.to_string() };
        let surface = if hi > s {
            format!("{}-{}", render(s), render(hi))
        } else {
            render(s)
        };
        (p.replace("{T}", t).replace("{S}", &surface), (s..=hi).collect())
    })
}

const FILLERS: [&str; 6] = [
    "Residual uptake in the neck.",
    "Consistent with a",
    "SUVmax 4.25 in the spleen.",
    "Overall",
    "Compared with 3/14/2017.",
    "Stable disease.",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn redaction_closure_and_max_rule(
        parts in prop::collection::vec((prop::sample::select(FILLERS.to_vec()), prop::option::of(mention_strategy())), 1..6)
    ) {
        let grammar = PatternGrammar::default();
        let mut text = String::new();
        let mut planted = Vec::new();
        for (filler, mention) in &parts {
            text.push_str(filler);
            text.push(' ');
            if let Some((m, scores)) = mention {
                text.push_str(m);
                text.push_str(". ");
                planted.extend(scores.iter().copied());
            }
        }
        let mentions = find_mentions(&text, &grammar);
        for m in &mentions {
            prop_assert_eq!(&text[m.start..m.end], m.surface.as_str());
        }
        prop_assert_eq!(assign_exam_label(&mentions).map(|l| l.value()), planted.iter().copied().max());
        let redacted = redact(&text, &mentions).unwrap();
        prop_assert!(find_mentions(&redacted, &grammar).is_empty(), "{}", redacted);
    }

    #[test]
    fn template_order_does_not_matter(seed in 0u64..1000, text_seed in 0u64..50) {
        let mut grammar = PatternGrammar::default();
        let corpus = generate_corpus(&CorpusSpec { n_exams: 3, seed: text_seed, with_images: false, ..CorpusSpec::default() }).unwrap();
        let before: Vec<_> = corpus.iter().map(|e| find_mentions(&e.report.full_text(), &grammar)).collect();
        use rand::{seq::SliceRandom, SeedableRng};
        grammar.templates.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let after: Vec<_> = corpus.iter().map(|e| find_mentions(&e.report.full_text(), &grammar)).collect();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn adding_a_mention_never_lowers_the_label(scores in prop::collection::vec(1u8..=5, 0..6), extra in 1u8..=5) {
        let grammar = PatternGrammar::default();
        let text: String = scores.iter().map(|s| format!("Deauville score of {s}. ")).collect();
        let base = assign_exam_label(&find_mentions(&text, &grammar));
        let more = assign_exam_label(&find_mentions(&format!("{text}Deauville {extra}."), &grammar));
        prop_assert!(more >= base);
        prop_assert_eq!(more.unwrap().value(), scores.iter().copied().chain([extra]).max().unwrap());
    }
}
