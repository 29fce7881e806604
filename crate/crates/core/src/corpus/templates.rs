//! Sentence and mention template library for the synthetic report generator.
//!
//! Placeholders: `{T}` trigger word, `{S}` score, `{site}` nodal station,
//! `{suv}` quantitative uptake phrase.

pub struct MentionTemplate {
    pub id: &'static str,
    pub pattern: &'static str,
}

pub const MENTION_TEMPLATES: &[MentionTemplate] = &[
    MentionTemplate { id: "score_of", pattern: "{T} score of {S}" },
    MentionTemplate { id: "on_scale", pattern: "{S} on the {T} scale" },
    MentionTemplate { id: "bare", pattern: "{T} {S}" },
    MentionTemplate { id: "colon", pattern: "{T} score: {S}" },
    MentionTemplate { id: "criteria", pattern: "{T} criteria score {S}" },
    MentionTemplate { id: "out_of", pattern: "{T} score {S} out of 5" },
    MentionTemplate { id: "slash", pattern: "{T} {S}/5" },
    MentionTemplate { id: "category", pattern: "{T} category {S}" },
    MentionTemplate { id: "is", pattern: "{T} score is {S}" },
    MentionTemplate { id: "by_criteria", pattern: "{S} by {T} criteria" },
    MentionTemplate { id: "grade", pattern: "{T} grade {S}" },
];

pub fn mention_template(id: &str) -> Option<&'static MentionTemplate> {
    MENTION_TEMPLATES.iter().find(|t| t.id == id)
}

/// Misspellings planted by the generator. The last two are not in the
/// extraction grammar's variant list and exercise the fuzzy trigger path.
pub const TRIGGER_MISSPELLINGS: &[&str] = &[
    "Deauvile",
    "Deuville",
    "Duaville",
    "Dauville",
    "Deauvillle",
    "Deauviile",
];

pub const NUMBER_WORDS: [&str; 5] = ["one", "two", "three", "four", "five"];

/// Lead-ins for an impression-level mention sentence.
pub const MENTION_LEADS: &[&str] = &[
    "Consistent with a",
    "Findings correspond to",
    "Overall",
    "Assessment:",
    "Response assessment",
    "This represents",
];

/// Lesion-specific mention sentences (`{M}` is the rendered mention).
pub const LESION_MENTION_SENTENCES: &[&str] = &[
    "The {site} lesion corresponds to {M}.",
    "For the {site} nodes, {M}.",
    "{M} for the {site} abnormality.",
];

pub const SITES: &[&str] = &[
    "cervical",
    "supraclavicular",
    "axillary",
    "mediastinal",
    "hilar",
    "retroperitoneal",
    "mesenteric",
    "inguinal",
    "iliac",
    "paraaortic",
    "subcarinal",
    "portocaval",
];

pub const DIAGNOSES: &[&str] = &[
    "Diffuse large B-cell lymphoma",
    "Hodgkin lymphoma",
    "Follicular lymphoma",
    "Mantle cell lymphoma",
    "Non-Hodgkin lymphoma",
    "Burkitt lymphoma",
];

pub const PHASES: &[&str] = &[
    "interim",
    "end of treatment",
    "restaging",
    "post-chemotherapy",
    "follow-up",
];

/// Indication templates; `{dx}`, `{phase}` and `{date}` are substituted.
pub const INDICATIONS: &[&str] = &[
    "{dx}, {phase} evaluation. Comparison PET/CT dated {date}.",
    "{dx}. {phase} assessment; prior exam {date}.",
    "History of {dx}, now {phase}. Compared with study of {date}.",
    "{phase} PET/CT for {dx}. Prior {date}.",
];

/// Class-independent findings sentences.
pub const NEUTRAL_FINDINGS: &[&str] = &[
    "Physiologic FDG activity is seen in the brain, myocardium, and urinary tract.",
    "The liver demonstrates homogeneous uptake with {liver_suv}.",
    "Mediastinal blood pool {pool_suv}.",
    "No suspicious pulmonary nodules.",
    "Bone marrow uptake is diffuse and symmetric.",
    "Degenerative changes of the spine are unchanged.",
    "Scattered colonic activity is likely physiologic.",
    "Small hiatal hernia.",
    "No pleural or pericardial effusion.",
    "Brown fat activity in the neck is noted.",
];

/// Findings sentences per uptake class (index 0 = score 1).
pub const CLASS_FINDINGS: [&[&str]; 5] = [
    &[
        "No abnormal FDG uptake is seen above background in the {site} region.",
        "Previously noted {site} adenopathy has resolved without residual uptake.",
        "The {site} nodes are no longer FDG avid.",
        "There is no residual hypermetabolic {site} lymphadenopathy.",
        "Interval resolution of the {site} hypermetabolic disease.",
        "No focal uptake is identified in the {site} region above background activity.",
        "Complete resolution of previously seen {site} uptake.",
        "The {site} station shows no activity above surrounding background.",
    ],
    &[
        "Minimal residual uptake in the {site} nodes, less than mediastinal blood pool, {suv}.",
        "Faint {site} activity below the mediastinum with {suv}.",
        "Small {site} node with low grade uptake less than blood pool.",
        "Residual {site} soft tissue with trace uptake below mediastinal background.",
        "Mild {site} uptake, lower than mediastinal blood pool, {suv}.",
        "Decreased {site} activity now below the mediastinal reference.",
        "Tiny {site} lymph node with minimal activity, {suv}.",
        "Residual {site} density with faint uptake less than mediastinum.",
    ],
    &[
        "Residual {site} uptake slightly above mediastinum but not exceeding liver, {suv}.",
        "Mild {site} activity greater than blood pool and less than liver.",
        "Persistent {site} node with uptake similar to liver, {suv}.",
        "Low level {site} uptake between the mediastinal and hepatic references.",
        "The {site} node has uptake equal to liver background.",
        "Residual mild {site} activity not exceeding hepatic uptake.",
        "Mildly avid {site} lymph node, {suv}, below the liver.",
        "Indeterminate {site} uptake slightly above the mediastinum.",
    ],
    &[
        "Persistent {site} uptake moderately higher than liver, {suv}.",
        "Residual hypermetabolic {site} node with uptake above hepatic background, {suv}.",
        "The {site} lymph node shows moderately increased activity compared to liver.",
        "Persistent moderately avid {site} adenopathy, {suv}.",
        "The {site} nodes remain mildly enlarged with uptake greater than liver.",
        "Decreased but persistent {site} hypermetabolism above the liver, {suv}.",
        "Moderate residual uptake in the {site} region exceeding liver.",
        "Residual {site} mass with moderate FDG avidity, {suv}.",
    ],
    &[
        "Intensely hypermetabolic {site} adenopathy, {suv}.",
        "New hypermetabolic {site} nodes with markedly increased uptake.",
        "Markedly FDG avid {site} mass, {suv}.",
        "Enlarging {site} lymph nodes with intense uptake far above liver.",
        "New focal splenic lesions with marked hypermetabolism, {suv}.",
        "Bulky {site} disease with intense FDG uptake.",
        "Progressive {site} adenopathy with markedly increased activity, {suv}.",
        "Multiple new intensely avid {site} lesions.",
    ],
];

/// Impression summary sentences per uptake class.
pub const CLASS_IMPRESSIONS: [&[&str]; 5] = [
    &[
        "Complete metabolic response.",
        "No evidence of active lymphoma.",
        "Resolution of previously hypermetabolic disease.",
        "No residual FDG avid disease.",
    ],
    &[
        "Near complete metabolic response with minimal residual uptake.",
        "Favorable response with residual activity below mediastinum.",
        "Minimal residual uptake, below blood pool.",
        "Marked interval improvement with faint residual activity.",
    ],
    &[
        "Favorable response with residual uptake not exceeding liver.",
        "Minimal residual disease with uptake similar to liver.",
        "Residual low level activity, likely complete metabolic response.",
        "Improved disease with mild residual uptake below hepatic background.",
    ],
    &[
        "Partial metabolic response with residual disease above liver.",
        "Residual metabolically active lymphoma, moderately increased.",
        "Persistent moderate hypermetabolism, partial response.",
        "Interval improvement with residual avid disease.",
    ],
    &[
        "Progressive metabolically active lymphoma.",
        "Markedly hypermetabolic disease consistent with progression.",
        "New intensely avid lesions, progressive disease.",
        "Extensive hypermetabolic lymphoma with marked uptake.",
    ],
];

/// SUVmax range per uptake class; score 1 reports quote no lesion value.
pub const CLASS_SUV_RANGE: [(f64, f64); 5] = [
    (0.8, 1.4),
    (1.0, 2.0),
    (2.0, 3.2),
    (3.3, 6.0),
    (6.5, 24.0),
];

/// Ways different dictators quote an uptake value (`{x}` is the number).
pub const SUV_PHRASES: &[&str] = &[
    "SUVmax {x}",
    "SUV {x}",
    "standardized uptake value {x}",
    "maximum SUV of {x}",
    "SUVmax of {x}",
];

pub const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

/// Vocabulary of the generic English corpus used for generic pretraining.
pub mod generic {
    pub const SUBJECTS: &[&str] = &[
        "the farmer", "a teacher", "my neighbor", "the old man", "a young girl", "the captain",
        "our family", "the children", "a small dog", "the baker", "her brother", "the students",
        "a traveler", "the mayor", "his friend", "the musician",
    ];
    pub const VERBS: &[&str] = &[
        "visited", "painted", "carried", "found", "watched", "cleaned", "built", "bought",
        "described", "remembered", "opened", "followed", "borrowed", "repaired",
    ];
    pub const OBJECTS: &[&str] = &[
        "the house", "a red boat", "the garden", "an old map", "the market", "a wooden chair",
        "the river", "a long letter", "the bridge", "a bright lamp", "the library", "a new song",
        "the station", "a warm coat",
    ];
    pub const PLACES: &[&str] = &[
        "in the village", "near the coast", "after dinner", "during the storm", "on sunday",
        "before the holiday", "in the morning", "at the festival", "by the lake", "in the city",
        "across the valley", "under the trees",
    ];
    pub const ADVERBS: &[&str] = &[
        "quickly", "carefully", "quietly", "happily", "slowly", "proudly", "again", "together",
    ];
    pub const CLAUSES: &[&str] = &[
        "because it was raining", "while the sun was setting", "and everyone was pleased",
        "although nobody asked", "so the day ended well", "when the bells rang",
        "and then went home", "as the crowd cheered",
    ];
}
