//! Text normalization, subword vocabulary and bounded model inputs.

mod input;
mod normalize;
mod vocab;

pub use input::{
    build_input, build_input_ids, read_sequences, write_section_maps, write_sequences, Section,
    SectionSpan, TokenSequence, DEFAULT_LIMIT,
};
pub use normalize::{normalize, round_decimal_str, NormalizationConfig, Normalizer, Synonym};
pub use vocab::{
    is_special, train_subword_vocab, Vocabulary, END_OF_WORD, MASK, N_SPECIAL, PAD, SEP,
    SPECIAL_TOKENS, START, UNK,
};
