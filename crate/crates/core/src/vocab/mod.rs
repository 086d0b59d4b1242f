//! Tokenization and multi-granularity aspect-value vocabularies.

mod tokenizer;
mod values;

pub use tokenizer::{split_words, Tokenizer, CLS, CONTINUATION, MASK, PAD, SPECIALS, UNK};
pub use values::{
    build_value_vocab, decompose, decompose_annotations, normalize_phrase, AspectVocabularies,
    Granularity, GranularityAnnotation, ValueVocabulary,
};
