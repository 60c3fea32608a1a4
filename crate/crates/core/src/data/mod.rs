//! Domain types, BIO codec, dataset files, splitting and vocabularies.

pub mod bio;
pub mod conll;
mod split;
mod tokenize;
mod types;
pub mod vocab;

pub use bio::{bio_to_spans, decode_bio, spans_to_bio, Decoded};
pub use conll::{parse_dataset, read_dataset, render_dataset, write_dataset, ParseWarning, Parsed};
pub use split::split_dataset;
pub use tokenize::TokenizationMode;
pub use types::{
    AnnotatedSentence, Dataset, EntitySpan, LabelScheme, Sentence, Tag, TagSequence, Token,
};
pub use vocab::{build_vocab, Vocab};
