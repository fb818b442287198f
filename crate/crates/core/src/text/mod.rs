//! Tokenization, sentence splitting, corpora and the synthetic task.

pub mod corpus;
pub mod split;
pub mod stats;
pub mod synth;
pub mod tokenize;
pub mod vocab;

pub use corpus::{read_corpus, write_corpus, ControlledExample, CorpusRecord};
pub use split::{split_sentences, Document, RuleSplitter, SentenceSplitter, Span};
pub use stats::{corpus_stats, CorpusStats, LengthStats};
pub use synth::{generate_splits, generate_synthetic_corpus, SynthCorpus, SynthSpec};
pub use tokenize::{detokenize, split_tokens, tokenize};
pub use vocab::{build_vocab, TokenId, Vocabulary};
