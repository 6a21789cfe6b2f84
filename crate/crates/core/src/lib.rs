//! Bilingual document detection and analysis.
//!
//! Documents are segmented into sentences, scored per language, and
//! aggregated into a length-weighted distribution over a language pair.
//! High-entropy documents are candidates; candidates are verified and
//! classified as parallel, code-switching or miscellaneous.

pub mod align;
pub mod analytics;
pub mod classify;
pub mod corpus;
pub mod entropy;
pub mod judge;
pub mod lang;
pub mod langid;
pub mod parallel;
pub mod resources;
pub mod segment;
pub mod splits;
pub mod synth;
pub mod text;

pub use corpus::{read_corpus, write_corpus, AnnotationBlock, BilingualLabel, CorpusError, Document};
pub use entropy::{DocLangProfile, FilterConfig};
pub use lang::{Lang, LanguagePair};
pub use langid::{LangIdModel, LangScores, SentenceScorer};
pub use parallel::Workers;
