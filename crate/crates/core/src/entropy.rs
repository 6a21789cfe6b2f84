//! Stage 1: length-weighted document language distribution, its entropy,
//! and the candidate threshold.
//!
//! For sentences `i` with word-count weight `l_i` and scores `p_i[lang]`,
//! the document mass of a language is `m[lang] = Σ l_i · p_i[lang]`. The pair
//! masses are renormalized into `p_doc`, and `H = -Σ p·ln p` over the pair
//! (natural log, `0·ln 0 = 0`). A document is a candidate when `H > tau`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotationBlock, BilingualLabel, Document};
use crate::lang::{Lang, LanguagePair};
use crate::langid::{ScoreError, SentenceScorer};
use crate::parallel::{OrderedMap, Workers};
use crate::segment::{self, SentenceSpan};

pub const DEFAULT_TAU: f64 = 0.1;
pub const DEFAULT_MIN_PAIR_MASS: f64 = 0.5;
pub const DEFAULT_MAX_DOC_BYTES: usize = 2 << 20;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("scorer has no scores for language {0}")]
    MissingLanguage(Lang),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("invalid filter config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub tau: f64,
    pub min_pair_mass: f64,
    /// Renormalize each sentence's pair scores before aggregating instead of
    /// only normalizing the document masses.
    pub normalize_per_sentence: bool,
    pub max_doc_bytes: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            tau: DEFAULT_TAU,
            min_pair_mass: DEFAULT_MIN_PAIR_MASS,
            normalize_per_sentence: false,
            max_doc_bytes: DEFAULT_MAX_DOC_BYTES,
        }
    }
}

impl FilterConfig {
    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(ProfileError::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.min_pair_mass) {
            return Err(ProfileError::Config(format!(
                "min_pair_mass must be in [0, 1], got {}",
                self.min_pair_mass
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocLangProfile {
    pub pair: LanguagePair,
    /// `[pivot, partner]`, summing to 1.
    pub p_doc: [f64; 2],
    /// Nats.
    pub entropy: f64,
    /// Share of the unnormalized score mass that falls on the pair.
    pub pair_mass: f64,
    pub sentence_count: usize,
}

impl DocLangProfile {
    pub fn empty(pair: LanguagePair) -> Self {
        DocLangProfile {
            pair,
            p_doc: [1.0, 0.0],
            entropy: 0.0,
            pair_mass: 0.0,
            sentence_count: 0,
        }
    }

    pub fn p(&self, lang: Lang) -> Option<f64> {
        if lang == self.pair.pivot {
            Some(self.p_doc[0])
        } else if lang == self.pair.partner {
            Some(self.p_doc[1])
        } else {
            None
        }
    }
}

/// Entropy in nats of a two-outcome distribution.
pub fn pair_entropy(p: [f64; 2]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Running language masses for one document.
#[derive(Debug, Clone, Copy, Default)]
pub struct MassAccumulator {
    pivot: f64,
    partner: f64,
    /// Raw pair mass; differs from `pivot + partner` when normalizing.
    raw_pair: f64,
    total: f64,
    sentences: usize,
}

impl MassAccumulator {
    /// `scores` is aligned with the scorer's language inventory.
    pub fn add(&mut self, length_weight: u32, scores: &[f64], pivot: usize, partner: usize, normalize: bool) {
        let l = length_weight as f64;
        let (mut pp, mut pq) = (scores[pivot], scores[partner]);
        self.raw_pair += l * (pp + pq);
        if normalize {
            let s = pp + pq;
            if s > 0.0 {
                pp /= s;
                pq /= s;
            }
        }
        self.pivot += l * pp;
        self.partner += l * pq;
        self.total += l * scores.iter().sum::<f64>();
        self.sentences += 1;
    }

    pub fn finish(self, pair: LanguagePair) -> DocLangProfile {
        let in_pair = self.pivot + self.partner;
        if self.sentences == 0 || in_pair <= 0.0 {
            return DocLangProfile {
                sentence_count: self.sentences,
                ..DocLangProfile::empty(pair)
            };
        }
        let p_doc = [self.pivot / in_pair, self.partner / in_pair];
        let pair_mass = if self.total > 0.0 {
            (self.raw_pair / self.total).min(1.0)
        } else {
            0.0
        };
        DocLangProfile {
            pair,
            p_doc,
            entropy: pair_entropy(p_doc),
            pair_mass,
            sentence_count: self.sentences,
        }
    }
}

fn pair_indices(scorer: &dyn SentenceScorer, pair: LanguagePair) -> Result<(usize, usize), ProfileError> {
    let pivot = scorer
        .index_of(pair.pivot)
        .ok_or(ProfileError::MissingLanguage(pair.pivot))?;
    let partner = scorer
        .index_of(pair.partner)
        .ok_or(ProfileError::MissingLanguage(pair.partner))?;
    Ok((pivot, partner))
}

/// Segments `doc` and attaches language scores to every span.
pub fn score_spans<'d>(doc: &'d Document, scorer: &dyn SentenceScorer) -> Result<Vec<SentenceSpan<'d>>, ProfileError> {
    let mut spans = segment::segment(&doc.text);
    for (i, span) in spans.iter_mut().enumerate() {
        span.lang_scores = Some(scorer.score_span(&doc.doc_id, i, span.text)?);
    }
    Ok(spans)
}

/// Aggregates already-scored spans into a profile.
pub fn profile_spans(
    spans: &[SentenceSpan<'_>],
    pair: LanguagePair,
    scorer: &dyn SentenceScorer,
    config: &FilterConfig,
) -> Result<DocLangProfile, ProfileError> {
    let (pivot, partner) = pair_indices(scorer, pair)?;
    let mut acc = MassAccumulator::default();
    for span in spans {
        let scores = span.lang_scores.as_ref().expect("profile_spans needs scored spans");
        acc.add(
            span.length_weight,
            &scores.values,
            pivot,
            partner,
            config.normalize_per_sentence,
        );
    }
    Ok(acc.finish(pair))
}

pub fn profile_document(
    doc: &Document,
    pair: LanguagePair,
    scorer: &dyn SentenceScorer,
    config: &FilterConfig,
) -> Result<DocLangProfile, ProfileError> {
    let (pivot, partner) = pair_indices(scorer, pair)?;
    let mut acc = MassAccumulator::default();
    for (i, span) in segment::segment(&doc.text).iter().enumerate() {
        let scores = scorer.score_span(&doc.doc_id, i, span.text)?;
        acc.add(
            span.length_weight,
            &scores.values,
            pivot,
            partner,
            config.normalize_per_sentence,
        );
    }
    Ok(acc.finish(pair))
}

/// Stage-1 verdict: `OutOfPair`, `Candidate` or `Monolingual`.
pub fn label_candidate(profile: &DocLangProfile, config: &FilterConfig) -> BilingualLabel {
    if profile.sentence_count == 0 {
        BilingualLabel::Monolingual
    } else if profile.pair_mass < config.min_pair_mass {
        BilingualLabel::OutOfPair
    } else if profile.entropy > config.tau {
        BilingualLabel::Candidate
    } else {
        BilingualLabel::Monolingual
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage1Summary {
    pub documents: u64,
    pub candidates: u64,
    pub monolingual: u64,
    pub out_of_pair: u64,
    /// Included in `out_of_pair`.
    pub oversize: u64,
    /// Documents that could not be scored; included in `out_of_pair`.
    pub errors: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Stage1Report {
    #[serde(flatten)]
    pub counts: Stage1Summary,
    pub candidate_rate: f64,
    pub monolingual_rate: f64,
    pub out_of_pair_rate: f64,
}

impl Stage1Summary {
    fn rate(&self, n: u64) -> f64 {
        if self.documents == 0 {
            0.0
        } else {
            n as f64 / self.documents as f64
        }
    }

    pub fn candidate_rate(&self) -> f64 {
        self.rate(self.candidates)
    }

    pub fn monolingual_rate(&self) -> f64 {
        self.rate(self.monolingual)
    }

    pub fn out_of_pair_rate(&self) -> f64 {
        self.rate(self.out_of_pair)
    }

    pub fn merge(&mut self, other: &Stage1Summary) {
        self.documents += other.documents;
        self.candidates += other.candidates;
        self.monolingual += other.monolingual;
        self.out_of_pair += other.out_of_pair;
        self.oversize += other.oversize;
        self.errors += other.errors;
    }

    pub fn record(&mut self, doc: &Document) {
        self.documents += 1;
        let Some(ann) = &doc.annotations else { return };
        match ann.label {
            BilingualLabel::Candidate => self.candidates += 1,
            BilingualLabel::OutOfPair => {
                self.out_of_pair += 1;
                match ann.reason.as_deref() {
                    Some("oversize") => self.oversize += 1,
                    Some(_) => self.errors += 1,
                    None => {}
                }
            }
            _ => self.monolingual += 1,
        }
    }

    pub fn report(&self) -> Stage1Report {
        Stage1Report {
            counts: *self,
            candidate_rate: self.candidate_rate(),
            monolingual_rate: self.monolingual_rate(),
            out_of_pair_rate: self.out_of_pair_rate(),
        }
    }
}

/// Profiles and labels one document, replacing any previous annotations.
pub fn annotate_stage1(
    mut doc: Document,
    pair: LanguagePair,
    scorer: &dyn SentenceScorer,
    config: &FilterConfig,
) -> Document {
    let block = if doc.text.len() > config.max_doc_bytes {
        AnnotationBlock {
            reason: Some("oversize".into()),
            ..AnnotationBlock::new(BilingualLabel::OutOfPair, None)
        }
    } else {
        match profile_document(&doc, pair, scorer, config) {
            Ok(profile) => AnnotationBlock::new(label_candidate(&profile, config), Some(profile)),
            Err(e) => AnnotationBlock {
                reason: Some(format!("error: {e}")),
                ..AnnotationBlock::new(BilingualLabel::OutOfPair, None)
            },
        }
    };
    doc.annotations = Some(block);
    doc
}

/// Annotates a document stream, preserving order and tallying a summary.
pub struct Stage1Stream<'a, I: Iterator<Item = Document>> {
    inner: OrderedMap<'a, I, Document>,
    summary: Stage1Summary,
}

impl<I: Iterator<Item = Document>> Stage1Stream<'_, I> {
    pub fn summary(&self) -> Stage1Summary {
        self.summary
    }
}

impl<I: Iterator<Item = Document>> Iterator for Stage1Stream<'_, I> {
    type Item = Document;

    fn next(&mut self) -> Option<Document> {
        let doc = self.inner.next()?;
        self.summary.record(&doc);
        Some(doc)
    }
}

pub fn run_stage1<'a, I>(
    corpus: I,
    pair: LanguagePair,
    scorer: &'a dyn SentenceScorer,
    config: &'a FilterConfig,
    workers: &'a Workers,
) -> Result<Stage1Stream<'a, I>, ProfileError>
where
    I: Iterator<Item = Document>,
{
    config.validate()?;
    pair_indices(scorer, pair)?;
    Ok(Stage1Stream {
        inner: workers.map_ordered(corpus, move |doc| annotate_stage1(doc, pair, scorer, config)),
        summary: Stage1Summary::default(),
    })
}
