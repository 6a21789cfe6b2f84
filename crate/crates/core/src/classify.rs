//! Stage 2: verify that candidates are genuinely bilingual and sort them
//! into parallel, code-switching or miscellaneous documents.
//!
//! The heuristic engine groups consecutive same-language sentences into
//! blocks. Adjacent opposite-language blocks are paired greedily by a score
//! that rewards similar lengths and shared surface anchors (numbers, names,
//! URLs, long tokens). Well-paired documents are parallel; documents whose
//! minority language only shows up in short unrelated blocks are
//! miscellaneous; the rest are code-switching.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotationBlock, BilingualLabel, ClassifierSource, Document};
use crate::entropy::{self, ProfileError};
use crate::judge::{JudgeClient, JudgeError};
use crate::lang::{Lang, LanguagePair};
use crate::langid::SentenceScorer;
use crate::parallel::{OrderedMap, Workers};
use crate::text;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("invalid classifier config: {0}")]
    Config(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub min_minority_sentences: usize,
    pub min_minority_token_share: f64,
    pub parallel_block_pair_score_min: f64,
    pub parallel_paired_fraction_min: f64,
    pub misc_max_minority_block_tokens: u32,
    pub anchor_jaccard_floor: f64,
    /// Admissible token-count ratios for a block pair.
    pub length_ratio_band: (f64, f64),
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            min_minority_sentences: 2,
            min_minority_token_share: 0.05,
            parallel_block_pair_score_min: 0.5,
            parallel_paired_fraction_min: 0.6,
            misc_max_minority_block_tokens: 30,
            anchor_jaccard_floor: 0.15,
            length_ratio_band: (0.5, 2.0),
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        let shares = [
            ("min_minority_token_share", self.min_minority_token_share),
            ("parallel_block_pair_score_min", self.parallel_block_pair_score_min),
            ("parallel_paired_fraction_min", self.parallel_paired_fraction_min),
            ("anchor_jaccard_floor", self.anchor_jaccard_floor),
        ];
        for (name, v) in shares {
            if !(0.0..=1.0).contains(&v) {
                return Err(ClassifyError::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        let (lo, hi) = self.length_ratio_band;
        if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0 && hi.is_finite()) {
            return Err(ClassifyError::Config(format!(
                "length_ratio_band must satisfy 0 < lo <= 1 <= hi, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// Maximal run of consecutive sentences assigned to one language.
#[derive(Debug, Clone, PartialEq)]
pub struct LangBlock {
    pub language: Lang,
    pub span_indices: Range<usize>,
    pub token_count: u32,
    pub anchor_set: BTreeSet<String>,
}

/// Surface tokens likely to survive translation: digit runs, capitalized
/// words, URLs and tokens of six or more characters, diacritics stripped.
pub fn anchor_set(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for raw in text.split_whitespace() {
        let lower = raw.to_lowercase();
        if lower.contains("://") || lower.starts_with("www.") {
            let url = lower.trim_end_matches(|c: char| !c.is_alphanumeric() && c != '/');
            out.insert(url.to_string());
        }
    }
    for tok in text::word_tokens(text) {
        let mut digits = String::new();
        for c in tok.chars() {
            if c.is_ascii_digit() {
                digits.push(c);
            } else if !digits.is_empty() {
                out.insert(std::mem::take(&mut digits));
            }
        }
        let has_digits = !digits.is_empty() || tok.chars().any(|c| c.is_ascii_digit());
        if !digits.is_empty() {
            out.insert(digits);
        }
        if has_digits {
            continue;
        }
        let n = tok.chars().count();
        let capitalized = tok.chars().next().is_some_and(char::is_uppercase);
        if n >= 6 || (n >= 2 && capitalized) {
            out.insert(tok.chars().map(text::fold_char).collect());
        }
    }
    out
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// A candidate's sentences with their pair-restricted language decisions.
#[derive(Debug, Clone)]
pub struct DocAnalysis {
    pub pair: LanguagePair,
    pub span_langs: Vec<Lang>,
    pub span_tokens: Vec<u32>,
    pub blocks: Vec<LangBlock>,
}

impl DocAnalysis {
    pub fn tokens_in(&self, lang: Lang) -> u64 {
        self.blocks
            .iter()
            .filter(|b| b.language == lang)
            .map(|b| b.token_count as u64)
            .sum()
    }

    pub fn total_tokens(&self) -> u64 {
        self.span_tokens.iter().map(|&t| t as u64).sum()
    }

    /// The pair language with fewer tokens; the partner on ties.
    pub fn minority(&self) -> Lang {
        let [pivot, partner] = self.pair.langs();
        if self.tokens_in(pivot) < self.tokens_in(partner) {
            pivot
        } else {
            partner
        }
    }

    pub fn majority(&self) -> Lang {
        let m = self.minority();
        if m == self.pair.pivot {
            self.pair.partner
        } else {
            self.pair.pivot
        }
    }
}

/// Scores every sentence and builds language blocks. Each sentence goes to
/// whichever pair language scores higher, the pivot on ties.
pub fn analyze(doc: &Document, pair: LanguagePair, scorer: &dyn SentenceScorer) -> Result<DocAnalysis, ProfileError> {
    let pivot = scorer
        .index_of(pair.pivot)
        .ok_or(ProfileError::MissingLanguage(pair.pivot))?;
    let partner = scorer
        .index_of(pair.partner)
        .ok_or(ProfileError::MissingLanguage(pair.partner))?;
    let spans = entropy::score_spans(doc, scorer)?;
    let mut span_langs = Vec::with_capacity(spans.len());
    let mut span_tokens = Vec::with_capacity(spans.len());
    let mut blocks: Vec<LangBlock> = Vec::new();
    let mut block_text = String::new();
    for (i, span) in spans.iter().enumerate() {
        let v = &span.lang_scores.as_ref().expect("scored").values;
        let lang = if v[pivot] >= v[partner] {
            pair.pivot
        } else {
            pair.partner
        };
        span_langs.push(lang);
        span_tokens.push(span.length_weight);
        match blocks.last_mut() {
            Some(b) if b.language == lang => {
                b.span_indices.end = i + 1;
                b.token_count += span.length_weight;
            }
            _ => {
                if let Some(b) = blocks.last_mut() {
                    b.anchor_set = anchor_set(&block_text);
                    block_text.clear();
                }
                blocks.push(LangBlock {
                    language: lang,
                    span_indices: i..i + 1,
                    token_count: span.length_weight,
                    anchor_set: BTreeSet::new(),
                });
            }
        }
        block_text.push_str(span.text);
        block_text.push('\n');
    }
    if let Some(b) = blocks.last_mut() {
        b.anchor_set = anchor_set(&block_text);
    }
    Ok(DocAnalysis {
        pair,
        span_langs,
        span_tokens,
        blocks,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub minority: Lang,
    pub minority_sentences: usize,
    pub minority_token_share: f64,
    pub bilingual: bool,
}

pub fn verify_bilingual(analysis: &DocAnalysis, config: &ClassifierConfig) -> Verification {
    let minority = analysis.minority();
    let minority_sentences = analysis.span_langs.iter().filter(|&&l| l == minority).count();
    let total = analysis.total_tokens();
    let minority_token_share = if total == 0 {
        0.0
    } else {
        analysis.tokens_in(minority) as f64 / total as f64
    };
    Verification {
        minority,
        minority_sentences,
        minority_token_share,
        bilingual: minority_sentences >= config.min_minority_sentences
            && minority_token_share >= config.min_minority_token_share,
    }
}

/// 1 at equal lengths, falling linearly in log-ratio to 0 at the band edges.
pub fn length_fit(a_tokens: u32, b_tokens: u32, band: (f64, f64)) -> f64 {
    let r = b_tokens as f64 / a_tokens as f64;
    let (lo, hi) = band;
    if r < lo || r > hi {
        return 0.0;
    }
    let edge = if r >= 1.0 { hi.ln() } else { lo.ln() };
    if edge == 0.0 {
        return 1.0;
    }
    (1.0 - r.ln() / edge).clamp(0.0, 1.0)
}

/// Anchor overlap (Jaccard relative to twice the floor, capped at 1) scaled
/// by the length fit mapped into [0.5, 1]. `None` outside the length band.
pub fn block_pair_score(a: &LangBlock, b: &LangBlock, config: &ClassifierConfig) -> Option<f64> {
    let r = b.token_count as f64 / a.token_count as f64;
    let (lo, hi) = config.length_ratio_band;
    if r < lo || r > hi {
        return None;
    }
    let fit = length_fit(a.token_count, b.token_count, config.length_ratio_band);
    let overlap = (jaccard(&a.anchor_set, &b.anchor_set) / (2.0 * config.anchor_jaccard_floor).max(1e-12)).min(1.0);
    Some((0.5 + 0.5 * fit) * overlap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicVerdict {
    pub category: BilingualLabel,
    pub confidence: f64,
    /// Accepted pairs as (left block, right block, score).
    pub pairs: Vec<(usize, usize, f64)>,
    pub paired_fraction: f64,
    pub mean_pair_score: f64,
    pub max_minority_block_tokens: u32,
    pub max_anchor_jaccard: f64,
}

/// Greedy matching of adjacent blocks, best score first, earliest index on ties.
pub fn pair_blocks(blocks: &[LangBlock], config: &ClassifierConfig) -> Vec<(usize, usize, f64)> {
    let mut candidates: Vec<(usize, f64)> = (0..blocks.len().saturating_sub(1))
        .filter_map(|i| block_pair_score(&blocks[i], &blocks[i + 1], config).map(|s| (i, s)))
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut used = vec![false; blocks.len()];
    let mut pairs = Vec::new();
    for (i, s) in candidates {
        if !used[i] && !used[i + 1] {
            used[i] = true;
            used[i + 1] = true;
            pairs.push((i, i + 1, s));
        }
    }
    pairs.sort_by_key(|p| p.0);
    pairs
}

pub fn classify_heuristic(analysis: &DocAnalysis, config: &ClassifierConfig) -> HeuristicVerdict {
    let blocks = &analysis.blocks;
    let pairs = pair_blocks(blocks, config);
    let paired_fraction = if blocks.is_empty() {
        0.0
    } else {
        2.0 * pairs.len() as f64 / blocks.len() as f64
    };
    let mean_pair_score = if pairs.is_empty() {
        0.0
    } else {
        pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64
    };

    let minority = analysis.minority();
    let mut max_minority_block_tokens = 0;
    let mut max_anchor_jaccard: f64 = 0.0;
    for b in blocks.iter().filter(|b| b.language == minority) {
        max_minority_block_tokens = max_minority_block_tokens.max(b.token_count);
        for m in blocks.iter().filter(|m| m.language != minority) {
            max_anchor_jaccard = max_anchor_jaccard.max(jaccard(&b.anchor_set, &m.anchor_set));
        }
    }

    let is_parallel = paired_fraction >= config.parallel_paired_fraction_min
        && mean_pair_score >= config.parallel_block_pair_score_min;
    let is_misc = max_minority_block_tokens <= config.misc_max_minority_block_tokens
        && max_anchor_jaccard < config.anchor_jaccard_floor;
    // Confidence is the margin from the deciding rule, mapped into [0.5, 1].
    let (category, margin) = if is_parallel {
        let m = (mean_pair_score - config.parallel_block_pair_score_min)
            / (1.0 - config.parallel_block_pair_score_min).max(1e-12);
        (BilingualLabel::Parallel, m)
    } else if is_misc {
        let m = 1.0 - max_anchor_jaccard / config.anchor_jaccard_floor.max(1e-12);
        (BilingualLabel::Miscellaneous, m)
    } else {
        let parallel_evidence = (paired_fraction * mean_pair_score).clamp(0.0, 1.0);
        (BilingualLabel::CodeSwitching, 1.0 - parallel_evidence)
    };
    HeuristicVerdict {
        category,
        confidence: 0.5 + 0.5 * margin.clamp(0.0, 1.0),
        pairs,
        paired_fraction,
        mean_pair_score,
        max_minority_block_tokens,
        max_anchor_jaccard,
    }
}

/// Asks the judge to verify (when configured) and then classify. `Ok(None)`
/// means the judge found the document not bilingual.
pub fn classify_remote(
    doc: &Document,
    pair: LanguagePair,
    judge: &JudgeClient,
) -> Result<Option<BilingualLabel>, JudgeError> {
    if judge.config().verify_remotely && !judge.verify(&doc.text, pair)? {
        return Ok(None);
    }
    judge.classify(&doc.text, pair).map(Some)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage2Mode {
    Heuristic,
    Remote,
    RemoteWithHeuristicFallback,
}

impl std::str::FromStr for Stage2Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "heuristic" => Ok(Stage2Mode::Heuristic),
            "remote" => Ok(Stage2Mode::Remote),
            "remote_with_heuristic_fallback" | "fallback" => Ok(Stage2Mode::RemoteWithHeuristicFallback),
            _ => Err(format!(
                "unknown mode {s:?}; expected heuristic, remote or remote_with_heuristic_fallback"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage2Summary {
    /// Documents that were not Stage-1 candidates and passed through.
    pub passthrough: u64,
    pub candidates: u64,
    pub rejected: u64,
    pub parallel: u64,
    pub code_switching: u64,
    pub miscellaneous: u64,
    pub unresolved: u64,
    /// Candidates classified by the heuristic after the judge failed.
    pub fallbacks: u64,
}

impl Stage2Summary {
    pub fn merge(&mut self, o: &Stage2Summary) {
        self.passthrough += o.passthrough;
        self.candidates += o.candidates;
        self.rejected += o.rejected;
        self.parallel += o.parallel;
        self.code_switching += o.code_switching;
        self.miscellaneous += o.miscellaneous;
        self.unresolved += o.unresolved;
        self.fallbacks += o.fallbacks;
    }

    fn record(&mut self, out: &Stage2Outcome) {
        if !out.was_candidate {
            self.passthrough += 1;
            return;
        }
        self.candidates += 1;
        if out.fell_back {
            self.fallbacks += 1;
        }
        match out.doc.label() {
            Some(BilingualLabel::Parallel) => self.parallel += 1,
            Some(BilingualLabel::CodeSwitching) => self.code_switching += 1,
            Some(BilingualLabel::Miscellaneous) => self.miscellaneous += 1,
            Some(BilingualLabel::Monolingual) => self.rejected += 1,
            _ => self.unresolved += 1,
        }
    }
}

struct Stage2Outcome {
    doc: Document,
    was_candidate: bool,
    fell_back: bool,
}

pub struct Stage2Context<'a> {
    pub pair: LanguagePair,
    pub scorer: &'a dyn SentenceScorer,
    pub config: &'a ClassifierConfig,
    pub mode: Stage2Mode,
    pub judge: Option<&'a JudgeClient>,
}

fn set_label(doc: &mut Document, label: BilingualLabel, source: ClassifierSource, confidence: Option<f64>) {
    let ann = doc.annotations.get_or_insert_with(|| AnnotationBlock::new(label, None));
    ann.label = label;
    ann.classifier_source = source;
    ann.category_confidence = confidence;
    ann.reason = None;
}

fn heuristic_label(doc: &mut Document, ctx: &Stage2Context<'_>) {
    match analyze(doc, ctx.pair, ctx.scorer) {
        Ok(analysis) => {
            if verify_bilingual(&analysis, ctx.config).bilingual {
                let v = classify_heuristic(&analysis, ctx.config);
                set_label(doc, v.category, ClassifierSource::Heuristic, Some(v.confidence));
            } else {
                set_label(doc, BilingualLabel::Monolingual, ClassifierSource::Heuristic, None);
            }
        }
        Err(e) => {
            set_label(doc, BilingualLabel::Unresolved, ClassifierSource::Heuristic, None);
            doc.annotations.as_mut().expect("set above").reason = Some(format!("error: {e}"));
        }
    }
}

fn classify_one(mut doc: Document, ctx: &Stage2Context<'_>) -> Stage2Outcome {
    if doc.label() != Some(BilingualLabel::Candidate) {
        return Stage2Outcome {
            doc,
            was_candidate: false,
            fell_back: false,
        };
    }
    let judge = match ctx.mode {
        Stage2Mode::Heuristic => None,
        _ => ctx.judge,
    };
    let Some(judge) = judge else {
        heuristic_label(&mut doc, ctx);
        return Stage2Outcome {
            doc,
            was_candidate: true,
            fell_back: false,
        };
    };
    let mut fell_back = false;
    match classify_remote(&doc, ctx.pair, judge) {
        Ok(Some(label)) => set_label(&mut doc, label, ClassifierSource::RemoteJudge, None),
        Ok(None) => set_label(
            &mut doc,
            BilingualLabel::Monolingual,
            ClassifierSource::RemoteJudge,
            None,
        ),
        Err(_) if ctx.mode == Stage2Mode::RemoteWithHeuristicFallback => {
            heuristic_label(&mut doc, ctx);
            fell_back = true;
        }
        Err(e) => {
            set_label(
                &mut doc,
                BilingualLabel::Unresolved,
                ClassifierSource::RemoteJudge,
                None,
            );
            doc.annotations.as_mut().expect("set above").reason = Some(format!("judge: {e}"));
        }
    }
    Stage2Outcome {
        doc,
        was_candidate: true,
        fell_back,
    }
}

/// Classifies candidates in a stream; other documents pass through unchanged.
pub struct Stage2Stream<'a, I: Iterator<Item = Document>> {
    inner: OrderedMap<'a, I, Stage2Outcome>,
    summary: Stage2Summary,
}

impl<I: Iterator<Item = Document>> Stage2Stream<'_, I> {
    pub fn summary(&self) -> Stage2Summary {
        self.summary
    }
}

impl<I: Iterator<Item = Document>> Iterator for Stage2Stream<'_, I> {
    type Item = Document;

    fn next(&mut self) -> Option<Document> {
        let out = self.inner.next()?;
        self.summary.record(&out);
        Some(out.doc)
    }
}

/// `workers` bounds concurrency, including requests in flight in remote modes.
pub fn run_stage2<'a, I>(
    corpus: I,
    ctx: &'a Stage2Context<'a>,
    workers: &'a Workers,
) -> Result<Stage2Stream<'a, I>, ClassifyError>
where
    I: Iterator<Item = Document>,
{
    ctx.config.validate()?;
    if ctx.mode != Stage2Mode::Heuristic && ctx.judge.is_none() {
        return Err(ClassifyError::Config("remote modes need a judge endpoint".into()));
    }
    for lang in ctx.pair.langs() {
        ctx.scorer.index_of(lang).ok_or(ProfileError::MissingLanguage(lang))?;
    }
    Ok(Stage2Stream {
        inner: workers.map_ordered(corpus, move |doc| classify_one(doc, ctx)),
        summary: Stage2Summary::default(),
    })
}
