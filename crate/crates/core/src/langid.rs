//! Character n-gram language identification.
//!
//! Text is lowercased and folded onto a 51-symbol alphabet; n-grams are taken
//! inside each word-like token padded with a boundary symbol, so repeating a
//! sentence leaves its n-gram distribution unchanged. A sentence's score for
//! each language is the mean log-probability of its n-grams, turned into a
//! distribution by a softmax at the model's temperature.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::Deserialize;
use thiserror::Error;

use crate::lang::Lang;
use crate::resources;
use crate::text;

pub const ALPHABET: [char; 51] = [
    ' ', '0', 'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r', 's', 't', 'u',
    'v', 'w', 'x', 'y', 'z', 'à', 'â', 'ä', 'ç', 'é', 'è', 'ê', 'ë', 'î', 'ï', 'ñ', 'ó', 'ô', 'ö', 'ù', 'û', 'ü', 'ß',
    'á', 'í', 'ú', 'œ', '#',
];
const BASE: usize = ALPHABET.len();
const PAD: u8 = 0;
const DIGIT: u8 = 1;
const OTHER: u8 = (BASE - 1) as u8;
/// Highest supported n-gram order; the compiled table is dense up to it.
pub const MAX_ORDER: usize = 3;
const OFFSETS: [usize; MAX_ORDER + 2] = [0, 0, BASE, BASE + BASE * BASE, BASE + BASE * BASE + BASE * BASE * BASE];
const TABLE_SIZE: usize = OFFSETS[MAX_ORDER + 1];

const MAGIC: &[u8; 8] = b"BSLANGID";
const TRAILER: &[u8; 4] = b"END\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LangIdError {
    #[error("language {lang} has {tokens} training tokens, at least {required} required")]
    InsufficientData { lang: Lang, tokens: usize, required: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: model file is truncated", path.display())]
    Truncated { path: PathBuf },
    #[error("{}: not a language-id model file", path.display())]
    BadMagic { path: PathBuf },
    #[error("{}: model format version {found}, this build reads version {expected}", path.display())]
    Version { path: PathBuf, found: u32, expected: u32 },
    #[error("{}: corrupt model file: {message}", path.display())]
    Corrupt { path: PathBuf, message: String },
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("no injected scores for document {doc_id:?} sentence {index}")]
    MissingSidecar { doc_id: String, index: usize },
    #[error("{}:{line}: {message}", path.display())]
    Sidecar {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Per-language confidences for one sentence, aligned with the scorer's
/// language inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct LangScores {
    pub values: Vec<f64>,
    /// Set when the sentence had no n-grams and the scores are uniform.
    pub no_signal: bool,
}

impl LangScores {
    pub fn uniform(n: usize) -> Self {
        LangScores {
            values: vec![1.0 / n as f64; n],
            no_signal: true,
        }
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

/// Source of per-sentence language scores.
pub trait SentenceScorer: Send + Sync {
    fn languages(&self) -> &[Lang];

    fn score_span(&self, doc_id: &str, index: usize, sentence: &str) -> Result<LangScores, ScoreError>;

    fn index_of(&self, lang: Lang) -> Option<usize> {
        self.languages().iter().position(|&l| l == lang)
    }
}

/// Marks a character that is not part of a word.
const NON_WORD: u8 = u8::MAX;
const FAST_SYMBOLS: usize = 0x180;

fn symbol_table() -> &'static [u8; FAST_SYMBOLS] {
    static LOW: OnceLock<[u8; FAST_SYMBOLS]> = OnceLock::new();
    LOW.get_or_init(|| {
        let mut t = [NON_WORD; FAST_SYMBOLS];
        for (cp, slot) in t.iter_mut().enumerate() {
            if let Some(ch) = char::from_u32(cp as u32) {
                if text::is_word_char(ch) {
                    *slot = symbol_slow(ch);
                }
            }
        }
        t
    })
}

fn symbol(c: char) -> u8 {
    match symbol_table().get(c as usize) {
        Some(&s) if s != NON_WORD => s,
        _ => symbol_slow(c),
    }
}

/// The symbol of a word character, or `NON_WORD`.
#[inline]
fn word_symbol(table: &[u8; FAST_SYMBOLS], c: char) -> u8 {
    match table.get(c as usize) {
        Some(&s) => s,
        None if text::is_word_char(c) => symbol_slow(c),
        None => NON_WORD,
    }
}

fn symbol_slow(c: char) -> u8 {
    if c.is_numeric() {
        return DIGIT;
    }
    let lower = c.to_lowercase().next().unwrap_or(c);
    match ALPHABET[2..BASE - 1].iter().position(|&a| a == lower) {
        Some(i) => (i + 2) as u8,
        None => OTHER,
    }
}

fn symbol_of_alphabet_char(c: char) -> Option<u8> {
    ALPHABET.iter().position(|&a| a == c).map(|i| i as u8)
}

/// Calls `f` with the dense index of every n-gram of `text` with order in
/// `min_n..=max_n`. Each word is padded with one boundary symbol per side.
#[inline]
fn for_each_ngram(text: &str, min_n: usize, max_n: usize, mut f: impl FnMut(usize)) {
    let uni = min_n <= 1;
    let bi = min_n <= 2 && max_n >= 2;
    let tri = max_n >= 3;
    // The two preceding symbols; `PAD` in `p1` marks a word start.
    let mut p2: Option<u8> = None;
    let mut p1: Option<u8> = None;
    let mut step = |s: u8, p2: Option<u8>, p1: Option<u8>| {
        if uni && s != PAD {
            f(OFFSETS[1] + s as usize);
        }
        if let Some(a) = p1 {
            if bi {
                f(OFFSETS[2] + a as usize * BASE + s as usize);
            }
            if let (true, Some(b)) = (tri, p2) {
                f(OFFSETS[3] + (b as usize * BASE + a as usize) * BASE + s as usize);
            }
        }
    };
    for c in text.chars() {
        if text::is_word_char(c) {
            if p1.is_none() {
                p1 = Some(PAD);
            }
            let s = symbol(c);
            step(s, p2, p1);
            p2 = p1;
            p1 = Some(s);
        } else if p1.is_some() {
            step(PAD, p2, p1);
            p2 = None;
            p1 = None;
        }
    }
    if p1.is_some() {
        step(PAD, p2, p1);
    }
}

fn ngram_order(index: usize) -> usize {
    (1..=MAX_ORDER)
        .find(|&n| index < OFFSETS[n + 1])
        .expect("index within table")
}

fn ngram_string(index: usize) -> String {
    let n = ngram_order(index);
    let mut code = index - OFFSETS[n];
    let mut chars = vec![' '; n];
    for slot in chars.iter_mut().rev() {
        *slot = ALPHABET[code % BASE];
        code /= BASE;
    }
    chars.into_iter().collect()
}

fn ngram_index(s: &str) -> Option<usize> {
    let syms: Vec<u8> = s.chars().map(symbol_of_alphabet_char).collect::<Option<_>>()?;
    let n = syms.len();
    if n == 0 || n > MAX_ORDER || syms.iter().all(|&s| s == PAD) {
        return None;
    }
    let code = syms.iter().fold(0usize, |acc, &s| acc * BASE + s as usize);
    Some(OFFSETS[n] + code)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub n_range: (usize, usize),
    /// N-grams kept per language, most frequent first.
    pub vocab_cap: usize,
    pub additive_smoothing: f64,
    pub temperature: f64,
    pub min_tokens: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            n_range: (1, 3),
            vocab_cap: 20_000,
            additive_smoothing: 0.1,
            temperature: DEFAULT_TEMPERATURE,
            min_tokens: 10_000,
        }
    }
}

/// Softmax temperature of the bundled model. Per-n-gram mean log-likelihood
/// gaps between languages are around one nat, so a unit temperature yields
/// near-uniform scores; this value gives confidences close to 1 on clean
/// sentences of a handful of words.
pub const DEFAULT_TEMPERATURE: f64 = 0.05;

const STEP_ROWS: usize = BASE * BASE * BASE;

/// Scoring visits each word symbol once. Row `(p2 * BASE + p1) * BASE + s`
/// holds the summed log-probabilities of the n-grams that end at symbol `s`
/// after `p2 p1`; row `STEP_ROWS + s` covers the first symbol of a word.
/// Summing these rows equals summing the individual n-gram scores.
#[derive(Debug, Clone)]
struct StepTable {
    values: Vec<f32>,
    /// N-grams per step at a word start, inside a word and at its end.
    counts: [u64; 3],
}

impl StepTable {
    fn build(dense: &[f64], l: usize, (min_n, max_n): (usize, usize)) -> Self {
        let uni = min_n <= 1;
        let bi = min_n <= 2 && max_n >= 2;
        let tri = max_n >= 3;
        let mut values = vec![0.0f32; (STEP_ROWS + BASE) * l];
        let lp = |idx: usize, li: usize| dense[idx * l + li];
        for li in 0..l {
            for s in 0..BASE {
                for p1 in 0..BASE {
                    for p2 in 0..BASE {
                        let mut v = 0.0;
                        if uni && s != PAD as usize {
                            v += lp(OFFSETS[1] + s, li);
                        }
                        if bi {
                            v += lp(OFFSETS[2] + p1 * BASE + s, li);
                        }
                        if tri {
                            v += lp(OFFSETS[3] + (p2 * BASE + p1) * BASE + s, li);
                        }
                        values[((p2 * BASE + p1) * BASE + s) * l + li] = v as f32;
                    }
                }
                let mut v = 0.0;
                if uni {
                    v += lp(OFFSETS[1] + s, li);
                }
                if bi {
                    v += lp(OFFSETS[2] + PAD as usize * BASE + s, li);
                }
                values[(STEP_ROWS + s) * l + li] = v as f32;
            }
        }
        let (uni, bi, tri) = (uni as u64, bi as u64, tri as u64);
        StepTable {
            values,
            counts: [uni + bi, uni + bi + tri, bi + tri],
        }
    }

    /// Calls `f` with each step row of `text`; returns the n-gram count.
    #[inline]
    fn scan(&self, text: &str, mut f: impl FnMut(usize)) -> u64 {
        let table = symbol_table();
        let mut count = 0;
        // (p2, p1) after the first symbol of the current word.
        let mut prev: Option<(usize, usize)> = None;
        for c in text.chars() {
            let s = word_symbol(table, c);
            if s != NON_WORD {
                let s = s as usize;
                match prev {
                    None => {
                        f(STEP_ROWS + s);
                        count += self.counts[0];
                        prev = Some((PAD as usize, s));
                    }
                    Some((p2, p1)) => {
                        f((p2 * BASE + p1) * BASE + s);
                        count += self.counts[1];
                        prev = Some((p1, s));
                    }
                }
            } else if let Some((p2, p1)) = prev.take() {
                f((p2 * BASE + p1) * BASE + PAD as usize);
                count += self.counts[2];
            }
        }
        if let Some((p2, p1)) = prev {
            f((p2 * BASE + p1) * BASE + PAD as usize);
            count += self.counts[2];
        }
        count
    }
}

#[derive(Debug, Clone)]
pub struct LangIdModel {
    languages: Vec<Lang>,
    n_range: (usize, usize),
    temperature: f64,
    smoothing_logprob: f64,
    /// Per language, (dense n-gram index, log-probability) sorted by index.
    tables: Vec<Vec<(u32, f64)>>,
    /// Row-major `[step][language]` sums of the log-probabilities of every
    /// n-gram ending at one position; see [`StepTable`].
    steps: StepTable,
}

impl PartialEq for LangIdModel {
    fn eq(&self, other: &Self) -> bool {
        self.languages == other.languages
            && self.n_range == other.n_range
            && self.temperature.to_bits() == other.temperature.to_bits()
            && self.smoothing_logprob.to_bits() == other.smoothing_logprob.to_bits()
            && self.tables == other.tables
    }
}

impl LangIdModel {
    /// Builds a model from stored tables, checking its invariants.
    pub fn from_tables(
        languages: Vec<Lang>,
        n_range: (usize, usize),
        temperature: f64,
        smoothing_logprob: f64,
        tables: Vec<Vec<(String, f64)>>,
    ) -> Result<Self, LangIdError> {
        let invalid = |m: String| Err(LangIdError::InvalidModel(m));
        if languages.is_empty() {
            return invalid("no languages".into());
        }
        for (i, l) in languages.iter().enumerate() {
            if languages[..i].contains(l) {
                return invalid(format!("duplicate language {l}"));
            }
        }
        let (min_n, max_n) = n_range;
        if min_n == 0 || min_n > max_n || max_n > MAX_ORDER {
            return invalid(format!(
                "n-gram range ({min_n}, {max_n}) must satisfy 1 <= min <= max <= {MAX_ORDER}"
            ));
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return invalid(format!("temperature {temperature} must be positive"));
        }
        if !(smoothing_logprob.is_finite() && smoothing_logprob <= 0.0) {
            return invalid(format!(
                "smoothing log-probability {smoothing_logprob} must be finite and <= 0"
            ));
        }
        if tables.len() != languages.len() {
            return invalid(format!("{} tables for {} languages", tables.len(), languages.len()));
        }
        let mut indexed = Vec::with_capacity(tables.len());
        for (lang, table) in languages.iter().zip(tables) {
            let mut rows = Vec::with_capacity(table.len());
            for (gram, lp) in table {
                let Some(idx) = ngram_index(&gram) else {
                    return invalid(format!("{lang}: unsupported n-gram {gram:?}"));
                };
                let n = ngram_order(idx);
                if n < min_n || n > max_n {
                    return invalid(format!("{lang}: n-gram {gram:?} outside the model's range"));
                }
                if !(lp.is_finite() && lp <= 0.0) {
                    return invalid(format!("{lang}: log-probability {lp} for {gram:?}"));
                }
                rows.push((idx as u32, lp));
            }
            rows.sort_by_key(|r| r.0);
            if rows.windows(2).any(|w| w[0].0 == w[1].0) {
                return invalid(format!("{lang}: duplicate n-gram entries"));
            }
            indexed.push(rows);
        }
        Ok(Self::compile(
            languages,
            n_range,
            temperature,
            smoothing_logprob,
            indexed,
        ))
    }

    fn compile(
        languages: Vec<Lang>,
        n_range: (usize, usize),
        temperature: f64,
        smoothing_logprob: f64,
        tables: Vec<Vec<(u32, f64)>>,
    ) -> Self {
        let l = languages.len();
        let mut dense = vec![smoothing_logprob; TABLE_SIZE * l];
        for (li, table) in tables.iter().enumerate() {
            for &(idx, lp) in table {
                dense[idx as usize * l + li] = lp;
            }
        }
        let steps = StepTable::build(&dense, l, n_range);
        LangIdModel {
            languages,
            n_range,
            temperature,
            smoothing_logprob,
            tables,
            steps,
        }
    }

    /// Model trained on the bundled en/de/es/fr data. Built once per process.
    pub fn bundled() -> &'static LangIdModel {
        static MODEL: OnceLock<LangIdModel> = OnceLock::new();
        MODEL.get_or_init(|| {
            let corpora = resources::BUNDLED_LANGS
                .iter()
                .map(|&l| (l, resources::training_text(l)));
            train_model(corpora, &TrainOptions::default()).expect("bundled training data is sufficient")
        })
    }

    pub fn languages(&self) -> &[Lang] {
        &self.languages
    }

    pub fn n_range(&self) -> (usize, usize) {
        self.n_range
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn smoothing_logprob(&self) -> f64 {
        self.smoothing_logprob
    }

    /// Stored (n-gram, log-probability) entries for one language.
    pub fn table(&self, lang: Lang) -> Option<Vec<(String, f64)>> {
        let li = self.languages.iter().position(|&l| l == lang)?;
        Some(
            self.tables[li]
                .iter()
                .map(|&(idx, lp)| (ngram_string(idx as usize), lp))
                .collect(),
        )
    }

    pub fn index_of(&self, lang: Lang) -> Option<usize> {
        self.languages.iter().position(|&l| l == lang)
    }

    /// Probability distribution over [`Self::languages`] for one sentence.
    pub fn score_sentence(&self, sentence: &str) -> LangScores {
        let l = self.languages.len();
        // Fixed widths let the compiler unroll the inner loop.
        let (mut sums, count) = match l {
            2 => self.log_sums::<2>(sentence),
            3 => self.log_sums::<3>(sentence),
            4 => self.log_sums::<4>(sentence),
            5 => self.log_sums::<5>(sentence),
            6 => self.log_sums::<6>(sentence),
            _ => self.log_sums_dyn(sentence),
        };
        if count == 0 {
            return LangScores::uniform(l);
        }
        let scale = 1.0 / (count as f64 * self.temperature);
        let max = sums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for s in sums.iter_mut() {
            *s = ((*s - max) * scale).exp();
            total += *s;
        }
        for s in sums.iter_mut() {
            *s /= total;
        }
        LangScores {
            values: sums,
            no_signal: false,
        }
    }

    fn log_sums<const L: usize>(&self, sentence: &str) -> (Vec<f64>, u64) {
        let mut sums = [0.0f64; L];
        let values = &self.steps.values;
        let count = self.steps.scan(sentence, |row| {
            let row: &[f32; L] = values[row * L..row * L + L].try_into().expect("row width");
            for k in 0..L {
                sums[k] += row[k] as f64;
            }
        });
        (sums.to_vec(), count)
    }

    fn log_sums_dyn(&self, sentence: &str) -> (Vec<f64>, u64) {
        let l = self.languages.len();
        let mut sums = vec![0.0f64; l];
        let values = &self.steps.values;
        let count = self.steps.scan(sentence, |row| {
            for (s, &v) in sums.iter_mut().zip(&values[row * l..row * l + l]) {
                *s += v as f64;
            }
        });
        (sums, count)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LangIdError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| LangIdError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.languages.len() as u32).to_le_bytes());
        for l in &self.languages {
            out.extend_from_slice(l.as_str().as_bytes());
        }
        out.push(self.n_range.0 as u8);
        out.push(self.n_range.1 as u8);
        out.extend_from_slice(&self.temperature.to_le_bytes());
        out.extend_from_slice(&self.smoothing_logprob.to_le_bytes());
        for table in &self.tables {
            out.extend_from_slice(&(table.len() as u32).to_le_bytes());
            for &(idx, lp) in table {
                let gram = ngram_string(idx as usize);
                out.push(gram.len() as u8);
                out.extend_from_slice(gram.as_bytes());
                out.extend_from_slice(&lp.to_le_bytes());
            }
        }
        out.extend_from_slice(TRAILER);
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LangIdError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| LangIdError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes, path)
    }

    /// `origin` names the source in error messages.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self, LangIdError> {
        let mut r = ModelReader {
            bytes,
            pos: 0,
            path: origin,
        };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(LangIdError::BadMagic {
                path: origin.to_path_buf(),
            });
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(LangIdError::Version {
                path: origin.to_path_buf(),
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let n_langs = r.u32()? as usize;
        if n_langs == 0 || n_langs > 64 {
            return Err(r.corrupt(format!("language count {n_langs}")));
        }
        let mut languages = Vec::with_capacity(n_langs);
        for _ in 0..n_langs {
            let code = std::str::from_utf8(r.take(2)?).map_err(|e| r.corrupt(e.to_string()))?;
            languages.push(code.parse::<Lang>().map_err(|e| r.corrupt(e.to_string()))?);
        }
        let min_n = r.take(1)?[0] as usize;
        let max_n = r.take(1)?[0] as usize;
        let temperature = r.f64()?;
        let smoothing = r.f64()?;
        let mut tables = Vec::with_capacity(n_langs);
        for _ in 0..n_langs {
            let n = r.u32()? as usize;
            let mut table = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                let len = r.take(1)?[0] as usize;
                let gram = std::str::from_utf8(r.take(len)?)
                    .map_err(|e| r.corrupt(e.to_string()))?
                    .to_string();
                table.push((gram, r.f64()?));
            }
            tables.push(table);
        }
        if r.take(TRAILER.len())? != TRAILER {
            return Err(r.corrupt("missing end marker".into()));
        }
        if r.pos != bytes.len() {
            return Err(r.corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Self::from_tables(languages, (min_n, max_n), temperature, smoothing, tables).map_err(|e| match e {
            LangIdError::InvalidModel(m) => r.corrupt(m),
            other => other,
        })
    }
}

impl SentenceScorer for LangIdModel {
    fn languages(&self) -> &[Lang] {
        &self.languages
    }

    fn score_span(&self, _doc_id: &str, _index: usize, sentence: &str) -> Result<LangScores, ScoreError> {
        Ok(self.score_sentence(sentence))
    }
}

struct ModelReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ModelReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LangIdError> {
        if self.bytes.len() - self.pos < n {
            return Err(LangIdError::Truncated {
                path: self.path.to_path_buf(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, LangIdError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, LangIdError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn corrupt(&self, message: String) -> LangIdError {
        LangIdError::Corrupt {
            path: self.path.to_path_buf(),
            message,
        }
    }
}

/// Trains one n-gram table per language. Languages keep their input order.
pub fn train_model<C, T, S>(corpora: C, opts: &TrainOptions) -> Result<LangIdModel, LangIdError>
where
    C: IntoIterator<Item = (Lang, T)>,
    T: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let (min_n, max_n) = opts.n_range;
    if min_n == 0 || min_n > max_n || max_n > MAX_ORDER {
        return Err(LangIdError::InvalidModel(format!(
            "n-gram range ({min_n}, {max_n}) must satisfy 1 <= min <= max <= {MAX_ORDER}"
        )));
    }
    if opts.additive_smoothing.is_nan() || opts.additive_smoothing <= 0.0 {
        return Err(LangIdError::InvalidModel("additive smoothing must be positive".into()));
    }
    let mut languages = Vec::new();
    let mut all_counts = Vec::new();
    let mut all_totals = Vec::new();
    for (lang, texts) in corpora {
        let mut counts = vec![0u64; TABLE_SIZE];
        let mut totals = [0u64; MAX_ORDER + 1];
        let mut tokens = 0usize;
        for t in texts {
            let t = t.as_ref();
            tokens += text::count_words(t);
            for_each_ngram(t, min_n, max_n, |idx| counts[idx] += 1);
        }
        if tokens < opts.min_tokens {
            return Err(LangIdError::InsufficientData {
                lang,
                tokens,
                required: opts.min_tokens,
            });
        }
        for (idx, &c) in counts.iter().enumerate() {
            if c > 0 {
                totals[ngram_order(idx)] += c;
            }
        }
        languages.push(lang);
        all_counts.push(counts);
        all_totals.push(totals);
    }
    let alpha = opts.additive_smoothing;
    let vocab = |n: usize| (BASE as f64).powi(n as i32);
    let mut smoothing = 0.0f64;
    for totals in &all_totals {
        for (n, &total) in totals.iter().enumerate().take(max_n + 1).skip(min_n) {
            smoothing = smoothing.min((alpha / (total as f64 + alpha * vocab(n))).ln());
        }
    }
    let mut tables = Vec::with_capacity(languages.len());
    for (counts, totals) in all_counts.iter().zip(&all_totals) {
        let mut seen: Vec<(u32, u64)> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i as u32, c))
            .collect();
        seen.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        seen.truncate(opts.vocab_cap);
        let mut table: Vec<(u32, f64)> = seen
            .into_iter()
            .map(|(idx, c)| {
                let n = ngram_order(idx as usize);
                let lp = ((c as f64 + alpha) / (totals[n] as f64 + alpha * vocab(n))).ln();
                (idx, lp)
            })
            .collect();
        table.sort_by_key(|r| r.0);
        tables.push(table);
    }
    if languages.is_empty() {
        return Err(LangIdError::InvalidModel("no training languages".into()));
    }
    for (i, l) in languages.iter().enumerate() {
        if languages[..i].contains(l) {
            return Err(LangIdError::InvalidModel(format!("duplicate language {l}")));
        }
    }
    Ok(LangIdModel::compile(
        languages,
        opts.n_range,
        opts.temperature,
        smoothing,
        tables,
    ))
}

/// Scores injected from an external identifier, keyed by document id and
/// sentence index.
///
/// Sidecar files hold one JSON record per line:
/// `{"doc_id": "...", "sentence_index": 0, "scores": {"en": 0.9, "fr": 0.1}}`.
#[derive(Debug, Clone)]
pub struct SidecarScorer {
    languages: Vec<Lang>,
    scores: HashMap<(String, usize), Vec<f64>>,
}

#[derive(Deserialize)]
struct SidecarRecord {
    doc_id: String,
    sentence_index: usize,
    scores: HashMap<Lang, f64>,
}

impl SidecarScorer {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScoreError> {
        let path = path.as_ref();
        let err = |line: usize, message: String| ScoreError::Sidecar {
            path: path.to_path_buf(),
            line,
            message,
        };
        let file = fs::File::open(path).map_err(|e| err(0, e.to_string()))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| err(i + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SidecarRecord = serde_json::from_str(&line).map_err(|e| err(i + 1, e.to_string()))?;
            if rec.scores.values().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(err(i + 1, "scores must be finite and non-negative".into()));
            }
            records.push(rec);
        }
        Ok(Self::from_records(records.into_iter().map(|r| {
            (r.doc_id, r.sentence_index, r.scores.into_iter().collect::<Vec<_>>())
        })))
    }

    pub fn from_records<I>(records: I) -> Self
    where
        I: IntoIterator<Item = (String, usize, Vec<(Lang, f64)>)>,
    {
        let records: Vec<_> = records.into_iter().collect();
        let mut languages: Vec<Lang> = records.iter().flat_map(|(_, _, s)| s.iter().map(|(l, _)| *l)).collect();
        languages.sort();
        languages.dedup();
        let mut scores = HashMap::with_capacity(records.len());
        for (doc_id, index, s) in records {
            let mut values = vec![0.0; languages.len()];
            for (l, v) in s {
                let li = languages.binary_search(&l).expect("collected above");
                values[li] = v;
            }
            scores.insert((doc_id, index), values);
        }
        SidecarScorer { languages, scores }
    }
}

impl SentenceScorer for SidecarScorer {
    fn languages(&self) -> &[Lang] {
        &self.languages
    }

    fn score_span(&self, doc_id: &str, index: usize, _sentence: &str) -> Result<LangScores, ScoreError> {
        self.scores
            .get(&(doc_id.to_string(), index))
            .map(|v| LangScores {
                values: v.clone(),
                no_signal: false,
            })
            .ok_or_else(|| ScoreError::MissingSidecar {
                doc_id: doc_id.to_string(),
                index,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ngrams(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for_each_ngram(text, 1, 3, |i| out.push(ngram_string(i)));
        out
    }

    #[test]
    fn ngram_extraction_is_word_local() {
        assert_eq!(ngrams("Ab"), ["a", " a", "b", "ab", " ab", "b ", "ab "]);
        let one = ngrams("le chat");
        let mut twice = ngrams("le chat le chat");
        assert_eq!(twice.len(), 2 * one.len());
        twice.truncate(one.len());
        assert_eq!(twice, one);
    }

    #[test]
    fn step_rows_sum_to_the_ngram_scores() {
        let m = LangIdModel::bundled();
        let (min_n, max_n) = m.n_range();
        for text in ["Hello world, ça va?", "a", "Straße 42 über-all", "", "  x  y ", "Ж ω"] {
            let mut direct = vec![0.0f64; m.languages().len()];
            let mut count = 0u64;
            for_each_ngram(text, min_n, max_n, |idx| {
                count += 1;
                for (sum, table) in direct.iter_mut().zip(&m.tables) {
                    *sum += table
                        .binary_search_by_key(&(idx as u32), |r| r.0)
                        .map_or(m.smoothing_logprob(), |k| table[k].1);
                }
            });
            let (fast, n) = m.log_sums_dyn(text);
            assert_eq!(n, count, "{text:?}");
            for (a, b) in fast.iter().zip(&direct) {
                assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0), "{text:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn symbols_fold_case_and_digits() {
        assert_eq!(ngrams("É9"), ngrams("é4"));
        assert_eq!(symbol('Ж'), OTHER);
        assert_eq!(symbol('ß'), symbol_of_alphabet_char('ß').unwrap());
    }

    #[test]
    fn index_string_roundtrip() {
        for idx in [0, 5, BASE, BASE + 17, OFFSETS[3] + 1234, TABLE_SIZE - 1] {
            let s = ngram_string(idx);
            if s.chars().all(|c| c == ' ') {
                continue;
            }
            assert_eq!(ngram_index(&s), Some(idx), "{s:?}");
        }
        assert_eq!(ngram_index("   "), None);
        assert_eq!(ngram_index("abcd"), None);
    }

    #[test]
    fn empty_sentence_is_uniform_no_signal() {
        let m = LangIdModel::bundled();
        let s = m.score_sentence("  ...  ");
        assert!(s.no_signal);
        assert!(s.values.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn insufficient_data_names_language() {
        let err = train_model(
            [(Lang::EN, vec!["hello world"; 10_000]), (Lang::FR, vec!["bonjour"; 10])],
            &TrainOptions::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("fr"), "{err}");
    }

    #[test]
    fn invalid_tables_rejected() {
        let bad = LangIdModel::from_tables(vec![Lang::EN], (1, 3), 1.0, -5.0, vec![vec![("ab".into(), 0.5)]]);
        assert!(bad.is_err());
        let bad = LangIdModel::from_tables(vec![Lang::EN], (1, 4), 1.0, -5.0, vec![vec![]]);
        assert!(bad.is_err());
    }
}
