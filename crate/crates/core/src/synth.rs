//! Seeded synthetic corpora with planted bilingual documents.
//!
//! Text is drawn word by word from the bundled aligned lexicon with Zipf
//! frequencies, so a sentence rendered in two languages is a word-for-word
//! translation. The planted category of every document is stored under the
//! [`PLANTED_KEY`] extra key. Each document has its own random stream, so the
//! output depends only on the seed and the index.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::analytics::{GenLangClass, Generation};
use crate::corpus::{BilingualLabel, Document};
use crate::lang::{Lang, LanguagePair};
use crate::resources::{self, Lexicon, BUNDLED_LANGS};

pub const PLANTED_KEY: &str = "planted";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no bundled lexicon for language {0}")]
    Unsupported(Lang),
    #[error("invalid synth config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub documents: usize,
    pub bilingual_rate: f64,
    /// Parallel, code-switching and miscellaneous shares of the bilingual docs.
    pub category_mix: [f64; 3],
    /// Documents written in a language outside the pair.
    pub out_of_pair_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            documents: 10_000,
            bilingual_rate: 0.02,
            category_mix: [0.14, 0.72, 0.14],
            out_of_pair_rate: 0.01,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if !rate_ok(self.bilingual_rate) || !rate_ok(self.out_of_pair_rate) {
            return Err(SynthError::Config("rates must lie in [0, 1]".into()));
        }
        if self.bilingual_rate + self.out_of_pair_rate > 1.0 {
            return Err(SynthError::Config("bilingual and out-of-pair rates exceed 1".into()));
        }
        check_mix(&self.category_mix)
    }

    /// Exact planted counts in [`BilingualLabel`] order: monolingual,
    /// parallel, code-switching, miscellaneous, out-of-pair.
    pub fn counts(&self) -> [(BilingualLabel, usize); 5] {
        let n = self.documents;
        let bilingual = (n as f64 * self.bilingual_rate).round() as usize;
        let oop = ((n as f64 * self.out_of_pair_rate).round() as usize).min(n - bilingual);
        let cats = apportion(bilingual, &self.category_mix);
        [
            (BilingualLabel::Monolingual, n - bilingual - oop),
            (BilingualLabel::Parallel, cats[0]),
            (BilingualLabel::CodeSwitching, cats[1]),
            (BilingualLabel::Miscellaneous, cats[2]),
            (BilingualLabel::OutOfPair, oop),
        ]
    }
}

fn check_mix(mix: &[f64]) -> Result<(), SynthError> {
    if mix.iter().any(|w| !w.is_finite() || *w < 0.0) || mix.iter().sum::<f64>() <= 0.0 {
        return Err(SynthError::Config(
            "mix weights must be non-negative with a positive sum".into(),
        ));
    }
    Ok(())
}

/// Splits `total` by `weights` with the largest-remainder method; ties go to
/// the earlier weight.
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// The planted label of a synthetic document.
pub fn planted_label(doc: &Document) -> Option<BilingualLabel> {
    serde_json::from_value(doc.extra.get(PLANTED_KEY)?.clone()).ok()
}

fn check_pair(pair: LanguagePair) -> Result<(), SynthError> {
    for lang in pair.langs() {
        if !Lexicon::supports(lang) {
            return Err(SynthError::Unsupported(lang));
        }
    }
    Ok(())
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Planted labels in corpus order.
pub fn plan(config: &SynthConfig) -> Result<Vec<BilingualLabel>, SynthError> {
    config.validate()?;
    let mut labels: Vec<BilingualLabel> = config
        .counts()
        .iter()
        .flat_map(|&(label, n)| std::iter::repeat_n(label, n))
        .collect();
    labels.shuffle(&mut stream_rng(config.seed, u64::MAX));
    Ok(labels)
}

pub fn synth_corpus(pair: LanguagePair, config: &SynthConfig) -> Result<Vec<Document>, SynthError> {
    check_pair(pair)?;
    let labels = plan(config)?;
    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| synth_document(pair, label, config.seed, i))
        .collect())
}

/// Document `index` of the corpus seeded with `seed`, planted as `label`.
/// Labels other than the three categories and out-of-pair give a
/// monolingual document. Panics when the pair has no bundled lexicon.
pub fn synth_document(pair: LanguagePair, label: BilingualLabel, seed: u64, index: usize) -> Document {
    let mut g = TextGen::new(stream_rng(seed, index as u64));
    let (majority, minority) = if g.rng.random::<bool>() {
        (pair.pivot, pair.partner)
    } else {
        (pair.partner, pair.pivot)
    };
    let (label, text, hint) = match label {
        BilingualLabel::Parallel => (label, g.parallel(majority, minority), majority),
        BilingualLabel::CodeSwitching => (label, g.code_switching(majority, minority), majority),
        BilingualLabel::Miscellaneous => (label, g.miscellaneous(majority, minority), majority),
        BilingualLabel::OutOfPair => {
            let others: Vec<Lang> = BUNDLED_LANGS.into_iter().filter(|l| !pair.contains(*l)).collect();
            let lang = *others.choose(&mut g.rng).expect("four bundled languages");
            (label, g.monolingual(lang), lang)
        }
        _ => (BilingualLabel::Monolingual, g.monolingual(majority), majority),
    };
    let pool = match label {
        BilingualLabel::Parallel => "parallel",
        BilingualLabel::CodeSwitching => "code_switching",
        BilingualLabel::Miscellaneous => "miscellaneous",
        _ => "monolingual",
    };
    let url = g.url(pool);
    let mut doc = Document::new(format!("synth-{seed}-{index:06}"), text);
    doc.url = url;
    doc.lang_hint = Some(hint.to_string());
    doc.extra
        .insert(PLANTED_KEY.into(), Value::String(label.as_str().into()));
    doc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedGeneration {
    #[serde(flatten)]
    pub generation: Generation,
    pub planted: GenLangClass,
}

/// Source/output pairs with exact planted counts for `mix` in
/// target, source, mixed order. Sources are in the pivot language; target
/// outputs translate them into the partner.
pub fn synth_generations(
    pair: LanguagePair,
    count: usize,
    mix: [f64; 3],
    seed: u64,
) -> Result<Vec<PlantedGeneration>, SynthError> {
    check_pair(pair)?;
    check_mix(&mix)?;
    let counts = apportion(count, &mix);
    let classes = [GenLangClass::Target, GenLangClass::Source, GenLangClass::Mixed];
    let mut planted: Vec<GenLangClass> = classes
        .iter()
        .zip(counts)
        .flat_map(|(&c, n)| std::iter::repeat_n(c, n))
        .collect();
    planted.shuffle(&mut stream_rng(seed, u64::MAX));
    Ok(planted
        .into_iter()
        .enumerate()
        .map(|(i, class)| {
            let mut g = TextGen::new(stream_rng(seed, i as u64));
            let n = g.rng.random_range(2..=4usize);
            let sents: Vec<Sentence> = (0..n).map(|_| g.sentence(7, 16, 0.3)).collect();
            let source = render_paragraph(&sents, pair.pivot);
            let generated = match class {
                GenLangClass::Target => render_paragraph(&sents, pair.partner),
                GenLangClass::Source => source.clone(),
                GenLangClass::Mixed => {
                    let half = n / 2;
                    format!(
                        "{} {}",
                        render_paragraph(&sents[..half], pair.partner),
                        render_paragraph(&sents[half..], pair.pivot)
                    )
                }
            };
            PlantedGeneration {
                generation: Generation {
                    id: Some(format!("gen-{i:06}")),
                    source,
                    generated,
                },
                planted: class,
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
enum Token {
    Word(usize),
    Anchor(String),
}

#[derive(Debug, Clone)]
struct Sentence(Vec<Token>);

impl Sentence {
    fn render(&self, lang: Lang) -> String {
        let lex = Lexicon::get();
        let mut out = String::new();
        for (i, tok) in self.0.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            match tok {
                Token::Word(row) if i == 0 => out.push_str(&capitalize(lex.word(*row, lang))),
                Token::Word(row) => out.push_str(lex.word(*row, lang)),
                Token::Anchor(a) => out.push_str(a),
            }
        }
        out.push('.');
        out
    }

    fn tokens(&self, lang: Lang) -> usize {
        crate::text::count_words(&self.render(lang))
    }
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn render_paragraph(sents: &[Sentence], lang: Lang) -> String {
    sents.iter().map(|s| s.render(lang)).collect::<Vec<_>>().join(" ")
}

fn paragraph_tokens(sents: &[Sentence], lang: Lang) -> usize {
    sents.iter().map(|s| s.tokens(lang)).sum()
}

struct TextGen {
    rng: ChaCha8Rng,
    zipf: Zipf<f64>,
    names: Vec<&'static str>,
    used_names: HashSet<usize>,
    used_numbers: HashSet<u32>,
}

impl TextGen {
    fn new(rng: ChaCha8Rng) -> Self {
        let n = Lexicon::get().len();
        TextGen {
            rng,
            zipf: Zipf::new(n as f64, 1.0).expect("non-empty lexicon"),
            names: resources::names(),
            used_names: HashSet::new(),
            used_numbers: HashSet::new(),
        }
    }

    fn word(&mut self) -> Token {
        let rank = self.zipf.sample(&mut self.rng) as usize;
        Token::Word(rank.clamp(1, Lexicon::get().len()) - 1)
    }

    /// A proper noun not yet used in this document while any remain.
    fn name(&mut self) -> Token {
        let n = self.names.len();
        let mut i = self.rng.random_range(0..n);
        if self.used_names.len() < n {
            while !self.used_names.insert(i) {
                i = (i + 1) % n;
            }
        }
        Token::Anchor(self.names[i].to_string())
    }

    fn number(&mut self) -> Token {
        loop {
            let v = self.rng.random_range(10..100_000u32);
            if self.used_numbers.insert(v) {
                return Token::Anchor(v.to_string());
            }
        }
    }

    /// `min..=max` lexicon words; with probability `anchor_p` a name and a
    /// number are mixed in.
    fn sentence(&mut self, min: usize, max: usize, anchor_p: f64) -> Sentence {
        let len = self.rng.random_range(min..=max);
        let mut toks: Vec<Token> = (0..len).map(|_| self.word()).collect();
        if self.rng.random_bool(anchor_p) {
            let name = self.name();
            let at = self.rng.random_range(0..=toks.len());
            toks.insert(at, name);
            let num = self.number();
            let at = self.rng.random_range(1..=toks.len());
            toks.insert(at, num);
        }
        Sentence(toks)
    }

    /// A sentence dense with shared names and numbers, as in translated
    /// listings and abstracts.
    fn anchored_sentence(&mut self) -> Sentence {
        let len = self.rng.random_range(9..=15);
        let mut toks: Vec<Token> = (0..len).map(|_| self.word()).collect();
        let lead = self.name();
        toks.insert(0, lead);
        for _ in 0..self.rng.random_range(1..=2) {
            let at = self.rng.random_range(1..=toks.len());
            let name = self.name();
            toks.insert(at, name);
        }
        for _ in 0..self.rng.random_range(1..=2) {
            let at = self.rng.random_range(1..=toks.len());
            let num = self.number();
            toks.insert(at, num);
        }
        Sentence(toks)
    }

    fn paragraph(&mut self, sentences: usize) -> Vec<Sentence> {
        (0..sentences).map(|_| self.sentence(7, 18, 0.3)).collect()
    }

    fn monolingual(&mut self, lang: Lang) -> String {
        let paras = self.rng.random_range(1..=4);
        (0..paras)
            .map(|_| {
                let n = self.rng.random_range(1..=4);
                render_paragraph(&self.paragraph(n), lang)
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Paragraph pairs, each followed by its translation.
    fn parallel(&mut self, first: Lang, second: Lang) -> String {
        let pairs = self.rng.random_range(2..=4);
        let mut out = Vec::new();
        for _ in 0..pairs {
            let n = self.rng.random_range(1..=2);
            let sents: Vec<Sentence> = (0..n).map(|_| self.anchored_sentence()).collect();
            out.push(render_paragraph(&sents, first));
            out.push(render_paragraph(&sents, second));
        }
        out.join("\n\n")
    }

    /// A long majority text with one or two unrelated minority passages of
    /// more than 30 tokens. Every majority block is over twice as long as
    /// its minority neighbours, so no pair of blocks looks like a
    /// translation.
    fn code_switching(&mut self, majority: Lang, minority: Lang) -> String {
        let passages = self.rng.random_range(1..=2);
        let mut minor = Vec::new();
        let mut longest = 0;
        for _ in 0..passages {
            let mut sents = Vec::new();
            while paragraph_tokens(&sents, minority) <= 32 {
                sents.push(self.sentence(8, 14, 0.3));
            }
            longest = longest.max(paragraph_tokens(&sents, minority));
            minor.push(render_paragraph(&sents, minority));
        }
        let major_block = |g: &mut TextGen| {
            let mut sents = Vec::new();
            while paragraph_tokens(&sents, majority) <= 2 * longest + 8 {
                sents.push(g.sentence(10, 18, 0.3));
            }
            render_paragraph(&sents, majority)
        };
        let mut out = vec![major_block(self)];
        for m in minor {
            out.push(m);
            out.push(major_block(self));
        }
        if self.rng.random_bool(0.3) {
            out.pop();
        }
        out.join("\n\n")
    }

    /// A majority article with two short, unrelated boilerplate lines in the
    /// minority language at its start or end.
    fn miscellaneous(&mut self, majority: Lang, minority: Lang) -> String {
        let mut article = Vec::new();
        let target = self.rng.random_range(60..=110);
        while paragraph_tokens(&article, majority) < target {
            article.push(self.sentence(8, 16, 0.0));
        }
        let lines = resources::boilerplate(minority);
        let chosen: Vec<&str> = lines.sample(&mut self.rng, 2).copied().collect();
        let boiler = chosen.join("\n");
        let body = render_paragraph(&article, majority);
        if self.rng.random_bool(0.3) {
            format!("{boiler}\n\n{body}")
        } else {
            format!("{body}\n\n{boiler}")
        }
    }

    fn url(&mut self, pool: &str) -> Option<String> {
        let entries = resources::url_pool(pool);
        let (prefix, _) = entries.choose_weighted(&mut self.rng, |e| e.1).ok()?;
        let slug = Lexicon::get().word(self.rng.random_range(0..Lexicon::get().len()), Lang::EN);
        Some(format!("{prefix}{slug}-{}", self.rng.random_range(1..100_000u32)))
    }
}
