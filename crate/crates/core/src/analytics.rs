//! Corpus measurements: bilingual composition, URL source domains and the
//! language of model generations.
//!
//! Every report is built from a mergeable accumulator, so shard-level
//! results can be combined into the whole-corpus result.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use publicsuffix::{List, Psl};
use serde::{Deserialize, Serialize};

use crate::corpus::{BilingualLabel, Document};
use crate::entropy::{self, FilterConfig, ProfileError};
use crate::lang::LanguagePair;
use crate::langid::SentenceScorer;

const CATEGORIES: [BilingualLabel; 3] = [
    BilingualLabel::Parallel,
    BilingualLabel::CodeSwitching,
    BilingualLabel::Miscellaneous,
];

pub const NO_URL: &str = "(no-url)";
pub const INVALID_URL: &str = "(invalid-url)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Human,
    Machine,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "human" => Ok(ReportFormat::Human),
            "machine" => Ok(ReportFormat::Machine),
            _ => Err(format!("unknown format {s:?}; expected human or machine")),
        }
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionReport {
    pub pair: LanguagePair,
    pub total_documents: u64,
    pub bilingual_documents: u64,
    pub total_bilingual_share: f64,
    /// Shares among bilingual documents; empty when there are none.
    pub category_shares: BTreeMap<BilingualLabel, f64>,
    pub counts: BTreeMap<BilingualLabel, u64>,
    /// Documents still labeled Candidate or Unresolved.
    pub unresolved: u64,
}

impl CompositionReport {
    pub fn render_human(&self) -> String {
        let mut s = String::new();
        let share = |l| self.category_shares.get(&l).copied().map_or("-".into(), pct);
        let _ = writeln!(
            s,
            "{:<8}{:>10}{:>12}{:>12}{:>16}{:>16}",
            "pair", "documents", "bilingual", "parallel", "code-switching", "miscellaneous"
        );
        let _ = writeln!(
            s,
            "{:<8}{:>10}{:>12}{:>12}{:>16}{:>16}",
            self.pair.to_string(),
            self.total_documents,
            pct(self.total_bilingual_share),
            share(BilingualLabel::Parallel),
            share(BilingualLabel::CodeSwitching),
            share(BilingualLabel::Miscellaneous),
        );
        if self.unresolved > 0 {
            let _ = writeln!(s, "unresolved candidates: {}", self.unresolved);
        }
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompositionAccumulator {
    total: u64,
    counts: BTreeMap<BilingualLabel, u64>,
    unresolved: u64,
}

impl CompositionAccumulator {
    pub fn add(&mut self, doc: &Document) {
        self.total += 1;
        match doc.label() {
            Some(l) if l.is_bilingual_category() => *self.counts.entry(l).or_default() += 1,
            Some(BilingualLabel::Candidate | BilingualLabel::Unresolved) => self.unresolved += 1,
            _ => {}
        }
    }

    pub fn merge(&mut self, other: &CompositionAccumulator) {
        self.total += other.total;
        self.unresolved += other.unresolved;
        for (&l, &n) in &other.counts {
            *self.counts.entry(l).or_default() += n;
        }
    }

    pub fn report(&self, pair: LanguagePair) -> CompositionReport {
        let bilingual: u64 = self.counts.values().sum();
        let category_shares = if bilingual == 0 {
            BTreeMap::new()
        } else {
            CATEGORIES
                .iter()
                .map(|&l| (l, self.counts.get(&l).copied().unwrap_or(0) as f64 / bilingual as f64))
                .collect()
        };
        let counts = if bilingual == 0 {
            BTreeMap::new()
        } else {
            CATEGORIES
                .iter()
                .map(|&l| (l, self.counts.get(&l).copied().unwrap_or(0)))
                .collect()
        };
        CompositionReport {
            pair,
            total_documents: self.total,
            bilingual_documents: bilingual,
            total_bilingual_share: if self.total == 0 {
                0.0
            } else {
                bilingual as f64 / self.total as f64
            },
            category_shares,
            counts,
            unresolved: self.unresolved,
        }
    }
}

pub fn composition_report<'a, I>(corpus: I, pair: LanguagePair) -> CompositionReport
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut acc = CompositionAccumulator::default();
    for doc in corpus {
        acc.add(doc);
    }
    acc.report(pair)
}

/// Registrable-domain lookup backed by a public suffix list.
pub struct DomainResolver {
    list: List,
}

impl DomainResolver {
    pub fn from_list(text: &str) -> Result<Self, String> {
        text.parse::<List>()
            .map(|list| DomainResolver { list })
            .map_err(|e| format!("invalid public suffix list: {e}"))
    }

    pub fn bundled() -> &'static DomainResolver {
        static BUNDLED: OnceLock<DomainResolver> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            DomainResolver::from_list(include_str!("../data/public_suffix.dat")).expect("bundled list parses")
        })
    }

    /// Bucket for a document URL: its registrable domain, the bare host for
    /// IP addresses or suffix-only hosts, or one of the placeholder buckets.
    pub fn bucket(&self, url: Option<&str>) -> String {
        let Some(raw) = url.map(str::trim).filter(|u| !u.is_empty()) else {
            return NO_URL.into();
        };
        let Ok(parsed) = url::Url::parse(raw) else {
            return INVALID_URL.into();
        };
        let host = match parsed.host() {
            Some(url::Host::Domain(d)) => d.trim_end_matches('.').to_ascii_lowercase(),
            Some(ip) => return ip.to_string(),
            None => return INVALID_URL.into(),
        };
        match self.list.domain(host.as_bytes()) {
            Some(d) => String::from_utf8_lossy(d.as_bytes()).into_owned(),
            None => host,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainEntry {
    pub domain: String,
    pub doc_count: u64,
    /// Share of the category's documents (document counts, not tokens).
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainReport {
    pub top_k: usize,
    pub categories: BTreeMap<BilingualLabel, Vec<DomainEntry>>,
}

impl DomainReport {
    pub fn render_human(&self) -> String {
        let mut s = String::new();
        for (label, entries) in &self.categories {
            let _ = writeln!(s, "{label} (top {}, document shares)", self.top_k);
            for (i, e) in entries.iter().enumerate() {
                let _ = writeln!(s, "{:>4}  {:<40}{:>8}{:>9}", i + 1, e.domain, e.doc_count, pct(e.share));
            }
        }
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DomainAccumulator {
    counts: BTreeMap<BilingualLabel, BTreeMap<String, u64>>,
}

impl DomainAccumulator {
    pub fn add(&mut self, doc: &Document, resolver: &DomainResolver) {
        let Some(label) = doc.label().filter(|l| l.is_bilingual_category()) else {
            return;
        };
        let bucket = resolver.bucket(doc.url.as_deref());
        *self.counts.entry(label).or_default().entry(bucket).or_default() += 1;
    }

    pub fn merge(&mut self, other: &DomainAccumulator) {
        for (&label, m) in &other.counts {
            let mine = self.counts.entry(label).or_default();
            for (d, &n) in m {
                *mine.entry(d.clone()).or_default() += n;
            }
        }
    }

    /// Ranked by count descending, then domain ascending.
    pub fn report(&self, top_k: usize) -> DomainReport {
        let categories = self
            .counts
            .iter()
            .map(|(&label, m)| {
                let total: u64 = m.values().sum();
                let mut entries: Vec<(&String, u64)> = m.iter().map(|(d, &n)| (d, n)).collect();
                entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
                let ranked = entries
                    .into_iter()
                    .take(top_k)
                    .map(|(d, n)| DomainEntry {
                        domain: d.clone(),
                        doc_count: n,
                        share: n as f64 / total as f64,
                    })
                    .collect();
                (label, ranked)
            })
            .collect();
        DomainReport { top_k, categories }
    }
}

pub fn domain_report<'a, I>(corpus: I, top_k: usize, resolver: &DomainResolver) -> DomainReport
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut acc = DomainAccumulator::default();
    for doc in corpus {
        acc.add(doc, resolver);
    }
    acc.report(top_k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenLangClass {
    Target,
    Source,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenLangThresholds {
    /// Minimum partner-language share for a target-language output.
    pub theta_target: f64,
    /// Entropy above which a non-target output counts as mixed.
    pub tau_mixed: f64,
}

impl Default for GenLangThresholds {
    fn default() -> Self {
        GenLangThresholds {
            theta_target: 0.9,
            tau_mixed: crate::entropy::DEFAULT_TAU,
        }
    }
}

/// One model output; `source` is the prompt side and is not scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub source: String,
    pub generated: String,
}

/// The pair's partner is the target language. Empty outputs count as source.
pub fn classify_generation(
    generated: &str,
    pair: LanguagePair,
    scorer: &dyn SentenceScorer,
    thresholds: &GenLangThresholds,
) -> Result<GenLangClass, ProfileError> {
    if generated.trim().is_empty() {
        return Ok(GenLangClass::Source);
    }
    let doc = Document::new("generation", generated);
    let profile = entropy::profile_document(&doc, pair, scorer, &FilterConfig::default())?;
    Ok(if profile.p_doc[1] >= thresholds.theta_target {
        GenLangClass::Target
    } else if profile.entropy > thresholds.tau_mixed {
        GenLangClass::Mixed
    } else {
        GenLangClass::Source
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenLangReport {
    pub pair: LanguagePair,
    pub rates: BTreeMap<GenLangClass, f64>,
    pub counts: BTreeMap<GenLangClass, u64>,
    pub sample_count: u64,
}

impl GenLangReport {
    pub fn render_human(&self) -> String {
        let rate = |c| pct(self.rates.get(&c).copied().unwrap_or(0.0));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<8}{:>9}{:>10}{:>10}{:>10}",
            "pair", "samples", "target", "source", "mixed"
        );
        let _ = writeln!(
            s,
            "{:<8}{:>9}{:>10}{:>10}{:>10}",
            self.pair.to_string(),
            self.sample_count,
            rate(GenLangClass::Target),
            rate(GenLangClass::Source),
            rate(GenLangClass::Mixed),
        );
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenLangAccumulator {
    counts: BTreeMap<GenLangClass, u64>,
}

impl GenLangAccumulator {
    pub fn add(&mut self, class: GenLangClass) {
        *self.counts.entry(class).or_default() += 1;
    }

    pub fn merge(&mut self, other: &GenLangAccumulator) {
        for (&c, &n) in &other.counts {
            *self.counts.entry(c).or_default() += n;
        }
    }

    pub fn report(&self, pair: LanguagePair) -> GenLangReport {
        let n: u64 = self.counts.values().sum();
        let all = [GenLangClass::Target, GenLangClass::Source, GenLangClass::Mixed];
        let counts: BTreeMap<_, _> = all
            .iter()
            .map(|&c| (c, self.counts.get(&c).copied().unwrap_or(0)))
            .collect();
        let rates = counts
            .iter()
            .map(|(&c, &k)| (c, if n == 0 { 0.0 } else { k as f64 / n as f64 }))
            .collect();
        GenLangReport {
            pair,
            rates,
            counts,
            sample_count: n,
        }
    }
}

pub fn gen_lang_rate<I>(
    outputs: I,
    pair: LanguagePair,
    scorer: &dyn SentenceScorer,
    thresholds: &GenLangThresholds,
) -> Result<GenLangReport, ProfileError>
where
    I: IntoIterator<Item = Generation>,
{
    let mut acc = GenLangAccumulator::default();
    for g in outputs {
        acc.add(classify_generation(&g.generated, pair, scorer, thresholds)?);
    }
    Ok(acc.report(pair))
}
