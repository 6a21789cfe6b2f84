//! The four pretraining corpus configurations and their set-algebra check.
//!
//! | split                | labels kept                          |
//! |----------------------|--------------------------------------|
//! | `fineweb`            | everything                           |
//! | `monoweb`            | Monolingual                          |
//! | `monoweb_parallel`   | Monolingual, Parallel                |
//! | `monoweb_codeswitch` | Monolingual, CodeSwitching           |
//!
//! OutOfPair documents follow Monolingual unless dropped, in which case they
//! leave every split. Unresolved candidates only appear in `fineweb`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BilingualLabel, CorpusError, CorpusWriter, Document};
use crate::text;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("document {doc_id:?} has no final label ({label}); run detect and classify first")]
    Unlabeled { doc_id: String, label: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Fineweb,
    Monoweb,
    MonowebParallel,
    MonowebCodeswitch,
}

impl SplitName {
    pub const ALL: [SplitName; 4] = [
        SplitName::Fineweb,
        SplitName::Monoweb,
        SplitName::MonowebParallel,
        SplitName::MonowebCodeswitch,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SplitName::Fineweb => "fineweb",
            SplitName::Monoweb => "monoweb",
            SplitName::MonowebParallel => "monoweb_parallel",
            SplitName::MonowebCodeswitch => "monoweb_codeswitch",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub name: SplitName,
    pub included_labels: Vec<BilingualLabel>,
}

impl SplitSpec {
    pub fn new(name: SplitName, keep_out_of_pair: bool) -> Self {
        use BilingualLabel::*;
        let mut labels = match name {
            SplitName::Fineweb => vec![Monolingual, Parallel, CodeSwitching, Miscellaneous, Unresolved],
            SplitName::Monoweb => vec![Monolingual],
            SplitName::MonowebParallel => vec![Monolingual, Parallel],
            SplitName::MonowebCodeswitch => vec![Monolingual, CodeSwitching],
        };
        if keep_out_of_pair {
            labels.push(OutOfPair);
        }
        SplitSpec {
            name,
            included_labels: labels,
        }
    }

    pub fn all(keep_out_of_pair: bool) -> Vec<SplitSpec> {
        SplitName::ALL
            .iter()
            .map(|&n| SplitSpec::new(n, keep_out_of_pair))
            .collect()
    }

    pub fn includes(&self, label: BilingualLabel) -> bool {
        self.included_labels.contains(&label)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub doc_count: u64,
    pub token_count: u64,
    /// Member ids in output order, kept for the algebra check.
    #[serde(skip)]
    pub ids: Vec<String>,
}

/// Final-label tally of a corpus with the ids behind each label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelIndex {
    pub ids: BTreeMap<BilingualLabel, Vec<String>>,
}

impl LabelIndex {
    pub fn count(&self, label: BilingualLabel) -> u64 {
        self.ids.get(&label).map_or(0, |v| v.len() as u64)
    }

    pub fn counts(&self) -> BTreeMap<BilingualLabel, u64> {
        self.ids.iter().map(|(&l, v)| (l, v.len() as u64)).collect()
    }

    fn ids_of(&self, label: BilingualLabel) -> &[String] {
        self.ids.get(&label).map_or(&[], |v| v.as_slice())
    }
}

fn final_label(doc: &Document) -> Result<BilingualLabel, SplitError> {
    match doc.label() {
        Some(l) if l.is_final() => Ok(l),
        other => Err(SplitError::Unlabeled {
            doc_id: doc.doc_id.clone(),
            label: other.map_or("none".into(), |l| l.to_string()),
        }),
    }
}

/// Writes several splits in a single pass. Output order is input order.
pub struct SplitBuilder {
    specs: Vec<SplitSpec>,
    writers: Vec<CorpusWriter>,
    summaries: Vec<SplitSummary>,
    labels: LabelIndex,
}

impl SplitBuilder {
    pub fn create<P: AsRef<Path>>(outputs: Vec<(SplitSpec, P)>, strip_annotations: bool) -> Result<Self, SplitError> {
        let mut specs = Vec::new();
        let mut writers = Vec::new();
        for (spec, path) in outputs {
            writers.push(CorpusWriter::create(path, !strip_annotations)?);
            specs.push(spec);
        }
        let summaries = vec![SplitSummary::default(); specs.len()];
        Ok(SplitBuilder {
            specs,
            writers,
            summaries,
            labels: LabelIndex::default(),
        })
    }

    pub fn push(&mut self, doc: &Document) -> Result<(), SplitError> {
        let label = final_label(doc)?;
        self.labels.ids.entry(label).or_default().push(doc.doc_id.clone());
        let mut tokens = None;
        for ((spec, writer), summary) in self.specs.iter().zip(&mut self.writers).zip(&mut self.summaries) {
            if spec.includes(label) {
                writer.write(doc)?;
                summary.doc_count += 1;
                summary.token_count += *tokens.get_or_insert_with(|| text::count_words(&doc.text) as u64);
                summary.ids.push(doc.doc_id.clone());
            }
        }
        Ok(())
    }

    /// Persists every output file.
    pub fn finish(self) -> Result<(BTreeMap<SplitName, SplitSummary>, LabelIndex), SplitError> {
        let mut out = BTreeMap::new();
        for ((spec, writer), summary) in self.specs.into_iter().zip(self.writers).zip(self.summaries) {
            writer.finish()?;
            out.insert(spec.name, summary);
        }
        Ok((out, self.labels))
    }
}

pub fn build_split<I>(
    corpus: I,
    spec: &SplitSpec,
    out_path: impl AsRef<Path>,
    strip_annotations: bool,
) -> Result<SplitSummary, SplitError>
where
    I: IntoIterator<Item = Document>,
{
    let mut builder = SplitBuilder::create(vec![(spec.clone(), out_path)], strip_annotations)?;
    for doc in corpus {
        builder.push(&doc)?;
    }
    let (mut summaries, _) = builder.finish()?;
    Ok(summaries.remove(&spec.name).expect("built above"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgebraCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgebraReport {
    pub passed: bool,
    pub checks: Vec<AlgebraCheck>,
}

fn first_duplicate(ids: &[String]) -> Option<&str> {
    let mut seen = HashSet::with_capacity(ids.len());
    ids.iter().find(|id| !seen.insert(id.as_str())).map(String::as_str)
}

/// Compares `got` with `want` as sets and names the first offending id.
fn set_check(name: String, got: &[&str], want: &[&str]) -> AlgebraCheck {
    let got_set: HashSet<&str> = got.iter().copied().collect();
    let want_set: HashSet<&str> = want.iter().copied().collect();
    let extra = got.iter().find(|id| !want_set.contains(*id));
    let missing = want.iter().find(|id| !got_set.contains(*id));
    let (passed, detail) = match (extra, missing) {
        (None, None) if got.len() == want.len() => (true, format!("{} documents", got.len())),
        (Some(id), _) => (false, format!("unexpected document {id:?}")),
        (_, Some(id)) => (false, format!("missing document {id:?}")),
        _ => (false, format!("{} documents, expected {}", got.len(), want.len())),
    };
    AlgebraCheck { name, passed, detail }
}

pub fn verify_split_algebra(summaries: &BTreeMap<SplitName, SplitSummary>, labels: &LabelIndex) -> AlgebraReport {
    use BilingualLabel::*;
    let mut checks = Vec::new();
    let empty = SplitSummary::default();
    let get = |n: SplitName| summaries.get(&n).unwrap_or(&empty);

    for (name, s) in summaries {
        let (passed, detail) = match first_duplicate(&s.ids) {
            Some(id) => (false, format!("document {id:?} included twice")),
            None if s.ids.len() as u64 != s.doc_count => {
                (false, format!("doc_count {} but {} ids", s.doc_count, s.ids.len()))
            }
            None => (true, format!("{} documents", s.doc_count)),
        };
        checks.push(AlgebraCheck {
            name: format!("{name}: no duplicates"),
            passed,
            detail,
        });
    }

    let fineweb = get(SplitName::Fineweb).doc_count;
    let monoweb = get(SplitName::Monoweb).doc_count;
    let (p, cs, m, u) = (
        labels.count(Parallel),
        labels.count(CodeSwitching),
        labels.count(Miscellaneous),
        labels.count(Unresolved),
    );
    let rhs = monoweb + p + cs + m + u;
    checks.push(AlgebraCheck {
        name: "fineweb = monoweb + parallel + code_switching + miscellaneous + unresolved".into(),
        passed: fineweb == rhs,
        detail: format!("{fineweb} vs {monoweb} + {p} + {cs} + {m} + {u} = {rhs}"),
    });

    let ids = |n: SplitName| -> Vec<&str> { get(n).ids.iter().map(String::as_str).collect() };
    let label_ids = |ls: &[BilingualLabel]| -> Vec<&str> {
        ls.iter()
            .flat_map(|&l| labels.ids_of(l).iter().map(String::as_str))
            .collect()
    };
    let mono_ids = ids(SplitName::Monoweb);
    let mono_set: HashSet<&str> = mono_ids.iter().copied().collect();
    for (split, label) in [
        (SplitName::MonowebParallel, Parallel),
        (SplitName::MonowebCodeswitch, CodeSwitching),
    ] {
        if !summaries.contains_key(&split) || !summaries.contains_key(&SplitName::Monoweb) {
            continue;
        }
        let members = ids(split);
        let member_set: HashSet<&str> = members.iter().copied().collect();
        let missing_mono = mono_ids.iter().find(|id| !member_set.contains(*id));
        let added: Vec<&str> = members.iter().copied().filter(|id| !mono_set.contains(id)).collect();
        let mut check = set_check(format!("{split} = monoweb + {label}"), &added, &label_ids(&[label]));
        if let Some(id) = missing_mono {
            check.passed = false;
            check.detail = format!("monoweb document {id:?} missing");
        }
        checks.push(check);
    }

    AlgebraReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}
