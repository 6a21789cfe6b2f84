//! Document model and streaming I/O for sharded line-delimited corpora.
//!
//! Each line holds one JSON record with the keys `id`, `url`, `text`,
//! `lang_hint` and `annotations`. Any other key is kept verbatim in
//! [`Document::extra`] and written back out unchanged. Shards ending in
//! `.gz` are transparently (de)compressed.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::entropy::DocLangProfile;
use crate::lang::{Lang, LanguagePair};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl CorpusError {
    /// Record errors concern a single line; the stream continues after them.
    pub fn is_recoverable(&self) -> bool {
        matches!(self, CorpusError::Record { .. })
    }

    fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BilingualLabel {
    Monolingual,
    Candidate,
    Parallel,
    CodeSwitching,
    Miscellaneous,
    OutOfPair,
    #[serde(rename = "candidate_unresolved")]
    Unresolved,
}

impl BilingualLabel {
    pub const ALL: [BilingualLabel; 7] = [
        BilingualLabel::Monolingual,
        BilingualLabel::Candidate,
        BilingualLabel::Parallel,
        BilingualLabel::CodeSwitching,
        BilingualLabel::Miscellaneous,
        BilingualLabel::OutOfPair,
        BilingualLabel::Unresolved,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BilingualLabel::Monolingual => "monolingual",
            BilingualLabel::Candidate => "candidate",
            BilingualLabel::Parallel => "parallel",
            BilingualLabel::CodeSwitching => "code_switching",
            BilingualLabel::Miscellaneous => "miscellaneous",
            BilingualLabel::OutOfPair => "out_of_pair",
            BilingualLabel::Unresolved => "candidate_unresolved",
        }
    }

    /// One of the three verified-bilingual categories.
    pub fn is_bilingual_category(&self) -> bool {
        matches!(
            self,
            BilingualLabel::Parallel | BilingualLabel::CodeSwitching | BilingualLabel::Miscellaneous
        )
    }

    /// True once no later pipeline stage will change the label.
    pub fn is_final(&self) -> bool {
        !matches!(self, BilingualLabel::Candidate)
    }
}

impl std::fmt::Display for BilingualLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierSource {
    Heuristic,
    RemoteJudge,
}

/// Annotations accumulated by the pipeline stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AnnotationWire", into = "AnnotationWire")]
pub struct AnnotationBlock {
    pub profile: Option<DocLangProfile>,
    pub label: BilingualLabel,
    pub classifier_source: ClassifierSource,
    pub category_confidence: Option<f64>,
    /// Why a document bypassed classification ("oversize", scoring errors).
    pub reason: Option<String>,
}

impl AnnotationBlock {
    pub fn new(label: BilingualLabel, profile: Option<DocLangProfile>) -> Self {
        AnnotationBlock {
            profile,
            label,
            classifier_source: ClassifierSource::Heuristic,
            category_confidence: None,
            reason: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct AnnotationWire {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pair: Option<LanguagePair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_doc: Option<PDocWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entropy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pair_mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sentence_count: Option<u64>,
    label: BilingualLabel,
    classifier_source: ClassifierSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category_confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

/// `p_doc` map, written pivot first.
#[derive(Deserialize)]
#[serde(from = "BTreeMap<Lang, f64>")]
struct PDocWire(Vec<(Lang, f64)>);

impl From<BTreeMap<Lang, f64>> for PDocWire {
    fn from(map: BTreeMap<Lang, f64>) -> Self {
        PDocWire(map.into_iter().collect())
    }
}

impl Serialize for PDocWire {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (lang, p) in &self.0 {
            map.serialize_entry(lang, p)?;
        }
        map.end()
    }
}

impl From<AnnotationBlock> for AnnotationWire {
    fn from(block: AnnotationBlock) -> Self {
        let mut wire = AnnotationWire {
            pair: None,
            p_doc: None,
            entropy: None,
            pair_mass: None,
            sentence_count: None,
            label: block.label,
            classifier_source: block.classifier_source,
            category_confidence: block.category_confidence,
            reason: block.reason,
        };
        if let Some(p) = block.profile {
            wire.pair = Some(p.pair);
            wire.p_doc = Some(PDocWire(vec![(p.pair.pivot, p.p_doc[0]), (p.pair.partner, p.p_doc[1])]));
            wire.entropy = Some(p.entropy);
            wire.pair_mass = Some(p.pair_mass);
            wire.sentence_count = Some(p.sentence_count as u64);
        }
        wire
    }
}

impl TryFrom<AnnotationWire> for AnnotationBlock {
    type Error = String;

    fn try_from(w: AnnotationWire) -> Result<Self, Self::Error> {
        let profile = match (w.pair, w.p_doc, w.entropy) {
            (Some(pair), Some(p_doc), Some(entropy)) => {
                let lookup = |lang: Lang| {
                    p_doc
                        .0
                        .iter()
                        .find(|(l, _)| *l == lang)
                        .map(|(_, p)| *p)
                        .ok_or_else(|| format!("p_doc has no entry for {lang}"))
                };
                Some(DocLangProfile {
                    pair,
                    p_doc: [lookup(pair.pivot)?, lookup(pair.partner)?],
                    entropy,
                    pair_mass: w.pair_mass.unwrap_or(1.0),
                    sentence_count: w.sentence_count.unwrap_or(0) as usize,
                })
            }
            (None, None, None) => None,
            _ => return Err("annotations need pair, p_doc and entropy together".into()),
        };
        if w.label.is_bilingual_category() && profile.is_none() {
            return Err(format!("label {} requires a language profile", w.label));
        }
        if let Some(c) = w.category_confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(format!("category_confidence {c} outside [0, 1]"));
            }
        }
        Ok(AnnotationBlock {
            profile,
            label: w.label,
            classifier_source: w.classifier_source,
            category_confidence: w.category_confidence,
            reason: w.reason,
        })
    }
}

/// One corpus record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    #[serde(rename = "id")]
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang_hint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<AnnotationBlock>,
    /// Unknown upstream keys, passed through untouched.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            url: None,
            text: text.into(),
            lang_hint: None,
            annotations: None,
            extra: Map::new(),
        }
    }

    pub fn with_url(mut self, url: impl Into<String>) -> Self {
        self.url = Some(url.into());
        self
    }

    pub fn label(&self) -> Option<BilingualLabel> {
        self.annotations.as_ref().map(|a| a.label)
    }

    pub fn profile(&self) -> Option<&DocLangProfile> {
        self.annotations.as_ref().and_then(|a| a.profile.as_ref())
    }

    pub fn to_json_line(&self, include_annotations: bool) -> String {
        let mut line = if include_annotations {
            serde_json::to_string(self)
        } else {
            serde_json::to_string(&Stripped(self))
        }
        .expect("documents always serialize");
        line.push('\n');
        line
    }

    pub fn from_json_line(line: &str) -> Result<Self, String> {
        let doc: Document = serde_json::from_str(line).map_err(|e| e.to_string())?;
        if doc.doc_id.is_empty() {
            return Err("empty document id".into());
        }
        Ok(doc)
    }
}

/// Serializes a document without its annotation block.
struct Stripped<'a>(&'a Document);

impl Serialize for Stripped<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let d = self.0;
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("id", &d.doc_id)?;
        if let Some(url) = &d.url {
            map.serialize_entry("url", url)?;
        }
        map.serialize_entry("text", &d.text)?;
        if let Some(hint) = &d.lang_hint {
            map.serialize_entry("lang_hint", hint)?;
        }
        for (k, v) in &d.extra {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

fn open_shard(path: &Path) -> io::Result<Box<dyn BufRead + Send>> {
    let file = File::open(path)?;
    if is_gzip(path) {
        Ok(Box::new(BufReader::with_capacity(
            1 << 16,
            MultiGzDecoder::new(BufReader::new(file)),
        )))
    } else {
        Ok(Box::new(BufReader::with_capacity(1 << 16, file)))
    }
}

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Streams documents from shards in shard order, then line order.
///
/// Malformed lines come out as recoverable [`CorpusError::Record`] items. An
/// I/O failure is yielded once and ends the stream.
pub struct CorpusReader {
    paths: Vec<PathBuf>,
    next_shard: usize,
    current: Option<(Box<dyn BufRead + Send>, usize)>,
    buf: Vec<u8>,
    seen_ids: Option<HashSet<String>>,
    finished: bool,
}

pub fn read_corpus<P: AsRef<Path>>(shard_paths: &[P]) -> CorpusReader {
    CorpusReader {
        paths: shard_paths.iter().map(|p| p.as_ref().to_path_buf()).collect(),
        next_shard: 0,
        current: None,
        buf: Vec::new(),
        seen_ids: Some(HashSet::new()),
        finished: false,
    }
}

impl CorpusReader {
    /// Skips the duplicate-id check (and the id set it keeps in memory).
    pub fn allow_duplicate_ids(mut self) -> Self {
        self.seen_ids = None;
        self
    }

    fn current_path(&self) -> &Path {
        &self.paths[self.next_shard - 1]
    }
}

impl Iterator for CorpusReader {
    type Item = Result<Document, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.finished {
                return None;
            }
            if self.current.is_none() {
                let Some(path) = self.paths.get(self.next_shard) else {
                    self.finished = true;
                    return None;
                };
                self.next_shard += 1;
                match open_shard(path) {
                    Ok(reader) => self.current = Some((reader, 0)),
                    Err(e) => {
                        self.finished = true;
                        return Some(Err(CorpusError::io(path, e)));
                    }
                }
            }
            let (reader, line_no) = self.current.as_mut().expect("shard open");
            self.buf.clear();
            match reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => {
                    self.current = None;
                    continue;
                }
                Ok(_) => {
                    *line_no += 1;
                    let line_no = *line_no;
                    let mut bytes = &self.buf[..];
                    while let [rest @ .., b'\n' | b'\r'] = bytes {
                        bytes = rest;
                    }
                    if bytes.iter().all(u8::is_ascii_whitespace) {
                        continue;
                    }
                    let parsed = std::str::from_utf8(bytes)
                        .map_err(|e| format!("invalid UTF-8: {e}"))
                        .and_then(Document::from_json_line)
                        .and_then(|doc| match &mut self.seen_ids {
                            Some(seen) => {
                                if seen.insert(doc.doc_id.clone()) {
                                    Ok(doc)
                                } else {
                                    Err(format!("duplicate document id {:?}", doc.doc_id))
                                }
                            }
                            None => Ok(doc),
                        });
                    return Some(parsed.map_err(|message| CorpusError::Record {
                        path: self.current_path().to_path_buf(),
                        line: line_no,
                        message,
                    }));
                }
                Err(e) => {
                    self.finished = true;
                    let path = self.current_path().to_path_buf();
                    return Some(Err(CorpusError::Io { path, source: e }));
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteSummary {
    pub count: u64,
    /// Uncompressed record bytes.
    pub bytes: u64,
}

enum Sink {
    Plain(BufWriter<tempfile::NamedTempFile>),
    Gzip(GzEncoder<BufWriter<tempfile::NamedTempFile>>),
}

/// Writes records to a temporary file next to the destination and renames it
/// into place on [`CorpusWriter::finish`]. Dropping an unfinished writer
/// removes the partial file.
pub struct CorpusWriter {
    sink: Sink,
    path: PathBuf,
    include_annotations: bool,
    summary: WriteSummary,
}

impl CorpusWriter {
    pub fn create(path: impl AsRef<Path>, include_annotations: bool) -> Result<Self, CorpusError> {
        let path = path.as_ref().to_path_buf();
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let tmp = tempfile::Builder::new()
            .prefix(".bisift-")
            .suffix(".partial")
            .tempfile_in(&dir)
            .map_err(|e| CorpusError::io(&path, e))?;
        let buffered = BufWriter::with_capacity(1 << 16, tmp);
        let sink = if is_gzip(&path) {
            Sink::Gzip(GzEncoder::new(buffered, Compression::default()))
        } else {
            Sink::Plain(buffered)
        };
        Ok(CorpusWriter {
            sink,
            path,
            include_annotations,
            summary: WriteSummary::default(),
        })
    }

    pub fn write(&mut self, doc: &Document) -> Result<(), CorpusError> {
        let line = doc.to_json_line(self.include_annotations);
        let res = match &mut self.sink {
            Sink::Plain(w) => w.write_all(line.as_bytes()),
            Sink::Gzip(w) => w.write_all(line.as_bytes()),
        };
        res.map_err(|e| CorpusError::io(&self.path, e))?;
        self.summary.count += 1;
        self.summary.bytes += line.len() as u64;
        Ok(())
    }

    pub fn finish(self) -> Result<WriteSummary, CorpusError> {
        let path = self.path;
        let buffered = match self.sink {
            Sink::Plain(w) => w,
            Sink::Gzip(w) => w.finish().map_err(|e| CorpusError::io(&path, e))?,
        };
        let tmp = buffered
            .into_inner()
            .map_err(|e| CorpusError::io(&path, e.into_error()))?;
        tmp.as_file().sync_all().map_err(|e| CorpusError::io(&path, e))?;
        tmp.persist(&path).map_err(|e| CorpusError::io(&path, e.error))?;
        Ok(self.summary)
    }
}

pub fn write_corpus<I>(
    docs: I,
    out_path: impl AsRef<Path>,
    include_annotations: bool,
) -> Result<WriteSummary, CorpusError>
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<Document>,
{
    let mut writer = CorpusWriter::create(out_path, include_annotations)?;
    for doc in docs {
        writer.write(doc.borrow())?;
    }
    writer.finish()
}
