//! Input expansion, tolerant corpus reading and run reports.

use std::cell::{Cell, RefCell};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bisift::corpus::CorpusReader;
use bisift::{CorpusError, Document};
use serde::Serialize;
use serde_json::Value;

/// Expands directories to their `.jsonl` / `.jsonl.gz` shards in name order.
pub fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for path in inputs {
        if path.is_dir() {
            let mut shards: Vec<PathBuf> = std::fs::read_dir(path)
                .with_context(|| format!("listing {}", path.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    name.ends_with(".jsonl") || name.ends_with(".jsonl.gz")
                })
                .collect();
            shards.sort();
            out.extend(shards);
        } else if path.is_file() {
            out.push(path.clone());
        } else {
            bail!("input {} does not exist", path.display());
        }
    }
    if out.is_empty() {
        bail!("no input shards found");
    }
    Ok(out)
}

/// Yields well-formed documents. Malformed lines are reported and counted;
/// an I/O failure ends the stream and is kept for the caller.
pub struct Records<'a> {
    inner: CorpusReader,
    skipped: &'a Cell<u64>,
    fatal: &'a RefCell<Option<CorpusError>>,
    quiet: bool,
}

const MAX_WARNINGS: u64 = 10;

impl<'a> Records<'a> {
    pub fn new(
        inner: CorpusReader,
        skipped: &'a Cell<u64>,
        fatal: &'a RefCell<Option<CorpusError>>,
        quiet: bool,
    ) -> Self {
        Records {
            inner,
            skipped,
            fatal,
            quiet,
        }
    }
}

impl Iterator for Records<'_> {
    type Item = Document;

    fn next(&mut self) -> Option<Document> {
        loop {
            match self.inner.next()? {
                Ok(doc) => return Some(doc),
                Err(e) if e.is_recoverable() => {
                    let n = self.skipped.get() + 1;
                    self.skipped.set(n);
                    if !self.quiet && n <= MAX_WARNINGS {
                        eprintln!("warning: skipping {e}");
                    }
                }
                Err(e) => {
                    *self.fatal.borrow_mut() = Some(e);
                    return None;
                }
            }
        }
    }
}

/// One per invocation: what ran, with which settings, on what, and the
/// outcome. Nothing machine- or run-specific (worker count, timings) goes
/// in, so reruns compare byte for byte.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub version: &'static str,
    pub config: Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub summary: Value,
}

impl RunReport {
    pub fn new(command: &'static str, config: Value) -> Self {
        RunReport {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            summary: Value::Null,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &to_json(self))
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn display(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

/// `<path>.run.json`, next to a primary output.
pub fn sibling_report(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}
