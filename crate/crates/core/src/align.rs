//! Precision@1 of paired embeddings under cosine similarity.
//!
//! Row `i` of the source matrix is paired with row `i` of the target matrix.
//! A query is correct when its most similar candidate is its own pair; ties go
//! to the lowest index and zero-norm rows have similarity 0 to everything.
//!
//! Embedding files come in two versioned variants. The text form is
//!
//! ```text
//! bisift-embeddings 1
//! <N> <D> <layer> <sentence|lexical>
//! <id>\t<v1> <v2> ... <vD>      (N lines)
//! ```
//!
//! and the binary form is the magic `BSEMBED\0`, then little-endian `u32`
//! version, `u32` N, `u32` D, `i32` layer, `u8` granularity (0 sentence,
//! 1 lexical), N ids as `u32` length + UTF-8 bytes, and N×D `f64` values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TEXT_HEADER: &str = "bisift-embeddings";
pub const BINARY_MAGIC: &[u8; 8] = b"BSEMBED\0";
pub const EMBEDDING_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty embedding matrix")]
    Empty,
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Sentence,
    Lexical,
}

impl Granularity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Granularity::Sentence => "sentence",
            Granularity::Lexical => "lexical",
        }
    }
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sentence" => Ok(Granularity::Sentence),
            "lexical" => Ok(Granularity::Lexical),
            _ => Err(format!("unknown granularity {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "src_to_tgt")]
    SrcToTgt,
    #[serde(rename = "tgt_to_src")]
    TgtToSrc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub ids: Vec<String>,
    pub dim: usize,
    pub layer: i32,
    pub granularity: Granularity,
    /// Row-major, `ids.len() * dim` values.
    pub values: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(
        ids: Vec<String>,
        dim: usize,
        layer: i32,
        granularity: Granularity,
        values: Vec<f64>,
    ) -> Result<Self, AlignError> {
        if ids.is_empty() || dim == 0 {
            return Err(AlignError::Empty);
        }
        if values.len() != ids.len() * dim {
            return Err(AlignError::Dimension(format!(
                "{} values for {} rows of dimension {dim}",
                values.len(),
                ids.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(AlignError::NonFinite {
                row: i / dim,
                col: i % dim,
            });
        }
        Ok(EmbeddingMatrix {
            ids,
            dim,
            layer,
            granularity,
            values,
        })
    }

    /// Rows labeled `0..n`.
    pub fn from_rows(rows: &[Vec<f64>], layer: i32, granularity: Granularity) -> Result<Self, AlignError> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(AlignError::Dimension("rows have different lengths".into()));
        }
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(ids, dim, layer, granularity, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows scaled to unit length; zero rows stay zero.
    fn normalized(&self) -> Vec<f64> {
        let mut out = self.values.clone();
        for row in out.chunks_mut(self.dim) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{TEXT_HEADER} {EMBEDDING_FORMAT_VERSION}\n{} {} {} {}\n",
            self.rows(),
            self.dim,
            self.layer,
            self.granularity.as_str()
        );
        for i in 0..self.rows() {
            s.push_str(&self.ids[i]);
            s.push('\t');
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    s.push(' ');
                }
                // `{:?}` prints the shortest string that round-trips.
                let _ = write!(s, "{v:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(32 + self.values.len() * 8);
        b.extend_from_slice(BINARY_MAGIC);
        b.extend_from_slice(&EMBEDDING_FORMAT_VERSION.to_le_bytes());
        b.extend_from_slice(&(self.rows() as u32).to_le_bytes());
        b.extend_from_slice(&(self.dim as u32).to_le_bytes());
        b.extend_from_slice(&self.layer.to_le_bytes());
        b.push(match self.granularity {
            Granularity::Sentence => 0,
            Granularity::Lexical => 1,
        });
        for id in &self.ids {
            b.extend_from_slice(&(id.len() as u32).to_le_bytes());
            b.extend_from_slice(id.as_bytes());
        }
        for v in &self.values {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    pub fn save(&self, path: impl AsRef<Path>, binary: bool) -> Result<(), AlignError> {
        let path = path.as_ref();
        let bytes = if binary {
            self.to_binary()
        } else {
            self.to_text().into_bytes()
        };
        fs::write(path, bytes).map_err(|source| AlignError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads either variant, chosen by the leading bytes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, AlignError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| AlignError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes, path)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self, AlignError> {
        let fail = |message: String| AlignError::Format {
            path: origin.to_path_buf(),
            message,
        };
        if bytes.starts_with(BINARY_MAGIC) {
            parse_binary(&bytes[BINARY_MAGIC.len()..]).map_err(fail)
        } else {
            let text = std::str::from_utf8(bytes).map_err(|e| fail(format!("not UTF-8 text: {e}")))?;
            parse_text(text).map_err(fail)
        }
    }
}

fn parse_text(text: &str) -> Result<EmbeddingMatrix, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("missing header")?;
    match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        [TEXT_HEADER, v] if v.parse() == Ok(EMBEDDING_FORMAT_VERSION) => {}
        [TEXT_HEADER, v] => return Err(format!("unsupported version {v}")),
        _ => return Err("missing bisift-embeddings header".into()),
    }
    let shape: Vec<&str> = lines.next().ok_or("missing shape line")?.split_whitespace().collect();
    let [n, d, layer, gran] = shape.as_slice() else {
        return Err("shape line must be: N D layer granularity".into());
    };
    let n: usize = n.parse().map_err(|_| format!("bad N {n:?}"))?;
    let d: usize = d.parse().map_err(|_| format!("bad D {d:?}"))?;
    let layer: i32 = layer.parse().map_err(|_| format!("bad layer {layer:?}"))?;
    let granularity: Granularity = gran.parse()?;
    let mut ids = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * d);
    for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let (id, rest) = line.split_once('\t').ok_or(format!("row {i}: missing tab after id"))?;
        ids.push(id.to_string());
        let before = values.len();
        for tok in rest.split_whitespace() {
            values.push(tok.parse::<f64>().map_err(|_| format!("row {i}: bad value {tok:?}"))?);
        }
        if values.len() - before != d {
            return Err(format!("row {i}: expected {d} values, found {}", values.len() - before));
        }
    }
    if ids.len() != n {
        return Err(format!("expected {n} rows, found {}", ids.len()));
    }
    EmbeddingMatrix::new(ids, d, layer, granularity, values).map_err(|e| e.to_string())
}

fn parse_binary(mut b: &[u8]) -> Result<EmbeddingMatrix, String> {
    fn take<'a>(b: &mut &'a [u8], n: usize) -> Result<&'a [u8], String> {
        if b.len() < n {
            return Err("truncated file".into());
        }
        let (head, tail) = b.split_at(n);
        *b = tail;
        Ok(head)
    }
    let u32_at = |b: &mut &[u8]| -> Result<u32, String> { Ok(u32::from_le_bytes(take(b, 4)?.try_into().unwrap())) };
    let version = u32_at(&mut b)?;
    if version != EMBEDDING_FORMAT_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let n = u32_at(&mut b)? as usize;
    let d = u32_at(&mut b)? as usize;
    let layer = i32::from_le_bytes(take(&mut b, 4)?.try_into().unwrap());
    let granularity = match take(&mut b, 1)?[0] {
        0 => Granularity::Sentence,
        1 => Granularity::Lexical,
        g => return Err(format!("bad granularity byte {g}")),
    };
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        let len = u32_at(&mut b)? as usize;
        let raw = take(&mut b, len)?;
        ids.push(String::from_utf8(raw.to_vec()).map_err(|_| "id is not UTF-8".to_string())?);
    }
    let raw = take(
        &mut b,
        n.checked_mul(d)
            .and_then(|x| x.checked_mul(8))
            .ok_or("shape overflow")?,
    )?;
    if !b.is_empty() {
        return Err(format!("{} trailing bytes", b.len()));
    }
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingMatrix::new(ids, d, layer, granularity, values).map_err(|e| e.to_string())
}

/// Index of the most similar candidate for every query row.
fn nearest(queries: &[f64], candidates: &[f64], dim: usize) -> Vec<usize> {
    queries
        .par_chunks(dim)
        .map(|q| {
            let mut best = 0;
            let mut best_sim = f64::NEG_INFINITY;
            for (j, c) in candidates.chunks(dim).enumerate() {
                let sim: f64 = q.iter().zip(c).map(|(a, b)| a * b).sum();
                if sim > best_sim {
                    best_sim = sim;
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn p_at_1(src: &EmbeddingMatrix, tgt: &EmbeddingMatrix, direction: Direction) -> Result<f64, AlignError> {
    if src.rows() == 0 || tgt.rows() == 0 {
        return Err(AlignError::Empty);
    }
    if src.rows() != tgt.rows() || src.dim != tgt.dim {
        return Err(AlignError::Dimension(format!(
            "source is {}x{}, target is {}x{}",
            src.rows(),
            src.dim,
            tgt.rows(),
            tgt.dim
        )));
    }
    let (s, t) = (src.normalized(), tgt.normalized());
    let (q, c) = match direction {
        Direction::SrcToTgt => (&s, &t),
        Direction::TgtToSrc => (&t, &s),
    };
    let hits = nearest(q, c, src.dim)
        .into_iter()
        .enumerate()
        .filter(|&(i, j)| i == j)
        .count();
    Ok(hits as f64 / src.rows() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerAlignment {
    pub layer: i32,
    pub n: usize,
    pub src_to_tgt: f64,
    pub tgt_to_src: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentReport {
    pub granularity: Granularity,
    pub layers: Vec<LayerAlignment>,
}

pub fn layerwise_report(
    src_layers: &[EmbeddingMatrix],
    tgt_layers: &[EmbeddingMatrix],
    granularity: Granularity,
) -> Result<AlignmentReport, AlignError> {
    if src_layers.len() != tgt_layers.len() {
        return Err(AlignError::Dimension(format!(
            "{} source layers but {} target layers",
            src_layers.len(),
            tgt_layers.len()
        )));
    }
    let mut layers = Vec::with_capacity(src_layers.len());
    for (s, t) in src_layers.iter().zip(tgt_layers) {
        if s.layer != t.layer {
            return Err(AlignError::Dimension(format!(
                "source layer {} paired with target layer {}",
                s.layer, t.layer
            )));
        }
        let a = p_at_1(s, t, Direction::SrcToTgt)?;
        let b = p_at_1(s, t, Direction::TgtToSrc)?;
        layers.push(LayerAlignment {
            layer: s.layer,
            n: s.rows(),
            src_to_tgt: a,
            tgt_to_src: b,
            mean: (a + b) / 2.0,
        });
    }
    Ok(AlignmentReport { granularity, layers })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerDelta {
    pub layer: i32,
    pub run: f64,
    pub baseline: f64,
    /// `run - baseline` on the mean P@1.
    pub delta: f64,
}

/// Per-layer difference of mean P@1 between two runs over the same layers.
pub fn delta_report(run: &AlignmentReport, baseline: &AlignmentReport) -> Result<Vec<LayerDelta>, AlignError> {
    let run_layers: Vec<i32> = run.layers.iter().map(|l| l.layer).collect();
    let base_layers: Vec<i32> = baseline.layers.iter().map(|l| l.layer).collect();
    if run_layers != base_layers {
        return Err(AlignError::Dimension(format!(
            "layers {run_layers:?} vs baseline layers {base_layers:?}"
        )));
    }
    Ok(run
        .layers
        .iter()
        .zip(&baseline.layers)
        .map(|(r, b)| LayerDelta {
            layer: r.layer,
            run: r.mean,
            baseline: b.mean,
            delta: r.mean - b.mean,
        })
        .collect())
}

impl AlignmentReport {
    pub fn render_human(&self, deltas: Option<&[LayerDelta]>) -> String {
        let mut s = format!("{} P@1\n", self.granularity.as_str());
        let _ = write!(
            s,
            "{:<8}{:>7}{:>12}{:>12}{:>10}",
            "layer", "N", "src->tgt", "tgt->src", "mean"
        );
        if deltas.is_some() {
            let _ = write!(s, "{:>10}", "delta");
        }
        s.push('\n');
        for (i, l) in self.layers.iter().enumerate() {
            let _ = write!(
                s,
                "{:<8}{:>7}{:>12.4}{:>12.4}{:>10.4}",
                l.layer, l.n, l.src_to_tgt, l.tgt_to_src, l.mean
            );
            if let Some(d) = deltas {
                let _ = write!(s, "{:>+10.4}", d[i].delta);
            }
            s.push('\n');
        }
        s
    }
}
