//! Embedding sources and fixed-length sentence tensors.
//!
//! Two on-disk formats are understood:
//!
//! * a text embedding table: the first line holds the dimension, every
//!   following line is a token followed by that many decimal floats;
//! * a JSONL pair dataset, one object per line:
//!   `{"id": .., "label": 0|1, "source": [[..],..], "suspicious": [[..],..]}`.
//!
//! Sentences are right-padded with zero vectors (or truncated) to a common
//! length and carry a mask marking the real positions.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::TokenList;

/// Default padded sentence length.
pub const DEFAULT_SEQ_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
    oov: Vec<f64>,
}

impl EmbeddingTable {
    /// An empty table whose out-of-vocabulary vector is zero.
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            entries: HashMap::new(),
            oov: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts or replaces a vector. Returns false (and leaves the table
    /// untouched) if the length does not match `dim`.
    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> bool {
        if vector.len() != self.dim {
            return false;
        }
        self.entries.insert(token.into(), vector);
        true
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn lookup(&self, token: &str) -> &[f64] {
        self.get(token).unwrap_or(&self.oov)
    }

    pub fn oov_vector(&self) -> &[f64] {
        &self.oov
    }

    pub fn parse<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(l) => l.map_err(|e| Error::io(path, e))?,
            None => return Err(Error::format(path, 1, "missing dimension header")),
        };
        let dim: usize = header
            .trim()
            .parse()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::format(path, 1, format!("bad dimension header {header:?}")))?;
        let mut table = EmbeddingTable::new(dim);
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().unwrap_or_default();
            let vector = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format(path, lineno, format!("bad float: {e}")))?;
            if vector.len() != dim {
                return Err(Error::format(
                    path,
                    lineno,
                    format!("expected {dim} values for {token:?}, found {}", vector.len()),
                ));
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(path, lineno, "non-finite value"));
            }
            if table.entries.insert(token.to_string(), vector).is_some() {
                log::warn!(
                    "{}:{lineno}: duplicate token {token:?}, keeping the last",
                    path.display()
                );
            }
        }
        Ok(table)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.dim)?;
        let mut tokens: Vec<&String> = self.entries.keys().collect();
        tokens.sort();
        for token in tokens {
            write!(w, "{token}")?;
            for v in &self.entries[token] {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn load_table(path: &Path) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    EmbeddingTable::parse(BufReader::new(file), path)
}

/// A padded sentence: `len` vectors of size `dim`, stored row-major, and a
/// mask of real positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    dim: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl Sentence {
    /// Builds a sentence from real token vectors, truncating or zero-padding
    /// to `len` positions.
    pub fn from_vectors<V: AsRef<[f64]>>(vectors: &[V], dim: usize, len: usize) -> Self {
        let mut values = vec![0.0; len * dim];
        let mut mask = vec![false; len];
        for (t, v) in vectors.iter().take(len).enumerate() {
            values[t * dim..(t + 1) * dim].copy_from_slice(v.as_ref());
            mask[t] = true;
        }
        Sentence { dim, values, mask }
    }

    /// Explicit constructor; `values.len()` must equal `mask.len() * dim`.
    pub fn with_mask(dim: usize, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != mask.len() * dim {
            return Err(Error::Usage(format!(
                "sentence has {} values for {} positions of dim {dim}",
                values.len(),
                mask.len()
            )));
        }
        Ok(Sentence { dim, values, mask })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Padded length.
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn vector(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Vectors at unmasked positions, in order.
    pub fn real_vectors(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).filter(|&t| self.mask[t]).map(|t| self.vector(t))
    }

    /// The same sentence padded or truncated to `len` positions.
    pub fn resized(&self, len: usize) -> Sentence {
        let real: Vec<&[f64]> = self.real_vectors().collect();
        Sentence::from_vectors(&real, self.dim, len)
    }
}

/// Looks every token up (misses map to the table's OOV vector), then
/// truncates or zero-pads to `len` positions.
pub fn embed_sentence(tokens: &TokenList, table: &EmbeddingTable, len: usize) -> Sentence {
    let vectors: Vec<&[f64]> = tokens.iter().map(|t| table.lookup(t)).collect();
    Sentence::from_vectors(&vectors, table.dim(), len)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentencePair {
    pub id: String,
    /// 1 = copied (plagiarized), 0 = unrelated.
    pub label: u8,
    pub source: Sentence,
    pub suspicious: Sentence,
}

impl SentencePair {
    pub fn target(&self) -> f64 {
        f64::from(self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub positives: usize,
    pub negatives: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.positives + self.negatives
    }

    /// Inverse class frequency of the positive class, `N_neg / N`, used as the
    /// default focal-loss alpha.
    pub fn inverse_frequency_alpha(&self) -> f64 {
        if self.total() == 0 {
            return 0.5;
        }
        self.negatives as f64 / self.total() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    pub pairs: Vec<SentencePair>,
    pub dim: usize,
    pub len: usize,
}

impl PairDataset {
    pub fn new(pairs: Vec<SentencePair>, dim: usize, len: usize) -> Result<Self> {
        for p in &pairs {
            for s in [&p.source, &p.suspicious] {
                if s.dim() != dim || s.len() != len {
                    return Err(Error::Usage(format!(
                        "pair {:?} has shape {}x{}, dataset is {len}x{dim}",
                        p.id,
                        s.len(),
                        s.dim()
                    )));
                }
            }
            if p.label > 1 {
                return Err(Error::Usage(format!("pair {:?} has label {}", p.id, p.label)));
            }
        }
        Ok(PairDataset { pairs, dim, len })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn class_counts(&self) -> ClassCounts {
        let positives = self.pairs.iter().filter(|p| p.label == 1).count();
        ClassCounts {
            positives,
            negatives: self.pairs.len() - positives,
        }
    }

    pub fn labels(&self) -> Vec<u8> {
        self.pairs.iter().map(|p| p.label).collect()
    }

    /// Training splits need both classes present.
    pub fn require_both_classes(&self, what: &str) -> Result<()> {
        let c = self.class_counts();
        if c.positives == 0 || c.negatives == 0 {
            return Err(Error::Config(format!(
                "{what} split needs both classes, has {} positive / {} negative",
                c.positives, c.negatives
            )));
        }
        Ok(())
    }

    /// A subset by index, in the given order.
    pub fn subset(&self, indices: &[usize]) -> PairDataset {
        PairDataset {
            pairs: indices.iter().map(|&i| self.pairs[i].clone()).collect(),
            dim: self.dim,
            len: self.len,
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for p in &self.pairs {
            let record = PairRecord {
                id: p.id.clone(),
                label: i64::from(p.label),
                source: p.source.real_vectors().map(<[f64]>::to_vec).collect(),
                suspicious: p.suspicious.real_vectors().map(<[f64]>::to_vec).collect(),
            };
            serde_json::to_writer(&mut w, &record)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn parse_jsonl<R: BufRead>(reader: R, path: &Path, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Usage("sequence length must be at least 1".into()));
        }
        let mut pairs = Vec::new();
        let mut dim: Option<usize> = None;
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: PairRecord = serde_json::from_str(&line)
                .map_err(|e| Error::format(path, lineno, format!("malformed record: {e}")))?;
            let label = match record.label {
                0 => 0u8,
                1 => 1u8,
                other => return Err(Error::format(path, lineno, format!("label {other} is not 0 or 1"))),
            };
            for (side, vectors) in [("source", &record.source), ("suspicious", &record.suspicious)] {
                if vectors.is_empty() {
                    return Err(Error::format(path, lineno, format!("{side} sentence is empty")));
                }
                for v in vectors {
                    let d = *dim.get_or_insert(v.len());
                    if v.len() != d || d == 0 {
                        return Err(Error::format(
                            path,
                            lineno,
                            format!("{side} vector has length {}, expected {d}", v.len()),
                        ));
                    }
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::format(path, lineno, "non-finite value"));
                    }
                }
            }
            let d = dim.expect("set above");
            pairs.push(SentencePair {
                id: record.id,
                label,
                source: Sentence::from_vectors(&record.source, d, len),
                suspicious: Sentence::from_vectors(&record.suspicious, d, len),
            });
        }
        Ok(PairDataset {
            pairs,
            dim: dim.unwrap_or(0),
            len,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PairRecord {
    id: String,
    label: i64,
    source: Vec<Vec<f64>>,
    suspicious: Vec<Vec<f64>>,
}

/// Loads a JSONL pair dataset, padding/truncating every sentence to `len`.
pub fn load_pair_dataset(path: &Path, len: usize) -> Result<PairDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    PairDataset::parse_jsonl(BufReader::new(file), path, len)
}

pub fn write_pair_dataset(path: &Path, data: &PairDataset) -> Result<()> {
    crate::io::write_atomic(path, |w| data.write_jsonl(w))
}
