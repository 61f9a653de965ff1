//! Plain-text checkpoints: a one-line JSON header followed by one parameter
//! per line in manifest order.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{unflatten, Manifest, ModelParams, ParamVector, ORDERING_VERSION};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const CHECKPOINT_FORMAT: &str = "pd-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub ordering_version: u32,
    /// Free-form stage label such as `pretrained` or `finetuned`.
    pub tag: String,
    pub seq_len: usize,
    pub manifest: Manifest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tag: String,
    pub seq_len: usize,
    pub params: ParamVector,
}

impl Checkpoint {
    pub fn new(tag: impl Into<String>, seq_len: usize, params: ParamVector) -> Self {
        Self {
            tag: tag.into(),
            seq_len,
            params,
        }
    }

    pub fn model(&self) -> Result<ModelParams> {
        unflatten(&self.params.values, &self.params.manifest)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            ordering_version: self.params.manifest.ordering_version,
            tag: self.tag.clone(),
            seq_len: self.seq_len,
            manifest: self.params.manifest.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for v in &self.params.values {
            // shortest representation that parses back to the same bits
            writeln!(w, "{v:e}")?;
        }
        Ok(())
    }

    pub fn parse<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let mut lines = reader.lines();
        let first = match lines.next() {
            Some(line) => line.map_err(|e| Error::io(path, e))?,
            None => return Err(Error::format(path, 1, "empty checkpoint")),
        };
        let header: CheckpointHeader =
            serde_json::from_str(&first).map_err(|e| Error::format(path, 1, format!("bad header: {e}")))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::format(path, 1, format!("unknown format {:?}", header.format)));
        }
        if header.ordering_version != ORDERING_VERSION || header.manifest.ordering_version != ORDERING_VERSION {
            return Err(Error::format(
                path,
                1,
                format!(
                    "ordering version {} is not supported (expected {ORDERING_VERSION})",
                    header.ordering_version
                ),
            ));
        }
        header
            .manifest
            .validate()
            .map_err(|e| Error::format(path, 1, e.to_string()))?;
        let expected = header.manifest.dimension();
        let mut values = Vec::with_capacity(expected);
        for (k, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            let v: f64 = text
                .parse()
                .map_err(|_| Error::format(path, k + 2, format!("not a number: {text:?}")))?;
            if !v.is_finite() {
                return Err(Error::format(path, k + 2, "non-finite parameter"));
            }
            values.push(v);
        }
        if values.len() != expected {
            return Err(Error::format(
                path,
                values.len() + 2,
                format!("expected {expected} parameters, found {}", values.len()),
            ));
        }
        Ok(Checkpoint {
            tag: header.tag,
            seq_len: header.seq_len,
            params: ParamVector {
                values,
                manifest: header.manifest,
            },
        })
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    write_atomic(path, |w| checkpoint.write(w))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::parse(BufReader::new(file), path)
}

impl From<Checkpoint> for ParamVector {
    fn from(c: Checkpoint) -> Self {
        c.params
    }
}
