//! Raw sentence pairs as tab-separated text: `id, source_text,
//! suspicious_text, label`, with an optional header row.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const TSV_HEADER: &str = "id\tsource_text\tsuspicious_text\tlabel";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPair {
    pub id: String,
    pub source: String,
    pub suspicious: String,
    pub label: u8,
}

pub fn parse_tsv<R: BufRead>(reader: R, path: &Path) -> Result<Vec<RawPair>> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (lineno == 1 && line == TSV_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::format(
                path,
                lineno,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let label = match fields[3].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::format(path, lineno, format!("label {other:?} is not 0 or 1"))),
        };
        rows.push(RawPair {
            id: fields[0].to_string(),
            source: fields[1].to_string(),
            suspicious: fields[2].to_string(),
            label,
        });
    }
    Ok(rows)
}

pub fn load_tsv(path: &Path) -> Result<Vec<RawPair>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_tsv(BufReader::new(file), path)
}

pub fn write_tsv<W: Write>(mut w: W, rows: &[RawPair]) -> std::io::Result<()> {
    writeln!(w, "{TSV_HEADER}")?;
    for r in rows {
        for field in [&r.id, &r.source, &r.suspicious] {
            if field.contains(['\t', '\n', '\r']) {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidInput,
                    format!("pair {} has a tab or newline inside a field", r.id),
                ));
            }
        }
        writeln!(w, "{}\t{}\t{}\t{}", r.id, r.source, r.suspicious, r.label)?;
    }
    Ok(())
}
