use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Population;
use crate::error::Result;
use crate::io::write_atomic;

/// One generation of an optimizer run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub generation: u64,
    pub fes_used: usize,
    pub best_objective: f64,
    pub mean_objective: f64,
}

impl TraceRow {
    pub fn new(generation: u64, pop: &Population) -> Self {
        Self {
            generation,
            fes_used: pop.fes_used,
            best_objective: pop.best.1,
            mean_objective: pop.mean_objective(),
        }
    }
}

pub const TRACE_HEADER: &str = "generation,fes_used,best_objective,mean_objective";

pub fn write_trace<W: Write>(mut w: W, rows: &[TraceRow]) -> std::io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:e},{:e}",
            r.generation, r.fes_used, r.best_objective, r.mean_objective
        )?;
    }
    Ok(())
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_atomic(path, |w| write_trace(w, rows))
}
