use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_atomic, write_string_atomic};
use crate::metrics::{ConfusionCounts, MetricSuite};

/// How the reported numbers were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub threshold: f64,
    /// Model selection rule used during fine-tuning.
    pub model_selection: String,
    pub checkpoint_tag: String,
    pub pairs: usize,
    pub positives: usize,
    pub negatives: usize,
}

pub const MODEL_SELECTION: &str = "validation g_means";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub counts: ConfusionCounts,
    pub metrics: MetricSuite,
}

impl EvalReport {
    /// Metric rows preceded by `#` protocol lines.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let p = &self.protocol;
        writeln!(w, "# threshold={}", p.threshold)?;
        writeln!(w, "# model_selection={}", p.model_selection)?;
        writeln!(w, "# checkpoint_tag={}", p.checkpoint_tag)?;
        writeln!(
            w,
            "# pairs={} positives={} negatives={}",
            p.pairs, p.positives, p.negatives
        )?;
        self.metrics.write_csv(w)
    }

    pub fn save(&self, csv: &Path, json: &Path) -> Result<()> {
        write_atomic(csv, |w| self.write_csv(w))?;
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Numeric(e.to_string()))?;
        write_string_atomic(json, &(text + "\n"))
    }
}
