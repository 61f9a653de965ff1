//! Binary classification metrics suited to imbalanced data.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Predicts positive iff `p >= threshold` and tallies against `labels`.
pub fn confusion(probs: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionCounts> {
    if probs.len() != labels.len() {
        return Err(Error::Usage(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// A metric value; `undefined` marks a zero denominator (the value is then 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub undefined: bool,
}

impl Metric {
    fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            Metric {
                value: 0.0,
                undefined: true,
            }
        } else {
            Metric {
                value: num as f64 / den as f64,
                undefined: false,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSuite {
    pub accuracy: Metric,
    pub recall: Metric,
    pub precision: Metric,
    pub specificity: Metric,
    pub f_measure: Metric,
    pub g_means: Metric,
}

pub fn metric_suite(c: &ConfusionCounts) -> MetricSuite {
    let accuracy = Metric::ratio(c.tp + c.tn, c.total());
    let recall = Metric::ratio(c.tp, c.tp + c.fn_);
    let precision = Metric::ratio(c.tp, c.tp + c.fp);
    let specificity = Metric::ratio(c.tn, c.tn + c.fp);
    // 2PR/(P+R) simplifies to 2TP/(2TP+FP+FN) on counts
    let f_measure = if recall.undefined || precision.undefined {
        Metric {
            value: 0.0,
            undefined: true,
        }
    } else {
        Metric::ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_)
    };
    let g_means = Metric {
        value: (recall.value * specificity.value).sqrt(),
        undefined: recall.undefined || specificity.undefined,
    };
    MetricSuite {
        accuracy,
        recall,
        precision,
        specificity,
        f_measure,
        g_means,
    }
}

impl MetricSuite {
    pub fn rows(&self) -> [(&'static str, Metric); 6] {
        [
            ("accuracy", self.accuracy),
            ("recall", self.recall),
            ("precision", self.precision),
            ("specificity", self.specificity),
            ("f_measure", self.f_measure),
            ("g_means", self.g_means),
        ]
    }

    /// `metric,value,undefined` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "metric,value,undefined")?;
        for (name, m) in self.rows() {
            writeln!(w, "{name},{},{}", m.value, m.undefined)?;
        }
        Ok(())
    }
}
