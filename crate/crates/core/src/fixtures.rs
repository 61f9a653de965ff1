//! Published split sizes of public paraphrase corpora, kept as reference
//! values for class-ratio computations.

use crate::embedding::ClassCounts;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitFixture {
    pub corpus: &'static str,
    pub split: &'static str,
    pub total: usize,
    /// Pairs labelled as paraphrase (positive).
    pub positives: usize,
}

impl SplitFixture {
    pub fn class_counts(&self) -> ClassCounts {
        ClassCounts {
            positives: self.positives,
            negatives: self.total - self.positives,
        }
    }
}

/// Microsoft Research Paraphrase Corpus, training split.
pub const MSRP_TRAIN: SplitFixture = SplitFixture {
    corpus: "msrp",
    split: "train",
    total: 4076,
    positives: 2753,
};

/// Microsoft Research Paraphrase Corpus, test split.
pub const MSRP_TEST: SplitFixture = SplitFixture {
    corpus: "msrp",
    split: "test",
    total: 1726,
    positives: 1147,
};
