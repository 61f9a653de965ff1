//! Synthetic labelled sentence pairs over a toy vocabulary.
//!
//! Positive pairs are a sentence and a perturbed copy of it (dropped words
//! and adjacent swaps); negative pairs are two unrelated sentences. The
//! vocabulary comes with a random static embedding table.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::raw::RawPair;
use crate::text::{stem, StopList};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Positive pairs per negative pair.
    pub imbalance: f64,
    pub vocab: usize,
    pub dim: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Chance that a content word is dropped from the copy.
    pub drop_prob: f64,
    /// Adjacent swaps applied to the copy.
    pub swaps: usize,
    /// Chance of a stop word before each content word.
    pub filler_prob: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            imbalance: 4.0,
            vocab: 400,
            dim: 16,
            min_words: 5,
            max_words: 12,
            drop_prob: 0.15,
            swaps: 2,
            filler_prob: 0.2,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.imbalance > 0.0 && self.imbalance.is_finite()) {
            return Err(Error::Config("imbalance must be a positive ratio".into()));
        }
        if self.vocab < 10 || self.dim == 0 {
            return Err(Error::Config(
                "synthetic vocabulary needs >= 10 words and dim >= 1".into(),
            ));
        }
        if self.min_words < 2 || self.max_words < self.min_words {
            return Err(Error::Config("synthetic sentence length range is invalid".into()));
        }
        if !(0.0..1.0).contains(&self.drop_prob) || !(0.0..1.0).contains(&self.filler_prob) {
            return Err(Error::Config("synthetic probabilities must be in [0, 1)".into()));
        }
        Ok(())
    }
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
const FILLERS: &[&str] = &["the", "a", "of", "and", "to", "is", "was", "in", "on", "with"];

/// Words and their vectors.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    pub words: Vec<String>,
    pub table: EmbeddingTable,
}

/// Pronounceable words that survive preprocessing unchanged.
pub fn vocabulary<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Vocabulary {
    let stop = StopList::english();
    let mut seen = BTreeSet::new();
    let mut words = Vec::with_capacity(cfg.vocab);
    while words.len() < cfg.vocab {
        let syllables = rng.random_range(2..=3);
        let w: String = (0..syllables)
            .map(|_| {
                let onset = ONSETS[rng.random_range(0..ONSETS.len())];
                let vowel = VOWELS[rng.random_range(0..VOWELS.len())];
                format!("{onset}{vowel}")
            })
            .collect();
        if stem(&w) == w && !stop.contains(&w) && seen.insert(w.clone()) {
            words.push(w);
        }
    }
    let mut table = EmbeddingTable::new(cfg.dim);
    for w in &words {
        let v: Vec<f64> = (0..cfg.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        table.insert(w.clone(), v);
    }
    Vocabulary { words, table }
}

fn content_words<R: Rng + ?Sized>(vocab: &Vocabulary, cfg: &SynthConfig, rng: &mut R) -> Vec<String> {
    let n = rng.random_range(cfg.min_words..=cfg.max_words);
    (0..n)
        .map(|_| vocab.words[rng.random_range(0..vocab.words.len())].clone())
        .collect()
}

fn perturb<R: Rng + ?Sized>(words: &[String], cfg: &SynthConfig, rng: &mut R) -> Vec<String> {
    let mut out: Vec<String> = words
        .iter()
        .filter(|_| !rng.random_bool(cfg.drop_prob))
        .cloned()
        .collect();
    if out.len() < 2 {
        out = words.to_vec();
    }
    for _ in 0..cfg.swaps {
        let i = rng.random_range(0..out.len() - 1);
        out.swap(i, i + 1);
    }
    out
}

/// Renders content words as a sentence with stop words, capitalization and
/// punctuation for the preprocessor to strip.
fn render<R: Rng + ?Sized>(words: &[String], cfg: &SynthConfig, rng: &mut R) -> String {
    let mut parts = Vec::with_capacity(words.len() * 2);
    for w in words {
        if rng.random_bool(cfg.filler_prob) {
            parts.push(FILLERS[rng.random_range(0..FILLERS.len())].to_string());
        }
        parts.push(w.clone());
    }
    let mut text = parts.join(" ");
    if let Some(first) = text.get(..1) {
        text = first.to_uppercase() + &text[1..];
    }
    text.push(if rng.random_bool(0.8) { '.' } else { '!' });
    text
}

/// `n` shuffled pairs with positives and negatives in the configured ratio.
pub fn generate_pairs<R: Rng + ?Sized>(
    vocab: &Vocabulary,
    n: usize,
    cfg: &SynthConfig,
    id_prefix: &str,
    rng: &mut R,
) -> Vec<RawPair> {
    let positives = (n as f64 * cfg.imbalance / (cfg.imbalance + 1.0)).round() as usize;
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < positives)).collect();
    labels.shuffle(rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let source = content_words(vocab, cfg, rng);
            let suspicious = if label == 1 {
                perturb(&source, cfg, rng)
            } else {
                content_words(vocab, cfg, rng)
            };
            RawPair {
                id: format!("{id_prefix}{i:05}"),
                source: render(&source, cfg, rng),
                suspicious: render(&suspicious, cfg, rng),
                label,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SynthSplits {
    pub table: EmbeddingTable,
    pub train: Vec<RawPair>,
    pub valid: Vec<RawPair>,
    pub test: Vec<RawPair>,
}

/// Three splits sharing one vocabulary and table.
pub fn generate_splits(cfg: &SynthConfig, train: usize, valid: usize, test: usize) -> Result<SynthSplits> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocab = vocabulary(cfg, &mut rng);
    let split = |n: usize, stream: u64, prefix: &str| {
        let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
        r.set_stream(stream);
        generate_pairs(&vocab, n, cfg, prefix, &mut r)
    };
    let train = split(train, 1, "train-");
    let valid = split(valid, 2, "valid-");
    let test = split(test, 3, "test-");
    Ok(SynthSplits {
        table: vocab.table,
        train,
        valid,
        test,
    })
}
