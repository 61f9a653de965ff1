//! Cross-entropy, focal loss and the evolutionary pre-training objective.
//!
//! Labels are `0` (unrelated) and `1` (plagiarized) everywhere.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::PairDataset;
use crate::error::{Error, Result};
use crate::network::{predict, unflatten, ModelParams, ParamVector};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-12;

/// Added to the objective in [`fitness`].
pub const FITNESS_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalConfig {
    pub gamma: f64,
    /// Weight of the positive class; negatives get `1 - alpha`.
    pub alpha: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        Self { gamma: 2.0, alpha: 0.5 }
    }
}

impl FocalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("focal gamma must be >= 0, got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "focal alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    fn alpha_t(&self, y: u8) -> f64 {
        if y == 1 {
            self.alpha
        } else {
            1.0 - self.alpha
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LossKind {
    #[serde(rename = "ce")]
    CrossEntropy,
    #[default]
    #[serde(rename = "fl")]
    Focal,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ce" | "cross-entropy" | "cross_entropy" => Ok(LossKind::CrossEntropy),
            "fl" | "focal" => Ok(LossKind::Focal),
            other => Err(Error::Config(format!("unknown loss {other:?} (expected ce or fl)"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::CrossEntropy => "ce",
            LossKind::Focal => "fl",
        })
    }
}

fn clamp(p: f64) -> f64 {
    p.clamp(EPS, 1.0 - EPS)
}

/// Probability assigned to the true class.
pub fn p_true(p: f64, y: u8) -> f64 {
    if y == 1 {
        p
    } else {
        1.0 - p
    }
}

pub fn cross_entropy(p: f64, y: u8) -> f64 {
    -p_true(clamp(p), y).ln()
}

/// `d cross_entropy / dp`, evaluated at the clamped probability.
pub fn cross_entropy_grad(p: f64, y: u8) -> f64 {
    let p = clamp(p);
    if y == 1 {
        -1.0 / p
    } else {
        1.0 / (1.0 - p)
    }
}

pub fn focal_loss(p: f64, y: u8, cfg: FocalConfig) -> f64 {
    let pt = p_true(clamp(p), y);
    -cfg.alpha_t(y) * (1.0 - pt).powf(cfg.gamma) * pt.ln()
}

/// `d focal_loss / dp`, evaluated at the clamped probability.
pub fn focal_loss_grad(p: f64, y: u8, cfg: FocalConfig) -> f64 {
    let pt = p_true(clamp(p), y);
    let q = 1.0 - pt;
    let mut d_pt = -q.powf(cfg.gamma) / pt;
    if cfg.gamma != 0.0 {
        d_pt += cfg.gamma * q.powf(cfg.gamma - 1.0) * pt.ln();
    }
    let sign = if y == 1 { 1.0 } else { -1.0 };
    cfg.alpha_t(y) * d_pt * sign
}

/// A training loss selected at run time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loss {
    pub kind: LossKind,
    pub focal: FocalConfig,
}

impl Loss {
    pub fn value(&self, p: f64, y: u8) -> f64 {
        match self.kind {
            LossKind::CrossEntropy => cross_entropy(p, y),
            LossKind::Focal => focal_loss(p, y, self.focal),
        }
    }

    pub fn grad(&self, p: f64, y: u8) -> f64 {
        match self.kind {
            LossKind::CrossEntropy => cross_entropy_grad(p, y),
            LossKind::Focal => focal_loss_grad(p, y, self.focal),
        }
    }
}

/// `Σ (y_i - p_i)²` over `data`. Pairs are scored in parallel and summed in
/// dataset order, so the result does not depend on the thread count.
pub fn de_objective(params: &ModelParams, data: &PairDataset) -> Result<f64> {
    let errors: Vec<f64> = data
        .pairs
        .par_iter()
        .map(|pair| predict(pair, params).map(|p| (pair.target() - p).powi(2)))
        .collect::<Result<_>>()?;
    Ok(errors.iter().sum())
}

/// [`de_objective`] on a flat vector laid out by its manifest.
pub fn de_objective_vector(params: &ParamVector, data: &PairDataset) -> Result<f64> {
    de_objective(&unflatten(&params.values, &params.manifest)?, data)
}

/// Reporting transform of the objective, `1 / (1e-8 + objective)`.
pub fn fitness(objective: f64) -> f64 {
    1.0 / (FITNESS_EPS + objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{Sentence, SentencePair};
    use crate::network::ModelShape;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn cross_entropy_examples() {
        assert_relative_eq!(cross_entropy(0.5, 1), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(cross_entropy(0.5, 0), 2f64.ln(), epsilon = 1e-15);
        assert!(cross_entropy(1.0 - EPS, 1) < 1e-11);
        assert_relative_eq!(cross_entropy(0.9, 0), 2.302585, epsilon = 1e-6);
        assert!(cross_entropy(0.0, 1).is_finite());
    }

    #[test]
    fn focal_examples() {
        let unit = |gamma| FocalConfig { gamma, alpha: 1.0 };
        assert_relative_eq!(focal_loss(0.9, 1, unit(2.0)), 0.00105361, epsilon = 1e-8);
        assert_relative_eq!(focal_loss(0.5, 1, unit(2.0)), 0.173287, epsilon = 1e-6);
        let half = FocalConfig { gamma: 0.0, alpha: 0.5 };
        for p in [0.01, 0.3, 0.77] {
            for y in [0, 1] {
                assert_relative_eq!(focal_loss(p, y, half), 0.5 * cross_entropy(p, y), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn loss_kind_parses() {
        assert_eq!("FL".parse::<LossKind>().unwrap(), LossKind::Focal);
        assert_eq!("ce".parse::<LossKind>().unwrap(), LossKind::CrossEntropy);
        assert!("dice".parse::<LossKind>().is_err());
        assert_eq!(serde_json::to_string(&LossKind::Focal).unwrap(), "\"fl\"");
    }

    #[test]
    fn fitness_examples() {
        assert_relative_eq!(fitness(0.0), 1e8, max_relative = 1e-12);
        assert_relative_eq!(fitness(1.0), 0.99999999, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn unit_weight_gamma_zero_is_cross_entropy(p in 1e-6f64..(1.0 - 1e-6), y in 0u8..2) {
            // alpha_t = 1 for the pair's own class
            let alpha = if y == 1 { 1.0 } else { 0.0 };
            let cfg = FocalConfig { gamma: 0.0, alpha };
            let a = focal_loss(p, y, cfg);
            let b = cross_entropy(p, y);
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn focal_is_nonnegative_and_decreasing_in_pt(
            a in 0.001f64..0.999, b in 0.001f64..0.999, gamma in 0.0f64..5.0, alpha in 0.0f64..1.0,
        ) {
            let cfg = FocalConfig { gamma, alpha };
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            for y in [0u8, 1] {
                // p_t = lo vs p_t = hi
                let at = |pt: f64| focal_loss(if y == 1 { pt } else { 1.0 - pt }, y, cfg);
                prop_assert!(at(lo) >= 0.0);
                prop_assert!(at(hi) <= at(lo) + 1e-15);
            }
        }

        #[test]
        fn focal_decreases_with_gamma(pt in 0.001f64..0.999, g1 in 0.0f64..5.0, g2 in 0.0f64..5.0) {
            let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
            let at = |gamma| focal_loss(pt, 1, FocalConfig { gamma, alpha: 0.7 });
            prop_assert!(at(hi) <= at(lo) + 1e-15);
        }

        #[test]
        fn focal_grad_matches_finite_differences(
            p in 0.01f64..0.99, y in 0u8..2, gamma in 0.0f64..4.0, alpha in 0.05f64..1.0,
        ) {
            let cfg = FocalConfig { gamma, alpha };
            let analytic = focal_loss_grad(p, y, cfg);
            let numeric = central(|q| focal_loss(q, y, cfg), p, 1e-6);
            let rel = (analytic - numeric).abs() / analytic.abs().max(1e-8);
            prop_assert!(rel <= 1e-6, "analytic {} numeric {}", analytic, numeric);
        }

        #[test]
        fn ce_grad_matches_finite_differences(p in 0.01f64..0.99, y in 0u8..2) {
            let analytic = cross_entropy_grad(p, y);
            let numeric = central(|q| cross_entropy(q, y), p, 1e-6);
            prop_assert!((analytic - numeric).abs() / analytic.abs() <= 1e-6);
        }

        #[test]
        fn fitness_reverses_objective_order(a in 0.0f64..1e6, b in 0.0f64..1e6) {
            prop_assume!(a != b);
            prop_assert_eq!(a < b, fitness(a) > fitness(b));
        }
    }

    fn random_dataset(seed: u64, n: usize) -> (ModelParams, PairDataset) {
        let shape = ModelShape::new(3, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::random(&shape, &mut rng);
        let pairs = (0..n)
            .map(|k| {
                let mut sent = |len: usize| {
                    let v: Vec<Vec<f64>> = (0..len)
                        .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
                        .collect();
                    Sentence::from_vectors(&v, 3, 4)
                };
                let source = sent(3);
                let suspicious = sent(2);
                SentencePair {
                    id: k.to_string(),
                    label: (k % 2) as u8,
                    source,
                    suspicious,
                }
            })
            .collect();
        (params, PairDataset::new(pairs, 3, 4).unwrap())
    }

    #[test]
    fn objective_is_per_pair_sum() {
        let (params, data) = random_dataset(5, 5);
        let mut expected = 0.0;
        for pair in &data.pairs {
            let p = predict(pair, &params).unwrap();
            let y = if pair.label == 1 { 1.0 } else { 0.0 };
            expected += (y - p) * (y - p);
        }
        let got = de_objective(&params, &data).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!(got > 0.0);
    }

    #[test]
    fn single_pair_at_half_is_a_quarter() {
        // an all-zero head outputs exactly 0.5
        let (params, data) = random_dataset(1, 1);
        let mut params = params;
        params.head = ModelParams::zeros(&params.shape).head;
        let data = PairDataset::new(
            vec![SentencePair {
                label: 1,
                ..data.pairs[0].clone()
            }],
            3,
            4,
        )
        .unwrap();
        assert_eq!(de_objective(&params, &data).unwrap(), 0.25);
    }
}
