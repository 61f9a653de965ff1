//! Standard test functions for the optimizer benchmark mode.

use serde::{Deserialize, Serialize};

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}

pub fn rastrigin(x: &[f64]) -> f64 {
    use std::f64::consts::PI;
    10.0 * x.len() as f64 + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchFunction {
    Sphere,
    Rosenbrock,
    Rastrigin,
}

impl BenchFunction {
    pub const ALL: [BenchFunction; 3] = [
        BenchFunction::Sphere,
        BenchFunction::Rosenbrock,
        BenchFunction::Rastrigin,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BenchFunction::Sphere => "sphere",
            BenchFunction::Rosenbrock => "rosenbrock",
            BenchFunction::Rastrigin => "rastrigin",
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            BenchFunction::Sphere => sphere(x),
            BenchFunction::Rosenbrock => rosenbrock(x),
            BenchFunction::Rastrigin => rastrigin(x),
        }
    }

    /// Conventional search box for each coordinate.
    pub fn bounds(&self, dim: usize) -> Vec<(f64, f64)> {
        let b = match self {
            BenchFunction::Sphere => (-5.0, 5.0),
            BenchFunction::Rosenbrock => (-2.048, 2.048),
            BenchFunction::Rastrigin => (-5.12, 5.12),
        };
        vec![b; dim]
    }
}

impl std::str::FromStr for BenchFunction {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        BenchFunction::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| crate::Error::Config(format!("unknown benchmark function {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optima_are_zero() {
        assert_eq!(sphere(&[0.0; 5]), 0.0);
        assert_eq!(rosenbrock(&[1.0; 5]), 0.0);
        assert!(rastrigin(&[0.0; 5]).abs() < 1e-12);
    }

    #[test]
    fn known_values() {
        assert_eq!(sphere(&[1.0, 2.0]), 5.0);
        // 100 (1 - 0)^2 + (1 - 0)^2
        assert_eq!(rosenbrock(&[0.0, 1.0]), 101.0);
        assert!((rastrigin(&[1.0]) - 1.0).abs() < 1e-12);
        assert!((rastrigin(&[0.5]) - 20.25).abs() < 1e-12);
    }

    #[test]
    fn names_round_trip() {
        for f in BenchFunction::ALL {
            assert_eq!(f.name().parse::<BenchFunction>().unwrap(), f);
        }
    }
}
