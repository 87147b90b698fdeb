use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distribution of one exogenous noise term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSpec {
    Gaussian {
        mean: f64,
        variance: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// `value_hi` with probability `p`, otherwise `value_lo`.
    TwoPoint {
        value_hi: f64,
        value_lo: f64,
        p: f64,
    },
}

impl NoiseSpec {
    pub fn standard_normal() -> Self {
        NoiseSpec::Gaussian {
            mean: 0.0,
            variance: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseSpec::Gaussian { mean, variance } => mean.is_finite() && variance.is_finite() && variance >= 0.0,
            NoiseSpec::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            NoiseSpec::TwoPoint { value_hi, value_lo, p } => {
                value_hi.is_finite() && value_lo.is_finite() && (0.0..=1.0).contains(&p)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!("invalid noise spec {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NoiseSpec::Gaussian { mean, .. } => mean,
            NoiseSpec::Uniform { lo, hi } => 0.5 * (lo + hi),
            NoiseSpec::TwoPoint { value_hi, value_lo, p } => p * value_hi + (1.0 - p) * value_lo,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            NoiseSpec::Gaussian { variance, .. } => variance,
            NoiseSpec::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            NoiseSpec::TwoPoint { value_hi, value_lo, p } => p * (1.0 - p) * (value_hi - value_lo).powi(2),
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, NoiseSpec::Gaussian { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseSpec::Gaussian { mean, variance } => {
                if variance == 0.0 {
                    mean
                } else {
                    // validated: variance finite and positive
                    Normal::new(mean, variance.sqrt()).expect("valid normal").sample(rng)
                }
            }
            NoiseSpec::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.gen_range(lo..hi)
                }
            }
            NoiseSpec::TwoPoint { value_hi, value_lo, p } => {
                if rng.gen::<f64>() < p {
                    value_hi
                } else {
                    value_lo
                }
            }
        }
    }
}
