use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Joint law of `(X̃, Ỹ)` after agents respond to a mechanism.
#[derive(Debug, Clone, PartialEq)]
pub enum InducedDistribution {
    /// Population moments. `shift` is the mean minus the natural mean.
    Exact {
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        shift: DVector<f64>,
    },
    /// Observed rows `(x̃_1..x̃_n, ỹ)`.
    Empirical {
        samples: DMatrix<f64>,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
    },
}

impl InducedDistribution {
    pub fn exact(mean: DVector<f64>, cov: DMatrix<f64>, natural_mean: Option<&DVector<f64>>) -> Self {
        let shift = match natural_mean {
            Some(m0) => &mean - m0,
            None => DVector::zeros(mean.len()),
        };
        InducedDistribution::Exact { mean, cov, shift }
    }

    pub fn empirical(samples: DMatrix<f64>) -> Result<Self> {
        if samples.nrows() < 2 {
            return Err(Error::InvalidModel(
                "empirical distribution needs at least 2 rows".into(),
            ));
        }
        let (mean, cov) = linalg::sample_moments(&samples);
        Ok(InducedDistribution::Empirical { samples, mean, cov })
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, InducedDistribution::Exact { .. })
    }

    pub fn node_count(&self) -> usize {
        self.mean().len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        match self {
            InducedDistribution::Exact { mean, .. } | InducedDistribution::Empirical { mean, .. } => mean,
        }
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        match self {
            InducedDistribution::Exact { cov, .. } | InducedDistribution::Empirical { cov, .. } => cov,
        }
    }

    /// Number of observed rows; `None` for exact moments.
    pub fn count(&self) -> Option<usize> {
        match self {
            InducedDistribution::Exact { .. } => None,
            InducedDistribution::Empirical { samples, .. } => Some(samples.nrows()),
        }
    }

    pub fn samples(&self) -> Option<&DMatrix<f64>> {
        match self {
            InducedDistribution::Exact { .. } => None,
            InducedDistribution::Empirical { samples, .. } => Some(samples),
        }
    }

    /// Variance of the estimate of `E[V]` (zero for exact moments).
    pub fn mean_variance(&self, v: usize) -> f64 {
        match self {
            InducedDistribution::Exact { .. } => 0.0,
            InducedDistribution::Empirical { samples, cov, .. } => cov[(v, v)] / samples.nrows() as f64,
        }
    }

    /// `E[Z Z^T]` over all nodes.
    pub fn second_moment(&self) -> DMatrix<f64> {
        let m = self.mean();
        self.cov() + m * m.transpose()
    }

    pub fn summary(&self) -> DistributionSummary {
        DistributionSummary {
            kind: if self.is_exact() { "exact" } else { "empirical" }.to_string(),
            count: self.count(),
            mean: self.mean().iter().copied().collect(),
            variance: (0..self.node_count()).map(|j| self.cov()[(j, j)]).collect(),
        }
    }

    /// Moments-only record (samples dropped).
    pub fn to_moments(&self) -> MomentsRecord {
        let m = self.node_count();
        MomentsRecord {
            mean: self.mean().iter().copied().collect(),
            cov: (0..m).map(|i| (0..m).map(|j| self.cov()[(i, j)]).collect()).collect(),
        }
    }
}

/// Compact description for logs and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Serializable exact moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsRecord {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl MomentsRecord {
    pub fn into_distribution(self, natural_mean: Option<&DVector<f64>>) -> Result<InducedDistribution> {
        let m = self.mean.len();
        if self.cov.len() != m || self.cov.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidModel("moments record has inconsistent dimensions".into()));
        }
        let mean = DVector::from_vec(self.mean);
        let cov = DMatrix::from_fn(m, m, |i, j| self.cov[i][j]);
        Ok(InducedDistribution::exact(mean, cov, natural_mean))
    }
}
