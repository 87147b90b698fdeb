//! Risk/improvement trade-off: SCM identification, offline fronts, and the
//! exploration pipeline for linear SCMs with linear costs.

mod explore;
mod front;
mod identify;
mod objective;
mod qp;

use serde::{Deserialize, Serialize};

pub use explore::{
    explore_linear, linear_front, min_mse_given_intervention, CatalogEntry, ExploreOptions, InterventionCatalog, MinMse,
};
pub use front::{default_lambda_grid, offline_front, FrontOptions, FrontReport, LambdaRun};
pub use identify::identify_scm;
pub use objective::{
    distribution_risk, linear_risk, objective_gradient, risk_improvement, ObjectiveValue, RiskImprovement,
};
pub use qp::{solve_qp, QpSolution};

/// One mechanism with its risk and improvement. Risk is the mean squared
/// error at the best intercept, i.e. the variance of `w^T X̃ - Ỹ` under the
/// induced distribution; an intercept never changes a best response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    /// Feature weights.
    pub w: Vec<f64>,
    pub risk: f64,
    pub improvement: f64,
}

/// Non-dominated points sorted by increasing risk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Front {
    pub points: Vec<ParetoPoint>,
}

impl Front {
    /// `lambda, w1..wn, risk, improvement` rows; `lambda` is empty when unknown.
    pub fn write_csv<W: std::io::Write>(&self, out: W, lambdas: Option<&[f64]>) -> crate::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let n = self.points.first().map(|p| p.w.len()).unwrap_or(0);
        let mut header = vec!["lambda".to_string()];
        header.extend((1..=n).map(|i| format!("w{i}")));
        header.push("risk".into());
        header.push("improvement".into());
        wtr.write_record(&header)?;
        for (k, p) in self.points.iter().enumerate() {
            let mut row = vec![lambdas
                .and_then(|l| l.get(k))
                .map(|l| l.to_string())
                .unwrap_or_default()];
            row.extend(p.w.iter().map(|v| v.to_string()));
            row.push(p.risk.to_string());
            row.push(p.improvement.to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `q` dominates `p` when it has no more risk, no less improvement, and is
/// strictly better in one of the two.
pub fn dominates(q: &ParetoPoint, p: &ParetoPoint) -> bool {
    q.risk <= p.risk && q.improvement >= p.improvement && (q.risk < p.risk || q.improvement > p.improvement)
}

/// The non-dominated subset, sorted by risk. Exact duplicates are all kept
/// since neither dominates the other.
pub fn pareto_filter(mut points: Vec<ParetoPoint>) -> Front {
    points.retain(|p| p.risk.is_finite() && p.improvement.is_finite());
    points.sort_by(|a, b| a.risk.total_cmp(&b.risk).then(b.improvement.total_cmp(&a.improvement)));
    let mut kept = Vec::new();
    // Best improvement so far and the smallest risk attaining it.
    let mut best: Option<(f64, f64)> = None;
    for p in points {
        let keep = match best {
            None => true,
            Some((imp, risk)) => p.improvement > imp || (p.improvement == imp && p.risk == risk),
        };
        if keep {
            if best.map_or(true, |(imp, _)| p.improvement > imp) {
                best = Some((p.improvement, p.risk));
            }
            kept.push(p);
        }
    }
    Front { points: kept }
}
