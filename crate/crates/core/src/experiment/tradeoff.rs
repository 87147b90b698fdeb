use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::agents::CostSpec;
use crate::error::Result;
use crate::graph::NodeId;
use crate::pareto::{linear_risk, risk_improvement};
use crate::scm::{LinearScm, NoiseSpec};

/// `x1 -> y -> x2` with unit weight on `x1 -> y` and `alpha2` on `y -> x2`,
/// Gaussian noise variances `(v1, v2, vy)`. Node order is `(x1, x2, y)`.
pub fn example_scm(alpha2: f64, v1: f64, v2: f64, vy: f64) -> Result<LinearScm> {
    let g = |variance| NoiseSpec::Gaussian { mean: 0.0, variance };
    LinearScm::from_edges(
        2,
        &[(NodeId(0), NodeId(2), 1.0), (NodeId(2), NodeId(1), alpha2)],
        vec![g(v1), g(v2), g(vy)],
    )
}

/// Cost `a1^2 + a2^2`.
pub fn example_cost() -> CostSpec {
    CostSpec::quadratic(&[2.0, 2.0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyScenario {
    pub w: Vec<f64>,
    pub risk: f64,
    pub expected_risk: f64,
    pub improvement: f64,
    pub improvement_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakProxyScenario {
    pub risk_cap: f64,
    pub improvement_bound: f64,
    pub points_evaluated: usize,
    /// Grid points with `risk <= risk_cap`.
    pub points_inside: usize,
    pub max_improvement_inside: Option<f64>,
    pub argmax_inside: Option<Vec<f64>>,
    pub min_risk: f64,
    pub min_risk_w: Vec<f64>,
    /// Bounding box of the `risk <= risk_cap` ellipse searched by the fine grid.
    pub fine_box: Option<[(f64, f64); 2]>,
}

/// Both scenarios at `v1 = vy = 1/eps`, `v2 = eps^4`: a strong proxy
/// (`alpha2 = 1/eps`) that is low-risk and high-improvement at once, and a
/// weak one (`alpha2 = eps`) where every low-risk mechanism has small
/// improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffReport {
    pub epsilon: f64,
    pub strong_proxy: ProxyScenario,
    pub weak_proxy: WeakProxyScenario,
}

pub fn tradeoff_demo(eps: f64, grid_points: usize) -> Result<TradeoffReport> {
    let (v1, v2, vy) = (1.0 / eps, eps.powi(4), 1.0 / eps);
    let cost = example_cost();

    let strong = example_scm(1.0 / eps, v1, v2, vy)?;
    let w = vec![0.0, eps];
    let r = risk_improvement(&w, &strong, &cost, 1.0)?;
    let strong_proxy = ProxyScenario {
        w,
        risk: r.risk,
        expected_risk: eps.powi(6),
        improvement: r.improvement,
        improvement_floor: 1.0 - eps,
    };

    let weak = example_scm(eps, v1, v2, vy)?;
    let cap = eps * eps;
    let cov = weak.covariance();
    let q = Matrix2::new(cov[(0, 0)], cov[(0, 1)], cov[(1, 0)], cov[(1, 1)]);
    let bvec = Vector2::new(cov[(0, 2)], cov[(1, 2)]);
    let qinv = q.try_inverse().expect("feature covariance is positive definite");
    let w0 = qinv * bvec;
    let min_risk_w = vec![w0[0], w0[1]];
    let min_risk = linear_risk(&weak, &min_risk_w);
    let half = 2.0 / eps;
    let mut grids = vec![[(-half, half), (-half, half)]];
    let fine_box = (min_risk < cap).then(|| {
        let slack = cap - min_risk;
        let r0 = (slack * qinv[(0, 0)]).sqrt();
        let r1 = (slack * qinv[(1, 1)]).sqrt();
        [(w0[0] - r0, w0[0] + r0), (w0[1] - r1, w0[1] + r1)]
    });
    if let Some(b) = fine_box {
        grids.push(b);
    }
    let mut weak_proxy = WeakProxyScenario {
        risk_cap: cap,
        improvement_bound: 5.0 * eps,
        points_evaluated: 0,
        points_inside: 0,
        max_improvement_inside: None,
        argmax_inside: None,
        min_risk,
        min_risk_w: min_risk_w.clone(),
        fine_box,
    };
    let mut visit = |w: [f64; 2]| -> Result<()> {
        weak_proxy.points_evaluated += 1;
        if linear_risk(&weak, &w) <= cap {
            weak_proxy.points_inside += 1;
            let imp = risk_improvement(&w, &weak, &cost, 1.0)?.improvement;
            if weak_proxy.max_improvement_inside.map_or(true, |m| imp > m) {
                weak_proxy.max_improvement_inside = Some(imp);
                weak_proxy.argmax_inside = Some(w.to_vec());
            }
        }
        Ok(())
    };
    let step = |(lo, hi): (f64, f64), k: usize| lo + (hi - lo) * k as f64 / (grid_points - 1) as f64;
    for b in &grids {
        for i in 0..grid_points {
            for j in 0..grid_points {
                visit([step(b[0], i), step(b[1], j)])?;
            }
        }
    }
    visit([min_risk_w[0], min_risk_w[1]])?;
    Ok(TradeoffReport {
        epsilon: eps,
        strong_proxy,
        weak_proxy,
    })
}
