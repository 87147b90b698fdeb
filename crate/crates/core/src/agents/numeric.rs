use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::closed_form::BestResponse;
use super::cost::{bisect, CostCurve, CostSpec};
use super::mechanism::Mechanism;
use crate::error::{Error, Result};
use crate::scm::{Intervention, StructuralModel};

/// Settings for the multi-start projected-gradient best-response solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumericOptions {
    /// Ascents per agent, warm starts included.
    pub starts: usize,
    /// Bound on the projected-gradient residual `|P(a + ∇F) - a|`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for NumericOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            tolerance: 1e-6,
            max_iterations: 10_000,
            seed: 0x5eed,
        }
    }
}

/// Euclidean projection onto `{a : sum_i c_i(|a_i|) <= b}`.
pub(crate) struct BudgetSet {
    curves: Vec<CostCurve>,
    budget: f64,
}

impl BudgetSet {
    pub fn new(curves: Vec<CostCurve>, budget: f64) -> Self {
        Self { curves, budget }
    }

    pub fn cost(&self, a: &[f64]) -> f64 {
        self.curves.iter().zip(a).map(|(c, &v)| c.value(v)).sum()
    }

    fn is_mutable(&self, i: usize) -> bool {
        !matches!(self.curves[i], CostCurve::Immutable)
    }

    pub fn project(&self, z: &[f64], out: &mut [f64]) {
        for (i, (o, &v)) in out.iter_mut().zip(z).enumerate() {
            *o = if self.is_mutable(i) { v } else { 0.0 };
        }
        if self.cost(out) <= self.budget {
            return;
        }
        // spent(mu) is decreasing in mu. Solve spent(mu) = b by safeguarded
        // Newton, bisecting whenever a step leaves the bracket. With any
        // curved cost the iteration runs on spent^(-1/2), which is exactly
        // linear in mu for a round quadratic ball; piecewise-linear spend
        // (prices only) is solved directly.
        let spent = |mu: f64| -> (f64, f64) {
            self.curves.iter().zip(z).fold((0.0, 0.0), |(s, d), (c, &v)| {
                let (cs, cd) = c.prox_spend(v.abs(), mu);
                (s + cs, d + cd)
            })
        };
        let flat = self
            .curves
            .iter()
            .all(|c| matches!(c, CostCurve::Linear(_) | CostCurve::Immutable));
        let b = self.budget;
        let mut lo = 0.0;
        let mut hi = f64::INFINITY;
        let mut mu = 0.0;
        for _ in 0..200 {
            let (s, d) = spent(mu);
            if (s - b).abs() <= 1e-13 * b {
                hi = mu;
                break;
            }
            if s > b {
                lo = mu;
            } else {
                hi = mu;
            }
            let newton = if d >= 0.0 || s <= 0.0 {
                f64::NAN
            } else if flat {
                mu - (s - b) / d
            } else {
                let psi = 1.0 / s.sqrt();
                let dpsi = -0.5 * d * psi / s;
                mu - (psi - 1.0 / b.sqrt()) / dpsi
            };
            mu = if newton > lo && newton < hi {
                newton
            } else if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                (2.0 * mu).max(1.0)
            };
            if hi.is_finite() && hi - lo <= 1e-16 * hi {
                break;
            }
        }
        for ((o, c), &v) in out.iter_mut().zip(&self.curves).zip(z) {
            *o = c.prox(v.abs(), hi).copysign(v);
        }
    }

    /// Scale `d` onto the budget surface.
    pub fn to_surface(&self, d: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = d
            .iter()
            .enumerate()
            .map(|(i, &v)| if self.is_mutable(i) { v } else { 0.0 })
            .collect();
        if d.iter().all(|&v| v == 0.0) {
            return d;
        }
        let at = |s: f64| self.cost(&d.iter().map(|v| v * s).collect::<Vec<_>>());
        let mut hi = 1.0;
        while at(hi) < self.budget {
            hi *= 2.0;
        }
        let s = bisect(0.0, hi, |s| at(s) - self.budget);
        d.iter().map(|v| v * s).collect()
    }

    /// Largest single-coordinate move the budget allows.
    pub fn radius(&self) -> f64 {
        self.curves
            .iter()
            .filter(|c| !matches!(c, CostCurve::Immutable))
            .map(|c| c.inverse(self.budget))
            .fold(0.0, f64::max)
    }
}

/// One agent's program: maximize `f(x(u, a))` over the budget set.
pub(crate) struct AgentProblem<'a> {
    pub mechanism: &'a Mechanism,
    pub scm: &'a StructuralModel,
    pub u: &'a [f64],
    pub set: BudgetSet,
    full_a: Vec<f64>,
    x: Vec<f64>,
    df: Vec<f64>,
    da: Vec<f64>,
}

impl<'a> AgentProblem<'a> {
    pub fn new(mechanism: &'a Mechanism, scm: &'a StructuralModel, cost: &CostSpec, b: f64, u: &'a [f64]) -> Self {
        let m = scm.node_count();
        let x0 = scm.propagate(u, &vec![0.0; m]);
        Self {
            mechanism,
            scm,
            u,
            set: BudgetSet::new(cost.curves(&x0), b),
            full_a: vec![0.0; m],
            x: vec![0.0; m],
            df: vec![0.0; m],
            da: vec![0.0; m],
        }
    }

    fn value(&mut self, a: &[f64]) -> f64 {
        self.full_a[..a.len()].copy_from_slice(a);
        self.scm.propagate_into(self.u, &self.full_a, &mut self.x);
        self.mechanism.score(&self.x)
    }

    fn value_and_gradient(&mut self, a: &[f64], grad: &mut [f64]) -> f64 {
        let v = self.value(a);
        self.mechanism.gradient_into(&self.x, &mut self.df);
        self.scm.pullback_into(&self.x, &self.df, &mut self.da);
        for (i, gi) in grad.iter_mut().enumerate() {
            *gi = if self.set.is_mutable(i) { self.da[i] } else { 0.0 };
        }
        v
    }
}

struct Ascent {
    a: Vec<f64>,
    value: f64,
    residual: f64,
    iterations: usize,
    converged: bool,
}

fn ascend(problem: &mut AgentProblem<'_>, start: &[f64], opts: &NumericOptions) -> Ascent {
    let n = start.len();
    let mut a = vec![0.0; n];
    problem.set.project(start, &mut a);
    let mut g = vec![0.0; n];
    let mut value = problem.value_and_gradient(&a, &mut g);
    let mut trial = vec![0.0; n];
    let mut cand = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let radius = problem.set.radius().max(f64::MIN_POSITIVE);
    let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut eta = if gnorm > 0.0 { radius / gnorm } else { 1.0 };
    // Far-out trial points project to nearly the same surface point, so
    // growing eta past this buys nothing and eventually overflows.
    let eta_max = 1e6 * eta.max(radius);
    let mut residual = f64::INFINITY;
    for it in 0..opts.max_iterations {
        // stationarity: |P(a + g) - a|
        for i in 0..n {
            trial[i] = a[i] + g[i];
        }
        problem.set.project(&trial, &mut cand);
        residual = cand.iter().zip(&a).map(|(c, x)| (c - x).powi(2)).sum::<f64>().sqrt();
        if residual <= opts.tolerance {
            return Ascent {
                a,
                value,
                residual,
                iterations: it,
                converged: true,
            };
        }
        let mut accepted = false;
        for _ in 0..80 {
            for i in 0..n {
                trial[i] = a[i] + eta * g[i];
            }
            problem.set.project(&trial, &mut cand);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for i in 0..n {
                let d = cand[i] - a[i];
                lin += g[i] * d;
                sq += d * d;
            }
            if sq == 0.0 {
                break;
            }
            let v = problem.value_and_gradient(&cand, &mut g_new);
            if v >= value + lin - sq / (2.0 * eta) - 1e-15 * value.abs() {
                a.copy_from_slice(&cand);
                g.copy_from_slice(&g_new);
                value = v;
                eta = (2.0 * eta).min(eta_max);
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            // no representable ascent step: stationary up to rounding
            return Ascent {
                a,
                value,
                residual,
                iterations: it,
                converged: residual <= opts.tolerance,
            };
        }
    }
    Ascent {
        a,
        value,
        residual,
        iterations: opts.max_iterations,
        converged: false,
    }
}

/// Multi-start projected-gradient ascent on the budget set. Starts are any
/// caller-supplied warm starts, then the origin, then random points on the
/// budget surface, `opts.starts` in total; the best final value wins,
/// earlier starts winning ties.
pub(crate) fn solve(problem: &mut AgentProblem<'_>, warm: &[Vec<f64>], opts: &NumericOptions) -> Result<BestResponse> {
    let n = problem.scm.n_features();
    let base = problem.value(&vec![0.0; n]);
    let total = opts.starts.max(1);
    let mut starts: Vec<Vec<f64>> = warm.iter().take(total).cloned().collect();
    if starts.len() < total {
        starts.push(vec![0.0; n]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while starts.len() < total {
        let d: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        starts.push(problem.set.to_surface(&d));
    }
    let mut best: Option<Ascent> = None;
    for s in &starts {
        let run = ascend(problem, s, opts);
        let better = match &best {
            None => true,
            Some(b) => run.value > b.value + 1e-12 * (1.0 + b.value.abs()),
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    if !best.converged {
        return Err(Error::NotConverged {
            iterations: best.iterations,
            residual: best.residual,
            best: best.a,
        });
    }
    let cost_used = problem.set.cost(&best.a);
    let degenerate = best.a.iter().all(|&v| v == 0.0);
    Ok(BestResponse {
        a_star: Intervention::from_features(&best.a),
        achieved_score: best.value - base,
        cost_used,
        degenerate,
    })
}

/// Numeric best response of an agent with realized noise `u`.
pub fn best_response_numeric(
    f: &Mechanism,
    scm: &StructuralModel,
    cost: &CostSpec,
    b: f64,
    u: &[f64],
    opts: &NumericOptions,
) -> Result<BestResponse> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::InvalidCost(format!(
            "budget must be positive and finite, got {b}"
        )));
    }
    f.validate(scm.n_features())?;
    cost.validate(scm.n_features(), None)?;
    if u.len() != scm.node_count() {
        return Err(Error::InvalidModel(format!(
            "noise vector has {} entries, expected {}",
            u.len(),
            scm.node_count()
        )));
    }
    let mut problem = AgentProblem::new(f, scm, cost, b, u);
    solve(&mut problem, &[], opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::closed_form::best_response_quadratic;
    use crate::graph::NodeId;
    use crate::scm::{LinearScm, NoiseSpec};

    #[test]
    fn projection_matches_bisection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        use rand::Rng;
        for trial in 0..2000 {
            let n = 1 + trial % 5;
            let curves: Vec<CostCurve> = (0..n)
                .map(|_| match rng.gen_range(0..4) {
                    0 => CostCurve::Linear(rng.gen_range(0.1..3.0)),
                    1 => CostCurve::Quadratic(rng.gen_range(0.1..3.0)),
                    2 => CostCurve::General(vec![
                        rng.gen_range(0.0..2.0),
                        rng.gen_range(0.0..2.0),
                        rng.gen_range(0.1..1.0),
                    ]),
                    _ => CostCurve::Quadratic(rng.gen_range(0.01..0.5)),
                })
                .collect();
            let b = rng.gen_range(0.1..5.0);
            let z: Vec<f64> = (0..n)
                .map(|_| rng.gen_range(-5.0..5.0) * 10f64.powi(rng.gen_range(-3..3)))
                .collect();
            let set = BudgetSet::new(curves.clone(), b);
            let mut out = vec![0.0; n];
            set.project(&z, &mut out);
            let cost = set.cost(&out);
            assert!(cost <= b + 1e-8, "trial {trial}: cost {cost} > {b}");
            if set.cost(&z) > b {
                let spent = |mu: f64| {
                    curves
                        .iter()
                        .zip(&z)
                        .map(|(c, &v)| c.value(c.prox(v.abs(), mu)))
                        .sum::<f64>()
                };
                let mut hi = 1.0;
                while spent(hi) > b {
                    hi *= 2.0;
                }
                let mu = bisect(0.0, hi, |m| b - spent(m));
                for ((o, c), &v) in out.iter().zip(&curves).zip(&z) {
                    let want = c.prox(v.abs(), mu).copysign(v);
                    assert!(
                        (o - want).abs() < 1e-6 * (1.0 + want.abs()),
                        "trial {trial}: {o} vs {want}, z {z:?} b {b} {curves:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn projection_lands_on_quadratic_sphere() {
        let set = BudgetSet::new(vec![CostCurve::Quadratic(1.0), CostCurve::Quadratic(1.0)], 1.0);
        let mut out = [0.0; 2];
        set.project(&[3.0, 4.0], &mut out);
        assert!((out[0] - 0.6).abs() < 1e-12 && (out[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn projection_onto_weighted_l1_ball() {
        let set = BudgetSet::new(vec![CostCurve::Linear(1.0), CostCurve::Linear(2.0)], 1.0);
        let mut out = [0.0; 2];
        set.project(&[2.0, 0.1], &mut out);
        assert!((out[0] - 1.0).abs() < 1e-9 && out[1].abs() < 1e-9);
    }

    #[test]
    fn matches_quadratic_closed_form() {
        let scm = LinearScm::from_edges(
            2,
            &[(NodeId(0), NodeId(2), 1.0), (NodeId(2), NodeId(1), 2.0)],
            vec![NoiseSpec::standard_normal(); 3],
        )
        .unwrap();
        let w = [0.3, 1.0, 0.0];
        let exact = best_response_quadratic(&w, &scm, &[2.0, 1.0], 1.0).unwrap();
        let f = Mechanism::LinearWeights(w.to_vec());
        let model = StructuralModel::from(scm);
        let br = best_response_numeric(
            &f,
            &model,
            &CostSpec::quadratic(&[2.0, 1.0]),
            1.0,
            &[0.1, -0.2, 0.5],
            &NumericOptions::default(),
        )
        .unwrap();
        for (a, e) in br.a_star.features().iter().zip(exact.a_star.features()) {
            assert!((a - e).abs() < 1e-5, "{a} vs {e}");
        }
        assert!(br.cost_used <= 1.0 + 1e-8);
    }

    #[test]
    fn constant_mechanism_stays_put() {
        let scm: StructuralModel =
            LinearScm::from_edges(1, &[(NodeId(0), NodeId(1), 1.0)], vec![NoiseSpec::standard_normal(); 2])
                .unwrap()
                .into();
        let br = best_response_numeric(
            &Mechanism::zero(1),
            &scm,
            &CostSpec::quadratic(&[1.0]),
            1.0,
            &[0.0, 0.0],
            &NumericOptions::default(),
        )
        .unwrap();
        assert!(br.a_star.is_zero());
    }
}
