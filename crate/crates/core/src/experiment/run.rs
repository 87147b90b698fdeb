use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{CostKind, ExperimentConfig, Scenario};
use super::regret::{regret_bench, write_ratios_csv};
use super::tradeoff::tradeoff_demo;
use crate::agents::Mechanism;
use crate::discovery::{
    discover_general, discover_per_node, DiscoveryOutcome, Environment, GeneralOptions, KnownCost, PerNodeOptions,
    SimulatedEnvironment,
};
use crate::error::{Error, Result};
use crate::observe::{induce, InduceOptions, Mode, RegressionFamily};
use crate::pareto::{
    distribution_risk, dominates, explore_linear, identify_scm, linear_front, offline_front, risk_improvement,
    ExploreOptions, Front,
};
use crate::scm::{write_samples_csv, StructuralModel};

/// One pass/fail check embedded in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Everything a run produced. Apart from `wall_clock_seconds`, a report is a
/// function of the config alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    /// Files written next to `report.json`.
    pub artifacts: Vec<String>,
    pub result: Value,
    pub wall_clock_seconds: f64,
}

struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Outputs<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        self.files.push(name.to_string());
        fs::write(self.dir.join(name), text)?;
        Ok(())
    }
}

#[derive(Default)]
struct Outcome {
    checks: Vec<Check>,
    notes: Vec<String>,
    result: Value,
}

/// Run the configured scenario, writing `report.json` and the scenario's
/// artifacts into `out_dir`. A failed check is reported, not an error.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    fs::create_dir_all(out_dir)?;
    let start = Instant::now();
    let mut out = Outputs {
        dir: out_dir,
        files: Vec::new(),
    };
    let outcome = match config.scenario {
        Scenario::Simulate => simulate(config, &mut out)?,
        Scenario::DiscoverPerNode | Scenario::DiscoverGeneral => discover(config, &mut out)?,
        Scenario::ParetoLinear => pareto_linear(config, &mut out)?,
        Scenario::OfflineFront => offline(config, &mut out)?,
        Scenario::TradeoffDemo => tradeoff(config)?,
        Scenario::RegretBench => regret(config, &mut out)?,
    };
    let report = RunReport {
        scenario: config.scenario,
        seed: config.seed,
        config: config.clone(),
        passed: outcome.checks.iter().all(|c| c.passed),
        checks: outcome.checks,
        notes: outcome.notes,
        artifacts: out.files,
        result: outcome.result,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let mut w = BufWriter::new(File::create(out_dir.join("report.json"))?);
    serde_json::to_writer_pretty(&mut w, &report)?;
    Ok(report)
}

fn model(config: &ExperimentConfig) -> Result<StructuralModel> {
    config.scm.as_ref().expect("validated").build()
}

fn environment(config: &ExperimentConfig) -> Result<SimulatedEnvironment> {
    let cost = config.cost.as_ref().expect("validated").build();
    Ok(
        SimulatedEnvironment::new(model(config)?, cost, config.budget, config.mode, config.seed)?
            .with_numeric(config.numeric.clone()),
    )
}

fn simulate(config: &ExperimentConfig, out: &mut Outputs) -> Result<Outcome> {
    let scm = model(config)?;
    let n = scm.n_features();
    let cost = config.cost.as_ref().expect("validated").build();
    let f = if config.simulate.mechanism.is_empty() {
        Mechanism::zero(n)
    } else {
        Mechanism::linear(&config.simulate.mechanism)
    };
    let opts = InduceOptions {
        mode: Mode::Empirical {
            count: config.simulate.samples,
        },
        seed: config.seed,
        numeric: config.numeric.clone(),
    };
    let d = induce(&scm, &f, &cost, config.budget, &opts)?;
    let samples = d.samples().expect("empirical mode keeps samples");
    write_samples_csv(out.create("samples.csv")?, samples)?;
    let mut checks = vec![Check::new(
        "samples finite",
        samples.iter().all(|v| v.is_finite()),
        format!("{} rows", samples.nrows()),
    )];
    // Compare against population moments where they are available.
    let exact = InduceOptions {
        mode: Mode::Exact,
        ..opts
    };
    if let Ok(truth) = induce(&scm, &f, &cost, config.budget, &exact) {
        let worst = (0..=n)
            .map(|v| (d.mean()[v] - truth.mean()[v]).abs() / d.mean_variance(v).sqrt().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        checks.push(Check::new(
            "sample means match model",
            worst < 5.0,
            format!("largest z = {worst:.3}"),
        ));
    }
    Ok(Outcome {
        checks,
        notes: Vec::new(),
        result: json!({ "mechanism": f.describe(n), "distribution": d.summary() }),
    })
}

fn discovery_run(
    config: &ExperimentConfig,
    env: &mut SimulatedEnvironment,
) -> Result<(Result<DiscoveryOutcome>, Vec<String>)> {
    let scm = env.scm().clone();
    let skeleton = scm.graph().skeleton().clone();
    let family = config.discovery.family();
    let mut notes = Vec::new();
    let per_node = match config.scenario {
        Scenario::DiscoverPerNode => true,
        Scenario::DiscoverGeneral => false,
        // Front pipelines pick the algorithm the cost allows.
        _ => config.cost.as_ref().expect("validated").kind == CostKind::Quadratic,
    };
    let outcome = if per_node {
        let known_cost = (config.discovery.known_cost && scm.is_linear()).then(|| KnownCost {
            cost: env.cost().clone(),
            budget: config.budget,
        });
        if config.discovery.known_cost && known_cost.is_none() {
            notes.push("consistency check skipped: it needs a linear model".into());
        }
        let opts = PerNodeOptions {
            family,
            tests: config.tolerances,
            known_cost,
        };
        discover_per_node(env, &skeleton, &opts)
    } else {
        let opts = GeneralOptions {
            family,
            tests: config.tolerances,
            verify_last_candidate: config.discovery.verify_last_candidate,
        };
        discover_general(env, &skeleton, &opts)
    };
    notes.push(format!("algorithm: {}", if per_node { "per-node" } else { "general" }));
    Ok((outcome, notes))
}

fn discover(config: &ExperimentConfig, out: &mut Outputs) -> Result<Outcome> {
    let mut env = environment(config)?;
    let truth = env.scm().graph().clone();
    let n = truth.n_features();
    let (outcome, notes) = discovery_run(config, &mut env)?;
    let out_graph = match outcome {
        Ok(o) => o,
        Err(e @ Error::FaithfulnessViolation { .. }) => {
            return Ok(Outcome {
                checks: vec![Check::new("discovery completed", false, e.to_string())],
                notes,
                result: json!({ "error": e.to_string(), "deployments": env.deployments() }),
            });
        }
        Err(e) => return Err(e),
    };
    out.write("graph.dot", &out_graph.graph.to_dot())?;
    let mut log = Vec::new();
    out_graph.session.write_jsonl(&mut log)?;
    out.write("session.jsonl", &String::from_utf8(log).expect("JSON is UTF-8"))?;
    let recovered = out_graph.graph.directed_edge_set() == truth.directed_edge_set();
    let mut checks = vec![Check::new(
        "recovered graph equals model graph",
        recovered,
        format!("{} directed edges", out_graph.graph.directed_edge_set().len()),
    )];
    if config.scenario == Scenario::DiscoverPerNode {
        checks.push(Check::new(
            "one deployment per feature",
            out_graph.deployments == n,
            format!("{} deployments for {n} features", out_graph.deployments),
        ));
    } else if !config.discovery.verify_last_candidate {
        let nodes = n + 1;
        let bound = nodes * (nodes - 1) / 2;
        checks.push(Check::new(
            "deployments within N(N-1)/2 for N graph nodes",
            out_graph.deployments <= bound,
            format!("{} deployments, bound {bound}", out_graph.deployments),
        ));
    }
    let edges: Vec<(String, String)> = out_graph
        .graph
        .directed_edges()
        .map(|(a, b)| (out_graph.session.name(a), out_graph.session.name(b)))
        .collect();
    Ok(Outcome {
        checks,
        notes,
        result: json!({
            "deployments": out_graph.deployments,
            "edges": edges,
            "peel_order": out_graph.session.s.iter().map(|&v| out_graph.session.name(v)).collect::<Vec<_>>(),
            "events": out_graph.session.events,
        }),
    })
}

fn front_checks(front: &Front, checks: &mut Vec<Check>) {
    let dominated = front
        .points
        .iter()
        .filter(|p| front.points.iter().any(|q| dominates(q, p)))
        .count();
    checks.push(Check::new(
        "front is non-dominated",
        dominated == 0,
        format!("{} points", front.points.len()),
    ));
}

fn pareto_linear(config: &ExperimentConfig, out: &mut Outputs) -> Result<Outcome> {
    let cost_cfg = config.cost.as_ref().expect("validated");
    if cost_cfg.kind != CostKind::Linear {
        return Err(Error::config("cost.kind", "pareto-linear needs a linear cost"));
    }
    let mut env = environment(config)?;
    let scm = env.scm().clone();
    let Some(truth) = scm.as_linear() else {
        return Err(Error::config("scm.edges", "pareto-linear needs a linear model"));
    };
    let n = scm.n_features();
    let k = cost_cfg.mutable_count();
    let catalog = explore_linear(
        &mut env,
        k,
        &ExploreOptions {
            tests: config.tolerances,
            ..ExploreOptions::default()
        },
    )?;
    let (front, solved) = linear_front(&catalog)?;
    front.write_csv(out.create("front.csv")?, None)?;
    let mut checks = vec![
        Check::new(
            "at most 2n deployments",
            catalog.deployments <= 2 * n,
            format!("{} deployments, n = {n}", catalog.deployments),
        ),
        Check::new(
            "every intervention found",
            catalog.entries.len() == 2 * k,
            format!("{} distributions, k = {k}", catalog.entries.len()),
        ),
    ];
    let worst_kkt = solved.iter().map(|s| s.qp.kkt_residual).fold(0.0, f64::max);
    checks.push(Check::new(
        "QP KKT residual <= 1e-6",
        worst_kkt <= 1e-6,
        format!("largest {worst_kkt:.3e}"),
    ));
    front_checks(&front, &mut checks);
    let mut notes = Vec::new();
    if config.mode == Mode::Exact {
        // Re-deploy each front mechanism. A point whose QP ended with an
        // active constraint leaves the agents indifferent between two
        // interventions, and the tie-break may pick the other one.
        let cost = env.cost().clone();
        let opts = InduceOptions {
            mode: Mode::Exact,
            seed: config.seed,
            numeric: config.numeric.clone(),
        };
        let (d0_mean, _) = truth.exact_moments(&crate::scm::Intervention::zeros(n));
        let mut worst = 0.0f64;
        let mut ties = 0;
        for p in &front.points {
            let d = induce(&scm, &Mechanism::linear(&p.w), &cost, config.budget, &opts)?;
            let risk = distribution_risk(&d, &p.w);
            let imp = d.mean()[n] - d0_mean[n];
            let err = (risk - p.risk).abs().max((imp - p.improvement).abs());
            let tied = solved
                .iter()
                .find(|s| s.w == p.w)
                .is_some_and(|s| !s.qp.active.is_empty());
            if tied && err > 1e-6 {
                ties += 1;
            } else {
                worst = worst.max(err);
            }
        }
        checks.push(Check::new(
            "front reproduced by re-deployment",
            worst <= 1e-6,
            format!("largest error {worst:.3e}"),
        ));
        if ties > 0 {
            notes.push(format!(
                "{ties} front points sit on a tie between interventions and re-deploy to the tie-break"
            ));
        }
    }
    let entries: Vec<Value> = catalog
        .entries
        .iter()
        .zip(&solved)
        .map(|(e, s)| {
            json!({
                "probe": e.probe,
                "shift": e.shift.iter().collect::<Vec<_>>(),
                "min_mse_w": s.w,
                "risk": s.risk,
                "improvement": s.improvement,
                "kkt_residual": s.qp.kkt_residual,
                "active_constraints": s.qp.active,
            })
        })
        .collect();
    Ok(Outcome {
        checks,
        notes,
        result: json!({
            "deployments": catalog.deployments,
            "duplicates": catalog.duplicates,
            "natural_mean": catalog.natural_mean.iter().collect::<Vec<_>>(),
            "catalog": entries,
            "front": front,
        }),
    })
}

fn offline(config: &ExperimentConfig, out: &mut Outputs) -> Result<Outcome> {
    if config.discovery.family() != RegressionFamily::Linear {
        return Err(Error::config(
            "discovery.degree",
            "offline-front identifies a linear model",
        ));
    }
    let mut env = environment(config)?;
    let scm = env.scm().clone();
    let Some(truth) = scm.as_linear().cloned() else {
        return Err(Error::config("scm.edges", "offline-front needs a linear model"));
    };
    let d0 = env.natural()?;
    let (outcome, notes) = discovery_run(config, &mut env)?;
    let found = match outcome {
        Ok(o) => o,
        Err(e @ Error::FaithfulnessViolation { .. }) => {
            return Ok(Outcome {
                checks: vec![Check::new("discovery completed", false, e.to_string())],
                notes,
                result: json!({ "error": e.to_string() }),
            });
        }
        Err(e) => return Err(e),
    };
    out.write("graph.dot", &found.graph.to_dot())?;
    let recovered = found.graph.directed_edge_set() == truth.graph().directed_edge_set();
    let identified = identify_scm(&found.graph, &d0, RegressionFamily::Linear)?;
    let fit = identified.as_linear().expect("linear family");
    let mut front_opts = config.front.clone();
    front_opts.seed = config.seed;
    let report = offline_front(fit, env.cost(), config.budget, &front_opts)?;
    let lambdas: Vec<f64> = report
        .front
        .points
        .iter()
        .map(|p| report.runs.iter().find(|r| r.w == p.w).map_or(f64::NAN, |r| r.lambda))
        .collect();
    report.front.write_csv(out.create("front.csv")?, Some(&lambdas))?;
    let mut checks = vec![Check::new(
        "recovered graph equals model graph",
        recovered,
        String::new(),
    )];
    front_checks(&report.front, &mut checks);
    let failed = report.runs.iter().filter(|r| !r.converged).count();
    checks.push(Check::new(
        "front is non-empty",
        !report.front.points.is_empty(),
        format!(
            "{} points, {failed} of {} lambdas did not converge",
            report.front.points.len(),
            report.runs.len()
        ),
    ));
    if config.mode == Mode::Exact {
        let mut worst = 0.0f64;
        for p in &report.front.points {
            let r = risk_improvement(&p.w, &truth, env.cost(), config.budget)?;
            worst = worst
                .max((r.risk - p.risk).abs())
                .max((r.improvement - p.improvement).abs());
        }
        checks.push(Check::new(
            "identified front matches model",
            worst <= 1e-6,
            format!("largest error {worst:.3e}"),
        ));
    }
    Ok(Outcome {
        checks,
        notes,
        result: json!({
            "deployments": found.deployments,
            "identified_weights": (0..=fit.n_features()).map(|i| fit.weights().row(i).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
            "identified_noise_variance": fit.noise_variance().iter().collect::<Vec<_>>(),
            "runs": report.runs,
            "front": report.front,
        }),
    })
}

fn tradeoff(config: &ExperimentConfig) -> Result<Outcome> {
    let t = &config.tradeoff;
    let r = tradeoff_demo(t.epsilon, t.grid_points)?;
    let s = &r.strong_proxy;
    let w = &r.weak_proxy;
    let checks = vec![
        Check::new(
            "strong proxy risk is eps^6",
            (s.risk - s.expected_risk).abs() <= 1e-3 * s.expected_risk,
            format!("risk {:.6e}, eps^6 = {:.6e}", s.risk, s.expected_risk),
        ),
        Check::new(
            "strong proxy improvement >= 1 - eps",
            s.improvement >= s.improvement_floor,
            format!("{:.6}", s.improvement),
        ),
        Check::new(
            "weak proxy: low risk forces small improvement",
            w.points_inside > 0 && w.max_improvement_inside.is_some_and(|m| m <= w.improvement_bound),
            format!(
                "{} of {} grid points with risk <= {:.1e}; largest improvement {:?} (bound {:.3})",
                w.points_inside, w.points_evaluated, w.risk_cap, w.max_improvement_inside, w.improvement_bound
            ),
        ),
    ];
    Ok(Outcome {
        checks,
        notes: Vec::new(),
        result: serde_json::to_value(&r)?,
    })
}

fn regret(config: &ExperimentConfig, out: &mut Outputs) -> Result<Outcome> {
    let r = regret_bench(&config.regret, config.budget, config.seed)?;
    write_ratios_csv(&r.rows, out.create("ratios.csv")?)?;
    let mut checks = Vec::new();
    for row in r.rows.iter().filter(|row| row.metric == "risk") {
        checks.push(Check::new(
            &format!("size {} risk ratio CI above 1", row.size),
            row.ci_low > 1.0,
            format!("mean {:.3}, 95% CI [{:.3}, {:.3}]", row.mean, row.ci_low, row.ci_high),
        ));
    }
    let mut notes = vec![format!("baseline: {}", r.baseline)];
    if config.regret.max_steps == 1 {
        notes.push("baseline limited to one step; ratios are degenerate".into());
    }
    let misses = r.runs.iter().filter(|g| !g.graph_recovered).count();
    if misses > 0 {
        notes.push(format!(
            "{misses} of {} graphs were not recovered exactly",
            r.runs.len()
        ));
    }
    Ok(Outcome {
        checks,
        notes,
        result: serde_json::to_value(&r)?,
    })
}
