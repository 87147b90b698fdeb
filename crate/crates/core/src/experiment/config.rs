//! TOML experiment configuration.
//!
//! ```toml
//! schema_version = 1
//! scenario = "discover-per-node"
//! seed = 7
//! budget = 1.0
//! mode = "exact"            # or "empirical", with `samples = 100000`
//!
//! [scm]
//! features = 2
//! edges = [["x1", "x2", 0.8], ["x2", "y", -0.5]]
//! noise_variance = [1.0, 1.0, 1.0]
//!
//! [cost]
//! kind = "quadratic"        # or "linear"
//! values = [1.0, "inf"]
//! ```
//!
//! A polynomial edge lists its coefficients, lowest power first:
//! `["x1", "y", [0.8, 0.2]]`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{CostSpec, NumericOptions};
use crate::error::{Error, Result};
use crate::graph::{node_name, parse_node_name, NodeId};
use crate::observe::{Mode, RegressionFamily, TestOptions};
use crate::pareto::{default_lambda_grid, FrontOptions};
use crate::scm::{AdditiveScm, NodeEquation, NoiseSpec, StructuralModel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Simulate,
    DiscoverPerNode,
    DiscoverGeneral,
    ParetoLinear,
    OfflineFront,
    TradeoffDemo,
    RegretBench,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Simulate => "simulate",
            Scenario::DiscoverPerNode => "discover-per-node",
            Scenario::DiscoverGeneral => "discover-general",
            Scenario::ParetoLinear => "pareto-linear",
            Scenario::OfflineFront => "offline-front",
            Scenario::TradeoffDemo => "tradeoff-demo",
            Scenario::RegretBench => "regret-bench",
        }
    }

    fn needs_model(self) -> bool {
        !matches!(self, Scenario::TradeoffDemo | Scenario::RegretBench)
    }
}

/// A number or one of the strings `"inf"`, `"+inf"`, `"infinity"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Number {
    Float(f64),
    Text(String),
}

impl Number {
    fn value(&self, path: &str) -> Result<f64> {
        match self {
            Number::Float(x) => Ok(*x),
            Number::Text(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                _ => Err(Error::config(path, format!("expected a number or \"inf\", got {s:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum EdgeWeight {
    Linear(f64),
    Polynomial(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawEdge(String, String, EdgeWeight);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScm {
    features: usize,
    #[serde(default)]
    edges: Vec<RawEdge>,
    /// Full noise specs, one per node (features then `y`).
    #[serde(default)]
    noise: Option<Vec<NoiseSpec>>,
    /// Shorthand for zero-mean Gaussian noise.
    #[serde(default)]
    noise_variance: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    /// `0.5 sum_i c_i a_i^2`.
    Quadratic,
    /// `sum_i p_i |a_i|`.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    kind: CostKind,
    values: Vec<Number>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ModeName {
    Exact,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Linear mechanism weights over the features; empty means `f = 0`.
    pub mechanism: Vec<f64>,
    pub samples: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            mechanism: Vec::new(),
            samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoverySection {
    /// Polynomial degree of the fitted regressions; 1 is linear.
    pub degree: usize,
    /// Run the per-node consistency check with the configured cost.
    pub known_cost: bool,
    /// General discovery: deploy the last candidate of a round instead of
    /// inferring it.
    pub verify_last_candidate: bool,
}

impl Default for DiscoverySection {
    fn default() -> Self {
        Self {
            degree: 1,
            known_cost: true,
            verify_last_candidate: false,
        }
    }
}

impl DiscoverySection {
    pub fn family(&self) -> RegressionFamily {
        if self.degree <= 1 {
            RegressionFamily::Linear
        } else {
            RegressionFamily::Polynomial { degree: self.degree }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TradeoffSection {
    pub epsilon: f64,
    /// Points per axis of the coarse and fine scenario-1 grids.
    pub grid_points: usize,
}

impl Default for TradeoffSection {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            grid_points: 401,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegretSection {
    pub sizes: Vec<usize>,
    pub graphs: usize,
    pub samples: usize,
    pub lambda: f64,
    /// Baseline deployments at most.
    pub max_steps: usize,
    /// The baseline stops after this many deployments without improving its
    /// best objective by more than `cutoff`.
    pub patience: usize,
    pub cutoff: f64,
    /// Baseline candidates are uniform on `[-box_radius, box_radius]^n`.
    pub box_radius: f64,
}

impl Default for RegretSection {
    fn default() -> Self {
        Self {
            sizes: vec![3, 4, 5],
            graphs: 30,
            samples: 10_000,
            lambda: 1.0,
            max_steps: 200,
            patience: 20,
            cutoff: 1e-4,
            box_radius: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    scenario: Scenario,
    #[serde(default)]
    seed: u64,
    #[serde(default = "one")]
    budget: f64,
    #[serde(default = "exact")]
    mode: ModeName,
    #[serde(default)]
    samples: Option<usize>,
    #[serde(default)]
    scm: Option<RawScm>,
    #[serde(default)]
    cost: Option<RawCost>,
    #[serde(default)]
    tolerances: TestOptions,
    #[serde(default)]
    numeric: NumericOptions,
    #[serde(default)]
    simulate: SimulateSection,
    #[serde(default)]
    discovery: DiscoverySection,
    #[serde(default)]
    front: FrontOptions,
    #[serde(default)]
    tradeoff: TradeoffSection,
    #[serde(default)]
    regret: RegretSection,
}

fn one() -> f64 {
    1.0
}

fn exact() -> ModeName {
    ModeName::Exact
}

/// Resolved model block, echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmConfig {
    pub features: usize,
    /// `(from, to, coefficients)` by node name; one coefficient is linear.
    pub edges: Vec<(String, String, Vec<f64>)>,
    pub noise: Vec<NoiseSpec>,
}

impl ScmConfig {
    pub fn build(&self) -> Result<StructuralModel> {
        let n = self.features;
        let mut parents: BTreeMap<usize, Vec<(NodeId, Vec<f64>)>> = BTreeMap::new();
        for (a, b, w) in &self.edges {
            let from = parse_node_name(n, a).expect("validated");
            let to = parse_node_name(n, b).expect("validated");
            parents.entry(to.0).or_default().push((from, w.clone()));
        }
        let equations = (0..=n)
            .map(|v| match parents.remove(&v) {
                None => NodeEquation::root(),
                Some(mut ps) => {
                    ps.sort_by_key(|p| p.0);
                    let (nodes, coefs): (Vec<NodeId>, Vec<Vec<f64>>) = ps.into_iter().unzip();
                    NodeEquation::polynomial(nodes, coefs)
                }
            })
            .collect();
        Ok(AdditiveScm::new(n, equations, self.noise.clone())?.into())
    }

    pub fn max_degree(&self) -> usize {
        self.edges.iter().map(|e| e.2.len()).max().unwrap_or(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub kind: CostKind,
    pub values: Vec<f64>,
}

impl CostConfig {
    pub fn build(&self) -> CostSpec {
        match self.kind {
            CostKind::Quadratic => CostSpec::quadratic(&self.values),
            CostKind::Linear => CostSpec::linear(&self.values),
        }
    }

    pub fn mutable_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite()).count()
    }
}

/// Validated configuration with every default resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub seed: u64,
    pub budget: f64,
    pub mode: Mode,
    pub scm: Option<ScmConfig>,
    pub cost: Option<CostConfig>,
    pub tolerances: TestOptions,
    pub numeric: NumericOptions,
    pub simulate: SimulateSection,
    pub discovery: DiscoverySection,
    pub front: FrontOptions,
    pub tradeoff: TradeoffSection,
    pub regret: RegretSection,
}

/// Command-line values that replace the file's before validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub scenario: Option<Scenario>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config_with(path, &Overrides::default())
}

pub fn parse_config_with(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str_with(&text, overrides)
}

/// Parse and validate. TOML syntax and type errors carry the line and column.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    parse_config_str_with(text, &Overrides::default())
}

pub fn parse_config_str_with(text: &str, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut raw: RawConfig = toml::from_str(text).map_err(|e| {
        let path = e
            .span()
            .map(|s| locate(text, s.start))
            .unwrap_or_else(|| "<document>".into());
        Error::config(path, e.message().to_string())
    })?;
    if let Some(s) = overrides.scenario {
        raw.scenario = s;
    }
    if let Some(seed) = overrides.seed {
        raw.seed = seed;
    }
    match overrides.mode {
        Some(Mode::Exact) => raw.mode = ModeName::Exact,
        Some(Mode::Empirical { count }) => {
            raw.mode = ModeName::Empirical;
            raw.samples = Some(count);
        }
        None => {}
    }
    validate(raw)
}

fn locate(text: &str, offset: usize) -> String {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    format!("line {line}, column {col}")
}

fn validate(raw: RawConfig) -> Result<ExperimentConfig> {
    if raw.schema_version != SCHEMA_VERSION {
        return Err(Error::config(
            "schema_version",
            format!("unsupported version {} (expected {SCHEMA_VERSION})", raw.schema_version),
        ));
    }
    if !(raw.budget > 0.0 && raw.budget.is_finite()) {
        return Err(Error::config("budget", "must be positive and finite"));
    }
    let mode = match (raw.mode, raw.samples) {
        (ModeName::Exact, _) => Mode::Exact,
        (ModeName::Empirical, Some(0)) => return Err(Error::config("samples", "must be positive")),
        (ModeName::Empirical, count) => Mode::Empirical {
            count: count.unwrap_or(100_000),
        },
    };
    let scm = raw.scm.as_ref().map(validate_scm).transpose()?;
    let cost = raw.cost.as_ref().map(validate_cost).transpose()?;
    if raw.scenario.needs_model() {
        let Some(scm) = &scm else {
            return Err(Error::config(
                "scm",
                format!("scenario {} needs an [scm] block", raw.scenario.name()),
            ));
        };
        let Some(cost) = &cost else {
            return Err(Error::config(
                "cost",
                format!("scenario {} needs a [cost] block", raw.scenario.name()),
            ));
        };
        if cost.values.len() != scm.features {
            return Err(Error::config(
                "cost.values",
                format!("{} values for {} features", cost.values.len(), scm.features),
            ));
        }
        if cost.mutable_count() == 0 {
            return Err(Error::config("cost.values", "every feature is immutable"));
        }
    }
    check_positive("tolerances.exact_tol", raw.tolerances.exact_tol)?;
    check_positive("tolerances.z_threshold", raw.tolerances.z_threshold)?;
    check_positive("numeric.tolerance", raw.numeric.tolerance)?;
    if raw.numeric.starts == 0 {
        return Err(Error::config("numeric.starts", "must be positive"));
    }
    if raw.simulate.samples == 0 {
        return Err(Error::config("simulate.samples", "must be positive"));
    }
    if let Some(scm) = &scm {
        if !raw.simulate.mechanism.is_empty() && raw.simulate.mechanism.len() != scm.features {
            return Err(Error::config(
                "simulate.mechanism",
                format!("{} weights for {} features", raw.simulate.mechanism.len(), scm.features),
            ));
        }
    }
    let mut front = raw.front;
    if front.lambdas.is_empty() {
        front.lambdas = default_lambda_grid();
    }
    for (i, &l) in front.lambdas.iter().enumerate() {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(Error::config(
                format!("front.lambdas[{i}]"),
                "must be finite and non-negative",
            ));
        }
    }
    if front.starts == 0 {
        return Err(Error::config("front.starts", "must be positive"));
    }
    check_positive("front.tolerance", front.tolerance)?;
    check_positive("tradeoff.epsilon", raw.tradeoff.epsilon)?;
    if raw.tradeoff.grid_points < 2 {
        return Err(Error::config(
            "tradeoff.grid_points",
            "needs at least 2 points per axis",
        ));
    }
    let r = &raw.regret;
    if r.sizes.is_empty() || r.sizes.contains(&0) {
        return Err(Error::config("regret.sizes", "needs at least one positive size"));
    }
    for (path, v) in [
        ("regret.graphs", r.graphs),
        ("regret.samples", r.samples),
        ("regret.max_steps", r.max_steps),
        ("regret.patience", r.patience),
    ] {
        if v == 0 {
            return Err(Error::config(path, "must be positive"));
        }
    }
    check_positive("regret.cutoff", r.cutoff)?;
    check_positive("regret.box_radius", r.box_radius)?;
    if !(r.lambda >= 0.0 && r.lambda.is_finite()) {
        return Err(Error::config("regret.lambda", "must be finite and non-negative"));
    }
    Ok(ExperimentConfig {
        schema_version: raw.schema_version,
        scenario: raw.scenario,
        seed: raw.seed,
        budget: raw.budget,
        mode,
        scm,
        cost,
        tolerances: raw.tolerances,
        numeric: raw.numeric,
        simulate: raw.simulate,
        discovery: raw.discovery,
        front,
        tradeoff: raw.tradeoff,
        regret: raw.regret,
    })
}

fn check_positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, "must be positive and finite"))
    }
}

fn validate_scm(raw: &RawScm) -> Result<ScmConfig> {
    let n = raw.features;
    if n == 0 {
        return Err(Error::config("scm.features", "must be positive"));
    }
    let mut edges = Vec::with_capacity(raw.edges.len());
    let mut seen = BTreeMap::new();
    for (i, RawEdge(a, b, w)) in raw.edges.iter().enumerate() {
        let path = format!("scm.edges[{i}]");
        let from = parse_node_name(n, a).ok_or_else(|| Error::config(&path, format!("unknown node {a:?}")))?;
        let to = parse_node_name(n, b).ok_or_else(|| Error::config(&path, format!("unknown node {b:?}")))?;
        if from == to {
            return Err(Error::config(&path, format!("self-edge on {a}")));
        }
        let key = (from.min(to), from.max(to));
        if let Some(j) = seen.insert(key, i) {
            return Err(Error::config(&path, format!("joins the same pair as scm.edges[{j}]")));
        }
        let coefs = match w {
            EdgeWeight::Linear(x) => vec![*x],
            EdgeWeight::Polynomial(c) if !c.is_empty() => c.clone(),
            EdgeWeight::Polynomial(_) => return Err(Error::config(&path, "empty coefficient list")),
        };
        if coefs.iter().any(|c| !c.is_finite()) {
            return Err(Error::config(&path, "coefficients must be finite"));
        }
        edges.push((node_name(n, from), node_name(n, to), coefs));
    }
    if let Some(cycle) = find_cycle(n, &edges) {
        let names: Vec<String> = cycle.iter().map(|&v| node_name(n, v)).collect();
        return Err(Error::config("scm.edges", format!("cycle {}", names.join(" -> "))));
    }
    let noise = match (&raw.noise, &raw.noise_variance) {
        (Some(_), Some(_)) => return Err(Error::config("scm", "give noise or noise_variance, not both")),
        (Some(specs), None) => specs.clone(),
        (None, Some(vars)) => vars
            .iter()
            .map(|&v| NoiseSpec::Gaussian { mean: 0.0, variance: v })
            .collect(),
        (None, None) => vec![NoiseSpec::standard_normal(); n + 1],
    };
    if noise.len() != n + 1 {
        return Err(Error::config(
            "scm.noise",
            format!("{} specs for {} nodes", noise.len(), n + 1),
        ));
    }
    for (i, spec) in noise.iter().enumerate() {
        spec.validate()
            .map_err(|e| Error::config(format!("scm.noise[{i}]"), e.to_string()))?;
    }
    Ok(ScmConfig {
        features: n,
        edges,
        noise,
    })
}

/// A directed cycle as a closed node walk (first node repeated at the end).
fn find_cycle(n: usize, edges: &[(String, String, Vec<f64>)]) -> Option<Vec<NodeId>> {
    let m = n + 1;
    let mut adj = vec![Vec::new(); m];
    for (a, b, _) in edges {
        let (a, b) = (parse_node_name(n, a)?, parse_node_name(n, b)?);
        adj[a.0].push(b.0);
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    // 0 unvisited, 1 on the stack, 2 done
    let mut state = vec![0u8; m];
    let mut stack: Vec<usize> = Vec::new();
    fn dfs(v: usize, adj: &[Vec<usize>], state: &mut [u8], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
        state[v] = 1;
        stack.push(v);
        for &c in &adj[v] {
            if state[c] == 1 {
                let start = stack.iter().position(|&s| s == c).expect("on stack");
                let mut cycle = stack[start..].to_vec();
                cycle.push(c);
                return Some(cycle);
            }
            if state[c] == 0 {
                if let Some(cycle) = dfs(c, adj, state, stack) {
                    return Some(cycle);
                }
            }
        }
        stack.pop();
        state[v] = 2;
        None
    }
    (0..m)
        .find_map(|v| {
            if state[v] == 0 {
                dfs(v, &adj, &mut state, &mut stack)
            } else {
                None
            }
        })
        .map(|c| c.into_iter().map(NodeId).collect())
}

fn validate_cost(raw: &RawCost) -> Result<CostConfig> {
    let mut values = Vec::with_capacity(raw.values.len());
    for (i, v) in raw.values.iter().enumerate() {
        let path = format!("cost.values[{i}]");
        let x = v.value(&path)?;
        if !(x > 0.0) {
            return Err(Error::config(&path, "must be positive or \"inf\""));
        }
        values.push(x);
    }
    Ok(CostConfig { kind: raw.kind, values })
}
