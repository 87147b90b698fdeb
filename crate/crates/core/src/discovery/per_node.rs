use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::env::Environment;
use super::session::{DiscoveryOutcome, DiscoverySession};
use crate::agents::{closed_form_response, CostSpec, Mechanism};
use crate::error::{Error, Result};
use crate::graph::{NodeId, OrientedGraph, Skeleton};
use crate::observe::{conditional_shift_test, fit_conditional, InducedDistribution, RegressionFamily, TestOptions};
use crate::scm::{LinearScm, NoiseSpec, StructuralModel};

/// Agent cost and budget, when the principal knows them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownCost {
    pub cost: CostSpec,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerNodeOptions {
    pub family: RegressionFamily,
    pub tests: TestOptions,
    /// Enables the final consistency check (linear SCMs, closed-form costs).
    pub known_cost: Option<KnownCost>,
}

impl Default for PerNodeOptions {
    fn default() -> Self {
        Self {
            family: RegressionFamily::Linear,
            tests: TestOptions::default(),
            known_cost: None,
        }
    }
}

/// Root-peeling discovery from the per-node deployments `f = X_i`.
///
/// All `n` deployments happen up front. Each round scans the unoriented
/// subgraph in ascending index order for a feature `X_i` whose open
/// neighbours `V` all keep the law of `V | X_i, anc(X_i)` between `D_i` and
/// `D_0`; such a node is a root and its open edges point away from it. If no
/// feature qualifies, the outcome node must be the root.
///
/// A cancelling parameter choice makes a non-root pass the test and yields a
/// wrong graph that no later step contradicts. With `known_cost` set, the
/// recovered graph is refitted on `D_0` and every deployment's mean shift is
/// predicted from it; a mismatch aborts with a faithfulness violation.
pub fn discover_per_node<E: Environment>(
    env: &mut E,
    skeleton: &Skeleton,
    opts: &PerNodeOptions,
) -> Result<DiscoveryOutcome> {
    let n = skeleton.n_features();
    if env.n_features() != n {
        return Err(Error::InvalidModel(format!(
            "skeleton has {n} features, environment has {}",
            env.n_features()
        )));
    }
    let start = env.deployments();
    let d0 = env.natural()?;
    let mut session = DiscoverySession::new(skeleton.clone());
    let mut dists: Vec<InducedDistribution> = Vec::with_capacity(n);
    for i in 0..n {
        let f = Mechanism::unit(n, NodeId(i));
        let d = env.deploy(&f)?;
        session.push_deployment(f.describe(n), d.summary());
        dists.push(d);
    }
    let y = skeleton.y();
    while session.sg.len() > 1 {
        let mut found = None;
        let candidates: Vec<NodeId> = session.sg.iter().copied().filter(|&v| v != y).collect();
        for xi in candidates {
            let mut given: Vec<NodeId> = session.graph.ancestors(xi)?.into_iter().collect();
            given.push(xi);
            given.sort();
            let mut is_root = true;
            for v in session.open_neighbors(xi) {
                let t = conditional_shift_test(&dists[xi.0], &d0, v, &given, opts.family, &opts.tests)?;
                session.record_test(xi.0, xi, v, &given, &t);
                if t.shifted {
                    is_root = false;
                    break;
                }
            }
            if is_root {
                found = Some(xi);
                break;
            }
        }
        match found {
            Some(xi) => {
                let children = session.open_neighbors(xi);
                for &v in &children {
                    orient(&mut session, xi, v)?;
                }
                let msg = format!(
                    "{} is a root of the remaining subgraph; oriented {} -> {:?}",
                    session.name(xi),
                    session.name(xi),
                    children.iter().map(|&c| session.name(c)).collect::<Vec<_>>()
                );
                session.log[xi.0].decisions.push(msg);
                session.sg.remove(&xi);
                session.s.push(xi);
            }
            None => {
                if !session.sg.contains(&y) {
                    return Err(Error::FaithfulnessViolation {
                        stuck: session.sg.iter().copied().collect(),
                        reason: "no node passed the test and the outcome node was already eliminated".into(),
                    });
                }
                let children = session.open_neighbors(y);
                for &v in &children {
                    orient(&mut session, y, v)?;
                }
                session.events.push(format!(
                    "no feature root found; y is the root, oriented y -> {:?}",
                    children.iter().map(|&c| session.name(c)).collect::<Vec<_>>()
                ));
                session.sg.remove(&y);
                session.s.push(y);
            }
        }
    }
    if let Some(&last) = session.sg.iter().next() {
        session.sg.remove(&last);
        session.s.push(last);
    }
    if let Some(known) = &opts.known_cost {
        check_consistency(&session, &d0, &dists, known, &opts.tests)?;
    }
    let graph = session.graph.clone();
    Ok(DiscoveryOutcome {
        graph,
        session,
        deployments: env.deployments() - start,
    })
}

/// Orient an edge, reporting a would-be cycle as a faithfulness violation:
/// with faithful tests the peeled node is a true root or leaf, which can
/// never close a cycle.
pub(crate) fn orient(session: &mut DiscoverySession, from: NodeId, to: NodeId) -> Result<()> {
    match session.graph.orient(from, to) {
        Err(Error::WouldCreateCycle { .. }) => Err(Error::FaithfulnessViolation {
            stuck: session.sg.iter().copied().collect(),
            reason: format!(
                "orienting {} -> {} would close a directed cycle",
                session.name(from),
                session.name(to)
            ),
        }),
        other => other,
    }
}

/// Linear SCM fitted on `d0` along the recovered orientation.
fn refit(graph: &OrientedGraph, d0: &InducedDistribution) -> Result<LinearScm> {
    let m = graph.node_count();
    let mut a = DMatrix::zeros(m, m);
    for v in graph.skeleton().nodes() {
        let parents = graph.parents(v);
        if parents.is_empty() {
            continue;
        }
        let fit = fit_conditional(d0, v, &parents, RegressionFamily::Linear)?;
        for (p, c) in parents.iter().zip(&fit.coefficients) {
            a[(v.0, p.0)] = c[0];
        }
    }
    LinearScm::new(graph.n_features(), a, vec![NoiseSpec::standard_normal(); m])
}

fn check_consistency(
    session: &DiscoverySession,
    d0: &InducedDistribution,
    dists: &[InducedDistribution],
    known: &KnownCost,
    tests: &TestOptions,
) -> Result<()> {
    let n = session.skeleton.n_features();
    let scm = StructuralModel::Linear(refit(&session.graph, d0)?);
    let zeros = vec![0.0; n + 1];
    for (j, d) in dists.iter().enumerate() {
        let f = Mechanism::unit(n, NodeId(j));
        let br = closed_form_response(&f, &scm, &known.cost, known.budget, &zeros)?.ok_or_else(|| {
            Error::Unsupported(format!(
                "consistency check has no closed form for {} cost",
                known.cost.class_name()
            ))
        })?;
        let lin = scm.as_linear().expect("refit is linear");
        let predicted = lin.total_effect() * DVector::from_column_slice(br.a_star.as_slice());
        let mut off = Vec::new();
        for v in 0..=n {
            let observed = d.mean()[v] - d0.mean()[v];
            let diff = (observed - predicted[v]).abs();
            let bad = if d.is_exact() && d0.is_exact() {
                diff > tests.exact_tol * (1.0 + observed.abs())
            } else {
                diff / (d.mean_variance(v) + d0.mean_variance(v)).sqrt() > tests.z_threshold
            };
            if bad {
                off.push(NodeId(v));
            }
        }
        if !off.is_empty() {
            return Err(Error::FaithfulnessViolation {
                reason: format!(
                    "deploying f = {} moved the means of {:?} away from what the recovered graph predicts; \
                     a conditional test cancelled",
                    session.name(NodeId(j)),
                    off.iter().map(|&v| session.name(v)).collect::<Vec<_>>()
                ),
                stuck: off,
            });
        }
    }
    Ok(())
}
