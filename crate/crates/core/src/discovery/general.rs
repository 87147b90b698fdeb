use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::env::Environment;
use super::per_node::orient;
use super::session::{DiscoveryOutcome, DiscoverySession};
use crate::agents::Mechanism;
use crate::error::{Error, Result};
use crate::graph::{NodeId, Skeleton};
use crate::observe::{
    fit_conditional, mean_shift_test, InducedDistribution, RegressionFamily, RegressionModel, TestOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneralOptions {
    /// Family for the fitted `ĝ_i` (should contain the true structural functions).
    pub family: RegressionFamily,
    pub tests: TestOptions,
    /// Once the outcome is peeled, the last untested feature of a round must
    /// be a leaf and is accepted without a deployment. Setting this deploys
    /// and tests it anyway, which can expose a faithfulness violation at the
    /// price of exceeding the `N(N-1)/2` deployment bound.
    pub verify_last_candidate: bool,
}

impl Default for GeneralOptions {
    fn default() -> Self {
        Self {
            family: RegressionFamily::Linear,
            tests: TestOptions::default(),
            verify_last_candidate: false,
        }
    }
}

/// Leaf-peeling discovery with isolation mechanisms.
///
/// For each candidate `X_i` the open neighbours `P_i` are regressed out on
/// `D_0` and `f = X_i - ĝ_i(X_{P_i})` is deployed. When `X_i` is a leaf of the
/// remaining subgraph, `P_i` are exactly its parents there, agents move only
/// `X_i`, and no other remaining node's mean shifts. Deployments are cached
/// per `(i, P_i)`, so a candidate is redeployed only after its neighbourhood
/// shrinks; candidates with a cached deployment are tried first. Each round
/// deploys at most one fewer candidate than the subgraph has nodes, so at
/// most `N(N-1)/2` deployments are used for `N` nodes including the outcome.
pub fn discover_general<E: Environment>(
    env: &mut E,
    skeleton: &Skeleton,
    opts: &GeneralOptions,
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
    let mut cache: BTreeMap<(NodeId, Vec<NodeId>), (usize, InducedDistribution)> = BTreeMap::new();
    let y = skeleton.y();
    while session.sg.len() > 1 {
        let mut found = None;
        let mut candidates: Vec<(NodeId, Vec<NodeId>)> = session
            .sg
            .iter()
            .filter(|&&v| v != y)
            .map(|&v| (v, session.open_neighbors(v)))
            .collect();
        candidates.sort_by_key(|(v, p)| !cache.contains_key(&(*v, p.clone())));
        let last = candidates.len().saturating_sub(1);
        for (rank, (xi, p)) in candidates.into_iter().enumerate() {
            let key = (xi, p.clone());
            if rank == last && !session.sg.contains(&y) && !opts.verify_last_candidate && !cache.contains_key(&key) {
                session.events.push(format!(
                    "every other candidate failed; {} must be the leaf",
                    session.name(xi)
                ));
                found = Some((xi, None));
                break;
            }
            if !cache.contains_key(&key) {
                let model = if p.is_empty() {
                    RegressionModel {
                        target: xi,
                        regressors: Vec::new(),
                        family: opts.family,
                        coefficients: Vec::new(),
                        intercept: 0.0,
                        standard_errors: None,
                        intercept_se: None,
                        residual_variance: 0.0,
                    }
                } else {
                    fit_conditional(&d0, xi, &p, opts.family)?
                };
                let f = Mechanism::node_minus_model(xi, model)?;
                let d = env.deploy(&f)?;
                let entry = session.push_deployment(f.describe(n), d.summary());
                cache.insert(key.clone(), (entry, d));
            }
            let (entry, d) = &cache[&key];
            let entry = *entry;
            let mut is_leaf = true;
            let others: Vec<NodeId> = session.sg.iter().copied().filter(|&v| v != xi).collect();
            for v in others {
                let t = mean_shift_test(d, &d0, v, &opts.tests)?;
                session.record_test(entry, xi, v, &[], &t);
                if t.shifted {
                    is_leaf = false;
                    break;
                }
            }
            if is_leaf {
                found = Some((xi, Some(entry)));
                break;
            }
        }
        match found {
            Some((xi, entry)) => {
                let parents = session.open_neighbors(xi);
                for &v in &parents {
                    orient(&mut session, v, xi)?;
                }
                let msg = format!(
                    "{} is a leaf of the remaining subgraph; oriented {:?} -> {}",
                    session.name(xi),
                    parents.iter().map(|&c| session.name(c)).collect::<Vec<_>>(),
                    session.name(xi)
                );
                match entry {
                    Some(entry) => session.log[entry].decisions.push(msg),
                    None => session.events.push(msg),
                }
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
                let parents = session.open_neighbors(y);
                for &v in &parents {
                    orient(&mut session, v, y)?;
                }
                session.events.push(format!(
                    "no feature leaf found; y is the leaf, oriented {:?} -> y",
                    parents.iter().map(|&c| session.name(c)).collect::<Vec<_>>()
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
    let graph = session.graph.clone();
    Ok(DiscoveryOutcome {
        graph,
        session,
        deployments: env.deployments() - start,
    })
}
