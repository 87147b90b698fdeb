use std::collections::BTreeSet;
use std::io;

use serde::{Deserialize, Serialize};

use crate::agents::MechanismRecord;
use crate::graph::{node_name, NodeId, OrientedGraph, Skeleton};
use crate::observe::{DistributionSummary, ShiftTest};

/// One statistical test evaluated against a deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub candidate: String,
    pub node: String,
    /// Conditioning set of a conditional test; empty for mean tests.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub given: Vec<String>,
    pub statistic: f64,
    pub threshold: f64,
    pub shifted: bool,
}

/// One deployment with everything decided from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub deployment: usize,
    pub mechanism: MechanismRecord,
    pub distribution: DistributionSummary,
    pub tests: Vec<TestRecord>,
    pub decisions: Vec<String>,
}

/// State of a discovery run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoverySession {
    pub skeleton: Skeleton,
    pub graph: OrientedGraph,
    /// Nodes still in the unoriented subgraph.
    pub sg: BTreeSet<NodeId>,
    /// Oriented nodes, in the order they were peeled.
    pub s: Vec<NodeId>,
    pub log: Vec<LogEntry>,
    /// Decisions not tied to a deployment (outcome-node eliminations).
    pub events: Vec<String>,
}

impl DiscoverySession {
    pub fn new(skeleton: Skeleton) -> Self {
        let sg = skeleton.nodes().collect();
        let graph = OrientedGraph::from_skeleton(skeleton.clone());
        Self {
            skeleton,
            graph,
            sg,
            s: Vec::new(),
            log: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn name(&self, v: NodeId) -> String {
        node_name(self.skeleton.n_features(), v)
    }

    pub(crate) fn push_deployment(&mut self, mechanism: MechanismRecord, distribution: DistributionSummary) -> usize {
        let idx = self.log.len();
        self.log.push(LogEntry {
            deployment: idx + 1,
            mechanism,
            distribution,
            tests: Vec::new(),
            decisions: Vec::new(),
        });
        idx
    }

    pub(crate) fn record_test(
        &mut self,
        entry: usize,
        candidate: NodeId,
        node: NodeId,
        given: &[NodeId],
        t: &ShiftTest,
    ) {
        let rec = TestRecord {
            candidate: self.name(candidate),
            node: self.name(node),
            given: given.iter().map(|&g| self.name(g)).collect(),
            statistic: t.statistic,
            threshold: t.threshold,
            shifted: t.shifted,
        };
        self.log[entry].tests.push(rec);
    }

    /// Unoriented skeleton neighbours of `v`, all of which lie in `sg`.
    pub fn open_neighbors(&self, v: NodeId) -> Vec<NodeId> {
        self.graph
            .unoriented_edges()
            .filter_map(|(a, b)| {
                if a == v {
                    Some(b)
                } else if b == v {
                    Some(a)
                } else {
                    None
                }
            })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// JSON-lines session log: one record per deployment, then one per event.
    pub fn write_jsonl<W: io::Write>(&self, mut w: W) -> crate::Result<()> {
        for entry in &self.log {
            serde_json::to_writer(&mut w, entry)?;
            w.write_all(b"\n")?;
        }
        for event in &self.events {
            serde_json::to_writer(&mut w, &serde_json::json!({ "event": event }))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Result of a discovery run.
#[derive(Debug, Clone)]
pub struct DiscoveryOutcome {
    pub graph: OrientedGraph,
    pub session: DiscoverySession,
    pub deployments: usize,
}
