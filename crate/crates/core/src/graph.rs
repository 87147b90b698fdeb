//! Node-indexed graph machinery: skeletons, partially oriented graphs,
//! ancestor queries and topological orders.
//!
//! Nodes are positional. With `n` feature nodes, features occupy indices
//! `0..n` and the outcome node `Y` sits at index `n`, so matrix rows, sample
//! columns and node ids all line up.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Human-readable node label: `x1..xn` for features, `y` for the outcome.
pub fn node_name(n_features: usize, node: NodeId) -> String {
    if node.0 == n_features {
        "y".to_string()
    } else {
        format!("x{}", node.0 + 1)
    }
}

/// Inverse of [`node_name`].
pub fn parse_node_name(n_features: usize, name: &str) -> Option<NodeId> {
    let name = name.trim();
    if name.eq_ignore_ascii_case("y") {
        return Some(NodeId(n_features));
    }
    let idx: usize = name.strip_prefix(['x', 'X'])?.parse().ok()?;
    (1..=n_features).contains(&idx).then(|| NodeId(idx - 1))
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Undirected skeleton over `n_features + 1` nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skeleton {
    n_features: usize,
    edges: BTreeSet<(NodeId, NodeId)>,
}

impl Skeleton {
    pub fn new(n_features: usize) -> Self {
        Self {
            n_features,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_edges(n_features: usize, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Result<Self> {
        let mut skeleton = Self::new(n_features);
        for (a, b) in edges {
            skeleton.add_edge(a, b)?;
        }
        Ok(skeleton)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn node_count(&self) -> usize {
        self.n_features + 1
    }

    pub fn y(&self) -> NodeId {
        NodeId(self.n_features)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count()).map(NodeId)
    }

    pub fn check_node(&self, v: NodeId) -> Result<()> {
        if v.0 < self.node_count() {
            Ok(())
        } else {
            Err(Error::UnknownNode(v))
        }
    }

    pub fn add_edge(&mut self, a: NodeId, b: NodeId) -> Result<()> {
        self.check_node(a)?;
        self.check_node(b)?;
        if a == b {
            return Err(Error::SelfEdge(a));
        }
        self.edges.insert(ordered(a, b));
        Ok(())
    }

    pub fn contains(&self, a: NodeId, b: NodeId) -> bool {
        self.edges.contains(&ordered(a, b))
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbours of `v`, ascending.
    pub fn neighbors(&self, v: NodeId) -> Vec<NodeId> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| {
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
}

/// A skeleton whose edges are partitioned into directed and unoriented sets.
/// The directed part is kept acyclic at all times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrientedGraph {
    skeleton: Skeleton,
    directed: BTreeSet<(NodeId, NodeId)>,
    unoriented: BTreeSet<(NodeId, NodeId)>,
}

impl OrientedGraph {
    pub fn from_skeleton(skeleton: Skeleton) -> Self {
        let unoriented = skeleton.edges.clone();
        Self {
            skeleton,
            directed: BTreeSet::new(),
            unoriented,
        }
    }

    /// Fully oriented graph from a directed edge list. Fails on cycles,
    /// self-edges, unknown nodes and edges listed in both directions.
    pub fn from_dag(n_features: usize, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Result<Self> {
        let edges: Vec<_> = edges.into_iter().collect();
        let skeleton = Skeleton::from_edges(n_features, edges.iter().copied())?;
        let mut graph = Self::from_skeleton(skeleton);
        for &(from, to) in &edges {
            if graph.directed.contains(&(from, to)) {
                continue;
            }
            if graph.directed.contains(&(to, from)) {
                return Err(Error::Cycle(vec![from, to]));
            }
            if let Err(Error::WouldCreateCycle { .. }) = graph.orient(from, to) {
                let mut cycle = graph.directed_path(to, from).unwrap_or_default();
                cycle.push(to);
                return Err(Error::Cycle(cycle));
            }
        }
        Ok(graph)
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn n_features(&self) -> usize {
        self.skeleton.n_features
    }

    pub fn node_count(&self) -> usize {
        self.skeleton.node_count()
    }

    pub fn y(&self) -> NodeId {
        self.skeleton.y()
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.directed.iter().copied()
    }

    pub fn unoriented_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.unoriented.iter().copied()
    }

    pub fn directed_edge_set(&self) -> &BTreeSet<(NodeId, NodeId)> {
        &self.directed
    }

    pub fn is_fully_oriented(&self) -> bool {
        self.unoriented.is_empty()
    }

    pub fn has_directed_edge(&self, from: NodeId, to: NodeId) -> bool {
        self.directed.contains(&(from, to))
    }

    pub fn parents(&self, v: NodeId) -> Vec<NodeId> {
        self.directed
            .iter()
            .filter(|&&(_, to)| to == v)
            .map(|&(from, _)| from)
            .collect()
    }

    pub fn children(&self, v: NodeId) -> Vec<NodeId> {
        self.directed
            .iter()
            .filter(|&&(from, _)| from == v)
            .map(|&(_, to)| to)
            .collect()
    }

    /// Moves the unoriented edge `{from, to}` into the directed set as `from -> to`.
    pub fn orient(&mut self, from: NodeId, to: NodeId) -> Result<()> {
        self.skeleton.check_node(from)?;
        self.skeleton.check_node(to)?;
        let key = ordered(from, to);
        if !self.unoriented.contains(&key) {
            return Err(Error::EdgeNotUnoriented(from, to));
        }
        if self.reaches(to, from) {
            return Err(Error::WouldCreateCycle { from, to });
        }
        self.unoriented.remove(&key);
        self.directed.insert((from, to));
        Ok(())
    }

    fn reaches(&self, start: NodeId, target: NodeId) -> bool {
        self.directed_path(start, target).is_some()
    }

    /// A directed path `start -> ... -> target` (inclusive) if one exists.
    fn directed_path(&self, start: NodeId, target: NodeId) -> Option<Vec<NodeId>> {
        let mut prev = vec![None; self.node_count()];
        let mut seen = vec![false; self.node_count()];
        let mut queue = VecDeque::from([start]);
        seen[start.0] = true;
        while let Some(v) = queue.pop_front() {
            if v == target {
                let mut path = vec![v];
                let mut cur = v;
                while let Some(p) = prev[cur.0] {
                    path.push(p);
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for c in self.children(v) {
                if !seen[c.0] {
                    seen[c.0] = true;
                    prev[c.0] = Some(v);
                    queue.push_back(c);
                }
            }
        }
        None
    }

    /// Nodes with a directed path into `v` (directed edges only). Never contains `v`.
    pub fn ancestors(&self, v: NodeId) -> Result<BTreeSet<NodeId>> {
        self.skeleton.check_node(v)?;
        Ok(self.closure(v, |g, x| g.parents(x)))
    }

    pub fn descendants(&self, v: NodeId) -> Result<BTreeSet<NodeId>> {
        self.skeleton.check_node(v)?;
        Ok(self.closure(v, |g, x| g.children(x)))
    }

    fn closure(&self, v: NodeId, step: impl Fn(&Self, NodeId) -> Vec<NodeId>) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        let mut stack = step(self, v);
        while let Some(x) = stack.pop() {
            if x != v && out.insert(x) {
                stack.extend(step(self, x));
            }
        }
        out
    }

    /// Kahn's algorithm, always releasing the smallest ready index first.
    pub fn topological_order(&self) -> Result<Vec<NodeId>> {
        if !self.is_fully_oriented() {
            return Err(Error::NotFullyOriented(self.unoriented.len()));
        }
        let n = self.node_count();
        let mut indegree = vec![0usize; n];
        for &(_, to) in &self.directed {
            indegree[to.0] += 1;
        }
        let mut ready: BTreeSet<NodeId> = (0..n).filter(|&i| indegree[i] == 0).map(NodeId).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for c in self.children(v) {
                indegree[c.0] -= 1;
                if indegree[c.0] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() != n {
            return Err(Error::Invariant("directed part is cyclic".into()));
        }
        Ok(order)
    }

    /// Graphviz rendering: directed edges solid, unoriented edges dashed.
    pub fn to_dot(&self) -> String {
        let n = self.n_features();
        let mut out = String::from("digraph G {\n");
        for v in self.skeleton.nodes() {
            out.push_str(&format!("  {};\n", node_name(n, v)));
        }
        for &(a, b) in &self.directed {
            out.push_str(&format!("  {} -> {};\n", node_name(n, a), node_name(n, b)));
        }
        for &(a, b) in &self.unoriented {
            out.push_str(&format!(
                "  {} -> {} [style=dashed, dir=none];\n",
                node_name(n, a),
                node_name(n, b)
            ));
        }
        out.push_str("}\n");
        out
    }
}
