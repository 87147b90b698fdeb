//! Causal strategic prediction: agents best-respond to deployed scoring
//! mechanisms over a structural causal model, and a principal recovers the
//! causal graph and the risk/improvement trade-off from the induced
//! distributions.

pub mod agents;
pub mod discovery;
pub mod error;
pub mod experiment;
pub mod generate;
pub mod graph;
pub mod linalg;
pub mod observe;
pub mod pareto;
pub mod scm;

pub use agents::{BestResponse, CostSpec, Mechanism, NodeCost, NumericOptions};
pub use error::{Error, Result};
pub use graph::{node_name, parse_node_name, NodeId, OrientedGraph, Skeleton};
pub use observe::{InducedDistribution, Mode, RegressionFamily, RegressionModel};
pub use scm::{AdditiveScm, Intervention, LinearScm, NodeEquation, NoiseSpec, StructuralFn, StructuralModel};
