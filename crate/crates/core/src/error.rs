use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("self-edge on node {0}")]
    SelfEdge(NodeId),

    #[error("edge {0} - {1} is not an unoriented skeleton edge")]
    EdgeNotUnoriented(NodeId, NodeId),

    #[error("orienting {from} -> {to} would close a directed cycle")]
    WouldCreateCycle { from: NodeId, to: NodeId },

    #[error("graph still has {0} unoriented edges")]
    NotFullyOriented(usize),

    #[error("directed cycle through nodes {0:?}")]
    Cycle(Vec<NodeId>),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("missing value for parent {parent} of node {node}")]
    MissingParentValue { node: NodeId, parent: NodeId },

    #[error("invalid cost specification: {0}")]
    InvalidCost(String),

    #[error("invalid mechanism: {0}")]
    InvalidMechanism(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("best-response solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("singular regressor covariance (condition number {condition:.3e})")]
    SingularRegressors { condition: f64 },

    #[error("matrix is singular: {0}")]
    Singular(String),

    /// `stuck` lists the nodes involved: the remaining subgraph when peeling
    /// stalls, or the nodes whose shifts contradict the recovered graph.
    #[error("faithfulness violation at {stuck:?}: {reason}")]
    FaithfulnessViolation { stuck: Vec<NodeId>, reason: String },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("quadratic program is {0}")]
    QpFailure(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
