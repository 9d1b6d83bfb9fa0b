use thiserror::Error;

/// Errors raised by the library. CLI exit codes are derived from the variant.
#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range for graph with {nodes} nodes")]
    NodeOutOfRange { index: usize, nodes: usize },

    #[error("self-loop edge ({0}, {0}) is not allowed; self loops are added by the augmented adjacency")]
    SelfLoop(usize),

    #[error("graph must have at least one node")]
    EmptyGraph,

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("node {j} is not within {hops} hops of node {i}")]
    OutsideNeighborhood { i: usize, j: usize, hops: usize },

    #[error("missing {what} for node {node}")]
    Missing { what: &'static str, node: usize },

    #[error("parameter estimate norm {norm} lies outside the admissible ball of radius {limit}")]
    OutsideSearchSpace { norm: f64, limit: f64 },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("simulation diverged at t = {time} s (|x0| = {target_norm}, max |y_i| = {influencer_norm}, max |theta_i| = {weight_norm})")]
    Divergence {
        time: f64,
        target_norm: f64,
        influencer_norm: f64,
        weight_norm: f64,
    },

    #[error("unknown {kind} model `{name}`")]
    UnknownModel { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
