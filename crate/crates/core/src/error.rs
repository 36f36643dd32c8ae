use thiserror::Error;

/// Errors produced by graph, schedule, gossip and optimization routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("graph is disconnected: {zero_eigenvalues} eigenvalues below the zero threshold")]
    DisconnectedGraph { zero_eigenvalues: usize },

    #[error("graph has no nonzero Laplacian eigenvalue (n = {n})")]
    DegenerateSpectrum { n: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("vertex {vertex} is invalid for a graph on {n} vertices")]
    InvalidVertex { vertex: usize, n: usize },

    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),

    #[error("edge ({0}, {1}) of the smaller graph is missing from the larger graph")]
    NotSubgraph(usize, usize),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("partition family does not match the tree: {0}")]
    FamilyMismatch(String),

    #[error("step {step}: effective Laplacian has lambda_max {lambda} above the bound {bound}")]
    SpectralBoundViolation { step: usize, lambda: f64, bound: f64 },

    #[error("the common skeleton of the graph sequence is disconnected")]
    DisconnectedSkeleton,

    #[error("condition number is 1; the momentum potential is undefined")]
    KappaOne,

    #[error("function sequence contract violated at step {step}: {detail}")]
    ContractViolation { step: usize, detail: String },

    #[error("schedule invariant broken at step {step}: {detail}")]
    Invariant { step: usize, detail: String },

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("config error in `{field}`: {detail}")]
    Config { field: String, detail: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
