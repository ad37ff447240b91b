use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("arc references node {id} but the network has {n} nodes")]
    DanglingNodeId { id: usize, n: usize },

    #[error("arc {from} -> {to} has non-positive or non-finite weight {weight}")]
    NegativeWeight { from: usize, to: usize, weight: f64 },

    #[error("production graph contains a directed cycle: {}", format_cycle(.cycle))]
    CycleDetected { cycle: Vec<usize> },

    #[error("item {id} is declared raw material but has {in_degree} upstream components")]
    RawMaterialHasInputs { id: usize, in_degree: usize },

    #[error("duplicate arc {from} -> {to}")]
    DuplicateArc { from: usize, to: usize },

    #[error("density is undefined for networks with fewer than 2 nodes (n = {n})")]
    DegenerateSize { n: usize },

    #[error("infeasible generator spec: {0}")]
    InfeasibleSpec(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unsupported distribution: {0}")]
    UnsupportedDistribution(String),

    #[error("invalid policy: base-stock level {value} at item {item}")]
    InvalidPolicy { item: usize, value: f64 },

    #[error("non-finite {what} at period {t}, item {item}")]
    NonFiniteState {
        what: &'static str,
        t: usize,
        item: usize,
    },

    #[error("non-finite Jacobian entry in {what} at period {t}")]
    NonFiniteJacobian { what: &'static str, t: usize },

    #[error("tape corrupt: {0}")]
    TapeCorrupt(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("optimizer diverged at epoch {epoch}: objective {objective} exceeds {limit}")]
    Diverged {
        epoch: usize,
        objective: f64,
        limit: f64,
    },

    #[error("stage 1 zeroed every base-stock level; nothing to re-optimize")]
    EmptySupport,

    #[error("i/o error: {0}")]
    Io(String),
}

fn format_cycle(cycle: &[usize]) -> String {
    let mut s: Vec<String> = cycle.iter().map(|c| c.to_string()).collect();
    if let Some(first) = cycle.first() {
        s.push(first.to_string());
    }
    s.join(" -> ")
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
