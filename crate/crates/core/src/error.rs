use crate::sampler::RunStats;

/// Crate-wide error type.
///
/// `Interrupted` is not a correctness failure: it reports that a bounded run
/// hit its iteration cap with vertices still unresolved, and carries the run
/// statistics so the caller can decide whether to restart.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("vertex {vertex} out of range for graph on {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("self-loop at vertex {vertex}")]
    SelfLoop { vertex: usize },

    #[error("duplicate edge ({u}, {v})")]
    DuplicateEdge { u: usize, v: usize },

    #[error("enumerating {base}^{exponent} states exceeds the cap of {cap}")]
    EnumerationCapExceeded {
        base: usize,
        exponent: usize,
        cap: u64,
    },

    #[error("partition function is zero; no feasible configuration exists")]
    ZeroPartition,

    #[error("conditional partition function is zero; the system is not permissive")]
    ZeroConditionalPartition,

    #[error("greedy construction found no feasible spin at vertex {vertex}")]
    InfeasibleGreedyStep { vertex: usize },

    #[error("single-site runs require strictly positive weights; zero entry found in {place}")]
    HardConstraintRejected { place: String },

    #[error(
        "run interrupted after {} iterations with {unresolved} vertices unresolved",
        stats.iterations
    )]
    Interrupted {
        stats: Box<RunStats>,
        unresolved: usize,
    },

    #[error("distributions are over different outcome spaces")]
    OutcomeMismatch,

    #[error("too few samples for a goodness-of-fit test ({detail})")]
    TooFewSamples { detail: String },

    #[error("line graph of a graph with no edges is undefined")]
    EmptyEdgeSet,

    #[error("torus requires both side lengths >= 3, got {width}x{height}")]
    DegenerateTorus { width: usize, height: usize },

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
