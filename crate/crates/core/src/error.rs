use crate::netcore::NodePair;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// The variants are grouped roughly by layer: input problems first, then
/// modifiability and design failures, then numerical trouble.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("edge {0} does not exist")]
    EdgeNotFound(NodePair),
    #[error("the graph contains a directed cycle")]
    NotADag,

    #[error("edge {edge} cannot be {action}")]
    NotModifiable { edge: NodePair, action: String },
    #[error("expected exactly one nonzero entry, found {0}")]
    NotSingleEdge(usize),
    #[error("perturbation is not realizable: {0}")]
    Unrealizable(String),
    #[error("driver {0} is needed by more than one cluster")]
    DriverConflict(NodePair),
    #[error("a weight change of sign {sign} is impossible on edge {edge} through its reverse edge")]
    WrongDirection { edge: NodePair, sign: i8 },
    #[error("edge {0} is not in a 2-cycle")]
    NotDirect(NodePair),
    #[error("edge {0} cannot be removed by direct control")]
    NotDirectlyRemovable(NodePair),
    #[error("no real amplitude realizes the requested change on {0}")]
    NoRealSolution(NodePair),
    #[error("invalid witness: {0}")]
    InvalidWitness(String),
    #[error("edge {0} already exists")]
    EdgeAlreadyExists(NodePair),
    #[error("amplitude for {0} would need the square root of a negative number")]
    NegativeRadicand(NodePair),
    #[error("anchor {0} has a zero weight change")]
    ZeroAnchorDelta(NodePair),

    #[error("vibration support is not nilpotent; the closed form does not apply")]
    NotNilpotent,
    #[error("running average did not settle: change {change:e} at horizon {horizon}")]
    NonConvergent { horizon: f64, change: f64 },
    #[error("fundamental matrix is singular or ill-conditioned near s = {time}")]
    SingularFundamental { time: f64 },
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error("state became non-finite at t = {time}")]
    NonFinite { time: f64 },
    #[error("trajectory grids differ: {0}")]
    GridMismatch(String),
    #[error("node {node} has diagonal entry {value}; a negative self-loop is required everywhere")]
    AssumptionViolated { node: usize, value: f64 },
    #[error("no stabilizing plan found: {0}")]
    NotFound(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
