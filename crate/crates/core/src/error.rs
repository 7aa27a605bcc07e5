use thiserror::Error;

/// Everything that can go wrong inside the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("quadrature did not converge: {0}")]
    NonConvergence(String),
    #[error("profile has zero mass and cannot be sampled")]
    ZeroMass,
    #[error("profile data: {0}")]
    ProfileData(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("annihilating partial fusions: the projectors have no common support")]
    Annihilation,
    #[error("zero-norm state")]
    ZeroNorm,
    #[error("graph: {0}")]
    Graph(String),
    #[error("{0} qubits exceeds the dense-simulation cap of {max}", max = crate::oracle::MAX_QUBITS)]
    TooManyQubits(usize),
    #[error("state dimension mismatch")]
    DimensionMismatch,
    #[error("conditioning on a null event: {0}")]
    NullConditioning(String),
    #[error("undefined tilt: both likelihood products vanish")]
    UndefinedTilt,
    #[error("trajectory integration: {0}")]
    Trajectory(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("series expansion: {0}")]
    Series(String),
    #[error("exhausted: {0}")]
    Exhausted(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn graph_err(msg: impl Into<String>) -> Error {
    Error::Graph(msg.into())
}

pub(crate) fn finite(x: f64, what: &'static str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what))
    }
}
