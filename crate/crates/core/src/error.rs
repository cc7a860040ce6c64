use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-positive deformation determinant {det:e} (element inversion)")]
    Inversion { det: f64 },

    #[error(
        "return mapping did not converge after {iterations} iterations \
         (flow residual {flow_residual:e}, yield residual {yield_residual:e})"
    )]
    ReturnMapping {
        iterations: usize,
        flow_residual: f64,
        yield_residual: f64,
    },

    #[error("element {element}, gauss point {gauss_point}: {source}")]
    AtQuadPoint {
        element: usize,
        gauss_point: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("macro stretch out of bounds: {0}")]
    OutOfBounds(String),

    #[error("newton iteration did not converge in {iterations} iterations (relative residual {residual:e})")]
    Newton { iterations: usize, residual: f64 },

    #[error("simulation failed at increment {increment} after exhausting bisections: {source}")]
    Simulation {
        increment: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("linear solver failure: {0}")]
    LinearSolve(String),

    #[error(
        "requested {requested} basis vectors but the snapshot matrix has numerical rank {rank}"
    )]
    Rank { requested: usize, rank: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("fingerprint mismatch: expected {expected}, found {found}")]
    Fingerprint { expected: String, found: String },

    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at(element: usize, gauss_point: usize, source: Error) -> Self {
        Error::AtQuadPoint {
            element,
            gauss_point,
            source: Box::new(source),
        }
    }
}
