use thiserror::Error;

/// Errors produced by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("edge `{0}` is not infinite; vertices can only be attached on infinite edges")]
    EdgeNotInfinite(String),
    #[error("attachment length must be finite and positive, got {0}")]
    BadLength(f64),
    #[error("a new vertex needs at least 2 incident edges, got {0}")]
    BadDegree(usize),
    #[error("unknown {kind} `{id}`")]
    Unknown { kind: &'static str, id: String },
    #[error("vertex `{vertex}` is not an endpoint of edge `{edge}`")]
    NotIncident { vertex: String, edge: String },
    #[error("normalization pole: omega = {omega} equals -alpha at vertex `{vertex}`")]
    NormalizationPole { vertex: String, omega: num_complex::Complex64 },
    #[error("omega must be nonzero")]
    ZeroOmega,
    #[error("singular system at omega = {omega} (condition estimate {condition:.3e})")]
    Singular { omega: num_complex::Complex64, condition: f64 },
    #[error("zero-order count inconclusive: {0}")]
    Inconclusive(String),
    #[error("strength at vertex `{0}` must be positive")]
    NonPositiveStrength(String),
    #[error("strength at vertex `{0}` must be nonzero")]
    ZeroStrength(String),
    #[error("resonance condition fails: zero order {zero_order} at the origin, expected {expected}")]
    ResonanceCondition { zero_order: usize, expected: usize },
    #[error("quadrature did not converge: relative change {0:.3e}")]
    Quadrature(f64),
    #[error("near-degenerate eigenvalue at omega = {0} (singular value gap {1:.3e})")]
    DegenerateRoot(f64, f64),
    #[error("matrix size mismatch: {0}")]
    SizeMismatch(String),
    #[error("invalid coupling at vertex `{vertex}`: {reason}")]
    InvalidCoupling { vertex: String, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
