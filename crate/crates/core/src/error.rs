use thiserror::Error;

/// Crate-wide error type.
///
/// Numerical routines fail loudly instead of limping along with garbage:
/// non-finite input, loss of rank, and leaving a projection's trust region
/// are all hard errors carried up to the caller.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),

    #[error("rank-deficient input in {0}")]
    RankDeficient(&'static str),

    #[error("matrix not positive definite in {0}")]
    NotPositiveDefinite(&'static str),

    #[error("input too far from the manifold for a series projection (residual norm {0:.3e} >= 0.5)")]
    TooFarFromManifold(f64),

    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid shape: {0}")]
    ShapeInvalid(String),

    #[error("points are (near-)antipodal; the connecting geodesic is not unique")]
    AntipodalPoints,

    #[error("cross-product matrix is singular; the closed-form minimizer is not unique")]
    SingularCrossProduct,

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("I/O failure: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
