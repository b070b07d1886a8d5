use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The input correspondences cannot determine a solution (duplicated,
    /// non-finite, or with a singular affine matrix).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// The constraint matrix lost more than one rank at the solution, so the
    /// translation direction is not determined.
    #[error("degenerate null space (second smallest singular value ratio {ratio:.3e})")]
    DegenerateNullspace { ratio: f64 },

    /// The generalized eigen-decomposition did not converge.
    #[error("eigen-decomposition failed (pencil condition estimate {condition:.3e})")]
    EigenFailure { condition: f64 },

    /// A polynomial product does not fit the fixed coefficient grid.
    #[error("polynomial degree (s^{deg_s}, f^{deg_f}) exceeds grid capacity")]
    PolyCapacity { deg_s: usize, deg_f: usize },

    #[error("triangulation rays are nearly parallel")]
    NearParallelRays,

    #[error("homography is degenerate: {0}")]
    DegenerateHomography(String),

    #[error("zero-length vector")]
    ZeroVector,

    #[error("need at least {needed} correspondences, got {got}")]
    TooFewCorrespondences { needed: usize, got: usize },

    #[error("no model with enough inliers was found")]
    NoModelFound,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("scene sampling failed: {0}")]
    Sampling(String),
}
