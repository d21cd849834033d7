use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh 2^-{exponent} exceeds the supported size 2^-{max}")]
    MeshTooLarge { exponent: u32, max: u32 },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("permeability is not uniformly elliptic: lower bound u_* = {lower_bound} must be > 0")]
    NotElliptic { lower_bound: f64 },
    #[error("zero pivot at row {row} in tridiagonal elimination")]
    ZeroPivot { row: usize },
    #[error("point x = {0} lies outside [0, 1]")]
    OutsideDomain(f64),
    #[error("meshes are not nested: coarse 2^-{coarse} vs fine 2^-{fine}")]
    NotNested { coarse: u32, fine: u32 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("noise covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("parameter outside the prior support [-1, 1]^K")]
    OutsideSupport,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("rejection sampler acceptance rate {rate:.3e} is below {threshold:.0e} after {proposals} proposals")]
    RejectionTooInefficient { rate: f64, threshold: f64, proposals: u64 },
    #[error("invalid (non-finite) weight at index {index}")]
    InvalidWeight { index: usize },
    #[error("all weights are zero at level {level}")]
    DegenerateWeights { level: usize },
    #[error("rate fit: {0}")]
    Fit(String),
    #[error("level count {needed} exceeds the cap {cap}")]
    LevelCap { needed: usize, cap: usize },
    #[error("ground truth check failed: {0}")]
    GroundTruth(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
