use thiserror::Error;

/// Errors raised by the numerical kernels and pipelines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric: drift {drift:e} exceeds {bound:e}")]
    Asymmetric { drift: f64, bound: f64 },

    #[error("symmetric eigensolver did not converge on a {dim}x{dim} matrix")]
    EigenNonConvergence { dim: usize },

    #[error("operator is not a positive isomorphism: min eigenvalue {min_eigenvalue:e} < {threshold:e}")]
    NotPositive { min_eigenvalue: f64, threshold: f64 },

    #[error(
        "ambiguous spectral split: eigenvalues {eigenvalues:?} lie in the dead zone ({kernel_tol:e}, {gap_tol:e})"
    )]
    AmbiguousSplit {
        eigenvalues: Vec<f64>,
        kernel_tol: f64,
        gap_tol: f64,
    },

    #[error("invalid tolerance: kernel_tol {kernel_tol:e} must be nonnegative and below gap_tol {gap_tol:e}")]
    InvalidTolerance { kernel_tol: f64, gap_tol: f64 },

    #[error("frame is not Lagrangian: orthonormality defect {orthonormality:e}, isotropy defect {isotropy:e}")]
    NotLagrangian { orthonormality: f64, isotropy: f64 },

    #[error("chart domain violated: smallest singular value {singular_value:e} below {threshold:e} ({which})")]
    ChartDomain {
        which: &'static str,
        singular_value: f64,
        threshold: f64,
    },

    #[error("no common transversal found (best gap {best_gap:e} after {candidates} candidates)")]
    TransversalSearch { best_gap: f64, candidates: usize },

    #[error("time {t} outside [{a}, {b}]")]
    OutOfRange { t: f64, a: f64, b: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("integration quality: symplectic drift {max_drift:e} at t = {at} exceeds {bound:e}")]
    IntegrationQuality { max_drift: f64, at: f64, bound: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("system is not positive at t = {t}: min eigenvalue of B {min_eigenvalue:e}")]
    NonPositiveSystem { t: f64, min_eigenvalue: f64 },

    #[error("system is not Riemannian: {0}")]
    NotRiemannian(String),

    #[error("invalid prescription: {0}")]
    InvalidPrescription(String),

    #[error("truncation budget exhausted: {required} dimensions required, {available} available")]
    BudgetExhausted { required: usize, available: usize },

    #[error("verification failed: {check} (value {value:e}, bound {bound:e})")]
    Verification { check: String, value: f64, bound: f64 },
}

impl Error {
    /// True for failures that stem from a numerical quality metric rather
    /// than malformed input.
    pub fn is_quality(&self) -> bool {
        matches!(
            self,
            Error::IntegrationQuality { .. }
                | Error::Verification { .. }
                | Error::EigenNonConvergence { .. }
                | Error::ChartDomain { .. }
                | Error::TransversalSearch { .. }
                | Error::AmbiguousSplit { .. }
                | Error::Singular(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
