use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("ratio {ratio} has no rational approximation K_S/K with K <= {k_max} within {tol:e}")]
    NotCyclic { ratio: f64, tol: f64, k_max: u64 },

    #[error("effective frame is degenerate (precession rate vanishes)")]
    DegenerateFrame,

    #[error("solid angle undefined: mean angular momentum vanishes")]
    UndefinedSolidAngle,

    #[error("cyclic fidelity {0} is below 1 - 1e-9")]
    FidelityFailure(f64),

    #[error("Hamiltonian sample at t = {t} is not Hermitian (defect {defect:e})")]
    NonHermitian { t: f64, defect: f64 },

    #[error("trajectory does not close: |e(T) - e(0)| = {0:e}")]
    NotClosed(f64),

    #[error("trace passes through the antipode of the quadrature pole")]
    AntipodePassage,

    #[error("eigen residual {residual:e} exceeds {tolerance:e}")]
    EigenResidual { residual: f64, tolerance: f64 },
}

pub type Result<T> = std::result::Result<T, PhaseError>;
