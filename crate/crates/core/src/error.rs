use thiserror::Error;

/// Errors raised by model construction and the numerical kernels.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    Dimension {
        expected: usize,
        found: usize,
        context: String,
    },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("{what} is not hermitian (max |A - A^dag| = {defect:e})")]
    NotHermitian { what: String, defect: f64 },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error(
        "steady state is not unique: kernel dimension {kernel_dim} \
         (second-smallest singular value {second_smallest:e}, threshold {threshold:e})"
    )]
    DegenerateSteadyState {
        kernel_dim: usize,
        second_smallest: f64,
        threshold: f64,
    },

    #[error("state is not positive semidefinite: minimum eigenvalue {min_eigenvalue:e} ({context})")]
    Positivity { min_eigenvalue: f64, context: String },

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error("integrator step size underflow at t = {t:e} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("state is not stationary: |L rho| = {residual:e}")]
    NotStationary { residual: f64 },

    #[error(
        "dominant eigenvalue of the tilted generator is not isolated at chi = {chi:e} \
         (gap {gap:e}); retry with a smaller chi_step"
    )]
    EigenvalueCrossing { chi: f64, gap: f64 },

    #[error("time step too coarse: dt * total rate = {product:e} exceeds {limit}")]
    TimeStepTooCoarse { product: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
