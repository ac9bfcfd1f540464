use thiserror::Error;

/// Errors shared by all solver stages.
#[derive(Debug, Error)]
pub enum Error {
    /// A query or particle left the computational box by more than the
    /// clamping tolerance. Usually means the box is too small for the
    /// dynamics it is asked to hold.
    #[error("point ({x}, {y}) is outside the computational box (half-width {half_width}) beyond tolerance: {context}")]
    OutOfDomain {
        x: f64,
        y: f64,
        half_width: f64,
        context: String,
    },

    /// A field produced NaN or infinity (blow-up, or box too small).
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    /// Two operands live on different spatial or temporal grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Atom sets of different cardinality fed to the exact W1 solver.
    #[error("atom sets have different sizes ({0} vs {1})")]
    SizeMismatch(usize, usize),

    /// Exact W1 requested for more atoms than the solver accepts.
    #[error("atom set of size {0} exceeds the exact-solver cap of {1}")]
    TooLarge(usize, usize),

    /// Curve operations that need particle clouds got a density-only curve.
    #[error("measure curve carries no particle clouds: {0}")]
    MissingParticles(String),

    /// Trajectory too short for the requested diagnostic.
    #[error("trajectory has {0} steps, {1} required")]
    TooShort(usize, usize),

    /// A constructor or solver argument violates its invariant.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The semi-Lagrangian step-size bound dt*(a_max + max|f|) <= L/4 failed.
    #[error("time step too large: dt*(a_max + max|f|) = {0:.6} exceeds L/4 = {1:.6}")]
    TimeStepTooLarge(f64, f64),
}

pub type Result<T> = std::result::Result<T, Error>;
