use alloc::string::String;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A spectral model violates one of its structural invariants.
    #[error("invalid model: {0}")]
    InvalidModel(String),
    /// The eigenvalue branch reached 1/4 where the complementary series ends.
    #[error("model validity: lambda0 = {value} is not below 1/4")]
    ModelValidity { value: f64 },
    /// The time grid is malformed.
    #[error("invalid grid: {0}")]
    Grid(String),
    /// A stepping scheme could not meet its tolerance.
    #[error("convergence failure: achieved {achieved:.3e}, requested {requested:.3e}")]
    Convergence { achieved: f64, requested: f64 },
    /// A trajectory does not satisfy the relation it claims to come from.
    #[error("consistency error: residual {residual:.3e} exceeds {limit:.3e}")]
    Consistency { residual: f64, limit: f64 },
    /// A tail integral could not be truncated within the allowed range.
    #[error("truncation error: tail bound {bound:.3e} above tolerance {tolerance:.3e}")]
    Truncation { bound: f64, tolerance: f64 },
    /// Adaptive quadrature stopped before reaching its tolerance.
    #[error("quadrature did not converge: achieved {achieved:.3e}")]
    Quadrature { achieved: f64 },
    /// The phase function does not belong to a class with an explicit Morse chart.
    #[error("unsupported phase class: {0}; use fit_expansion on quadrature samples")]
    UnsupportedClass(String),
    /// Coefficient extraction became ill-conditioned.
    #[error("ill-conditioned extraction at order {order} (last stable order {last_stable:?})")]
    Conditioning { order: usize, last_stable: Option<usize> },
    /// A level-set measure could not be resolved.
    #[error("level-set quadrature failed: {0}")]
    LevelSet(String),
    /// A lattice would exceed the configured size cap.
    #[error("lattice of {requested} points exceeds the cap of {cap}")]
    Size { requested: u128, cap: u128 },
}

pub type Result<T> = core::result::Result<T, Error>;
