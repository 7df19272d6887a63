//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by covariance-matrix kernels, gate solvers, and circuit
/// transformations.
#[derive(Debug, Clone, Error)]
pub enum FgsError {
    /// A vector that must be eliminated has norm below the zero tolerance.
    #[error("cannot build an elimination rotation from a zero vector (norm {0:.3e})")]
    ZeroVector(f64),

    /// A matrix required to be antisymmetric is not, within tolerance.
    #[error("matrix is not antisymmetric: max |A + Aᵀ| = {0:.3e}")]
    NotAntisymmetric(f64),

    /// A Pfaffian was requested for an odd-dimensional matrix.
    #[error("Pfaffian requires even dimension, got {0}")]
    OddDimension(usize),

    /// A covariance matrix required to be pure is mixed.
    #[error("covariance matrix is not pure: max |ΓΓᵀ - 1| = {0:.3e}")]
    NotPure(f64),

    /// An off-diagonal CM block has odd numerical rank, which cannot happen
    /// for exact fermionic Gaussian states; signals numerical breakdown.
    #[error("off-diagonal CM block has odd rank {0}; numerical breakdown")]
    OddRank(usize),

    /// A 4x4 unitary violates the matchgate block structure or determinant
    /// constraint.
    #[error("not a matchgate: {0}")]
    NotMatchgate(String),

    /// A matrix required to be (special) orthogonal is not.
    #[error("matrix is not special orthogonal: {0}")]
    NotOrthogonal(String),

    /// An orthogonal matrix with determinant -1 cannot be decomposed into
    /// rotations alone.
    #[error("matrix has determinant -1; a reflection is required")]
    ReflectionRequired,

    /// No reference entry was large enough to fix a scalar phase. Internal
    /// error: cannot occur for valid matchgate inputs.
    #[error("phase fix failed: all candidate reference entries below {0:.3e}")]
    PhaseFixFailure(f64),

    /// A circuit violates the right-standard-form layout constraints.
    #[error("invalid RSF layout: {0}")]
    InvalidRsf(String),

    /// A two-qubit gate does not commute with the two-qubit parity operator.
    #[error("gate is not parity preserving: max parity cross-block entry {0:.3e}")]
    NotParityPreserving(f64),

    /// A statevector-oracle request exceeds the configured qubit cap.
    #[error("statevector oracle capped at {cap} qubits, got {n}")]
    TooLarge { n: usize, cap: usize },

    /// A doped inner-product contraction would exceed the frontier cap.
    #[error("contraction frontier {frontier} exceeds cap {cap}")]
    ContractionTooLarge { frontier: usize, cap: usize },

    /// An entanglement-cutting block is too small for the CM's band width.
    #[error("cut block of {size} qubits is too small: need at least β+2 = {need}")]
    BlockTooSmall { size: usize, need: usize },

    /// A covariance matrix lacks the banded structure an entanglement cut
    /// relies on.
    #[error("covariance matrix is not banded as required: {0}")]
    NotBanded(String),

    /// A Pauli-string expectation cannot be evaluated within the matchgate
    /// gate set.
    #[error("Pauli layer leaves the matchgate gate set: {0}")]
    UnsupportedParity(String),

    /// Malformed data in an input file or request.
    #[error("validation failed: {0}")]
    Validation(String),
}

pub type FgsResult<T> = Result<T, FgsError>;
