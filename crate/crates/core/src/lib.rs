//! Matchgate-circuit representation, synthesis, and classical simulation of
//! pure fermionic Gaussian states (FGS).
//!
//! A pure FGS on `n` qubits is completely described by its `2n x 2n` real
//! antisymmetric covariance matrix (CM) of Majorana two-point functions,
//! which is orthogonal exactly when the state is pure. Matchgates, the
//! two-qubit gates preserving Gaussianity, act on the CM through their SO(4)
//! rotations; this crate keeps both pictures in sync so that circuits can be
//! manipulated at the cheap CM level while exact amplitudes (inner products,
//! phases) remain available.
//!
//! The main subsystems:
//!
//! - [`linalg`]: dense kernels on small real matrices: Givens eliminations,
//!   a sign-correct Pfaffian, the fermionic Williamson normal form, band
//!   width and Schmidt-rank probes of CMs.
//! - [`matchgate`]: the matchgate type with its unitary/rotation/parameter
//!   triple, plus the exact Yang-Baxter (GYB) and left-right (LR) rewrite
//!   solvers with phase tracking.
//! - [`circuit`]: right standard form (RSF) circuits, layout enumeration,
//!   and the absorption algorithm compressing arbitrary matchgate circuits
//!   into RSF.
//! - [`synthesis`]: circuit synthesis from a CM: symmetric Euler
//!   decomposition (single- and two-column), the enhanced Schmidt-rank
//!   optimal variant, and triangle/brickwall decompositions of orthogonal
//!   matrices.
//! - [`cutting`]: exact and approximate entanglement cutting of banded CMs
//!   into block-local circuits.
//! - [`simulate`]: CM evolution, Wick expectations, the phase-sensitive
//!   inner-product contraction, Pauli expectation values, and the dense
//!   statevector oracle used for verification.
//! - [`doped`]: t-doped matchgate circuits (matchgates plus a few
//!   parity-preserving non-matchgate gates) and their standard forms.
//! - [`models`]: ground-state CMs of quadratic fermion Hamiltonians
//!   (transverse-field Ising chain, long-range Kitaev, 2D BCS).

pub mod circuit;
pub mod cutting;
pub mod doped;
pub mod error;
pub mod linalg;
pub mod matchgate;
pub mod models;
pub mod simulate;
pub mod synthesis;

pub use error::{FgsError, FgsResult};

/// Complex double, the scalar type of all unitaries and statevectors.
pub type C64 = num_complex::Complex<f64>;

/// Entries with absolute value below this are treated as exact zeros.
pub const TOL_ZERO: f64 = 1e-12;
/// Singular values above this count toward a numerical rank.
pub const TOL_RANK: f64 = 1e-9;
/// Allowed deviation from antisymmetry, `max |Γ + Γᵀ|`.
pub const TOL_ASYM: f64 = 1e-10;
/// Allowed deviation from purity, `max |ΓΓᵀ - 1|`.
pub const TOL_PURE: f64 = 1e-8;
/// Entries below this (relative to the column scale) do not extend a band.
pub const TOL_BAND: f64 = 1e-10;
/// Largest qubit count the dense statevector oracle accepts by default.
pub const ORACLE_CAP: usize = 14;
