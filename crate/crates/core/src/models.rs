//! Ground-state covariance matrices of quadratic Majorana-chain models.
//!
//! All Hamiltonians here are quadratic in Majorana operators and therefore
//! have fermionic Gaussian ground states. Writing `H = (i/4)·cᵀA c` with a
//! real antisymmetric coefficient matrix `A`, the Williamson normal form
//! `R A Rᵀ = ⊕ λ_i J₂` diagonalizes the energy: a Gaussian state with CM
//! `Γ = Rᵀ(⊕ σ_i J₂)R`, `σ_i = ±1`, has energy `(1/2)·Σ λ_i σ_i`, so the
//! ground state takes `σ_i = −sign(λ_i)` and energy `−(1/2)·Σ|λ_i|`. The
//! sign conventions (the implicit `i` making each written `c_a c_b` term
//! Hermitian, and the direction of the energy minimization) are pinned by
//! the exact-diagonalization oracle in this module's tests.
//!
//! Models:
//!
//! - [`ising_ground_cm`]: the transverse-field Ising chain in Majorana form,
//!   `H₁ = −Σ c_{2i}c_{2i+1} − g·Σ c_{2i−1}c_{2i}` (1-based Majorana labels;
//!   the first sum is the hopping between neighbouring sites, the second the
//!   on-site field). Critical at `g = 1`; for `g > 1` the ground state is
//!   unique and its CM is approximately banded.
//! - [`lrk_ground_cm`]: the long-range Kitaev chain, where the hopping
//!   couples every site pair at distance `d` with strength `d^{−α}` and the
//!   on-site field is `g`. Both models are expressed through one uniform
//!   term family, so `α → ∞` reproduces the Ising chain exactly.
//! - [`bcs2d_ground_cm`]: spin-½ fermions on an `L×L` lattice with hopping
//!   `t`, chemical potential `μ`, and an s-wave pairing `Δ`, relabeled onto
//!   a chain of `n = 2L²` qubits (row-major site order, spin innermost).

use nalgebra::DMatrix;

use crate::error::{FgsError, FgsResult};
use crate::linalg::{williamson_form, CovarianceMatrix};

/// Williamson eigenvalues below this magnitude flag a degenerate ground
/// space (the corresponding mode costs no energy to flip).
pub const TOL_DEGENERATE: f64 = 1e-10;

/// A Gaussian ground state produced by [`ground_state_from_coefficients`]:
/// the covariance matrix together with the ground energy and a degeneracy
/// flag.
#[derive(Debug, Clone)]
pub struct GroundState {
    /// Pure covariance matrix of the (or, if degenerate, a) ground state.
    pub cm: CovarianceMatrix,
    /// Ground energy `−(1/2)·Σ|λ_i|` of `H = (i/4)·cᵀA c`.
    pub energy: f64,
    /// True when some Williamson eigenvalue of `A` vanishes within
    /// [`TOL_DEGENERATE`], i.e. the minimizing CM is not unique.
    pub degenerate: bool,
}

/// Accumulates Hermitian quadratic terms `w·i·c_p c_q` into the coefficient
/// matrix of `H = (i/4)·cᵀA c`.
struct QuadraticTerms {
    a: DMatrix<f64>,
}

impl QuadraticTerms {
    fn new(modes: usize) -> Self {
        Self {
            a: DMatrix::zeros(modes, modes),
        }
    }

    /// Adds the Hermitian term `w·i·c_p c_q` (p ≠ q).
    fn add(&mut self, p: usize, q: usize, w: f64) {
        debug_assert_ne!(p, q, "quadratic terms need distinct Majoranas");
        self.a[(p, q)] += 2.0 * w;
        self.a[(q, p)] -= 2.0 * w;
    }
}

/// Ground state of `H = (i/4)·cᵀA c` for a real antisymmetric `A`: Williamson
/// form of `A`, then per-mode sign choice `σ_i = −sign(λ_i)` minimizing the
/// energy. The returned CM is exactly pure by construction.
pub fn ground_state_from_coefficients(a: &DMatrix<f64>) -> FgsResult<GroundState> {
    let (r, lambdas) = williamson_form(a)?;
    let dim = a.nrows();
    let mut d = DMatrix::<f64>::zeros(dim, dim);
    let mut energy = 0.0;
    let mut degenerate = false;
    for (i, &lam) in lambdas.iter().enumerate() {
        let sigma = if lam >= 0.0 { -1.0 } else { 1.0 };
        d[(2 * i, 2 * i + 1)] = -sigma;
        d[(2 * i + 1, 2 * i)] = sigma;
        energy -= 0.5 * lam.abs();
        degenerate |= lam.abs() < TOL_DEGENERATE;
    }
    let cm = CovarianceMatrix::new(r.transpose() * d * r)?;
    Ok(GroundState {
        cm,
        energy,
        degenerate,
    })
}

/// Coefficient matrix of the Ising chain `H₁` on `n` sites with transverse
/// field `g`: hopping `i·c_{2i−1}c_{2i}` between neighbours (0-based labels:
/// the second Majorana of site `i` with the first of site `i+1`) at strength
/// 1, plus the on-site field `g·i·c_{2i−2}c_{2i−1}`.
pub fn ising_coefficients(n: usize, g: f64) -> DMatrix<f64> {
    let mut terms = QuadraticTerms::new(2 * n);
    for q in 0..n {
        terms.add(2 * q, 2 * q + 1, g);
        if q + 1 < n {
            terms.add(2 * q + 1, 2 * q + 2, 1.0);
        }
    }
    terms.a
}

/// Ground state of the Ising chain: CM, energy, and degeneracy flag.
///
/// Requires `n ≥ 2` and `g > 0`. For `g > 1` (the disordered phase) the
/// ground state is unique and its CM is approximately banded with
/// exponentially decaying off-diagonals; for `g < 1` the flag reports any
/// numerically degenerate mode.
pub fn ising_ground_state(n: usize, g: f64) -> FgsResult<GroundState> {
    if n < 2 {
        return Err(FgsError::Validation(format!(
            "Ising chain needs at least 2 sites, got {n}"
        )));
    }
    if g <= 0.0 || !g.is_finite() {
        return Err(FgsError::Validation(format!(
            "Ising field must be positive and finite, got {g}"
        )));
    }
    ground_state_from_coefficients(&ising_coefficients(n, g))
}

/// Ground-state covariance matrix of the Ising chain (see
/// [`ising_ground_state`]).
pub fn ising_ground_cm(n: usize, g: f64) -> FgsResult<CovarianceMatrix> {
    Ok(ising_ground_state(n, g)?.cm)
}

/// Coefficient matrix of the long-range Kitaev chain: the Ising term family
/// with the nearest-neighbour hopping generalized to all distances,
/// `d^{−α}·i·c_{2i+1}c_{2(i+d)}` (0-based site `i`, distance `d ≥ 1`), plus
/// the on-site field `g`. At `α → ∞` only `d = 1` survives and the matrix
/// equals [`ising_coefficients`].
pub fn lrk_coefficients(n: usize, alpha: f64, g: f64) -> DMatrix<f64> {
    let mut terms = QuadraticTerms::new(2 * n);
    for q in 0..n {
        terms.add(2 * q, 2 * q + 1, g);
        for d in 1..n - q {
            terms.add(2 * q + 1, 2 * (q + d), (d as f64).powf(-alpha));
        }
    }
    terms.a
}

/// Ground state of the long-range Kitaev chain with hopping exponent `α` and
/// field `g`. Requires `n ≥ 2`, `α > 0`, `g > 0`.
pub fn lrk_ground_state(n: usize, alpha: f64, g: f64) -> FgsResult<GroundState> {
    if n < 2 {
        return Err(FgsError::Validation(format!(
            "Kitaev chain needs at least 2 sites, got {n}"
        )));
    }
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(FgsError::Validation(format!(
            "hopping decay exponent must be positive and finite, got {alpha}"
        )));
    }
    if g <= 0.0 || !g.is_finite() {
        return Err(FgsError::Validation(format!(
            "field must be positive and finite, got {g}"
        )));
    }
    ground_state_from_coefficients(&lrk_coefficients(n, alpha, g))
}

/// Ground-state covariance matrix of the long-range Kitaev chain (see
/// [`lrk_ground_state`]).
pub fn lrk_ground_cm(n: usize, alpha: f64, g: f64) -> FgsResult<CovarianceMatrix> {
    Ok(lrk_ground_state(n, alpha, g)?.cm)
}

/// Correlation-decay exponent `γ` of a chain CM, estimated from the decay of
/// the first row pair: fits `log √(Σ_{i,j∈{1,2}} Γ²_{i,2x+j}) ≈ −γ·log x`
/// over `x = 1..n/2` by least squares (stopping early once the row norm
/// drops to the numerical floor, where log-log points are pure noise).
pub fn correlation_decay_exponent(cm: &CovarianceMatrix) -> FgsResult<f64> {
    let n = cm.n();
    if n < 6 {
        return Err(FgsError::Validation(format!(
            "need at least 6 sites to fit a decay exponent, got {n}"
        )));
    }
    let g = cm.mat();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for x in 1..=n / 2 {
        let mut sq = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                sq += g[(i, 2 * x + j)].powi(2);
            }
        }
        let v = sq.sqrt();
        if v < 1e-13 {
            break;
        }
        xs.push((x as f64).ln());
        ys.push(v.ln());
    }
    if xs.len() < 3 {
        return Err(FgsError::Validation(
            "too few usable correlation points for a log-log fit".into(),
        ));
    }
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    Ok(-num / den)
}

/// Coefficient matrix of the 2D BCS lattice model on an `L×L` lattice of
/// spin-½ fermions, mapped to a chain of `n = 2L²` qubits.
///
/// Mode labels: site `x = (x₁, x₂)` with spin `σ ∈ {↑=0, ↓=1}` becomes chain
/// mode `i(x,σ) = 2L·x₁ + 2x₂ + σ` (row-major over sites, spin innermost;
/// for `L = 2` this is the textbook `4x₁ + 2x₂ + σ`), carrying Majoranas
/// `c_{2i}` ("A") and `c_{2i+1}` ("B").
///
/// Terms (each `w·c_a c_b` below stands for the Hermitian `w·i·c_a c_b`):
/// nearest-neighbour hopping `t·(c_{x,σ,A} c_{y,σ,B} + c_{y,σ,A} c_{x,σ,B})`
/// over lattice bonds with open boundaries, the chemical potential
/// `μ·c_{x,σ,A} c_{x,σ,B}`, and the on-site pairing
/// `−Δ·c_{x,↑,A} c_{x,↓,A} + Δ·c_{x,↑,B} c_{x,↓,B} + 2Δ·c_{x,↑,A} c_{x,↓,B}`.
pub fn bcs2d_coefficients(l: usize, t: f64, mu: f64, delta: f64) -> DMatrix<f64> {
    let mode = |x1: usize, x2: usize, s: usize| 2 * l * x1 + 2 * x2 + s;
    let maj_a = |x1: usize, x2: usize, s: usize| 2 * mode(x1, x2, s);
    let maj_b = |x1: usize, x2: usize, s: usize| 2 * mode(x1, x2, s) + 1;
    let mut terms = QuadraticTerms::new(4 * l * l);
    for x1 in 0..l {
        for x2 in 0..l {
            for s in 0..2 {
                terms.add(maj_a(x1, x2, s), maj_b(x1, x2, s), mu);
                // Bonds to the right and downward, both hop orientations.
                for (y1, y2) in [(x1 + 1, x2), (x1, x2 + 1)] {
                    if y1 < l && y2 < l {
                        terms.add(maj_a(x1, x2, s), maj_b(y1, y2, s), t);
                        terms.add(maj_a(y1, y2, s), maj_b(x1, x2, s), t);
                    }
                }
            }
            terms.add(maj_a(x1, x2, 0), maj_a(x1, x2, 1), -delta);
            terms.add(maj_b(x1, x2, 0), maj_b(x1, x2, 1), delta);
            terms.add(maj_a(x1, x2, 0), maj_b(x1, x2, 1), 2.0 * delta);
        }
    }
    terms.a
}

/// Ground state of the 2D BCS lattice model on `n = 2L²` chain qubits.
/// Requires `L ≥ 2` and finite parameters. At `(t, μ, Δ) = (2, 1, 4)` the
/// ground-state correlations decay exponentially in lattice distance, giving
/// the CM a block-periodic ("tile") support pattern with period `2L` modes.
pub fn bcs2d_ground_state(l: usize, t: f64, mu: f64, delta: f64) -> FgsResult<GroundState> {
    if l < 2 {
        return Err(FgsError::Validation(format!(
            "BCS lattice needs L ≥ 2, got {l}"
        )));
    }
    if !(t.is_finite() && mu.is_finite() && delta.is_finite()) {
        return Err(FgsError::Validation(
            "BCS parameters must be finite".into(),
        ));
    }
    ground_state_from_coefficients(&bcs2d_coefficients(l, t, mu, delta))
}

/// Ground-state covariance matrix of the 2D BCS lattice model (see
/// [`bcs2d_ground_state`]).
pub fn bcs2d_ground_cm(l: usize, t: f64, mu: f64, delta: f64) -> FgsResult<CovarianceMatrix> {
    Ok(bcs2d_ground_state(l, t, mu, delta)?.cm)
}
