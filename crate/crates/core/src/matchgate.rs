//! Matchgates `G(A, B)`: two-qubit gates acting as `A` on the even-parity
//! span `{|00⟩, |11⟩}` and `B` on the odd-parity span `{|01⟩, |10⟩}` with
//! `det A = det B`. Every matchgate factors as
//!
//! ```text
//! G = (e^{iφ₁Z} ⊗ e^{iφ₂Z}) · exp(iα X⊗X + iβ Y⊗Y) · (e^{iφ₃Z} ⊗ e^{iφ₄Z}) · e^{iθ}
//! ```
//!
//! and conjugates the four two-qubit Majoranas linearly,
//! `G† c_k G = Σ_l R_kl c_l` with `R ∈ SO(4)`. This module houses the
//! parametrization, both directions of the gate ↔ rotation correspondence,
//! and the Gaussian Yang–Baxter (GYB) and left-right (LR) rewrite solvers
//! with exact phase tracking.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{FgsError, FgsResult};
use crate::linalg::{
    cm_sweep, conjugate_block4, embed4, givens_qr_decompose, haar_so, orthonormal_completion,
    orthonormal_from, split_so6, CovarianceMatrix, GivensRotation,
};
use crate::simulate::{apply_gate2, basis_vector, embed_unitary};
use crate::{C64, TOL_ZERO};

/// Cross-block zero tolerance of the `G(A, B)` structure.
const TOL_BLOCK: f64 = 1e-12;
/// Tolerance on `det A = det B`, unitarity, and rotation consistency.
const TOL_GATE: f64 = 1e-10;

/// Angles of the Eq.-style factorization; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchgateParams {
    /// Single-qubit Z-rotation angles `(φ₁, φ₂, φ₃, φ₄)`.
    pub phi: [f64; 4],
    /// `X⊗X` angle of the nonlocal core.
    pub alpha: f64,
    /// `Y⊗Y` angle of the nonlocal core.
    pub beta: f64,
    /// Global phase `θ`.
    pub theta_global: f64,
}

/// A two-qubit matchgate with its cached Majorana rotation and angles.
#[derive(Debug, Clone)]
pub struct Matchgate {
    unitary: Matrix4<C64>,
    rotation: Matrix4<f64>,
    params: MatchgateParams,
}

impl PartialEq for Matchgate {
    fn eq(&self, other: &Self) -> bool {
        self.unitary == other.unitary
    }
}

/// A matchgate placed on the adjacent qubit pair `(qubit, qubit + 1)`,
/// 1-based with `1 ≤ qubit ≤ n−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedGate {
    pub gate: Matchgate,
    pub qubit: usize,
}

impl PlacedGate {
    pub fn new(gate: Matchgate, qubit: usize) -> Self {
        assert!(qubit >= 1, "qubit indices are 1-based");
        Self { gate, qubit }
    }
}

/// Which side of a GYB / LR identity the inputs sit on.
///
/// `LeftToRight` consumes the pattern whose *first* operator factor acts on
/// the lower qubit pair: for GYB, `(U₁⊗1)(1⊗U₂)(U₃⊗1) =
/// (1⊗V₁)(V₂⊗1)(1⊗V₃)`; for LR, `(U₁⊗1)(1⊗U₂)|b⟩ = (1⊗V₁)(V₂⊗1)|b⟩`.
/// `RightToLeft` is the mirror image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveDirection {
    LeftToRight,
    RightToLeft,
}

/// The four Majorana operators of a two-qubit block under Jordan–Wigner:
/// `c₀ = X⊗1, c₁ = Y⊗1, c₂ = Z⊗X, c₃ = Z⊗Y`.
fn majorana2(k: usize) -> Matrix4<C64> {
    let o = C64::new(0.0, 0.0);
    let r = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match k {
        0 => Matrix4::new(o, o, r, o, o, o, o, r, r, o, o, o, o, r, o, o),
        1 => Matrix4::new(o, o, -i, o, o, o, o, -i, i, o, o, o, o, i, o, o),
        2 => Matrix4::new(o, r, o, o, r, o, o, o, o, o, o, -r, o, o, -r, o),
        3 => Matrix4::new(o, -i, o, o, i, o, o, o, o, o, o, i, o, o, -i, o),
        _ => unreachable!("two-qubit Majorana index {k}"),
    }
}

/// ZXZ Euler angles of an SU(2) matrix: `m = e^{iaσz} e^{ixσx} e^{ibσz}`
/// with `x ∈ [0, π/2]`. Degenerate sectors pin the free angle sum to zero.
fn su2_zxz(m: &Matrix2<C64>) -> (f64, f64, f64) {
    let p = m[(0, 0)];
    let q = m[(0, 1)];
    let x = q.norm().atan2(p.norm());
    let sum = if p.norm() > TOL_ZERO { p.arg() } else { 0.0 };
    let diff = if q.norm() > TOL_ZERO {
        q.arg() - std::f64::consts::FRAC_PI_2
    } else {
        0.0
    };
    ((sum + diff) / 2.0, x, (sum - diff) / 2.0)
}

impl Matchgate {
    /// Builds the gate from its angles; the unitary is assembled exactly as
    /// `(left Z-phases) · exp(iαXX + iβYY) · (right Z-phases) · e^{iθ}`.
    pub fn from_params(p: &MatchgateParams) -> Self {
        let phase = |a: f64| C64::new(0.0, a).exp();
        let d1 = [
            phase(p.phi[0] + p.phi[1]),
            phase(p.phi[0] - p.phi[1]),
            phase(p.phi[1] - p.phi[0]),
            phase(-p.phi[0] - p.phi[1]),
        ];
        let d2 = [
            phase(p.phi[2] + p.phi[3]),
            phase(p.phi[2] - p.phi[3]),
            phase(p.phi[3] - p.phi[2]),
            phase(-p.phi[2] - p.phi[3]),
        ];
        // exp(iαXX + iβYY) is exp(i(α−β)σx) on {00,11} and exp(i(α+β)σx)
        // on {01,10}.
        let (xa, xb) = (p.alpha - p.beta, p.alpha + p.beta);
        let mut core = Matrix4::<C64>::zeros();
        let (ca, sa) = (xa.cos(), xa.sin());
        let (cb, sb) = (xb.cos(), xb.sin());
        core[(0, 0)] = C64::new(ca, 0.0);
        core[(0, 3)] = C64::new(0.0, sa);
        core[(3, 0)] = C64::new(0.0, sa);
        core[(3, 3)] = C64::new(ca, 0.0);
        core[(1, 1)] = C64::new(cb, 0.0);
        core[(1, 2)] = C64::new(0.0, sb);
        core[(2, 1)] = C64::new(0.0, sb);
        core[(2, 2)] = C64::new(cb, 0.0);
        let g = phase(p.theta_global);
        let unitary = Matrix4::from_fn(|i, j| g * d1[i] * core[(i, j)] * d2[j]);
        let rotation = rotation_of(&unitary);
        Self { unitary, rotation, params: *p }
    }

    /// Validates the matchgate invariants of an arbitrary 4x4 unitary and
    /// extracts canonical parameters (`θ ∈ (−π/2, π/2]`).
    pub fn from_unitary(u: &Matrix4<C64>) -> FgsResult<Self> {
        // Unitarity.
        let prod = u.adjoint() * u;
        let mut defect = 0.0_f64;
        for i in 0..4 {
            for j in 0..4 {
                let t = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                defect = defect.max((prod[(i, j)] - t).norm());
            }
        }
        if defect > TOL_GATE {
            return Err(FgsError::NotMatchgate(format!(
                "not unitary: max |U†U - 1| = {defect:.3e}"
            )));
        }
        // Block structure: zero on {00,11} x {01,10} cross entries.
        let mut cross = 0.0_f64;
        for &i in &[0usize, 3] {
            for &j in &[1usize, 2] {
                cross = cross.max(u[(i, j)].norm()).max(u[(j, i)].norm());
            }
        }
        if cross > TOL_BLOCK {
            return Err(FgsError::NotMatchgate(format!(
                "cross-block magnitude {cross:.3e} exceeds {TOL_BLOCK:.0e}"
            )));
        }
        let a = Matrix2::new(u[(0, 0)], u[(0, 3)], u[(3, 0)], u[(3, 3)]);
        let b = Matrix2::new(u[(1, 1)], u[(1, 2)], u[(2, 1)], u[(2, 2)]);
        let (det_a, det_b) = (a.determinant(), b.determinant());
        if (det_a - det_b).norm() > TOL_GATE {
            return Err(FgsError::NotMatchgate(format!(
                "det A = {det_a} but det B = {det_b}"
            )));
        }

        let theta = 0.5 * det_a.arg();
        let unphase = C64::new(0.0, -theta).exp();
        let (sa, xa, da) = su2_zxz(&(a * unphase));
        let (sb, xb, db) = su2_zxz(&(b * unphase));
        let params = MatchgateParams {
            phi: [
                (sa + sb) / 2.0,
                (sa - sb) / 2.0,
                (da + db) / 2.0,
                (da - db) / 2.0,
            ],
            alpha: (xa + xb) / 2.0,
            beta: (xb - xa) / 2.0,
            theta_global: theta,
        };
        let rebuilt = Self::from_params(&params);
        let recon = max_diff(&rebuilt.unitary, u);
        if recon > TOL_GATE {
            return Err(FgsError::NotMatchgate(format!(
                "parameter extraction failed to reproduce the unitary ({recon:.3e})"
            )));
        }
        Ok(Self { unitary: *u, rotation: rebuilt.rotation, params })
    }

    /// Lifts a Majorana rotation to a matchgate. The rotation is decomposed
    /// into adjacent-plane Givens factors, each mapped to its elementary
    /// gate (`E₀ ↦ e^{iφ/2 Z⊗1}`, `E₁ ↦ e^{iφ/2 X⊗X}`, `E₂ ↦ e^{iφ/2 1⊗Z}`),
    /// and the global phase is fixed so the largest-magnitude entry of the
    /// unitary is real positive.
    pub fn from_rotation(r: &Matrix4<f64>) -> FgsResult<Self> {
        let rd = DMatrix::from_fn(4, 4, |i, j| r[(i, j)]);
        let rots = givens_qr_decompose(&rd)?;
        let mut u = Matrix4::<C64>::identity();
        for g in &rots {
            u *= elementary_gate(g);
        }
        // Phase convention: largest-magnitude entry real positive.
        let (mut bi, mut bj, mut best) = (0usize, 0usize, 0.0_f64);
        for i in 0..4 {
            for j in 0..4 {
                if u[(i, j)].norm() > best {
                    best = u[(i, j)].norm();
                    (bi, bj) = (i, j);
                }
            }
        }
        let fix = C64::new(0.0, -u[(bi, bj)].arg()).exp();
        let gate = Self::from_unitary(&(u * fix))?;
        debug_assert!(max_rot_diff(&gate.rotation, r) < 1e-9);
        Ok(gate)
    }

    pub fn identity() -> Self {
        Self::from_params(&MatchgateParams {
            phi: [0.0; 4],
            alpha: 0.0,
            beta: 0.0,
            theta_global: 0.0,
        })
    }

    /// The fermionic swap `G(Z, X)`: exchanges the two modes and counts the
    /// crossing with a `-1` on `|11⟩`.
    pub fn fswap() -> Self {
        let o = C64::new(0.0, 0.0);
        let r = C64::new(1.0, 0.0);
        let u = Matrix4::new(r, o, o, o, o, o, r, o, o, r, o, o, o, o, o, -r);
        Self::from_unitary(&u).expect("fSWAP is a matchgate")
    }

    /// Random matchgate: Haar SO(4) lifted by [`Matchgate::from_rotation`],
    /// global phase uniform.
    pub fn random<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        use rand::RngExt as _;
        let r = haar_so(4, rng);
        let r4 = Matrix4::from_fn(|i, j| r[(i, j)]);
        let g = Self::from_rotation(&r4).expect("Haar rotation lifts");
        let theta = (rng.random::<f64>() * 2.0 - 1.0) * std::f64::consts::PI;
        g.phase_multiplied(theta)
    }

    pub fn unitary(&self) -> &Matrix4<C64> {
        &self.unitary
    }

    /// The cached `R ∈ SO(4)` with `G† c_k G = Σ_l R_kl c_l`.
    pub fn rotation(&self) -> &Matrix4<f64> {
        &self.rotation
    }

    pub fn params(&self) -> &MatchgateParams {
        &self.params
    }

    /// The same gate with an extra global phase `e^{iδ}`.
    pub fn phase_multiplied(&self, delta: f64) -> Self {
        let f = C64::new(0.0, delta).exp();
        let mut params = self.params;
        params.theta_global += delta;
        Self { unitary: self.unitary * f, rotation: self.rotation, params }
    }

    /// The gate conjugated by SWAP (its qubit order reversed); matchgates
    /// are closed under this.
    pub fn reversed(&self) -> Self {
        let u = &self.unitary;
        let perm = [0usize, 2, 1, 3];
        let swapped = Matrix4::from_fn(|i, j| u[(perm[i], perm[j])]);
        Self::from_unitary(&swapped).expect("SWAP conjugation preserves matchgates")
    }

    /// The Hermitian adjoint (inverse); matchgates are closed under this.
    pub fn adjoint(&self) -> Self {
        Self::from_unitary(&self.unitary.adjoint()).expect("adjoint of a matchgate is a matchgate")
    }

    /// Global phase `e^{iδ}` when the gate is within `tol` of `e^{iδ}·1`.
    pub fn identity_phase(&self, tol: f64) -> Option<f64> {
        let tr = self.unitary.trace() / C64::new(4.0, 0.0);
        if tr.norm() < TOL_ZERO {
            return None;
        }
        let ph = C64::new(0.0, tr.arg()).exp();
        let mut d = 0.0_f64;
        for i in 0..4 {
            for j in 0..4 {
                let t = if i == j { ph } else { C64::new(0.0, 0.0) };
                d = d.max((self.unitary[(i, j)] - t).norm());
            }
        }
        (d <= tol).then(|| tr.arg())
    }
}

impl std::ops::Mul for &Matchgate {
    type Output = Matchgate;

    /// Operator product: `(a * b)` applies `b` first.
    fn mul(self, rhs: &Matchgate) -> Matchgate {
        let u = self.unitary * rhs.unitary;
        Matchgate::from_unitary(&u).expect("matchgates are closed under products")
    }
}

/// `max |a_ij - b_ij|` over complex entries.
fn max_diff(a: &Matrix4<C64>, b: &Matrix4<C64>) -> f64 {
    let mut d = 0.0_f64;
    for i in 0..4 {
        for j in 0..4 {
            d = d.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    d
}

fn max_rot_diff(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
    let mut d = 0.0_f64;
    for i in 0..4 {
        for j in 0..4 {
            d = d.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    d
}

/// `R_kl = (1/4) Tr(c_l · G†c_kG)` on the two-qubit Majoranas.
fn rotation_of(u: &Matrix4<C64>) -> Matrix4<f64> {
    let cs: Vec<Matrix4<C64>> = (0..4).map(majorana2).collect();
    let ud = u.adjoint();
    Matrix4::from_fn(|k, l| {
        let conj = ud * cs[k] * u;
        ((conj * cs[l]).trace() / C64::new(4.0, 0.0)).re
    })
}

/// The Majorana rotation of a matchgate unitary, after validating the
/// matchgate invariants (including `det R = +1` and conjugation
/// consistency within 1e-10).
pub fn to_rotation(u: &Matrix4<C64>) -> FgsResult<Matrix4<f64>> {
    let gate = Matchgate::from_unitary(u)?;
    let r = gate.rotation;
    let rd = DMatrix::from_fn(4, 4, |i, j| r[(i, j)]);
    let ortho = crate::linalg::purity_defect(&rd);
    if ortho > TOL_GATE || r.determinant() < 0.0 {
        return Err(FgsError::NotMatchgate(format!(
            "Majorana action is not special orthogonal (defect {ortho:.3e})"
        )));
    }
    // Conjugation consistency: G†c_kG = Σ R_kl c_l.
    let cs: Vec<Matrix4<C64>> = (0..4).map(majorana2).collect();
    let ud = u.adjoint();
    for k in 0..4 {
        let conj = ud * cs[k] * u;
        let mut recon = Matrix4::<C64>::zeros();
        for l in 0..4 {
            recon += cs[l] * C64::new(r[(k, l)], 0.0);
        }
        if max_diff(&conj, &recon) > TOL_GATE {
            return Err(FgsError::NotMatchgate(format!(
                "Majorana conjugation of c_{k} is not linear in the c's"
            )));
        }
    }
    Ok(r)
}

/// The elementary gate of a Givens rotation on adjacent two-qubit Majorana
/// planes: `exp(iφ/2 · P)` with `P = Z⊗1, X⊗X, 1⊗Z` for `k = 0, 1, 2`.
pub(crate) fn elementary_gate(g: &GivensRotation) -> Matrix4<C64> {
    let half = g.phi / 2.0;
    let p = match g.k {
        0 => Matchgate::from_params(&MatchgateParams {
            phi: [half, 0.0, 0.0, 0.0],
            alpha: 0.0,
            beta: 0.0,
            theta_global: 0.0,
        }),
        1 => Matchgate::from_params(&MatchgateParams {
            phi: [0.0; 4],
            alpha: half,
            beta: 0.0,
            theta_global: 0.0,
        }),
        2 => Matchgate::from_params(&MatchgateParams {
            phi: [0.0, half, 0.0, 0.0],
            alpha: 0.0,
            beta: 0.0,
            theta_global: 0.0,
        }),
        _ => unreachable!("two-qubit Majorana plane {}", g.k),
    };
    *p.unitary()
}

/// Rewrites `(U₁⊗1)(1⊗U₂)(U₃⊗1) = (1⊗V₁)(V₂⊗1)(1⊗V₃)` (direction
/// `LeftToRight`; `RightToLeft` is the mirrored pattern) with exact phase:
/// the joint 6x6 Majorana rotation is split into the opposite sandwich and
/// the leftover scalar phase is read off the largest entry of the 8x8
/// product.
pub fn gyb_move(
    u1: &Matchgate,
    u2: &Matchgate,
    u3: &Matchgate,
    direction: MoveDirection,
) -> FgsResult<(Matchgate, Matchgate, Matchgate)> {
    match direction {
        MoveDirection::LeftToRight => gyb_core(u1, u2, u3),
        MoveDirection::RightToLeft => {
            let (v1, v2, v3) = gyb_core(&u1.reversed(), &u2.reversed(), &u3.reversed())?;
            Ok((v1.reversed(), v2.reversed(), v3.reversed()))
        }
    }
}

fn gyb_core(
    u1: &Matchgate,
    u2: &Matchgate,
    u3: &Matchgate,
) -> FgsResult<(Matchgate, Matchgate, Matchgate)> {
    let w = embed4(6, 0, u1.rotation())
        * embed4(6, 2, u2.rotation())
        * embed4(6, 0, u3.rotation());
    let (a, b, c) = split_so6(&w)?;
    let v1 = Matchgate::from_rotation(&a)?;
    let v2 = Matchgate::from_rotation(&b)?;
    let v3 = Matchgate::from_rotation(&c)?;
    let lhs = embed_unitary(u1.unitary(), 1, 3)
        * embed_unitary(u2.unitary(), 2, 3)
        * embed_unitary(u3.unitary(), 1, 3);
    let rhs = embed_unitary(v1.unitary(), 2, 3)
        * embed_unitary(v2.unitary(), 1, 3)
        * embed_unitary(v3.unitary(), 2, 3);
    let delta = phase_between(&lhs, &rhs)?;
    Ok((v1, v2.phase_multiplied(delta), v3))
}

/// `arg(lhs/rhs)` read off the largest entry of `rhs`; the matrices must
/// agree up to a scalar phase.
fn phase_between(lhs: &DMatrix<C64>, rhs: &DMatrix<C64>) -> FgsResult<f64> {
    let (mut bi, mut bj, mut best) = (0usize, 0usize, 0.0_f64);
    for i in 0..rhs.nrows() {
        for j in 0..rhs.ncols() {
            if rhs[(i, j)].norm() > best {
                best = rhs[(i, j)].norm();
                (bi, bj) = (i, j);
            }
        }
    }
    if best < TOL_ZERO {
        return Err(FgsError::PhaseFixFailure(best));
    }
    let ratio = lhs[(bi, bj)] / rhs[(bi, bj)];
    debug_assert!((ratio.norm() - 1.0).abs() < 1e-8, "phase ratio modulus {}", ratio.norm());
    Ok(ratio.arg())
}

/// Rewrites `(U₁⊗1)(1⊗U₂)|b⟩ = (1⊗V₁)(V₂⊗1)|b⟩` on three qubits
/// (`LeftToRight`; the mirror for `RightToLeft`), solving on the 6x6
/// covariance matrix of the left-hand state and fixing the scalar phase on
/// the largest output amplitude.
pub fn lr_move(
    u1: &Matchgate,
    u2: &Matchgate,
    bits: [u8; 3],
    direction: MoveDirection,
) -> FgsResult<(Matchgate, Matchgate)> {
    match direction {
        MoveDirection::LeftToRight => lr_core(u1, u2, bits),
        MoveDirection::RightToLeft => {
            let rev = [bits[2], bits[1], bits[0]];
            let (v1, v2) = lr_core(&u1.reversed(), &u2.reversed(), rev)?;
            Ok((v1.reversed(), v2.reversed()))
        }
    }
}

fn lr_core(u1: &Matchgate, u2: &Matchgate, bits: [u8; 3]) -> FgsResult<(Matchgate, Matchgate)> {
    // CM of ψ = U₁^(12) U₂^(23) |b⟩.
    let mut g = DMatrix::<f64>::zeros(6, 6);
    for (q, &b) in bits.iter().enumerate() {
        let s = if b == 0 { 1.0 } else { -1.0 };
        g[(2 * q, 2 * q + 1)] = -s;
        g[(2 * q + 1, 2 * q)] = s;
    }
    conjugate_block4(&mut g, 2, u2.rotation());
    conjugate_block4(&mut g, 0, u1.rotation());

    // Rows for Majoranas 4, 5 of the undoing rotation S on Majoranas 2..6:
    // both must annihilate the coupling block K to Majoranas 0, 1. Purity
    // makes KKᵀ a multiple of the identity, so the rows of K are either
    // both negligible or an orthogonal pair — the null space always has
    // dimension 2 and pivoted Gram–Schmidt finds it cleanly.
    let u = DVector::from_iterator(4, (2..6).map(|j| g[(0, j)]));
    let v = DVector::from_iterator(4, (2..6).map(|j| g[(1, j)]));
    let row_span = orthonormal_from(&[], &[u, v], 2);
    let null = orthonormal_completion(&row_span, 4);
    let w1 = Vector4::from_fn(|j, _| null[0][j]);
    let s3 = if bits[2] == 0 { 1.0 } else { -1.0 };
    let g2 = Matrix4::from_fn(|i, j| g[(2 + i, 2 + j)]);
    let mut w2 = g2 * w1 * s3;
    let w2n = w2.norm();
    debug_assert!((w2n - 1.0).abs() < 1e-8, "‖Γ₂w₁‖ = {w2n}");
    w2 /= w2n;

    let w1d = DVector::from_iterator(4, w1.iter().copied());
    let w2d = DVector::from_iterator(4, w2.iter().copied());
    let rest = orthonormal_completion(&[w1d, w2d], 4);
    let mut s = Matrix4::<f64>::zeros();
    for j in 0..4 {
        s[(0, j)] = rest[0][j];
        s[(1, j)] = rest[1][j];
        s[(2, j)] = w1[j];
        s[(3, j)] = w2[j];
    }
    if s.determinant() < 0.0 {
        for j in 0..4 {
            s[(0, j)] = -s[(0, j)];
        }
    }
    conjugate_block4(&mut g, 2, &s);

    // Remaining two-qubit CM on Majoranas 0..4: sweep to ⊕ s'_q J₂, then
    // match the required signs (a double flip is a rotation; a single flip
    // is impossible by parity conservation).
    let g4 = DMatrix::from_fn(4, 4, |i, j| g[(i, j)]);
    let sweep = cm_sweep(&g4)?;
    let mut m = Matrix4::<f64>::identity();
    for giv in &sweep.rotations {
        let e = giv.embed(4);
        let e4 = Matrix4::from_fn(|i, j| e[(i, j)]);
        m = e4 * m;
    }
    let targets = [
        if bits[0] == 0 { 1.0 } else { -1.0 },
        if bits[1] == 0 { 1.0 } else { -1.0 },
    ];
    let flip0 = sweep.signs[0] * targets[0] < 0.0;
    let flip1 = sweep.signs[1] * targets[1] < 0.0;
    let w2rot = if flip0 && flip1 {
        let mut f = Matrix4::<f64>::zeros();
        f[(0, 1)] = 1.0;
        f[(1, 0)] = 1.0;
        f[(2, 3)] = 1.0;
        f[(3, 2)] = 1.0;
        f * m
    } else if !flip0 && !flip1 {
        m
    } else {
        return Err(FgsError::Validation(
            "LR move: single-block sign mismatch violates parity conservation".into(),
        ));
    };

    let v1 = Matchgate::from_rotation(&s.transpose())?;
    let v2 = Matchgate::from_rotation(&w2rot.transpose())?;

    // Scalar phase from the statevectors.
    let mut lhs = basis_vector(&bits)?;
    apply_gate2(&mut lhs, 3, 2, u2.unitary());
    apply_gate2(&mut lhs, 3, 1, u1.unitary());
    let mut rhs = basis_vector(&bits)?;
    apply_gate2(&mut rhs, 3, 1, v2.unitary());
    apply_gate2(&mut rhs, 3, 2, v1.unitary());
    let (mut bi, mut best) = (0usize, 0.0_f64);
    for i in 0..8 {
        if rhs[i].norm() > best {
            best = rhs[i].norm();
            bi = i;
        }
    }
    if best < TOL_ZERO {
        return Err(FgsError::PhaseFixFailure(best));
    }
    let ratio = lhs[bi] / rhs[bi];
    debug_assert!((ratio.norm() - 1.0).abs() < 1e-8);
    Ok((v1, v2.phase_multiplied(ratio.arg())))
}

/// Serialized placed gate: the unitary split into real and imaginary
/// parts, with the angles as an optional convenience field.
#[derive(Serialize, Deserialize)]
pub struct GateDto {
    pub qubit: usize,
    pub unitary_re: [[f64; 4]; 4],
    pub unitary_im: [[f64; 4]; 4],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub params: Option<MatchgateParams>,
}

impl GateDto {
    pub fn from_placed(pg: &PlacedGate) -> Self {
        let u = pg.gate.unitary();
        let mut re = [[0.0; 4]; 4];
        let mut im = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                re[i][j] = u[(i, j)].re;
                im[i][j] = u[(i, j)].im;
            }
        }
        Self { qubit: pg.qubit, unitary_re: re, unitary_im: im, params: Some(*pg.gate.params()) }
    }

    /// Rebuilds the gate, revalidating the matchgate invariants.
    pub fn into_placed(self) -> FgsResult<PlacedGate> {
        if self.qubit == 0 {
            return Err(FgsError::Validation("gate qubit indices are 1-based".into()));
        }
        let u = Matrix4::from_fn(|i, j| C64::new(self.unitary_re[i][j], self.unitary_im[i][j]));
        Ok(PlacedGate { gate: Matchgate::from_unitary(&u)?, qubit: self.qubit })
    }
}

/// CM of `|b⟩` on however many qubits, as a plain matrix: `⊕ (-1)^{b_q} J₂`.
pub(crate) fn basis_cm(bits: &[u8]) -> DMatrix<f64> {
    let d = 2 * bits.len();
    let mut g = DMatrix::zeros(d, d);
    for (q, &b) in bits.iter().enumerate() {
        let s = if b == 0 { 1.0 } else { -1.0 };
        g[(2 * q, 2 * q + 1)] = -s;
        g[(2 * q + 1, 2 * q)] = s;
    }
    g
}

/// CM of the 3-qubit state `(U₁⊗1)(1⊗U₂)|b⟩`, for move validation.
pub(crate) fn lhs_state_cm(u1: &Matchgate, u2: &Matchgate, bits: [u8; 3]) -> CovarianceMatrix {
    let mut g = basis_cm(&bits);
    conjugate_block4(&mut g, 2, u2.rotation());
    conjugate_block4(&mut g, 0, u1.rotation());
    CovarianceMatrix::from_matrix_unchecked(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::cm_from_statevector;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn angles(rg: &mut ChaCha12Rng) -> MatchgateParams {
        let mut a = || (rg.random::<f64>() * 2.0 - 1.0) * std::f64::consts::PI;
        MatchgateParams {
            phi: [a(), a(), a(), a()],
            alpha: a(),
            beta: a(),
            theta_global: a(),
        }
    }

    #[test]
    fn zero_params_is_identity() {
        let g = Matchgate::identity();
        assert!(max_diff(g.unitary(), &Matrix4::identity()) < 1e-15);
        assert!(max_rot_diff(g.rotation(), &Matrix4::identity()) < 1e-15);
    }

    #[test]
    fn fswap_core_has_full_rank_off_blocks() {
        // α = π/4, β = -π/4: |sin 2α sin 2β| = 1.
        let g = Matchgate::from_params(&MatchgateParams {
            phi: [0.0; 4],
            alpha: std::f64::consts::FRAC_PI_4,
            beta: -std::f64::consts::FRAC_PI_4,
            theta_global: 0.0,
        });
        let r = g.rotation();
        let off = Matrix2::new(r[(0, 2)], r[(0, 3)], r[(1, 2)], r[(1, 3)]);
        assert_abs_diff_eq!(off.determinant().abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn off_diagonal_blocks_degenerate_at_alpha_multiples_of_half_pi() {
        let g = Matchgate::from_params(&MatchgateParams {
            phi: [0.3, -0.1, 0.7, 0.2],
            alpha: std::f64::consts::FRAC_PI_2,
            beta: 0.4,
            theta_global: 0.0,
        });
        let r = g.rotation();
        let off = Matrix2::new(r[(0, 2)], r[(0, 3)], r[(1, 2)], r[(1, 3)]);
        assert_abs_diff_eq!(off.determinant().abs(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn determinant_lemma_on_random_angles() {
        let mut rg = rng(3);
        for _ in 0..200 {
            let p = angles(&mut rg);
            let g = Matchgate::from_params(&p);
            let r = g.rotation();
            let off = Matrix2::new(r[(0, 2)], r[(0, 3)], r[(1, 2)], r[(1, 3)]);
            let target = ((2.0 * p.alpha).sin() * (2.0 * p.beta).sin()).abs();
            assert_abs_diff_eq!(off.determinant().abs(), target, epsilon = 1e-10);
            let off_lo = Matrix2::new(r[(2, 0)], r[(2, 1)], r[(3, 0)], r[(3, 1)]);
            assert_abs_diff_eq!(off_lo.determinant().abs(), target, epsilon = 1e-10);
        }
    }

    #[test]
    fn zz_gate_rotation_is_minus_identity() {
        // Z⊗Z realized by φ₁ = φ₂ = π/2 with θ = π.
        let g = Matchgate::from_params(&MatchgateParams {
            phi: [std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2, 0.0, 0.0],
            alpha: 0.0,
            beta: 0.0,
            theta_global: std::f64::consts::PI,
        });
        let mut zz = Matrix4::<C64>::zeros();
        zz[(0, 0)] = C64::new(1.0, 0.0);
        zz[(1, 1)] = C64::new(-1.0, 0.0);
        zz[(2, 2)] = C64::new(-1.0, 0.0);
        zz[(3, 3)] = C64::new(1.0, 0.0);
        assert!(max_diff(g.unitary(), &zz) < 1e-12);
        assert!(max_rot_diff(g.rotation(), &(-Matrix4::<f64>::identity())) < 1e-12);
    }

    #[test]
    fn rotation_is_special_orthogonal_for_random_gates() {
        let mut rg = rng(5);
        for _ in 0..100 {
            let g = Matchgate::random(&mut rg);
            let r = to_rotation(g.unitary()).unwrap();
            let rd = DMatrix::from_fn(4, 4, |i, j| r[(i, j)]);
            assert!(crate::linalg::purity_defect(&rd) < 1e-12);
            assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn to_rotation_rejects_non_matchgates() {
        // 1 ⊗ X mixes the parity sectors.
        let o = C64::new(0.0, 0.0);
        let r = C64::new(1.0, 0.0);
        let ix = Matrix4::new(o, r, o, o, r, o, o, o, o, o, o, r, o, o, r, o);
        assert!(matches!(to_rotation(&ix), Err(FgsError::NotMatchgate(_))));
    }

    #[test]
    fn params_round_trip_through_unitary() {
        let mut rg = rng(7);
        for _ in 0..300 {
            let g = Matchgate::from_params(&angles(&mut rg));
            let g2 = Matchgate::from_unitary(g.unitary()).unwrap();
            assert!(max_diff(g.unitary(), g2.unitary()) < 1e-12);
            let p = g2.params();
            assert!(
                p.theta_global > -std::f64::consts::FRAC_PI_2 - 1e-12
                    && p.theta_global <= std::f64::consts::FRAC_PI_2 + 1e-12
            );
        }
    }

    #[test]
    fn from_rotation_round_trips() {
        let mut rg = rng(9);
        // Identity rotation → identity gate up to the phase convention.
        let g = Matchgate::from_rotation(&Matrix4::identity()).unwrap();
        assert!(max_diff(g.unitary(), &Matrix4::identity()) < 1e-12);
        // Givens on plane (1,2) → XX-type nonlocal core.
        let phi = 0.83;
        let giv = GivensRotation { k: 1, phi };
        let e = giv.embed(4);
        let e4 = Matrix4::from_fn(|i, j| e[(i, j)]);
        let g = Matchgate::from_rotation(&e4).unwrap();
        let want = Matchgate::from_params(&MatchgateParams {
            phi: [0.0; 4],
            alpha: phi / 2.0,
            beta: 0.0,
            theta_global: 0.0,
        });
        assert!(max_diff(g.unitary(), want.unitary()) < 1e-10);
        // Round-trip on 1000 random SO(4) samples.
        let mut worst = 0.0_f64;
        for _ in 0..1000 {
            let r = haar_so(4, &mut rg);
            let r4 = Matrix4::from_fn(|i, j| r[(i, j)]);
            let g = Matchgate::from_rotation(&r4).unwrap();
            worst = worst.max(max_rot_diff(g.rotation(), &r4));
        }
        assert!(worst < 1e-9, "worst round-trip error {worst:.3e}");
    }

    #[test]
    fn rotation_homomorphism() {
        let mut rg = rng(11);
        for _ in 0..50 {
            let a = Matchgate::random(&mut rg);
            let b = Matchgate::random(&mut rg);
            let prod = &a * &b;
            let want = a.rotation() * b.rotation();
            assert!(max_rot_diff(prod.rotation(), &want) < 1e-10);
        }
    }

    #[test]
    fn gyb_identities_stay_identities() {
        let id = Matchgate::identity();
        let (v1, v2, v3) = gyb_move(&id, &id, &id, MoveDirection::LeftToRight).unwrap();
        for v in [&v1, &v2, &v3] {
            assert!(max_diff(v.unitary(), &Matrix4::identity()) < 1e-10);
        }
    }

    fn gyb_deviation(
        u: (&Matchgate, &Matchgate, &Matchgate),
        v: (&Matchgate, &Matchgate, &Matchgate),
        direction: MoveDirection,
    ) -> f64 {
        let (lhs, rhs) = match direction {
            MoveDirection::LeftToRight => (
                embed_unitary(u.0.unitary(), 1, 3)
                    * embed_unitary(u.1.unitary(), 2, 3)
                    * embed_unitary(u.2.unitary(), 1, 3),
                embed_unitary(v.0.unitary(), 2, 3)
                    * embed_unitary(v.1.unitary(), 1, 3)
                    * embed_unitary(v.2.unitary(), 2, 3),
            ),
            MoveDirection::RightToLeft => (
                embed_unitary(u.0.unitary(), 2, 3)
                    * embed_unitary(u.1.unitary(), 1, 3)
                    * embed_unitary(u.2.unitary(), 2, 3),
                embed_unitary(v.0.unitary(), 1, 3)
                    * embed_unitary(v.1.unitary(), 2, 3)
                    * embed_unitary(v.2.unitary(), 1, 3),
            ),
        };
        let mut d = 0.0_f64;
        for i in 0..8 {
            for j in 0..8 {
                d = d.max((lhs[(i, j)] - rhs[(i, j)]).norm());
            }
        }
        d
    }

    #[test]
    fn gyb_fswap_braid() {
        let f = Matchgate::fswap();
        let (v1, v2, v3) = gyb_move(&f, &f, &f, MoveDirection::LeftToRight).unwrap();
        assert!(gyb_deviation((&f, &f, &f), (&v1, &v2, &v3), MoveDirection::LeftToRight) < 1e-10);
    }

    #[test]
    fn gyb_random_triples() {
        let mut rg = rng(13);
        let mut worst = 0.0_f64;
        for trial in 0..1000 {
            let u1 = Matchgate::random(&mut rg);
            let u2 = Matchgate::random(&mut rg);
            let u3 = Matchgate::random(&mut rg);
            let dir = if trial % 2 == 0 {
                MoveDirection::LeftToRight
            } else {
                MoveDirection::RightToLeft
            };
            let (v1, v2, v3) = gyb_move(&u1, &u2, &u3, dir).unwrap();
            worst = worst.max(gyb_deviation((&u1, &u2, &u3), (&v1, &v2, &v3), dir));
        }
        assert!(worst < 1e-9, "worst GYB deviation {worst:.3e}");
    }

    #[test]
    fn gyb_round_trip_through_both_directions() {
        // LtR then RtL returns gates in the original arrangement whose
        // product matches the original product (the gates themselves may
        // differ by the branch freedoms of the SO(6) split).
        let mut rg = rng(15);
        for _ in 0..50 {
            let u1 = Matchgate::random(&mut rg);
            let u2 = Matchgate::random(&mut rg);
            let u3 = Matchgate::random(&mut rg);
            let (v1, v2, v3) = gyb_move(&u1, &u2, &u3, MoveDirection::LeftToRight).unwrap();
            let (w1, w2, w3) = gyb_move(&v1, &v2, &v3, MoveDirection::RightToLeft).unwrap();
            let orig = embed_unitary(u1.unitary(), 1, 3)
                * embed_unitary(u2.unitary(), 2, 3)
                * embed_unitary(u3.unitary(), 1, 3);
            let back = embed_unitary(w1.unitary(), 1, 3)
                * embed_unitary(w2.unitary(), 2, 3)
                * embed_unitary(w3.unitary(), 1, 3);
            let mut d = 0.0_f64;
            for i in 0..8 {
                for j in 0..8 {
                    d = d.max((orig[(i, j)] - back[(i, j)]).norm());
                }
            }
            assert!(d < 1e-9, "round-trip deviation {d:.3e}");
        }
    }

    fn lr_deviation(
        u: (&Matchgate, &Matchgate),
        v: (&Matchgate, &Matchgate),
        bits: [u8; 3],
        direction: MoveDirection,
    ) -> f64 {
        let mut lhs = basis_vector(&bits).unwrap();
        let mut rhs = basis_vector(&bits).unwrap();
        match direction {
            MoveDirection::LeftToRight => {
                apply_gate2(&mut lhs, 3, 2, u.1.unitary());
                apply_gate2(&mut lhs, 3, 1, u.0.unitary());
                apply_gate2(&mut rhs, 3, 1, v.1.unitary());
                apply_gate2(&mut rhs, 3, 2, v.0.unitary());
            }
            MoveDirection::RightToLeft => {
                apply_gate2(&mut lhs, 3, 1, u.1.unitary());
                apply_gate2(&mut lhs, 3, 2, u.0.unitary());
                apply_gate2(&mut rhs, 3, 2, v.1.unitary());
                apply_gate2(&mut rhs, 3, 1, v.0.unitary());
            }
        }
        (lhs - rhs).iter().fold(0.0_f64, |a, z| a.max(z.norm()))
    }

    #[test]
    fn lr_identities_stay_identities() {
        let id = Matchgate::identity();
        for bits in [[0, 0, 0], [1, 0, 1], [0, 1, 1]] {
            let (v1, v2) = lr_move(&id, &id, bits, MoveDirection::LeftToRight).unwrap();
            assert!(lr_deviation((&id, &id), (&v1, &v2), bits, MoveDirection::LeftToRight) < 1e-10);
        }
    }

    #[test]
    fn lr_entangling_with_trivial_second_gate() {
        let mut rg = rng(17);
        let u1 = Matchgate::random(&mut rg);
        let id = Matchgate::identity();
        let bits = [0, 0, 0];
        let (v1, v2) = lr_move(&u1, &id, bits, MoveDirection::LeftToRight).unwrap();
        assert!(lr_deviation((&u1, &id), (&v1, &v2), bits, MoveDirection::LeftToRight) < 1e-10);
    }

    #[test]
    fn lr_random_pairs_all_basis_states() {
        let mut rg = rng(19);
        let mut worst = 0.0_f64;
        for trial in 0..1000 {
            let u1 = Matchgate::random(&mut rg);
            let u2 = Matchgate::random(&mut rg);
            let b = trial % 8;
            let bits = [(b >> 2) as u8 & 1, (b >> 1) as u8 & 1, b as u8 & 1];
            let dir = if trial % 2 == 0 {
                MoveDirection::LeftToRight
            } else {
                MoveDirection::RightToLeft
            };
            let (v1, v2) = lr_move(&u1, &u2, bits, dir).unwrap();
            worst = worst.max(lr_deviation((&u1, &u2), (&v1, &v2), bits, dir));
        }
        assert!(worst < 1e-9, "worst LR deviation {worst:.3e}");
    }

    #[test]
    fn lr_preserves_the_state_cm() {
        let mut rg = rng(21);
        for trial in 0..100 {
            let u1 = Matchgate::random(&mut rg);
            let u2 = Matchgate::random(&mut rg);
            let b = trial % 8;
            let bits = [(b >> 2) as u8 & 1, (b >> 1) as u8 & 1, b as u8 & 1];
            let (v1, v2) = lr_move(&u1, &u2, bits, MoveDirection::LeftToRight).unwrap();
            let before = lhs_state_cm(&u1, &u2, bits);
            // RHS CM: V₂ on (1,2) first, then V₁ on (2,3).
            let mut g = basis_cm(&bits);
            conjugate_block4(&mut g, 0, v2.rotation());
            conjugate_block4(&mut g, 2, v1.rotation());
            let mut d = 0.0_f64;
            for i in 0..6 {
                for j in 0..6 {
                    d = d.max((g[(i, j)] - before.mat()[(i, j)]).abs());
                }
            }
            assert!(d < 1e-10, "CM deviation {d:.3e}");
        }
    }

    #[test]
    fn gate_json_round_trip_validates() {
        let mut rg = rng(23);
        let pg = PlacedGate::new(Matchgate::random(&mut rg), 3);
        let dto = GateDto::from_placed(&pg);
        let s = serde_json::to_string(&dto).unwrap();
        let back: GateDto = serde_json::from_str(&s).unwrap();
        let pg2 = back.into_placed().unwrap();
        assert_eq!(pg2.qubit, 3);
        assert!(max_diff(pg.gate.unitary(), pg2.gate.unitary()) < 1e-14);
        // Corrupt an entry: load must fail.
        let mut bad = GateDto::from_placed(&pg);
        bad.unitary_re[0][1] = 0.5;
        assert!(bad.into_placed().is_err());
    }

    #[test]
    fn statevector_and_cm_agree_for_gate_action() {
        // The cached rotation reproduces the CM action of the unitary.
        let mut rg = rng(25);
        for _ in 0..20 {
            let g = Matchgate::random(&mut rg);
            let mut psi = basis_vector(&[0, 1]).unwrap();
            apply_gate2(&mut psi, 2, 1, g.unitary());
            let from_state = cm_from_statevector(&psi).unwrap();
            let mut cm = basis_cm(&[0, 1]);
            conjugate_block4(&mut cm, 0, g.rotation());
            let mut d = 0.0_f64;
            for i in 0..4 {
                for j in 0..4 {
                    d = d.max((cm[(i, j)] - from_state.mat()[(i, j)]).abs());
                }
            }
            assert!(d < 1e-10, "CM mismatch {d:.3e}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn prop_params_unitary_params_fixed_point(
            phi1 in -3.1f64..3.1, phi2 in -3.1f64..3.1,
            phi3 in -3.1f64..3.1, phi4 in -3.1f64..3.1,
            alpha in -3.1f64..3.1, beta in -3.1f64..3.1,
            theta in -3.1f64..3.1,
        ) {
            let p = MatchgateParams {
                phi: [phi1, phi2, phi3, phi4],
                alpha,
                beta,
                theta_global: theta,
            };
            let g = Matchgate::from_params(&p);
            let g2 = Matchgate::from_unitary(g.unitary()).unwrap();
            prop_assert!(max_diff(g.unitary(), g2.unitary()) < 1e-11);
        }
    }
}
