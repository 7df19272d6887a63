//! Dense kernels on small real matrices: Givens eliminations, a sign-correct
//! Pfaffian, the fermionic Williamson normal form, and rank/band probes of
//! covariance matrices.
//!
//! Conventions used throughout the crate:
//!
//! - Majorana (row/column) indices are 0-based in code; qubit `q` owns the
//!   Majorana pair `(2q, 2q+1)`.
//! - `J₂ = [[0, -1], [1, 0]]` is the covariance block of `|0⟩`; the block of
//!   `|1⟩` is `-J₂`.
//! - A Givens rotation `E_k(φ)` acts on rows `(k, k+1)` as
//!   `[[cos φ, sin φ], [-sin φ, cos φ]]` and has determinant `+1`.
//! - Covariance matrices evolve by congruence, `Γ ← R Γ Rᵀ`.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{FgsError, FgsResult};
use crate::{C64, TOL_ASYM, TOL_BAND, TOL_PURE, TOL_RANK, TOL_ZERO};

/// `2n x 2n` real antisymmetric matrix of Majorana two-point functions,
/// `Γ_kl = (i/2) Tr(ρ [c_k, c_l])`. All singular values are at most 1, and
/// the state is pure exactly when `Γ` is orthogonal (`ΓΓᵀ = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    n: usize,
    m: DMatrix<f64>,
}

/// Serialized form: `n` and the flat row-major `2n x 2n` entry list.
#[derive(Serialize, Deserialize)]
struct CmDto {
    n: usize,
    data: Vec<f64>,
}

impl CovarianceMatrix {
    /// Validates shape, antisymmetry (within [`TOL_ASYM`]) and the
    /// singular-value bound `‖Γ‖₂ ≤ 1` (within [`TOL_PURE`]).
    pub fn new(m: DMatrix<f64>) -> FgsResult<Self> {
        if m.nrows() != m.ncols() || m.nrows() % 2 != 0 || m.nrows() == 0 {
            return Err(FgsError::Validation(format!(
                "covariance matrix must be square with even dimension, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let asym = antisymmetry_defect(&m);
        if asym > TOL_ASYM {
            return Err(FgsError::NotAntisymmetric(asym));
        }
        let smax = m
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .fold(0.0_f64, |a, &s| a.max(s));
        if smax > 1.0 + TOL_PURE {
            return Err(FgsError::Validation(format!(
                "covariance matrix has singular value {smax:.6} > 1"
            )));
        }
        Ok(Self { n: m.nrows() / 2, m })
    }

    /// Wraps a matrix produced by exact rotations of an already validated CM.
    pub fn from_matrix_unchecked(m: DMatrix<f64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        debug_assert_eq!(m.nrows() % 2, 0);
        Self { n: m.nrows() / 2, m }
    }

    /// Qubit count `n`; the matrix is `2n x 2n`.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// `max |ΓΓᵀ - 1|`; zero for pure states.
    pub fn purity_defect(&self) -> f64 {
        purity_defect(&self.m)
    }

    pub fn is_pure(&self) -> bool {
        self.purity_defect() <= TOL_PURE
    }

    /// Errors with [`FgsError::NotPure`] unless `Γ` is orthogonal within
    /// [`TOL_PURE`].
    pub fn require_pure(&self) -> FgsResult<()> {
        let d = self.purity_defect();
        if d > TOL_PURE {
            Err(FgsError::NotPure(d))
        } else {
            Ok(())
        }
    }

    /// Smallest `β` such that `|Γ_kl| ≤ τ_band` whenever `|k - l| > β`.
    pub fn band_width(&self) -> usize {
        band_width(&self.m)
    }

    /// JSON with `n` and the flat row-major entry list; `serde_json` emits
    /// shortest round-trip decimals, so writing and re-reading is bit exact.
    pub fn to_json(&self) -> String {
        let dto = CmDto {
            n: self.n,
            data: self.m.transpose().as_slice().to_vec(),
        };
        serde_json::to_string(&dto).expect("CM serialization cannot fail")
    }

    pub fn from_json(s: &str) -> FgsResult<Self> {
        let dto: CmDto =
            serde_json::from_str(s).map_err(|e| FgsError::Validation(format!("CM JSON: {e}")))?;
        let d = 2 * dto.n;
        if dto.data.len() != d * d {
            return Err(FgsError::Validation(format!(
                "CM JSON: expected {} entries for n = {}, got {}",
                d * d,
                dto.n,
                dto.data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(d, d, &dto.data))
    }
}

/// `max |A + Aᵀ|`.
pub fn antisymmetry_defect(m: &DMatrix<f64>) -> f64 {
    let mut d = 0.0_f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            d = d.max((m[(i, j)] + m[(j, i)]).abs());
        }
    }
    d
}

/// `max |MMᵀ - 1|`; zero exactly for orthogonal `M`.
pub fn purity_defect(m: &DMatrix<f64>) -> f64 {
    let p = m * m.transpose();
    let mut d = 0.0_f64;
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            let t = if i == j { 1.0 } else { 0.0 };
            d = d.max((p[(i, j)] - t).abs());
        }
    }
    d
}

/// Plane rotation `E_k(φ)` acting on rows `(k, k+1)`, 0-based, as
/// `[[cos φ, sin φ], [-sin φ, cos φ]]`; determinant `+1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GivensRotation {
    /// First row of the plane `(k, k+1)`.
    pub k: usize,
    /// Rotation angle in radians.
    pub phi: f64,
}

impl GivensRotation {
    /// The rotation in plane `(k, k+1)` mapping `(a, b) ↦ (√(a²+b²), 0)`,
    /// i.e. `φ = atan2(b, a)`.
    pub fn eliminating(k: usize, a: f64, b: f64) -> FgsResult<Self> {
        let r = a.hypot(b);
        if r < TOL_ZERO {
            return Err(FgsError::ZeroVector(r));
        }
        Ok(Self { k, phi: b.atan2(a) })
    }

    /// The rotation with the opposite angle (the transpose).
    pub fn inverse(self) -> Self {
        Self { k: self.k, phi: -self.phi }
    }

    pub fn matrix2(&self) -> Matrix2<f64> {
        let (s, c) = self.phi.sin_cos();
        Matrix2::new(c, s, -s, c)
    }

    /// Dense `dim x dim` embedding `1 ⊕ E(φ) ⊕ 1`.
    pub fn embed(&self, dim: usize) -> DMatrix<f64> {
        assert!(self.k + 1 < dim, "plane ({}, {}) outside dim {dim}", self.k, self.k + 1);
        let mut m = DMatrix::identity(dim, dim);
        let (s, c) = self.phi.sin_cos();
        m[(self.k, self.k)] = c;
        m[(self.k, self.k + 1)] = s;
        m[(self.k + 1, self.k)] = -s;
        m[(self.k + 1, self.k + 1)] = c;
        m
    }

    /// In-place `M ← E M` (mixes rows `k, k+1`).
    pub fn apply_left(&self, m: &mut DMatrix<f64>) {
        let (s, c) = self.phi.sin_cos();
        let (r1, r2) = (self.k, self.k + 1);
        for j in 0..m.ncols() {
            let (a, b) = (m[(r1, j)], m[(r2, j)]);
            m[(r1, j)] = c * a + s * b;
            m[(r2, j)] = -s * a + c * b;
        }
    }

    /// In-place `M ← M Eᵀ` (mixes columns `k, k+1`).
    pub fn apply_right_transpose(&self, m: &mut DMatrix<f64>) {
        let (s, c) = self.phi.sin_cos();
        let (c1, c2) = (self.k, self.k + 1);
        for i in 0..m.nrows() {
            let (a, b) = (m[(i, c1)], m[(i, c2)]);
            m[(i, c1)] = c * a + s * b;
            m[(i, c2)] = -s * a + c * b;
        }
    }

    /// In-place congruence `M ← E M Eᵀ`.
    pub fn conjugate(&self, m: &mut DMatrix<f64>) {
        self.apply_left(m);
        self.apply_right_transpose(m);
    }
}

/// 2x2 rotation `S` with `S v = (|v|, 0)ᵀ` and `det S = 1`.
///
/// Errors with [`FgsError::ZeroVector`] when `|v| < τ_zero`.
pub fn elim_second(v: Vector2<f64>) -> FgsResult<Matrix2<f64>> {
    Ok(GivensRotation::eliminating(0, v.x, v.y)?.matrix2())
}

/// 4x4 rotation `R` with the last two components of both `Rx` and `Ry` zero
/// and `det R = 1`; `Rx = (|x|, 0, 0, 0)ᵀ`.
///
/// The boolean is true when `x` and `y` are linearly dependent at tolerance
/// [`TOL_RANK`]; the second sub-rotation is then the identity and the result
/// is only unique up to a rotation of the last three coordinates.
pub fn elim_last_two(x: &Vector4<f64>, y: &Vector4<f64>) -> FgsResult<(Matrix4<f64>, bool)> {
    let xn = x.norm();
    if xn < TOL_ZERO {
        return Err(FgsError::ZeroVector(xn));
    }
    let xhat = x / xn;
    let degenerate = (y - xhat * xhat.dot(y)).norm() < TOL_RANK;

    let mut r = Matrix4::<f64>::identity();
    let mut xv = *x;
    // Rotate x onto e₀: eliminate components 3, 2, 1 in turn.
    for k in (0..3).rev() {
        let (a, b) = (xv[k], xv[k + 1]);
        if b.abs() > TOL_ZERO || (k == 0 && a < 0.0) {
            let g = GivensRotation::eliminating(k, a, b)?;
            let m = g.matrix2();
            rotate_vec4(&mut xv, k, &m);
            rotate_rows4(&mut r, k, &m);
        }
    }
    // Rotate the image of y to kill components 3 and 2, never touching e₀.
    let mut yv = r * y;
    for k in [2usize, 1] {
        let (a, b) = (yv[k], yv[k + 1]);
        if b.abs() > TOL_ZERO || (k == 1 && a < 0.0 && b.abs() > TOL_ZERO) {
            let g = GivensRotation::eliminating(k, a, b)?;
            let m = g.matrix2();
            rotate_vec4(&mut yv, k, &m);
            rotate_rows4(&mut r, k, &m);
        }
    }
    Ok((r, degenerate))
}

fn rotate_vec4(v: &mut Vector4<f64>, k: usize, m: &Matrix2<f64>) {
    let (a, b) = (v[k], v[k + 1]);
    v[k] = m[(0, 0)] * a + m[(0, 1)] * b;
    v[k + 1] = m[(1, 0)] * a + m[(1, 1)] * b;
}

fn rotate_rows4(r: &mut Matrix4<f64>, k: usize, m: &Matrix2<f64>) {
    for j in 0..4 {
        let (a, b) = (r[(k, j)], r[(k + 1, j)]);
        r[(k, j)] = m[(0, 0)] * a + m[(0, 1)] * b;
        r[(k + 1, j)] = m[(1, 0)] * a + m[(1, 1)] * b;
    }
}

/// Pfaffian of a real antisymmetric `2m x 2m` matrix by Parlett–Reid
/// elimination: for each even column, the largest subdiagonal entry is
/// permuted into the pivot position (each swap flips the sign), the column
/// is eliminated by congruence with a Gauss transform (determinant 1), and
/// the pivot entries `A[k, k+1]` are multiplied up. `Pf(A)² = det(A)`.
pub fn pfaffian(a: &DMatrix<f64>) -> FgsResult<f64> {
    let d = a.nrows();
    if d != a.ncols() || d % 2 != 0 {
        return Err(FgsError::OddDimension(d));
    }
    let asym = antisymmetry_defect(a);
    let scale = a.amax().max(1.0);
    if asym > TOL_ASYM * scale {
        return Err(FgsError::NotAntisymmetric(asym));
    }
    if d == 0 {
        return Ok(1.0);
    }
    let mut m = a.clone();
    let mut pf = 1.0_f64;
    for k in (0..d - 1).step_by(2) {
        // Pivot: largest |m[(j, k)]| for j > k.
        let mut p = k + 1;
        let mut best = m[(k + 1, k)].abs();
        for j in k + 2..d {
            let v = m[(j, k)].abs();
            if v > best {
                best = v;
                p = j;
            }
        }
        if best < TOL_ZERO * scale {
            return Ok(0.0);
        }
        if p != k + 1 {
            m.swap_rows(p, k + 1);
            m.swap_columns(p, k + 1);
            pf = -pf;
        }
        pf *= m[(k, k + 1)];
        let piv = m[(k + 1, k)];
        for j in k + 2..d {
            let mu = m[(j, k)] / piv;
            if mu != 0.0 {
                for col in 0..d {
                    let t = m[(k + 1, col)];
                    m[(j, col)] -= mu * t;
                }
                for row in 0..d {
                    let t = m[(row, k + 1)];
                    m[(row, j)] -= mu * t;
                }
            }
        }
    }
    Ok(pf)
}

/// Outcome of the column-elimination sweep driving a pure CM to basis-state
/// form `⊕ s_q J₂`.
#[derive(Debug, Clone)]
pub(crate) struct CmSweep {
    /// Eliminating rotations in application order: conjugating the input CM
    /// by `rotations[0]`, then `rotations[1]`, … yields `⊕ s_q J₂`.
    pub rotations: Vec<GivensRotation>,
    /// Per-qubit elimination records for qubits `0..n-1`.
    pub columns: Vec<SweepColumn>,
    /// Block signs after the sweep; `+1` is the `J₂` block of `|0⟩`.
    pub signs: Vec<f64>,
    /// Largest magnitude left where the sweep promises implicit zeros
    /// (odd columns below their block).
    pub implicit_defect: f64,
}

/// Elimination record for one qubit column.
#[derive(Debug, Clone)]
pub(crate) struct SweepColumn {
    /// Deepest (0-based) row of column `2q` holding a non-negligible entry
    /// before elimination; `2q + 1` when the qubit was already disentangled.
    pub r_q: usize,
    /// Index range of this qubit's rotations in `CmSweep::rotations`.
    pub rotations: std::ops::Range<usize>,
}

/// Eliminates every even column of a pure CM bottom-up with Givens
/// rotations. Entries count as nonzero above `τ_band · max|column|`; the
/// interleaved odd columns vanish automatically (their residue is reported
/// in `implicit_defect`).
pub(crate) fn cm_sweep(gamma: &DMatrix<f64>) -> FgsResult<CmSweep> {
    let dim = gamma.nrows();
    let n = dim / 2;
    let pd = purity_defect(gamma);
    if pd > TOL_PURE {
        return Err(FgsError::NotPure(pd));
    }
    let mut g = gamma.clone();
    let mut rotations: Vec<GivensRotation> = Vec::new();
    let mut columns: Vec<SweepColumn> = Vec::with_capacity(n.saturating_sub(1));
    let mut signs: Vec<f64> = Vec::with_capacity(n);
    let mut implicit = 0.0_f64;

    for q in 0..n.saturating_sub(1) {
        let col = 2 * q;
        let mut colmax = 0.0_f64;
        for r in col + 1..dim {
            colmax = colmax.max(g[(r, col)].abs());
        }
        let mut r_q = col + 1;
        for r in (col + 1..dim).rev() {
            if g[(r, col)].abs() > TOL_BAND * colmax {
                r_q = r;
                break;
            }
        }
        let start = rotations.len();
        for k in (col + 2..=r_q).rev() {
            let (a, b) = (g[(k - 1, col)], g[(k, col)]);
            if b.abs() > TOL_ZERO || (k == col + 2 && a < 0.0) {
                let giv = GivensRotation::eliminating(k - 1, a, b)?;
                giv.conjugate(&mut g);
                rotations.push(giv);
            }
        }
        columns.push(SweepColumn { r_q, rotations: start..rotations.len() });
        signs.push(g[(col + 1, col)]);
        for r in col + 2..dim {
            implicit = implicit.max(g[(r, col + 1)].abs());
        }
    }
    if n > 0 {
        signs.push(g[(dim - 1, dim - 2)]);
    }
    Ok(CmSweep { rotations, columns, signs, implicit_defect: implicit })
}

/// Fermionic Williamson normal form: special-orthogonal `R` and Williamson
/// eigenvalues `λ` with `R A Rᵀ = ⊕ λ_i J₂`, sorted by descending `|λ|`
/// (ties keep the block order of the construction). Because `R` is special
/// orthogonal, the product of the `λ_i` is pinned to `Pf(A)`; at most the
/// last (smallest-magnitude) eigenvalue is returned negative.
///
/// Pure CMs are reduced by the elimination sweep; every other antisymmetric
/// matrix (mixed CMs, Hamiltonian coefficient matrices of any scale) goes
/// through the Hermitian eigendecomposition of `iA`, whose conjugate
/// eigenvector pairs are recombined into real rotation rows.
pub fn williamson_form(a: &DMatrix<f64>) -> FgsResult<(DMatrix<f64>, Vec<f64>)> {
    let dim = a.nrows();
    if dim != a.ncols() || dim % 2 != 0 {
        return Err(FgsError::OddDimension(dim));
    }
    let scale = a.amax();
    let asym = antisymmetry_defect(a);
    if asym > TOL_ASYM * scale.max(1.0) {
        return Err(FgsError::NotAntisymmetric(asym));
    }
    let n = dim / 2;
    if scale < TOL_ZERO {
        return Ok((DMatrix::identity(dim, dim), vec![0.0; n]));
    }

    if purity_defect(a) <= TOL_PURE {
        let sweep = cm_sweep(a)?;
        let mut r = DMatrix::<f64>::identity(dim, dim);
        for giv in &sweep.rotations {
            giv.apply_left(&mut r);
        }
        return Ok((r, sweep.signs));
    }

    // Hermitian route: iA has real spectrum symmetric about zero; an
    // eigenvector v = (x + iy)/√2 of eigenvalue μ > 0 satisfies
    // A x = μ y, A y = -μ x, so the rows (xᵀ, yᵀ) produce a +μJ₂ block.
    let h = DMatrix::<C64>::from_fn(dim, dim, |i, j| C64::new(0.0, a[(i, j)]));
    let eig = nalgebra::SymmetricEigen::new(h);
    let ztol = 1e-12 * scale.max(1.0);
    let mut pos: Vec<usize> = (0..dim).filter(|&i| eig.eigenvalues[i] > ztol).collect();
    pos.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());

    let mut rows: Vec<DVector<f64>> = Vec::with_capacity(dim);
    let mut lambda: Vec<f64> = Vec::with_capacity(n);
    for &i in &pos {
        let v = eig.eigenvectors.column(i);
        let mut x = DVector::from_fn(dim, |r, _| v[r].re * std::f64::consts::SQRT_2);
        let mut y = DVector::from_fn(dim, |r, _| v[r].im * std::f64::consts::SQRT_2);
        x /= x.norm();
        let proj = x.dot(&y);
        y -= &x * proj;
        y /= y.norm();
        rows.push(x);
        rows.push(y);
        lambda.push(eig.eigenvalues[i]);
    }
    // Zero modes: the remaining eigenvectors span a conjugation-closed
    // space; recombine their real and imaginary parts into real rows.
    if rows.len() < dim {
        let mut cands: Vec<DVector<f64>> = Vec::new();
        for i in 0..dim {
            if eig.eigenvalues[i].abs() <= ztol {
                let v = eig.eigenvectors.column(i);
                cands.push(DVector::from_fn(dim, |r, _| v[r].re));
                cands.push(DVector::from_fn(dim, |r, _| v[r].im));
            }
        }
        let need = dim - rows.len();
        let picked = orthonormal_from(&rows, &cands, need);
        debug_assert_eq!(picked.len(), need);
        rows.extend(picked);
        lambda.resize(n, 0.0);
    }

    let mut r = DMatrix::<f64>::zeros(dim, dim);
    for (i, row) in rows.iter().enumerate() {
        r.row_mut(i).copy_from(&row.transpose());
    }
    if r.determinant() < 0.0 {
        let last = dim - 1;
        for j in 0..dim {
            r[(last, j)] = -r[(last, j)];
        }
        lambda[n - 1] = -lambda[n - 1];
    }
    Ok((r, lambda))
}

/// Greedy pivoted Gram–Schmidt: selects up to `need` vectors from `cands`
/// orthonormal to `base` and to each other.
pub(crate) fn orthonormal_from(
    base: &[DVector<f64>],
    cands: &[DVector<f64>],
    need: usize,
) -> Vec<DVector<f64>> {
    let mut picked: Vec<DVector<f64>> = Vec::with_capacity(need);
    let mut pool: Vec<DVector<f64>> = cands.to_vec();
    while picked.len() < need {
        // Re-project the pool and take the longest residual.
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in pool.iter().enumerate() {
            let mut w = v.clone();
            for b in base.iter().chain(picked.iter()) {
                let p = b.dot(&w);
                w -= b * p;
            }
            let norm = w.norm();
            if best.map(|(_, bn)| norm > bn).unwrap_or(true) {
                best = Some((i, norm));
            }
        }
        let (idx, norm) = best.expect("candidate pool exhausted");
        if norm < 1e-7 {
            break;
        }
        let mut w = pool.swap_remove(idx);
        for b in base.iter().chain(picked.iter()) {
            let p = b.dot(&w);
            w -= b * p;
        }
        // Second pass for numerical cleanliness.
        for b in base.iter().chain(picked.iter()) {
            let p = b.dot(&w);
            w -= b * p;
        }
        w /= w.norm();
        picked.push(w);
    }
    picked
}

/// Extends the orthonormal set `rows` to a full basis of `R^dim` with
/// pivoted Gram–Schmidt over the coordinate vectors.
pub(crate) fn orthonormal_completion(rows: &[DVector<f64>], dim: usize) -> Vec<DVector<f64>> {
    let cands: Vec<DVector<f64>> = (0..dim)
        .map(|i| {
            let mut e = DVector::zeros(dim);
            e[i] = 1.0;
            e
        })
        .collect();
    orthonormal_from(rows, &cands, dim - rows.len())
}

/// Smallest `β` with `|M_kl| ≤ τ_band` for all `|k - l| > β`.
pub fn band_width(m: &DMatrix<f64>) -> usize {
    let d = m.nrows();
    let mut beta = 0usize;
    for i in 0..d {
        for j in 0..d {
            let off = i.abs_diff(j);
            if off > beta && m[(i, j)].abs() > TOL_BAND {
                beta = off;
            }
        }
    }
    beta
}

/// Logarithm (base 2) of the Schmidt rank of a pure FGS across the cut
/// after qubit `cut` (1-based count of qubits on the left): half the rank
/// of the off-diagonal CM block, with rank counted as singular values above
/// [`TOL_RANK`]. An odd block rank signals numerical breakdown.
pub fn lsr_from_cm(gamma: &CovarianceMatrix, cut: usize) -> FgsResult<usize> {
    gamma.require_pure()?;
    let n = gamma.n();
    assert!(cut >= 1 && cut < n, "cut {cut} outside 1..{n}");
    let block = gamma.mat().view((2 * cut, 0), (2 * (n - cut), 2 * cut)).clone_owned();
    let sv = block.svd(false, false).singular_values;
    let rank = sv.iter().filter(|&&s| s > TOL_RANK).count();
    if rank % 2 != 0 {
        return Err(FgsError::OddRank(rank));
    }
    Ok(rank / 2)
}

/// Decomposes a special-orthogonal matrix into Givens rotations on adjacent
/// planes: the product `embed(out[0]) · embed(out[1]) · …` equals `R`. The
/// sequence is the column-major triangle (at most `d(d-1)/2` rotations);
/// zero-angle rotations are pruned.
///
/// Errors with [`FgsError::ReflectionRequired`] when `det R = -1` and
/// [`FgsError::NotOrthogonal`] when `R` is not orthogonal.
pub fn givens_qr_decompose(r: &DMatrix<f64>) -> FgsResult<Vec<GivensRotation>> {
    let d = r.nrows();
    if d != r.ncols() {
        return Err(FgsError::NotOrthogonal(format!("shape {}x{}", d, r.ncols())));
    }
    let ortho = purity_defect(r);
    if ortho > 1e-8 {
        return Err(FgsError::NotOrthogonal(format!("max |RRᵀ - 1| = {ortho:.3e}")));
    }
    let mut w = r.clone();
    let mut elim: Vec<GivensRotation> = Vec::new();
    for col in 0..d.saturating_sub(1) {
        for k in (col..d - 1).rev() {
            let (a, b) = (w[(k, col)], w[(k + 1, col)]);
            if b.abs() > TOL_ZERO || (k == col && a < 0.0) {
                let g = GivensRotation::eliminating(k, a, b)?;
                g.apply_left(&mut w);
                elim.push(g);
            }
        }
    }
    if d > 0 && w[(d - 1, d - 1)] < 0.0 {
        return Err(FgsError::ReflectionRequired);
    }
    let mut defect = 0.0_f64;
    for i in 0..d {
        for j in 0..d {
            let t = if i == j { 1.0 } else { 0.0 };
            defect = defect.max((w[(i, j)] - t).abs());
        }
    }
    if defect > 1e-7 {
        return Err(FgsError::NotOrthogonal(format!(
            "Givens reduction left residue {defect:.3e}"
        )));
    }
    Ok(elim.into_iter().map(GivensRotation::inverse).collect())
}

/// Splits `W ∈ SO(6)` as `W = (1₂ ⊕ A)(B ⊕ 1₂)(1₂ ⊕ C)` with
/// `A, B, C ∈ SO(4)`; the middle factor acts on the first four coordinates.
/// Such a split exists for every special-orthogonal `W`.
pub(crate) fn split_so6(w: &DMatrix<f64>) -> FgsResult<(Matrix4<f64>, Matrix4<f64>, Matrix4<f64>)> {
    assert_eq!(w.nrows(), 6);
    assert_eq!(w.ncols(), 6);
    let x = Vector4::new(w[(2, 0)], w[(3, 0)], w[(4, 0)], w[(5, 0)]);
    let y = Vector4::new(w[(2, 1)], w[(3, 1)], w[(4, 1)], w[(5, 1)]);
    // Rotation on the last four coordinates pushing the first two columns
    // up into the first four rows.
    let rtil = if x.norm() >= TOL_ZERO {
        elim_last_two(&x, &y)?.0
    } else if y.norm() >= TOL_ZERO {
        elim_last_two(&y, &x)?.0
    } else {
        Matrix4::identity()
    };
    let mut l = DMatrix::<f64>::identity(6, 6);
    for i in 0..4 {
        for j in 0..4 {
            l[(2 + i, 2 + j)] = rtil[(i, j)];
        }
    }
    let xw = &l * w;
    // B's first two columns are forced; complete to SO(4).
    let c0 = DVector::from_iterator(4, (0..4).map(|i| xw[(i, 0)]));
    let c1 = DVector::from_iterator(4, (0..4).map(|i| xw[(i, 1)]));
    let rest = orthonormal_completion(&[c0.clone(), c1.clone()], 4);
    let mut b = Matrix4::<f64>::zeros();
    for i in 0..4 {
        b[(i, 0)] = c0[i];
        b[(i, 1)] = c1[i];
        b[(i, 2)] = rest[0][i];
        b[(i, 3)] = rest[1][i];
    }
    if b.determinant() < 0.0 {
        for i in 0..4 {
            b[(i, 3)] = -b[(i, 3)];
        }
    }
    let mut bt6 = DMatrix::<f64>::identity(6, 6);
    for i in 0..4 {
        for j in 0..4 {
            bt6[(i, j)] = b[(j, i)];
        }
    }
    let y6 = &bt6 * &xw;
    let mut c = Matrix4::<f64>::zeros();
    for i in 0..4 {
        for j in 0..4 {
            c[(i, j)] = y6[(2 + i, 2 + j)];
        }
    }
    let a = rtil.transpose();
    Ok((a, b, c))
}

/// Splits `W ∈ SO(6)` as `W = (A ⊕ 1₂)(1₂ ⊕ B)(C ⊕ 1₂)` — the mirror image
/// of [`split_so6`], obtained by conjugating with the index reversal.
pub(crate) fn split_so6_rev(
    w: &DMatrix<f64>,
) -> FgsResult<(Matrix4<f64>, Matrix4<f64>, Matrix4<f64>)> {
    let wr = reverse_conj(w);
    let (a, b, c) = split_so6(&wr)?;
    Ok((reverse4(&a), reverse4(&b), reverse4(&c)))
}

fn reverse_conj(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    DMatrix::from_fn(d, d, |i, j| m[(d - 1 - i, d - 1 - j)])
}

fn reverse4(m: &Matrix4<f64>) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| m[(3 - i, 3 - j)])
}

/// In-place congruence of `g` with a 4x4 rotation acting on rows/columns
/// `pos..pos+4`.
pub(crate) fn conjugate_block4(g: &mut DMatrix<f64>, pos: usize, r: &Matrix4<f64>) {
    let d = g.ncols();
    // Rows.
    for j in 0..d {
        let v = [g[(pos, j)], g[(pos + 1, j)], g[(pos + 2, j)], g[(pos + 3, j)]];
        for i in 0..4 {
            g[(pos + i, j)] = (0..4).map(|k| r[(i, k)] * v[k]).sum();
        }
    }
    // Columns (right-multiplication by Rᵀ).
    for i in 0..d {
        let v = [g[(i, pos)], g[(i, pos + 1)], g[(i, pos + 2)], g[(i, pos + 3)]];
        for j in 0..4 {
            g[(i, pos + j)] = (0..4).map(|k| r[(j, k)] * v[k]).sum();
        }
    }
}

/// In-place congruence of `g` with an arbitrary square rotation acting on
/// rows/columns `pos..pos+dim(r)`: `g ← (1 ⊕ r ⊕ 1) g (1 ⊕ r ⊕ 1)ᵀ`.
pub(crate) fn conjugate_embedded(g: &mut DMatrix<f64>, pos: usize, r: &DMatrix<f64>) {
    let d = r.nrows();
    debug_assert_eq!(r.ncols(), d, "rotation must be square");
    debug_assert!(pos + d <= g.nrows(), "rotation exceeds matrix bounds");
    let rows = g.rows(pos, d).clone_owned();
    g.rows_mut(pos, d).copy_from(&(r * rows));
    let cols = g.columns(pos, d).clone_owned();
    g.columns_mut(pos, d).copy_from(&(cols * r.transpose()));
}

/// Dense embedding of a 4x4 rotation at row/column offset `pos`.
pub(crate) fn embed4(dim: usize, pos: usize, r: &Matrix4<f64>) -> DMatrix<f64> {
    assert!(pos + 4 <= dim);
    let mut m = DMatrix::<f64>::identity(dim, dim);
    for i in 0..4 {
        for j in 0..4 {
            m[(pos + i, pos + j)] = r[(i, j)];
        }
    }
    m
}

/// Haar-random special-orthogonal matrix: QR of a Gaussian matrix with the
/// R-diagonal sign fix, then a final column flip onto `det = +1`.
pub fn haar_so<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    use rand::RngExt as _;
    use rand_distr::StandardNormal;
    let gauss = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    let qr = gauss.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            for i in 0..dim {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    if q.determinant() < 0.0 {
        for i in 0..dim {
            q[(i, dim - 1)] = -q[(i, dim - 1)];
        }
    }
    q
}

/// Random pure covariance matrix: a Haar rotation conjugating the CM of a
/// uniformly random basis state (both parity sectors occur).
pub fn random_pure_cm<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> CovarianceMatrix {
    use rand::RngExt as _;
    let dim = 2 * n;
    let mut g = DMatrix::<f64>::zeros(dim, dim);
    for q in 0..n {
        let s = if rng.random::<bool>() { -1.0 } else { 1.0 };
        g[(2 * q, 2 * q + 1)] = -s;
        g[(2 * q + 1, 2 * q)] = s;
    }
    let r = haar_so(dim, rng);
    let m = &r * g * r.transpose();
    CovarianceMatrix::from_matrix_unchecked(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn j2() -> Matrix2<f64> {
        Matrix2::new(0.0, -1.0, 1.0, 0.0)
    }

    /// ⊕ s_q J₂ as a dense matrix.
    fn basis_cm(signs: &[f64]) -> DMatrix<f64> {
        let d = 2 * signs.len();
        let mut g = DMatrix::zeros(d, d);
        for (q, &s) in signs.iter().enumerate() {
            g[(2 * q, 2 * q + 1)] = -s;
            g[(2 * q + 1, 2 * q)] = s;
        }
        g
    }

    #[test]
    fn elim_second_examples() {
        // Already eliminated.
        let s = elim_second(Vector2::new(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(s, Matrix2::identity(), epsilon = 1e-15);
        // Quarter turn.
        let s = elim_second(Vector2::new(0.0, 1.0)).unwrap();
        let v = s * Vector2::new(0.0, 1.0);
        assert_abs_diff_eq!(v, Vector2::new(1.0, 0.0), epsilon = 1e-15);
        // Pythagorean norm.
        let s = elim_second(Vector2::new(3.0, 4.0)).unwrap();
        let v = s * Vector2::new(3.0, 4.0);
        assert_abs_diff_eq!(v, Vector2::new(5.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(s.determinant(), 1.0, epsilon = 1e-12);
        assert!(matches!(
            elim_second(Vector2::new(0.0, 0.0)),
            Err(FgsError::ZeroVector(_))
        ));
    }

    #[test]
    fn elim_last_two_examples() {
        // Already eliminated pair.
        let (r, deg) = elim_last_two(
            &Vector4::new(1.0, 0.0, 0.0, 0.0),
            &Vector4::new(0.0, 1.0, 0.0, 0.0),
        )
        .unwrap();
        assert!(!deg);
        assert_abs_diff_eq!(r, Matrix4::identity(), epsilon = 1e-15);
        // Coordinate-pair swap (up to signs).
        let x = Vector4::new(0.0, 0.0, 1.0, 0.0);
        let y = Vector4::new(0.0, 0.0, 0.0, 1.0);
        let (r, deg) = elim_last_two(&x, &y).unwrap();
        assert!(!deg);
        let (rx, ry) = (r * x, r * y);
        assert_abs_diff_eq!(rx, Vector4::new(1.0, 0.0, 0.0, 0.0), epsilon = 1e-12);
        assert!(ry[2].abs() < 1e-12 && ry[3].abs() < 1e-12);
        assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-10);
        // Dependent pair: flagged, identity second stage.
        let (_, deg) = elim_last_two(&x, &(x * -2.5)).unwrap();
        assert!(deg);
    }

    #[test]
    fn elim_last_two_random_property() {
        let mut rg = rng(7);
        for _ in 0..200 {
            let x = Vector4::from_fn(|_, _| rg.random::<f64>() * 2.0 - 1.0);
            let y = Vector4::from_fn(|_, _| rg.random::<f64>() * 2.0 - 1.0);
            let (r, _) = elim_last_two(&x, &y).unwrap();
            let (rx, ry) = (r * x, r * y);
            assert!(rx[1].abs() + rx[2].abs() + rx[3].abs() < 1e-12);
            assert!((rx[0] - x.norm()).abs() < 1e-12);
            assert!(ry[2].abs() + ry[3].abs() < 1e-12);
            assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn pfaffian_two_by_two_is_top_entry() {
        let j = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert_abs_diff_eq!(pfaffian(&j).unwrap(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn pfaffian_block_multiplicative() {
        let mut rg = rng(11);
        let rand_antisym = |rg: &mut ChaCha12Rng, d: usize| {
            let m = DMatrix::<f64>::from_fn(d, d, |_, _| rg.random::<f64>() * 2.0 - 1.0);
            &m - m.transpose()
        };
        let a = rand_antisym(&mut rg, 4);
        let b = rand_antisym(&mut rg, 6);
        let mut ab = DMatrix::<f64>::zeros(10, 10);
        ab.view_mut((0, 0), (4, 4)).copy_from(&a);
        ab.view_mut((4, 4), (6, 6)).copy_from(&b);
        let (pa, pb, pab) = (
            pfaffian(&a).unwrap(),
            pfaffian(&b).unwrap(),
            pfaffian(&ab).unwrap(),
        );
        assert_abs_diff_eq!(pab, pa * pb, epsilon = 1e-10 * pab.abs().max(1.0));
    }

    #[test]
    fn pfaffian_squares_to_determinant() {
        let mut rg = rng(13);
        for _ in 0..50 {
            let m = DMatrix::<f64>::from_fn(6, 6, |_, _| rg.random::<f64>() * 2.0 - 1.0);
            let a = &m - m.transpose();
            let pf = pfaffian(&a).unwrap();
            let det = a.determinant();
            assert!((pf * pf - det).abs() <= 1e-8 * det.abs().max(1e-10));
        }
    }

    #[test]
    fn pfaffian_orthogonal_congruence() {
        // Pf(R A Rᵀ) = det(R) Pf(A) for rotations and reflections.
        let mut rg = rng(17);
        let m = DMatrix::<f64>::from_fn(6, 6, |_, _| rg.random::<f64>() * 2.0 - 1.0);
        let a = &m - m.transpose();
        let pf = pfaffian(&a).unwrap();
        let r = haar_so(6, &mut rg);
        let conj = &r * &a * r.transpose();
        assert_abs_diff_eq!(pfaffian(&conj).unwrap(), pf, epsilon = 1e-9);
        // Reflection: flip one row/column sign.
        let mut refl = DMatrix::<f64>::identity(6, 6);
        refl[(2, 2)] = -1.0;
        let rr = &r * refl;
        let conj = &rr * &a * rr.transpose();
        assert_abs_diff_eq!(pfaffian(&conj).unwrap(), -pf, epsilon = 1e-9);
    }

    #[test]
    fn williamson_identity_blocks() {
        let g = basis_cm(&[1.0, 1.0]);
        let (r, lam) = williamson_form(&g).unwrap();
        assert_abs_diff_eq!(r, DMatrix::identity(4, 4), epsilon = 1e-12);
        assert_eq!(lam, vec![1.0, 1.0]);
    }

    #[test]
    fn williamson_mixed_blocks() {
        // (-J₂) ⊕ (0.5 J₂): |λ| = (1, 0.5); reconstruction is the contract.
        let mut g = DMatrix::<f64>::zeros(4, 4);
        g[(0, 1)] = 1.0;
        g[(1, 0)] = -1.0;
        g[(2, 3)] = -0.5;
        g[(3, 2)] = 0.5;
        let (r, lam) = williamson_form(&g).unwrap();
        assert_abs_diff_eq!(lam[0].abs(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(lam[1].abs(), 0.5, epsilon = 1e-10);
        let target = basis_cm(&lam);
        assert_abs_diff_eq!(&r * &g * r.transpose(), target, epsilon = 1e-9);
        assert_abs_diff_eq!(purity_defect(&(r.clone() * r.transpose())), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn williamson_pure_random() {
        let mut rg = rng(23);
        for n in [2usize, 3, 5] {
            let g = random_pure_cm(n, &mut rg);
            let (r, lam) = williamson_form(g.mat()).unwrap();
            for l in &lam {
                assert_abs_diff_eq!(l.abs(), 1.0, epsilon = 1e-9);
            }
            let target = basis_cm(&lam);
            assert_abs_diff_eq!(&r * g.mat() * r.transpose(), target, epsilon = 1e-8);
        }
    }

    #[test]
    fn williamson_mixed_random_reconstruction() {
        let mut rg = rng(29);
        for trial in 0..20 {
            let n = 2 + trial % 3;
            let mut vals: Vec<f64> = (0..n).map(|_| rg.random::<f64>()).collect();
            vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let g0 = basis_cm(&vals);
            let r0 = haar_so(2 * n, &mut rg);
            let g = &r0 * &g0 * r0.transpose();
            let (r, lam) = williamson_form(&g).unwrap();
            let target = basis_cm(&lam);
            assert_abs_diff_eq!(&r * &g * r.transpose(), target, epsilon = 1e-8);
            let mut sorted = vals.clone();
            sorted.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap());
            for (got, want) in lam.iter().zip(sorted.iter()) {
                assert_abs_diff_eq!(got.abs(), want.abs(), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn williamson_is_involution_consistent() {
        // Re-running on the normal form leaves λ unchanged.
        let mut rg = rng(31);
        let g = random_pure_cm(4, &mut rg);
        let (r, lam) = williamson_form(g.mat()).unwrap();
        let nf = &r * g.mat() * r.transpose();
        let (_, lam2) = williamson_form(&nf).unwrap();
        for (a, b) in lam.iter().zip(lam2.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn williamson_hamiltonian_scale() {
        // Coefficient matrices of arbitrary scale are accepted.
        let mut rg = rng(37);
        let m = DMatrix::<f64>::from_fn(8, 8, |_, _| 4.0 * (rg.random::<f64>() * 2.0 - 1.0));
        let a = &m - m.transpose();
        let (r, eps) = williamson_form(&a).unwrap();
        let target = basis_cm(&eps);
        assert_abs_diff_eq!(&r * &a * r.transpose(), target, epsilon = 1e-8);
    }

    #[test]
    fn band_width_examples() {
        assert_eq!(band_width(&basis_cm(&[1.0, -1.0, 1.0])), 1);
        let mut rg = rng(41);
        let g = random_pure_cm(4, &mut rg);
        assert_eq!(band_width(g.mat()), 7);
    }

    #[test]
    fn lsr_product_and_pair() {
        // Product state: zero at every cut.
        let g = CovarianceMatrix::new(basis_cm(&[1.0, -1.0, 1.0])).unwrap();
        for cut in 1..3 {
            assert_eq!(lsr_from_cm(&g, cut).unwrap(), 0);
        }
        // One entangled pair across the cut: rotate a two-qubit block.
        let mut rg = rng(43);
        let mut m = basis_cm(&[1.0, 1.0]);
        let r = haar_so(4, &mut rg);
        m = &r * m * r.transpose();
        let g = CovarianceMatrix::from_matrix_unchecked(m);
        // Generic rotation entangles the pair.
        assert_eq!(lsr_from_cm(&g, 1).unwrap(), 1);
    }

    #[test]
    fn lsr_neighbor_cuts_differ_by_at_most_one() {
        let mut rg = rng(47);
        for _ in 0..10 {
            let g = random_pure_cm(6, &mut rg);
            let ranks: Vec<usize> =
                (1..6).map(|c| lsr_from_cm(&g, c).unwrap()).collect();
            for w in ranks.windows(2) {
                assert!(w[0].abs_diff(w[1]) <= 1);
            }
        }
    }

    #[test]
    fn givens_qr_reconstructs() {
        let mut rg = rng(53);
        // Identity: empty.
        assert!(givens_qr_decompose(&DMatrix::identity(4, 4)).unwrap().is_empty());
        // Single rotation recovered.
        let g = GivensRotation { k: 2, phi: 0.7 };
        let rots = givens_qr_decompose(&g.embed(6)).unwrap();
        assert_eq!(rots.len(), 1);
        assert_eq!(rots[0].k, 2);
        assert_abs_diff_eq!(rots[0].phi, 0.7, epsilon = 1e-12);
        // Random SO(8).
        for _ in 0..20 {
            let r = haar_so(8, &mut rg);
            let rots = givens_qr_decompose(&r).unwrap();
            assert!(rots.len() <= 8 * 7 / 2);
            let mut acc = DMatrix::<f64>::identity(8, 8);
            for g in &rots {
                acc = acc * g.embed(8);
            }
            assert_abs_diff_eq!(acc, r, epsilon = 1e-9);
        }
        // Reflections are rejected.
        let mut refl = DMatrix::<f64>::identity(4, 4);
        refl[(3, 3)] = -1.0;
        assert!(matches!(
            givens_qr_decompose(&refl),
            Err(FgsError::ReflectionRequired)
        ));
    }

    #[test]
    fn split_so6_reconstructs() {
        let mut rg = rng(59);
        for _ in 0..50 {
            let w = haar_so(6, &mut rg);
            let (a, b, c) = split_so6(&w).unwrap();
            let mut prod = embed4(6, 2, &a);
            prod = prod * embed4(6, 0, &b);
            prod = prod * embed4(6, 2, &c);
            assert_abs_diff_eq!(prod, w, epsilon = 1e-9);
            let (a, b, c) = split_so6_rev(&w).unwrap();
            let mut prod = embed4(6, 0, &a);
            prod = prod * embed4(6, 2, &b);
            prod = prod * embed4(6, 0, &c);
            assert_abs_diff_eq!(prod, w, epsilon = 1e-9);
        }
    }

    #[test]
    fn sweep_drives_to_basis_form() {
        let mut rg = rng(61);
        for n in [2usize, 4, 6] {
            let g = random_pure_cm(n, &mut rg);
            let sweep = cm_sweep(g.mat()).unwrap();
            let mut m = g.mat().clone();
            for giv in &sweep.rotations {
                giv.conjugate(&mut m);
            }
            let target = basis_cm(&sweep.signs);
            assert_abs_diff_eq!(m, target, epsilon = 1e-8);
            assert!(sweep.implicit_defect < 1e-8);
            for s in &sweep.signs {
                assert_abs_diff_eq!(s.abs(), 1.0, epsilon = 1e-8);
            }
            // Touched qubits end in |0⟩.
            for (q, colrec) in sweep.columns.iter().enumerate() {
                if !colrec.rotations.is_empty() {
                    assert_abs_diff_eq!(sweep.signs[q], 1.0, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn haar_so_is_special_orthogonal() {
        let mut rg = rng(67);
        for dim in [2usize, 5, 12] {
            let q = haar_so(dim, &mut rg);
            assert!(purity_defect(&q) < 1e-12);
            assert_abs_diff_eq!(q.determinant(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn cm_json_round_trip_is_bit_exact() {
        let mut rg = rng(71);
        let g = random_pure_cm(3, &mut rg);
        let s = g.to_json();
        let g2 = CovarianceMatrix::from_json(&s).unwrap();
        assert_eq!(g.mat(), g2.mat());
        // A second serialization is byte-identical.
        assert_eq!(s, g2.to_json());
    }

    #[test]
    fn cm_validation_rejects_bad_input() {
        let m = DMatrix::<f64>::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            CovarianceMatrix::new(m),
            Err(FgsError::NotAntisymmetric(_))
        ));
        let m = basis_cm(&[2.0]);
        assert!(CovarianceMatrix::new(m).is_err());
        let _ = j2();
    }
}
