//! Classical simulation: an exact statevector reference for small systems,
//! covariance-matrix evolution, Wick-theorem expectation values, and the
//! phase-sensitive inner-product contraction for matchgate circuits.
//!
//! Statevector indices follow the big-endian convention: qubit 1 is the most
//! significant bit, so `|b₁…b_n⟩` sits at index `Σ_k b_k 2^(n-k)`. Under the
//! Jordan–Wigner transformation `c_{2k-1} = Z₁…Z_{k-1} X_k` and
//! `c_{2k} = Z₁…Z_{k-1} Y_k` (1-based), with Majorana indices 0-based in
//! code.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4};

use crate::circuit::{invert_diagonal, to_rsf, BasisState, Diagonal, RsfCircuit};
use crate::error::{FgsError, FgsResult};
use crate::linalg::{conjugate_block4, pfaffian, CovarianceMatrix};
use crate::matchgate::{basis_cm, Matchgate, PlacedGate};
use crate::{C64, ORACLE_CAP, TOL_RANK};

/// Guards the exponential-cost reference paths.
pub(crate) fn check_oracle_size(n: usize) -> FgsResult<()> {
    if n > ORACLE_CAP {
        Err(FgsError::TooLarge { n, cap: ORACLE_CAP })
    } else {
        Ok(())
    }
}

/// `|b⟩` as a dense `2^n` vector.
pub fn basis_vector(bits: &[u8]) -> FgsResult<DVector<C64>> {
    check_oracle_size(bits.len())?;
    let n = bits.len();
    let mut idx = 0usize;
    for (k, &b) in bits.iter().enumerate() {
        debug_assert!(b <= 1);
        idx |= (b as usize) << (n - 1 - k);
    }
    let mut v = DVector::zeros(1 << n);
    v[idx] = C64::new(1.0, 0.0);
    Ok(v)
}

/// Applies a two-qubit unitary on the adjacent pair `(qubit, qubit+1)`
/// (1-based) in place; the gate's basis order is `|00⟩,|01⟩,|10⟩,|11⟩` with
/// the first bit on `qubit`.
pub fn apply_gate2(psi: &mut DVector<C64>, n: usize, qubit: usize, u: &Matrix4<C64>) {
    assert!(qubit >= 1 && qubit < n, "gate on ({qubit},{}) outside register", qubit + 1);
    assert_eq!(psi.len(), 1 << n);
    let hi = 1usize << (n - qubit);
    let lo = 1usize << (n - qubit - 1);
    for idx in 0..psi.len() {
        if idx & hi != 0 || idx & lo != 0 {
            continue;
        }
        let i = [idx, idx | lo, idx | hi, idx | hi | lo];
        let a = [psi[i[0]], psi[i[1]], psi[i[2]], psi[i[3]]];
        for r in 0..4 {
            psi[i[r]] = (0..4).map(|c| u[(r, c)] * a[c]).sum();
        }
    }
}

/// Dense `1 ⊗ U ⊗ 1` with `U` on qubits `(qubit, qubit+1)` of `n`.
pub fn embed_unitary(u: &Matrix4<C64>, qubit: usize, n: usize) -> DMatrix<C64> {
    assert!(qubit >= 1 && qubit < n);
    let left = DMatrix::<C64>::identity(1 << (qubit - 1), 1 << (qubit - 1));
    let mid = DMatrix::<C64>::from_fn(4, 4, |i, j| u[(i, j)]);
    let right =
        DMatrix::<C64>::identity(1 << (n - qubit - 1), 1 << (n - qubit - 1));
    left.kronecker(&mid).kronecker(&right)
}

/// `c_k |ψ⟩` for the 0-based Majorana index `k` (Jordan–Wigner string
/// applied bitwise).
pub fn apply_majorana(psi: &DVector<C64>, n: usize, k: usize) -> DVector<C64> {
    assert!(k < 2 * n);
    let q = k / 2 + 1; // 1-based qubit
    let y_type = k % 2 == 1;
    let flip = 1usize << (n - q);
    let string_mask = if q >= 2 { usize::MAX << (n - q + 1) } else { 0 } & ((1 << n) - 1);
    let mut out = DVector::zeros(psi.len());
    for idx in 0..psi.len() {
        let a = psi[idx];
        if a == C64::new(0.0, 0.0) {
            continue;
        }
        let sign = if (idx & string_mask).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
        let factor = if y_type {
            // Y: |0⟩ ↦ i|1⟩, |1⟩ ↦ -i|0⟩.
            if idx & flip == 0 { C64::new(0.0, sign) } else { C64::new(0.0, -sign) }
        } else {
            C64::new(sign, 0.0)
        };
        out[idx ^ flip] += factor * a;
    }
    out
}

/// Dense `2^n x 2^n` Majorana operator; exponentially large, test sizes only.
pub fn majorana_dense(n: usize, k: usize) -> FgsResult<DMatrix<C64>> {
    check_oracle_size(n)?;
    let dim = 1usize << n;
    let mut m = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let mut e = DVector::zeros(dim);
        e[col] = C64::new(1.0, 0.0);
        let v = apply_majorana(&e, n, k);
        for row in 0..dim {
            m[(row, col)] = v[row];
        }
    }
    Ok(m)
}

/// Covariance matrix `Γ_kl = (i/2)⟨ψ|[c_k, c_l]|ψ⟩` extracted directly from
/// a normalized statevector.
pub fn cm_from_statevector(psi: &DVector<C64>) -> FgsResult<CovarianceMatrix> {
    let dim = psi.len();
    let n = dim.trailing_zeros() as usize;
    if dim != 1 << n || n == 0 {
        return Err(FgsError::Validation(format!(
            "statevector length {dim} is not a power of two"
        )));
    }
    check_oracle_size(n)?;
    let norm = psi.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(FgsError::Validation(format!("statevector norm {norm} ≠ 1")));
    }
    let cpsi: Vec<DVector<C64>> = (0..2 * n).map(|k| apply_majorana(psi, n, k)).collect();
    let mut g = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for k in 0..2 * n {
        for l in k + 1..2 * n {
            // Γ_kl = i⟨ψ|c_k c_l|ψ⟩ for k ≠ l (the commutator's δ term drops).
            let v = C64::new(0.0, 1.0) * cpsi[k].dotc(&cpsi[l]);
            g[(k, l)] = v.re;
            g[(l, k)] = -v.re;
        }
    }
    CovarianceMatrix::new(g)
}

/// Logarithmic Schmidt ranks `LSR_k` of `ψ` across every contiguous cut
/// `k = 1..n-1` (qubits `1..k` against the rest): log2 of the count of
/// singular values above `τ_rank`. Errors if a count is not a power of two,
/// which cannot happen for fermionic Gaussian states.
pub fn schmidt_ranks(psi: &DVector<C64>, n: usize) -> FgsResult<Vec<usize>> {
    check_oracle_size(n)?;
    assert_eq!(psi.len(), 1 << n);
    let mut lsrs = Vec::with_capacity(n.saturating_sub(1));
    for cut in 1..n {
        let rows = 1usize << cut;
        let cols = 1usize << (n - cut);
        let m = DMatrix::<C64>::from_fn(rows, cols, |r, c| psi[r * cols + c]);
        let sv = m.svd(false, false).singular_values;
        let rank = sv.iter().filter(|&&s| s > TOL_RANK).count();
        if !rank.is_power_of_two() {
            return Err(FgsError::Validation(format!(
                "Schmidt rank {rank} at cut {cut} is not a power of two"
            )));
        }
        lsrs.push(rank.trailing_zeros() as usize);
    }
    Ok(lsrs)
}

/// Exact dense state `gates · |b⟩` (oracle; `n` capped at [`ORACLE_CAP`]).
pub fn statevector(gates: &[PlacedGate], b: &BasisState) -> FgsResult<DVector<C64>> {
    let n = b.n();
    check_oracle_size(n)?;
    let mut psi = basis_vector(&b.bits)?;
    for pg in gates {
        apply_gate2(&mut psi, n, pg.qubit, pg.gate.unitary());
    }
    Ok(psi)
}

/// CM of the computational basis state `|b⟩`: `⊕_k (−1)^{b_k} J₂` with
/// `J₂ = [[0, −1], [1, 0]]`.
pub fn cm_of_basis_state(b: &BasisState) -> CovarianceMatrix {
    CovarianceMatrix::from_matrix_unchecked(basis_cm(&b.bits))
}

/// CM update `Γ → R Γ Rᵀ`, one embedded rotation per gate in application
/// order. Purity is preserved exactly since every `R` is orthogonal.
pub fn apply_circuit_cm(gamma: &CovarianceMatrix, gates: &[PlacedGate]) -> CovarianceMatrix {
    let mut g = gamma.mat().clone();
    for pg in gates {
        conjugate_block4(&mut g, 2 * (pg.qubit - 1), pg.gate.rotation());
    }
    CovarianceMatrix::from_matrix_unchecked(g)
}

/// Wick's theorem: `Pf(Γ_{K,K})` for the 0-based, strictly ascending
/// Majorana index set `K = {k_1 < … < k_L}`. The Majorana-string
/// expectation follows as `⟨c_{k_1} … c_{k_L}⟩ = (−i)^{L/2} · Pf(Γ_{K,K})`;
/// odd-length strings vanish by parity and return 0, the empty string
/// returns 1.
pub fn wick_expectation(gamma: &CovarianceMatrix, indices: &[usize]) -> FgsResult<f64> {
    let l = indices.len();
    if l == 0 {
        return Ok(1.0);
    }
    if l % 2 == 1 {
        return Ok(0.0);
    }
    for w in indices.windows(2) {
        assert!(w[0] < w[1], "Majorana indices must be strictly ascending");
    }
    assert!(
        *indices.last().unwrap() < 2 * gamma.n(),
        "Majorana index out of range"
    );
    let m = gamma.mat();
    let sub = DMatrix::from_fn(l, l, |i, j| m[(indices[i], indices[j])]);
    pfaffian(&sub)
}

/// Which layer of the final depth-2 comb a gate belongs to.
#[derive(Clone, Copy, PartialEq, Eq)]
enum CombLayer {
    /// Ket-side gates, applied directly to `|b₁⟩`.
    A,
    /// Bra-side gates, contracted against `⟨b₂|`.
    B,
}

/// Exact inner product `⟨b₂| V† U |b₁⟩`, global phase included.
///
/// `V† U` is rewritten into right standard form against `|b₁⟩`; the loop
/// then peels each leading diagonal into a ket-side gate `A_k` (its lowest
/// gate, which commutes past everything else) and a bra-side gate `B_k`
/// (obtained by inverting the remainder of the diagonal against `⟨b₂|`),
/// re-canonicalizing the middle after every step. What survives is a
/// depth-2 comb of disjoint two-qubit gates, contracted left to right with
/// a two-entry frontier (no gate pair ever spans a qubit cut twice).
pub fn inner_product(
    u: &[PlacedGate],
    b1: &BasisState,
    v: &[PlacedGate],
    b2: &BasisState,
) -> FgsResult<C64> {
    let n = b1.n();
    if b2.n() != n {
        return Err(FgsError::Validation(format!(
            "bra is on {} qubits but ket is on {n}",
            b2.n()
        )));
    }
    for pg in u.iter().chain(v.iter()) {
        if pg.qubit < 1 || pg.qubit + 1 > n {
            return Err(FgsError::Validation(format!(
                "gate pair ({},{}) outside an {n}-qubit register",
                pg.qubit,
                pg.qubit + 1
            )));
        }
    }

    // W = V†U as a gate list in application order: U's gates, then V's
    // reversed with each gate adjointed.
    let mut w = u.to_vec();
    w.extend(v.iter().rev().map(|pg| PlacedGate::new(pg.gate.adjoint(), pg.qubit)));

    let c = to_rsf(&w, b1);
    let mut phase = c.global_phase;
    let mut diagonals = c.diagonals;

    let mut a_layer: Vec<PlacedGate> = Vec::new();
    let mut b_layer: Vec<PlacedGate> = Vec::new();
    let mut rounds = 0usize;
    while !diagonals.is_empty() {
        rounds += 1;
        assert!(rounds <= n.div_ceil(2), "split loop exceeded ⌈n/2⌉ rounds");
        let d = diagonals.remove(0);
        let q1 = d.k;
        // The diagonal's lowest gate touches qubits (q1, q1+1) only; every
        // remaining diagonal sits at pairs ≥ q1+2, so the gate commutes all
        // the way down onto the input state.
        a_layer.push(PlacedGate::new(d.gates[0].clone(), q1));
        if d.gates.len() == 1 {
            continue;
        }
        let dt = Diagonal { k: q1 + 1, gates: d.gates[1..].to_vec() };
        let f = invert_diagonal(&dt, b2)?;
        let bk = f.last().expect("inverting a non-empty diagonal yields gates").clone();
        debug_assert_eq!(bk.qubit, q1 + 1);
        b_layer.push(bk);
        // Middle operator after extraction: F̃ · V_rest, i.e. the remaining
        // diagonals applied first, then the inverted staircase minus its
        // lowest gate. All pairs are ≥ q1+2, so re-absorbing keeps every
        // move window on qubits still in their basis configuration.
        let rest = RsfCircuit { n, diagonals, input: b1.clone(), global_phase: 0.0 };
        let mut gl = rest.placed_gates();
        gl.extend_from_slice(&f[..f.len() - 1]);
        let c = to_rsf(&gl, b1);
        phase += c.global_phase;
        diagonals = c.diagonals;
        debug_assert!(diagonals.first().is_none_or(|d2| d2.k >= q1 + 2));
    }

    // Contract ⟨b₂| (∏B)(∏A) |b₁⟩ left to right. Within each layer the
    // pairs are pairwise disjoint, and a B at pair q coexists only with an
    // A at q−1, so at most one gate spans any qubit cut: the frontier is a
    // single two-entry table over the open wire between the layers.
    let mut a_at: Vec<Option<&Matrix4<C64>>> = vec![None; n + 1];
    let mut b_at: Vec<Option<&Matrix4<C64>>> = vec![None; n + 1];
    for pg in &a_layer {
        a_at[pg.qubit] = Some(pg.gate.unitary());
    }
    for pg in &b_layer {
        b_at[pg.qubit] = Some(pg.gate.unitary());
    }

    let zero = C64::new(0.0, 0.0);
    let mut scalar = C64::new(1.0, 0.0);
    // The gate spanning the cut behind qubit q, with its partial product as
    // a function of the wire value at q.
    let mut open: Option<(CombLayer, [C64; 2])> = None;
    for q in 1..=n {
        let ib = b1.bits[q - 1] as usize;
        let ob = b2.bits[q - 1] as usize;
        let start = if q < n {
            match (a_at[q], b_at[q]) {
                (Some(m), None) => Some((CombLayer::A, m)),
                (None, Some(m)) => Some((CombLayer::B, m)),
                (None, None) => None,
                (Some(_), Some(_)) => unreachable!("A and B gates never share a pair"),
            }
        } else {
            None
        };
        // Tensor element of a gate starting at pair q as a function of the
        // inter-layer wires (wq, wq1) at qubits q, q+1: an A gate consumes
        // the ket bits, a B gate the bra bits.
        let tensor = |layer: CombLayer, m: &Matrix4<C64>, wq: usize, wq1: usize| match layer {
            CombLayer::A => m[(2 * wq + wq1, 2 * ib + b1.bits[q] as usize)],
            CombLayer::B => m[(2 * ob + b2.bits[q] as usize, 2 * wq + wq1)],
        };
        open = match (open.take(), start) {
            (None, None) => {
                // Both layers act as identity on qubit q.
                if ib != ob {
                    return Ok(zero);
                }
                None
            }
            (Some((layer, t)), None) => {
                // The open gate ends here; the absent layer pins the wire.
                let forced = match layer {
                    CombLayer::A => ob,
                    CombLayer::B => ib,
                };
                scalar = t[forced];
                None
            }
            (None, Some((layer, m))) => {
                let forced = match layer {
                    CombLayer::A => ob,
                    CombLayer::B => ib,
                };
                Some((layer, [scalar * tensor(layer, m, forced, 0), scalar * tensor(layer, m, forced, 1)]))
            }
            (Some((_, t)), Some((layer, m))) => {
                // One gate ends and the other layer's gate starts: the wire
                // at q is summed over.
                let mut acc = [zero; 2];
                for (w1, a) in acc.iter_mut().enumerate() {
                    for (wq, tv) in t.iter().enumerate() {
                        *a += tv * tensor(layer, m, wq, w1);
                    }
                }
                Some((layer, acc))
            }
        };
    }
    debug_assert!(open.is_none(), "a gate spans past the last qubit");
    Ok(C64::new(0.0, phase).exp() * scalar)
}

/// Inner product `⟨ψ₂|ψ₁⟩` of two prepared states, both circuits' inputs
/// and global phases included.
pub fn state_overlap(c1: &RsfCircuit, c2: &RsfCircuit) -> FgsResult<C64> {
    let v = inner_product(&c1.placed_gates(), &c1.input, &c2.placed_gates(), &c2.input)?;
    Ok(v * C64::new(0.0, c1.global_phase - c2.global_phase).exp())
}

/// A single-qubit Pauli factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(ch: char) -> FgsResult<Self> {
        match ch.to_ascii_uppercase() {
            'I' => Ok(Pauli::I),
            'X' => Ok(Pauli::X),
            'Y' => Ok(Pauli::Y),
            'Z' => Ok(Pauli::Z),
            other => Err(FgsError::Validation(format!("invalid Pauli letter {other:?}"))),
        }
    }
}

/// Parses a Pauli string such as `"IXYZ"`, qubit 1 first.
pub fn parse_pauli_string(s: &str) -> FgsResult<Vec<Pauli>> {
    s.chars().map(Pauli::from_char).collect()
}

fn pauli_matrix2(p: Pauli) -> Matrix2<C64> {
    let o = C64::new(0.0, 0.0);
    let r = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match p {
        Pauli::I => Matrix2::new(r, o, o, r),
        Pauli::X => Matrix2::new(o, r, r, o),
        Pauli::Y => Matrix2::new(o, -i, i, o),
        Pauli::Z => Matrix2::new(r, o, o, -r),
    }
}

/// `P ⊗ Q` with the first factor on the lower qubit index (the more
/// significant bit of the 4x4 basis order).
fn pauli_kron(p: Pauli, q: Pauli) -> Matrix4<C64> {
    pauli_matrix2(p).kronecker(&pauli_matrix2(q))
}

/// Expectation value `⟨b| U† P U |b⟩` of a Pauli string.
///
/// Qubits carrying `X` or `Y` flip the fermionic parity, which the state
/// `U|b⟩` carries sharply, so an odd count makes the expectation vanish
/// identically. Otherwise those qubits are paired into adjacent two-qubit
/// matchgates (errors with [`FgsError::UnsupportedParity`] when a pair is
/// not adjacent, since the parity-breaking `G(A,B)·(P⊗1)` extension is out
/// of scope), each lone `Z` becomes `Z⊗1` on its own pair, and the layer is
/// contracted through [`inner_product`].
pub fn pauli_expectation(u: &[PlacedGate], b: &BasisState, paulis: &[Pauli]) -> FgsResult<f64> {
    let n = b.n();
    if paulis.len() != n {
        return Err(FgsError::Validation(format!(
            "Pauli string has length {} but the state has {n} qubits",
            paulis.len()
        )));
    }
    let odd: Vec<usize> =
        (1..=n).filter(|&q| matches!(paulis[q - 1], Pauli::X | Pauli::Y)).collect();
    if odd.len() % 2 == 1 {
        return Ok(0.0);
    }
    if n == 1 {
        // No two-qubit gates exist on one qubit; U is necessarily empty.
        return Ok(match paulis[0] {
            Pauli::I => 1.0,
            Pauli::Z => 1.0 - 2.0 * f64::from(b.bits[0]),
            _ => unreachable!("odd parity handled above"),
        });
    }
    let mut layer: Vec<PlacedGate> = Vec::new();
    for pair in odd.chunks(2) {
        let (q, r) = (pair[0], pair[1]);
        if r != q + 1 {
            return Err(FgsError::UnsupportedParity(format!(
                "parity-flipping factors at qubits {q} and {r} cannot be paired into an \
                 adjacent two-qubit matchgate"
            )));
        }
        let m = pauli_kron(paulis[q - 1], paulis[q]);
        layer.push(PlacedGate::new(Matchgate::from_unitary(&m)?, q));
    }
    for q in 1..=n {
        if paulis[q - 1] != Pauli::Z {
            continue;
        }
        let (m, p) = if q < n {
            (pauli_kron(Pauli::Z, Pauli::I), q)
        } else {
            (pauli_kron(Pauli::I, Pauli::Z), n - 1)
        };
        layer.push(PlacedGate::new(Matchgate::from_unitary(&m)?, p));
    }
    // The layer gates have pairwise disjoint non-identity factors, so their
    // product in any order is exactly P; apply them after U.
    let mut full = u.to_vec();
    full.extend(layer);
    let val = inner_product(&full, b, u, b)?;
    debug_assert!(val.im.abs() < 1e-8, "Hermitian expectation came out complex: {val}");
    Ok(val.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn basis_vector_indexing_is_big_endian() {
        let v = basis_vector(&[1, 0]).unwrap();
        assert_eq!(v[2], c(1.0, 0.0)); // |10⟩ at index 2
        let v = basis_vector(&[0, 1, 1]).unwrap();
        assert_eq!(v[3], c(1.0, 0.0));
    }

    #[test]
    fn majoranas_satisfy_clifford_algebra() {
        let n = 3;
        for k in 0..2 * n {
            for l in 0..2 * n {
                let ck = majorana_dense(n, k).unwrap();
                let cl = majorana_dense(n, l).unwrap();
                let anti = &ck * &cl + &cl * &ck;
                let target = if k == l { 2.0 } else { 0.0 };
                for i in 0..anti.nrows() {
                    for j in 0..anti.ncols() {
                        let t = if i == j { target } else { 0.0 };
                        assert_abs_diff_eq!(anti[(i, j)].re, t, epsilon = 1e-14);
                        assert_abs_diff_eq!(anti[(i, j)].im, 0.0, epsilon = 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn cm_of_basis_states_is_block_j() {
        let psi = basis_vector(&[0, 1]).unwrap();
        let g = cm_from_statevector(&psi).unwrap();
        let m = g.mat();
        // |0⟩ block: Γ₀₁ = -⟨Z⟩ = -1; |1⟩ block: +1.
        assert_abs_diff_eq!(m[(0, 1)], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m[(2, 3)], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.purity_defect(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn schmidt_lsr_of_product_state_is_zero() {
        let psi = basis_vector(&[1, 0, 1]).unwrap();
        assert_eq!(schmidt_ranks(&psi, 3).unwrap(), vec![0, 0]);
    }

    #[test]
    fn schmidt_lsr_of_bell_pair_is_one() {
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let mut psi = DVector::zeros(4);
        psi[0] = s; // |00⟩
        psi[3] = s; // |11⟩
        assert_eq!(schmidt_ranks(&psi, 2).unwrap(), vec![1]);
    }

    // ---------------- stage B: CM evolution, Wick, inner products ----------

    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn random_gates(n: usize, count: usize, rg: &mut ChaCha12Rng) -> Vec<PlacedGate> {
        (0..count)
            .map(|_| PlacedGate::new(Matchgate::random(rg), rg.random_range(1..n)))
            .collect()
    }

    fn random_bits(n: usize, rg: &mut ChaCha12Rng) -> BasisState {
        BasisState::new((0..n).map(|_| rg.random_range(0..2u8)).collect()).unwrap()
    }

    #[test]
    fn cm_of_basis_state_matches_block_convention_and_oracle() {
        let g0 = cm_of_basis_state(&BasisState::new(vec![0]).unwrap());
        assert_abs_diff_eq!(g0.mat()[(0, 1)], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g0.mat()[(1, 0)], 1.0, epsilon = 1e-15);
        let g1 = cm_of_basis_state(&BasisState::new(vec![1]).unwrap());
        assert_abs_diff_eq!(g1.mat()[(0, 1)], 1.0, epsilon = 1e-15);
        // |01⟩ → J₂ ⊕ (−J₂), cross-checked against the statevector oracle.
        let b = BasisState::new(vec![0, 1]).unwrap();
        let g = cm_of_basis_state(&b);
        assert_abs_diff_eq!(g.mat()[(0, 1)], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.mat()[(2, 3)], 1.0, epsilon = 1e-15);
        let oracle = cm_from_statevector(&basis_vector(&b.bits).unwrap()).unwrap();
        assert_abs_diff_eq!((g.mat() - oracle.mat()).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn apply_circuit_cm_identity_and_fswap() {
        let b01 = BasisState::new(vec![0, 1]).unwrap();
        let g = cm_of_basis_state(&b01);
        let same = apply_circuit_cm(&g, &[]);
        assert_abs_diff_eq!((g.mat() - same.mat()).norm(), 0.0, epsilon = 1e-15);
        // fSWAP on (1,2) maps |01⟩ to |10⟩ (up to phase, which the CM drops).
        let swapped = apply_circuit_cm(&g, &[PlacedGate::new(Matchgate::fswap(), 1)]);
        let b10 = cm_of_basis_state(&BasisState::new(vec![1, 0]).unwrap());
        assert_abs_diff_eq!((swapped.mat() - b10.mat()).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn apply_circuit_cm_matches_statevector_oracle_n8() {
        let mut rg = rng(901);
        let n = 8;
        let b = random_bits(n, &mut rg);
        let gates = random_gates(n, 50, &mut rg);
        let fast = apply_circuit_cm(&cm_of_basis_state(&b), &gates);
        let oracle = cm_from_statevector(&statevector(&gates, &b).unwrap()).unwrap();
        assert!((fast.mat() - oracle.mat()).norm() < 1e-10);
        assert!(fast.purity_defect() < 1e-10);
    }

    #[test]
    fn cm_and_statevector_evolution_commute_up_to_n10() {
        let mut rg = rng(902);
        for n in 2..=10usize {
            let b = random_bits(n, &mut rg);
            let gates = random_gates(n, 2 * n, &mut rg);
            let fast = apply_circuit_cm(&cm_of_basis_state(&b), &gates);
            let oracle = cm_from_statevector(&statevector(&gates, &b).unwrap()).unwrap();
            assert!(
                (fast.mat() - oracle.mat()).norm() < 1e-10,
                "CM/vector commutation broke at n = {n}"
            );
        }
    }

    #[test]
    fn statevector_identity_and_fswap() {
        let b = BasisState::new(vec![0, 1, 1]).unwrap();
        let psi = statevector(&[], &b).unwrap();
        assert_eq!(psi[3], c(1.0, 0.0)); // |011⟩ at index 3
        let swap = statevector(&[PlacedGate::new(Matchgate::fswap(), 1)], &b).unwrap();
        // fSWAP|01⟩ = |10⟩ with amplitude +1 (the −1 sits on |11⟩ only).
        assert_abs_diff_eq!((swap[5] - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn wick_expectation_trivial_lengths() {
        let b0 = BasisState::new(vec![0]).unwrap();
        let g = cm_of_basis_state(&b0);
        // L = 2 on |0⟩: ⟨c₁c₂⟩ = i (c₁c₂ = iZ), so Pf(Γ_sub) = Γ₀₁ = −1 and
        // the i^{L/2} relation gives i·i = −1. The printed i^L form would
        // give −i and is inconsistent with the CM definition Γ_kl = i⟨c_k c_l⟩.
        assert_abs_diff_eq!(wick_expectation(&g, &[0, 1]).unwrap(), -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(wick_expectation(&g, &[]).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(wick_expectation(&g, &[1]).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn wick_expectation_matches_majorana_oracle() {
        let mut rg = rng(903);
        let n = 6;
        for _ in 0..4 {
            let b = random_bits(n, &mut rg);
            let gates = random_gates(n, 18, &mut rg);
            let gamma = apply_circuit_cm(&cm_of_basis_state(&b), &gates);
            let psi = statevector(&gates, &b).unwrap();

            // L = 2: Pf = i^{1}·⟨c_a c_b⟩.
            let mut idx = [0usize; 2];
            idx[0] = rg.random_range(0..2 * n - 1);
            idx[1] = rg.random_range(idx[0] + 1..2 * n);
            let m_psi = apply_majorana(&apply_majorana(&psi, n, idx[1]), n, idx[0]);
            let ev = psi.dotc(&m_psi);
            let pf = wick_expectation(&gamma, &idx).unwrap();
            let rel = C64::new(0.0, 1.0) * ev;
            assert_abs_diff_eq!(rel.re, pf, epsilon = 1e-9);
            assert_abs_diff_eq!(rel.im, 0.0, epsilon = 1e-9);

            // L = 4: Pf = i^{2}·⟨c_a c_b c_c c_d⟩ = −⟨…⟩.
            let mut set = std::collections::BTreeSet::new();
            while set.len() < 4 {
                set.insert(rg.random_range(0..2 * n));
            }
            let quad: Vec<usize> = set.into_iter().collect();
            let mut m_psi = psi.clone();
            for &k in quad.iter().rev() {
                m_psi = apply_majorana(&m_psi, n, k);
            }
            let ev4 = psi.dotc(&m_psi);
            let pf4 = wick_expectation(&gamma, &quad).unwrap();
            assert_abs_diff_eq!(-ev4.re, pf4, epsilon = 1e-9);
            assert_abs_diff_eq!(ev4.im, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn inner_product_of_identical_circuits_is_one() {
        let mut rg = rng(904);
        let n = 6;
        let b = random_bits(n, &mut rg);
        let gates = random_gates(n, 20, &mut rg);
        let v = inner_product(&gates, &b, &gates, &b).unwrap();
        assert_abs_diff_eq!((v - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn inner_product_of_distinct_basis_states_is_zero() {
        let b1 = BasisState::new(vec![0, 1, 0, 1]).unwrap();
        let b2 = BasisState::new(vec![0, 0, 1, 1]).unwrap();
        let v = inner_product(&[], &b1, &[], &b2).unwrap();
        assert_eq!(v, c(0.0, 0.0));
        let w = inner_product(&[], &b1, &[], &b1).unwrap();
        assert_abs_diff_eq!((w - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn inner_product_matches_oracle_100_trials_n10() {
        let mut rg = rng(905);
        let n = 10;
        for trial in 0..100 {
            let b1 = random_bits(n, &mut rg);
            let b2 = random_bits(n, &mut rg);
            let u = random_gates(n, 30, &mut rg);
            let v = random_gates(n, 30, &mut rg);
            let got = inner_product(&u, &b1, &v, &b2).unwrap();
            let oracle =
                statevector(&v, &b2).unwrap().dotc(&statevector(&u, &b1).unwrap());
            assert!(
                (got - oracle).norm() < 1e-9,
                "trial {trial}: {got} vs oracle {oracle}"
            );
            // Phase invariant: arg agreement whenever the value is resolvable.
            if oracle.norm() > 1e-6 {
                let darg = (got / oracle).arg().abs();
                assert!(darg < 1e-8, "trial {trial}: arg deviates by {darg:.3e} rad");
            }
        }
    }

    #[test]
    fn inner_product_covers_small_and_odd_sizes() {
        let mut rg = rng(906);
        for n in 1..=7usize {
            for _ in 0..6 {
                let b1 = random_bits(n, &mut rg);
                let b2 = random_bits(n, &mut rg);
                let gates = if n == 1 { 0 } else { 3 * n };
                let u = random_gates(n.max(2), gates, &mut rg);
                let v = random_gates(n.max(2), gates, &mut rg);
                let (u, v) = if n == 1 { (vec![], vec![]) } else { (u, v) };
                let got = inner_product(&u, &b1, &v, &b2).unwrap();
                let oracle =
                    statevector(&v, &b2).unwrap().dotc(&statevector(&u, &b1).unwrap());
                assert!((got - oracle).norm() < 1e-9, "n = {n}: {got} vs {oracle}");
            }
        }
    }

    #[test]
    fn pauli_expectation_trivial_cases() {
        let n = 4;
        let b = BasisState::new(vec![0; n]).unwrap();
        let mut z1 = vec![Pauli::I; n];
        z1[0] = Pauli::Z;
        assert_abs_diff_eq!(pauli_expectation(&[], &b, &z1).unwrap(), 1.0, epsilon = 1e-12);
        let mut rg = rng(907);
        let u = random_gates(n, 12, &mut rg);
        let ident = vec![Pauli::I; n];
        assert_abs_diff_eq!(pauli_expectation(&u, &b, &ident).unwrap(), 1.0, epsilon = 1e-9);
        // Odd X/Y count vanishes by parity superselection.
        let mut x2 = vec![Pauli::I; n];
        x2[1] = Pauli::X;
        assert_eq!(pauli_expectation(&u, &b, &x2).unwrap(), 0.0);
        // Single qubit.
        let b1 = BasisState::new(vec![1]).unwrap();
        assert_abs_diff_eq!(
            pauli_expectation(&[], &b1, &[Pauli::Z]).unwrap(),
            -1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn pauli_expectation_rejects_unpairable_strings() {
        let n = 4;
        let b = BasisState::new(vec![0; n]).unwrap();
        // X₁ X₃ cannot be paired into adjacent matchgates.
        let p = [Pauli::X, Pauli::I, Pauli::X, Pauli::I];
        match pauli_expectation(&[], &b, &p) {
            Err(FgsError::UnsupportedParity(_)) => {}
            other => panic!("expected UnsupportedParity, got {other:?}"),
        }
    }

    /// Dense oracle: apply each single-qubit Pauli factor to `ψ`.
    fn apply_pauli_string(psi: &DVector<C64>, n: usize, paulis: &[Pauli]) -> DVector<C64> {
        let mut out = psi.clone();
        for (q0, p) in paulis.iter().enumerate() {
            if *p == Pauli::I {
                continue;
            }
            let m2 = pauli_matrix2(*p);
            let bit = 1usize << (n - 1 - q0);
            let mut nxt = DVector::from_element(out.len(), C64::new(0.0, 0.0));
            for idx in 0..out.len() {
                let col = usize::from(idx & bit != 0);
                for row in 0..2 {
                    let target = if row == 1 { idx | bit } else { idx & !bit };
                    nxt[target] += m2[(row, col)] * out[idx];
                }
            }
            out = nxt;
        }
        out
    }

    #[test]
    fn pauli_expectation_matches_oracle_n8() {
        let mut rg = rng(908);
        let n = 8;
        let mut pairable = 0usize;
        let mut vanishing = 0usize;
        let mut rejected = 0usize;
        for trial in 0..60 {
            let b = random_bits(n, &mut rg);
            let u = random_gates(n, 16, &mut rg);
            let paulis: Vec<Pauli> = if trial % 2 == 0 {
                // Deliberately pairable: adjacent X/Y pairs between I/Z.
                let mut p = Vec::with_capacity(n);
                while p.len() < n {
                    if p.len() + 1 < n && rg.random_range(0..3u8) == 0 {
                        for _ in 0..2 {
                            p.push(if rg.random_range(0..2u8) == 0 { Pauli::X } else { Pauli::Y });
                        }
                    } else {
                        p.push(if rg.random_range(0..2u8) == 0 { Pauli::I } else { Pauli::Z });
                    }
                }
                p
            } else {
                (0..n)
                    .map(|_| match rg.random_range(0..4u8) {
                        0 => Pauli::I,
                        1 => Pauli::X,
                        2 => Pauli::Y,
                        _ => Pauli::Z,
                    })
                    .collect()
            };
            let odd: Vec<usize> = (1..=n)
                .filter(|&q| matches!(paulis[q - 1], Pauli::X | Pauli::Y))
                .collect();
            let result = pauli_expectation(&u, &b, &paulis);
            if odd.len() % 2 == 1 {
                assert_eq!(result.unwrap(), 0.0);
                // The oracle agrees that parity kills it.
                let psi = statevector(&u, &b).unwrap();
                let ev = psi.dotc(&apply_pauli_string(&psi, n, &paulis));
                assert!(ev.norm() < 1e-12);
                vanishing += 1;
            } else if odd.chunks(2).any(|pr| pr[1] != pr[0] + 1) {
                match result {
                    Err(FgsError::UnsupportedParity(_)) => rejected += 1,
                    other => panic!("expected UnsupportedParity, got {other:?}"),
                }
            } else {
                let psi = statevector(&u, &b).unwrap();
                let ev = psi.dotc(&apply_pauli_string(&psi, n, &paulis));
                let got = result.unwrap();
                assert_abs_diff_eq!(got, ev.re, epsilon = 1e-9);
                assert!(ev.im.abs() < 1e-12);
                pairable += 1;
            }
        }
        // The sweep must exercise all three branches.
        assert!(pairable >= 5 && vanishing >= 5 && rejected >= 5);
    }

    #[test]
    fn pauli_and_wick_routes_agree_on_majorana_monomials() {
        let mut rg = rng(909);
        let n = 6;
        let b = random_bits(n, &mut rg);
        let u = random_gates(n, 20, &mut rg);
        let gamma = apply_circuit_cm(&cm_of_basis_state(&b), &u);
        for q in 1..=n {
            // Z_q = −i c_{2q−1} c_{2q}: ⟨Z_q⟩ = −Pf(Γ restricted).
            let mut p = vec![Pauli::I; n];
            p[q - 1] = Pauli::Z;
            let via_pauli = pauli_expectation(&u, &b, &p).unwrap();
            let via_wick = -wick_expectation(&gamma, &[2 * q - 2, 2 * q - 1]).unwrap();
            assert_abs_diff_eq!(via_pauli, via_wick, epsilon = 1e-9);
        }
        for q in 1..n {
            // X_q X_{q+1} = −i c_{2q} c_{2q+1} (0-based 2q−1, 2q).
            let mut p = vec![Pauli::I; n];
            p[q - 1] = Pauli::X;
            p[q] = Pauli::X;
            let via_pauli = pauli_expectation(&u, &b, &p).unwrap();
            let via_wick = -wick_expectation(&gamma, &[2 * q - 1, 2 * q]).unwrap();
            assert_abs_diff_eq!(via_pauli, via_wick, epsilon = 1e-9);

            // Y_q Y_{q+1} = +i c_{2q−1} c_{2q+2} (0-based 2q−2, 2q+1).
            let mut p = vec![Pauli::I; n];
            p[q - 1] = Pauli::Y;
            p[q] = Pauli::Y;
            let via_pauli = pauli_expectation(&u, &b, &p).unwrap();
            let via_wick = wick_expectation(&gamma, &[2 * q - 2, 2 * q + 1]).unwrap();
            assert_abs_diff_eq!(via_pauli, via_wick, epsilon = 1e-9);

            // Z_q Z_{q+1} is the four-Majorana monomial (−i)²·c c c c:
            // ⟨Z_q Z_{q+1}⟩ = +Pf of the 4×4 restriction.
            let mut p = vec![Pauli::I; n];
            p[q - 1] = Pauli::Z;
            p[q] = Pauli::Z;
            let via_pauli = pauli_expectation(&u, &b, &p).unwrap();
            let via_wick = wick_expectation(
                &gamma,
                &[2 * q - 2, 2 * q - 1, 2 * q, 2 * q + 1],
            )
            .unwrap();
            assert_abs_diff_eq!(via_pauli, via_wick, epsilon = 1e-9);
        }
    }

    #[test]
    fn schmidt_lsr_matches_cm_rank_formula() {
        let mut rg = rng(910);
        let n = 8;
        let b = random_bits(n, &mut rg);
        let gates = random_gates(n, 24, &mut rg);
        let psi = statevector(&gates, &b).unwrap();
        let gamma = apply_circuit_cm(&cm_of_basis_state(&b), &gates);
        let lsrs = schmidt_ranks(&psi, n).unwrap();
        for cut in 1..n {
            assert_eq!(
                lsrs[cut - 1],
                crate::linalg::lsr_from_cm(&gamma, cut).unwrap(),
                "cut {cut}"
            );
        }
    }

    #[test]
    fn state_overlap_includes_both_global_phases() {
        let mut rg = rng(911);
        let n = 5;
        let b = random_bits(n, &mut rg);
        let gates = random_gates(n, 15, &mut rg);
        let c1 = to_rsf(&gates, &b);
        let psi1 = c1.statevector().unwrap();
        let gates2 = random_gates(n, 15, &mut rg);
        let c2 = to_rsf(&gates2, &b);
        let psi2 = c2.statevector().unwrap();
        let got = state_overlap(&c1, &c2).unwrap();
        let oracle = psi2.dotc(&psi1);
        assert!((got - oracle).norm() < 1e-9, "{got} vs {oracle}");
    }
}
