//! Circuit synthesis: from a pure covariance matrix to a matchgate circuit.
//!
//! Four routes are provided.
//!
//! * [`sed`] + [`merge_diagonals`] — staircase elimination decomposition: a
//!   Givens sweep drives the CM to `⊕ ±J₂` column by column; the eliminating
//!   plane rotations are regrouped into matchgates and neighbouring per-qubit
//!   staircases are merged pairwise into a gate-count-optimal residual
//!   staircase form (RSF).
//! * [`sed_two_column`] — eliminates two qubit columns per round with 4×4
//!   rotations and emits a directly RSF-valid circuit without a merge step.
//! * [`esed`] — entanglement-aware elimination whose gate count is bounded by
//!   the sum of local Schmidt ranks `K = Σ_cut LSR` of the state.
//! * [`euler_triangle`] / [`brickwall`] — compile an explicit `SO(2n)`
//!   rotation into elementary plane rotations (triangular schedule) or into a
//!   brickwall matchgate circuit of depth at most `n`.
//!
//! Conventions: public qubit and RSF indices are 1-based (a gate at qubit `p`
//! acts on the pair `(p, p+1)`); Majorana/matrix indices and block-pair
//! offsets in the code are 0-based. Plane `s` of the 2n-dimensional Majorana
//! space is covered by the 0-based pair `p` whenever `2p ≤ s ≤ 2p + 2`, with
//! local plane `w = s − 2p` mapping to the elementary generators `Z⊗1` (w=0),
//! `X⊗X` (w=1) and `1⊗Z` (w=2).

use nalgebra::{DMatrix, Matrix2, Matrix4, Vector4};

use crate::circuit::{validate_rsf, BasisState, Diagonal, RsfCircuit};
use crate::error::{FgsError, FgsResult};
use crate::linalg::{
    cm_sweep, conjugate_block4, elim_last_two, embed4, givens_qr_decompose, lsr_from_cm,
    purity_defect, williamson_form, CovarianceMatrix, GivensRotation,
};
use crate::matchgate::{elementary_gate, Matchgate, PlacedGate};
use crate::{C64, TOL_BAND, TOL_PURE, TOL_RANK, TOL_ZERO};

/// Entries below this threshold are treated as already eliminated when
/// deciding whether an elimination rotation is needed at all. Kept a little
/// above `TOL_ZERO` so that `elim_last_two` never sees an all-zero primary.
const SKIP_TOL: f64 = 1e-11;

// ---------------------------------------------------------------------------
// SED: one-column Givens sweep
// ---------------------------------------------------------------------------

/// Result of a staircase-elimination sweep over a pure covariance matrix.
#[derive(Clone, Debug)]
pub struct SedOutput {
    /// Number of qubits.
    pub n: usize,
    /// Eliminating plane rotations in application order: conjugating the
    /// input CM by `rotations[0]`, then `rotations[1]`, … yields
    /// `⊕ (−1)^{b_q} J₂`.
    pub rotations: Vec<GivensRotation>,
    /// Basis state the sweep reaches (`+J₂` block ↦ bit 0).
    pub bits: BasisState,
    /// Per-qubit bookkeeping for columns `0 ‥ n−2` (the last qubit needs no
    /// elimination of its own).
    pub columns: Vec<SedColumn>,
    /// Largest magnitude the sweep relied on vanishing implicitly instead of
    /// eliminating it explicitly; tiny for a genuinely pure input.
    pub implicit_defect: f64,
}

/// One qubit column of a [`SedOutput`].
#[derive(Clone, Debug)]
pub struct SedColumn {
    /// Deepest (0-based) row of the column carrying weight above
    /// `τ_band · max|column|` before elimination; `2q + 1` when the qubit was
    /// already disentangled.
    pub deepest_row: usize,
    /// Index range of this qubit's rotations inside [`SedOutput::rotations`].
    pub rotations: std::ops::Range<usize>,
}

/// Staircase elimination decomposition of a pure covariance matrix.
///
/// Sweeps the columns left to right; within column `2q` the rows are
/// eliminated bottom-up by plane rotations `E_{r−1}(φ)`, never touching rows
/// beyond the column's deepest nonzero row `r_q`. Returns the eliminating
/// rotations together with the basis state that remains.
pub fn sed(gamma: &CovarianceMatrix) -> FgsResult<SedOutput> {
    let sweep = cm_sweep(gamma.mat())?;
    let bits: Vec<u8> = sweep
        .signs
        .iter()
        .map(|&s| if s > 0.0 { 0u8 } else { 1u8 })
        .collect();
    Ok(SedOutput {
        n: gamma.n(),
        rotations: sweep.rotations,
        bits: BasisState::new(bits)?,
        columns: sweep
            .columns
            .into_iter()
            .map(|c| SedColumn { deepest_row: c.r_q, rotations: c.rotations })
            .collect(),
        implicit_defect: sweep.implicit_defect,
    })
}

/// Within-slot application sequence of the plane factors of a merged gate:
/// the upper block's word comes first (it is applied before the lower block
/// in the flattened sweep), then a lower Z factor routed up from the slot
/// below, then the lower block's own XX and (tucked) Z factors.
const SEQ_UPPER_XX: u8 = 0;
const SEQ_UPPER_Z: u8 = 1;
const SEQ_ROUTED_Z: u8 = 2;
const SEQ_LOWER_XX: u8 = 3;
const SEQ_TUCKED_Z: u8 = 4;

struct SlotFactor {
    seq: u8,
    /// Local plane within the slot's pair: 0 = `Z⊗1`, 1 = `X⊗X`, 2 = `1⊗Z`.
    w: usize,
    angle: f64,
}

/// Gate index (1-based) within a per-qubit block and whether the plane is the
/// gate's XX plane: block base qubit `q` owns planes `2q+1, 2q+2, …`, and its
/// gate `m` covers the XX plane `2q+2m−1` plus the Z plane `2q+2m`.
fn gate_index(base: usize, plane: usize) -> (usize, bool) {
    let off = plane - 2 * base;
    debug_assert!(off >= 1, "plane {plane} below block base {base}");
    if off % 2 == 1 {
        ((off + 1) / 2, true)
    } else {
        (off / 2, false)
    }
}

/// Builds one RSF diagonal at position `k` from per-slot plane factors
/// (slot `j` acts on the 0-based pair `k − 1 + j − 1`); interior slots with
/// no factors are filled with identity gates to keep the staircase
/// contiguous.
fn assemble_diagonal(k: usize, mut slots: Vec<Vec<SlotFactor>>) -> FgsResult<Diagonal> {
    debug_assert!(
        slots.last().is_some_and(|s| !s.is_empty()),
        "topmost slot of a merged diagonal must carry a factor"
    );
    let mut gates = Vec::with_capacity(slots.len());
    for factors in slots.iter_mut() {
        if factors.is_empty() {
            gates.push(Matchgate::identity());
            continue;
        }
        factors.sort_by_key(|f| f.seq);
        let mut u = Matrix4::<C64>::identity();
        for f in factors.iter() {
            u = elementary_gate(&GivensRotation { k: f.w, phi: f.angle }) * u;
        }
        gates.push(Matchgate::from_unitary(&u)?);
    }
    Ok(Diagonal { k, gates })
}

/// Merges the preparation staircases of neighbouring qubit blocks `q` (lower)
/// and `q + 1` (upper) into a single diagonal at RSF position `q + 1`
/// (1-based). Plane lists are in ascending plane order with angles already
/// negated for preparation.
fn merge_pair(
    q: usize,
    lower: &[(usize, f64)],
    upper: &[(usize, f64)],
) -> FgsResult<Diagonal> {
    let u = q + 1;
    let l_lower = lower.iter().map(|&(s, _)| gate_index(q, s).0).max().unwrap_or(0);
    let l_upper = upper.iter().map(|&(s, _)| gate_index(u, s).0).max().unwrap_or(0);
    let len = l_lower.max(l_upper + 1);

    let mut upper_present = vec![false; len + 2];
    for &(s, _) in upper {
        upper_present[gate_index(u, s).0] = true;
    }

    // Slot j (1-based) lives at the 0-based pair q + j − 1 and covers planes
    // {2q+2j−2, 2q+2j−1, 2q+2j}; the upper block's gate m lands in slot m+1,
    // the lower block's gate m in slot m. A lower Z plane 2q+2m commutes past
    // everything between its original position and slot m+1 when the upper
    // gate m exists there (it must then precede that gate's XX plane), and
    // stays tucked behind its own gate otherwise.
    let mut slots: Vec<Vec<SlotFactor>> = (0..len).map(|_| Vec::new()).collect();
    for &(s, angle) in upper {
        let (m, is_xx) = gate_index(u, s);
        slots[m].push(SlotFactor {
            seq: if is_xx { SEQ_UPPER_XX } else { SEQ_UPPER_Z },
            w: if is_xx { 1 } else { 2 },
            angle,
        });
    }
    for &(s, angle) in lower {
        let (m, is_xx) = gate_index(q, s);
        if is_xx {
            slots[m - 1].push(SlotFactor { seq: SEQ_LOWER_XX, w: 1, angle });
        } else if upper_present[m] {
            slots[m].push(SlotFactor { seq: SEQ_ROUTED_Z, w: 0, angle });
        } else {
            slots[m - 1].push(SlotFactor { seq: SEQ_TUCKED_Z, w: 2, angle });
        }
    }
    assemble_diagonal(q + 1, slots)
}

/// A single unmerged block becomes a diagonal of two-plane gates.
fn single_block(q: usize, planes: &[(usize, f64)]) -> FgsResult<Diagonal> {
    let len = planes.iter().map(|&(s, _)| gate_index(q, s).0).max().unwrap_or(0);
    let mut slots: Vec<Vec<SlotFactor>> = (0..len).map(|_| Vec::new()).collect();
    for &(s, angle) in planes {
        let (m, is_xx) = gate_index(q, s);
        slots[m - 1].push(SlotFactor {
            seq: if is_xx { SEQ_LOWER_XX } else { SEQ_TUCKED_Z },
            w: if is_xx { 1 } else { 2 },
            angle,
        });
    }
    assemble_diagonal(q + 1, slots)
}

/// Regroups a SED sweep into a residual staircase form circuit.
///
/// The preparation circuit is the reversed, angle-negated sweep; per-qubit
/// plane staircases are paired greedily bottom-up and each pair is merged
/// into one diagonal of length `max(l_q, l_{q+1} + 1)` (equivalently
/// `max{1 + l_first, l_second}` when counting from the first-applied block).
/// The result prepares the same state as the sweep word exactly, including
/// the global phase.
pub fn merge_diagonals(sed: &SedOutput) -> FgsResult<RsfCircuit> {
    let n = sed.n;
    // Preparation planes per qubit block, ascending plane order.
    let blocks: Vec<Vec<(usize, f64)>> = sed
        .columns
        .iter()
        .map(|col| {
            sed.rotations[col.rotations.clone()]
                .iter()
                .rev()
                .map(|g| (g.k, -g.phi))
                .collect()
        })
        .collect();

    let mut diagonals = Vec::new();
    let mut q = 0usize;
    while q < blocks.len() {
        if blocks[q].is_empty() {
            q += 1;
            continue;
        }
        if q + 1 < blocks.len() && !blocks[q + 1].is_empty() {
            diagonals.push(merge_pair(q, &blocks[q], &blocks[q + 1])?);
        } else {
            diagonals.push(single_block(q, &blocks[q])?);
        }
        q += 2;
    }

    let circuit = RsfCircuit {
        n,
        diagonals,
        input: sed.bits.clone(),
        global_phase: 0.0,
    };
    validate_rsf(&circuit).map_err(FgsError::InvalidRsf)?;
    Ok(circuit)
}

// ---------------------------------------------------------------------------
// Two-column SED
// ---------------------------------------------------------------------------

/// Picks the elimination rotation for a 4-row window of two columns, feeding
/// the larger column to `elim_last_two` first so the primary is never the
/// zero vector. The returned rotation zeroes the last two rows of both.
fn zero_last_two(x: &Vector4<f64>, y: &Vector4<f64>) -> FgsResult<Matrix4<f64>> {
    let r = if x.norm() >= y.norm() {
        elim_last_two(x, y)?.0
    } else {
        elim_last_two(y, x)?.0
    };
    Ok(r)
}

/// Two-column staircase elimination: synthesises a directly RSF-valid
/// circuit, two qubits per round.
///
/// Round `q` (odd 1-based positions) compresses the support of qubit `q`'s
/// Majorana columns bottom-up with 4×4 rotations acting on qubit pairs, then
/// rotates the leading 4×4 block to Williamson form, disentangling qubits
/// `q` and `q+1` at once; already-product qubits are skipped. The inverted,
/// reversed eliminations form one ascending staircase diagonal per round, so
/// the result is RSF-valid by construction. The prepared state matches the
/// input CM; the circuit's global phase is left at zero, so statevector
/// agreement is up to an overall phase.
pub fn sed_two_column(gamma: &CovarianceMatrix) -> FgsResult<RsfCircuit> {
    gamma.require_pure()?;
    let n = gamma.n();
    let dim = 2 * n;
    let mut g = gamma.mat().clone();
    let mut diagonals: Vec<Diagonal> = Vec::new();

    let mut q = 0usize; // 0-based round qubit
    while q < n {
        if 1.0 - g[(2 * q + 1, 2 * q)].abs() <= TOL_PURE {
            q += 1;
            continue;
        }
        if q + 1 >= n {
            return Err(FgsError::Validation(format!(
                "qubit {} is entangled but has no partner left (purity defect {:.3e})",
                q + 1,
                purity_defect(&g)
            )));
        }
        let (c0, c1) = (2 * q, 2 * q + 1);
        let mut colmax = 0.0_f64;
        for r in 0..dim {
            colmax = colmax.max(g[(r, c0)].abs()).max(g[(r, c1)].abs());
        }
        let tol = TOL_BAND * colmax;
        let mut deepest = 2 * q + 1;
        for r in (0..dim).rev() {
            if g[(r, c0)].abs() > tol || g[(r, c1)].abs() > tol {
                deepest = deepest.max(r);
                break;
            }
        }
        // Smallest 1-based qubit index k with no column weight below row 2k.
        let k_start = deepest / 2 + 1;

        // Preparation staircase for this round: slot at 0-based pair q + j.
        let mut prep: Vec<Matchgate> = vec![Matchgate::identity(); k_start - q - 1];

        // Eliminate two rows per step, bottom-up: step k handles rows
        // 2k−4 ‥ 2k−1 (0-based), i.e. the Majoranas of qubits (k−1, k).
        let mut k = k_start;
        while k >= q + 3 {
            let row0 = 2 * k - 4;
            let x = Vector4::new(
                g[(row0, c0)],
                g[(row0 + 1, c0)],
                g[(row0 + 2, c0)],
                g[(row0 + 3, c0)],
            );
            let y = Vector4::new(
                g[(row0, c1)],
                g[(row0 + 1, c1)],
                g[(row0 + 2, c1)],
                g[(row0 + 3, c1)],
            );
            if x.norm().max(y.norm()) > SKIP_TOL {
                let r = zero_last_two(&x, &y)?;
                conjugate_block4(&mut g, row0, &r);
                prep[k - 2 - q] = Matchgate::from_rotation(&r.transpose())?;
            }
            k -= 1;
        }

        // Williamson rotation on the leading 4×4 block finishes both qubits.
        let block = g.view((2 * q, 2 * q), (4, 4)).clone_owned();
        let (rw, _) = williamson_form(&block)?;
        let rw4 = Matrix4::from_fn(|i, j| rw[(i, j)]);
        conjugate_block4(&mut g, 2 * q, &rw4);
        prep[0] = Matchgate::from_rotation(&rw4.transpose())?;

        diagonals.push(Diagonal { k: q + 1, gates: prep });
        q += 2;
    }

    // Read the basis state off the diagonal blocks and confirm the matrix
    // really reached basis form.
    let mut bits = Vec::with_capacity(n);
    let mut defect = 0.0_f64;
    for i in 0..n {
        let s = g[(2 * i + 1, 2 * i)];
        bits.push(if s > 0.0 { 0u8 } else { 1u8 });
        defect = defect.max((s.abs() - 1.0).abs());
    }
    for r in 0..dim {
        for c in 0..dim {
            if r / 2 != c / 2 {
                defect = defect.max(g[(r, c)].abs());
            }
        }
    }
    if defect > 1e-6 {
        return Err(FgsError::Validation(format!(
            "two-column sweep left residue {defect:.3e} off basis form"
        )));
    }

    let circuit = RsfCircuit {
        n,
        diagonals,
        input: BasisState::new(bits)?,
        global_phase: 0.0,
    };
    validate_rsf(&circuit).map_err(FgsError::InvalidRsf)?;
    Ok(circuit)
}

// ---------------------------------------------------------------------------
// eSED
// ---------------------------------------------------------------------------

/// Sum of local Schmidt ranks `K = Σ_{cut} LSR_cut` over the `n − 1`
/// contiguous cuts of a pure state; the gate-count budget of [`esed`].
pub fn lsr_sum(gamma: &CovarianceMatrix) -> FgsResult<usize> {
    let mut k = 0usize;
    for cut in 1..gamma.n() {
        k += lsr_from_cm(gamma, cut)?;
    }
    Ok(k)
}

/// Entanglement-aware staircase elimination.
///
/// Returns disentangling gates in application order: applying them to the
/// state (equivalently, conjugating the CM by each gate's rotation in turn)
/// yields a computational basis state. The gate count is at most
/// `K = Σ_cut LSR_cut`, and after every gate the local Schmidt rank at the
/// gate's cut satisfies `LSR_c = max(LSR_{c−1}, LSR_{c+1}) − 1` (with
/// `LSR_0 = LSR_n = 0` and the convention that the right-hand side never
/// drops below zero).
pub fn esed(gamma: &CovarianceMatrix) -> FgsResult<Vec<PlacedGate>> {
    gamma.require_pure()?;
    let mut g = gamma.mat().clone();
    let mut gates = Vec::new();
    esed_outer(&mut g, 0, gamma.n(), &mut gates)?;
    Ok(gates)
}

/// Pushes the Williamson disentangler of the 4×4 block at qubit pair `p`
/// (0-based) unless it is the identity.
fn push_williamson(
    g: &mut DMatrix<f64>,
    p: usize,
    out: &mut Vec<PlacedGate>,
) -> FgsResult<()> {
    let block = g.view((2 * p, 2 * p), (4, 4)).clone_owned();
    let (rw, _) = williamson_form(&block)?;
    let rw4 = Matrix4::from_fn(|i, j| rw[(i, j)]);
    conjugate_block4(g, 2 * p, &rw4);
    if (rw4 - Matrix4::identity()).amax() > TOL_ZERO {
        out.push(PlacedGate::new(Matchgate::from_rotation(&rw4)?, p + 1));
    }
    Ok(())
}

/// Recursive outer step on the `nb`-qubit block starting at qubit `off`
/// (0-based) of the full matrix: find the smallest pure leading sub-block,
/// disentangle its first two qubits, and recurse on the two factors.
fn esed_outer(
    g: &mut DMatrix<f64>,
    off: usize,
    nb: usize,
    out: &mut Vec<PlacedGate>,
) -> FgsResult<()> {
    if nb <= 1 {
        return Ok(());
    }
    let mut k = nb;
    for kp in 1..=nb {
        let block = g.view((2 * off, 2 * off), (2 * kp, 2 * kp)).clone_owned();
        if purity_defect(&block) <= TOL_PURE {
            k = kp;
            break;
        }
    }
    if k == 1 {
        // First qubit already a product factor: nothing to emit.
        return esed_outer(g, off + 1, nb - 1, out);
    }
    esed_inner(g, off, k, out)?;
    esed_outer(g, off + 2, k - 2, out)?;
    esed_outer(g, off + k, nb - k, out)
}

/// Inner elimination on a pure `nb`-qubit block at qubit offset `off`:
/// compresses the support of the block's first two columns upward step by
/// step and finishes with a Williamson rotation on the leading pair,
/// disentangling the block's first two qubits.
fn esed_inner(
    g: &mut DMatrix<f64>,
    off: usize,
    nb: usize,
    out: &mut Vec<PlacedGate>,
) -> FgsResult<()> {
    if nb == 1 {
        return Ok(());
    }
    if nb > 2 {
        for i in 1..=nb - 2 {
            // Window rows: the last 2i+2 rows of the block.
            let row0 = 2 * off + 2 * nb - 2 * i - 2;
            let height = 2 * i + 2;
            let col0 = 2 * off;

            // k_i: smallest leading column count with two independent
            // columns inside the window.
            let mut k_i = 0usize;
            for kp in 1..=2 * nb {
                let block = g.view((row0, col0), (height, kp)).clone_owned();
                let sv = block.svd(false, false).singular_values;
                if sv.len() >= 2 && sv[1] > TOL_RANK {
                    k_i = kp;
                    break;
                }
            }
            if k_i == 0 {
                return Err(FgsError::Validation(format!(
                    "esed inner step {i}: no two independent columns in the window"
                )));
            }

            // Pick the two columns by their leading-four-row truncations:
            // the largest truncation and the one with the largest
            // Gram–Schmidt residual against it.
            let trunc = |c: usize| {
                Vector4::new(
                    g[(row0, col0 + c)],
                    g[(row0 + 1, col0 + c)],
                    g[(row0 + 2, col0 + c)],
                    g[(row0 + 3, col0 + c)],
                )
            };
            let mut c1 = 0usize;
            let mut best = -1.0_f64;
            for c in 0..k_i {
                let nrm = trunc(c).norm();
                if nrm > best {
                    best = nrm;
                    c1 = c;
                }
            }
            let alpha = trunc(c1);
            if alpha.norm() < 1e-10 {
                return Err(FgsError::Validation(format!(
                    "esed inner step {i}: window rank is not exposed in the leading rows"
                )));
            }
            let ahat = alpha / alpha.norm();
            let mut c2 = usize::MAX;
            let mut best_res = -1.0_f64;
            for c in 0..k_i {
                if c == c1 {
                    continue;
                }
                let t = trunc(c);
                let res = (t - ahat * ahat.dot(&t)).norm();
                if res > best_res {
                    best_res = res;
                    c2 = c;
                }
            }
            if c2 == usize::MAX || best_res < 1e-10 {
                return Err(FgsError::Validation(format!(
                    "esed inner step {i}: truncated columns are numerically dependent"
                )));
            }
            let beta = trunc(c2);

            let (r, _) = elim_last_two(&alpha, &beta)?;
            let p = off + nb - i - 1; // 0-based pair of this step's gate
            conjugate_block4(g, 2 * p, &r);
            if (r - Matrix4::identity()).amax() > TOL_ZERO {
                out.push(PlacedGate::new(Matchgate::from_rotation(&r)?, p + 1));
            }
        }
    }
    push_williamson(g, off, out)
}

// ---------------------------------------------------------------------------
// Euler triangle
// ---------------------------------------------------------------------------

/// Euler-angle (triangular) decomposition of a special orthogonal `R` of
/// even dimension `2m` into at most `m(2m−1)` plane rotations whose product
/// `E(out[0])·E(out[1])·…` equals `R`.
pub fn euler_triangle(r: &DMatrix<f64>) -> FgsResult<Vec<GivensRotation>> {
    if r.nrows() % 2 != 0 {
        return Err(FgsError::OddDimension(r.nrows()));
    }
    let rots = givens_qr_decompose(r)?;
    debug_assert!(rots.len() <= r.nrows() * (r.nrows() - 1) / 2);
    Ok(rots)
}

// ---------------------------------------------------------------------------
// Brickwall compilation
// ---------------------------------------------------------------------------

/// A matchgate circuit organised into layers of gates on disjoint pairs.
#[derive(Clone, Debug)]
pub struct BrickwallCircuit {
    /// Number of qubits.
    pub n: usize,
    /// Layers in application order; within a layer all pairs are disjoint.
    pub layers: Vec<Vec<PlacedGate>>,
    /// Max-entry deviation of the realised joint rotation from the request.
    pub defect: f64,
}

impl BrickwallCircuit {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// All gates in application order.
    pub fn gates(&self) -> Vec<PlacedGate> {
        self.layers.iter().flatten().cloned().collect()
    }

    /// The joint `SO(2n)` rotation realised by the circuit.
    pub fn rotation(&self) -> DMatrix<f64> {
        joint_rotation(self.n, &self.gates())
    }
}

/// Product of the embedded Majorana rotations of `gates` (application
/// order): the joint rotation of the circuit acting on `2n` Majoranas.
pub fn joint_rotation(n: usize, gates: &[PlacedGate]) -> DMatrix<f64> {
    let mut r = DMatrix::<f64>::identity(2 * n, 2 * n);
    for g in gates {
        r = embed4(2 * n, 2 * (g.qubit - 1), g.gate.rotation()) * r;
    }
    r
}

/// Greedy as-soon-as-possible layering of a gate sequence: each gate lands
/// in the earliest layer after every previously scheduled gate that shares a
/// qubit with it. Gates within a layer act on disjoint pairs.
pub fn asap_layers(n: usize, gates: &[PlacedGate]) -> Vec<Vec<PlacedGate>> {
    let pairs = n.saturating_sub(1);
    let mut last = vec![0usize; pairs + 2]; // 1-based pads at both ends
    let mut layers: Vec<Vec<PlacedGate>> = Vec::new();
    for g in gates {
        let p = g.qubit;
        let t = last[p - 1].max(last[p]).max(last[p + 1]);
        if t == layers.len() {
            layers.push(Vec::new());
        }
        layers[t].push(g.clone());
        last[p] = t + 1;
    }
    layers
}

/// Swaps the two halves of a 4-window: the permutation rotation
/// `(0 2)(1 3)`, determinant `+1`.
fn swap_halves() -> Matrix4<f64> {
    Matrix4::new(
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        1.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0,
    )
}

/// In-place `W ← E_pos(K) · W` on the four rows starting at `row0`.
fn left_mult_block(w: &mut DMatrix<f64>, row0: usize, k: &Matrix4<f64>) {
    for c in 0..w.ncols() {
        let v = Vector4::new(w[(row0, c)], w[(row0 + 1, c)], w[(row0 + 2, c)], w[(row0 + 3, c)]);
        let nv = k * v;
        for t in 0..4 {
            w[(row0 + t, c)] = nv[t];
        }
    }
}

/// In-place `W ← W · E_pos(K)ᵀ` on the four columns starting at `col0`.
fn right_mult_block_t(w: &mut DMatrix<f64>, col0: usize, k: &Matrix4<f64>) {
    for r in 0..w.nrows() {
        let v = Vector4::new(w[(r, col0)], w[(r, col0 + 1)], w[(r, col0 + 2)], w[(r, col0 + 3)]);
        let nv = k * v;
        for t in 0..4 {
            w[(r, col0 + t)] = nv[t];
        }
    }
}

fn block_diag2(a: &Matrix2<f64>, b: &Matrix2<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(a);
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(b);
    m
}

/// The Majorana sign flip `H_p = diag(1,−1,1,−1)` on the window of pair `p`
/// (flips Majoranas `2p+1` and `2p+3`).
fn h4() -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(1.0, -1.0, 1.0, -1.0))
}

/// Restriction of the embedded `H_p` sign pattern to the window of the
/// overlapping pair `gp` (`|gp − p| = 1`).
fn h_window_restriction(gp: usize, p: usize) -> Matrix4<f64> {
    if p == gp + 1 {
        Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, -1.0))
    } else {
        Matrix4::from_diagonal(&Vector4::new(1.0, -1.0, 1.0, 1.0))
    }
}

enum Side {
    Left,
    Right,
}

/// Compiles a special orthogonal `R ∈ SO(2n)` into a brickwall matchgate
/// circuit of depth at most `n` whose joint Majorana rotation equals `R`.
///
/// The construction is a two-sided block-Givens elimination at 2×2-block
/// granularity: anti-diagonal rounds of block eliminations walk from the
/// lower-left corner, odd rounds acting on block columns from the right and
/// even rounds on block rows from the left, leaving an orthogonal 2×2 block
/// diagonal `D`. The right factors (in elimination order), then the left
/// factors (reversed, transposed, conjugated by `D`'s window blocks) form
/// the gate sequence; per-qubit reflections of `D` (always an even number)
/// are paired into telescoping sign-flip chains and the residual per-qubit
/// rotations are absorbed into the last gate touching each qubit. Greedy
/// ASAP scheduling then yields the layers.
pub fn brickwall(r: &DMatrix<f64>) -> FgsResult<BrickwallCircuit> {
    let dim = r.nrows();
    if r.ncols() != dim {
        return Err(FgsError::NotOrthogonal(format!(
            "expected a square matrix, got {}x{}",
            dim,
            r.ncols()
        )));
    }
    if dim % 2 != 0 {
        return Err(FgsError::OddDimension(dim));
    }
    let ortho = (r * r.transpose() - DMatrix::<f64>::identity(dim, dim)).amax();
    if ortho > 1e-8 {
        return Err(FgsError::NotOrthogonal(format!(
            "max |RRᵀ − 1| = {ortho:.3e}"
        )));
    }
    let n = dim / 2;
    if n == 0 {
        return Ok(BrickwallCircuit { n, layers: Vec::new(), defect: 0.0 });
    }
    if r.determinant() < 0.0 {
        return Err(FgsError::ReflectionRequired);
    }
    if n == 1 {
        let defect = (r - DMatrix::<f64>::identity(dim, dim)).amax();
        if defect <= 1e-8 {
            return Ok(BrickwallCircuit { n, layers: Vec::new(), defect });
        }
        return Err(FgsError::Validation(
            "a nontrivial SO(2) rotation on a single qubit has no two-qubit pair to act on"
                .into(),
        ));
    }

    // Two-sided block elimination. Round k zeroes the k-th anti-diagonal of
    // 2×2 blocks {(n−k+j, j) : j = 0‥k−1} from the lower-left corner; odd
    // rounds use column operations processed from the bottom-right member,
    // even rounds row operations from the top-left member, which keeps all
    // previously zeroed blocks zero.
    let mut w = r.clone_owned();
    let mut ops: Vec<(Side, usize, Matrix4<f64>)> = Vec::new();
    for k in 1..n {
        if k % 2 == 1 {
            for j in (0..k).rev() {
                let i = n - k + j;
                let x = Vector4::new(
                    w[(2 * i, 2 * j)],
                    w[(2 * i, 2 * j + 1)],
                    w[(2 * i, 2 * j + 2)],
                    w[(2 * i, 2 * j + 3)],
                );
                let y = Vector4::new(
                    w[(2 * i + 1, 2 * j)],
                    w[(2 * i + 1, 2 * j + 1)],
                    w[(2 * i + 1, 2 * j + 2)],
                    w[(2 * i + 1, 2 * j + 3)],
                );
                let target = x[0].abs().max(x[1].abs()).max(y[0].abs()).max(y[1].abs());
                if target <= SKIP_TOL {
                    continue;
                }
                let kk = swap_halves() * zero_last_two(&x, &y)?;
                right_mult_block_t(&mut w, 2 * j, &kk);
                ops.push((Side::Right, j, kk));
            }
        } else {
            for j in 0..k {
                let i = n - k + j;
                let row0 = 2 * i - 2;
                let t0 = Vector4::new(
                    w[(row0, 2 * j)],
                    w[(row0 + 1, 2 * j)],
                    w[(row0 + 2, 2 * j)],
                    w[(row0 + 3, 2 * j)],
                );
                let t1 = Vector4::new(
                    w[(row0, 2 * j + 1)],
                    w[(row0 + 1, 2 * j + 1)],
                    w[(row0 + 2, 2 * j + 1)],
                    w[(row0 + 3, 2 * j + 1)],
                );
                let target = t0[2].abs().max(t0[3].abs()).max(t1[2].abs()).max(t1[3].abs());
                if target <= SKIP_TOL {
                    continue;
                }
                let kk = zero_last_two(&t0, &t1)?;
                left_mult_block(&mut w, row0, &kk);
                ops.push((Side::Left, i - 1, kk));
            }
        }
    }

    // The eliminated W must now be an orthogonal block diagonal.
    let mut residue = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                residue = residue
                    .max(w[(2 * i, 2 * j)].abs())
                    .max(w[(2 * i, 2 * j + 1)].abs())
                    .max(w[(2 * i + 1, 2 * j)].abs())
                    .max(w[(2 * i + 1, 2 * j + 1)].abs());
            }
        }
    }
    if residue > 1e-6 {
        return Err(FgsError::Validation(format!(
            "block elimination left off-diagonal residue {residue:.3e}"
        )));
    }
    let d_blocks: Vec<Matrix2<f64>> =
        (0..n).map(|q| w.fixed_view::<2, 2>(2 * q, 2 * q).into_owned()).collect();

    // R = (lefts reversed, transposed)ᵀ-sandwich: gate order is the right
    // rotations in elimination order, then the left rotations reversed and
    // transposed; the diagonal D commutes leftward through the left gates by
    // conjugating each with its window restriction of D.
    let mut glist: Vec<(usize, Matrix4<f64>)> = Vec::new();
    for (side, p, kk) in &ops {
        if matches!(side, Side::Right) {
            glist.push((*p, *kk));
        }
    }
    for (side, p, kk) in ops.iter().rev() {
        if matches!(side, Side::Left) {
            let m = block_diag2(&d_blocks[*p], &d_blocks[*p + 1]);
            glist.push((*p, m.transpose() * kk.transpose() * m));
        }
    }

    // Split D into per-qubit reflections (even count, paired into
    // telescoping H-chains) and per-qubit rotations.
    let mut rot_blocks = d_blocks.clone();
    let mut reflected = Vec::new();
    for q in 0..n {
        let det = rot_blocks[q][(0, 0)] * rot_blocks[q][(1, 1)]
            - rot_blocks[q][(0, 1)] * rot_blocks[q][(1, 0)];
        if det < 0.0 {
            reflected.push(q);
            // Factor B_q = B'_q · diag(1,−1): the flip sits between the
            // rotation part and the gate word, matching the order in which
            // the two are folded in below.
            let col = -rot_blocks[q].column(1);
            rot_blocks[q].set_column(1, &col);
        }
    }
    if reflected.len() % 2 != 0 {
        return Err(FgsError::Validation(format!(
            "odd number of reflected qubit blocks ({}) despite det R = +1",
            reflected.len()
        )));
    }
    for pair in reflected.chunks(2) {
        for p in pair[0]..pair[1] {
            // Walk H_p from the end of the circuit toward the start:
            // disjoint gates commute, one-qubit-overlap gates are
            // sign-conjugated, and a gate on the same pair absorbs it.
            let mut absorbed = false;
            for idx in (0..glist.len()).rev() {
                let gp = glist[idx].0;
                if gp == p {
                    glist[idx].1 = h4() * glist[idx].1;
                    absorbed = true;
                    break;
                }
                if gp + 1 == p || p + 1 == gp {
                    let s = h_window_restriction(gp, p);
                    glist[idx].1 = s * glist[idx].1 * s;
                }
            }
            if !absorbed {
                glist.insert(0, (p, h4()));
            }
        }
    }

    // Residual per-qubit rotations merge into the last gate touching the
    // qubit; qubits no gate touches get a fresh gate appended at the end.
    for q in 0..n {
        let b = rot_blocks[q];
        if (b - Matrix2::identity()).amax() <= TOL_ZERO {
            continue;
        }
        let mut merged = false;
        for idx in (0..glist.len()).rev() {
            let gp = glist[idx].0;
            if gp == q {
                glist[idx].1 = block_diag2(&b, &Matrix2::identity()) * glist[idx].1;
                merged = true;
                break;
            }
            if gp + 1 == q {
                glist[idx].1 = block_diag2(&Matrix2::identity(), &b) * glist[idx].1;
                merged = true;
                break;
            }
        }
        if !merged {
            if q + 1 < n {
                glist.push((q, block_diag2(&b, &Matrix2::identity())));
            } else {
                glist.push((q - 1, block_diag2(&Matrix2::identity(), &b)));
            }
        }
    }

    // Lift to matchgates (dropping identities) and schedule.
    let mut gates = Vec::with_capacity(glist.len());
    for (p, rot) in &glist {
        if (rot - Matrix4::identity()).amax() <= TOL_ZERO {
            continue;
        }
        gates.push(PlacedGate::new(Matchgate::from_rotation(rot)?, p + 1));
    }
    let layers = asap_layers(n, &gates);
    if layers.len() > n {
        return Err(FgsError::Validation(format!(
            "brickwall scheduling produced depth {} > n = {n}",
            layers.len()
        )));
    }
    let flat: Vec<PlacedGate> = layers.iter().flatten().cloned().collect();
    let defect = (joint_rotation(n, &flat) - r).amax();
    if defect > 1e-6 {
        return Err(FgsError::Validation(format!(
            "brickwall compilation defect {defect:.3e}"
        )));
    }
    Ok(BrickwallCircuit { n, layers, defect })
}
