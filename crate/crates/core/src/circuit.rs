//! Right standard form (RSF) circuits: layout validation, layout counting,
//! and the absorption algorithm that rewrites any matchgate circuit acting
//! on a computational basis state into RSF.
//!
//! An RSF circuit is a product of diagonals `D_1 D_2 ⋯ D_m` (the *last*
//! diagonal is applied first) with positions `1 ≤ k_i ≤ k_{i+1} − 2 ≤ n−1`
//! and lengths `1 ≤ l_i ≤ n − k_i`; gate `j` (1-based) of diagonal `i` acts
//! on the qubit pair `(k_i + j − 1, k_i + j)`, so each diagonal is an
//! ascending staircase applied bottom-up.
//!
//! # Absorption
//!
//! [`absorb`] pushes one new gate `A` into an RSF circuit by repeatedly
//! matching the four rewrite patterns
//!
//! ```text
//! (A⊗1)(1⊗U)(U'⊗1) → (1⊗V)(V'⊗1)(1⊗A)   GYB
//! (A⊗1)(1⊗U)|b⟩    → (1⊗V)(A⊗1)|b⟩      LR
//! (U⊗1)(1⊗A)|b⟩    → (1⊗A)(V⊗1)|b⟩      LR
//! (U⊗1)(1⊗U')(A⊗1) → (1⊗A)(V⊗1)(1⊗V')   GYB
//! ```
//!
//! until none applies, then appends `A` or multiplies it into an adjacent
//! same-pair gate. The working representation is the flat gate list in
//! application order; "gates in the vicinity of `A`" is realized by
//! commutation-aware walks (gates on disjoint qubit pairs are transparent).
//! Exotic boundary placements that match no pattern simply fall through to
//! the append step. The final list is reordered by commuting swaps into
//! canonical RSF order and split back into diagonals; a failure to reach a
//! valid RSF layout is a bug and is asserted.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{FgsError, FgsResult};
use crate::matchgate::{lr_move, gyb_move, GateDto, Matchgate, MoveDirection, PlacedGate};
use crate::simulate::{apply_gate2, basis_vector, check_oracle_size};
use crate::C64;

/// Tolerance under which a gate counts as a global-phase multiple of the
/// identity and is pruned from the circuit.
const PRUNE_TOL: f64 = 1e-12;

/// A computational basis state `|b_1 … b_n⟩`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisState {
    pub bits: Vec<u8>,
}

impl BasisState {
    pub fn new(bits: Vec<u8>) -> FgsResult<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(FgsError::Validation("basis state bits must be 0 or 1".into()));
        }
        Ok(Self { bits })
    }

    pub fn n(&self) -> usize {
        self.bits.len()
    }
}

/// One diagonal of an RSF circuit: gate `j` (0-based) acts on the qubit
/// pair `(k + j, k + j + 1)`.
#[derive(Debug, Clone)]
pub struct Diagonal {
    pub k: usize,
    pub gates: Vec<Matchgate>,
}

/// A matchgate circuit in right standard form acting on a basis state,
/// with an exact global phase.
#[derive(Debug, Clone)]
pub struct RsfCircuit {
    pub n: usize,
    pub diagonals: Vec<Diagonal>,
    pub input: BasisState,
    pub global_phase: f64,
}

impl RsfCircuit {
    /// The empty (identity) RSF circuit on the given input state.
    pub fn empty(input: BasisState) -> Self {
        Self { n: input.n(), diagonals: Vec::new(), input, global_phase: 0.0 }
    }

    pub fn gate_count(&self) -> usize {
        self.diagonals.iter().map(|d| d.gates.len()).sum()
    }

    /// All gates in application order (last diagonal first, each diagonal
    /// bottom-up).
    pub fn placed_gates(&self) -> Vec<PlacedGate> {
        let mut out = Vec::with_capacity(self.gate_count());
        for d in self.diagonals.iter().rev() {
            for (j, g) in d.gates.iter().enumerate() {
                out.push(PlacedGate::new(g.clone(), d.k + j));
            }
        }
        out
    }

    /// The exact state (including global phase) prepared by the circuit;
    /// restricted to oracle sizes.
    pub fn statevector(&self) -> FgsResult<DVector<C64>> {
        check_oracle_size(self.n)?;
        let mut psi = basis_vector(&self.input.bits)?;
        for pg in self.placed_gates() {
            apply_gate2(&mut psi, self.n, pg.qubit, pg.gate.unitary());
        }
        Ok(psi * C64::new(0.0, self.global_phase).exp())
    }
}

/// Checks the RSF layout constraints; reports the first violation with the
/// indices involved.
pub fn validate_rsf(c: &RsfCircuit) -> Result<(), String> {
    if c.input.bits.len() != c.n {
        return Err(format!(
            "input has {} bits but the circuit declares n = {}",
            c.input.bits.len(),
            c.n
        ));
    }
    if c.input.bits.iter().any(|&b| b > 1) {
        return Err("input bits must be 0 or 1".into());
    }
    for (i, d) in c.diagonals.iter().enumerate() {
        if d.k < 1 || d.k > c.n.saturating_sub(1) {
            return Err(format!("diagonal {}: position k_{} = {} outside 1..=n-1", i + 1, i + 1, d.k));
        }
        if d.gates.is_empty() {
            return Err(format!("diagonal {}: empty (l_{} must be ≥ 1)", i + 1, i + 1));
        }
        if d.gates.len() > c.n - d.k {
            return Err(format!(
                "diagonal {}: length l_{} = {} exceeds n − k_{} = {}",
                i + 1,
                i + 1,
                d.gates.len(),
                i + 1,
                c.n - d.k
            ));
        }
        if i > 0 {
            let prev = c.diagonals[i - 1].k;
            if d.k < prev + 2 {
                return Err(format!(
                    "diagonal {}: position k_{} = {} violates k_{} ≥ k_{} + 2 = {}",
                    i + 1,
                    i + 1,
                    d.k,
                    i + 1,
                    i,
                    prev + 2
                ));
            }
        }
    }
    let total = c.gate_count();
    if total > c.n * c.n / 4 {
        return Err(format!("{} gates exceed the RSF bound ⌊n²/4⌋ = {}", total, c.n * c.n / 4));
    }
    Ok(())
}

/// The number of distinct RSF layouts on `n` qubits, by exhaustive
/// enumeration of valid parameter lists `((k_1, l_1), …, (k_m, l_m))`
/// (the empty layout included).
pub fn count_layouts(n: usize) -> u64 {
    assert!(n >= 1, "count_layouts needs n ≥ 1");
    fn rec(n: usize, min_k: usize) -> u64 {
        let mut total = 1; // stop: no further diagonal
        for k in min_k..n {
            for _l in 1..=(n - k) {
                total += rec(n, k + 2);
            }
        }
        total
    }
    rec(n, 1)
}

/// One gate of the flat working list, in application order.
#[derive(Clone)]
struct Slot {
    gate: Matchgate,
    pair: usize,
}

fn disjoint(p: usize, q: usize) -> bool {
    p.abs_diff(q) >= 2
}

/// The window bits `(b_q, b_{q+1}, b_{q+2})` of the input for a 3-qubit
/// window whose lowest qubit is `q` (1-based).
fn window_bits(bits: &[u8], q: usize) -> [u8; 3] {
    [bits[q - 1], bits[q], bits[q + 1]]
}

/// Pattern match outcome for one absorption step.
enum Step {
    /// GYB `(A)(U@p+1)(T@p)` below: index of `T`.
    P1(usize),
    /// LR `(A)(U@p+1)|b⟩`.
    P2,
    /// LR `(W@p−1)(A)|b⟩` above: index of `W`.
    P3(usize),
    /// GYB `(X@p)(W@p+1)(A)` above: indices of `W` and `X`.
    P4(usize, usize),
}

/// First index below `from` (exclusive) whose pair lies in
/// `[lo.max(1), hi]`, walking down and skipping the rest.
fn first_toucher_below(slots: &[Slot], from: usize, lo: isize, hi: usize) -> Option<usize> {
    let lo = lo.max(1) as usize;
    (0..from).rev().find(|&i| slots[i].pair >= lo && slots[i].pair <= hi)
}

/// First index above `from` (exclusive) whose pair lies in
/// `[lo.max(1), hi]`, walking up and skipping the rest.
fn first_toucher_above(slots: &[Slot], from: usize, lo: isize, hi: usize) -> Option<usize> {
    let lo = lo.max(1) as usize;
    (from + 1..slots.len()).find(|&i| slots[i].pair >= lo && slots[i].pair <= hi)
}

/// Slides `A` down past gates on disjoint pairs.
fn normalize_down(slots: &mut [Slot], a: &mut usize) {
    while *a > 0 && disjoint(slots[*a - 1].pair, slots[*a].pair) {
        slots.swap(*a - 1, *a);
        *a -= 1;
    }
}

/// Matches the four patterns at the current position; `A` must already be
/// normalized down. Returns all matches (the caller asserts exclusivity).
///
/// The walks skip gates that commute out of the pattern's way: a gate
/// anywhere in `[p−1, p+2]` (the pairs touching the window qubits) blocks
/// the `A`–`U` / `A`–`W` segments, while on the far segment (`U`–`T`,
/// `W`–`X`) a pair-`p+2` gate is transparent because it commutes with the
/// pair-`p` gate that is pulled past it before the rewrite.
fn match_patterns(slots: &[Slot], a: usize, n: usize) -> Vec<Step> {
    let p = slots[a].pair;
    let lo = p as isize;
    let mut found = Vec::new();

    // Patterns 1 and 2 need the gate directly below A to sit at pair p+1.
    if a > 0 && slots[a - 1].pair == p + 1 {
        if first_toucher_below(slots, a - 1, lo - 1, p + 2).is_none() {
            // Window pristine below: A and U act directly on the state.
            found.push(Step::P2);
        } else if let Some(t) = first_toucher_below(slots, a - 1, lo - 1, p + 1) {
            // The nearest {p−1, p, p+1}-toucher below is a GYB partner if
            // at pair p; pair-(p+2) gates in between are pulled past.
            if slots[t].pair == p {
                found.push(Step::P1(t));
            }
        }
    }

    // Pattern 3: A acts directly on the state for the window
    // {p−1, p, p+1}, and the first gate above touching {p−1, p} sits at
    // pair p−1.
    if p >= 2 && first_toucher_below(slots, a, lo - 2, p + 1).is_none() {
        if let Some(w) = first_toucher_above(slots, a, lo - 2, p) {
            if slots[w].pair == p - 1 {
                found.push(Step::P3(w));
            }
        }
    }

    // Pattern 4: the first window-toucher above A is W at pair p+1, and
    // the first {p, p+1}-toucher above W is X at pair p.
    if p + 1 <= n - 1 {
        if let Some(w) = first_toucher_above(slots, a, lo - 1, p + 2) {
            if slots[w].pair == p + 1 {
                if let Some(x) = first_toucher_above(slots, w, lo - 1, p + 1) {
                    if slots[x].pair == p {
                        found.push(Step::P4(w, x));
                    }
                }
            }
        }
    }

    found
}

/// Reorders the list into canonical RSF application order by commuting
/// swaps: among adjacent disjoint gates, higher pairs are applied first.
fn canonical_order(slots: &mut Vec<Slot>) {
    loop {
        let mut changed = false;
        for i in 0..slots.len().saturating_sub(1) {
            if disjoint(slots[i].pair, slots[i + 1].pair) && slots[i].pair < slots[i + 1].pair {
                slots.swap(i, i + 1);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Splits the application-ordered list into diagonals (runs of pairs each
/// one higher than the last) and rebuilds the circuit; errors with the
/// validation report if the runs do not form a valid RSF layout.
fn try_rebuild(
    n: usize,
    slots: &[Slot],
    input: &BasisState,
    global_phase: f64,
) -> Result<RsfCircuit, String> {
    let mut runs: Vec<Diagonal> = Vec::new();
    for s in slots {
        match runs.last_mut() {
            Some(d) if s.pair == d.k + d.gates.len() => d.gates.push(s.gate.clone()),
            _ => runs.push(Diagonal { k: s.pair, gates: vec![s.gate.clone()] }),
        }
    }
    runs.reverse();
    let c = RsfCircuit { n, diagonals: runs, input: input.clone(), global_phase };
    validate_rsf(&c)?;
    Ok(c)
}

/// Absorbs one placed gate into an RSF circuit: the result is a valid RSF
/// circuit preparing exactly `A · C |b⟩` (global phase included) with at
/// most one gate more than `C`.
pub fn absorb(c: &RsfCircuit, a: &PlacedGate) -> RsfCircuit {
    let n = c.n;
    assert!(
        (1..n).contains(&a.qubit),
        "absorbed gate must act on pairs 1..=n-1 (got {})",
        a.qubit
    );
    let before = c.gate_count();
    let mut phase = c.global_phase;
    let mut slots: Vec<Slot> = c
        .placed_gates()
        .into_iter()
        .map(|pg| Slot { gate: pg.gate, pair: pg.qubit })
        .collect();
    slots.push(Slot { gate: a.gate.clone(), pair: a.qubit });
    let mut ai = slots.len() - 1;

    let mut alive = true;
    let mut steps = 0usize;
    while alive {
        steps += 1;
        assert!(steps <= 8 * n + 32, "absorption failed to terminate (bug)");
        if let Some(delta) = slots[ai].gate.identity_phase(PRUNE_TOL) {
            phase += delta;
            slots.remove(ai);
            alive = false;
            break;
        }
        normalize_down(&mut slots, &mut ai);
        let matches = match_patterns(&slots, ai, n);
        assert!(
            matches.len() <= 1,
            "multiple absorption patterns matched simultaneously (bug)"
        );
        let p = slots[ai].pair;
        match matches.into_iter().next() {
            Some(Step::P1(t)) => {
                // Pull T up adjacent below U (skipped gates commute with
                // it), then (A)(U@p+1)(T@p) → app order: new-A@p+1, V'@p,
                // V@p+1.
                for i in t..ai - 2 {
                    slots.swap(i, i + 1);
                }
                let (v1, v2, v3) = gyb_move(
                    &slots[ai].gate,
                    &slots[ai - 1].gate,
                    &slots[ai - 2].gate,
                    MoveDirection::LeftToRight,
                )
                .expect("GYB move in absorption");
                slots[ai] = Slot { gate: v1, pair: p + 1 };
                slots[ai - 1] = Slot { gate: v2, pair: p };
                slots[ai - 2] = Slot { gate: v3, pair: p + 1 };
                ai -= 2;
            }
            Some(Step::P2) => {
                // (A)(U@p+1)|b⟩ → app order: new-A@p, V@p+1.
                let bits = window_bits(&c.input.bits, p);
                let (v1, v2) = lr_move(
                    &slots[ai].gate,
                    &slots[ai - 1].gate,
                    bits,
                    MoveDirection::LeftToRight,
                )
                .expect("LR move in absorption");
                slots[ai] = Slot { gate: v1, pair: p + 1 };
                slots[ai - 1] = Slot { gate: v2, pair: p };
                ai -= 1;
            }
            Some(Step::P3(w)) => {
                // Pull W@p−1 down adjacent to A (skipped gates commute with
                // it), then (W)(A)|b⟩ → app order: V@p−1, new-A@p.
                for i in (ai + 1..w).rev() {
                    slots.swap(i, i + 1);
                }
                let bits = window_bits(&c.input.bits, p - 1);
                let (v1, v2) = lr_move(
                    &slots[ai + 1].gate,
                    &slots[ai].gate,
                    bits,
                    MoveDirection::LeftToRight,
                )
                .expect("LR move in absorption");
                slots[ai] = Slot { gate: v2, pair: p - 1 };
                slots[ai + 1] = Slot { gate: v1, pair: p };
                ai += 1;
            }
            Some(Step::P4(w, x)) => {
                // Pull X down adjacent above W (skipped gates commute with
                // it), then (X@p)(W@p+1)(A@p) → app order: V'@p+1, V@p,
                // new-A@p+1.
                for i in (w + 1..x).rev() {
                    slots.swap(i, i + 1);
                }
                let (v1, v2, v3) = gyb_move(
                    &slots[w + 1].gate,
                    &slots[w].gate,
                    &slots[ai].gate,
                    MoveDirection::LeftToRight,
                )
                .expect("GYB move in absorption");
                slots[ai] = Slot { gate: v3, pair: p + 1 };
                slots[w] = Slot { gate: v2, pair: p };
                slots[w + 1] = Slot { gate: v1, pair: p + 1 };
                ai = w + 1;
            }
            None => break,
        }
    }

    if alive {
        // Terminated with A unconsumed: multiply into an adjacent same-pair
        // gate if one is reachable, otherwise leave A appended in place.
        normalize_down(&mut slots, &mut ai);
        let p = slots[ai].pair;
        if ai > 0 && slots[ai - 1].pair == p {
            slots[ai - 1].gate = &slots[ai].gate * &slots[ai - 1].gate;
            slots.remove(ai);
        } else {
            // Combine upward: the first gate above touching {p, p+1}, when
            // at the same pair, can be pulled down across the (disjoint)
            // skipped gates.
            let mut w = None;
            for i in ai + 1..slots.len() {
                let q = slots[i].pair;
                if q + 1 >= p && q <= p + 1 {
                    w = Some(i);
                    break;
                }
            }
            if let Some(wi) = w {
                if slots[wi].pair == p {
                    slots[wi].gate = &slots[wi].gate * &slots[ai].gate;
                    slots.remove(ai);
                }
            }
        }
    }

    // Prune any gate the moves turned into a pure phase.
    let mut pruned = false;
    let mut i = 0;
    while i < slots.len() {
        if let Some(delta) = slots[i].gate.identity_phase(PRUNE_TOL) {
            phase += delta;
            slots.remove(i);
            pruned = true;
        } else {
            i += 1;
        }
    }

    canonical_order(&mut slots);
    let out = match try_rebuild(n, &slots, &c.input, phase) {
        Ok(out) => out,
        Err(report) => {
            // Removing interior gates can fuse previously separated
            // diagonals into a non-RSF arrangement that needs fresh moves;
            // re-canonicalize the (strictly shorter) remainder from scratch.
            // Reaching here without a prune would mean a move broke the
            // layout outright.
            let layout: Vec<usize> = slots.iter().map(|s| s.pair).collect();
            assert!(
                pruned,
                "absorption produced an invalid RSF layout (bug): {report}; pairs = {layout:?}"
            );
            let mut fresh = RsfCircuit::empty(c.input.clone());
            fresh.global_phase = phase;
            for s in &slots {
                fresh = absorb(&fresh, &PlacedGate::new(s.gate.clone(), s.pair));
            }
            fresh
        }
    };
    assert!(
        out.gate_count() <= before + 1,
        "absorption grew the circuit by more than one gate (bug)"
    );
    out
}

/// Rewrites an arbitrary matchgate circuit acting on `|b⟩` into RSF by
/// absorbing its gates one at a time.
pub fn to_rsf(gates: &[PlacedGate], b: &BasisState) -> RsfCircuit {
    let mut c = RsfCircuit::empty(b.clone());
    for pg in gates {
        c = absorb(&c, pg);
    }
    c
}

/// Inverts one diagonal against a bra-side basis state: returns gates
/// `V_l, …, V_1` in application order (a descending staircase) with
/// `⟨b|D = ⟨b|V_1 ⋯ V_l` exactly. Uses one LR move per gate.
pub fn invert_diagonal(diag: &Diagonal, b: &BasisState) -> FgsResult<Vec<PlacedGate>> {
    let l = diag.gates.len();
    let mut out = Vec::with_capacity(l);
    if l == 0 {
        return Ok(out);
    }
    let mut cur = diag.gates[l - 1].clone();
    for j in (1..l).rev() {
        // cur sits at pair q, the gate below it at q−1; the bra relation
        // ⟨b|cur' U = ⟨b|U' V dualizes to an LR move on the adjoints.
        let q = diag.k + j;
        let bits = [b.bits[q - 2], b.bits[q - 1], b.bits[q]];
        let (v1, v2) = lr_move(
            &diag.gates[j - 1].adjoint(),
            &cur.adjoint(),
            bits,
            MoveDirection::LeftToRight,
        )?;
        out.push(PlacedGate::new(v1.adjoint(), q));
        cur = v2.adjoint();
    }
    out.push(PlacedGate::new(cur, diag.k));
    Ok(out)
}

/// Pads an RSF circuit with identity gates into the maximal layout
/// `k_i = 2i − 1`, `l_i = n − 2i + 1`: each diagonal slides down to its
/// maximal position and is padded at both ends; missing diagonals become
/// all-identity. The prepared state is unchanged.
pub fn pad_to_maximal(c: &RsfCircuit) -> RsfCircuit {
    let n = c.n;
    let m = n / 2;
    let mut diagonals = Vec::with_capacity(m);
    for i in 1..=m {
        let k = 2 * i - 1;
        let len = n - k;
        let mut gates = Vec::with_capacity(len);
        if let Some(d) = c.diagonals.get(i - 1) {
            debug_assert!(d.k >= k, "RSF positions satisfy k_i ≥ 2i − 1");
            for _ in 0..d.k - k {
                gates.push(Matchgate::identity());
            }
            gates.extend(d.gates.iter().cloned());
        }
        while gates.len() < len {
            gates.push(Matchgate::identity());
        }
        diagonals.push(Diagonal { k, gates });
    }
    let out = RsfCircuit {
        n,
        diagonals,
        input: c.input.clone(),
        global_phase: c.global_phase,
    };
    debug_assert!(validate_rsf(&out).is_ok());
    out
}

/// Serialized RSF circuit.
#[derive(Serialize, Deserialize)]
pub struct CircuitDto {
    pub n: usize,
    pub input_bits: Vec<u8>,
    pub diagonals: Vec<DiagonalDto>,
    pub global_phase: f64,
}

#[derive(Serialize, Deserialize)]
pub struct DiagonalDto {
    pub k: usize,
    pub gates: Vec<GateDto>,
}

impl CircuitDto {
    pub fn from_circuit(c: &RsfCircuit) -> Self {
        Self {
            n: c.n,
            input_bits: c.input.bits.clone(),
            global_phase: c.global_phase,
            diagonals: c
                .diagonals
                .iter()
                .map(|d| DiagonalDto {
                    k: d.k,
                    gates: d
                        .gates
                        .iter()
                        .enumerate()
                        .map(|(j, g)| GateDto::from_placed(&PlacedGate::new(g.clone(), d.k + j)))
                        .collect(),
                })
                .collect(),
        }
    }

    /// Rebuilds the circuit, revalidating every gate and the RSF layout.
    pub fn into_circuit(self) -> FgsResult<RsfCircuit> {
        let input = BasisState::new(self.input_bits)?;
        let mut diagonals = Vec::with_capacity(self.diagonals.len());
        for d in self.diagonals {
            let k = d.k;
            let mut gates = Vec::with_capacity(d.gates.len());
            for (j, gd) in d.gates.into_iter().enumerate() {
                if gd.qubit != k + j {
                    return Err(FgsError::Validation(format!(
                        "gate {} of the diagonal at k = {} claims qubit {} instead of {}",
                        j + 1,
                        k,
                        gd.qubit,
                        k + j
                    )));
                }
                gates.push(gd.into_placed()?.gate);
            }
            diagonals.push(Diagonal { k, gates });
        }
        let c = RsfCircuit { n: self.n, diagonals, input, global_phase: self.global_phase };
        validate_rsf(&c).map_err(FgsError::InvalidRsf)?;
        Ok(c)
    }
}
