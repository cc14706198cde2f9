//! Dense statevector simulation.
//!
//! Qubit 0 is the most significant bit of a basis index: for `n` qubits, qubit
//! `q` corresponds to bit `n - 1 - q`. Every routine in the crate follows this.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 20;

/// Eigenvalues at or below this contribute nothing to the entropy.
pub const ENTROPY_EIGEN_CUTOFF: f64 = 1e-12;

const HERMITIAN_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Rotation axis of a single-qubit Pauli rotation `exp(-i θ P / 2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    X(usize),
    RX(usize, f64),
    RY(usize, f64),
    RZ(usize, f64),
    /// `Rot(α, β, γ) = RZ(γ) · RY(β) · RZ(α)`, angles in that order.
    Rot(usize, [f64; 3]),
    CNOT { control: usize, target: usize },
}

impl Gate {
    pub fn rotation(axis: Axis, qubit: usize, angle: f64) -> Gate {
        match axis {
            Axis::X => Gate::RX(qubit, angle),
            Axis::Y => Gate::RY(qubit, angle),
            Axis::Z => Gate::RZ(qubit, angle),
        }
    }

    /// Qubits the gate acts on; for CNOT the control comes first.
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::X(q) | Gate::RX(q, _) | Gate::RY(q, _) | Gate::RZ(q, _) | Gate::Rot(q, _) => {
                vec![q]
            }
            Gate::CNOT { control, target } => vec![control, target],
        }
    }

    pub fn inverse(&self) -> Gate {
        match *self {
            Gate::X(q) => Gate::X(q),
            Gate::RX(q, a) => Gate::RX(q, -a),
            Gate::RY(q, a) => Gate::RY(q, -a),
            Gate::RZ(q, a) => Gate::RZ(q, -a),
            // (RZ(γ)RY(β)RZ(α))† = RZ(-α)RY(-β)RZ(-γ)
            Gate::Rot(q, [a, b, c]) => Gate::Rot(q, [-c, -b, -a]),
            g @ Gate::CNOT { .. } => g,
        }
    }

    /// Local unitary of the gate: 2×2 for single-qubit kinds, 4×4 for CNOT with
    /// the control as the more significant local bit.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        match *self {
            Gate::CNOT { .. } => {
                let mut m = DMatrix::zeros(4, 4);
                m[(0, 0)] = ONE;
                m[(1, 1)] = ONE;
                m[(2, 3)] = ONE;
                m[(3, 2)] = ONE;
                m
            }
            _ => {
                let u = self.single_qubit_matrix();
                DMatrix::from_row_slice(2, 2, &[u[0][0], u[0][1], u[1][0], u[1][1]])
            }
        }
    }

    fn single_qubit_matrix(&self) -> [[Complex64; 2]; 2] {
        match *self {
            Gate::X(_) => [[ZERO, ONE], [ONE, ZERO]],
            Gate::RX(_, a) => rotation_matrix(Axis::X, a),
            Gate::RY(_, a) => rotation_matrix(Axis::Y, a),
            Gate::RZ(_, a) => rotation_matrix(Axis::Z, a),
            Gate::Rot(_, [a, b, c]) => {
                let first = rotation_matrix(Axis::Z, a);
                let second = rotation_matrix(Axis::Y, b);
                let third = rotation_matrix(Axis::Z, c);
                mat2_mul(&third, &mat2_mul(&second, &first))
            }
            Gate::CNOT { .. } => unreachable!("CNOT is a two-qubit gate"),
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        let qs = self.qubits();
        if let Some(&q) = qs.iter().find(|&&q| q >= n_qubits) {
            return Err(Error::invalid(format!(
                "gate {self:?} targets qubit {q} on a {n_qubits}-qubit register"
            )));
        }
        if qs.len() == 2 && qs[0] == qs[1] {
            return Err(Error::invalid(format!(
                "gate {self:?} uses qubit {} as both control and target",
                qs[0]
            )));
        }
        let finite = match *self {
            Gate::RX(_, a) | Gate::RY(_, a) | Gate::RZ(_, a) => a.is_finite(),
            Gate::Rot(_, angles) => angles.iter().all(|a| a.is_finite()),
            _ => true,
        };
        if !finite {
            return Err(Error::invalid(format!("gate {self:?} has a non-finite angle")));
        }
        Ok(())
    }
}

pub(crate) fn rotation_matrix(axis: Axis, angle: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = (angle / 2.0).sin_cos();
    match axis {
        Axis::X => [
            [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
            [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
        ],
        Axis::Y => [
            [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
            [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
        ],
        Axis::Z => [
            [Complex64::new(c, -s), ZERO],
            [ZERO, Complex64::new(c, s)],
        ],
    }
}

fn mat2_mul(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    let mut out = [[ZERO; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Probability vector over measurement outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution(pub Vec<f64>);

impl Distribution {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Index of the largest entry, ties resolved toward the lower index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// Computational basis state `|bits⟩`, `bits[0]` being qubit 0.
    pub fn basis(n_qubits: usize, bits: &[u8]) -> Result<Self> {
        if bits.len() != n_qubits {
            return Err(Error::invalid(format!(
                "bitstring of length {} for a {n_qubits}-qubit register",
                bits.len()
            )));
        }
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::invalid(format!("bit value {b} is not 0 or 1")));
        }
        let index = bits
            .iter()
            .fold(0usize, |acc, &b| (acc << 1) | usize::from(b));
        Self::basis_index(n_qubits, index)
    }

    pub fn basis_index(n_qubits: usize, index: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::invalid(format!(
                "register size {n_qubits} outside 1..={MAX_QUBITS}"
            )));
        }
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::invalid(format!(
                "basis index {index} out of range for {n_qubits} qubits"
            )));
        }
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Ok(StateVector {
            n_qubits,
            amplitudes,
        })
    }

    /// Wraps explicit amplitudes; the length must be a power of two and the
    /// norm must be 1 within 1e-10.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let dim = amplitudes.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::invalid(format!(
                "amplitude count {dim} is not a power of two ≥ 2"
            )));
        }
        let n_qubits = dim.trailing_zeros() as usize;
        if n_qubits > MAX_QUBITS {
            return Err(Error::invalid(format!("{n_qubits} qubits exceeds {MAX_QUBITS}")));
        }
        let state = StateVector {
            n_qubits,
            amplitudes,
        };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("state norm² is {norm}, expected 1")));
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn apply_gate(&self, gate: &Gate) -> Result<StateVector> {
        let mut out = self.clone();
        out.apply_mut(gate)?;
        Ok(out)
    }

    pub fn apply_circuit(&self, gates: &[Gate]) -> Result<StateVector> {
        let mut out = self.clone();
        for g in gates {
            out.apply_mut(g)?;
        }
        Ok(out)
    }

    pub fn apply_mut(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        self.apply_unchecked(gate);
        Ok(())
    }

    pub(crate) fn apply_unchecked(&mut self, gate: &Gate) {
        match *gate {
            Gate::X(q) => self.pauli(Axis::X, q),
            Gate::RX(q, a) => self.rotate(Axis::X, q, a),
            Gate::RY(q, a) => self.rotate(Axis::Y, q, a),
            Gate::RZ(q, a) => self.rotate(Axis::Z, q, a),
            Gate::Rot(q, _) => self.single_qubit(q, &gate.single_qubit_matrix()),
            Gate::CNOT { control, target } => self.cnot(control, target),
        }
    }

    fn stride(&self, qubit: usize) -> usize {
        debug_assert!(qubit < self.n_qubits);
        1usize << (self.n_qubits - 1 - qubit)
    }

    pub(crate) fn single_qubit(&mut self, qubit: usize, m: &[[Complex64; 2]; 2]) {
        let stride = self.stride(qubit);
        for block in self.amplitudes.chunks_exact_mut(2 * stride) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = m[0][0] * x + m[0][1] * y;
                *b = m[1][0] * x + m[1][1] * y;
            }
        }
    }

    /// `exp(-i angle P / 2)` on `qubit`.
    pub(crate) fn rotate(&mut self, axis: Axis, qubit: usize, angle: f64) {
        let stride = self.stride(qubit);
        let (s, c) = (angle / 2.0).sin_cos();
        match axis {
            Axis::Z => {
                let lo_phase = Complex64::new(c, -s);
                let hi_phase = Complex64::new(c, s);
                for block in self.amplitudes.chunks_exact_mut(2 * stride) {
                    let (lo, hi) = block.split_at_mut(stride);
                    lo.iter_mut().for_each(|a| *a *= lo_phase);
                    hi.iter_mut().for_each(|b| *b *= hi_phase);
                }
            }
            Axis::Y => {
                for block in self.amplitudes.chunks_exact_mut(2 * stride) {
                    let (lo, hi) = block.split_at_mut(stride);
                    for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                        let (x, y) = (*a, *b);
                        *a = x * c - y * s;
                        *b = x * s + y * c;
                    }
                }
            }
            Axis::X => {
                let mis = Complex64::new(0.0, -s);
                for block in self.amplitudes.chunks_exact_mut(2 * stride) {
                    let (lo, hi) = block.split_at_mut(stride);
                    for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                        let (x, y) = (*a, *b);
                        *a = x * c + y * mis;
                        *b = x * mis + y * c;
                    }
                }
            }
        }
    }

    /// Applies the Pauli operator itself (not a rotation).
    pub(crate) fn pauli(&mut self, axis: Axis, qubit: usize) {
        let stride = self.stride(qubit);
        for block in self.amplitudes.chunks_exact_mut(2 * stride) {
            let (lo, hi) = block.split_at_mut(stride);
            match axis {
                Axis::X => lo.swap_with_slice(hi),
                Axis::Y => {
                    for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                        let (x, y) = (*a, *b);
                        *a = -I * y;
                        *b = I * x;
                    }
                }
                Axis::Z => hi.iter_mut().for_each(|b| *b = -*b),
            }
        }
    }

    pub(crate) fn cnot(&mut self, control: usize, target: usize) {
        let cmask = self.stride(control);
        let tmask = self.stride(target);
        for i in 0..self.amplitudes.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amplitudes.swap(i, i | tmask);
            }
        }
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    /// Inner product `⟨self|other⟩`.
    #[cfg(test)]
    pub(crate) fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `⟨self| P_qubit |ket⟩` for a Pauli `P`.
    pub(crate) fn pauli_element(&self, ket: &StateVector, axis: Axis, qubit: usize) -> Complex64 {
        let stride = self.stride(qubit);
        let mut acc = ZERO;
        for (bra, ket) in self
            .amplitudes
            .chunks_exact(2 * stride)
            .zip(ket.amplitudes.chunks_exact(2 * stride))
        {
            let (blo, bhi) = bra.split_at(stride);
            let (klo, khi) = ket.split_at(stride);
            match axis {
                Axis::Z => {
                    acc += blo.iter().zip(klo).map(|(b, k)| b.conj() * k).sum::<Complex64>();
                    acc -= bhi.iter().zip(khi).map(|(b, k)| b.conj() * k).sum::<Complex64>();
                }
                Axis::X => {
                    acc += blo.iter().zip(khi).map(|(b, k)| b.conj() * k).sum::<Complex64>();
                    acc += bhi.iter().zip(klo).map(|(b, k)| b.conj() * k).sum::<Complex64>();
                }
                Axis::Y => {
                    acc -= I * blo.iter().zip(khi).map(|(b, k)| b.conj() * k).sum::<Complex64>();
                    acc += I * bhi.iter().zip(klo).map(|(b, k)| b.conj() * k).sum::<Complex64>();
                }
            }
        }
        acc
    }

    fn check_qubit_list(&self, qubits: &[usize], what: &str) -> Result<()> {
        if qubits.is_empty() {
            return Err(Error::invalid(format!("{what} qubit list is empty")));
        }
        let mut seen = vec![false; self.n_qubits];
        for &q in qubits {
            if q >= self.n_qubits {
                return Err(Error::invalid(format!(
                    "{what} qubit {q} out of range for {} qubits",
                    self.n_qubits
                )));
            }
            if std::mem::replace(&mut seen[q], true) {
                return Err(Error::invalid(format!("{what} qubit {q} listed twice")));
            }
        }
        Ok(())
    }

    /// Maps a full basis index to its outcome over `qubits`, `qubits[0]` as MSB.
    fn gather_bits(&self, index: usize, qubits: &[usize]) -> usize {
        qubits.iter().fold(0usize, |acc, &q| {
            (acc << 1) | ((index >> (self.n_qubits - 1 - q)) & 1)
        })
    }

    /// Born-rule marginal over `measured` (outcome index with `measured[0]` as MSB).
    pub fn born_probabilities(&self, measured: &[usize]) -> Result<Distribution> {
        self.check_qubit_list(measured, "measured")?;
        let mut probs = vec![0.0; 1 << measured.len()];
        let leading = measured.iter().enumerate().all(|(i, &q)| i == q);
        if leading {
            let shift = self.n_qubits - measured.len();
            for (i, a) in self.amplitudes.iter().enumerate() {
                probs[i >> shift] += a.norm_sqr();
            }
        } else {
            for (i, a) in self.amplitudes.iter().enumerate() {
                probs[self.gather_bits(i, measured)] += a.norm_sqr();
            }
        }
        Ok(Distribution(probs))
    }

    /// Draws `n_shots` outcomes over `measured`; deterministic for a fixed seed.
    pub fn sample(&self, measured: &[usize], n_shots: usize, seed: u64) -> Result<Vec<usize>> {
        if n_shots == 0 {
            return Err(Error::invalid("n_shots must be at least 1"));
        }
        let dist = self.born_probabilities(measured)?;
        let weights = WeightedIndex::new(dist.probs())
            .map_err(|e| Error::invalid(format!("cannot sample distribution: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n_shots).map(|_| weights.sample(&mut rng)).collect())
    }

    /// Partial trace over every qubit not in `kept`; the reduced index uses
    /// `kept[0]` as MSB.
    pub fn reduced_density_matrix(&self, kept: &[usize]) -> Result<DensityMatrix> {
        self.check_qubit_list(kept, "kept")?;
        let env: Vec<usize> = (0..self.n_qubits).filter(|q| !kept.contains(q)).collect();
        let dk = 1usize << kept.len();
        let de = 1usize << env.len();
        let mut psi = DMatrix::<Complex64>::zeros(dk, de);
        for (i, &a) in self.amplitudes.iter().enumerate() {
            let k = self.gather_bits(i, kept);
            let e = if env.is_empty() { 0 } else { self.gather_bits(i, &env) };
            psi[(k, e)] = a;
        }
        let rho = &psi * psi.adjoint();
        Ok(DensityMatrix {
            n_qubits: kept.len(),
            entries: rho,
        })
    }
}

/// Pure-function form of [`StateVector::apply_gate`].
pub fn apply_gate(state: &StateVector, gate: &Gate) -> Result<StateVector> {
    state.apply_gate(gate)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(n_qubits: usize, entries: DMatrix<Complex64>) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if entries.nrows() != dim || entries.ncols() != dim {
            return Err(Error::invalid(format!(
                "density matrix is {}×{}, expected {dim}×{dim}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(DensityMatrix { n_qubits, entries })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.entries.nrows();
        (0..n).all(|i| (0..n).all(|j| (self.entries[(i, j)] - self.entries[(j, i)].conj()).norm() <= tol))
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        if !self.is_hermitian(HERMITIAN_TOL) {
            return Err(Error::invalid("density matrix is not Hermitian"));
        }
        let eig = self.entries.clone().symmetric_eigen();
        Ok(eig.eigenvalues.iter().copied().collect())
    }
}

/// `−Σ λ log₂ λ` over the eigenvalues of `rho`, in bits.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    let entropy: f64 = rho
        .eigenvalues()?
        .into_iter()
        .filter(|&l| l > ENTROPY_EIGEN_CUTOFF)
        .map(|l| -l * l.log2())
        .sum();
    Ok(entropy.clamp(0.0, rho.n_qubits as f64))
}
