//! Parameterized circuits of the generative model.
//!
//! The one-step unitary is written as `U = V(φ) Σ(γ) V†(φ)` with `V` a stack of
//! strongly-entangling layers and `Σ` a product of single-qubit Z rotations, so
//! `U^k = V Σ(kγ) V†` costs the same circuit depth for every `k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{Axis, Distribution, Gate, StateVector};

/// Split of the register into per-asset target qubits and ancilla qubits.
///
/// Target qubits come first: asset 0's bits (MSB first), then asset 1's, and
/// so on; ancilla qubits follow and start in `|0…0⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    pub n_assets: usize,
    pub bits_per_asset: usize,
    pub n_ancilla: usize,
}

impl RegisterLayout {
    pub fn new(n_assets: usize, bits_per_asset: usize, n_ancilla: usize) -> Result<Self> {
        let layout = RegisterLayout {
            n_assets,
            bits_per_asset,
            n_ancilla,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// Two assets at two bits each plus four ancilla qubits: eight in total.
    pub fn two_assets() -> Self {
        RegisterLayout {
            n_assets: 2,
            bits_per_asset: 2,
            n_ancilla: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_assets == 0 || self.bits_per_asset == 0 {
            return Err(Error::invalid("layout needs at least one asset and one bit per asset"));
        }
        if self.n_qubits() > crate::qsim::MAX_QUBITS {
            return Err(Error::invalid(format!("layout needs {} qubits", self.n_qubits())));
        }
        Ok(())
    }

    pub fn n_target(&self) -> usize {
        self.n_assets * self.bits_per_asset
    }

    pub fn n_qubits(&self) -> usize {
        self.n_target() + self.n_ancilla
    }

    /// Number of discrete levels per asset.
    pub fn levels_per_asset(&self) -> usize {
        1 << self.bits_per_asset
    }

    pub fn n_joint_states(&self) -> usize {
        1 << self.n_target()
    }

    pub fn target_qubits(&self) -> Vec<usize> {
        (0..self.n_target()).collect()
    }

    pub fn asset_qubits(&self, asset: usize) -> Vec<usize> {
        let start = asset * self.bits_per_asset;
        (start..start + self.bits_per_asset).collect()
    }

    /// Joint target index of per-asset levels.
    pub fn joint_index(&self, levels: &[usize]) -> Result<usize> {
        if levels.len() != self.n_assets {
            return Err(Error::invalid(format!(
                "expected {} asset levels, got {}",
                self.n_assets,
                levels.len()
            )));
        }
        let m = self.levels_per_asset();
        levels.iter().try_fold(0usize, |acc, &l| {
            if l >= m {
                Err(Error::invalid(format!("level {l} outside 0..{m}")))
            } else {
                Ok((acc << self.bits_per_asset) | l)
            }
        })
    }

    pub fn split_joint(&self, joint: usize) -> Vec<usize> {
        let mask = self.levels_per_asset() - 1;
        (0..self.n_assets)
            .map(|a| (joint >> ((self.n_assets - 1 - a) * self.bits_per_asset)) & mask)
            .collect()
    }

    /// Per-asset marginals of a distribution over the joint target states.
    pub fn asset_marginals(&self, joint: &Distribution) -> Vec<Distribution> {
        let m = self.levels_per_asset();
        let mut out = vec![vec![0.0; m]; self.n_assets];
        for (j, &p) in joint.probs().iter().enumerate() {
            for (a, l) in self.split_joint(j).into_iter().enumerate() {
                out[a][l] += p;
            }
        }
        out.into_iter().map(Distribution).collect()
    }
}

/// Trainable angles: `phi[l][q] = (α, β, γ)` for the `Rot` of layer `l` on
/// qubit `q`, and one Z phase per qubit for `Σ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub phi: Vec<Vec<[f64; 3]>>,
    pub gamma: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(n_qubits: usize, n_layers: usize) -> Self {
        ModelParams {
            n_qubits,
            n_layers,
            phi: vec![vec![[0.0; 3]; n_qubits]; n_layers],
            gamma: vec![0.0; n_qubits],
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_layers * self.n_qubits * 3 + self.n_qubits
    }

    pub fn phi_index(&self, layer: usize, qubit: usize, angle: usize) -> usize {
        (layer * self.n_qubits + qubit) * 3 + angle
    }

    pub fn gamma_index(&self, qubit: usize) -> usize {
        self.n_layers * self.n_qubits * 3 + qubit
    }

    /// Flat view: all `phi` in (layer, qubit, angle) order, then `gamma`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat: Vec<f64> = self.phi.iter().flatten().flatten().copied().collect();
        flat.extend_from_slice(&self.gamma);
        flat
    }

    pub fn from_flat(n_qubits: usize, n_layers: usize, flat: &[f64]) -> Result<Self> {
        let mut p = ModelParams::zeros(n_qubits, n_layers);
        if flat.len() != p.n_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                p.n_params(),
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        for layer in p.phi.iter_mut() {
            for rot in layer.iter_mut() {
                for a in rot.iter_mut() {
                    *a = it.next().unwrap();
                }
            }
        }
        for g in p.gamma.iter_mut() {
            *g = it.next().unwrap();
        }
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::invalid("at least one layer is required"));
        }
        let shape_ok = self.phi.len() == self.n_layers
            && self.phi.iter().all(|l| l.len() == self.n_qubits)
            && self.gamma.len() == self.n_qubits;
        if !shape_ok {
            return Err(Error::invalid(format!(
                "parameter arrays do not match {} layers × {} qubits",
                self.n_layers, self.n_qubits
            )));
        }
        if !self.to_flat().iter().all(|a| a.is_finite()) {
            return Err(Error::invalid("non-finite parameter angle"));
        }
        Ok(())
    }
}

/// CNOT range of layer `layer` (0-based) on `n` qubits.
fn entangler_range(layer: usize, n: usize) -> usize {
    (layer % (n - 1)) + 1
}

/// Strongly-entangling layers: per layer, `Rot` on every qubit followed by a
/// CNOT ring `q → (q + r) mod n`.
pub fn build_v(params: &ModelParams) -> Result<Vec<Gate>> {
    params.validate()?;
    let n = params.n_qubits;
    if n < 2 {
        return Err(Error::invalid("the entangling layer needs at least two qubits"));
    }
    let mut gates = Vec::with_capacity(params.n_layers * 2 * n);
    for (l, layer) in params.phi.iter().enumerate() {
        gates.extend(layer.iter().enumerate().map(|(q, &angles)| Gate::Rot(q, angles)));
        let r = entangler_range(l, n);
        gates.extend((0..n).map(|q| Gate::CNOT {
            control: q,
            target: (q + r) % n,
        }));
    }
    Ok(gates)
}

pub fn build_v_dagger(params: &ModelParams) -> Result<Vec<Gate>> {
    Ok(build_v(params)?.iter().rev().map(Gate::inverse).collect())
}

/// `Σ(kγ)`: `RZ(k·γ_q)` on every qubit.
pub fn build_sigma(params: &ModelParams, k: usize) -> Vec<Gate> {
    params
        .gamma
        .iter()
        .enumerate()
        .map(|(q, &g)| Gate::RZ(q, k as f64 * g))
        .collect()
}

/// X gates preparing `|levels⟩ ⊗ |0…0⟩` from the all-zero register.
pub fn encoding_gates(layout: &RegisterLayout, levels: &[usize]) -> Result<Vec<Gate>> {
    let joint = layout.joint_index(levels)?;
    let nt = layout.n_target();
    Ok((0..nt)
        .filter(|q| (joint >> (nt - 1 - q)) & 1 == 1)
        .map(Gate::X)
        .collect())
}

fn check_params(layout: &RegisterLayout, params: &ModelParams) -> Result<()> {
    layout.validate()?;
    params.validate()?;
    if params.n_qubits != layout.n_qubits() {
        return Err(Error::invalid(format!(
            "parameters sized for {} qubits, layout has {}",
            params.n_qubits,
            layout.n_qubits()
        )));
    }
    Ok(())
}

/// `V Σ(kγ) V† |levels ⊗ 0⟩`.
pub fn evolve_k_steps(
    layout: &RegisterLayout,
    params: &ModelParams,
    levels: &[usize],
    k: usize,
) -> Result<StateVector> {
    check_params(layout, params)?;
    let mut state = StateVector::basis_index(layout.n_qubits(), 0)?;
    for g in encoding_gates(layout, levels)? {
        state.apply_mut(&g)?;
    }
    for g in build_v_dagger(params)?
        .iter()
        .chain(&build_sigma(params, k))
        .chain(&build_v(params)?)
    {
        state.apply_unchecked(g);
    }
    Ok(state)
}

/// Distribution over the joint target states after `k` steps.
pub fn model_distribution(
    layout: &RegisterLayout,
    params: &ModelParams,
    levels: &[usize],
    k: usize,
) -> Result<Distribution> {
    evolve_k_steps(layout, params, levels, k)?.born_probabilities(&layout.target_qubits())
}

/// One step of a differentiable circuit. Rotation angles are
/// `scale · params[param]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Op {
    Cnot { control: usize, target: usize },
    Rot {
        axis: Axis,
        qubit: usize,
        param: usize,
        scale: f64,
    },
}

impl Op {
    pub(crate) fn apply(&self, state: &mut StateVector, params: &[f64], shift: f64) {
        match *self {
            Op::Cnot { control, target } => state.cnot(control, target),
            Op::Rot {
                axis,
                qubit,
                param,
                scale,
            } => state.rotate(axis, qubit, scale * params[param] + shift),
        }
    }

    pub(crate) fn apply_inverse(&self, state: &mut StateVector, params: &[f64]) {
        match *self {
            Op::Cnot { control, target } => state.cnot(control, target),
            Op::Rot {
                axis,
                qubit,
                param,
                scale,
            } => state.rotate(axis, qubit, -scale * params[param]),
        }
    }
}

/// Elementary-rotation form of `V Σ(kγ) V†` (encoding excluded), with every
/// angle tied back to its entry in [`ModelParams::to_flat`].
pub(crate) fn parametric_ops(shape: &ModelParams, k: usize) -> Vec<Op> {
    let n = shape.n_qubits;
    let mut v = Vec::new();
    for l in 0..shape.n_layers {
        for q in 0..n {
            for (a, axis) in [Axis::Z, Axis::Y, Axis::Z].into_iter().enumerate() {
                v.push(Op::Rot {
                    axis,
                    qubit: q,
                    param: shape.phi_index(l, q, a),
                    scale: 1.0,
                });
            }
        }
        let r = entangler_range(l, n);
        v.extend((0..n).map(|q| Op::Cnot {
            control: q,
            target: (q + r) % n,
        }));
    }
    let mut ops: Vec<Op> = v
        .iter()
        .rev()
        .map(|op| match *op {
            Op::Rot {
                axis,
                qubit,
                param,
                scale,
            } => Op::Rot {
                axis,
                qubit,
                param,
                scale: -scale,
            },
            cnot => cnot,
        })
        .collect();
    if k > 0 {
        ops.extend((0..n).map(|q| Op::Rot {
            axis: Axis::Z,
            qubit: q,
            param: shape.gamma_index(q),
            scale: k as f64,
        }));
    }
    ops.extend(v);
    ops
}
