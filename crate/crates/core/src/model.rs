//! The trainable time-series generative model: pooled-window likelihood,
//! gradients, Adam training and transition-matrix read-out.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{self, parametric_ops, ModelParams, Op, RegisterLayout};
use crate::error::{Error, Result};
use crate::market::DiscreteSeries;
use crate::optim::Adam;
use crate::qsim::{Distribution, StateVector};

/// Model probabilities are floored here before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Step of the central finite-difference gradient.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    /// Two-point ±π/2 shift of every rotation occurrence.
    ParameterShift,
    /// Central differences of the loss with step [`FD_STEP`].
    FiniteDifference,
    /// Reverse-mode sweep over the statevector. Yields the same exact
    /// derivative as the shift rule from one forward and one backward pass.
    Adjoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub n_steps: usize,
    /// Largest step offset `k` in the training pairs.
    pub horizon: usize,
    pub n_layers: usize,
    pub seed: u64,
    pub n_runs: usize,
    pub gradient_method: GradientMethod,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.1,
            n_steps: 300,
            horizon: 10,
            n_layers: 1,
            seed: 0,
            n_runs: 5,
            gradient_method: GradientMethod::Adjoint,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if self.n_layers == 0 {
            return Err(Error::invalid("at least one layer is required"));
        }
        Ok(())
    }
}

/// One observed transition `source → target` after `k` steps.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub source_levels: Vec<usize>,
    pub target_levels: Vec<usize>,
    pub k: usize,
}

/// Every pair `(t, t + k)`, `1 ≤ k ≤ horizon`, ordered by `(t, k)`. Pairs that
/// touch an unobserved step are left out.
pub fn make_training_set(series: &DiscreteSeries, horizon: usize) -> Result<Vec<TrainingSample>> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let n = series.len();
    if n < horizon + 1 {
        return Err(Error::invalid(format!(
            "series of length {n} is shorter than horizon + 1 = {}",
            horizon + 1
        )));
    }
    let mut samples = Vec::new();
    for t in 0..n {
        if !series.observed[t] {
            continue;
        }
        for k in 1..=horizon.min(n - 1 - t) {
            if !series.observed[t + k] {
                continue;
            }
            samples.push(TrainingSample {
                source_levels: series.state_at(t),
                target_levels: series.state_at(t + k),
                k,
            });
        }
    }
    Ok(samples)
}

/// Samples sharing a source state and step count run the same circuit.
#[derive(Clone, Debug)]
struct Group {
    source: usize,
    k: usize,
    targets: Vec<(usize, f64)>,
}

/// Mean negative log-likelihood over a fixed sample set, evaluated per
/// distinct `(source, k)` circuit.
#[derive(Clone, Debug)]
pub struct Objective {
    layout: RegisterLayout,
    shape: ModelParams,
    groups: Vec<Group>,
    n_samples: f64,
    ops_by_k: Vec<Vec<Op>>,
}

impl Objective {
    pub fn new(layout: RegisterLayout, n_layers: usize, samples: &[TrainingSample]) -> Result<Self> {
        layout.validate()?;
        if samples.is_empty() {
            return Err(Error::invalid("no training samples"));
        }
        let mut grouped: BTreeMap<(usize, usize), BTreeMap<usize, f64>> = BTreeMap::new();
        for s in samples {
            let source = layout.joint_index(&s.source_levels)?;
            let target = layout.joint_index(&s.target_levels)?;
            *grouped.entry((source, s.k)).or_default().entry(target).or_default() += 1.0;
        }
        let groups: Vec<Group> = grouped
            .into_iter()
            .map(|((source, k), t)| Group {
                source,
                k,
                targets: t.into_iter().collect(),
            })
            .collect();
        let shape = ModelParams::zeros(layout.n_qubits(), n_layers);
        let max_k = groups.iter().map(|g| g.k).max().unwrap_or(0);
        let ops_by_k = (0..=max_k).map(|k| parametric_ops(&shape, k)).collect();
        Ok(Objective {
            layout,
            shape,
            groups,
            n_samples: samples.len() as f64,
            ops_by_k,
        })
    }

    pub fn n_params(&self) -> usize {
        self.shape.n_params()
    }

    fn initial_state(&self, g: &Group) -> StateVector {
        StateVector::basis_index(self.layout.n_qubits(), g.source << self.layout.n_ancilla)
            .expect("layout validated")
    }

    fn target_probs(&self, state: &StateVector) -> Vec<f64> {
        let mut probs = vec![0.0; self.layout.n_joint_states()];
        let shift = self.layout.n_ancilla;
        for (i, a) in state.amplitudes().iter().enumerate() {
            probs[i >> shift] += a.norm_sqr();
        }
        probs
    }

    fn forward(&self, g: &Group, flat: &[f64]) -> StateVector {
        let mut s = self.initial_state(g);
        for op in &self.ops_by_k[g.k] {
            op.apply(&mut s, flat, 0.0);
        }
        s
    }

    fn group_loss(&self, g: &Group, probs: &[f64]) -> f64 {
        g.targets
            .iter()
            .map(|&(t, w)| -w * probs[t].max(PROB_FLOOR).ln())
            .sum::<f64>()
            / self.n_samples
    }

    /// `∂loss/∂p_t` per joint target state; zero where the floor is active.
    fn loss_weights(&self, g: &Group, probs: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; probs.len()];
        for &(t, w) in &g.targets {
            if probs[t] > PROB_FLOOR {
                c[t] = -w / (self.n_samples * probs[t]);
            }
        }
        c
    }

    fn check_flat(&self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        Ok(())
    }

    pub fn loss(&self, flat: &[f64]) -> Result<f64> {
        self.check_flat(flat)?;
        Ok(self
            .groups
            .iter()
            .map(|g| self.group_loss(g, &self.target_probs(&self.forward(g, flat))))
            .sum())
    }

    pub fn loss_and_gradient(&self, flat: &[f64], method: GradientMethod) -> Result<(f64, Vec<f64>)> {
        self.check_flat(flat)?;
        let mut grad = vec![0.0; flat.len()];
        let loss = match method {
            GradientMethod::Adjoint => self.adjoint(flat, &mut grad),
            GradientMethod::ParameterShift => self.parameter_shift(flat, &mut grad),
            GradientMethod::FiniteDifference => self.finite_difference(flat, &mut grad)?,
        };
        if !loss.is_finite() {
            return Err(Error::Numerical {
                step: None,
                param: 0,
                message: format!("loss evaluated to {loss}"),
            });
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical {
                step: None,
                param: i,
                message: format!("gradient component is {}", grad[i]),
            });
        }
        Ok((loss, grad))
    }

    fn adjoint(&self, flat: &[f64], grad: &mut [f64]) -> f64 {
        let shift = self.layout.n_ancilla;
        let mut loss = 0.0;
        for g in &self.groups {
            let mut psi = self.forward(g, flat);
            let probs = self.target_probs(&psi);
            loss += self.group_loss(g, &probs);
            let c = self.loss_weights(g, &probs);
            let mut lambda = psi.clone();
            for (i, a) in lambda.amplitudes_mut().iter_mut().enumerate() {
                *a *= c[i >> shift];
            }
            for op in self.ops_by_k[g.k].iter().rev() {
                if let Op::Rot {
                    axis,
                    qubit,
                    param,
                    scale,
                } = *op
                {
                    grad[param] += scale * lambda.pauli_element(&psi, axis, qubit).im;
                }
                op.apply_inverse(&mut psi, flat);
                op.apply_inverse(&mut lambda, flat);
            }
        }
        loss
    }

    fn parameter_shift(&self, flat: &[f64], grad: &mut [f64]) -> f64 {
        let mut loss = 0.0;
        for g in &self.groups {
            let ops = &self.ops_by_k[g.k];
            let mut prefix = Vec::with_capacity(ops.len());
            let mut s = self.initial_state(g);
            for op in ops {
                prefix.push(s.clone());
                op.apply(&mut s, flat, 0.0);
            }
            let probs = self.target_probs(&s);
            loss += self.group_loss(g, &probs);
            let c = self.loss_weights(g, &probs);
            let linear = |state: &StateVector| -> f64 {
                self.target_probs(state).iter().zip(&c).map(|(p, c)| p * c).sum()
            };
            for (j, op) in ops.iter().enumerate() {
                let Op::Rot { param, scale, .. } = *op else {
                    continue;
                };
                let mut shifted = [0.0; 2];
                for (v, sign) in shifted.iter_mut().zip([1.0, -1.0]) {
                    let mut s = prefix[j].clone();
                    op.apply(&mut s, flat, sign * FRAC_PI_2);
                    for later in &ops[j + 1..] {
                        later.apply(&mut s, flat, 0.0);
                    }
                    *v = linear(&s);
                }
                grad[param] += scale * (shifted[0] - shifted[1]) / 2.0;
            }
        }
        loss
    }

    fn finite_difference(&self, flat: &[f64], grad: &mut [f64]) -> Result<f64> {
        let mut x = flat.to_vec();
        for i in 0..flat.len() {
            x[i] = flat[i] + FD_STEP;
            let up = self.loss(&x)?;
            x[i] = flat[i] - FD_STEP;
            let down = self.loss(&x)?;
            x[i] = flat[i];
            grad[i] = (up - down) / (2.0 * FD_STEP);
        }
        self.loss(flat)
    }
}

pub fn nll_loss(layout: &RegisterLayout, params: &ModelParams, samples: &[TrainingSample]) -> Result<f64> {
    let objective = Objective::new(*layout, params.n_layers, samples)?;
    check_compatible(layout, params)?;
    objective.loss(&params.to_flat())
}

/// Gradient of [`nll_loss`] in [`ModelParams::to_flat`] order.
pub fn gradient(
    layout: &RegisterLayout,
    params: &ModelParams,
    samples: &[TrainingSample],
    method: GradientMethod,
) -> Result<Vec<f64>> {
    let objective = Objective::new(*layout, params.n_layers, samples)?;
    check_compatible(layout, params)?;
    Ok(objective.loss_and_gradient(&params.to_flat(), method)?.1)
}

fn check_compatible(layout: &RegisterLayout, params: &ModelParams) -> Result<()> {
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

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub layout: RegisterLayout,
    pub params: ModelParams,
    /// `(step, loss)` before each update plus the final loss.
    pub loss_history: Vec<(usize, f64)>,
    pub config: TrainingConfig,
    pub seed: u64,
}

impl TrainedModel {
    pub fn initial_loss(&self) -> f64 {
        self.loss_history[0].1
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_history.last().expect("history holds the initial loss").1
    }

    pub fn distribution(&self, levels: &[usize], k: usize) -> Result<Distribution> {
        ansatz::model_distribution(&self.layout, &self.params, levels, k)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::jsonfmt::write_file(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::jsonfmt::read_file(path)
    }
}

/// Uniform(−π, π) angles from the seeded generator, in flat order.
pub fn init_params(layout: &RegisterLayout, n_layers: usize, seed: u64) -> Result<ModelParams> {
    let n = layout.n_qubits();
    let count = ModelParams::zeros(n, n_layers).n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flat: Vec<f64> = (0..count).map(|_| rng.random_range(-PI..PI)).collect();
    ModelParams::from_flat(n, n_layers, &flat)
}

pub fn train(series: &DiscreteSeries, layout: &RegisterLayout, config: &TrainingConfig) -> Result<TrainedModel> {
    layout.validate()?;
    if series.n_assets() != layout.n_assets || series.m != layout.levels_per_asset() {
        return Err(Error::invalid(format!(
            "series has {} assets at {} levels, layout expects {} at {}",
            series.n_assets(),
            series.m,
            layout.n_assets,
            layout.levels_per_asset()
        )));
    }
    config.validate()?;
    let samples = make_training_set(series, config.horizon)?;
    train_on_samples(layout, &samples, config)
}

pub fn train_on_samples(
    layout: &RegisterLayout,
    samples: &[TrainingSample],
    config: &TrainingConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    let objective = Objective::new(*layout, config.n_layers, samples)?;
    let init = init_params(layout, config.n_layers, config.seed)?;
    let mut flat = init.to_flat();
    let mut adam = Adam::new(flat.len(), config.learning_rate);
    let mut history = Vec::with_capacity(config.n_steps + 1);
    let at_step = |step: usize| {
        move |e: Error| match e {
            Error::Numerical { param, message, .. } => Error::Numerical {
                step: Some(step),
                param,
                message,
            },
            other => other,
        }
    };
    for step in 0..config.n_steps {
        let (loss, grad) = objective
            .loss_and_gradient(&flat, config.gradient_method)
            .map_err(at_step(step))?;
        history.push((step, loss));
        adam.step(&mut flat, &grad);
    }
    let final_loss = objective.loss(&flat)?;
    if !final_loss.is_finite() {
        return Err(Error::Numerical {
            step: Some(config.n_steps),
            param: 0,
            message: format!("final loss is {final_loss}"),
        });
    }
    history.push((config.n_steps, final_loss));
    Ok(TrainedModel {
        layout: *layout,
        params: ModelParams::from_flat(layout.n_qubits(), config.n_layers, &flat)?,
        loss_history: history,
        config: config.clone(),
        seed: config.seed,
    })
}

/// Column-stochastic one-step matrix: column `j` is the model distribution
/// after one step from joint state `j`.
pub fn extract_transition_matrix(model: &TrainedModel) -> Result<DMatrix<f64>> {
    let layout = &model.layout;
    let dim = layout.n_joint_states();
    let mut t = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let d = model.distribution(&layout.split_joint(j), 1)?;
        for (i, &p) in d.probs().iter().enumerate() {
            t[(i, j)] = p;
        }
    }
    Ok(t)
}
