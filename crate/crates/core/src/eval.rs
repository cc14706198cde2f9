//! Forecasting and imputation experiments: metrics, level and point
//! prediction, entanglement traces, multi-seed aggregation and the report.

use serde::{Deserialize, Serialize};

use crate::ansatz::{evolve_k_steps, RegisterLayout};
use crate::baselines::{fit_var, forecast_var, naive_forecast, DEFAULT_MAX_LAGS};
use crate::error::{Error, Result};
use crate::market::{compound, log_returns, DatasetSplit, SourceDomain, Task};
use crate::model::{train, TrainedModel, TrainingConfig};
use crate::qsim::{von_neumann_entropy, Distribution};

pub const DEFAULT_ANCILLA: usize = 4;
pub const DEFAULT_ENTROPY_STEPS: usize = 5;
pub const IMPUTATION_LAYERS: [usize; 2] = [1, 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum D1Variant {
    /// Divided by the sequence length.
    Mean,
    /// Plain accumulated distance.
    Sum,
}

pub fn mse_price(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} actual values",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::invalid("mse of empty series"));
    }
    let s: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a).powi(2)).sum();
    Ok(s / predicted.len() as f64)
}

fn abs_diffs(x: &[usize], y: &[usize], n_levels: usize) -> Result<Vec<usize>> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("level sequences of length {} and {}", x.len(), y.len())));
    }
    if let Some(&l) = x.iter().chain(y).find(|&&l| l >= n_levels) {
        return Err(Error::invalid(format!("level {l} outside 0..{n_levels}")));
    }
    Ok(x.iter().zip(y).map(|(&a, &b)| a.abs_diff(b)).collect())
}

/// Manhattan distance between two level sequences.
pub fn manhattan_d1(x: &[usize], y: &[usize], n_levels: usize, variant: D1Variant) -> Result<f64> {
    let d = abs_diffs(x, y, n_levels)?;
    let sum = d.iter().sum::<usize>() as f64;
    match variant {
        D1Variant::Sum => Ok(sum),
        D1Variant::Mean if d.is_empty() => Err(Error::invalid("mean distance of empty sequences")),
        D1Variant::Mean => Ok(sum / d.len() as f64),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CumulativeFit {
    pub slope: f64,
    pub r_squared: f64,
    /// `C_j = Σ_{i ≤ j} |x_i − y_i|`.
    pub curve: Vec<f64>,
}

/// Least-squares line through the cumulative distance `C_j` against
/// `j = 1..n`.
pub fn cumulative_fit(x: &[usize], y: &[usize], n_levels: usize) -> Result<CumulativeFit> {
    let d = abs_diffs(x, y, n_levels)?;
    if d.len() < 2 {
        return Err(Error::invalid("cumulative fit needs at least two steps"));
    }
    let curve: Vec<f64> = d
        .iter()
        .scan(0usize, |acc, &v| {
            *acc += v;
            Some(*acc as f64)
        })
        .collect();
    let n = curve.len() as f64;
    let j_mean = (n + 1.0) / 2.0;
    let c_mean = curve.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (i, c) in curve.iter().enumerate() {
        let dj = (i + 1) as f64 - j_mean;
        let dc = c - c_mean;
        sxx += dj * dj;
        sxy += dj * dc;
        syy += dc * dc;
    }
    let slope = sxy / sxx;
    let intercept = c_mean - slope * j_mean;
    let ss_res: f64 = curve
        .iter()
        .enumerate()
        .map(|(i, c)| (c - (slope * (i + 1) as f64 + intercept)).powi(2))
        .sum();
    let r_squared = if syy == 0.0 {
        if ss_res != 0.0 {
            return Err(Error::invalid("flat cumulative curve with nonzero residuals"));
        }
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(CumulativeFit { slope, r_squared, curve })
}

/// Per-asset marginals for `k = 1..=horizon`, indexed `[k − 1][asset]`.
fn marginals(model: &TrainedModel, initial_levels: &[usize], horizon: usize) -> Result<Vec<Vec<Distribution>>> {
    (1..=horizon)
        .map(|k| Ok(model.layout.asset_marginals(&model.distribution(initial_levels, k)?)))
        .collect()
}

fn argmax_levels(m: &[Vec<Distribution>], n_assets: usize) -> Vec<Vec<usize>> {
    (0..n_assets).map(|a| m.iter().map(|step| step[a].argmax()).collect()).collect()
}

fn expectations(m: &[Vec<Distribution>], representatives: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    representatives
        .iter()
        .enumerate()
        .map(|(a, reps)| {
            m.iter()
                .map(|step| {
                    let p = step[a].probs();
                    if p.len() != reps.len() {
                        return Err(Error::invalid(format!(
                            "{} representatives for {} levels",
                            reps.len(),
                            p.len()
                        )));
                    }
                    Ok(p.iter().zip(reps).map(|(p, r)| p * r).sum())
                })
                .collect()
        })
        .collect()
}

/// Most likely level of each asset after `k = 1..=horizon` steps from
/// `initial_levels`, as `[asset][k − 1]`. Ties go to the lower level.
pub fn predict_levels(model: &TrainedModel, initial_levels: &[usize], horizon: usize) -> Result<Vec<Vec<usize>>> {
    let m = marginals(model, initial_levels, horizon)?;
    Ok(argmax_levels(&m, model.layout.n_assets))
}

/// Expected bin representative of each asset per step, as `[asset][k − 1]`.
pub fn predict_point_values(
    model: &TrainedModel,
    initial_levels: &[usize],
    horizon: usize,
    representatives: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    if representatives.len() != model.layout.n_assets {
        return Err(Error::invalid("one representative list per asset is required"));
    }
    expectations(&marginals(model, initial_levels, horizon)?, representatives)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyTrace {
    /// Entropy in bits of the first asset's register after `t = 1..` steps.
    pub entropy_bits: Vec<f64>,
    pub max_bits: f64,
}

pub fn entropy_trace(model: &TrainedModel, initial_levels: &[usize], steps: usize) -> Result<EntropyTrace> {
    let kept = model.layout.asset_qubits(0);
    let entropy_bits = (1..=steps)
        .map(|t| {
            let psi = evolve_k_steps(&model.layout, &model.params, initial_levels, t)?;
            von_neumann_entropy(&psi.reduced_density_matrix(&kept)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(EntropyTrace {
        entropy_bits,
        max_bits: kept.len() as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub training: TrainingConfig,
    pub n_ancilla: usize,
    pub max_lags: usize,
    pub entropy_steps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            training: TrainingConfig::default(),
            n_ancilla: DEFAULT_ANCILLA,
            max_lags: DEFAULT_MAX_LAGS,
            entropy_steps: DEFAULT_ENTROPY_STEPS,
        }
    }
}

impl ExperimentConfig {
    /// Seeds `seed, seed + 1, …` for the configured number of runs.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.training.n_runs as u64).map(|i| self.training.seed + i).collect()
    }
}

/// Register layout matching a split's asset count and level count.
pub fn layout_for(split: &DatasetSplit, n_ancilla: usize) -> Result<RegisterLayout> {
    let m = split.train.m;
    if !m.is_power_of_two() || m < 2 {
        return Err(Error::invalid(format!("{m} levels is not a power of two")));
    }
    RegisterLayout::new(split.train.n_assets(), m.trailing_zeros() as usize, n_ancilla)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation; 0 for a single run.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Stat { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    /// `[asset][step]`.
    pub predicted_levels: Vec<Vec<usize>>,
    pub predicted_prices: Vec<Vec<f64>>,
    pub mse: Vec<f64>,
    pub d1_mean: Vec<f64>,
    pub d1_sum: Vec<f64>,
    pub cumulative: Vec<CumulativeFit>,
    pub entropy: EntropyTrace,
    pub loss_history: Vec<(usize, f64)>,
}

impl SeedResult {
    pub fn initial_loss(&self) -> f64 {
        self.loss_history[0].1
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_history[self.loss_history.len() - 1].1
    }

    /// Sum-variant distance averaged over assets.
    pub fn d1_sum_mean_over_assets(&self) -> f64 {
        self.d1_sum.iter().sum::<f64>() / self.d1_sum.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Failure message when training or evaluation failed.
    pub error: Option<String>,
    pub result: Option<SeedResult>,
}

/// Mean and spread across successful seeds, per asset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_succeeded: usize,
    pub n_failed: usize,
    pub mse: Vec<Stat>,
    pub d1_mean: Vec<Stat>,
    pub d1_sum: Vec<Stat>,
    pub slope: Vec<Stat>,
    pub r_squared: Vec<Stat>,
    pub final_loss: Stat,
}

impl Aggregate {
    pub fn from_outcomes(outcomes: &[SeedOutcome]) -> Result<Aggregate> {
        let ok: Vec<&SeedResult> = outcomes.iter().filter_map(|o| o.result.as_ref()).collect();
        if ok.is_empty() {
            return Err(Error::invalid("every seed failed"));
        }
        let n_assets = ok[0].mse.len();
        let per_asset = |f: &dyn Fn(&SeedResult, usize) -> f64| -> Vec<Stat> {
            (0..n_assets)
                .map(|a| Stat::of(&ok.iter().map(|r| f(r, a)).collect::<Vec<_>>()))
                .collect()
        };
        Ok(Aggregate {
            n_succeeded: ok.len(),
            n_failed: outcomes.len() - ok.len(),
            mse: per_asset(&|r, a| r.mse[a]),
            d1_mean: per_asset(&|r, a| r.d1_mean[a]),
            d1_sum: per_asset(&|r, a| r.d1_sum[a]),
            slope: per_asset(&|r, a| r.cumulative[a].slope),
            r_squared: per_asset(&|r, a| r.cumulative[a].r_squared),
            final_loss: Stat::of(&ok.iter().map(|r| r.final_loss()).collect::<Vec<_>>()),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub n_layers: usize,
    pub seeds: Vec<SeedOutcome>,
    pub aggregate: Aggregate,
}

impl ModelRun {
    pub fn successful(&self) -> impl Iterator<Item = &SeedResult> {
        self.seeds.iter().filter_map(|s| s.result.as_ref())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub method: String,
    pub error: Option<String>,
    /// Selected lag order for VAR.
    pub order: Option<usize>,
    pub predicted_levels: Vec<Vec<usize>>,
    pub predicted_prices: Vec<Vec<f64>>,
    pub mse: Vec<f64>,
    pub d1_mean: Vec<f64>,
    pub d1_sum: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub task: Task,
    pub asset_ids: Vec<String>,
    pub horizon: usize,
    pub config: ExperimentConfig,
    pub actual_levels: Vec<Vec<usize>>,
    pub actual_prices: Vec<Vec<f64>>,
    pub models: Vec<ModelRun>,
    pub baselines: Vec<BaselineResult>,
}

impl EvalReport {
    pub fn n_failed_seeds(&self) -> usize {
        self.models.iter().map(|m| m.aggregate.n_failed).sum()
    }

    pub fn model(&self, n_layers: usize) -> Option<&ModelRun> {
        self.models.iter().find(|m| m.n_layers == n_layers)
    }

    pub fn to_json(&self) -> Result<String> {
        crate::jsonfmt::to_string(self)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        crate::jsonfmt::write_file(path, self)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        crate::jsonfmt::read_file(path)
    }
}

fn reconstruct(split: &DatasetSplit, values: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    match split.train.source_domain {
        SourceDomain::RawPrices => values,
        SourceDomain::LogReturns => split
            .last_prices()
            .iter()
            .zip(&values)
            .map(|(&p, r)| compound(p, r))
            .collect(),
    }
}

fn distances(
    split: &DatasetSplit,
    levels: &[Vec<usize>],
    prices: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let m = split.train.m;
    let mut mse = Vec::new();
    let mut d1_mean = Vec::new();
    let mut d1_sum = Vec::new();
    for a in 0..levels.len() {
        mse.push(mse_price(&prices[a], &split.holdout.prices[a])?);
        d1_mean.push(manhattan_d1(&levels[a], &split.holdout.levels[a], m, D1Variant::Mean)?);
        d1_sum.push(manhattan_d1(&levels[a], &split.holdout.levels[a], m, D1Variant::Sum)?);
    }
    Ok((mse, d1_mean, d1_sum))
}

/// Scores one trained model against the split's holdout span.
pub fn evaluate_model(split: &DatasetSplit, model: &TrainedModel, entropy_steps: usize) -> Result<SeedResult> {
    let horizon = split.holdout.len();
    let initial = split.initial_levels();
    let m = marginals(model, &initial, horizon)?;
    let predicted_levels = argmax_levels(&m, model.layout.n_assets);
    let reps: Vec<Vec<f64>> = split.train.bins.iter().map(|b| b.representatives.clone()).collect();
    let predicted_prices = reconstruct(split, expectations(&m, &reps)?);
    let (mse, d1_mean, d1_sum) = distances(split, &predicted_levels, &predicted_prices)?;
    let cumulative = predicted_levels
        .iter()
        .zip(&split.holdout.levels)
        .map(|(x, y)| cumulative_fit(x, y, split.train.m))
        .collect::<Result<Vec<_>>>()?;
    Ok(SeedResult {
        predicted_levels,
        predicted_prices,
        mse,
        d1_mean,
        d1_sum,
        cumulative,
        entropy: entropy_trace(model, &initial, entropy_steps)?,
        loss_history: model.loss_history.clone(),
    })
}

/// Result of training one seed; the error is kept as text so failed seeds can
/// be reported alongside the rest.
pub type SeedTraining = (u64, std::result::Result<TrainedModel, String>);

/// Trains one model per configured seed with `n_layers` layers.
pub fn train_seeds(split: &DatasetSplit, config: &ExperimentConfig, n_layers: usize) -> Result<Vec<SeedTraining>> {
    let layout = layout_for(split, config.n_ancilla)?;
    Ok(config
        .seeds()
        .into_iter()
        .map(|seed| {
            let tc = TrainingConfig {
                seed,
                n_layers,
                ..config.training.clone()
            };
            (seed, train(&split.train, &layout, &tc).map_err(|e| e.to_string()))
        })
        .collect())
}

/// Scores a set of trained seeds that share a layer count.
pub fn evaluate_run(split: &DatasetSplit, runs: &[SeedTraining], entropy_steps: usize) -> Result<ModelRun> {
    let n_layers = runs
        .iter()
        .find_map(|(_, r)| r.as_ref().ok().map(|m| m.params.n_layers))
        .ok_or_else(|| Error::invalid("every seed failed"))?;
    let seeds: Vec<SeedOutcome> = runs
        .iter()
        .map(|(seed, r)| {
            let scored = r
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|m| evaluate_model(split, m, entropy_steps).map_err(|e| e.to_string()));
            match scored {
                Ok(res) => SeedOutcome {
                    seed: *seed,
                    error: None,
                    result: Some(res),
                },
                Err(e) => SeedOutcome {
                    seed: *seed,
                    error: Some(e),
                    result: None,
                },
            }
        })
        .collect();
    Ok(ModelRun {
        n_layers,
        aggregate: Aggregate::from_outcomes(&seeds)?,
        seeds,
    })
}

fn baseline_result(split: &DatasetSplit, method: &str, order: Option<usize>, returns: Vec<Vec<f64>>) -> Result<BaselineResult> {
    let predicted_levels: Vec<Vec<usize>> = returns
        .iter()
        .zip(&split.train.bins)
        .map(|(r, b)| r.iter().map(|&v| b.level_of(v)).collect())
        .collect();
    let predicted_prices = reconstruct(split, returns);
    let (mse, d1_mean, d1_sum) = distances(split, &predicted_levels, &predicted_prices)?;
    Ok(BaselineResult {
        method: method.into(),
        error: None,
        order,
        predicted_levels,
        predicted_prices,
        mse,
        d1_mean,
        d1_sum,
    })
}

fn failed_baseline(method: &str, e: Error) -> BaselineResult {
    BaselineResult {
        method: method.into(),
        error: Some(e.to_string()),
        order: None,
        predicted_levels: Vec::new(),
        predicted_prices: Vec::new(),
        mse: Vec::new(),
        d1_mean: Vec::new(),
        d1_sum: Vec::new(),
    }
}

/// VAR on the training window's log returns, forecast over the holdout and
/// compounded from the last training price.
pub fn var_baseline(split: &DatasetSplit, max_lags: usize) -> Result<BaselineResult> {
    require_forecast(split)?;
    let returns = split
        .train_prices
        .iter()
        .map(|p| log_returns(p))
        .collect::<Result<Vec<_>>>()?;
    let model = fit_var(&returns, max_lags)?;
    let f = forecast_var(&model, &returns, split.holdout.len())?;
    baseline_result(split, "var", Some(model.p), f)
}

/// Last training price held flat over the holdout.
pub fn naive_baseline(split: &DatasetSplit) -> Result<BaselineResult> {
    require_forecast(split)?;
    let horizon = split.holdout.len();
    let prices = split
        .train_prices
        .iter()
        .map(|p| naive_forecast(p, horizon))
        .collect::<Result<Vec<_>>>()?;
    let predicted_levels = prices
        .iter()
        .zip(&split.train.bins)
        .map(|(p, b)| vec![b.level_of(0.0); p.len()])
        .collect::<Vec<_>>();
    let (mse, d1_mean, d1_sum) = distances(split, &predicted_levels, &prices)?;
    Ok(BaselineResult {
        method: "naive".into(),
        error: None,
        order: None,
        predicted_levels,
        predicted_prices: prices,
        mse,
        d1_mean,
        d1_sum,
    })
}

fn require_forecast(split: &DatasetSplit) -> Result<()> {
    if split.task != Task::Forecast {
        return Err(Error::invalid(format!("{} is not a forecast split", split.name)));
    }
    Ok(())
}

fn require_impute(split: &DatasetSplit) -> Result<()> {
    if split.task != Task::Impute || split.train.observed.iter().all(|&o| o) {
        return Err(Error::invalid(format!("{} is not an imputation split with a mask", split.name)));
    }
    Ok(())
}

fn report(split: &DatasetSplit, config: &ExperimentConfig, models: Vec<ModelRun>, baselines: Vec<BaselineResult>) -> EvalReport {
    EvalReport {
        dataset: split.name.clone(),
        task: split.task,
        asset_ids: split.asset_ids.clone(),
        horizon: split.holdout.len(),
        config: config.clone(),
        actual_levels: split.holdout.levels.clone(),
        actual_prices: split.holdout.prices.clone(),
        models,
        baselines,
    }
}

/// Assembles a report from already trained runs (one entry per layer count).
/// Forecast splits also get the VAR and naive baselines.
pub fn build_report(split: &DatasetSplit, config: &ExperimentConfig, runs: &[Vec<SeedTraining>]) -> Result<EvalReport> {
    let models = runs
        .iter()
        .map(|r| evaluate_run(split, r, config.entropy_steps))
        .collect::<Result<Vec<_>>>()?;
    let baselines = match split.task {
        Task::Forecast => vec![
            var_baseline(split, config.max_lags).unwrap_or_else(|e| failed_baseline("var", e)),
            naive_baseline(split).unwrap_or_else(|e| failed_baseline("naive", e)),
        ],
        Task::Impute => Vec::new(),
    };
    Ok(report(split, config, models, baselines))
}

pub fn run_forecast_experiment(split: &DatasetSplit, config: &ExperimentConfig) -> Result<EvalReport> {
    require_forecast(split)?;
    config.training.validate()?;
    let runs = train_seeds(split, config, config.training.n_layers)?;
    build_report(split, config, &[runs])
}

/// Trains and scores one run per layer count; no baselines apply.
pub fn run_imputation_experiment(split: &DatasetSplit, config: &ExperimentConfig, layers: &[usize]) -> Result<EvalReport> {
    require_impute(split)?;
    config.training.validate()?;
    if layers.is_empty() {
        return Err(Error::invalid("no layer counts given"));
    }
    let runs = layers
        .iter()
        .map(|&l| train_seeds(split, config, l))
        .collect::<Result<Vec<_>>>()?;
    build_report(split, config, &runs)
}
