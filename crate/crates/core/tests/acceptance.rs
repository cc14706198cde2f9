//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use num_complex::Complex64;
use qtsgen::ansatz::{build_sigma, build_v, build_v_dagger, ModelParams, RegisterLayout};
use qtsgen::eval::*;
use qtsgen::market::{self, make_forecast_split, make_imputation_split, AlignedPrices, DiscreteSeries};
use qtsgen::model::{extract_transition_matrix, gradient, train, GradientMethod, TrainedModel, TrainingConfig, TrainingSample};
use qtsgen::plot::write_plots;
use qtsgen::qsim::{von_neumann_entropy, Gate, StateVector};
use qtsgen::synthetic::{correlated_walks, markov_chain, simulate_var, WalkSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const YEAR: i32 = 2016;
const SEEDS: usize = 5;

struct Outcome {
    failures: Vec<usize>,
}

impl Outcome {
    fn record(&mut self, id: usize, name: &str, pass: bool, detail: String) {
        println!("[{}] {id}. {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures.push(id);
        }
    }
}

fn random_params(n: usize, layers: usize, rng: &mut ChaCha8Rng) -> ModelParams {
    let count = ModelParams::zeros(n, layers).n_params();
    let flat: Vec<f64> = (0..count).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
    ModelParams::from_flat(n, layers, &flat).unwrap()
}

fn random_state(n: usize, rng: &mut ChaCha8Rng) -> StateVector {
    let amps: Vec<Complex64> = (0..1 << n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    StateVector::from_amplitudes(amps.into_iter().map(|a| a / norm).collect()).unwrap()
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn diagonal_circuit(p: &ModelParams, k: usize) -> Vec<Gate> {
    let mut g = build_v_dagger(p).unwrap();
    g.extend(build_sigma(p, k));
    g.extend(build_v(p).unwrap());
    g
}

fn criterion_1(out: &mut Outcome) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 8;
    let mut worst = 0.0f64;
    for layers in [1, 2, 3] {
        let p = random_params(n, layers, &mut rng);
        let step = diagonal_circuit(&p, 1);
        let s0 = random_state(n, &mut rng);
        let mut seq = s0.clone();
        for k in 0..=5 {
            let direct = s0.apply_circuit(&diagonal_circuit(&p, k)).unwrap();
            worst = worst.max(max_diff(direct.amplitudes(), seq.amplitudes()));
            seq = seq.apply_circuit(&step).unwrap();
        }
    }
    let t = start.elapsed();
    out.record(
        1,
        "diagonalization identity",
        worst <= 1e-9 && t < Duration::from_secs(1),
        format!("max amplitude difference {worst:.2e} (tol 1e-9), {:.3} s (limit 1 s)", t.as_secs_f64()),
    );
}

fn criterion_2(out: &mut Outcome) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let layout = RegisterLayout::new(2, 2, 2).unwrap();
    let p = random_params(layout.n_qubits(), 2, &mut rng);
    let samples: Vec<TrainingSample> = (0..20)
        .map(|_| TrainingSample {
            source_levels: vec![rng.random_range(0..4), rng.random_range(0..4)],
            target_levels: vec![rng.random_range(0..4), rng.random_range(0..4)],
            k: rng.random_range(1..=10),
        })
        .collect();
    let ps = gradient(&layout, &p, &samples, GradientMethod::ParameterShift).unwrap();
    let fd = gradient(&layout, &p, &samples, GradientMethod::FiniteDifference).unwrap();
    let worst = ps.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let gamma_start = p.gamma_index(0);
    let gamma_worst = ps[gamma_start..].iter().zip(&fd[gamma_start..]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let t = start.elapsed();
    out.record(
        2,
        "parameter-shift gradient",
        worst <= 1e-5 && t < Duration::from_secs(30),
        format!(
            "{} params, max |shift - fd| {worst:.2e} (gamma {gamma_worst:.2e}, tol 1e-5), {:.2} s (limit 30 s)",
            ps.len(),
            t.as_secs_f64()
        ),
    );
}

fn criterion_3(out: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut worst_norm = 0.0f64;
    let mut cases = 0;
    for n in 1..=4 {
        for _ in 0..50 {
            let gates: Vec<Gate> = (0..16)
                .map(|_| {
                    let q = rng.random_range(0..n);
                    let a = rng.random_range(-4.0..4.0);
                    match rng.random_range(0..6) {
                        0 => Gate::X(q),
                        1 => Gate::RX(q, a),
                        2 => Gate::RY(q, a),
                        3 => Gate::RZ(q, a),
                        4 => Gate::Rot(q, [a, -0.5 * a, 1.3]),
                        _ if n > 1 => Gate::CNOT {
                            control: q,
                            target: (q + rng.random_range(1..n)) % n,
                        },
                        _ => Gate::RY(q, a),
                    }
                })
                .collect();
            let s = random_state(n, &mut rng);
            let fast = s.apply_circuit(&gates).unwrap();
            let u = common::dense_circuit(n, &gates);
            let dense: Vec<Complex64> = (u * DVector::from_column_slice(s.amplitudes())).iter().copied().collect();
            worst = worst.max(max_diff(fast.amplitudes(), &dense));
            worst_norm = worst_norm.max((fast.norm_sqr() - 1.0).abs());
            cases += 1;
        }
    }
    out.record(
        3,
        "simulator vs dense Kronecker oracle",
        worst <= 1e-10 && worst_norm <= 1e-10,
        format!("{cases} circuits on 1..4 qubits, max difference {worst:.2e}, max norm drift {worst_norm:.2e} (tol 1e-10)"),
    );
}

fn criterion_4(out: &mut Outcome) {
    let start = Instant::now();
    let truth = common::markov_truth();
    let layout = RegisterLayout::new(1, 2, 4).unwrap();
    let mut tvs = Vec::new();
    for seed in 0..SEEDS as u64 {
        let chain = markov_chain(&truth, 0, 500, 100 + seed).unwrap();
        let series = DiscreteSeries::from_levels(vec![chain], 4).unwrap();
        let config = TrainingConfig {
            learning_rate: 0.1,
            n_steps: 300,
            n_layers: 3,
            horizon: 1,
            seed,
            ..TrainingConfig::default()
        };
        let model = train(&series, &layout, &config).unwrap();
        tvs.push(common::max_column_tv(&extract_transition_matrix(&model).unwrap(), &truth));
    }
    let ok = tvs.iter().filter(|&&tv| tv <= 0.1).count();
    let t = start.elapsed();
    out.record(
        4,
        "Markov recovery",
        ok >= 4 && t < Duration::from_secs(600),
        format!(
            "max column TV per seed {:?}, {ok}/5 within 0.1 (need 4), {:.1} s (limit 600 s)",
            tvs.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(),
            t.as_secs_f64()
        ),
    );
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn experiment_config() -> ExperimentConfig {
    ExperimentConfig {
        training: TrainingConfig {
            n_runs: SEEDS,
            n_layers: 1,
            ..TrainingConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

struct Pipeline {
    forecast: EvalReport,
    imputation: EvalReport,
    forecast_json: String,
    elapsed: Duration,
    n_files: usize,
}

fn pipeline(dir: &std::path::Path) -> Pipeline {
    let start = Instant::now();
    let a = market::load_csv(data_dir().join("SYNA.csv")).unwrap();
    let b = market::load_csv(data_dir().join("SYNB.csv")).unwrap();
    let dataset = dir.join("dataset.json");
    market::align(&a, &b).unwrap().save(&dataset).unwrap();
    let pair = AlignedPrices::load(&dataset).unwrap();
    let config = experiment_config();
    let forecast = run_forecast_experiment(&make_forecast_split(&pair, YEAR, 2).unwrap(), &config).unwrap();
    let split = make_imputation_split(&pair, YEAR, 2, market::DEFAULT_MASK_START, market::DEFAULT_MASK_LEN).unwrap();
    let imputation = run_imputation_experiment(&split, &config, &IMPUTATION_LAYERS).unwrap();
    forecast.save(dir.join("forecast.json")).unwrap();
    imputation.save(dir.join("impute.json")).unwrap();
    let mut n_files = write_plots(&forecast, dir.join("plots_forecast")).unwrap().len();
    n_files += write_plots(&imputation, dir.join("plots_impute")).unwrap().len();
    Pipeline {
        forecast_json: std::fs::read_to_string(dir.join("forecast.json")).unwrap(),
        forecast,
        imputation,
        elapsed: start.elapsed(),
        n_files,
    }
}

fn criterion_5(out: &mut Outcome, p: &Pipeline) {
    let pairs: Vec<(f64, f64)> = p.forecast.models[0].successful().map(|r| (r.initial_loss(), r.final_loss())).collect();
    let ok = pairs.iter().filter(|(i, f)| f < i).count();
    out.record(
        5,
        "loss convergence",
        ok == SEEDS && pairs.len() == SEEDS,
        format!(
            "initial -> final per seed {:?}, {ok}/5 decreased",
            pairs.iter().map(|(i, f)| format!("{i:.3}->{f:.3}")).collect::<Vec<_>>()
        ),
    );
}

fn criterion_6(out: &mut Outcome, p: &Pipeline) {
    let layout = RegisterLayout::two_assets();
    let zero = TrainedModel {
        layout,
        params: ModelParams::zeros(layout.n_qubits(), 1),
        loss_history: vec![(0, 0.0)],
        config: TrainingConfig::default(),
        seed: 0,
    };
    let mut zero_worst = 0.0f64;
    for levels in [[0, 0], [1, 3], [2, 1], [3, 3]] {
        let trace = entropy_trace(&zero, &levels, 5).unwrap();
        zero_worst = trace.entropy_bits.iter().fold(zero_worst, |m, e| m.max(e.abs()));
    }
    // RY(π/2) then CNOT makes a Bell pair between qubit 1 (first asset) and
    // qubit 2 (second asset)
    let bell = StateVector::basis_index(8, 0)
        .unwrap()
        .apply_circuit(&[
            Gate::RY(1, std::f64::consts::FRAC_PI_2),
            Gate::CNOT { control: 1, target: 2 },
        ])
        .unwrap();
    let bell_entropy = von_neumann_entropy(&bell.reduced_density_matrix(&[0, 1]).unwrap()).unwrap();
    let trained: Vec<f64> = p
        .forecast
        .models
        .iter()
        .chain(&p.imputation.models)
        .flat_map(|m| m.successful().flat_map(|r| r.entropy.entropy_bits.clone()))
        .collect();
    let max_trained = trained.iter().copied().fold(0.0, f64::max);
    let min_trained = trained.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = zero_worst <= 1e-9 && (bell_entropy - 1.0).abs() <= 1e-9 && max_trained <= 2.0 && min_trained >= 0.0 && max_trained > 0.05;
    out.record(
        6,
        "entropy checks",
        pass,
        format!(
            "zero-parameter max {zero_worst:.1e} (tol 1e-9), Bell cut {bell_entropy:.12} (target 1 +- 1e-9), \
             trained range [{min_trained:.4}, {max_trained:.4}] over {} values (bound 2, need some > 0.05)",
            trained.len()
        ),
    );
}

fn criterion_7(out: &mut Outcome) {
    let a = vec![
        vec![vec![0.5, 0.1], vec![0.0, 0.4]],
        vec![vec![0.25, 0.0], vec![0.1, -0.3]],
    ];
    let mut orders = Vec::new();
    let mut var_se = 0.0;
    let mut naive_se = 0.0;
    for trial in 0..5 {
        let cols = simulate_var(&a, &[0.2, -0.1], 1.0, 1010, 1000 + trial);
        let train_cols: Vec<Vec<f64>> = cols.iter().map(|c| c[..1000].to_vec()).collect();
        let model = qtsgen::baselines::fit_var(&train_cols, qtsgen::baselines::DEFAULT_MAX_LAGS).unwrap();
        orders.push(model.p);
        let f = qtsgen::baselines::forecast_var(&model, &train_cols, 10).unwrap();
        for v in 0..2 {
            let actual = &cols[v][1000..];
            var_se += mse_price(&f[v], actual).unwrap();
            let naive = qtsgen::baselines::naive_forecast(&train_cols[v], 10).unwrap();
            naive_se += mse_price(&naive, actual).unwrap();
        }
    }
    let hits = orders.iter().filter(|&&p| p == 2).count();
    let (var_mse, naive_mse) = (var_se / 10.0, naive_se / 10.0);
    out.record(
        7,
        "VAR baseline",
        hits >= 4 && var_mse < naive_mse,
        format!("selected orders {orders:?} ({hits}/5 chose 2, need 4); 10-step MSE var {var_mse:.4} vs naive {naive_mse:.4}"),
    );
}

fn criterion_8(out: &mut Outcome, p: &Pipeline) {
    let mut ok = true;
    let mut notes = Vec::new();
    let x = [0, 1, 2, 3, 0, 1, 2, 3, 0, 1];
    let cases: [(&[usize], &[usize], f64, f64); 3] = [
        (&x, &x, 0.0, 0.0),
        (&[0; 10], &[3; 10], 30.0, 3.0),
        // |x - 1| = 1,0,1,2,1,0,1,2,1,0
        (&x, &[1; 10], 9.0, 0.9),
    ];
    for (a, b, sum, mean) in cases {
        let s = manhattan_d1(a, b, 4, D1Variant::Sum).unwrap();
        let m = manhattan_d1(a, b, 4, D1Variant::Mean).unwrap();
        ok &= s == sum && m == mean;
        notes.push(format!("({s}, {m})"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut fit_err = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..40);
        let xs: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let ys: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let fit = cumulative_fit(&xs, &ys, 4).unwrap();
        let nf = n as f64;
        let c = &fit.curve;
        let sj: f64 = (1..=n).map(|j| j as f64).sum();
        let sjj: f64 = (1..=n).map(|j| (j * j) as f64).sum();
        let sc: f64 = c.iter().sum();
        let scc: f64 = c.iter().map(|v| v * v).sum();
        let sjc: f64 = c.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
        let slope = (nf * sjc - sj * sc) / (nf * sjj - sj * sj);
        let denom = (nf * sjj - sj * sj) * (nf * scc - sc * sc);
        let r2 = if denom == 0.0 { 1.0 } else { (nf * sjc - sj * sc).powi(2) / denom };
        fit_err = fit_err.max((fit.slope - slope).abs()).max((fit.r_squared - r2).abs());
    }
    ok &= fit_err <= 1e-9;
    let mut ratio_ok = true;
    let mut checked = 0;
    for report in [&p.forecast, &p.imputation] {
        for r in report.models.iter().flat_map(|m| m.successful()) {
            for (s, m) in r.d1_sum.iter().zip(&r.d1_mean) {
                ratio_ok &= *s == 10.0 * m;
                checked += 1;
            }
        }
        for b in &report.baselines {
            for (s, m) in b.d1_sum.iter().zip(&b.d1_mean) {
                ratio_ok &= *s == 10.0 * m;
                checked += 1;
            }
        }
    }
    ok &= ratio_ok;
    out.record(
        8,
        "metrics",
        ok,
        format!(
            "D1 (sum, mean) hand cases {} ; cumulative fit max deviation from closed form {fit_err:.1e} (tol 1e-9); \
             sum == 10 x mean in {checked} horizon-10 results: {ratio_ok}",
            notes.join(" ")
        ),
    );
}

fn d1_spread(run: &ModelRun) -> f64 {
    let per_seed: Vec<f64> = run.successful().map(|r| r.d1_sum_mean_over_assets()).collect();
    Stat::of(&per_seed).std
}

fn criterion_9(out: &mut Outcome, p: &Pipeline) {
    let start = Instant::now();
    let means: Vec<(usize, Vec<f64>)> = p
        .imputation
        .models
        .iter()
        .map(|m| (m.n_layers, m.aggregate.d1_sum.iter().map(|s| s.mean).collect()))
        .collect();
    let mean_ok = means.iter().all(|(_, v)| v.iter().all(|&d| d <= 20.0));
    let mut spreads = vec![(d1_spread(p.imputation.model(1).unwrap()), d1_spread(p.imputation.model(3).unwrap()))];
    let config = experiment_config();
    for r in 1..5u64 {
        let spec = WalkSpec {
            seed: WalkSpec::default().seed + r,
            ..WalkSpec::default()
        };
        let (a, b) = correlated_walks(&spec).unwrap();
        let pair = market::align(&a, &b).unwrap();
        let split = make_imputation_split(&pair, YEAR, 2, market::DEFAULT_MASK_START, market::DEFAULT_MASK_LEN).unwrap();
        let report = run_imputation_experiment(&split, &config, &IMPUTATION_LAYERS).unwrap();
        spreads.push((d1_spread(report.model(1).unwrap()), d1_spread(report.model(3).unwrap())));
    }
    let narrower = spreads.iter().filter(|(l1, l3)| l3 <= l1).count();
    let total = p.elapsed + start.elapsed();
    out.record(
        9,
        "end-to-end desk run",
        p.elapsed < Duration::from_secs(1800) && mean_ok && narrower >= 3 && p.n_files == 12,
        format!(
            "pipeline {:.0} s (limit 1800 s), {} plot files; imputation mean sum-D1 per layer/asset {means:?} (limit 20); \
             per-seed D1 std (L1, L3) over 5 regenerations {:?}, L3 <= L1 in {narrower}/5 (need 3); total {:.0} s",
            p.elapsed.as_secs_f64(),
            p.n_files,
            spreads.iter().map(|(a, b)| format!("({a:.3}, {b:.3})")).collect::<Vec<_>>(),
            total.as_secs_f64()
        ),
    );
}

fn criterion_10(out: &mut Outcome, p: &Pipeline, dir: &std::path::Path) {
    let pair = AlignedPrices::load(dir.join("dataset.json")).unwrap();
    let again = run_forecast_experiment(&make_forecast_split(&pair, YEAR, 2).unwrap(), &experiment_config()).unwrap();
    again.save(dir.join("forecast_again.json")).unwrap();
    let bytes = std::fs::read_to_string(dir.join("forecast_again.json")).unwrap();
    out.record(
        10,
        "determinism",
        bytes == p.forecast_json,
        format!("repeated 5-seed forecast report: {} bytes, identical = {}", bytes.len(), bytes == p.forecast_json),
    );
}

fn main() -> ExitCode {
    // `cargo test -- --list` and friends pass flags; there is nothing to list.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut out = Outcome { failures: Vec::new() };
    criterion_1(&mut out);
    criterion_2(&mut out);
    criterion_3(&mut out);
    criterion_4(&mut out);
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(dir.path());
    criterion_5(&mut out, &p);
    criterion_6(&mut out, &p);
    criterion_7(&mut out);
    criterion_8(&mut out, &p);
    criterion_9(&mut out, &p);
    criterion_10(&mut out, &p, dir.path());
    if out.failures.is_empty() {
        println!("acceptance: all 10 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {:?}", out.failures);
        ExitCode::FAILURE
    }
}
