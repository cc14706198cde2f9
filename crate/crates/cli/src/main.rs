use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use qtsgen::eval::{self, EvalReport, ExperimentConfig, SeedTraining};
use qtsgen::market::{self, AlignedPrices, DatasetSplit, DEFAULT_MASK_LEN, DEFAULT_MASK_START};
use qtsgen::model::{GradientMethod, TrainedModel, TrainingConfig};
use qtsgen::{baselines, jsonfmt, plot, synthetic};

/// Added to every seed derived from `--seed`/`--seeds`.
const SEED_OFFSET_VAR: &str = "QTSGEN_SEED_OFFSET";

/// Exit status when some seeds failed but the rest were reported.
const PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(name = "qtsgen", version, about = "Quantum generative model for correlated time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Forecast,
    Impute,
}

#[derive(Clone, Copy, ValueEnum)]
enum GradientArg {
    Adjoint,
    ParameterShift,
    FiniteDifference,
}

impl From<GradientArg> for GradientMethod {
    fn from(g: GradientArg) -> Self {
        match g {
            GradientArg::Adjoint => GradientMethod::Adjoint,
            GradientArg::ParameterShift => GradientMethod::ParameterShift,
            GradientArg::FiniteDifference => GradientMethod::FiniteDifference,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Var,
    Naive,
}

#[derive(Subcommand)]
enum Command {
    /// Align two closing-price CSVs on common dates into a dataset file.
    Ingest {
        #[arg(long)]
        csv_a: PathBuf,
        #[arg(long)]
        csv_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per seed on a yearly split.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        year: i32,
        #[arg(long, value_enum, default_value = "forecast")]
        task: TaskArg,
        #[arg(long, default_value_t = 1)]
        layers: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 300)]
        steps: usize,
        /// Number of seeds.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        /// First seed; the rest follow consecutively.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest step offset in the training pairs.
        #[arg(long, default_value_t = 10)]
        horizon: usize,
        #[arg(long, default_value_t = 4)]
        ancilla: usize,
        #[arg(long, default_value_t = 2)]
        bits: usize,
        #[arg(long, default_value_t = DEFAULT_MASK_START)]
        mask_start: usize,
        #[arg(long, default_value_t = DEFAULT_MASK_LEN)]
        mask_len: usize,
        #[arg(long, value_enum, default_value = "adjoint")]
        gradient: GradientArg,
        #[arg(long, default_value_t = baselines::DEFAULT_MAX_LAGS)]
        max_lags: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score trained model directories against their holdout.
    Evaluate {
        /// May be repeated for runs on the same split with different layers.
        #[arg(long = "model-dir", required = true)]
        model_dirs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Entanglement entropy of the first asset over the first steps.
    Entropy {
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classical forecast on a yearly split.
    Baseline {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        year: i32,
        #[arg(long, value_enum)]
        method: BaselineArg,
        #[arg(long, default_value_t = baselines::DEFAULT_MAX_LAGS)]
        max_lags: usize,
        #[arg(long, default_value_t = 2)]
        bits: usize,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write CSV series and SVG charts for a report.
    Plot {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the synthetic two-asset price CSVs.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = synthetic::WalkSpec::default().seed)]
        seed: u64,
    },
}

#[derive(Serialize, Deserialize)]
struct SeedEntry {
    seed: u64,
    file: Option<String>,
    error: Option<String>,
}

/// `manifest.json` of a model directory.
#[derive(Serialize, Deserialize)]
struct Manifest {
    config: ExperimentConfig,
    n_layers: usize,
    seeds: Vec<SeedEntry>,
}

fn seed_offset() -> Result<u64> {
    match std::env::var(SEED_OFFSET_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_OFFSET_VAR}={v:?} is not a non-negative integer")),
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(e) => Err(e).context(SEED_OFFSET_VAR),
    }
}

fn split_for(dataset: &Path, year: i32, task: TaskArg, bits: usize, mask_start: usize, mask_len: usize) -> Result<DatasetSplit> {
    let pair = AlignedPrices::load(dataset).with_context(|| format!("loading {}", dataset.display()))?;
    Ok(match task {
        TaskArg::Forecast => market::make_forecast_split(&pair, year, bits)?,
        TaskArg::Impute => market::make_imputation_split(&pair, year, bits, mask_start, mask_len)?,
    })
}

fn load_run(dir: &Path) -> Result<(DatasetSplit, Manifest, Vec<SeedTraining>)> {
    let split = DatasetSplit::load(dir.join("split.json")).with_context(|| format!("reading split in {}", dir.display()))?;
    let manifest: Manifest = jsonfmt::read_file(dir.join("manifest.json")).with_context(|| format!("reading manifest in {}", dir.display()))?;
    let mut runs = Vec::new();
    for e in &manifest.seeds {
        let r = match (&e.file, &e.error) {
            (Some(f), _) => Ok(TrainedModel::load(dir.join(f)).with_context(|| format!("loading {f}"))?),
            (None, Some(err)) => Err(err.clone()),
            (None, None) => bail!("seed {} in {} has neither a model nor an error", e.seed, dir.display()),
        };
        runs.push((e.seed, r));
    }
    Ok((split, manifest, runs))
}

fn status(failed: usize) -> ExitCode {
    if failed > 0 {
        ExitCode::from(PARTIAL)
    } else {
        ExitCode::SUCCESS
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest { csv_a, csv_b, out } => {
            let a = market::load_csv(&csv_a)?;
            let b = market::load_csv(&csv_b)?;
            let pair = market::align(&a, &b)?;
            pair.save(&out)?;
            eprintln!(
                "{} aligned days ({} .. {}) -> {}",
                pair.len(),
                pair.dates[0],
                pair.dates[pair.len() - 1],
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Train {
            dataset,
            year,
            task,
            layers,
            lr,
            steps,
            seeds,
            seed,
            horizon,
            ancilla,
            bits,
            mask_start,
            mask_len,
            gradient,
            max_lags,
            out,
        } => {
            let split = split_for(&dataset, year, task, bits, mask_start, mask_len)?;
            let config = ExperimentConfig {
                training: TrainingConfig {
                    learning_rate: lr,
                    n_steps: steps,
                    horizon,
                    n_layers: layers,
                    seed: seed + seed_offset()?,
                    n_runs: seeds,
                    gradient_method: gradient.into(),
                },
                n_ancilla: ancilla,
                max_lags,
                ..ExperimentConfig::default()
            };
            config.training.validate()?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            split.save(out.join("split.json"))?;
            let mut entries = Vec::new();
            for (s, r) in eval::train_seeds(&split, &config, layers)? {
                let entry = match r {
                    Ok(model) => {
                        let file = format!("seed_{s}.json");
                        model.save(out.join(&file))?;
                        eprintln!("seed {s}: loss {:.6} -> {:.6}", model.initial_loss(), model.final_loss());
                        SeedEntry { seed: s, file: Some(file), error: None }
                    }
                    Err(e) => {
                        eprintln!("seed {s}: failed: {e}");
                        SeedEntry { seed: s, file: None, error: Some(e) }
                    }
                };
                entries.push(entry);
            }
            let failed = entries.iter().filter(|e| e.error.is_some()).count();
            if failed == entries.len() {
                bail!("every seed failed");
            }
            jsonfmt::write_file(out.join("manifest.json"), &Manifest { config, n_layers: layers, seeds: entries })?;
            Ok(status(failed))
        }
        Command::Evaluate { model_dirs, out } => {
            let mut split = None;
            let mut config = None;
            let mut runs = Vec::new();
            for dir in &model_dirs {
                let (s, m, r) = load_run(dir)?;
                match &split {
                    None => split = Some(s),
                    Some(prev) if *prev != s => bail!("{} was trained on a different split", dir.display()),
                    Some(_) => {}
                }
                config.get_or_insert(m.config);
                runs.push(r);
            }
            let split = split.expect("at least one model directory");
            let report = eval::build_report(&split, &config.expect("at least one manifest"), &runs)?;
            report.save(&out)?;
            for m in &report.models {
                let agg = &m.aggregate;
                eprintln!(
                    "L={}: {} ok, {} failed; D1 sum per asset {:?}",
                    m.n_layers,
                    agg.n_succeeded,
                    agg.n_failed,
                    agg.d1_sum.iter().map(|s| s.mean).collect::<Vec<_>>()
                );
            }
            Ok(status(report.n_failed_seeds()))
        }
        Command::Entropy { model_dir, steps, out } => {
            let (split, _, runs) = load_run(&model_dir)?;
            let initial = split.initial_levels();
            let mut csv = String::from("seed,t,entropy_bits,max_bits\n");
            let mut failed = 0;
            for (seed, r) in &runs {
                let Ok(model) = r else {
                    failed += 1;
                    continue;
                };
                let trace = eval::entropy_trace(model, &initial, steps)?;
                for (t, e) in trace.entropy_bits.iter().enumerate() {
                    csv.push_str(&format!("{seed},{},{e:.16e},{}\n", t + 1, trace.max_bits));
                }
            }
            std::fs::write(&out, csv).with_context(|| format!("writing {}", out.display()))?;
            Ok(status(failed))
        }
        Command::Baseline {
            dataset,
            year,
            method,
            max_lags,
            bits,
            out,
        } => {
            let split = split_for(&dataset, year, TaskArg::Forecast, bits, 0, 0)?;
            let result = match method {
                BaselineArg::Var => eval::var_baseline(&split, max_lags)?,
                BaselineArg::Naive => eval::naive_baseline(&split)?,
            };
            match out {
                Some(path) => jsonfmt::write_file(path, &result)?,
                None => print!("{}", jsonfmt::to_string(&result)?),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { report, out } => {
            let report = EvalReport::load(&report).with_context(|| format!("reading {}", report.display()))?;
            for f in plot::write_plots(&report, &out)? {
                eprintln!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { out_dir, seed } => {
            let spec = synthetic::WalkSpec {
                seed,
                ..synthetic::WalkSpec::default()
            };
            let (a, b) = synthetic::correlated_walks(&spec)?;
            std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            for s in [&a, &b] {
                let path = out_dir.join(format!("{}.csv", s.asset_id));
                synthetic::write_price_csv(s, &path)?;
                eprintln!("wrote {} ({} rows)", path.display(), s.len());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
