//! Seeded synthetic data: correlated geometric random walks on a weekday
//! calendar, Markov chains and VAR processes.

use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::market::PriceSeries;

/// Parameters of a two-asset correlated geometric random walk.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkSpec {
    pub ids: [String; 2],
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub initial: [f64; 2],
    /// Daily log drift.
    pub drift: [f64; 2],
    /// Daily log volatility.
    pub volatility: [f64; 2],
    pub correlation: f64,
    pub seed: u64,
}

impl Default for WalkSpec {
    fn default() -> Self {
        WalkSpec {
            ids: ["SYNA".into(), "SYNB".into()],
            start: NaiveDate::from_ymd_opt(2016, 1, 4).unwrap(),
            end: NaiveDate::from_ymd_opt(2021, 3, 31).unwrap(),
            initial: [740.0, 135.0],
            drift: [6e-4, -2e-4],
            volatility: [0.015, 0.013],
            correlation: 0.55,
            seed: 20160104,
        }
    }
}

/// Market holidays are not modelled; instead each asset skips a few
/// asset-specific days so alignment has work to do.
fn skipped(asset: usize, d: NaiveDate) -> bool {
    match asset {
        0 => d.month() == 7 && d.day() == 4,
        _ => (d.month() == 12 && d.day() == 26) || (d.month() == 7 && d.day() == 5),
    }
}

pub fn correlated_walks(spec: &WalkSpec) -> Result<(PriceSeries, PriceSeries)> {
    if !(-1.0..=1.0).contains(&spec.correlation) {
        return Err(Error::invalid("correlation outside [-1, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut x = [spec.initial[0].ln(), spec.initial[1].ln()];
    let mut out: [(Vec<NaiveDate>, Vec<f64>); 2] = Default::default();
    let rho_c = (1.0 - spec.correlation * spec.correlation).sqrt();
    let mut d = spec.start;
    while d <= spec.end {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            let z0: f64 = StandardNormal.sample(&mut rng);
            let z1: f64 = StandardNormal.sample(&mut rng);
            let shocks = [z0, spec.correlation * z0 + rho_c * z1];
            for a in 0..2 {
                x[a] += spec.drift[a] - 0.5 * spec.volatility[a].powi(2) + spec.volatility[a] * shocks[a];
                if !skipped(a, d) {
                    out[a].0.push(d);
                    out[a].1.push(x[a].exp());
                }
            }
        }
        d = d.succ_opt().ok_or_else(|| Error::invalid("date overflow"))?;
    }
    let [(da, ca), (db, cb)] = out;
    Ok((
        PriceSeries::new(spec.ids[0].clone(), da, ca)?,
        PriceSeries::new(spec.ids[1].clone(), db, cb)?,
    ))
}

/// Writes `Date,Close,Volume`; the volume column is filler.
pub fn write_price_csv(series: &PriceSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let wrap = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
    w.write_record(["Date", "Close", "Volume"]).map_err(wrap)?;
    for (i, (d, c)) in series.dates.iter().zip(&series.closes).enumerate() {
        w.write_record([
            d.format("%Y-%m-%d").to_string(),
            format!("{c:.6}"),
            (1_000_000 + (i * 7919) % 250_000).to_string(),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Samples a chain from a column-stochastic matrix (`matrix[(to, from)]`).
pub fn markov_chain(matrix: &DMatrix<f64>, start: usize, len: usize, seed: u64) -> Result<Vec<usize>> {
    let m = matrix.nrows();
    if matrix.ncols() != m || start >= m {
        return Err(Error::invalid("transition matrix must be square and contain the start state"));
    }
    for j in 0..m {
        let s: f64 = matrix.column(j).sum();
        if (s - 1.0).abs() > 1e-9 || matrix.column(j).iter().any(|&p| p < 0.0) {
            return Err(Error::invalid(format!("column {j} is not a distribution")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = start;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(state);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = m - 1;
        for i in 0..m {
            acc += matrix[(i, state)];
            if u < acc {
                next = i;
                break;
            }
        }
        state = next;
    }
    Ok(out)
}

/// Simulates `y_t = c + Σ A_lag y_{t−lag} + ε_t` with i.i.d. N(0, σ²)
/// innovations after a burn-in of 200 steps. Returns `columns[var][t]`.
pub fn simulate_var(coefficients: &[Vec<Vec<f64>>], intercept: &[f64], noise_sd: f64, len: usize, seed: u64) -> Vec<Vec<f64>> {
    const BURN_IN: usize = 200;
    let d = intercept.len();
    let p = coefficients.len();
    let noise = Normal::new(0.0, noise_sd).expect("finite noise scale");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hist: Vec<Vec<f64>> = vec![vec![0.0; d]; p];
    let mut out = vec![Vec::with_capacity(len); d];
    for t in 0..BURN_IN + len {
        let mut y: Vec<f64> = intercept.to_vec();
        for (lag, a) in coefficients.iter().enumerate() {
            let prev = &hist[hist.len() - 1 - lag];
            for i in 0..d {
                y[i] += (0..d).map(|j| a[i][j] * prev[j]).sum::<f64>();
            }
        }
        for v in y.iter_mut() {
            *v += noise.sample(&mut rng);
        }
        if t >= BURN_IN {
            for i in 0..d {
                out[i].push(y[i]);
            }
        }
        hist.remove(0);
        hist.push(y);
    }
    out
}
