//! Classical comparison forecasters: VAR(p) with AIC order selection and the
//! random-walk (last value) forecast.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_LAGS: usize = 50;

/// Relative size below which a pivot of the regressor QR counts as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    pub p: usize,
    /// `coefficients[lag - 1][i][j]`: effect of variable `j` at `t - lag` on
    /// variable `i` at `t`.
    pub coefficients: Vec<Vec<Vec<f64>>>,
    pub intercept: Vec<f64>,
    pub residual_covariance: Vec<Vec<f64>>,
    /// AIC of the selected order on the common selection sample.
    pub aic: f64,
    /// AIC of every candidate order `1..=max_p`.
    pub aic_by_order: Vec<f64>,
}

impl VarModel {
    pub fn n_vars(&self) -> usize {
        self.intercept.len()
    }

    /// `(I − Σ A_i)⁻¹ c`, the mean a stable model reverts to.
    pub fn unconditional_mean(&self) -> Result<Vec<f64>> {
        let d = self.n_vars();
        let mut m = DMatrix::<f64>::identity(d, d);
        for a in &self.coefficients {
            m -= to_matrix(a);
        }
        let c = DVector::from_column_slice(&self.intercept);
        m.lu()
            .solve(&c)
            .map(|v| v.iter().copied().collect())
            .ok_or_else(|| Error::invalid("model has a unit root; no unconditional mean"))
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn check_columns(columns: &[Vec<f64>]) -> Result<(usize, usize)> {
    let d = columns.len();
    if d == 0 {
        return Err(Error::invalid("no variables"));
    }
    let t = columns[0].len();
    if columns.iter().any(|c| c.len() != t) {
        return Err(Error::invalid("variables have different lengths"));
    }
    if columns.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite observation"));
    }
    Ok((d, t))
}

/// Regressor rows `[1, y_{t−1}, …, y_{t−p}]` and targets `y_t` for
/// `t = start..T`.
fn design(columns: &[Vec<f64>], p: usize, start: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = columns.len();
    let t_len = columns[0].len();
    let n = t_len - start;
    let x = DMatrix::from_fn(n, 1 + d * p, |r, c| {
        if c == 0 {
            1.0
        } else {
            let lag = (c - 1) / d + 1;
            let var = (c - 1) % d;
            columns[var][start + r - lag]
        }
    });
    let y = DMatrix::from_fn(n, d, |r, c| columns[c][start + r]);
    (x, y)
}

struct OlsFit {
    /// `(1 + d p) × d`, one column per equation.
    beta: DMatrix<f64>,
    residuals: DMatrix<f64>,
}

fn ols(x: &DMatrix<f64>, y: &DMatrix<f64>, p: usize) -> Result<OlsFit> {
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if r.diagonal().iter().any(|v| v.abs() <= RANK_TOL * scale) {
        return Err(Error::RankDeficient { p });
    }
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { p })?;
    let residuals = y - x * &beta;
    Ok(OlsFit { beta, residuals })
}

fn aic(residuals: &DMatrix<f64>, p: usize) -> Result<f64> {
    let n = residuals.nrows() as f64;
    let d = residuals.ncols();
    let sigma = residuals.transpose() * residuals / n;
    let det = sigma.determinant();
    if !(det > 0.0) {
        return Err(Error::RankDeficient { p });
    }
    Ok(n * det.ln() + 2.0 * (d * d * p + d) as f64)
}

/// Fits every order `1..=max_p` on the common sample `t = max_p..T`, picks the
/// smallest AIC (ties to the lower order) and refits it on `t = p..T`.
/// `columns[var][t]`.
pub fn fit_var(columns: &[Vec<f64>], max_p: usize) -> Result<VarModel> {
    let (d, t_len) = check_columns(columns)?;
    if max_p == 0 {
        return Err(Error::invalid("max_p must be at least 1"));
    }
    if t_len <= max_p + d * max_p + 1 {
        return Err(Error::invalid(format!(
            "{t_len} observations are too few for VAR order {max_p} with {d} variables"
        )));
    }
    let mut aics = Vec::with_capacity(max_p);
    for p in 1..=max_p {
        let (x, y) = design(columns, p, max_p);
        let fit = ols(&x, &y, p)?;
        aics.push(aic(&fit.residuals, p)?);
    }
    let best = aics
        .iter()
        .enumerate()
        .fold(0, |b, (i, &a)| if a < aics[b] { i } else { b });
    let p = best + 1;

    let (x, y) = design(columns, p, p);
    let fit = ols(&x, &y, p)?;
    let n = fit.residuals.nrows() as f64;
    let sigma = fit.residuals.transpose() * &fit.residuals / n;
    let coefficients = (0..p)
        .map(|lag| {
            let block = fit.beta.rows(1 + lag * d, d).transpose();
            from_matrix(&block.into_owned())
        })
        .collect();
    Ok(VarModel {
        p,
        coefficients,
        intercept: fit.beta.row(0).iter().copied().collect(),
        residual_covariance: from_matrix(&sigma),
        aic: aics[best],
        aic_by_order: aics,
    })
}

/// Iterated one-step forecasts, each fed back as the newest lag.
/// Returns `forecast[var][step]`.
pub fn forecast_var(model: &VarModel, history: &[Vec<f64>], steps: usize) -> Result<Vec<Vec<f64>>> {
    let (d, t_len) = check_columns(history)?;
    if d != model.n_vars() {
        return Err(Error::invalid(format!(
            "history has {d} variables, model has {}",
            model.n_vars()
        )));
    }
    if t_len < model.p {
        return Err(Error::invalid(format!(
            "history of {t_len} steps is shorter than lag order {}",
            model.p
        )));
    }
    let a: Vec<DMatrix<f64>> = model.coefficients.iter().map(|c| to_matrix(c)).collect();
    let c = DVector::from_column_slice(&model.intercept);
    // newest last
    let mut window: Vec<DVector<f64>> = (t_len - model.p..t_len)
        .map(|t| DVector::from_fn(d, |i, _| history[i][t]))
        .collect();
    let mut out = vec![Vec::with_capacity(steps); d];
    for _ in 0..steps {
        let mut next = c.clone();
        for (lag, a_lag) in a.iter().enumerate() {
            next += a_lag * &window[window.len() - 1 - lag];
        }
        for (i, v) in next.iter().enumerate() {
            out[i].push(*v);
        }
        window.remove(0);
        window.push(next);
    }
    Ok(out)
}

/// Repeats the last observed price.
pub fn naive_forecast(prices: &[f64], steps: usize) -> Result<Vec<f64>> {
    let last = prices
        .last()
        .ok_or_else(|| Error::invalid("naive forecast needs a non-empty history"))?;
    Ok(vec![*last; steps])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::simulate_var;

    fn var1(a: f64, c: f64) -> VarModel {
        VarModel {
            p: 1,
            coefficients: vec![vec![vec![a, 0.0], vec![0.0, a]]],
            intercept: vec![c, c],
            residual_covariance: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            aic: 0.0,
            aic_by_order: vec![0.0],
        }
    }

    #[test]
    fn zero_coefficients_forecast_intercept() {
        let m = var1(0.0, 0.7);
        let f = forecast_var(&m, &[vec![5.0], vec![-3.0]], 4).unwrap();
        assert_eq!(f, vec![vec![0.7; 4], vec![0.7; 4]]);
    }

    #[test]
    fn halving_recursion() {
        let m = var1(0.5, 0.0);
        let f = forecast_var(&m, &[vec![1.0], vec![1.0]], 3).unwrap();
        assert_eq!(f[0], vec![0.5, 0.25, 0.125]);
        assert_eq!(f[1], vec![0.5, 0.25, 0.125]);
        assert!(forecast_var(&m, &[vec![1.0], vec![1.0]], 0).unwrap()[0].is_empty());
    }

    #[test]
    fn naive_examples() {
        assert_eq!(naive_forecast(&[90.0, 100.0], 3).unwrap(), vec![100.0; 3]);
        assert!(naive_forecast(&[100.0], 0).unwrap().is_empty());
        assert!(naive_forecast(&[], 2).is_err());
    }

    #[test]
    fn too_short_series_is_rejected() {
        let cols = vec![vec![0.0; 100], vec![0.0; 100]];
        assert!(matches!(fit_var(&cols, 50), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn collinear_regressors_are_rank_deficient() {
        let x: Vec<f64> = (0..200).map(|t| ((t * 7919) % 101) as f64).collect();
        let cols = vec![x.clone(), x.iter().map(|v| 2.0 * v).collect()];
        assert!(matches!(fit_var(&cols, 3), Err(Error::RankDeficient { p: 1 })));
    }

    #[test]
    fn residuals_are_orthogonal_to_regressors() {
        let a = vec![vec![vec![0.5, 0.1], vec![-0.2, 0.3]]];
        let cols = simulate_var(&a, &[0.1, -0.2], 0.5, 400, 3);
        for p in 1..=4 {
            let (x, y) = design(&cols, p, 4);
            let fit = ols(&x, &y, p).unwrap();
            let xe = x.transpose() * &fit.residuals;
            assert!(xe.iter().all(|v| v.abs() < 1e-8), "p = {p}: {xe}");
        }
    }

    #[test]
    fn white_noise_selects_low_order_and_forecasts_mean() {
        let cols = simulate_var(&[vec![vec![0.0, 0.0], vec![0.0, 0.0]]], &[0.3, -0.1], 1.0, 600, 11);
        let m = fit_var(&cols, 10).unwrap();
        assert!(m.p <= 2, "selected p = {}", m.p);
        let f = forecast_var(&m, &cols, 10).unwrap();
        for (var, mean) in [(0, 0.3), (1, -0.1)] {
            let sample_mean = cols[var].iter().sum::<f64>() / cols[var].len() as f64;
            assert!((f[var][9] - sample_mean).abs() < 0.15, "{} vs {}", f[var][9], sample_mean);
            assert!((sample_mean - mean).abs() < 0.15);
        }
    }

    #[test]
    fn stable_forecast_reaches_unconditional_mean() {
        let a = vec![
            vec![vec![0.5, 0.1], vec![0.0, 0.4]],
            vec![vec![0.2, 0.0], vec![0.1, -0.2]],
        ];
        let cols = simulate_var(&a, &[1.0, 0.5], 0.3, 800, 21);
        let m = fit_var(&cols, 6).unwrap();
        let mu = m.unconditional_mean().unwrap();
        let f = forecast_var(&m, &cols, 200).unwrap();
        for i in 0..2 {
            assert!((f[i][199] - mu[i]).abs() < 1e-3);
        }
    }
}
