//! Price ingestion, alignment, log returns, quantile discretization and the
//! forecast / imputation dataset splits.

use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORECAST_HORIZON: usize = 10;
pub const DEFAULT_MASK_START: usize = 50;
pub const DEFAULT_MASK_LEN: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub asset_id: String,
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<f64>,
}

impl PriceSeries {
    /// Validates strictly increasing dates and positive closes.
    pub fn new(asset_id: impl Into<String>, dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self> {
        if dates.len() != closes.len() {
            return Err(Error::invalid("dates and closes differ in length"));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "dates not strictly increasing at {}",
                w[1]
            )));
        }
        if let Some(c) = closes.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::invalid(format!("close {c} is not a positive number")));
        }
        Ok(PriceSeries {
            asset_id: asset_id.into(),
            dates,
            closes,
        })
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }
}

/// Reads a CSV with `Date` (yyyy-mm-dd) and `Close` columns; other columns are
/// ignored. The asset id is the file stem.
pub fn load_csv(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Schema {
                path: path.to_path_buf(),
                message: format!("no {name} column in header"),
            })
    };
    let date_col = column("Date")?;
    let close_col = column("Close")?;

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let date_str = record.get(date_col).unwrap_or("");
        let date = NaiveDate::parse_from_str(date_str, "%Y-%m-%d")
            .map_err(|e| parse_err(format!("bad date {date_str:?}: {e}")))?;
        let close_str = record.get(close_col).unwrap_or("");
        let close: f64 = close_str
            .parse()
            .map_err(|_| parse_err(format!("bad Close value {close_str:?}")))?;
        if !(close.is_finite() && close > 0.0) {
            return Err(parse_err(format!("Close must be positive, got {close}")));
        }
        rows.push((date, close, line));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: w[1].2,
            message: format!("duplicate date {}", w[1].0),
        });
    }
    let asset_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    PriceSeries::new(
        asset_id,
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.1).collect(),
    )
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

/// Several assets restricted to their common trading dates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedPrices {
    pub asset_ids: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// `closes[asset][t]`.
    pub closes: Vec<Vec<f64>>,
}

impl AlignedPrices {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    /// Index range of the observations dated in `year`.
    fn year_range(&self, year: i32) -> Result<std::ops::Range<usize>> {
        let start = self.dates.iter().position(|d| d.year() == year);
        let Some(start) = start else {
            return Err(Error::invalid(format!("no observations in {year}")));
        };
        let end = self.dates[start..]
            .iter()
            .position(|d| d.year() != year)
            .map_or(self.len(), |off| start + off);
        Ok(start..end)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::jsonfmt::write_file(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::jsonfmt::read_file(path)
    }
}

/// Intersects the trading dates of two series.
pub fn align(a: &PriceSeries, b: &PriceSeries) -> Result<AlignedPrices> {
    let (mut i, mut j) = (0, 0);
    let mut out = AlignedPrices {
        asset_ids: vec![a.asset_id.clone(), b.asset_id.clone()],
        dates: Vec::new(),
        closes: vec![Vec::new(), Vec::new()],
    };
    while i < a.len() && j < b.len() {
        match a.dates[i].cmp(&b.dates[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.dates.push(a.dates[i]);
                out.closes[0].push(a.closes[i]);
                out.closes[1].push(b.closes[j]);
                i += 1;
                j += 1;
            }
        }
    }
    if out.dates.is_empty() {
        return Err(Error::invalid(format!(
            "{} and {} share no trading dates",
            a.asset_id, b.asset_id
        )));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogReturnSeries {
    pub asset_id: String,
    /// Date of the later price of each pair.
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

pub fn log_diff(series: &PriceSeries) -> Result<LogReturnSeries> {
    Ok(LogReturnSeries {
        asset_id: series.asset_id.clone(),
        dates: series.dates.iter().skip(1).copied().collect(),
        values: log_returns(&series.closes)?,
    })
}

/// `r_t = ln x_t − ln x_{t−1}`.
pub fn log_returns(prices: &[f64]) -> Result<Vec<f64>> {
    if prices.len() < 2 {
        return Err(Error::invalid("log returns need at least two prices"));
    }
    Ok(prices.windows(2).map(|w| w[1].ln() - w[0].ln()).collect())
}

/// Which continuous quantity a [`DiscreteSeries`] was cut from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceDomain {
    LogReturns,
    RawPrices,
}

/// Quantile bins of one asset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bins {
    /// `m − 1` ascending interior edges.
    pub edges: Vec<f64>,
    /// One value per bin, used to map levels back to the continuous scale.
    pub representatives: Vec<f64>,
}

impl Bins {
    /// Number of edges strictly below `value`; values on an edge fall in the
    /// lower bin.
    pub fn level_of(&self, value: f64) -> usize {
        self.edges.iter().filter(|&&e| e < value).count()
    }

    pub fn n_levels(&self) -> usize {
        self.representatives.len()
    }
}

/// Linear-interpolation percentile of sorted data, `q ∈ [0, 1]`.
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Cuts `values` into `m` equal-mass bins. Returns the level of every value and
/// the bins; each representative is the mean of its members.
pub fn discretize(values: &[f64], m: usize) -> Result<(Vec<usize>, Bins)> {
    if m < 2 || !m.is_power_of_two() {
        return Err(Error::invalid(format!("level count {m} is not a power of two ≥ 2")));
    }
    if values.len() < m {
        return Err(Error::invalid(format!(
            "{} values cannot fill {m} bins",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite value {v}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::DegenerateBins(format!(
            "all {} values equal {}",
            values.len(),
            sorted[0]
        )));
    }
    let edges: Vec<f64> = (1..m)
        .map(|j| percentile_sorted(&sorted, j as f64 / m as f64))
        .collect();
    let mut bins = Bins {
        edges,
        representatives: Vec::new(),
    };
    let levels: Vec<usize> = values.iter().map(|&v| bins.level_of(v)).collect();

    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for (&v, &l) in values.iter().zip(&levels) {
        sums[l] += v;
        counts[l] += 1;
    }
    bins.representatives = (0..m)
        .map(|l| {
            if counts[l] > 0 {
                sums[l] / counts[l] as f64
            } else {
                // empty bin: its edges coincide (ties) or it is an outer bin
                let lo = if l == 0 { bins.edges[0] } else { bins.edges[l - 1] };
                let hi = if l == m - 1 { bins.edges[m - 2] } else { bins.edges[l] };
                0.5 * (lo + hi)
            }
        })
        .collect();
    Ok((levels, bins))
}

/// Maps levels back to the continuous scale. For log returns the path is
/// rebuilt from `last_price` by compounding; for raw prices the
/// representatives are the values themselves.
pub fn undiscretize(
    levels: &[usize],
    representatives: &[f64],
    last_price: Option<f64>,
    domain: SourceDomain,
) -> Result<Vec<f64>> {
    let values = levels
        .iter()
        .map(|&l| {
            representatives.get(l).copied().ok_or_else(|| {
                Error::invalid(format!("level {l} has no representative"))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    match domain {
        SourceDomain::RawPrices => Ok(values),
        SourceDomain::LogReturns => {
            let start = match last_price {
                Some(p) if p.is_finite() && p > 0.0 => p,
                _ => return Err(Error::invalid("log-return reconstruction needs a positive last price")),
            };
            Ok(compound(start, &values))
        }
    }
}

/// `x_{t+1} = x_t · exp(r_{t+1})` starting from `start` (which is not emitted).
pub fn compound(start: f64, returns: &[f64]) -> Vec<f64> {
    returns
        .iter()
        .scan(start, |x, r| {
            *x *= r.exp();
            Some(*x)
        })
        .collect()
}

/// Discrete levels of every asset over a common time axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSeries {
    /// `levels[asset][t]`.
    pub levels: Vec<Vec<usize>>,
    pub bins: Vec<Bins>,
    pub m: usize,
    pub source_domain: SourceDomain,
    /// Steps with `false` are missing; their levels carry no information.
    pub observed: Vec<bool>,
}

impl DiscreteSeries {
    /// Fully observed series from bare levels; bins are the identity map
    /// `level ↦ level` so reconstruction returns the level values.
    pub fn from_levels(levels: Vec<Vec<usize>>, m: usize) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("no assets"));
        }
        let len = levels[0].len();
        if levels.iter().any(|l| l.len() != len) {
            return Err(Error::invalid("assets have different lengths"));
        }
        if let Some(l) = levels.iter().flatten().find(|&&l| l >= m) {
            return Err(Error::invalid(format!("level {l} outside 0..{m}")));
        }
        let bins = Bins {
            edges: (0..m - 1).map(|e| e as f64 + 0.5).collect(),
            representatives: (0..m).map(|l| l as f64).collect(),
        };
        Ok(DiscreteSeries {
            bins: vec![bins; levels.len()],
            m,
            source_domain: SourceDomain::RawPrices,
            observed: vec![true; len],
            levels,
        })
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.levels.len()
    }

    /// Levels of every asset at step `t`.
    pub fn state_at(&self, t: usize) -> Vec<usize> {
        self.levels.iter().map(|l| l[t]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Forecast,
    Impute,
}

/// Ground truth the model is scored against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Holdout {
    /// First step of the held-out span on the training series' time axis.
    pub start: usize,
    pub dates: Vec<NaiveDate>,
    /// `prices[asset][i]`.
    pub prices: Vec<Vec<f64>>,
    /// True levels under the training bins, `levels[asset][i]`.
    pub levels: Vec<Vec<usize>>,
}

impl Holdout {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub name: String,
    pub task: Task,
    pub asset_ids: Vec<String>,
    /// Closing prices of the training year; for imputation the masked days
    /// are removed.
    pub train_prices: Vec<Vec<f64>>,
    pub train: DiscreteSeries,
    pub holdout: Holdout,
}

impl DatasetSplit {
    /// Joint state the generated span starts from: the last training step for
    /// forecasting, the step before the mask for imputation.
    pub fn initial_levels(&self) -> Vec<usize> {
        let t = match self.task {
            Task::Forecast => self.train.len() - 1,
            Task::Impute => self.holdout.start - 1,
        };
        self.train.state_at(t)
    }

    /// Last observed price per asset before the holdout span.
    pub fn last_prices(&self) -> Vec<f64> {
        self.train_prices
            .iter()
            .map(|p| match self.task {
                Task::Forecast => *p.last().unwrap(),
                Task::Impute => p[self.holdout.start - 1],
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::jsonfmt::write_file(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::jsonfmt::read_file(path)
    }
}

fn levels_per_asset(bits_per_asset: usize) -> usize {
    1 << bits_per_asset
}

/// Trains on the log returns of `year` and holds out the prices of the next
/// ten trading days.
pub fn make_forecast_split(
    pair: &AlignedPrices,
    year: i32,
    bits_per_asset: usize,
) -> Result<DatasetSplit> {
    let range = pair.year_range(year)?;
    if pair.len() - range.end < FORECAST_HORIZON {
        return Err(Error::invalid(format!(
            "only {} trading days after {year}, need {FORECAST_HORIZON}",
            pair.len() - range.end
        )));
    }
    let m = levels_per_asset(bits_per_asset);
    let hold = range.end..range.end + FORECAST_HORIZON;
    let mut levels = Vec::new();
    let mut bins = Vec::new();
    let mut hold_levels = Vec::new();
    for closes in &pair.closes {
        let year_prices = &closes[range.clone()];
        let returns = log_returns(year_prices)?;
        let (lv, b) = discretize(&returns, m)?;
        let future = log_returns(&closes[range.end - 1..hold.end])?;
        hold_levels.push(future.iter().map(|&r| b.level_of(r)).collect());
        levels.push(lv);
        bins.push(b);
    }
    let n = levels[0].len();
    Ok(DatasetSplit {
        name: format!("D{year}"),
        task: Task::Forecast,
        asset_ids: pair.asset_ids.clone(),
        train_prices: pair.closes.iter().map(|c| c[range.clone()].to_vec()).collect(),
        train: DiscreteSeries {
            levels,
            bins,
            m,
            source_domain: SourceDomain::LogReturns,
            observed: vec![true; n],
        },
        holdout: Holdout {
            start: n,
            dates: pair.dates[hold.clone()].to_vec(),
            prices: pair.closes.iter().map(|c| c[hold.clone()].to_vec()).collect(),
            levels: hold_levels,
        },
    })
}

/// Discretizes the raw prices of `year` with steps
/// `mask_start..mask_start + mask_len` (0-based) treated as missing.
pub fn make_imputation_split(
    pair: &AlignedPrices,
    year: i32,
    bits_per_asset: usize,
    mask_start: usize,
    mask_len: usize,
) -> Result<DatasetSplit> {
    let range = pair.year_range(year)?;
    let n = range.len();
    if mask_start == 0 || mask_len == 0 {
        return Err(Error::invalid("the mask needs an observed step before it and a positive length"));
    }
    if n <= mask_start + mask_len {
        return Err(Error::invalid(format!(
            "{n} observations in {year} leave nothing after mask {mask_start}..{}",
            mask_start + mask_len
        )));
    }
    let m = levels_per_asset(bits_per_asset);
    let mask = mask_start..mask_start + mask_len;
    let mut levels = Vec::new();
    let mut bins = Vec::new();
    let mut train_prices = Vec::new();
    let mut hold_prices = Vec::new();
    let mut hold_levels = Vec::new();
    for closes in &pair.closes {
        let year_prices = &closes[range.clone()];
        let observed: Vec<f64> = year_prices
            .iter()
            .enumerate()
            .filter(|(t, _)| !mask.contains(t))
            .map(|(_, &p)| p)
            .collect();
        let (_, b) = discretize(&observed, m)?;
        let mut lv: Vec<usize> = year_prices.iter().map(|&p| b.level_of(p)).collect();
        hold_levels.push(lv[mask.clone()].to_vec());
        hold_prices.push(year_prices[mask.clone()].to_vec());
        lv[mask.clone()].iter_mut().for_each(|l| *l = 0);
        levels.push(lv);
        bins.push(b);
        train_prices.push(observed);
    }
    let observed = (0..n).map(|t| !mask.contains(&t)).collect();
    Ok(DatasetSplit {
        name: format!("D{year}"),
        task: Task::Impute,
        asset_ids: pair.asset_ids.clone(),
        train_prices,
        train: DiscreteSeries {
            levels,
            bins,
            m,
            source_domain: SourceDomain::RawPrices,
            observed,
        },
        holdout: Holdout {
            start: mask_start,
            dates: pair.dates[range.start + mask.start..range.start + mask.end].to_vec(),
            prices: hold_prices,
            levels: hold_levels,
        },
    })
}
