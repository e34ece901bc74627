//! End-of-day price ingestion, sampling, smoothing and synthesis.
//!
//! Prices live in a [`PriceMatrix`] of `T` observations by `n` assets. The
//! CSV layout is a mandatory header whose first column is the date
//! (ISO-8601) followed by one column per ticker.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dated price series, `T` rows by `n` asset columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceMatrix {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    prices: DMatrix<f64>,
}

impl PriceMatrix {
    /// Builds a matrix after checking shape, positivity and date order.
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, prices: DMatrix<f64>) -> Result<Self> {
        if prices.nrows() != dates.len() || prices.ncols() != tickers.len() {
            return Err(Error::Dimension(format!(
                "{} dates and {} tickers for a {}x{} price block",
                dates.len(),
                tickers.len(),
                prices.nrows(),
                prices.ncols()
            )));
        }
        if tickers.is_empty() {
            return Err(Error::Format("no ticker columns".into()));
        }
        if dates.len() < 2 {
            return Err(Error::TooFewRows {
                needed: 2,
                found: dates.len(),
            });
        }
        check_dates(&dates)?;
        if let Some(bad) = prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::Format(format!("price {bad} is not strictly positive")));
        }
        Ok(Self {
            dates,
            tickers,
            prices,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    /// Number of observations `T`.
    pub fn observations(&self) -> usize {
        self.prices.nrows()
    }

    /// Number of assets `n`.
    pub fn assets(&self) -> usize {
        self.prices.ncols()
    }

    /// Keeps the given columns in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.assets()) {
            return Err(Error::Dimension(format!(
                "column {bad} out of range for {} assets",
                self.assets()
            )));
        }
        Ok(Self {
            dates: self.dates.clone(),
            tickers: columns.iter().map(|&c| self.tickers[c].clone()).collect(),
            prices: self.prices.select_columns(columns),
        })
    }

    /// Writes the matrix in the loadable CSV layout. Prices use the shortest
    /// decimal form that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let write_err = |e: csv::Error| Error::Format(e.to_string());
        let mut header = Vec::with_capacity(self.assets() + 1);
        header.push("date".to_string());
        header.extend(self.tickers.iter().cloned());
        out.write_record(&header).map_err(write_err)?;
        for (t, date) in self.dates.iter().enumerate() {
            let mut row = Vec::with_capacity(self.assets() + 1);
            row.push(date.format("%Y-%m-%d").to_string());
            row.extend(self.prices.row(t).iter().map(|p| format!("{p}")));
            out.write_record(&row).map_err(write_err)?;
        }
        out.flush().map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }
}

fn check_dates(dates: &[NaiveDate]) -> Result<()> {
    for pair in dates.windows(2) {
        if pair[1] == pair[0] {
            return Err(Error::DuplicateDate(pair[0].to_string()));
        }
        if pair[1] < pair[0] {
            return Err(Error::DatesNotIncreasing {
                previous: pair[0].to_string(),
                next: pair[1].to_string(),
            });
        }
    }
    Ok(())
}

/// A loaded price file together with the number of incomplete rows removed.
#[derive(Debug, Clone)]
pub struct LoadedPrices {
    pub prices: PriceMatrix,
    pub dropped_rows: usize,
}

/// Reads a price CSV from disk.
pub fn load_prices(path: impl AsRef<Path>) -> Result<LoadedPrices> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_prices(file)
}

/// Parses price CSV from any reader. Rows with an empty, non-finite or
/// non-positive cell are dropped and counted.
pub fn read_prices<R: Read>(reader: R) -> Result<LoadedPrices> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .clone();
    if header.len() < 2 {
        return Err(Error::Format(
            "header needs a date column and at least one ticker".into(),
        ));
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let n = tickers.len();

    let mut all_dates = Vec::new();
    let mut dates = Vec::new();
    let mut values = Vec::new();
    let mut dropped_rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        let date_cell = record.get(0).unwrap_or_default();
        let date = NaiveDate::from_str(date_cell)
            .map_err(|e| Error::Format(format!("bad date {date_cell:?}: {e}")))?;
        all_dates.push(date);

        let mut row = Vec::with_capacity(n);
        for cell in record.iter().skip(1) {
            if cell.is_empty() {
                break;
            }
            let value: f64 = cell
                .parse()
                .map_err(|_| Error::Format(format!("bad price {cell:?} on {date}")))?;
            if !(value.is_finite() && value > 0.0) {
                break;
            }
            row.push(value);
        }
        if row.len() == n {
            dates.push(date);
            values.extend(row);
        } else {
            dropped_rows += 1;
        }
    }
    check_dates(&all_dates)?;
    if dates.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            found: dates.len(),
        });
    }
    let prices = DMatrix::from_row_slice(dates.len(), n, &values);
    Ok(LoadedPrices {
        prices: PriceMatrix::new(dates, tickers, prices)?,
        dropped_rows,
    })
}

/// How end-of-day rows are selected or smoothed before estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingScheme {
    EveryDay,
    EveryKDays { k: usize },
    BoxcarSmoothed { window: usize },
}

impl SamplingScheme {
    pub const EOD1: Self = SamplingScheme::EveryDay;
    pub const EOD5: Self = SamplingScheme::EveryKDays { k: 5 };
    pub const EOD1S5: Self = SamplingScheme::BoxcarSmoothed { window: 5 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            SamplingScheme::EveryKDays { k: 0 } => {
                Err(Error::InvalidParameter("sampling step k must be >= 1".into()))
            }
            SamplingScheme::BoxcarSmoothed { window: 0 } => Err(Error::InvalidParameter(
                "smoothing window must be >= 1".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Short label in the EODk / EOD1sW naming.
    pub fn label(&self) -> String {
        match *self {
            SamplingScheme::EveryDay => "EOD1".into(),
            SamplingScheme::EveryKDays { k } => format!("EOD{k}"),
            SamplingScheme::BoxcarSmoothed { window } => format!("EOD1s{window}"),
        }
    }
}

impl fmt::Display for SamplingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for SamplingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let bad = || Error::InvalidParameter(format!("unknown sampling scheme {s:?}"));
        let rest = lower.strip_prefix("eod").ok_or_else(bad)?;
        let scheme = if rest == "1" {
            SamplingScheme::EveryDay
        } else if let Some(window) = rest.strip_prefix("1s") {
            SamplingScheme::BoxcarSmoothed {
                window: window.parse().map_err(|_| bad())?,
            }
        } else {
            SamplingScheme::EveryKDays {
                k: rest.parse().map_err(|_| bad())?,
            }
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

/// Subsamples or smooths the rows of a price matrix.
pub fn apply_sampling(prices: &PriceMatrix, scheme: SamplingScheme) -> Result<PriceMatrix> {
    scheme.validate()?;
    match scheme {
        SamplingScheme::EveryDay => Ok(prices.clone()),
        SamplingScheme::EveryKDays { k } => {
            let rows: Vec<usize> = (0..prices.observations()).step_by(k).collect();
            if rows.len() < 2 {
                return Err(Error::TooFewRows {
                    needed: 2,
                    found: rows.len(),
                });
            }
            Ok(PriceMatrix {
                dates: rows.iter().map(|&t| prices.dates[t]).collect(),
                tickers: prices.tickers.clone(),
                prices: prices.prices.select_rows(&rows),
            })
        }
        SamplingScheme::BoxcarSmoothed { window } => {
            let src = &prices.prices;
            let (t_len, n) = src.shape();
            let mut out = DMatrix::zeros(t_len, n);
            for j in 0..n {
                for t in 0..t_len {
                    let start = (t + 1).saturating_sub(window);
                    let len = (t - start + 1) as f64;
                    let sum: f64 = (start..=t).map(|u| src[(u, j)]).sum();
                    out[(t, j)] = sum / len;
                }
            }
            Ok(PriceMatrix {
                dates: prices.dates.clone(),
                tickers: prices.tickers.clone(),
                prices: out,
            })
        }
    }
}

/// Return definition used before covariance estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnMode {
    #[default]
    Log,
    Simple,
    /// Price levels passed through unchanged.
    RawPrice,
}

impl FromStr for ReturnMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "log" => Ok(ReturnMode::Log),
            "simple" => Ok(ReturnMode::Simple),
            "price" | "raw" | "raw-price" | "raw_price" => Ok(ReturnMode::RawPrice),
            _ => Err(Error::InvalidParameter(format!("unknown return mode {s:?}"))),
        }
    }
}

/// Per-period returns, `(T-1)` rows by `n` columns (or `T` rows for
/// [`ReturnMode::RawPrice`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    pub values: DMatrix<f64>,
    pub mode: ReturnMode,
}

impl ReturnMatrix {
    pub fn observations(&self) -> usize {
        self.values.nrows()
    }

    pub fn assets(&self) -> usize {
        self.values.ncols()
    }

    pub fn select_columns(&self, columns: &[usize]) -> Self {
        Self {
            values: self.values.select_columns(columns),
            mode: self.mode,
        }
    }
}

pub fn compute_returns(prices: &PriceMatrix, mode: ReturnMode) -> ReturnMatrix {
    let p = &prices.prices;
    let values = match mode {
        ReturnMode::RawPrice => p.clone(),
        ReturnMode::Log | ReturnMode::Simple => {
            let (t_len, n) = p.shape();
            DMatrix::from_fn(t_len - 1, n, |t, j| {
                let ratio = p[(t + 1, j)] / p[(t, j)];
                match mode {
                    ReturnMode::Log => ratio.ln(),
                    _ => ratio - 1.0,
                }
            })
        }
    };
    ReturnMatrix { values, mode }
}

/// Uniform random `n`-subset of `0..universe`, in draw order.
pub fn sample_indices(universe: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > universe {
        return Err(Error::UniverseTooSmall {
            requested: n,
            available: universe,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<usize> = (0..universe).collect();
    let (chosen, _) = all.partial_shuffle(&mut rng, n);
    Ok(chosen.to_vec())
}

/// Draws `n` assets uniformly without replacement.
pub fn select_assets(prices: &PriceMatrix, n: usize, seed: u64) -> Result<PriceMatrix> {
    let columns = sample_indices(prices.assets(), n, seed)?;
    prices.select_columns(&columns)
}

/// Population correlation model for synthetic log returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum CorrelationModel {
    /// `factors` Gaussian factors with standard-normal loadings plus unit
    /// idiosyncratic noise; loadings of both signs give mixed-sign correlations.
    RandomFactor { factors: usize },
    /// Every pair shares correlation `rho`.
    Uniform { rho: f64 },
}

const SYNTH_START: NaiveDate = match NaiveDate::from_ymd_opt(2000, 1, 3) {
    Some(d) => d,
    None => panic!("valid start date"),
};

/// Geometric random-walk prices whose log returns follow `model`.
pub fn synth_prices(
    n: usize,
    observations: usize,
    model: CorrelationModel,
    seed: u64,
) -> Result<PriceMatrix> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one asset".into()));
    }
    if observations < 2 {
        return Err(Error::InvalidParameter(
            "need at least two observations".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    // Each asset's standardized return is a fixed linear mix of iid
    // standard normals: `factors` common shocks then one idiosyncratic
    // shock per asset for the factor model, a Cholesky row otherwise.
    enum Mixing {
        Factor { loadings: DMatrix<f64>, idio: Vec<f64> },
        Dense(DMatrix<f64>),
    }
    let mixing = match model {
        CorrelationModel::RandomFactor { factors } => {
            let mut loadings = DMatrix::zeros(n, factors);
            let mut idio = vec![0.0; n];
            for i in 0..n {
                let row: Vec<f64> = (0..factors).map(|_| normal(&mut rng)).collect();
                let norm = (row.iter().map(|b| b * b).sum::<f64>() + 1.0).sqrt();
                for (f, b) in row.iter().enumerate() {
                    loadings[(i, f)] = b / norm;
                }
                idio[i] = 1.0 / norm;
            }
            Mixing::Factor { loadings, idio }
        }
        CorrelationModel::Uniform { rho } => {
            let lower = if n > 1 { -1.0 / (n as f64 - 1.0) } else { f64::NEG_INFINITY };
            if !(rho > lower && rho < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "uniform correlation {rho} outside ({lower}, 1) for n = {n}"
                )));
            }
            let corr = DMatrix::from_fn(n, n, |i, k| if i == k { 1.0 } else { rho });
            Mixing::Dense(
                corr.cholesky()
                    .ok_or_else(|| Error::InvalidParameter(format!("correlation {rho} not positive definite")))?
                    .l(),
            )
        }
    };

    let vols: Vec<f64> = (0..n).map(|_| rng.random_range(0.005..0.03)).collect();
    let start: Vec<f64> = (0..n).map(|_| rng.random_range(10.0..200.0)).collect();

    let mut prices = DMatrix::zeros(observations, n);
    let mut log_level: Vec<f64> = start.iter().map(|p| p.ln()).collect();
    for (j, p) in start.iter().enumerate() {
        prices[(0, j)] = *p;
    }
    for t in 1..observations {
        let standardized: DVector<f64> = match &mixing {
            Mixing::Factor { loadings, idio } => {
                let common = DVector::from_fn(loadings.ncols(), |_, _| normal(&mut rng));
                let own = DVector::from_fn(n, |_, _| normal(&mut rng));
                loadings * common + own.component_mul(&DVector::from_column_slice(idio))
            }
            Mixing::Dense(l) => l * DVector::from_fn(n, |_, _| normal(&mut rng)),
        };
        for j in 0..n {
            log_level[j] += vols[j] * standardized[j];
            prices[(t, j)] = log_level[j].exp();
        }
    }

    let dates = (0..observations)
        .map(|t| SYNTH_START + Days::new(t as u64))
        .collect();
    let tickers = (0..n).map(|j| format!("S{j:03}")).collect();
    PriceMatrix::new(dates, tickers, prices)
}
