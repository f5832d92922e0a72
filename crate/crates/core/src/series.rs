//! Dated series, covariate panels and the ingestion pipeline: CSV reading,
//! calendar alignment, log-return transform, z-score normalization and
//! descriptive moments.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// A univariate series observed on strictly increasing calendar dates.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedSeries {
    name: String,
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl DatedSeries {
    pub fn new(name: impl Into<String>, dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if dates.len() != values.len() {
            return Err(Error::Dimension {
                expected: dates.len(),
                got: values.len(),
            });
        }
        check_increasing(&dates)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                series: name,
                date: dates[i],
            });
        }
        Ok(Self {
            name,
            dates,
            values,
        })
    }

    /// Builds a series on consecutive days starting at `start`.
    pub fn daily(name: impl Into<String>, start: NaiveDate, values: Vec<f64>) -> Result<Self> {
        let dates = start.iter_days().take(values.len()).collect();
        Self::new(name, dates, values)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Restricts to `start <= date <= end`; either bound may be open.
    pub fn window(&self, start: Option<NaiveDate>, end: Option<NaiveDate>) -> Self {
        let keep = |d: &NaiveDate| start.is_none_or(|s| *d >= s) && end.is_none_or(|e| *d <= e);
        let (dates, values) = self
            .dates
            .iter()
            .zip(&self.values)
            .filter(|(d, _)| keep(d))
            .map(|(d, v)| (*d, *v))
            .unzip();
        Self {
            name: self.name.clone(),
            dates,
            values,
        }
    }

    /// Drops the first `n` observations.
    pub fn skip(&self, n: usize) -> Self {
        Self {
            name: self.name.clone(),
            dates: self.dates[n.min(self.len())..].to_vec(),
            values: self.values[n.min(self.len())..].to_vec(),
        }
    }

    /// Natural log of every value; all values must be positive.
    pub fn ln(&self) -> Result<Self> {
        for (d, v) in self.dates.iter().zip(&self.values) {
            if *v <= 0.0 {
                return Err(Error::NonPositivePrice {
                    date: *d,
                    value: *v,
                });
            }
        }
        Ok(Self {
            name: self.name.clone(),
            dates: self.dates.clone(),
            values: self.values.iter().map(|v| v.ln()).collect(),
        })
    }

    /// Keeps the observations whose position satisfies `keep`, preserving order.
    pub fn select(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let (dates, values) = (0..self.len())
            .filter(|&i| keep(i))
            .map(|i| (self.dates[i], self.values[i]))
            .unzip();
        Self {
            name: self.name.clone(),
            dates,
            values,
        }
    }
}

fn check_increasing(dates: &[NaiveDate]) -> Result<()> {
    for w in dates.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::UnorderedDates(w[1]));
        }
    }
    Ok(())
}

/// Column centering and scaling applied by [`zscore_normalize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Normalization {
    /// Maps a coefficient on a normalized column back to the raw column scale.
    pub fn raw_slope(&self, column: usize, coefficient: f64) -> f64 {
        coefficient / self.sds[column]
    }
}

/// Covariate matrix aligned to a date index. The intercept column is not
/// stored; it is prepended when design rows are built.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariatePanel {
    dates: Vec<NaiveDate>,
    names: Vec<String>,
    matrix: DMatrix<f64>,
    normalization: Option<Normalization>,
}

impl CovariatePanel {
    pub fn new(dates: Vec<NaiveDate>, names: Vec<String>, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != dates.len() {
            return Err(Error::Dimension {
                expected: dates.len(),
                got: matrix.nrows(),
            });
        }
        if matrix.ncols() != names.len() {
            return Err(Error::Dimension {
                expected: names.len(),
                got: matrix.ncols(),
            });
        }
        check_increasing(&dates)?;
        for j in 0..matrix.ncols() {
            if let Some(i) = matrix.column(j).iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    series: names[j].clone(),
                    date: dates[i],
                });
            }
        }
        Ok(Self {
            dates,
            names,
            matrix,
            normalization: None,
        })
    }

    /// A panel with no covariates (intercept-only design).
    pub fn empty(dates: Vec<NaiveDate>) -> Result<Self> {
        let n = dates.len();
        Self::new(dates, Vec::new(), DMatrix::zeros(n, 0))
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.names.len()
    }

    /// Design dimension including the intercept.
    pub fn design_dim(&self) -> usize {
        self.names.len() + 1
    }

    /// Design row `(1, x_1t, ..., x_{r-1}t)` at position `t`.
    pub fn design_row(&self, t: usize) -> Vec<f64> {
        std::iter::once(1.0)
            .chain(self.matrix.row(t).iter().copied())
            .collect()
    }

    pub fn column(&self, j: usize) -> DatedSeries {
        DatedSeries {
            name: self.names[j].clone(),
            dates: self.dates.clone(),
            values: self.matrix.column(j).iter().copied().collect(),
        }
    }

    pub fn window(&self, start: Option<NaiveDate>, end: Option<NaiveDate>) -> Self {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| {
                let d = self.dates[i];
                start.is_none_or(|s| d >= s) && end.is_none_or(|e| d <= e)
            })
            .collect();
        self.rows(&idx)
    }

    pub(crate) fn rows(&self, idx: &[usize]) -> Self {
        let k = self.n_covariates();
        Self {
            dates: idx.iter().map(|&i| self.dates[i]).collect(),
            names: self.names.clone(),
            matrix: DMatrix::from_fn(idx.len(), k, |i, j| self.matrix[(idx[i], j)]),
            normalization: self.normalization.clone(),
        }
    }
}

/// `r_t = ln y_t - ln y_{t-1}`, dated at `t`.
pub fn log_returns(prices: &DatedSeries) -> Result<DatedSeries> {
    if prices.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: prices.len(),
        });
    }
    let logs = prices.ln()?;
    let values = logs.values.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(DatedSeries {
        name: prices.name.clone(),
        dates: prices.dates[1..].to_vec(),
        values,
    })
}

/// Centers each column and scales it to unit sample variance (denominator
/// `T - 1`). The applied means and standard deviations are retained on the
/// returned panel; a previously normalized panel keeps its original raw-scale
/// parameters composed with the new ones.
pub fn zscore_normalize(panel: &CovariatePanel) -> Result<CovariatePanel> {
    let n = panel.len();
    if n < 2 && panel.n_covariates() > 0 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    let mut matrix = panel.matrix.clone();
    let mut means = Vec::with_capacity(panel.n_covariates());
    let mut sds = Vec::with_capacity(panel.n_covariates());
    for (j, name) in panel.names.iter().enumerate() {
        let mut col = matrix.column_mut(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::ZeroVariance(name.clone()));
        }
        col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
        means.push(mean);
        sds.push(sd);
    }
    let normalization = match &panel.normalization {
        None => Normalization { means, sds },
        Some(prev) => Normalization {
            means: prev
                .means
                .iter()
                .zip(&prev.sds)
                .zip(&means)
                .map(|((m0, s0), m1)| m0 + s0 * m1)
                .collect(),
            sds: prev.sds.iter().zip(&sds).map(|(s0, s1)| s0 * s1).collect(),
        },
    };
    Ok(CovariatePanel {
        dates: panel.dates.clone(),
        names: panel.names.clone(),
        matrix,
        normalization: Some(normalization),
    })
}

/// Joins covariates onto the price calendar. Each covariate takes its last
/// observed value on or before the price date; price dates before every
/// covariate has been observed once are dropped.
pub fn align(price: &DatedSeries, covariates: &[DatedSeries]) -> Result<(DatedSeries, CovariatePanel)> {
    let k = covariates.len();
    let mut cursors = vec![0usize; k];
    let mut rows: Vec<usize> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (i, date) in price.dates.iter().enumerate() {
        let mut row = Vec::with_capacity(k);
        for (c, cov) in covariates.iter().enumerate() {
            while cursors[c] < cov.len() && cov.dates[cursors[c]] <= *date {
                cursors[c] += 1;
            }
            if cursors[c] == 0 {
                break;
            }
            row.push(cov.values[cursors[c] - 1]);
        }
        if row.len() == k {
            rows.push(i);
            values.extend(row);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    let dates: Vec<NaiveDate> = rows.iter().map(|&i| price.dates[i]).collect();
    let aligned = DatedSeries {
        name: price.name.clone(),
        dates: dates.clone(),
        values: rows.iter().map(|&i| price.values[i]).collect(),
    };
    let names = covariates.iter().map(|c| c.name.clone()).collect();
    let matrix = DMatrix::from_row_slice(rows.len(), k, &values);
    Ok((aligned, CovariatePanel::new(dates, names, matrix)?))
}

/// Sample moments; kurtosis is non-excess (normal = 3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub kurtosis: f64,
    pub skewness: f64,
}

/// Mean and variance with denominator `n - 1`; skewness and kurtosis as
/// standardized central moments with population normalization.
pub fn describe(values: &[f64]) -> Result<DescriptiveStats> {
    let n = values.len();
    if n < 4 {
        return Err(Error::TooShort { needed: 4, got: n });
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    if !(m2 > 0.0) {
        return Err(Error::ZeroVariance("series".into()));
    }
    let variance = m2 / (nf - 1.0);
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    Ok(DescriptiveStats {
        n,
        mean,
        variance,
        skewness: m3 / m2.powf(1.5),
        kurtosis: m4 / (m2 * m2),
    })
}

/// Reads every value column of a CSV with a leading ISO-8601 date column.
/// Rows must be in increasing date order and every cell must be finite.
pub fn read_csv_columns<R: Read>(reader: R, context: &str) -> Result<Vec<DatedSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::parse(context, "expected a date column and at least one value column"));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let mut dates = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let row = line + 2;
        let date = NaiveDate::parse_from_str(&record[0], DATE_FORMAT)
            .map_err(|e| Error::parse(context, format!("row {row}: bad date `{}`: {e}", &record[0])))?;
        if record.len() != headers.len() {
            return Err(Error::parse(context, format!("row {row}: expected {} fields", headers.len())));
        }
        for (j, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(context, format!("row {row}: bad number `{cell}`")))?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    series: names[j].clone(),
                    date,
                });
            }
            columns[j].push(v);
        }
        dates.push(date);
    }
    names
        .into_iter()
        .zip(columns)
        .map(|(name, values)| DatedSeries::new(name, dates.clone(), values))
        .collect()
}

pub fn read_csv_file(path: &Path) -> Result<Vec<DatedSeries>> {
    let file = std::fs::File::open(path)?;
    read_csv_columns(file, &path.display().to_string())
}

/// Reads a single-series CSV (the first value column).
pub fn read_series_file(path: &Path) -> Result<DatedSeries> {
    read_csv_file(path)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::parse(path.display().to_string(), "no value column"))
}

/// Writes series sharing one calendar as a wide CSV.
pub fn write_csv<W: Write>(writer: W, dates: &[NaiveDate], columns: &[(&str, &[f64])]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(columns.iter().map(|(n, _)| n.to_string()));
    wtr.write_record(&header)?;
    for (i, d) in dates.iter().enumerate() {
        let mut rec = vec![d.format(DATE_FORMAT).to_string()];
        rec.extend(columns.iter().map(|(_, v)| format_float(v[i])));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Shortest representation that round-trips exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Merges series from several files into one list, rejecting duplicate names.
pub fn merge_columns(groups: Vec<Vec<DatedSeries>>) -> Result<Vec<DatedSeries>> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for s in groups.into_iter().flatten() {
        if seen.insert(s.name.clone(), ()).is_some() {
            return Err(Error::parse("covariates", format!("duplicate column `{}`", s.name)));
        }
        out.push(s);
    }
    Ok(out)
}
