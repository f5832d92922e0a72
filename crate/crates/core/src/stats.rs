//! Unit-root, stationarity, autocorrelation, random-walk and normality tests,
//! plus the per-state subseries battery.
//!
//! Dickey-Fuller and KPSS p-values come from linear interpolation in the
//! published critical-value tables. Statistics outside the tabulated range are
//! reported at the table bound with a [`Bracket`] marking the direction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::forward_backward::StatePath;
use crate::series::{describe, DatedSeries, DescriptiveStats};

/// Direction of a p-value that sits at a table bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bracket {
    /// The true p-value is at most the reported one.
    AtMost,
    /// The true p-value is at least the reported one.
    AtLeast,
}

impl Bracket {
    pub fn symbol(self) -> &'static str {
        match self {
            Bracket::AtMost => "<=",
            Bracket::AtLeast => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
    pub bracket: Option<Bracket>,
    pub lags: Option<usize>,
    pub reject_5pct: bool,
    /// Extra per-test detail, e.g. the per-period variance ratios.
    #[serde(default)]
    pub detail: Option<String>,
}

impl TestReport {
    fn new(test: &str, statistic: f64, p_value: f64, bracket: Option<Bracket>, lags: Option<usize>) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            test: test.to_string(),
            statistic,
            p_value,
            bracket,
            lags,
            reject_5pct: p_value < 0.05,
            detail: None,
        }
    }

    pub fn p_value_display(&self) -> String {
        match self.bracket {
            Some(b) => format!("{}{:.2}", b.symbol(), self.p_value),
            None => format!("{:.2}", self.p_value),
        }
    }
}

const DF_PROBS: [f64; 8] = [0.01, 0.025, 0.05, 0.10, 0.90, 0.95, 0.975, 0.99];
const DF_SIZES: [f64; 6] = [25.0, 50.0, 100.0, 250.0, 500.0, 100_000.0];

/// Fuller's table for the t-ratio without deterministic terms.
const DF_TABLE_NONE: [[f64; 8]; 6] = [
    [-2.66, -2.26, -1.95, -1.60, 0.92, 1.33, 1.70, 2.16],
    [-2.62, -2.25, -1.95, -1.61, 0.91, 1.31, 1.66, 2.08],
    [-2.60, -2.24, -1.95, -1.61, 0.90, 1.29, 1.64, 2.03],
    [-2.58, -2.23, -1.95, -1.62, 0.89, 1.29, 1.63, 2.01],
    [-2.58, -2.23, -1.95, -1.62, 0.89, 1.28, 1.62, 2.00],
    [-2.58, -2.23, -1.95, -1.62, 0.89, 1.28, 1.62, 2.00],
];

/// Fuller's table for the t-ratio with a constant.
const DF_TABLE_DRIFT: [[f64; 8]; 6] = [
    [-3.75, -3.33, -3.00, -2.63, -0.37, 0.00, 0.34, 0.72],
    [-3.58, -3.22, -2.93, -2.60, -0.40, -0.03, 0.29, 0.66],
    [-3.51, -3.17, -2.89, -2.58, -0.42, -0.05, 0.26, 0.63],
    [-3.46, -3.14, -2.88, -2.57, -0.42, -0.06, 0.24, 0.62],
    [-3.44, -3.13, -2.87, -2.57, -0.43, -0.07, 0.24, 0.61],
    [-3.43, -3.12, -2.86, -2.57, -0.44, -0.07, 0.23, 0.60],
];

const KPSS_PROBS: [f64; 4] = [0.10, 0.05, 0.025, 0.01];
const KPSS_LEVEL: [f64; 4] = [0.347, 0.463, 0.574, 0.739];
const KPSS_TREND: [f64; 4] = [0.119, 0.146, 0.176, 0.216];

/// Piecewise-linear interpolation on increasing `xs`, clamped at the ends.
/// Returns which end was hit, if any.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> (f64, Option<usize>) {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return (ys[0], (x < xs[0]).then_some(0));
    }
    if x >= xs[last] {
        return (ys[last], (x > xs[last]).then_some(last));
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    (ys[i] + w * (ys[i + 1] - ys[i]), None)
}

fn df_p_value(statistic: f64, n: usize, drift: bool) -> (f64, Option<Bracket>) {
    let table = if drift { &DF_TABLE_DRIFT } else { &DF_TABLE_NONE };
    let row: Vec<f64> = (0..DF_PROBS.len())
        .map(|j| {
            let col: Vec<f64> = table.iter().map(|r| r[j]).collect();
            interpolate(&DF_SIZES, &col, n as f64).0
        })
        .collect();
    let (p, end) = interpolate(&row, &DF_PROBS, statistic);
    let bracket = end.map(|e| if e == 0 { Bracket::AtMost } else { Bracket::AtLeast });
    (p, bracket)
}

/// Least squares with coefficient standard errors.
struct OlsFit {
    coef: DVector<f64>,
    se: DVector<f64>,
}

fn ols(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, k) = design.shape();
    if n <= k {
        return Err(Error::TooShort { needed: k + 1, got: n });
    }
    let xtx = design.transpose() * design;
    let chol = nalgebra::Cholesky::new(xtx).ok_or(Error::NotPositiveDefinite)?;
    let coef = chol.solve(&(design.transpose() * y));
    let resid = y - design * &coef;
    let s2 = resid.norm_squared() / (n - k) as f64;
    let inv = chol.inverse();
    let se = DVector::from_fn(k, |i, _| (s2 * inv[(i, i)]).sqrt());
    Ok(OlsFit { coef, se })
}

/// Dickey-Fuller test of `y_t = φ y_{t-1} + ε_t` against `φ < 1`; the
/// statistic is the t-ratio of `φ - 1`.
pub fn df_test(series: &[f64]) -> Result<TestReport> {
    if series.len() < 20 {
        return Err(Error::TooShort {
            needed: 20,
            got: series.len(),
        });
    }
    let mut report = adf_regression(series, 0, false)?;
    report.test = "DF".into();
    Ok(report)
}

/// Augmented Dickey-Fuller test with `lags` lagged differences and an
/// optional drift term. The footnoted configuration is `lags = 7` with drift.
pub fn adf_test(series: &[f64], lags: usize, drift: bool) -> Result<TestReport> {
    if series.len() < lags + 20 {
        return Err(Error::TooShort {
            needed: lags + 20,
            got: series.len(),
        });
    }
    adf_regression(series, lags, drift)
}

pub const ADF_DEFAULT_LAGS: usize = 7;

fn adf_regression(series: &[f64], lags: usize, drift: bool) -> Result<TestReport> {
    let n = series.len();
    let diff: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    // Regression rows t = lags + 1 .. n - 1 (levels index).
    let rows = n - 1 - lags;
    let k = 1 + usize::from(drift) + lags;
    let mut design = DMatrix::zeros(rows, k);
    let mut response = DVector::zeros(rows);
    for (i, t) in (lags + 1..n).enumerate() {
        response[i] = diff[t - 1];
        let mut c = 0;
        design[(i, c)] = series[t - 1];
        c += 1;
        if drift {
            design[(i, c)] = 1.0;
            c += 1;
        }
        for j in 1..=lags {
            design[(i, c)] = diff[t - 1 - j];
            c += 1;
        }
    }
    let fit = ols(&design, &response)?;
    let statistic = fit.coef[0] / fit.se[0];
    let (p, bracket) = df_p_value(statistic, n, drift);
    Ok(TestReport::new("ADF", statistic, p, bracket, Some(lags)))
}

/// Ljung-Box portmanteau test of zero autocorrelation up to `lags`.
pub fn lbq_test(series: &[f64], lags: usize) -> Result<TestReport> {
    let n = series.len();
    if lags == 0 {
        return Err(Error::InvalidParameter("Ljung-Box needs at least one lag".into()));
    }
    if n <= 3 * lags {
        return Err(Error::TooShort {
            needed: 3 * lags + 1,
            got: n,
        });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if !(denom > 0.0) {
        return Err(Error::ZeroVariance("series".into()));
    }
    let nf = n as f64;
    let q: f64 = (1..=lags)
        .map(|k| {
            let rho = dev[k..].iter().zip(&dev[..n - k]).map(|(a, b)| a * b).sum::<f64>() / denom;
            rho * rho / (nf - k as f64)
        })
        .sum::<f64>()
        * nf
        * (nf + 2.0);
    let p = chi2_sf(q, lags as f64);
    Ok(TestReport::new("LBQ", q, p, None, Some(lags)))
}

pub const LBQ_DEFAULT_LAGS: usize = 10;

/// `floor(4 (T/100)^{1/4})`.
pub fn kpss_bandwidth(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// KPSS test of level (or, with `trend`, trend) stationarity using the
/// default Bartlett bandwidth.
pub fn kpss_test(series: &[f64], trend: bool) -> Result<TestReport> {
    kpss_test_with_bandwidth(series, trend, kpss_bandwidth(series.len()))
}

pub fn kpss_test_with_bandwidth(series: &[f64], trend: bool, bandwidth: usize) -> Result<TestReport> {
    let n = series.len();
    if n < 20 {
        return Err(Error::TooShort { needed: 20, got: n });
    }
    if bandwidth >= n {
        return Err(Error::InvalidParameter(format!("bandwidth {bandwidth} too large for {n} observations")));
    }
    let resid: Vec<f64> = if trend {
        let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 + 1.0 });
        let y = DVector::from_column_slice(series);
        let fit = ols(&design, &y)?;
        (0..n).map(|i| series[i] - fit.coef[0] - fit.coef[1] * (i as f64 + 1.0)).collect()
    } else {
        let mean = series.iter().sum::<f64>() / n as f64;
        series.iter().map(|v| v - mean).collect()
    };
    let nf = n as f64;
    let mut lrv = resid.iter().map(|e| e * e).sum::<f64>() / nf;
    for j in 1..=bandwidth {
        let w = 1.0 - j as f64 / (bandwidth as f64 + 1.0);
        let gamma = resid[j..].iter().zip(&resid[..n - j]).map(|(a, b)| a * b).sum::<f64>() / nf;
        lrv += 2.0 * w * gamma;
    }
    if !(lrv > 0.0) {
        return Err(Error::ZeroVariance("series".into()));
    }
    let mut partial = 0.0;
    let eta = resid
        .iter()
        .map(|e| {
            partial += e;
            partial * partial
        })
        .sum::<f64>()
        / (nf * nf * lrv);
    let table = if trend { &KPSS_TREND } else { &KPSS_LEVEL };
    let (p, end) = interpolate(table, &KPSS_PROBS, eta);
    let bracket = end.map(|e| if e == 0 { Bracket::AtLeast } else { Bracket::AtMost });
    Ok(TestReport::new("KPSS", eta, p, bracket, Some(bandwidth)))
}

/// Variance ratio at one holding period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRatio {
    pub period: usize,
    pub ratio: f64,
    /// Heteroskedasticity-robust standardized statistic.
    pub z: f64,
    pub p_value: f64,
}

pub const VR_DEFAULT_PERIODS: [usize; 4] = [2, 4, 8, 16];

/// Lo-MacKinlay variance ratios of the increments of the level series
/// `series`, with overlapping observations and the heteroskedasticity-robust
/// standard error.
pub fn variance_ratios(series: &[f64], periods: &[usize]) -> Result<Vec<VarianceRatio>> {
    Ok(vr_components(series, periods)?.0)
}

/// Weight of the lag-`j` autocorrelation in `VR(q) - 1`.
fn vr_weight(q: usize, j: usize) -> f64 {
    if j < q {
        2.0 * (q - j) as f64 / q as f64
    } else {
        0.0
    }
}

/// Variance ratios plus the robust lag-`j` variance terms `δ_j`, `j = 1..max_q`
/// (index `j - 1`).
fn vr_components(series: &[f64], periods: &[usize]) -> Result<(Vec<VarianceRatio>, Vec<f64>)> {
    let max_q = periods.iter().copied().max().unwrap_or(1);
    if periods.contains(&0) {
        return Err(Error::InvalidParameter("holding period must be >= 1".into()));
    }
    if series.len() < 10 * max_q {
        return Err(Error::TooShort {
            needed: 10 * max_q,
            got: series.len(),
        });
    }
    let n = series.len() - 1;
    let nf = n as f64;
    let mu = (series[n] - series[0]) / nf;
    let dev: Vec<f64> = series.windows(2).map(|w| w[1] - w[0] - mu).collect();
    let sq: Vec<f64> = dev.iter().map(|d| d * d).collect();
    let ss: f64 = sq.iter().sum();
    if !(ss > 0.0) {
        return Err(Error::ZeroVariance("series".into()));
    }
    let var_a = ss / (nf - 1.0);
    let deltas: Vec<f64> = (1..max_q)
        .map(|j| sq[j..].iter().zip(&sq[..n - j]).map(|(a, b)| a * b).sum::<f64>() * nf / (ss * ss))
        .collect();
    let ratios = periods
        .iter()
        .map(|&q| {
            if q == 1 {
                return VarianceRatio {
                    period: 1,
                    ratio: 1.0,
                    z: 0.0,
                    p_value: 1.0,
                };
            }
            let qf = q as f64;
            let m = qf * (nf - qf + 1.0) * (1.0 - qf / nf);
            let var_c = (q..=n)
                .map(|k| {
                    let d = series[k] - series[k - q] - qf * mu;
                    d * d
                })
                .sum::<f64>()
                / m;
            let ratio = var_c / var_a;
            let theta: f64 = (1..q).map(|j| vr_weight(q, j).powi(2) * deltas[j - 1]).sum();
            let z = nf.sqrt() * (ratio - 1.0) / theta.sqrt();
            VarianceRatio {
                period: q,
                ratio,
                z,
                p_value: two_sided_normal_p(z),
            }
        })
        .collect();
    Ok((ratios, deltas))
}

const VR_JOINT_DRAWS: usize = 50_000;
const VR_JOINT_SEED: u64 = 0x5652;

/// `P(max_k |Z_k| >= m)` for `Z ~ N(0, corr)`, by Monte Carlo with a fixed
/// seed so that repeated calls agree and the result is monotone in `m`.
fn max_abs_normal_sf(m: f64, corr: &DMatrix<f64>) -> Option<f64> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let k = corr.nrows();
    let l = corr.clone().cholesky()?.l();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(VR_JOINT_SEED);
    let mut e = DVector::zeros(k);
    let mut hits = 0usize;
    for _ in 0..VR_JOINT_DRAWS {
        e.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
        if (&l * &e).iter().any(|z| z.abs() >= m) {
            hits += 1;
        }
    }
    Some(hits as f64 / VR_JOINT_DRAWS as f64)
}

/// Joint variance-ratio test across `periods` on the largest `|z|`. The
/// p-value uses the asymptotic joint normal law of the per-period statistics,
/// with the robust covariance `Σ_j w_q(j) w_q'(j) δ_j`. It always lies in the
/// Bonferroni bracket `[p_min, k · p_min]`, which is returned alongside.
pub fn vr_test_detailed(series: &[f64], periods: &[usize]) -> Result<(TestReport, Vec<VarianceRatio>, f64)> {
    let (ratios, deltas) = vr_components(series, periods)?;
    let tested: Vec<&VarianceRatio> = ratios.iter().filter(|r| r.period > 1).collect();
    let worst = ratios
        .iter()
        .max_by(|a, b| a.z.abs().total_cmp(&b.z.abs()))
        .ok_or_else(|| Error::InvalidParameter("no holding periods".into()))?;
    let p_min = worst.p_value;
    let bonferroni = (p_min * tested.len().max(1) as f64).min(1.0);
    let cov = |a: usize, b: usize| (1..a.min(b)).map(|j| vr_weight(a, j) * vr_weight(b, j) * deltas[j - 1]).sum::<f64>();
    let k = tested.len();
    let corr = DMatrix::from_fn(k, k, |i, j| {
        let (a, b) = (tested[i].period, tested[j].period);
        cov(a, b) / (cov(a, a) * cov(b, b)).sqrt()
    });
    let (p, bracket) = if k <= 1 {
        (p_min, None)
    } else {
        match max_abs_normal_sf(worst.z.abs(), &corr) {
            Some(p) => (p.clamp(p_min, bonferroni), None),
            None => (bonferroni, Some(Bracket::AtMost)),
        }
    };
    let max_q = periods.iter().copied().max();
    let mut report = TestReport::new("VR", worst.z.abs(), p, bracket, max_q);
    let per_period: Vec<String> = tested
        .iter()
        .map(|r| format!("q={} VR={:.4} z={:.3}", r.period, r.ratio, r.z))
        .collect();
    report.detail = Some(format!("Bonferroni p <= {:.4}; {}", bonferroni, per_period.join("; ")));
    Ok((report, ratios, bonferroni))
}

/// [`vr_test_detailed`] without the per-period detail.
pub fn vr_test(series: &[f64], periods: &[usize]) -> Result<TestReport> {
    Ok(vr_test_detailed(series, periods)?.0)
}

/// Jarque-Bera normality test, `T/6 · (S² + (K - 3)²/4)`.
pub fn jb_test(series: &[f64]) -> Result<TestReport> {
    if series.len() < 20 {
        return Err(Error::TooShort {
            needed: 20,
            got: series.len(),
        });
    }
    let s = describe(series)?;
    let stat = series.len() as f64 / 6.0 * (s.skewness.powi(2) + (s.kurtosis - 3.0).powi(2) / 4.0);
    Ok(TestReport::new("JB", stat, chi2_sf(stat, 2.0), None, None))
}

fn chi2_sf(x: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("positive degrees of freedom").sf(x)
}

fn two_sided_normal_p(z: f64) -> f64 {
    2.0 * Normal::standard().sf(z.abs())
}

/// Options for the full test battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryConfig {
    pub adf_lags: usize,
    pub adf_drift: bool,
    pub lbq_lags: usize,
    pub kpss_trend: bool,
    pub kpss_bandwidth: Option<usize>,
    pub vr_periods: Vec<usize>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            adf_lags: ADF_DEFAULT_LAGS,
            adf_drift: true,
            lbq_lags: LBQ_DEFAULT_LAGS,
            kpss_trend: true,
            kpss_bandwidth: None,
            vr_periods: VR_DEFAULT_PERIODS.to_vec(),
        }
    }
}

/// Outcome of one test on one series; tests that cannot run (too short,
/// degenerate) carry the reason instead of a report.
#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub test: &'static str,
    pub result: std::result::Result<TestReport, String>,
}

pub const BATTERY: [&str; 6] = ["DF", "ADF", "LBQ", "KPSS", "VR", "JB"];

/// Runs all six tests on `series`.
pub fn battery(series: &[f64], config: &BatteryConfig) -> Vec<TestOutcome> {
    let bw = config.kpss_bandwidth.unwrap_or_else(|| kpss_bandwidth(series.len()));
    let results = [
        df_test(series),
        adf_test(series, config.adf_lags, config.adf_drift),
        lbq_test(series, config.lbq_lags),
        kpss_test_with_bandwidth(series, config.kpss_trend, bw),
        vr_test(series, &config.vr_periods),
        jb_test(series),
    ];
    BATTERY
        .iter()
        .zip(results)
        .map(|(name, r)| TestOutcome {
            test: name,
            result: r.map_err(|e| e.to_string()),
        })
        .collect()
}

/// Descriptive statistics and the test battery for one state's subseries.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBlock {
    /// State label, 1 or 2.
    pub state: u8,
    pub n: usize,
    pub stats: std::result::Result<DescriptiveStats, String>,
    pub tests: Vec<TestOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubseriesReport {
    pub series_name: String,
    pub blocks: Vec<StateBlock>,
    pub warnings: Vec<String>,
}

/// Splits `series` by `assignment` (same length) and runs `describe` and the
/// battery on each state's observations, kept in time order. Each subseries
/// is tested as if contiguous, although it concatenates separate regime
/// segments.
pub fn subseries_report(series: &DatedSeries, assignment: &StatePath, config: &BatteryConfig) -> Result<SubseriesReport> {
    if assignment.len() != series.len() {
        return Err(Error::Dimension {
            expected: series.len(),
            got: assignment.len(),
        });
    }
    let mut blocks = Vec::new();
    let mut warnings =
        vec!["subseries concatenate non-adjacent regime segments and are tested as contiguous series".to_string()];
    for state in 0..2 {
        let sub: Vec<f64> = series
            .values()
            .iter()
            .zip(assignment.indices())
            .filter(|(_, s)| *s == state)
            .map(|(v, _)| *v)
            .collect();
        let label = state as u8 + 1;
        if sub.is_empty() {
            warnings.push(format!("state {label} has no observations in {}", series.name()));
            continue;
        }
        blocks.push(StateBlock {
            state: label,
            n: sub.len(),
            stats: describe(&sub).map_err(|e| e.to_string()),
            tests: battery(&sub, config),
        });
    }
    Ok(SubseriesReport {
        series_name: series.name().to_string(),
        blocks,
        warnings,
    })
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
    }
}

/// `Q_KS(λ) = 2 Σ (-1)^{k-1} exp(-2 k² λ²)`.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
