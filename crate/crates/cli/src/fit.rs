use std::collections::HashMap;

use chrono::NaiveDate;
use nhpg_core::mcmc::{
    diagnostics, run_chains, summarize, write_coefficients_csv, write_smoothed_csv, Checkpoint, FallbackCounts,
    IntervalSummary, PosteriorSummary,
};
use nhpg_core::series::{
    align, format_float, log_returns, merge_columns, read_csv_file, zscore_normalize, DatedSeries, Normalization,
    DATE_FORMAT,
};
use nhpg_core::ObservationData;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Transform};
use crate::{Artifacts, Failure};

pub const COEFFICIENTS: &str = "coefficients.csv";
pub const SMOOTHED: &str = "smoothed.csv";
pub const MODEL: &str = "model.json";
pub const DIAGNOSTICS: &str = "diagnostics.json";
pub const PLOT_DATA: &str = "plot_data.csv";
pub const DRAWS: &str = "draws.json";

pub const ALIGNMENT_RULE: &str =
    "covariates carried forward onto the price calendar; normalized with moments of the whole window";
pub const SIGNIFICANCE_RULE: &str = "equal-tailed credible interval excludes zero";

/// Contents of `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub transform: String,
    pub observations: usize,
    pub first_date: String,
    pub last_date: String,
    pub covariate_names: Vec<String>,
    pub alignment: String,
    /// Column means and standard deviations removed before fitting.
    pub normalization: Option<Normalization>,
    pub level: f64,
    pub significance_rule: String,
    /// Posterior mean parameters in the model JSON format.
    pub posterior_mean: serde_json::Value,
    pub sigma2: [IntervalSummary; 2],
    pub state_sizes: [usize; 2],
    pub retained_draws: usize,
    pub chains: usize,
    pub seed: u64,
    pub fallbacks: FallbackCounts,
}

pub struct FitOutput {
    pub artifacts: Artifacts,
    pub summary: PosteriorSummary,
    pub warnings: Vec<String>,
}

/// Reads the configured column of the price file.
pub fn load_price(cfg: &RunConfig) -> Result<DatedSeries, Failure> {
    let columns = read_csv_file(&cfg.data.price).map_err(Failure::ingest)?;
    match &cfg.data.price_column {
        None => columns.into_iter().next(),
        Some(name) => columns.into_iter().find(|c| c.name() == name),
    }
    .ok_or_else(|| {
        Failure::Ingest(format!(
            "{}: no column {}",
            cfg.data.price.display(),
            cfg.data.price_column.as_deref().unwrap_or("after the date")
        ))
    })
}

pub fn transform(series: &DatedSeries, t: Transform) -> Result<DatedSeries, Failure> {
    let out = match t {
        Transform::Price => Ok(series.clone()),
        Transform::LogPrice => series.ln(),
        Transform::LogReturn => log_returns(series),
    };
    Ok(out.map_err(Failure::ingest)?.renamed(t.as_str()))
}

/// Reads, aligns, windows and transforms the inputs. Covariates are
/// normalized over the whole window.
pub fn prepare(cfg: &RunConfig) -> Result<(ObservationData, DatedSeries, Option<Normalization>), Failure> {
    cfg.validate()?;
    cfg.check_inputs(true)?;
    let price = load_price(cfg)?;
    let groups = cfg
        .data
        .covariates
        .iter()
        .map(|p| read_csv_file(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::ingest)?;
    let covariates = merge_columns(groups).map_err(Failure::ingest)?;
    let (aligned, panel) = align(&price, &covariates).map_err(Failure::ingest)?;
    let (start, end) = cfg.window()?;
    let aligned = aligned.window(start, end);
    let mut panel = panel.window(start, end);
    if aligned.len() < 2 {
        return Err(Failure::Ingest(format!(
            "only {} aligned observations inside the window",
            aligned.len()
        )));
    }
    if cfg.data.normalize && panel.n_covariates() > 0 {
        panel = zscore_normalize(&panel).map_err(Failure::ingest)?;
    }
    let y = transform(&aligned, cfg.data.transform)?;
    let obs = ObservationData::lagged(&y, &panel).map_err(Failure::ingest)?;
    Ok((obs, aligned, panel.normalization().cloned()))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> nhpg_core::Result<()>) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Failure::Io(e.to_string()))?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn plot_data(summary: &PosteriorSummary, obs: &ObservationData, prices: &DatedSeries) -> Result<Vec<u8>, Failure> {
    // Log-returns of the untransformed input, when it is a positive series.
    let returns: HashMap<NaiveDate, f64> = log_returns(prices)
        .map(|r| r.dates().iter().copied().zip(r.values().iter().copied()).collect())
        .unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Io(e.to_string());
    w.write_record(["date", "y", "log_return", "smoothed_p_state1"]).map_err(io)?;
    for ((d, y), p) in summary.dates.iter().zip(obs.y()).zip(&summary.smoothed_p1) {
        w.write_record([
            d.format(DATE_FORMAT).to_string(),
            format_float(*y),
            returns.get(d).map(|r| format_float(*r)).unwrap_or_default(),
            format_float(*p),
        ])
        .map_err(io)?;
    }
    w.into_inner().map_err(|e| Failure::Io(e.to_string()))
}

pub fn run(cfg: &RunConfig) -> Result<FitOutput, Failure> {
    let (obs, prices, normalization) = prepare(cfg)?;
    cfg.priors.validate(obs.dim()).map_err(Failure::config)?;
    let chains = run_chains(&obs, &cfg.priors, &cfg.mcmc).map_err(Failure::numerical)?;
    let summary = summarize(&chains, cfg.level).map_err(Failure::numerical)?;
    let diag = diagnostics(&chains);
    let mut warnings = diag.warnings.clone();
    if summary.state_sizes.contains(&0) {
        warnings.push("one state has no observations assigned by the P > 0.5 rule".into());
    }

    let mean_model = summary.mean_model().map_err(Failure::numerical)?;
    let posterior_mean: serde_json::Value =
        serde_json::from_str(&mean_model.to_json().map_err(Failure::numerical)?).map_err(|e| Failure::Io(e.to_string()))?;
    let date = |d: Option<&NaiveDate>| d.map(|d| d.format(DATE_FORMAT).to_string()).unwrap_or_default();
    let doc = FitDocument {
        transform: cfg.data.transform.as_str().to_string(),
        observations: obs.len(),
        first_date: date(obs.dates().first()),
        last_date: date(obs.dates().last()),
        covariate_names: obs.covariate_names().to_vec(),
        alignment: ALIGNMENT_RULE.to_string(),
        normalization,
        level: cfg.level,
        significance_rule: SIGNIFICANCE_RULE.to_string(),
        posterior_mean,
        sigma2: summary.sigma2.clone(),
        state_sizes: summary.state_sizes,
        retained_draws: summary.retained,
        chains: chains.len(),
        seed: cfg.mcmc.seed,
        fallbacks: summary.fallbacks,
    };

    let mut artifacts = Artifacts::default();
    artifacts.add(COEFFICIENTS, csv_bytes(|b| write_coefficients_csv(&summary, b))?);
    artifacts.add(SMOOTHED, csv_bytes(|b| write_smoothed_csv(&summary, b))?);
    artifacts.add(MODEL, json_bytes(&doc)?);
    artifacts.add(DIAGNOSTICS, json_bytes(&diag)?);
    artifacts.add(PLOT_DATA, plot_data(&summary, &obs, &prices)?);
    artifacts.add(DRAWS, json_bytes(&Checkpoint::from_draws(&chains))?);
    Ok(FitOutput {
        artifacts,
        summary,
        warnings,
    })
}
