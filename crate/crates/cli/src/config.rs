use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use nhpg_core::mcmc::{McmcConfig, Priors};
use nhpg_core::model::{NhpgModel, StateParams, TransitionParams};
use nhpg_core::series::DATE_FORMAT;
use nhpg_core::stats::BatteryConfig;
use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    Price,
    LogPrice,
    LogReturn,
}

impl Transform {
    pub fn as_str(self) -> &'static str {
        match self {
            Transform::Price => "price",
            Transform::LogPrice => "log-price",
            Transform::LogReturn => "log-return",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub price: PathBuf,
    /// Column of the price file to use; the first value column by default.
    pub price_column: Option<String>,
    #[serde(default)]
    pub covariates: Vec<PathBuf>,
    pub start: Option<String>,
    pub end: Option<String>,
    #[serde(default = "default_transform")]
    pub transform: Transform,
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn default_transform() -> Transform {
    Transform::LogReturn
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestsConfig {
    pub adf_lags: Option<usize>,
    pub adf_drift: Option<bool>,
    pub lbq_lags: Option<usize>,
    pub kpss_trend: Option<bool>,
    pub kpss_bandwidth: Option<usize>,
    pub vr_periods: Option<Vec<usize>>,
    /// Series the battery runs on; all three transforms by default.
    pub series: Option<Vec<Transform>>,
    /// Smoothed-probability CSV from `fit`; enables the per-state report.
    pub assignment: Option<PathBuf>,
}

impl TestsConfig {
    pub fn battery(&self) -> BatteryConfig {
        let d = BatteryConfig::default();
        BatteryConfig {
            adf_lags: self.adf_lags.unwrap_or(d.adf_lags),
            adf_drift: self.adf_drift.unwrap_or(d.adf_drift),
            lbq_lags: self.lbq_lags.unwrap_or(d.lbq_lags),
            kpss_trend: self.kpss_trend.unwrap_or(d.kpss_trend),
            kpss_bandwidth: self.kpss_bandwidth.or(d.kpss_bandwidth),
            vr_periods: self.vr_periods.clone().unwrap_or(d.vr_periods),
        }
    }

    pub fn series(&self) -> Vec<Transform> {
        self.series
            .clone()
            .unwrap_or_else(|| vec![Transform::Price, Transform::LogPrice, Transform::LogReturn])
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Credible intervals are `1 - level`; a coefficient is significant when
    /// its interval excludes zero.
    #[serde(default = "default_level")]
    pub level: f64,
    pub data: DataConfig,
    #[serde(default)]
    pub priors: Priors,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub tests: TestsConfig,
}

fn default_level() -> f64 {
    0.05
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {}", path.display(), e.message())))
}

/// Relative paths in a config file are resolved against its directory.
fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn parse_date(what: &str, s: &str) -> Result<NaiveDate, Failure> {
    NaiveDate::parse_from_str(s, DATE_FORMAT)
        .map_err(|_| Failure::Config(format!("{what} `{s}` is not a YYYY-MM-DD date")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let mut cfg: RunConfig = read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.output_dir = resolve(base, &cfg.output_dir);
        cfg.data.price = resolve(base, &cfg.data.price);
        for c in &mut cfg.data.covariates {
            *c = resolve(base, c);
        }
        if let Some(a) = &mut cfg.tests.assignment {
            *a = resolve(base, a);
        }
        Ok(cfg)
    }

    pub fn window(&self) -> Result<(Option<NaiveDate>, Option<NaiveDate>), Failure> {
        let start = self.data.start.as_deref().map(|s| parse_date("start", s)).transpose()?;
        let end = self.data.end.as_deref().map(|s| parse_date("end", s)).transpose()?;
        Ok((start, end))
    }

    /// Checks everything that does not need the data. Input files are
    /// checked at run start by [`RunConfig::check_inputs`].
    pub fn validate(&self) -> Result<(), Failure> {
        let config = |e: nhpg_core::Error| Failure::Config(e.to_string());
        if let (Some(s), Some(e)) = self.window()? {
            if s >= e {
                return Err(Failure::Config(format!("window start {s} is not before end {e}")));
            }
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Failure::Config(format!("level must be in (0, 1), got {}", self.level)));
        }
        self.mcmc.validate().map_err(config)?;
        self.priors.validate(self.priors_dim()).map_err(config)?;
        let battery = self.tests.battery();
        if battery.lbq_lags == 0 {
            return Err(Failure::Config("lbq_lags must be at least 1".into()));
        }
        if battery.vr_periods.is_empty() || battery.vr_periods.iter().any(|&q| q < 2) {
            return Err(Failure::Config("vr_periods must be a nonempty list of periods >= 2".into()));
        }
        Ok(())
    }

    // Prior mean vectors are checked against the design dimension once the
    // covariates are known; here only their internal consistency matters.
    fn priors_dim(&self) -> usize {
        [self.priors.mean_b0.len(), self.priors.mean_beta0.len()]
            .into_iter()
            .find(|&n| n > 0)
            .unwrap_or(1)
    }

    pub fn check_inputs(&self, with_covariates: bool) -> Result<(), Failure> {
        let mut paths = vec![&self.data.price];
        if with_covariates {
            paths.extend(&self.data.covariates);
        }
        for p in paths {
            if !p.is_file() {
                return Err(Failure::Ingest(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub covariate_names: Vec<String>,
    pub b1: Vec<f64>,
    pub sigma2_1: f64,
    pub b2: Vec<f64>,
    pub sigma2_2: f64,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
}

impl ModelConfig {
    pub fn build(&self) -> nhpg_core::Result<NhpgModel> {
        NhpgModel::new(
            StateParams::new(self.b1.clone(), self.sigma2_1)?,
            StateParams::new(self.b2.clone(), self.sigma2_2)?,
            TransitionParams {
                beta1: self.beta1.clone(),
                beta2: self.beta2.clone(),
            },
            self.covariate_names.clone(),
        )
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CovariatesConfig {
    IidNormal,
    Ar1 { phi: f64 },
    /// Replays the columns of a CSV in the series format.
    Replay { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// A canonical scenario name, or any label when `model` is given.
    pub name: String,
    pub t: usize,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    pub covariates: Option<CovariatesConfig>,
    pub model: Option<ModelConfig>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let mut cfg: ScenarioConfig = read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.output_dir = resolve(base, &cfg.output_dir);
        if let Some(CovariatesConfig::Replay { path }) = &mut cfg.covariates {
            *path = resolve(base, path);
        }
        Ok(cfg)
    }
}
