//! Ground-truth scenarios and the recovery metrics used to check the sampler.

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::forward_backward::StatePath;
use crate::mcmc::{Block, PosteriorSummary};
use crate::model::{simulate, NhpgModel, ObservationData, StateParams, TransitionParams};
use crate::series::{CovariatePanel, DatedSeries};

/// How the covariate panel is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateSpec {
    /// Independent standard normal columns.
    IidNormal,
    /// Stationary unit-variance AR(1) columns with coefficient `phi`.
    Ar1 { phi: f64 },
    /// A fixed panel, truncated to the first `t + 1` rows.
    Replay(CovariatePanel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub model: NhpgModel,
    pub covariates: CovariateSpec,
    /// Number of observations.
    pub t: usize,
    pub seed: u64,
}

pub const MIN_SCENARIO_LENGTH: usize = 100;

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.t < MIN_SCENARIO_LENGTH {
            return Err(Error::InvalidParameter(format!(
                "scenario length {} below the minimum {MIN_SCENARIO_LENGTH}",
                self.t
            )));
        }
        match &self.covariates {
            CovariateSpec::Ar1 { phi } if !(phi.abs() < 1.0) => {
                return Err(Error::InvalidParameter(format!("AR(1) coefficient {phi} is not stationary")));
            }
            CovariateSpec::Replay(panel) => {
                if panel.len() < self.t + 1 {
                    return Err(Error::TooShort {
                        needed: self.t + 1,
                        got: panel.len(),
                    });
                }
                if panel.names() != self.model.covariate_names.as_slice() {
                    return Err(Error::InvalidParameter(
                        "replayed covariate names do not match the model".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// A generated dataset with its truth.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// Observations, dated from the second panel row on.
    pub y: DatedSeries,
    /// `t + 1` covariate rows; row `k` drives observation `k`.
    pub panel: CovariatePanel,
    pub truth: StatePath,
}

impl SyntheticData {
    pub fn observations(&self) -> Result<ObservationData> {
        ObservationData::lagged(&self.y, &self.panel)
    }
}

fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date")
}

fn make_panel<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Result<CovariatePanel> {
    let rows = scenario.t + 1;
    let names = scenario.model.covariate_names.clone();
    let k = names.len();
    let dates: Vec<NaiveDate> = start_date().iter_days().take(rows).collect();
    let matrix = match &scenario.covariates {
        CovariateSpec::IidNormal => {
            let mut m = DMatrix::zeros(rows, k);
            for i in 0..rows {
                for j in 0..k {
                    m[(i, j)] = StandardNormal.sample(rng);
                }
            }
            m
        }
        CovariateSpec::Ar1 { phi } => {
            let innovation_sd = (1.0 - phi * phi).sqrt();
            let mut m = DMatrix::zeros(rows, k);
            for j in 0..k {
                let mut x: f64 = StandardNormal.sample(rng);
                for i in 0..rows {
                    if i > 0 {
                        let e: f64 = StandardNormal.sample(rng);
                        x = phi * x + innovation_sd * e;
                    }
                    m[(i, j)] = x;
                }
            }
            m
        }
        CovariateSpec::Replay(p) => return Ok(p.rows(&(0..rows).collect::<Vec<_>>())),
    };
    CovariatePanel::new(dates, names, matrix)
}

/// Simulates covariates, the hidden path (initial state uniform) and the
/// observations.
pub fn generate<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Result<SyntheticData> {
    scenario.validate()?;
    let panel = make_panel(scenario, rng)?;
    let z1 = usize::from(rng.random::<bool>());
    let (y, truth) = simulate(&scenario.model, &panel, z1, rng)?;
    Ok(SyntheticData { y, panel, truth })
}

/// [`generate`] on the scenario's own seed.
pub fn generate_seeded(scenario: &Scenario) -> Result<SyntheticData> {
    generate(scenario, &mut ChaCha8Rng::seed_from_u64(scenario.seed))
}

fn two_covariates() -> Vec<String> {
    vec!["x1".into(), "x2".into()]
}

/// States one and two differ in mean by three state-2 standard deviations and
/// in variance by a factor of four; transitions depend on both covariates.
pub fn well_separated(t: usize, seed: u64) -> Scenario {
    Scenario {
        name: "well-separated".into(),
        model: NhpgModel::new(
            StateParams::new(vec![1.5, 0.5, -0.3], 4.0).expect("valid"),
            StateParams::new(vec![-1.5, 0.2, 0.4], 1.0).expect("valid"),
            TransitionParams {
                beta1: vec![2.5, 0.6, -0.4],
                beta2: vec![2.5, -0.5, 0.5],
            },
            two_covariates(),
        )
        .expect("valid model"),
        covariates: CovariateSpec::IidNormal,
        t,
        seed,
    }
}

/// Like [`well_separated`] but with constant stay probabilities 0.95 and 0.90.
pub fn homogeneous(t: usize, seed: u64) -> Scenario {
    let logit = |p: f64| (p / (1.0 - p)).ln();
    let mut s = well_separated(t, seed);
    s.name = "homogeneous".into();
    s.model.transitions = TransitionParams {
        beta1: vec![logit(0.95), 0.0, 0.0],
        beta2: vec![logit(0.90), 0.0, 0.0],
    };
    s
}

/// Both states share the same regression and transition coefficients.
pub fn indistinguishable(t: usize, seed: u64) -> Scenario {
    let state = StateParams::new(vec![0.0, 0.3, 0.0], 1.0).expect("valid");
    let beta = vec![1.0, 0.3, -0.2];
    Scenario {
        name: "indistinguishable".into(),
        model: NhpgModel::new(
            state.clone(),
            state,
            TransitionParams {
                beta1: beta.clone(),
                beta2: beta,
            },
            two_covariates(),
        )
        .expect("valid model"),
        covariates: CovariateSpec::IidNormal,
        t,
        seed,
    }
}

pub fn canonical(name: &str, t: usize, seed: u64) -> Option<Scenario> {
    match name {
        "well-separated" => Some(well_separated(t, seed)),
        "homogeneous" => Some(homogeneous(t, seed)),
        "indistinguishable" => Some(indistinguishable(t, seed)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageEntry {
    pub name: String,
    pub state: u8,
    pub block: Block,
    pub truth: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryMetrics {
    pub coverage: Vec<CoverageEntry>,
    pub coverage_rate: f64,
    /// Share of dates whose assigned state matches the truth after choosing
    /// the better of the two label maps.
    pub accuracy: f64,
    /// The fitted labels were swapped relative to the truth.
    pub swapped: bool,
    /// Mean squared error of the smoothed `P(Z_t = 1)` against the aligned
    /// true indicator.
    pub brier: f64,
}

/// Compares a fit with the truth. Labels are aligned to maximise accuracy
/// and the truth's parameter blocks are swapped along with them.
pub fn score_recovery(fit: &PosteriorSummary, truth_model: &NhpgModel, truth_path: &StatePath) -> Result<RecoveryMetrics> {
    let n = truth_path.len();
    if fit.assigned.len() != n || fit.smoothed_p1.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: fit.assigned.len(),
        });
    }
    if fit.covariate_names != truth_model.covariate_names {
        return Err(Error::InvalidParameter("fit and truth use different covariates".into()));
    }
    let matches = fit
        .assigned
        .iter()
        .zip(truth_path.labels())
        .filter(|(a, b)| a == b)
        .count();
    let raw = matches as f64 / n as f64;
    let swapped = 1.0 - raw > raw;
    let accuracy = raw.max(1.0 - raw);
    let mut model = truth_model.clone();
    if swapped {
        model.swap_labels();
    }
    let brier = fit
        .smoothed_p1
        .iter()
        .zip(truth_path.indices())
        .map(|(p, z)| {
            let first = (z == 0) != swapped;
            (p - f64::from(u8::from(first))).powi(2)
        })
        .sum::<f64>()
        / n as f64;
    let terms: Vec<String> = std::iter::once("intercept".to_string())
        .chain(model.covariate_names.iter().cloned())
        .collect();
    let mut coverage = Vec::new();
    for c in &fit.coefficients {
        let j = terms
            .iter()
            .position(|t| *t == c.name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown coefficient {}", c.name)))?;
        let s = usize::from(c.state - 1);
        let truth = match c.block {
            Block::Mean => model.state(s).coefficients[j],
            Block::Transition => model.transitions.beta(s)[j],
        };
        coverage.push(CoverageEntry {
            name: c.name.clone(),
            state: c.state,
            block: c.block,
            truth,
            covered: c.q025 <= truth && truth <= c.q975,
        });
    }
    let coverage_rate = coverage.iter().filter(|c| c.covered).count() as f64 / coverage.len().max(1) as f64;
    Ok(RecoveryMetrics {
        coverage,
        coverage_rate,
        accuracy,
        swapped,
        brier,
    })
}
