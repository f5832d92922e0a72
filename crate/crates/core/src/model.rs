//! The two-state NHPG generative model.
//!
//! ```text
//! Y_t | Z_t = s        ~ N(x_{t-1} · B_s, σ²_s)
//! P(Z_{t+1} = i | Z_t = i) = logistic(x_t · β_i)
//! ```
//!
//! Off-diagonal logistic coefficients are fixed at zero for identifiability,
//! so each state carries a single coefficient vector `β_i`.

use std::f64::consts::PI;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward_backward::StatePath;
use crate::series::{CovariatePanel, DatedSeries};

/// Emission regression of one hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateParams {
    pub coefficients: Vec<f64>,
    pub sigma2: f64,
}

impl StateParams {
    pub fn new(coefficients: Vec<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {sigma2}")));
        }
        if coefficients.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("non-finite regression coefficient".into()));
        }
        Ok(Self {
            coefficients,
            sigma2,
        })
    }

    pub fn mean(&self, row: &[f64]) -> f64 {
        dot(row, &self.coefficients)
    }
}

/// Self-transition logistic coefficients of both states.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionParams {
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
}

impl TransitionParams {
    pub fn beta(&self, state: usize) -> &[f64] {
        if state == 0 {
            &self.beta1
        } else {
            &self.beta2
        }
    }

    pub fn zeros(r: usize) -> Self {
        Self {
            beta1: vec![0.0; r],
            beta2: vec![0.0; r],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NhpgModel {
    pub state1: StateParams,
    pub state2: StateParams,
    pub transitions: TransitionParams,
    pub covariate_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    b1: Vec<f64>,
    sigma2_1: f64,
    b2: Vec<f64>,
    sigma2_2: f64,
    beta1: Vec<f64>,
    beta2: Vec<f64>,
    covariate_names: Vec<String>,
}

impl NhpgModel {
    pub fn new(
        state1: StateParams,
        state2: StateParams,
        transitions: TransitionParams,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let r = covariate_names.len() + 1;
        for (what, len) in [
            ("b1", state1.coefficients.len()),
            ("b2", state2.coefficients.len()),
            ("beta1", transitions.beta1.len()),
            ("beta2", transitions.beta2.len()),
        ] {
            if len != r {
                return Err(Error::InvalidParameter(format!(
                    "{what} has length {len}, design dimension is {r}"
                )));
            }
        }
        if transitions.beta1.iter().chain(&transitions.beta2).any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("non-finite transition coefficient".into()));
        }
        Ok(Self {
            state1,
            state2,
            transitions,
            covariate_names,
        })
    }

    /// Design dimension `r`, including the intercept.
    pub fn dim(&self) -> usize {
        self.covariate_names.len() + 1
    }

    pub fn state(&self, s: usize) -> &StateParams {
        if s == 0 {
            &self.state1
        } else {
            &self.state2
        }
    }

    /// Swaps the two state labels in every parameter block.
    pub fn swap_labels(&mut self) {
        std::mem::swap(&mut self.state1, &mut self.state2);
        std::mem::swap(&mut self.transitions.beta1, &mut self.transitions.beta2);
    }

    /// `P(stay in state s)` at each emission step. Entry `k` governs the move
    /// from emission `k - 1` into emission `k`; entry 0 is unused.
    pub fn stay_probabilities(&self, data: &ObservationData) -> Vec<[f64; 2]> {
        (0..data.len())
            .map(|k| {
                let row = data.row(k);
                [
                    logistic(dot(row, &self.transitions.beta1)),
                    logistic(dot(row, &self.transitions.beta2)),
                ]
            })
            .collect()
    }

    /// Gaussian log-densities of every observation under each state.
    pub fn log_emissions(&self, data: &ObservationData) -> Vec<[f64; 2]> {
        (0..data.len())
            .map(|k| {
                let row = data.row(k);
                let y = data.y[k];
                [
                    emission_logdensity(y, row, &self.state1),
                    emission_logdensity(y, row, &self.state2),
                ]
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument {
            b1: self.state1.coefficients.clone(),
            sigma2_1: self.state1.sigma2,
            b2: self.state2.coefficients.clone(),
            sigma2_2: self.state2.sigma2,
            beta1: self.transitions.beta1.clone(),
            beta2: self.transitions.beta2.clone(),
            covariate_names: self.covariate_names.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        Self::new(
            StateParams::new(doc.b1, doc.sigma2_1)?,
            StateParams::new(doc.b2, doc.sigma2_2)?,
            TransitionParams {
                beta1: doc.beta1,
                beta2: doc.beta2,
            },
            doc.covariate_names,
        )
    }
}

/// Observations paired with the design rows that drive them. Row `k` is the
/// covariate row dated one step before observation `k`: it is the regressor
/// of `y_k` and also drives the transition into the hidden state at `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationData {
    y: Vec<f64>,
    /// Row-major `T × r` design, intercept first.
    rows: Vec<f64>,
    dim: usize,
    dates: Vec<NaiveDate>,
    covariate_names: Vec<String>,
}

impl ObservationData {
    /// `design` must carry the intercept as its first column.
    pub fn new(y: Vec<f64>, design: DMatrix<f64>, dates: Vec<NaiveDate>, covariate_names: Vec<String>) -> Result<Self> {
        if design.nrows() != y.len() || dates.len() != y.len() {
            return Err(Error::Dimension {
                expected: y.len(),
                got: design.nrows().min(dates.len()),
            });
        }
        if design.ncols() != covariate_names.len() + 1 {
            return Err(Error::Dimension {
                expected: covariate_names.len() + 1,
                got: design.ncols(),
            });
        }
        if y.iter().chain(design.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite observation or design entry".into()));
        }
        let dim = design.ncols();
        let rows = design.transpose().as_slice().to_vec();
        Ok(Self {
            y,
            rows,
            dim,
            dates,
            covariate_names,
        })
    }

    /// Pairs each observation with the panel row dated immediately before it.
    /// Observations whose date is the first panel date have no lagged row and
    /// are dropped; observation dates missing from the panel are an error.
    pub fn lagged(y: &DatedSeries, panel: &CovariatePanel) -> Result<Self> {
        let mut ys = Vec::with_capacity(y.len());
        let mut rows = Vec::with_capacity(y.len());
        let mut dates = Vec::with_capacity(y.len());
        let mut j = 0;
        for (date, value) in y.dates().iter().zip(y.values()) {
            while j < panel.len() && panel.dates()[j] < *date {
                j += 1;
            }
            if j == panel.len() || panel.dates()[j] != *date {
                return Err(Error::parse("design", format!("no covariate row for {date}")));
            }
            if j == 0 {
                continue;
            }
            ys.push(*value);
            rows.push(j - 1);
            dates.push(*date);
        }
        let r = panel.design_dim();
        let design = DMatrix::from_fn(rows.len(), r, |i, c| {
            if c == 0 {
                1.0
            } else {
                panel.matrix()[(rows[i], c - 1)]
            }
        });
        Self::new(ys, design, dates, panel.names().to_vec())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn design(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.rows)
    }

    /// Design row `k`, intercept first.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k * self.dim..(k + 1) * self.dim]
    }

    /// Copy of the data with the observations replaced.
    pub fn with_y(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: y.len(),
            });
        }
        Ok(Self { y, ..self.clone() })
    }
}

/// `(p_ii, 1 - p_ii)` with `p_ii = logistic(x_t · β_i)`.
pub fn transition_row(x_t: &[f64], beta_i: &[f64]) -> Result<(f64, f64)> {
    if x_t.len() != beta_i.len() {
        return Err(Error::Dimension {
            expected: x_t.len(),
            got: beta_i.len(),
        });
    }
    // Both entries from the logistic so that neither rounds to zero.
    let eta = dot(x_t, beta_i);
    Ok((logistic(eta), logistic(-eta)))
}

/// Log-density of `N(x_prev · B_s, σ²_s)` at `y_t`.
pub fn emission_logdensity(y_t: f64, x_prev: &[f64], state: &StateParams) -> f64 {
    let resid = y_t - state.mean(x_prev);
    -0.5 * (2.0 * PI * state.sigma2).ln() - 0.5 * resid * resid / state.sigma2
}

/// Forward simulation on a covariate panel. The hidden state of the first
/// emission is `z1` (0 or 1); observation `k` is dated at panel row `k + 1`
/// and uses panel row `k` both as its regressor and to draw its state from the
/// previous one. Returns `panel.len() - 1` observations and their states.
pub fn simulate<R: Rng + ?Sized>(
    model: &NhpgModel,
    covariates: &CovariatePanel,
    z1: usize,
    rng: &mut R,
) -> Result<(DatedSeries, StatePath)> {
    if covariates.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: covariates.len(),
        });
    }
    if covariates.design_dim() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: covariates.design_dim(),
        });
    }
    if z1 > 1 {
        return Err(Error::InvalidParameter(format!("initial state index {z1} not in {{0, 1}}")));
    }
    let n = covariates.len() - 1;
    let mut states = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut z = z1;
    for k in 0..n {
        let row = covariates.design_row(k);
        if k > 0 {
            let stay = logistic(dot(&row, model.transitions.beta(z)));
            if rng.random::<f64>() >= stay {
                z = 1 - z;
            }
        }
        let state = model.state(z);
        let noise: f64 = Normal::new(0.0, state.sigma2.sqrt())
            .expect("sigma2 validated positive")
            .sample(rng);
        ys.push(state.mean(&row) + noise);
        states.push(z);
    }
    let y = DatedSeries::new("y", covariates.dates()[1..].to_vec(), ys)?;
    Ok((y, StatePath::from_indices(states)))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable `1 / (1 + e^{-η})`.
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}
