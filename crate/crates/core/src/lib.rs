//! Non-homogeneous Pólya-Gamma hidden Markov model (NHPG) for two-regime
//! time series.
//!
//! Observations follow a per-state Gaussian regression on the previous
//! period's covariates, and the hidden two-state chain has self-transition
//! probabilities `logistic(x_t · β_i)` driven by the same covariates. The
//! posterior is explored with a Gibbs sampler that alternates
//!
//! 1. forward filtering / backward sampling of the hidden path,
//! 2. conjugate Normal/Inverse-Gamma updates of each state's regression,
//! 3. Pólya-Gamma augmented updates of the logistic transition coefficients.
//!
//! The crate also ships the descriptive statistics and unit-root,
//! stationarity, autocorrelation, random-walk and normality tests used to
//! characterise the series and the per-state subseries.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{} vs {} (tol {})", a, b, $tol);
    }};
}

pub mod error;
pub mod forward_backward;
mod linalg;
pub mod mcmc;
pub mod model;
pub mod polya_gamma;
pub mod series;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
pub use forward_backward::{backward_sample, forward_pass, smoothed_marginals, ForwardLattice, StatePath};
pub use mcmc::{
    diagnostics, run_chain, run_chains, summarize, McmcConfig, McmcDraws, PosteriorSummary, Priors,
};
pub use model::{NhpgModel, ObservationData, StateParams, TransitionParams};
pub use series::{align, describe, log_returns, zscore_normalize, CovariatePanel, DatedSeries, DescriptiveStats};
