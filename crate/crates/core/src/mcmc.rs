//! Gibbs sampler for the NHPG model, posterior summaries and convergence
//! diagnostics.
//!
//! One sweep draws the hidden path by forward filtering / backward sampling,
//! then each state's `(B_s, σ²_s)` from its Normal/Inverse-Gamma conditional,
//! then each `β_i` through Pólya-Gamma augmentation. Labels are fixed by
//! requiring `σ²_1 ≥ σ²_2` after every sweep.

use std::io::Write;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward_backward::{forward_filter, sample_path, smooth, StatePath};
use crate::linalg::CanonicalGaussian;
use crate::model::{dot, logistic, NhpgModel, ObservationData, StateParams, TransitionParams};
use crate::polya_gamma::sample_pg1;
use crate::series::{format_float, DATE_FORMAT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Priors {
    /// Prior mean of `B_s`; empty means the zero vector.
    pub mean_b0: Vec<f64>,
    /// `B_s | σ²_s ~ N(mean_b0, σ²_s / prec_b0 · I)`.
    pub prec_b0: f64,
    pub ig_shape: f64,
    pub ig_scale: f64,
    /// Prior mean of `β_i`; empty means the zero vector.
    pub mean_beta0: Vec<f64>,
    pub prec_beta0: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            mean_b0: Vec::new(),
            prec_b0: 0.01,
            ig_shape: 2.5,
            ig_scale: 0.5,
            mean_beta0: Vec::new(),
            prec_beta0: 0.01,
        }
    }
}

impl Priors {
    pub fn validate(&self, r: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.prec_b0 > 0.0 && self.prec_b0.is_finite()) {
            return bad(format!("prec_b0 must be positive, got {}", self.prec_b0));
        }
        if !(self.prec_beta0 > 0.0 && self.prec_beta0.is_finite()) {
            return bad(format!("prec_beta0 must be positive, got {}", self.prec_beta0));
        }
        if !(self.ig_shape > 1.0 && self.ig_shape.is_finite()) {
            return bad(format!("ig_shape must exceed 1, got {}", self.ig_shape));
        }
        if !(self.ig_scale > 0.0 && self.ig_scale.is_finite()) {
            return bad(format!("ig_scale must be positive, got {}", self.ig_scale));
        }
        for (what, v) in [("mean_b0", &self.mean_b0), ("mean_beta0", &self.mean_beta0)] {
            if !v.is_empty() && v.len() != r {
                return bad(format!("{what} has length {}, design dimension is {r}", v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return bad(format!("{what} has a non-finite entry"));
            }
        }
        Ok(())
    }

    fn mean_b(&self, r: usize) -> DVector<f64> {
        mean_or_zero(&self.mean_b0, r)
    }

    fn mean_beta(&self, r: usize) -> DVector<f64> {
        mean_or_zero(&self.mean_beta0, r)
    }
}

fn mean_or_zero(v: &[f64], r: usize) -> DVector<f64> {
    if v.is_empty() {
        DVector::zeros(r)
    } else {
        DVector::from_column_slice(&v[..r])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
    /// States with fewer assigned observations draw `(B_s, σ²_s)` from the
    /// prior. `None` means `r + 2`.
    pub min_occupancy: Option<usize>,
    /// Restricts the logistic transition coefficients to the intercept
    /// (covariate coefficients stay at zero): a homogeneous HMM.
    pub intercept_only_transitions: bool,
    /// Keep every retained sweep's smoothed marginals, not just their mean.
    pub store_smoothed: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            burn_in: 10_000,
            thin: 2,
            seed: 0,
            chains: 1,
            min_occupancy: None,
            intercept_only_transitions: false,
            store_smoothed: false,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidParameter(format!(
                "burn_in ({}) must be below iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidParameter("thin must be at least 1".into()));
        }
        if self.chains == 0 {
            return Err(Error::InvalidParameter("chains must be at least 1".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    fn keeps(&self, sweep: usize) -> bool {
        sweep >= self.burn_in && (sweep - self.burn_in + 1) % self.thin == 0
    }
}

/// Parameters of one retained sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub state1: StateParams,
    pub state2: StateParams,
    pub transitions: TransitionParams,
}

impl Draw {
    fn from_model(m: &NhpgModel) -> Self {
        Self {
            state1: m.state1.clone(),
            state2: m.state2.clone(),
            transitions: m.transitions.clone(),
        }
    }

    /// Flattened as `B_1, σ²_1, B_2, σ²_2, β_1, β_2`; see [`parameter_names`].
    pub fn values(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend(&self.state1.coefficients);
        v.push(self.state1.sigma2);
        v.extend(&self.state2.coefficients);
        v.push(self.state2.sigma2);
        v.extend(&self.transitions.beta1);
        v.extend(&self.transitions.beta2);
        v
    }
}

/// Names matching [`Draw::values`].
pub fn parameter_names(covariate_names: &[String]) -> Vec<String> {
    let terms: Vec<&str> = std::iter::once("intercept").chain(covariate_names.iter().map(String::as_str)).collect();
    let mut names = Vec::new();
    for s in 1..=2 {
        names.extend(terms.iter().map(|t| format!("B{s}[{t}]")));
        names.push(format!("sigma2_{s}"));
    }
    for s in 1..=2 {
        names.extend(terms.iter().map(|t| format!("beta{s}[{t}]")));
    }
    names
}

/// How often a conditional fell back to its prior because of sparse data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackCounts {
    /// Sweeps in which state `s` had too few observations for its regression.
    pub mean: [usize; 2],
    /// Sweeps in which state `s` had no outgoing transitions.
    pub transition: [usize; 2],
}

#[derive(Debug, Clone)]
pub struct McmcDraws {
    pub chain: usize,
    pub draws: Vec<Draw>,
    pub paths: Vec<StatePath>,
    /// Per retained sweep, when requested in [`McmcConfig::store_smoothed`].
    pub smoothed: Vec<Vec<[f64; 2]>>,
    /// Sum over retained sweeps of the smoothed `P(Z_k = 1)`.
    pub smoothed_p1_sum: Vec<f64>,
    pub fallbacks: FallbackCounts,
    pub covariate_names: Vec<String>,
    pub dates: Vec<NaiveDate>,
}

impl McmcDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Retained draws of parameter `j` in [`Draw::values`] order.
    pub fn trace(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.values()[j]).collect()
    }
}

/// Normal/Inverse-Gamma posterior for one state's regression.
pub struct NigPosterior {
    gaussian: CanonicalGaussian,
    shape: f64,
    scale: f64,
}

impl NigPosterior {
    /// Conditions the prior on `(rows, y)`; with no rows this is the prior.
    pub fn new(rows: &[&[f64]], y: &[f64], r: usize, priors: &Priors) -> Result<Self> {
        let prec = priors.prec_b0;
        let b0 = priors.mean_b(r);
        let mut q = DMatrix::identity(r, r) * prec;
        let mut h = &b0 * prec;
        let mut yy = 0.0;
        for (row, &yk) in rows.iter().zip(y) {
            accumulate(&mut q, &mut h, row, 1.0, yk);
            yy += yk * yk;
        }
        q.fill_upper_triangle_with_lower_triangle();
        let gaussian = CanonicalGaussian::new(q, &h)?;
        let quad = yy + prec * b0.norm_squared() - gaussian.mean().dot(&h);
        Ok(Self {
            gaussian,
            shape: priors.ig_shape + 0.5 * y.len() as f64,
            scale: priors.ig_scale + 0.5 * quad.max(0.0),
        })
    }

    /// Conditional mean of `B` (independent of `σ²`).
    pub fn coefficient_mean(&self) -> Vec<f64> {
        self.gaussian.mean().iter().copied().collect()
    }

    pub fn sigma2_shape_scale(&self) -> (f64, f64) {
        (self.shape, self.scale)
    }

    /// `σ² ~ IG(shape, scale)`, then `B | σ² ~ N(mean, σ² V)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<StateParams> {
        let g = Gamma::new(self.shape, 1.0)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .sample(rng);
        let sigma2 = self.scale / g;
        StateParams::new(self.gaussian.sample(sigma2, rng), sigma2)
    }
}

/// Draws both states' regressions given the path. A state with fewer than
/// `min_occupancy` observations draws from the prior; the returned flags
/// mark those states.
pub fn sample_mean_params<R: Rng + ?Sized>(
    data: &ObservationData,
    path: &StatePath,
    priors: &Priors,
    min_occupancy: usize,
    rng: &mut R,
) -> Result<(StateParams, StateParams, [bool; 2])> {
    check_path(data, path)?;
    let r = data.dim();
    let mut out = Vec::with_capacity(2);
    let mut fell_back = [false; 2];
    for s in 0..2 {
        let idx: Vec<usize> = path.indices().enumerate().filter(|(_, z)| *z == s).map(|(k, _)| k).collect();
        let (rows, ys): (Vec<&[f64]>, Vec<f64>) = if idx.len() < min_occupancy {
            fell_back[s] = true;
            (Vec::new(), Vec::new())
        } else {
            idx.iter().map(|&k| (data.row(k), data.y()[k])).unzip()
        };
        out.push(NigPosterior::new(&rows, &ys, r, priors)?.sample(rng)?);
    }
    let state2 = out.pop().expect("two states");
    let state1 = out.pop().expect("two states");
    Ok((state1, state2, fell_back))
}

fn check_path(data: &ObservationData, path: &StatePath) -> Result<()> {
    if path.len() != data.len() {
        return Err(Error::Dimension {
            expected: data.len(),
            got: path.len(),
        });
    }
    Ok(())
}

/// Draws `β` from its Gaussian conditional given fixed Pólya-Gamma variables:
/// precision `prec · I + Σ ω x xᵀ`, linear term `prec · m + Σ (s - ½) x`.
pub fn sample_beta_given_omega<R: Rng + ?Sized>(
    rows: &[&[f64]],
    stayed: &[bool],
    omega: &[f64],
    mean0: &[f64],
    prec0: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(beta_conditional(rows, stayed, omega, mean0, prec0)?.sample(1.0, rng))
}

fn beta_conditional(
    rows: &[&[f64]],
    stayed: &[bool],
    omega: &[f64],
    mean0: &[f64],
    prec0: f64,
) -> Result<CanonicalGaussian> {
    let d = mean0.len();
    let mut q = DMatrix::identity(d, d) * prec0;
    let mut h = DVector::from_column_slice(mean0) * prec0;
    for ((row, &s), &w) in rows.iter().zip(stayed).zip(omega) {
        accumulate(&mut q, &mut h, &row[..d], w, if s { 0.5 } else { -0.5 });
    }
    q.fill_upper_triangle_with_lower_triangle();
    CanonicalGaussian::new(q, &h)
}

/// `q += w x xᵀ` on the lower triangle and `h += a x`.
fn accumulate(q: &mut DMatrix<f64>, h: &mut DVector<f64>, x: &[f64], w: f64, a: f64) {
    for (i, &xi) in x.iter().enumerate() {
        h[i] += a * xi;
        let wxi = w * xi;
        for (j, &xj) in x[..=i].iter().enumerate() {
            q[(i, j)] += wxi * xj;
        }
    }
}

/// Pólya-Gamma update of both states' transition coefficients given the path
/// and the current coefficients. With `intercept_only`, only the first
/// coefficient is updated and the rest are zero. Flags mark states with no
/// outgoing transitions (drawn from the prior).
pub fn sample_logistic_params<R: Rng + ?Sized>(
    data: &ObservationData,
    path: &StatePath,
    current: &TransitionParams,
    priors: &Priors,
    intercept_only: bool,
    rng: &mut R,
) -> Result<(TransitionParams, [bool; 2])> {
    check_path(data, path)?;
    let r = data.dim();
    let d = if intercept_only { 1 } else { r };
    let mean0 = priors.mean_beta(r);
    let z: Vec<usize> = path.indices().collect();
    let mut fell_back = [false; 2];
    let mut betas: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for i in 0..2 {
        let old = &current.beta(i)[..d];
        let mut rows = Vec::new();
        let mut stayed = Vec::new();
        let mut omega = Vec::new();
        for k in 1..z.len() {
            if z[k - 1] != i {
                continue;
            }
            let row = &data.row(k)[..d];
            omega.push(sample_pg1(dot(row, old), rng));
            rows.push(row);
            stayed.push(z[k] == i);
        }
        fell_back[i] = rows.is_empty();
        let g = beta_conditional(&rows, &stayed, &omega, &mean0.as_slice()[..d], priors.prec_beta0)?;
        let mut beta = g.sample(1.0, rng);
        beta.resize(r, 0.0);
        betas[i] = beta;
    }
    let [beta1, beta2] = betas;
    Ok((TransitionParams { beta1, beta2 }, fell_back))
}

/// Restores `σ²_1 ≥ σ²_2` by swapping labels everywhere. Returns whether a
/// swap happened.
pub fn relabel(model: &mut NhpgModel, path: &mut StatePath, smoothed: Option<&mut [[f64; 2]]>) -> bool {
    if model.state1.sigma2 >= model.state2.sigma2 {
        return false;
    }
    model.swap_labels();
    path.swap_labels();
    if let Some(rows) = smoothed {
        for row in rows {
            row.swap(0, 1);
        }
    }
    true
}

/// Starting path: observations whose squared deviation from the mean is in
/// the upper half go to state 1.
pub fn initial_path(y: &[f64]) -> StatePath {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n.max(1) as f64;
    let sq: Vec<f64> = y.iter().map(|v| (v - mean).powi(2)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sq[b].total_cmp(&sq[a]).then(a.cmp(&b)));
    let mut z = vec![1usize; n];
    for &k in &order[..n / 2] {
        z[k] = 0;
    }
    StatePath::from_indices(z)
}

/// Random stream for chain `chain` of a run seeded with `seed`.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Runs one chain on its own stream `chain_rng(config.seed, chain)`.
pub fn run_chain(data: &ObservationData, priors: &Priors, config: &McmcConfig, chain: usize) -> Result<McmcDraws> {
    config.validate()?;
    let r = data.dim();
    priors.validate(r)?;
    if data.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: data.len() });
    }
    let mut rng = chain_rng(config.seed, chain);
    let min_occ = config.min_occupancy.unwrap_or(r + 2);
    let names = data.covariate_names().to_vec();

    let mut path = initial_path(data.y());
    let (s1, s2, _) = sample_mean_params(data, &path, priors, min_occ, &mut rng)?;
    let (tr, _) = sample_logistic_params(
        data,
        &path,
        &TransitionParams::zeros(r),
        priors,
        config.intercept_only_transitions,
        &mut rng,
    )?;
    let mut model = NhpgModel::new(s1, s2, tr, names.clone())?;
    relabel(&mut model, &mut path, None);

    let retained = config.retained();
    let mut out = McmcDraws {
        chain,
        draws: Vec::with_capacity(retained),
        paths: Vec::with_capacity(retained),
        smoothed: Vec::new(),
        smoothed_p1_sum: vec![0.0; data.len()],
        fallbacks: FallbackCounts::default(),
        covariate_names: names,
        dates: data.dates().to_vec(),
    };

    for sweep in 0..config.iterations {
        let keep = config.keeps(sweep);
        let step = sweep_once(data, &model, priors, config, min_occ, keep, &mut rng).map_err(|e| Error::ChainFailure {
            sweep,
            source: Box::new(e),
            last_valid: Some(Box::new(model.clone())),
        })?;
        let Sweep {
            model: next,
            path: mut new_path,
            mut smoothed,
            fallbacks,
        } = step;
        model = next;
        relabel(&mut model, &mut new_path, smoothed.as_deref_mut());
        for s in 0..2 {
            out.fallbacks.mean[s] += usize::from(fallbacks.0[s]);
            out.fallbacks.transition[s] += usize::from(fallbacks.1[s]);
        }
        if keep {
            let smoothed = smoothed.expect("smoothed computed on retained sweeps");
            for (acc, row) in out.smoothed_p1_sum.iter_mut().zip(&smoothed) {
                *acc += row[0];
            }
            if config.store_smoothed {
                out.smoothed.push(smoothed);
            }
            out.draws.push(Draw::from_model(&model));
            out.paths.push(new_path);
        }
    }
    Ok(out)
}

struct Sweep {
    model: NhpgModel,
    path: StatePath,
    smoothed: Option<Vec<[f64; 2]>>,
    fallbacks: ([bool; 2], [bool; 2]),
}

fn sweep_once<R: Rng + ?Sized>(
    data: &ObservationData,
    model: &NhpgModel,
    priors: &Priors,
    config: &McmcConfig,
    min_occ: usize,
    want_smoothed: bool,
    rng: &mut R,
) -> Result<Sweep> {
    let log_em = model.log_emissions(data);
    let stay = model.stay_probabilities(data);
    let lattice = forward_filter(&log_em, &stay)?;
    let smoothed = want_smoothed.then(|| smooth(&lattice, &stay));
    let path = sample_path(&lattice, &stay, rng);
    let (s1, s2, fb_mean) = sample_mean_params(data, &path, priors, min_occ, rng)?;
    let (tr, fb_tr) =
        sample_logistic_params(data, &path, &model.transitions, priors, config.intercept_only_transitions, rng)?;
    Ok(Sweep {
        model: NhpgModel::new(s1, s2, tr, model.covariate_names.clone())?,
        path,
        smoothed,
        fallbacks: (fb_mean, fb_tr),
    })
}

/// Runs `config.chains` chains concurrently, one stream each.
pub fn run_chains(data: &ObservationData, priors: &Priors, config: &McmcConfig) -> Result<Vec<McmcDraws>> {
    config.validate()?;
    let results: Vec<Result<McmcDraws>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.chains)
            .map(|c| scope.spawn(move || run_chain(data, priors, config, c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect()
    });
    results.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Mean,
    Transition,
}

impl Block {
    pub fn as_str(self) -> &'static str {
        match self {
            Block::Mean => "mean",
            Block::Transition => "transition",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    /// `intercept` or the covariate name.
    pub name: String,
    /// 1 or 2.
    pub state: u8,
    pub block: Block,
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub level: f64,
    pub coefficients: Vec<CoefficientSummary>,
    pub sigma2: [IntervalSummary; 2],
    pub dates: Vec<NaiveDate>,
    /// Mean smoothed `P(Z_t = 1)` over all retained sweeps of all chains.
    pub smoothed_p1: Vec<f64>,
    /// 1 where `P(Z_t = 1) > 0.5`, else 2.
    pub assigned: Vec<u8>,
    pub state_sizes: [usize; 2],
    pub retained: usize,
    pub covariate_names: Vec<String>,
    pub fallbacks: FallbackCounts,
}

impl PosteriorSummary {
    pub fn coefficient(&self, block: Block, state: u8, name: &str) -> Option<&CoefficientSummary> {
        self.coefficients
            .iter()
            .find(|c| c.block == block && c.state == state && c.name == name)
    }

    /// Model at the posterior means.
    pub fn mean_model(&self) -> Result<NhpgModel> {
        let pick = |block, state| -> Vec<f64> {
            self.coefficients
                .iter()
                .filter(|c| c.block == block && c.state == state)
                .map(|c| c.mean)
                .collect()
        };
        NhpgModel::new(
            StateParams::new(pick(Block::Mean, 1), self.sigma2[0].mean)?,
            StateParams::new(pick(Block::Mean, 2), self.sigma2[1].mean)?,
            TransitionParams {
                beta1: pick(Block::Transition, 1),
                beta2: pick(Block::Transition, 2),
            },
            self.covariate_names.clone(),
        )
    }

    pub fn assignment(&self) -> StatePath {
        StatePath::new(self.assigned.clone()).expect("labels are 1 or 2")
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn interval(mut xs: Vec<f64>, level: f64) -> IntervalSummary {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.sort_by(f64::total_cmp);
    IntervalSummary {
        mean,
        lower: quantile(&xs, level / 2.0),
        upper: quantile(&xs, 1.0 - level / 2.0),
    }
}

pub const MIN_SUMMARY_DRAWS: usize = 100;

/// Pools the chains: posterior means, equal-tailed `1 - level` intervals,
/// significance (interval excludes zero), mean smoothed probabilities and the
/// `P(Z_t = 1) > 0.5` state decision.
pub fn summarize(chains: &[McmcDraws], level: f64) -> Result<PosteriorSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level must be in (0, 1), got {level}")));
    }
    let first = chains
        .first()
        .ok_or_else(|| Error::InvalidParameter("no chains to summarize".into()))?;
    let retained: usize = chains.iter().map(McmcDraws::len).sum();
    if retained < MIN_SUMMARY_DRAWS {
        return Err(Error::TooShort {
            needed: MIN_SUMMARY_DRAWS,
            got: retained,
        });
    }
    if chains.iter().any(|c| c.dates != first.dates || c.covariate_names != first.covariate_names) {
        return Err(Error::InvalidParameter("chains were run on different data".into()));
    }
    let r = first.covariate_names.len() + 1;
    let values: Vec<Vec<f64>> = chains.iter().flat_map(|c| c.draws.iter().map(Draw::values)).collect();
    let column = |j: usize| -> Vec<f64> { values.iter().map(|v| v[j]).collect() };
    let terms: Vec<String> = std::iter::once("intercept".to_string())
        .chain(first.covariate_names.iter().cloned())
        .collect();

    let mut coefficients = Vec::new();
    let mut push = |block: Block, state: u8, offset: usize| {
        for (j, name) in terms.iter().enumerate() {
            let iv = interval(column(offset + j), level);
            coefficients.push(CoefficientSummary {
                name: name.clone(),
                state,
                block,
                mean: iv.mean,
                q025: iv.lower,
                q975: iv.upper,
                significant: iv.lower > 0.0 || iv.upper < 0.0,
            });
        }
    };
    push(Block::Mean, 1, 0);
    push(Block::Mean, 2, r + 1);
    push(Block::Transition, 1, 2 * r + 2);
    push(Block::Transition, 2, 3 * r + 2);
    let sigma2 = [interval(column(r), level), interval(column(2 * r + 1), level)];

    let n = first.dates.len();
    let smoothed_p1: Vec<f64> = (0..n)
        .map(|k| chains.iter().map(|c| c.smoothed_p1_sum[k]).sum::<f64>() / retained as f64)
        .collect();
    let assigned: Vec<u8> = smoothed_p1.iter().map(|&p| if p > 0.5 { 1 } else { 2 }).collect();
    let ones = assigned.iter().filter(|&&s| s == 1).count();
    let mut fallbacks = FallbackCounts::default();
    for c in chains {
        for s in 0..2 {
            fallbacks.mean[s] += c.fallbacks.mean[s];
            fallbacks.transition[s] += c.fallbacks.transition[s];
        }
    }
    Ok(PosteriorSummary {
        level,
        coefficients,
        sigma2,
        dates: first.dates.clone(),
        smoothed_p1,
        assigned,
        state_sizes: [ones, n - ones],
        retained,
        covariate_names: first.covariate_names.clone(),
        fallbacks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostics {
    pub name: String,
    /// Potential scale reduction; `None` with a single chain.
    pub rhat: Option<f64>,
    pub ess: f64,
    /// All chains are identical, so `rhat` carries no information.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub chains: usize,
    pub draws_per_chain: usize,
    pub parameters: Vec<ParameterDiagnostics>,
    pub fallbacks: FallbackCounts,
    pub warnings: Vec<String>,
}

pub const RHAT_WARNING: f64 = 1.1;
pub const ESS_WARNING: f64 = 100.0;

/// Gelman-Rubin scale reduction and effective sample size per parameter.
/// Chains are truncated to the shortest one.
pub fn diagnostics(chains: &[McmcDraws]) -> DiagnosticsReport {
    let m = chains.len();
    let n = chains.iter().map(McmcDraws::len).min().unwrap_or(0);
    let names = chains
        .first()
        .map(|c| parameter_names(&c.covariate_names))
        .unwrap_or_default();
    let mut warnings = Vec::new();
    if m < 2 {
        warnings.push("scale reduction needs at least two chains".to_string());
    }
    let mut fallbacks = FallbackCounts::default();
    for c in chains {
        for s in 0..2 {
            fallbacks.mean[s] += c.fallbacks.mean[s];
            fallbacks.transition[s] += c.fallbacks.transition[s];
        }
    }
    for s in 0..2 {
        if fallbacks.mean[s] > 0 {
            warnings.push(format!(
                "state {} regression drawn from the prior in {} sweeps (too few observations)",
                s + 1,
                fallbacks.mean[s]
            ));
        }
        if fallbacks.transition[s] > 0 {
            warnings.push(format!(
                "state {} transition coefficients drawn from the prior in {} sweeps (no transitions)",
                s + 1,
                fallbacks.transition[s]
            ));
        }
    }
    if n < 4 {
        warnings.push(format!("only {n} draws per chain; diagnostics skipped"));
        return DiagnosticsReport {
            chains: m,
            draws_per_chain: n,
            parameters: Vec::new(),
            fallbacks,
            warnings,
        };
    }
    let mut parameters = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let traces: Vec<Vec<f64>> = chains.iter().map(|c| c.draws[..n].iter().map(|d| d.values()[j]).collect()).collect();
        let d = scale_reduction(&traces);
        if d.degenerate {
            warnings.push(format!("{name}: chains are identical; scale reduction is uninformative"));
        } else if let Some(rhat) = d.rhat.filter(|r| *r > RHAT_WARNING || r.is_nan()) {
            warnings.push(format!("{name}: scale reduction {rhat:.3} exceeds {RHAT_WARNING}"));
        }
        if d.ess < ESS_WARNING {
            warnings.push(format!("{name}: effective sample size {:.0} below {ESS_WARNING}", d.ess));
        }
        parameters.push(ParameterDiagnostics { name: name.clone(), ..d });
    }
    DiagnosticsReport {
        chains: m,
        draws_per_chain: n,
        parameters,
        fallbacks,
        warnings,
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// `R̂` and multi-chain ESS (Geyer's initial positive sequence) for equal
/// length traces.
fn scale_reduction(traces: &[Vec<f64>]) -> ParameterDiagnostics {
    let m = traces.len();
    let n = traces[0].len();
    let nf = n as f64;
    let stats: Vec<(f64, f64)> = traces.iter().map(|t| mean_var(t)).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m as f64;
    let degenerate = m > 1 && traces.iter().all(|t| t == &traces[0]);
    let (b, var_plus) = if m > 1 {
        let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
        let b = nf * mean_var(&means).1;
        (b, (nf - 1.0) / nf * w + b / nf)
    } else {
        (0.0, w)
    };
    let rhat = if m < 2 {
        None
    } else if degenerate {
        Some(1.0)
    } else if w > 0.0 {
        Some((var_plus / w).sqrt())
    } else {
        Some(if b > 0.0 { f64::INFINITY } else { 1.0 })
    };
    let total = (m * n) as f64;
    let ess = if !(var_plus > 0.0) {
        total
    } else {
        // Within-chain autocovariances averaged across chains.
        let acov = |lag: usize| -> f64 {
            traces
                .iter()
                .zip(&stats)
                .map(|(t, (mu, _))| {
                    t[lag..].iter().zip(&t[..n - lag]).map(|(a, b)| (a - mu) * (b - mu)).sum::<f64>() / nf
                })
                .sum::<f64>()
                / m as f64
        };
        let rho = |lag: usize| 1.0 - (w - acov(lag)) / var_plus;
        let mut sum = 0.0;
        let mut lag = 1;
        let mut prev_pair = f64::INFINITY;
        while lag + 1 < n {
            let pair = rho(lag) + rho(lag + 1);
            if pair < 0.0 {
                break;
            }
            let pair = pair.min(prev_pair);
            sum += pair;
            prev_pair = pair;
            lag += 2;
        }
        // τ = -1 + 2 Σ_{pairs} (ρ_{2k} + ρ_{2k+1}) with ρ_0 = 1.
        let tau = (1.0 + 2.0 * sum).max(1.0 / total.log10().max(1.0));
        if degenerate {
            (n as f64 / tau).min(n as f64)
        } else {
            total / tau
        }
    };
    ParameterDiagnostics {
        name: String::new(),
        rhat,
        ess,
        degenerate,
    }
}

/// Coefficient summary CSV: `name,state,block,mean,q025,q975,significant`.
pub fn write_coefficients_csv<W: Write>(summary: &PosteriorSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "state", "block", "mean", "q025", "q975", "significant"])?;
    for c in &summary.coefficients {
        w.write_record([
            c.name.clone(),
            c.state.to_string(),
            c.block.as_str().to_string(),
            format_float(c.mean),
            format_float(c.q025),
            format_float(c.q975),
            c.significant.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Smoothed probability CSV: `date,smoothed_p_state1,assigned_state`.
pub fn write_smoothed_csv<W: Write>(summary: &PosteriorSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "smoothed_p_state1", "assigned_state"])?;
    for ((d, p), s) in summary.dates.iter().zip(&summary.smoothed_p1).zip(&summary.assigned) {
        w.write_record([d.format(DATE_FORMAT).to_string(), format_float(*p), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Retained parameter draws, one batch per chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub parameter_names: Vec<String>,
    pub chains: Vec<CheckpointChain>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointChain {
    pub chain: usize,
    pub draws: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn from_draws(chains: &[McmcDraws]) -> Self {
        Self {
            parameter_names: chains
                .first()
                .map(|c| parameter_names(&c.covariate_names))
                .unwrap_or_default(),
            chains: chains
                .iter()
                .map(|c| CheckpointChain {
                    chain: c.chain,
                    draws: c.draws.iter().map(Draw::values).collect(),
                })
                .collect(),
        }
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.draws.len()).sum()
    }
}

/// Draws `(B_s, σ²_s, β_s)` for both states independently from the prior.
pub fn prior_draw<R: Rng + ?Sized>(r: usize, priors: &Priors, rng: &mut R) -> Result<Draw> {
    priors.validate(r)?;
    let state1 = NigPosterior::new(&[], &[], r, priors)?.sample(rng)?;
    let state2 = NigPosterior::new(&[], &[], r, priors)?.sample(rng)?;
    let beta_prior = beta_conditional(&[], &[], &[], priors.mean_beta(r).as_slice(), priors.prec_beta0)?;
    Ok(Draw {
        state1,
        state2,
        transitions: TransitionParams {
            beta1: beta_prior.sample(1.0, rng),
            beta2: beta_prior.sample(1.0, rng),
        },
    })
}

/// Successive-conditional simulator for checking the sampler against the
/// prior. Starting from a prior draw, each iteration runs one Gibbs sweep on
/// the current synthetic observations and then redraws the observations
/// given the new path and parameters. The chain's stationary law is the
/// joint prior of `(θ, z, y)`, so the recorded parameters (every `thin`
/// iterations, `samples` times) follow the prior with labels ordered by
/// variance. Only the design rows of `data` are used; the state regressions
/// never fall back to the prior.
pub fn successive_conditional<R: Rng + ?Sized>(
    data: &ObservationData,
    priors: &Priors,
    samples: usize,
    thin: usize,
    rng: &mut R,
) -> Result<Vec<Draw>> {
    let r = data.dim();
    let n = data.len();
    let names = data.covariate_names().to_vec();
    let first = prior_draw(r, priors, rng)?;
    let mut model = NhpgModel::new(first.state1, first.state2, first.transitions, names)?;
    // Path from the prior Markov chain, then observations.
    let mut z = Vec::with_capacity(n);
    let mut current = usize::from(rng.random::<bool>());
    for k in 0..n {
        if k > 0 && rng.random::<f64>() >= logistic(dot(data.row(k), model.transitions.beta(current))) {
            current = 1 - current;
        }
        z.push(current);
    }
    let mut data = data.with_y(simulate_observations(&model, data, &z, rng))?;
    let config = McmcConfig {
        min_occupancy: Some(0),
        ..McmcConfig::default()
    };
    let mut out = Vec::with_capacity(samples);
    for it in 0..samples * thin {
        let mut step = sweep_once(&data, &model, priors, &config, 0, false, rng)?;
        relabel(&mut step.model, &mut step.path, None);
        model = step.model;
        let z: Vec<usize> = step.path.indices().collect();
        data = data.with_y(simulate_observations(&model, &data, &z, rng))?;
        if (it + 1) % thin == 0 {
            out.push(Draw::from_model(&model));
        }
    }
    Ok(out)
}

fn simulate_observations<R: Rng + ?Sized>(model: &NhpgModel, data: &ObservationData, z: &[usize], rng: &mut R) -> Vec<f64> {
    z.iter()
        .enumerate()
        .map(|(k, &s)| {
            let st = model.state(s);
            let e: f64 = rand_distr::StandardNormal.sample(rng);
            st.mean(data.row(k)) + st.sigma2.sqrt() * e
        })
        .collect()
}

/// Time-varying transition matrices `[[p11, 1-p11], [1-p22, p22]]` implied by
/// a model at every step.
pub fn transition_matrices(model: &NhpgModel, data: &ObservationData) -> Vec<[[f64; 2]; 2]> {
    model
        .stay_probabilities(data)
        .into_iter()
        .map(|s| [[s[0], 1.0 - s[0]], [1.0 - s[1], s[1]]])
        .collect()
}

/// Posterior mean of the constant stay probabilities `logistic(β_i0)` for
/// intercept-only transition draws.
pub fn mean_stay_probabilities(chains: &[McmcDraws]) -> [f64; 2] {
    let mut acc = [0.0; 2];
    let mut n = 0usize;
    for c in chains {
        for d in &c.draws {
            acc[0] += logistic(d.transitions.beta1[0]);
            acc[1] += logistic(d.transitions.beta2[0]);
            n += 1;
        }
    }
    [acc[0] / n as f64, acc[1] / n as f64]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate;
    use crate::series::CovariatePanel;
    use crate::stats::ks_two_sample;
    use rand_distr::{Normal, StandardNormal};

    fn panel(n: usize, k: usize, rng: &mut ChaCha8Rng) -> CovariatePanel {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates: Vec<NaiveDate> = (0..n).map(|i| start + chrono::Days::new(i as u64)).collect();
        let m = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(rng));
        CovariatePanel::new(dates, (0..k).map(|j| format!("x{j}")).collect(), m).unwrap()
    }

    fn separated_model(names: Vec<String>) -> NhpgModel {
        let r = names.len() + 1;
        let mut b1 = vec![0.0; r];
        let mut b2 = vec![0.0; r];
        b1[0] = 1.5;
        b2[0] = -1.5;
        b1[1] = 0.5;
        b2[1] = -0.3;
        let mut beta1 = vec![0.0; r];
        let mut beta2 = vec![0.0; r];
        beta1[0] = 2.5;
        beta2[0] = 2.5;
        beta1[1] = 0.5;
        beta2[1] = -0.4;
        NhpgModel::new(
            StateParams::new(b1, 4.0).unwrap(),
            StateParams::new(b2, 1.0).unwrap(),
            TransitionParams { beta1, beta2 },
            names,
        )
        .unwrap()
    }

    fn dataset(n: usize, seed: u64) -> (ObservationData, StatePath, NhpgModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = panel(n + 1, 2, &mut rng);
        let model = separated_model(p.names().to_vec());
        let (y, z) = simulate(&model, &p, 0, &mut rng).unwrap();
        (ObservationData::lagged(&y, &p).unwrap(), z, model)
    }

    fn quick_config(seed: u64) -> McmcConfig {
        McmcConfig {
            iterations: 600,
            burn_in: 200,
            thin: 1,
            seed,
            ..McmcConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(McmcConfig::default().validate().is_ok());
        assert_eq!(McmcConfig::default().retained(), 5000);
        let bad = McmcConfig {
            burn_in: 20_000,
            ..McmcConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(McmcConfig { thin: 0, ..McmcConfig::default() }.validate().is_err());
        assert!(Priors { ig_shape: 1.0, ..Priors::default() }.validate(3).is_err());
        assert!(Priors { mean_b0: vec![0.0; 2], ..Priors::default() }.validate(3).is_err());
    }

    #[test]
    fn retained_count_matches_thinning() {
        let (data, _, _) = dataset(120, 1);
        let config = McmcConfig {
            iterations: 57,
            burn_in: 10,
            thin: 4,
            ..McmcConfig::default()
        };
        let draws = run_chain(&data, &Priors::default(), &config, 0).unwrap();
        assert_eq!(draws.len(), (57 - 10) / 4);
        assert_eq!(draws.paths.len(), draws.len());
    }

    #[test]
    fn flat_prior_mean_is_least_squares() {
        // Orthonormal design: columns e1, e2 scaled.
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let y = [2.0, -1.0, 4.0, 3.0];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let priors = Priors {
            prec_b0: 1e-12,
            ..Priors::default()
        };
        let post = NigPosterior::new(&refs, &y, 2, &priors).unwrap();
        let m = post.coefficient_mean();
        assert_close!(m[0], 3.0, 1e-9);
        assert_close!(m[1], 1.0, 1e-9);
        let (shape, scale) = post.sigma2_shape_scale();
        assert_close!(shape, 2.5 + 2.0, 1e-12);
        // residual sum of squares 2 + 8
        assert_close!(scale, 0.5 + 0.5 * 10.0, 1e-8);
    }

    #[test]
    fn empty_state_draws_from_prior() {
        let (data, _, _) = dataset(200, 2);
        let path = StatePath::from_indices(vec![1; data.len()]);
        let priors = Priors::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let mut sigma2 = Vec::with_capacity(n);
        let mut b0 = Vec::with_capacity(n);
        for _ in 0..n {
            let (s1, _, flags) = sample_mean_params(&data, &path, &priors, 5, &mut rng).unwrap();
            assert_eq!(flags, [true, false]);
            sigma2.push(s1.sigma2);
            b0.push(s1.coefficients[0]);
        }
        let gamma = Gamma::new(priors.ig_shape, 1.0).unwrap();
        let mut ref_s = Vec::with_capacity(n);
        let mut ref_b = Vec::with_capacity(n);
        for _ in 0..n {
            let s = priors.ig_scale / gamma.sample(&mut rng);
            ref_s.push(s);
            let z: f64 = StandardNormal.sample(&mut rng);
            ref_b.push(z * (s / priors.prec_b0).sqrt());
        }
        assert!(ks_two_sample(&sigma2, &ref_s).p_value > 0.01);
        assert!(ks_two_sample(&b0, &ref_b).p_value > 0.01);
    }

    #[test]
    fn beta_given_omega_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..40).map(|_| StandardNormal.sample(&mut rng)).collect();
        let rows: Vec<[f64; 1]> = xs.iter().map(|&x| [x]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let stayed: Vec<bool> = (0..40).map(|i| i % 3 != 0).collect();
        let omega: Vec<f64> = (0..40).map(|i| 0.1 + 0.01 * i as f64).collect();
        let prec0 = 0.5;
        let m0 = 0.3;
        // closed form for a scalar coefficient
        let q = prec0 + xs.iter().zip(&omega).map(|(x, w)| w * x * x).sum::<f64>();
        let h = prec0 * m0 + xs.iter().zip(&stayed).map(|(x, &s)| if s { 0.5 * x } else { -0.5 * x }).sum::<f64>();
        let (mean, var) = (h / q, 1.0 / q);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_beta_given_omega(&refs, &stayed, &omega, &[m0], prec0, &mut rng).unwrap()[0])
            .collect();
        let (m, v) = mean_var(&draws);
        assert_close!(m, mean, 4.0 * (var / n as f64).sqrt());
        assert_close!(v, var, 4.0 * var * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn balanced_transitions_center_intercept_at_zero() {
        // Blocks of two: from each state half the moves stay.
        let n = 801;
        let z: Vec<usize> = (0..n).map(|k| (k / 2) % 2).collect();
        let path = StatePath::from_indices(z);
        let y = vec![0.0; n];
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates = (0..n).map(|i| start + chrono::Days::new(i as u64)).collect();
        let data = ObservationData::new(y, DMatrix::from_element(n, 1, 1.0), dates, vec![]).unwrap();
        let priors = Priors {
            prec_beta0: 1e-8,
            ..Priors::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut current = TransitionParams::zeros(1);
        let mut acc = [0.0; 2];
        let draws = 10_000;
        for _ in 0..200 {
            current = sample_logistic_params(&data, &path, &current, &priors, false, &mut rng).unwrap().0;
        }
        for _ in 0..draws {
            current = sample_logistic_params(&data, &path, &current, &priors, false, &mut rng).unwrap().0;
            acc[0] += current.beta1[0];
            acc[1] += current.beta2[0];
        }
        for a in acc {
            assert!((a / draws as f64).abs() < 0.05, "{}", a / draws as f64);
        }
    }

    #[test]
    fn logistic_without_transitions_falls_back() {
        let (data, _, _) = dataset(50, 6);
        let path = StatePath::from_indices(vec![0; data.len()]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (_, flags) =
            sample_logistic_params(&data, &path, &TransitionParams::zeros(3), &Priors::default(), false, &mut rng)
                .unwrap();
        assert_eq!(flags, [false, true]);
    }

    #[test]
    fn intercept_only_keeps_covariate_coefficients_at_zero() {
        let (data, z, _) = dataset(300, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (tr, _) =
            sample_logistic_params(&data, &z, &TransitionParams::zeros(3), &Priors::default(), true, &mut rng).unwrap();
        assert_eq!(&tr.beta1[1..], &[0.0, 0.0]);
        assert_eq!(&tr.beta2[1..], &[0.0, 0.0]);
        let model = NhpgModel::new(
            StateParams::new(vec![0.0; 3], 1.0).unwrap(),
            StateParams::new(vec![0.0; 3], 1.0).unwrap(),
            tr,
            data.covariate_names().to_vec(),
        )
        .unwrap();
        let mats = transition_matrices(&model, &data);
        for m in &mats {
            for i in 0..2 {
                for j in 0..2 {
                    assert_close!(m[i][j], mats[0][i][j], 1e-8);
                }
            }
        }
    }

    #[test]
    fn initial_path_splits_by_squared_deviation() {
        let path = initial_path(&[0.0, 5.0, 0.1, -5.0]);
        assert_eq!(path.labels(), &[2, 1, 2, 1]);
    }

    #[test]
    fn chain_invariants() {
        let (data, _, _) = dataset(300, 10);
        let config = McmcConfig {
            store_smoothed: true,
            ..quick_config(11)
        };
        let draws = run_chain(&data, &Priors::default(), &config, 0).unwrap();
        for (d, sm) in draws.draws.iter().zip(&draws.smoothed) {
            assert!(d.state1.sigma2 >= d.state2.sigma2);
            assert!(d.state2.sigma2 > 0.0);
            for row in sm {
                assert_close!(row[0] + row[1], 1.0, 1e-10);
            }
        }
        let sum: f64 = draws.smoothed.iter().map(|s| s[7][0]).sum();
        assert_close!(sum, draws.smoothed_p1_sum[7], 1e-9);
    }

    #[test]
    fn same_stream_is_deterministic() {
        let (data, _, _) = dataset(150, 12);
        let config = quick_config(13);
        let a = run_chain(&data, &Priors::default(), &config, 0).unwrap();
        let b = run_chain(&data, &Priors::default(), &config, 0).unwrap();
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.smoothed_p1_sum, b.smoothed_p1_sum);
        let c = run_chain(&data, &Priors::default(), &config, 1).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn recovers_separated_states() {
        let (data, truth, model) = dataset(1000, 14);
        let config = McmcConfig {
            iterations: 2000,
            burn_in: 1000,
            ..quick_config(15)
        };
        let chains = run_chains(&data, &Priors::default(), &McmcConfig { chains: 2, ..config }).unwrap();
        let summary = summarize(&chains, 0.05).unwrap();
        let accuracy = summary
            .assigned
            .iter()
            .zip(truth.labels())
            .filter(|(a, b)| a == b)
            .count() as f64
            / truth.len() as f64;
        assert!(accuracy > 0.85, "accuracy {accuracy}");
        let covered = summary
            .coefficients
            .iter()
            .filter(|c| {
                let s = usize::from(c.state - 1);
                let j = if c.name == "intercept" { 0 } else { c.name[1..].parse::<usize>().unwrap() + 1 };
                let truth = match c.block {
                    Block::Mean => model.state(s).coefficients[j],
                    Block::Transition => model.transitions.beta(s)[j],
                };
                c.q025 <= truth && truth <= c.q975
            })
            .count();
        assert!(covered >= 10, "{covered} of 12 intervals cover the truth");
        assert_eq!(summary.state_sizes[0] + summary.state_sizes[1], data.len());
        let report = diagnostics(&chains);
        assert_eq!(report.parameters.len(), parameter_names(data.covariate_names()).len());
        assert!(report.parameters.iter().all(|p| p.rhat.unwrap() < 1.1), "{:?}", report.warnings);
    }

    fn fake_chain(values: Vec<f64>) -> McmcDraws {
        let draws = values
            .iter()
            .map(|&v| Draw {
                state1: StateParams::new(vec![v], 2.0).unwrap(),
                state2: StateParams::new(vec![-v], 1.0).unwrap(),
                transitions: TransitionParams {
                    beta1: vec![v],
                    beta2: vec![0.0],
                },
            })
            .collect::<Vec<_>>();
        let n = draws.len();
        McmcDraws {
            chain: 0,
            paths: vec![StatePath::from_indices(vec![0, 1]); n],
            draws,
            smoothed: Vec::new(),
            smoothed_p1_sum: vec![0.7 * n as f64, 0.2 * n as f64],
            fallbacks: FallbackCounts::default(),
            covariate_names: Vec::new(),
            dates: vec![
                NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
                NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(),
            ],
        }
    }

    #[test]
    fn significance_follows_interval() {
        let positive = fake_chain((1..=200).map(|i| i as f64 / 100.0).collect());
        let s = summarize(&[positive], 0.05).unwrap();
        assert!(s.coefficient(Block::Mean, 1, "intercept").unwrap().significant);
        assert_eq!(s.assigned, vec![1, 2]);
        assert_eq!(s.state_sizes, [1, 1]);

        let symmetric = fake_chain((-100..=100).map(|i| i as f64).collect());
        let s = summarize(&[symmetric], 0.05).unwrap();
        let c = s.coefficient(Block::Transition, 1, "intercept").unwrap();
        assert!(!c.significant);
        assert!(c.q025 <= c.mean && c.mean <= c.q975);

        assert!(summarize(&[fake_chain(vec![1.0; 50])], 0.05).is_err());
    }

    #[test]
    fn identical_chains_are_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let vals: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let report = diagnostics(&[fake_chain(vals.clone()), fake_chain(vals)]);
        let p = &report.parameters[0];
        assert_eq!(p.rhat, Some(1.0));
        assert!(p.degenerate);
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn rhat_detects_separated_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 3.0).collect();
        let report = diagnostics(&[fake_chain(a.clone()), fake_chain(b)]);
        assert!(report.parameters[0].rhat.unwrap() > 1.5);
        let c: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let report = diagnostics(&[fake_chain(a), fake_chain(c)]);
        let p = &report.parameters[0];
        assert!(p.rhat.unwrap() < 1.02);
        // independent draws: ESS near the total count
        assert!(p.ess > 700.0 && p.ess < 1300.0, "ess {}", p.ess);
    }

    #[test]
    fn ess_of_autocorrelated_chain() {
        // AR(1) with φ = 0.9 has integrated autocorrelation time 19.
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut traces = Vec::new();
        for _ in 0..4 {
            let mut x = 0.0;
            traces.push(
                (0..20_000)
                    .map(|_| {
                        x = 0.9 * x + normal.sample(&mut rng);
                        x
                    })
                    .collect::<Vec<f64>>(),
            );
        }
        let d = scale_reduction(&traces);
        let expected = 80_000.0 / 19.0;
        assert!((d.ess / expected - 1.0).abs() < 0.2, "ess {} vs {expected}", d.ess);
    }

    #[test]
    fn csv_outputs() {
        let s = summarize(&[fake_chain((1..=200).map(|i| i as f64 / 100.0).collect())], 0.05).unwrap();
        let mut buf = Vec::new();
        write_coefficients_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("name,state,block,mean,q025,q975,significant"));
        assert_eq!(text.lines().count(), 1 + 4);
        let mut buf = Vec::new();
        write_smoothed_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1), Some("2020-01-01,0.7,1"));
    }
}
