//! Scaled forward filtering, backward path simulation and exact smoothing for
//! the two-state non-homogeneous chain.
//!
//! The forward variables are renormalised at every step, so each row of the
//! lattice is the filtered law `P(Z_t = i | y_{1:t})` and the log of the
//! normalisers accumulates to the observed-data log-likelihood. The initial
//! hidden state is uniform over the two states.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{NhpgModel, ObservationData};

/// Filtered state probabilities and the log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardLattice {
    pub pi: Vec<[f64; 2]>,
    pub log_norm: f64,
}

impl ForwardLattice {
    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }
}

/// A hidden path with labels in `{1, 2}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StatePath(Vec<u8>);

impl StatePath {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != 2) {
            return Err(Error::InvalidParameter(format!("state label {bad} not in {{1, 2}}")));
        }
        Ok(Self(labels))
    }

    /// Builds a path from zero-based state indices.
    pub fn from_indices(indices: Vec<usize>) -> Self {
        Self(indices.into_iter().map(|i| if i == 0 { 1 } else { 2 }).collect())
    }

    pub fn labels(&self) -> &[u8] {
        &self.0
    }

    /// Zero-based state index at position `k`.
    pub fn index(&self, k: usize) -> usize {
        usize::from(self.0[k] - 1)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|&l| usize::from(l - 1))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of positions in state 1 and state 2.
    pub fn occupancy(&self) -> [usize; 2] {
        let ones = self.0.iter().filter(|&&l| l == 1).count();
        [ones, self.0.len() - ones]
    }

    pub fn swap_labels(&mut self) {
        self.0.iter_mut().for_each(|l| *l = 3 - *l);
    }
}

/// Transition matrix entry `P(Z_k = j | Z_{k-1} = i)` from stay probabilities.
#[inline]
fn trans(stay: &[f64; 2], i: usize, j: usize) -> f64 {
    if i == j {
        stay[i]
    } else {
        1.0 - stay[i]
    }
}

pub fn forward_pass(model: &NhpgModel, data: &ObservationData) -> Result<ForwardLattice> {
    if model.dim() != data.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: data.dim(),
        });
    }
    forward_filter(&model.log_emissions(data), &model.stay_probabilities(data))
}

/// Forward recursion on precomputed log emission densities and per-step stay
/// probabilities (`stay[k]` drives the move into step `k`; `stay[0]` is
/// ignored).
pub fn forward_filter(log_emissions: &[[f64; 2]], stay: &[[f64; 2]]) -> Result<ForwardLattice> {
    if log_emissions.len() != stay.len() {
        return Err(Error::Dimension {
            expected: log_emissions.len(),
            got: stay.len(),
        });
    }
    let mut pi: Vec<[f64; 2]> = Vec::with_capacity(log_emissions.len());
    let mut log_norm = 0.0;
    for (k, le) in log_emissions.iter().enumerate() {
        let pred = match pi.last() {
            None => [0.5, 0.5],
            Some(prev) => {
                let s = &stay[k];
                [
                    prev[0] * trans(s, 0, 0) + prev[1] * trans(s, 1, 0),
                    prev[0] * trans(s, 0, 1) + prev[1] * trans(s, 1, 1),
                ]
            }
        };
        let m = le[0].max(le[1]);
        let a = [pred[0] * (le[0] - m).exp(), pred[1] * (le[1] - m).exp()];
        let c = a[0] + a[1];
        if !m.is_finite() || !(c > 0.0) || !c.is_finite() {
            return Err(Error::NonFiniteLikelihood { t: k });
        }
        log_norm += m + c.ln();
        pi.push([a[0] / c, a[1] / c]);
    }
    Ok(ForwardLattice { pi, log_norm })
}

/// `P(Z_k = i | Z_{k+1} = next, y_{1:T})`: the kernel of the backward pass.
pub fn backward_kernel(lattice: &ForwardLattice, stay: &[[f64; 2]], k: usize, next: usize) -> [f64; 2] {
    let s = &stay[k + 1];
    let w = [
        lattice.pi[k][0] * trans(s, 0, next),
        lattice.pi[k][1] * trans(s, 1, next),
    ];
    let total = w[0] + w[1];
    if total > 0.0 {
        [w[0] / total, w[1] / total]
    } else {
        lattice.pi[k]
    }
}

pub fn backward_sample<R: Rng + ?Sized>(
    lattice: &ForwardLattice,
    model: &NhpgModel,
    data: &ObservationData,
    rng: &mut R,
) -> StatePath {
    sample_path(lattice, &model.stay_probabilities(data), rng)
}

/// Draws a whole path from `P(z_{1:T} | y_{1:T})`.
pub fn sample_path<R: Rng + ?Sized>(lattice: &ForwardLattice, stay: &[[f64; 2]], rng: &mut R) -> StatePath {
    let n = lattice.len();
    let mut z = vec![0usize; n];
    if n == 0 {
        return StatePath::from_indices(z);
    }
    let draw = |p: [f64; 2], rng: &mut R| usize::from(rng.random::<f64>() >= p[0]);
    z[n - 1] = draw(lattice.pi[n - 1], rng);
    for k in (0..n - 1).rev() {
        z[k] = draw(backward_kernel(lattice, stay, k, z[k + 1]), rng);
    }
    StatePath::from_indices(z)
}

pub fn smoothed_marginals(lattice: &ForwardLattice, model: &NhpgModel, data: &ObservationData) -> Vec<[f64; 2]> {
    smooth(lattice, &model.stay_probabilities(data))
}

/// Exact `P(Z_k = i | y_{1:T})` by the backward smoothing recursion.
pub fn smooth(lattice: &ForwardLattice, stay: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = lattice.len();
    let mut gamma = vec![[0.0; 2]; n];
    if n == 0 {
        return gamma;
    }
    gamma[n - 1] = lattice.pi[n - 1];
    for k in (0..n - 1).rev() {
        let s = &stay[k + 1];
        let f = &lattice.pi[k];
        let mut ratio = [0.0; 2];
        for j in 0..2 {
            let pred = f[0] * trans(s, 0, j) + f[1] * trans(s, 1, j);
            if pred > 0.0 {
                ratio[j] = gamma[k + 1][j] / pred;
            }
        }
        let g0 = f[0] * (trans(s, 0, 0) * ratio[0] + trans(s, 0, 1) * ratio[1]);
        let g1 = f[1] * (trans(s, 1, 0) * ratio[0] + trans(s, 1, 1) * ratio[1]);
        let total = g0 + g1;
        gamma[k] = [g0 / total, g1 / total];
    }
    gamma
}
