//! Exact Pólya-Gamma sampling.
//!
//! `PG(1, c)` is drawn with Devroye's alternating-series accept-reject method
//! on the Jacobi density `J*(1, |c|/2)`, split at `t = 0.64` into an
//! exponential tail and a truncated inverse-Gaussian body. Integer `b > 1` is
//! handled by summing `b` independent `PG(1, c)` draws.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};

const TRUNC: f64 = 0.64;
const PI2_OVER_8: f64 = PI * PI / 8.0;

/// Parameters of `PG(b, c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgParams {
    b: u32,
    c: f64,
}

impl PgParams {
    pub fn new(b: u32, c: f64) -> Result<Self> {
        if b == 0 {
            return Err(Error::InvalidParameter("PG shape b must be >= 1".into()));
        }
        if !c.is_finite() {
            return Err(Error::InvalidParameter(format!("PG tilt must be finite, got {c}")));
        }
        Ok(Self { b, c })
    }

    /// `PG(1, c)`, the only case the transition update needs.
    pub fn unit(c: f64) -> Result<Self> {
        Self::new(1, c)
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

/// Draws from `PG(b, c)`.
pub fn sample_pg<R: Rng + ?Sized>(params: PgParams, rng: &mut R) -> f64 {
    (0..params.b).map(|_| sample_pg1(params.c, rng)).sum()
}

/// `E[PG(b, c)] = b / (2c) · tanh(c / 2)`, with the `b / 4` limit near zero.
pub fn pg_mean(params: PgParams) -> f64 {
    let b = f64::from(params.b);
    let c = params.c.abs();
    if c < 1e-6 {
        // tanh(x)/x = 1 - x²/3 + O(x⁴) with x = c/2
        b / 4.0 * (1.0 - c * c / 12.0)
    } else {
        b / (2.0 * c) * (c / 2.0).tanh()
    }
}

/// `Var[PG(b, c)]`, used to size Monte Carlo tolerances.
pub fn pg_variance(params: PgParams) -> f64 {
    let b = f64::from(params.b);
    let c = params.c.abs();
    if c < 1e-4 {
        b / 24.0
    } else {
        // b (sinh c - c) / (4 c³ cosh²(c/2)), written to avoid overflow
        let sech = 1.0 / (c / 2.0).cosh();
        if c > 300.0 {
            b * (2.0 / c.powi(3) - sech * sech / (c * c)) / 4.0
        } else {
            b * (c.sinh() - c) * sech * sech / (4.0 * c.powi(3))
        }
    }
}

/// One draw from `PG(1, c)`.
pub fn sample_pg1<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    let z = 0.5 * c.abs();
    let fz = PI2_OVER_8 + 0.5 * z * z;
    let p_exp = exponential_mass(z);
    loop {
        let x = if rng.random::<f64>() < p_exp {
            let e: f64 = Exp1.sample(rng);
            TRUNC + e / fz
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        let mut s = series_coef(0, x);
        let u = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x);
                if u <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coef(n, x);
                if u > s {
                    break;
                }
            }
        }
    }
}

/// Coefficient `a_n(x)` of the alternating series for the `J*(1)` density,
/// using the small-`x` representation below the truncation point.
fn series_coef(n: u32, x: f64) -> f64 {
    let h = f64::from(n) + 0.5;
    let k = h * PI;
    if x > TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        (-1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * h * h / x).exp()
    } else {
        0.0
    }
}

/// Probability of proposing from the exponential tail (`x > t`).
fn exponential_mass(z: f64) -> f64 {
    let t = TRUNC;
    let fz = PI2_OVER_8 + 0.5 * z * z;
    let root = (1.0 / t).sqrt();
    let b = root * (t * z - 1.0);
    let a = -root * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + ln_norm_cdf(b);
    let xa = x0 + z + ln_norm_cdf(a);
    let hi = xb.max(xa);
    let log_q_over_p = (4.0 / PI).ln() + hi + ((xb - hi).exp() + (xa - hi).exp()).ln();
    // 1 / (1 + q/p) evaluated as a logistic
    if log_q_over_p > 0.0 {
        let e = (-log_q_over_p).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + log_q_over_p.exp())
    }
}

/// Inverse-Gaussian `IG(1/z, 1)` restricted to `(0, t)`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let r = TRUNC;
    let mu = if z > 0.0 { 1.0 / z } else { f64::INFINITY };
    if mu > r {
        // Reject from the chi-square-like envelope 1/χ²₁ truncated at r.
        loop {
            let x = loop {
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                if e1 * e1 <= 2.0 * e2 / r {
                    break r / (1.0 + r * e1).powi(2);
                }
            };
            let alpha = (-0.5 * z * z * x).exp();
            if rng.random::<f64>() <= alpha {
                return x;
            }
        }
    } else {
        loop {
            let n: f64 = StandardNormal.sample(rng);
            let y = n * n;
            let mu_y = mu * y;
            let mut x = mu + 0.5 * mu * mu_y - 0.5 * mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x < r {
                return x;
            }
        }
    }
}

/// `ln Φ(x)`, accurate in the far left tail where `Φ` underflows.
pub(crate) fn ln_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        (0.5 * statrs::function::erf::erfc(-x / SQRT_2)).ln()
    } else {
        // Φ(x) = φ(x)/|x| · (1 - 1/x² + 3/x⁴ - 15/x⁶ + 105/x⁸ - ...)
        let x2 = x * x;
        let inv = 1.0 / x2;
        let series = 1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv)));
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}
