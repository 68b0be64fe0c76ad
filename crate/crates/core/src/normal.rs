//! Standard normal helpers and univariate truncated-normal sampling.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

/// Standardized bound beyond which the inverse-CDF route is replaced by
/// exponential-proposal rejection.
pub const TAIL_SWITCH: f64 = 5.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -SQRT_2 * erfc_inv(2.0 * p)
}

pub fn ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -LN_SQRT_2PI - 0.5 * var.ln() - 0.5 * d * d / var
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draw `X ~ N(0,1)` conditioned on `X > a`.
pub fn std_above<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a > TAIL_SWITCH {
        // Robert (1995) translated-exponential proposal.
        let rate = 0.5 * (a + (a * a + 4.0).sqrt());
        let exp = Exp::new(rate).expect("positive rate");
        loop {
            let z = a + exp.sample(rng);
            let accept = (-(z - rate) * (z - rate) * 0.5).exp();
            if rng.random::<f64>() <= accept {
                return z;
            }
        }
    } else {
        -std_below(-a, rng)
    }
}

/// Draw `X ~ N(0,1)` conditioned on `X < b`.
pub fn std_below<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    if b < -TAIL_SWITCH {
        -std_above(-b, rng)
    } else {
        let mass = cdf(b);
        loop {
            let u = rng.random::<f64>() * mass;
            if u > 0.0 {
                let x = quantile(u);
                if x < b {
                    return x;
                }
            }
        }
    }
}

/// One-sided truncation of a univariate normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Support `(-inf, bound)`.
    Below(f64),
    /// Support `(bound, inf)`.
    Above(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub sd: f64,
    pub truncation: Truncation,
}

impl TruncatedNormal {
    pub fn new(mean: f64, sd: f64, truncation: Truncation) -> Self {
        debug_assert!(sd > 0.0);
        Self { mean, sd, truncation }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.truncation {
            Truncation::Below(b) => self.mean + self.sd * std_below((b - self.mean) / self.sd, rng),
            Truncation::Above(a) => self.mean + self.sd * std_above((a - self.mean) / self.sd, rng),
        }
    }

    /// Analytic CDF. Used by goodness-of-fit checks.
    pub fn cdf(&self, x: f64) -> f64 {
        let s = (x - self.mean) / self.sd;
        match self.truncation {
            Truncation::Below(b) => {
                let beta = (b - self.mean) / self.sd;
                if s >= beta {
                    1.0
                } else {
                    cdf(s) / cdf(beta)
                }
            }
            Truncation::Above(a) => {
                let alpha = (a - self.mean) / self.sd;
                if s <= alpha {
                    0.0
                } else {
                    // 1 - Phi(-s)/Phi(-alpha), stable in the upper tail.
                    1.0 - cdf(-s) / cdf(-alpha)
                }
            }
        }
    }
}

/// `Gamma(shape, rate)` draw.
pub fn gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters must be positive")
        .sample(rng)
}

/// `InverseGamma(shape, rate)` draw, the reciprocal of a `Gamma(shape, rate)`.
pub fn inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    1.0 / gamma(shape, rate, rng)
}
