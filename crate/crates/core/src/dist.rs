//! Densities, variates and parameter transforms for the handful of families
//! the built-in models need.
//!
//! Everything is evaluated on the log scale. A point outside the support has
//! log density `-inf`; this is never an error, so downstream weight ratios
//! degrade gracefully instead of aborting.

use std::f64::consts::{LN_2, PI};
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Parameters of a supported family. Use the validating constructors on
/// [`Distribution`] rather than building this directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Law of `|X|` with `X ~ Normal(0, scale^2)`.
    HalfNormal {
        scale: f64,
    },
    Exponential {
        rate: f64,
    },
    Beta {
        a: f64,
        b: f64,
    },
    /// Hazard `(shape/scale) (t/scale)^(shape-1)`.
    Weibull {
        shape: f64,
        scale: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
}

/// A validated distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Family", into = "Family")]
pub struct Distribution(Family);

fn positive(what: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(what, format!("must be finite and > 0, got {v}")))
    }
}

fn finite(what: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(what, format!("must be finite, got {v}")))
    }
}

impl TryFrom<Family> for Distribution {
    type Error = Error;

    fn try_from(f: Family) -> Result<Self> {
        match f {
            Family::Normal { mean, sd } => {
                finite("normal mean", mean)?;
                positive("normal sd", sd)?;
            }
            Family::HalfNormal { scale } => positive("half-normal scale", scale)?,
            Family::Exponential { rate } => positive("exponential rate", rate)?,
            Family::Beta { a, b } => {
                positive("beta a", a)?;
                positive("beta b", b)?;
            }
            Family::Weibull { shape, scale } => {
                positive("weibull shape", shape)?;
                positive("weibull scale", scale)?;
            }
            Family::Uniform { lo, hi } => {
                finite("uniform lo", lo)?;
                finite("uniform hi", hi)?;
                if hi <= lo {
                    return Err(Error::invalid("uniform bounds", format!("need lo < hi, got [{lo}, {hi}]")));
                }
            }
        }
        Ok(Distribution(f))
    }
}

impl From<Distribution> for Family {
    fn from(d: Distribution) -> Self {
        d.0
    }
}

impl Distribution {
    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        Family::Normal { mean, sd }.try_into()
    }

    pub fn half_normal(scale: f64) -> Result<Self> {
        Family::HalfNormal { scale }.try_into()
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Family::Exponential { rate }.try_into()
    }

    pub fn beta(a: f64, b: f64) -> Result<Self> {
        Family::Beta { a, b }.try_into()
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        Family::Weibull { shape, scale }.try_into()
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Family::Uniform { lo, hi }.try_into()
    }

    pub fn family(&self) -> Family {
        self.0
    }

    /// Closed support interval `(lower, upper)`.
    pub fn support(&self) -> (f64, f64) {
        match self.0 {
            Family::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Family::HalfNormal { .. } | Family::Exponential { .. } | Family::Weibull { .. } => (0.0, f64::INFINITY),
            Family::Beta { .. } => (0.0, 1.0),
            Family::Uniform { lo, hi } => (lo, hi),
        }
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        match self.0 {
            Family::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -HALF_LN_2PI - sd.ln() - 0.5 * z * z
            }
            Family::HalfNormal { scale } => {
                if x < 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = x / scale;
                LN_2 - HALF_LN_2PI - scale.ln() - 0.5 * z * z
            }
            Family::Exponential { rate } => {
                if x < 0.0 {
                    return f64::NEG_INFINITY;
                }
                rate.ln() - rate * x
            }
            Family::Beta { a, b } => {
                if !(0.0..=1.0).contains(&x) {
                    return f64::NEG_INFINITY;
                }
                let norm = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
                norm + xlogy(a - 1.0, x) + xlogy(b - 1.0, 1.0 - x)
            }
            Family::Weibull { shape, scale } => {
                if x < 0.0 {
                    return f64::NEG_INFINITY;
                }
                let u = x / scale;
                shape.ln() - scale.ln() + xlogy(shape - 1.0, u) - u.powf(shape)
            }
            Family::Uniform { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        match self.0 {
            Family::Normal { mean, sd } => 0.5 * erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2)),
            Family::HalfNormal { scale } => 1.0 - erfc(x / (scale * std::f64::consts::SQRT_2)),
            Family::Exponential { rate } => -(-rate * x).exp_m1(),
            Family::Beta { a, b } => beta_reg(a, b, x),
            Family::Weibull { shape, scale } => -(-(x / scale).powf(shape)).exp_m1(),
            Family::Uniform { lo, hi } => (x - lo) / (hi - lo),
        }
    }

    pub fn mean(&self) -> f64 {
        match self.0 {
            Family::Normal { mean, .. } => mean,
            Family::HalfNormal { scale } => scale * (2.0 / PI).sqrt(),
            Family::Exponential { rate } => 1.0 / rate,
            Family::Beta { a, b } => a / (a + b),
            Family::Weibull { shape, scale } => scale * ln_gamma(1.0 + 1.0 / shape).exp(),
            Family::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn variance(&self) -> f64 {
        match self.0 {
            Family::Normal { sd, .. } => sd * sd,
            Family::HalfNormal { scale } => scale * scale * (1.0 - 2.0 / PI),
            Family::Exponential { rate } => 1.0 / (rate * rate),
            Family::Beta { a, b } => a * b / ((a + b).powi(2) * (a + b + 1.0)),
            Family::Weibull { shape, scale } => {
                let g1 = ln_gamma(1.0 + 1.0 / shape).exp();
                let g2 = ln_gamma(1.0 + 2.0 / shape).exp();
                scale * scale * (g2 - g1 * g1)
            }
            Family::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
        }
    }

    /// Draws one variate. The sequence is fully determined by the stream.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.0 {
            Family::Normal { mean, sd } => mean + sd * std_normal(rng),
            Family::HalfNormal { scale } => (scale * std_normal(rng)).abs(),
            Family::Exponential { rate } => rand_distr::Exp::new(rate).expect("validated").sample(rng),
            Family::Beta { a, b } => rand_distr::Beta::new(a, b).expect("validated").sample(rng),
            Family::Weibull { shape, scale } => rand_distr::Weibull::new(scale, shape).expect("validated").sample(rng),
            Family::Uniform { lo, hi } => rng.random_range(lo..hi),
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Family::Normal { mean, sd } => write!(f, "Normal({mean}, {sd})"),
            Family::HalfNormal { scale } => write!(f, "HalfNormal({scale})"),
            Family::Exponential { rate } => write!(f, "Exponential({rate})"),
            Family::Beta { a, b } => write!(f, "Beta({a}, {b})"),
            Family::Weibull { shape, scale } => write!(f, "Weibull({shape}, {scale})"),
            Family::Uniform { lo, hi } => write!(f, "Uniform({lo}, {hi})"),
        }
    }
}

pub(crate) fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `c * ln(y)` with the convention `0 * ln(0) = 0`.
fn xlogy(c: f64, y: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * y.ln()
    }
}

/// Map between a constrained parameter and the real line.
///
/// Both directions report `ln |dx/dy|`, where `x` is the constrained value
/// and `y` the unconstrained one; this is the term a sampler on the
/// unconstrained scale adds to the target log density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `y = ln x` for `x > 0`.
    Log,
    /// `y = ln(x / (1 - x))` for `0 < x < 1`.
    Logit,
}

impl Transform {
    pub fn forward(self, x: f64) -> Result<(f64, f64)> {
        match self {
            Transform::Identity if x.is_finite() => Ok((x, 0.0)),
            Transform::Log if x > 0.0 && x.is_finite() => {
                let y = x.ln();
                Ok((y, y))
            }
            Transform::Logit if x > 0.0 && x < 1.0 => Ok(((x / (1.0 - x)).ln(), (x * (1.0 - x)).ln())),
            _ => Err(Error::Domain { transform: self.name(), value: x }),
        }
    }

    pub fn inverse(self, y: f64) -> Result<(f64, f64)> {
        if !y.is_finite() {
            return Err(Error::Domain { transform: self.name(), value: y });
        }
        Ok(match self {
            Transform::Identity => (y, 0.0),
            Transform::Log => (y.exp(), y),
            Transform::Logit => (logistic(y), log_logistic(y) + log_logistic(-y)),
        })
    }

    /// Whether `x` lies in the open constrained domain.
    pub fn contains(self, x: f64) -> bool {
        match self {
            Transform::Identity => x.is_finite(),
            Transform::Log => x > 0.0 && x.is_finite(),
            Transform::Logit => x > 0.0 && x < 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Transform::Identity => "identity",
            Transform::Log => "log",
            Transform::Logit => "logit",
        }
    }
}

pub(crate) fn logistic(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

/// `ln(logistic(y))` without cancellation.
fn log_logistic(y: f64) -> f64 {
    if y >= 0.0 {
        -(-y).exp().ln_1p()
    } else {
        y - y.exp().ln_1p()
    }
}
