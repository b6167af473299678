//! Importance reweighting of posterior draws from a base prior to an
//! alternative prior on one parameter.
//!
//! Because the likelihood is shared, the ratio of the two posteriors is the
//! ratio of the two priors, so the weight of draw `m` is
//! `alt(theta_m) / base(theta_m)`, normalized. Weights are formed in log
//! space and normalized with log-sum-exp.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::mcmc::DrawMatrix;

/// Reweighting with ESS below this fraction of the draw count is flagged.
pub const LOW_ESS_FRACTION: f64 = 0.05;

/// Resample length as a fraction of the number of draws.
pub const DEFAULT_RESAMPLE_FRACTION: f64 = 0.8;

/// A prior distribution bound to one model parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub param: String,
    pub dist: Distribution,
}

impl PriorSpec {
    pub fn new(param: impl Into<String>, dist: Distribution) -> Self {
        PriorSpec { param: param.into(), dist }
    }
}

/// Normalized importance weights with their effective sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    weights: Vec<f64>,
    ess: f64,
    base: PriorSpec,
    alt: PriorSpec,
}

impl WeightSet {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn ess(&self) -> f64 {
        self.ess
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn base(&self) -> &PriorSpec {
        &self.base
    }

    pub fn alt(&self) -> &PriorSpec {
        &self.alt
    }

    pub fn sensitivity_param(&self) -> &str {
        &self.base.param
    }

    pub fn is_low_ess(&self) -> bool {
        self.ess < LOW_ESS_FRACTION * self.weights.len() as f64
    }
}

/// Neumaier-compensated sum.
fn stable_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Normalizes log-weights with the log-sum-exp trick. Entries of `-inf`
/// receive weight zero; at least one entry must be finite.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    if log_w.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::Numerical("log-weight is NaN or +inf".into()));
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Numerical("all log-weights are -inf".into()));
    }
    let mut w: Vec<f64> = log_w.iter().map(|&l| (l - max).exp()).collect();
    let total = stable_sum(w.iter().copied());
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

/// Effective sample size `1 / sum(w^2)` of normalized weights, clamped to
/// `[1, M]`; exactly `M` when all weights are equal.
pub fn ess_of(weights: &[f64]) -> f64 {
    let m = weights.len() as f64;
    if weights.is_empty() {
        return 0.0;
    }
    if weights.iter().all(|&w| w == weights[0]) {
        return m;
    }
    let s2 = stable_sum(weights.iter().map(|w| w * w));
    (1.0 / s2).clamp(1.0, m)
}

/// Importance weights that move `draws` from the `base` prior to the `alt`
/// prior on the shared parameter.
pub fn importance_weights(draws: &DrawMatrix, base: &PriorSpec, alt: &PriorSpec) -> Result<WeightSet> {
    if base.param != alt.param {
        return Err(Error::invalid(
            "prior pair",
            format!("base prior is on `{}` but alternative is on `{}`", base.param, alt.param),
        ));
    }
    let theta = draws.column(&base.param)?;
    let mut log_w = Vec::with_capacity(theta.len());
    for (row, &t) in theta.iter().enumerate() {
        let lb = base.dist.log_pdf(t);
        if !lb.is_finite() {
            return Err(Error::SupportViolation { param: base.param.clone(), row, value: t });
        }
        log_w.push(alt.dist.log_pdf(t) - lb);
    }
    if log_w.iter().all(|&l| l == f64::NEG_INFINITY) {
        return Err(Error::DisjointSupport(base.param.clone()));
    }
    let weights = normalize_log_weights(&log_w)?;
    let ess = ess_of(&weights);
    Ok(WeightSet { weights, ess, base: base.clone(), alt: alt.clone() })
}

/// Identity reweighting: every draw gets weight `1/M`.
pub fn uniform_weights(draws: &DrawMatrix, prior: &PriorSpec) -> Result<WeightSet> {
    importance_weights(draws, prior, prior)
}

pub fn ess(w: &WeightSet) -> f64 {
    w.ess
}

/// Multinomial resampling with replacement: `m_dagger` rows drawn with
/// probabilities given by the weights. The result is a single chain.
pub fn resample<R: Rng + ?Sized>(
    draws: &DrawMatrix,
    w: &WeightSet,
    m_dagger: usize,
    rng: &mut R,
) -> Result<DrawMatrix> {
    let rows = resample_indices(w.weights(), m_dagger, rng)?;
    draws.select_rows(&rows)
}

pub fn resample_indices<R: Rng + ?Sized>(weights: &[f64], m_dagger: usize, rng: &mut R) -> Result<Vec<usize>> {
    if m_dagger == 0 {
        return Err(Error::invalid("resample length", "must be >= 1"));
    }
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cum.push(acc);
    }
    let total = acc;
    let last_positive =
        weights.iter().rposition(|&w| w > 0.0).ok_or_else(|| Error::Numerical("all weights zero".into()))?;
    Ok((0..m_dagger)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            cum.partition_point(|&c| c <= u).min(last_positive)
        })
        .collect())
}

/// Resample length for a fraction of `m` draws, at least one.
pub fn resample_length(m: usize, fraction: f64) -> usize {
    ((m as f64 * fraction).round() as usize).max(1)
}

/// One column sorted once, for repeated weighted quantile queries.
#[derive(Debug, Clone)]
pub struct SortedColumn {
    order: Vec<usize>,
    sorted: Vec<f64>,
}

impl SortedColumn {
    pub fn new(values: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let sorted = order.iter().map(|&i| values[i]).collect();
        SortedColumn { order, sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Left-continuous inverse of the weighted empirical CDF: the smallest
    /// value whose cumulative weight reaches `p`. `probs` must be ascending.
    pub fn quantiles(&self, weights: &[f64], probs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(weights.len(), self.order.len());
        // Cumulative sums of normalized weights can fall a few ulps short.
        const SLACK: f64 = 1e-12;
        let mut out = Vec::with_capacity(probs.len());
        let mut k = 0;
        let mut cum = 0.0;
        let mut last = 0;
        for &p in probs {
            while k < self.order.len() && cum + SLACK < p {
                let w = weights[self.order[k]];
                cum += w;
                if w > 0.0 {
                    last = k;
                }
                k += 1;
            }
            // When p is reached exactly on a zero-weight tail, fall back to
            // the last draw that carried weight.
            let idx = if k == 0 { first_positive(&self.order, weights) } else { last };
            out.push(self.sorted[idx]);
        }
        out
    }
}

fn first_positive(order: &[usize], weights: &[f64]) -> usize {
    order.iter().position(|&i| weights[i] > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSummary {
    pub mean: f64,
    pub sd: f64,
    /// `(probability, value)` pairs, ascending in probability.
    pub quantiles: Vec<(f64, f64)>,
    pub ess: f64,
}

impl WeightedSummary {
    pub fn quantile(&self, p: f64) -> Option<f64> {
        self.quantiles.iter().find(|(q, _)| *q == p).map(|(_, v)| *v)
    }
}

fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::invalid("probabilities", "each must lie in (0, 1)"));
    }
    if probs.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("probabilities", "must be sorted ascending"));
    }
    Ok(())
}

pub(crate) fn summarize(
    values: &[f64],
    sorted: &SortedColumn,
    weights: &[f64],
    ess: f64,
    probs: &[f64],
) -> WeightedSummary {
    let mean = stable_sum(values.iter().zip(weights).map(|(x, w)| x * w));
    let var = stable_sum(values.iter().zip(weights).map(|(x, w)| w * (x - mean) * (x - mean)));
    let qs = sorted.quantiles(weights, probs);
    WeightedSummary { mean, sd: var.max(0.0).sqrt(), quantiles: probs.iter().copied().zip(qs).collect(), ess }
}

/// Weighted mean, standard deviation and quantiles of `param`.
pub fn weighted_summary(draws: &DrawMatrix, w: &WeightSet, param: &str, probs: &[f64]) -> Result<WeightedSummary> {
    check_probs(probs)?;
    let values = draws.column(param)?;
    if values.len() != w.len() {
        return Err(Error::invalid("weights", "length does not match the draws"));
    }
    Ok(summarize(values, &SortedColumn::new(values), w.weights(), w.ess(), probs))
}

/// Unweighted summary; identical to [`weighted_summary`] under identity
/// reweighting.
pub fn summary(draws: &DrawMatrix, param: &str, probs: &[f64]) -> Result<WeightedSummary> {
    check_probs(probs)?;
    let values = draws.column(param)?;
    let m = values.len();
    let weights = vec![1.0 / m as f64; m];
    Ok(summarize(values, &SortedColumn::new(values), &weights, m as f64, probs))
}

/// One row of a prior sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alt: PriorSpec,
    pub outcome: std::result::Result<WeightedSummary, String>,
}

/// Summaries of `target` under each alternative prior. Rows fail
/// independently; a support violation in one never aborts the others.
pub fn prior_sweep(
    draws: &DrawMatrix,
    base: &PriorSpec,
    alts: &[PriorSpec],
    target: &str,
    probs: &[f64],
) -> Result<Vec<SweepRow>> {
    check_probs(probs)?;
    let values = draws.column(target)?;
    draws.column(&base.param)?;
    let sorted = SortedColumn::new(values);
    Ok(alts
        .par_iter()
        .map(|alt| {
            let outcome = importance_weights(draws, base, alt)
                .map(|w| summarize(values, &sorted, w.weights(), w.ess(), probs))
                .map_err(|e| e.to_string());
            SweepRow { alt: alt.clone(), outcome }
        })
        .collect())
}
