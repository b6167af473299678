//! Weibull proportional-hazards model for a trial with a current treatment
//! arm, a current control arm and an external control arm.
//!
//! Subject `i` has hazard `h0(t) exp(eta_i)` with a Weibull baseline
//! `h0(t) = (k/sigma) (t/sigma)^(k-1)`, `eta_i = alpha_c + beta z_i` in the
//! current trial and `eta_i = alpha_e` for external controls. The
//! commensurate prior `alpha_c ~ Normal(alpha_e, tau^2)` links the two
//! control intercepts, and `tau ~ HalfNormal(s)` sets how much the external
//! arm is borrowed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::{std_normal, Distribution, Transform};
use crate::error::{Error, Result};
use crate::mcmc::{chain_rng, ColumnMeta, DrawMatrix, ParamSpec, SimRng, TargetModel};

pub const SHAPE: &str = "shape";
pub const BETA: &str = "beta";
pub const ALPHA_C: &str = "alpha_c";
pub const ALPHA_E: &str = "alpha_e";
pub const TAU: &str = "tau";
pub const SCALE: &str = "scale";
/// Derived hazard-ratio column.
pub const HR: &str = "hr";
/// Treatment-arm intercept `alpha_c + beta`, the sampled coordinate.
pub const ALPHA_T: &str = "alpha_t";

const VAGUE_SD: f64 = 10.0;
const SHAPE_RATE: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Treatment,
    Control,
    External,
}

impl Arm {
    pub fn label(self) -> &'static str {
        match self {
            Arm::Treatment => "treatment",
            Arm::Control => "control",
            Arm::External => "external",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "treatment" => Ok(Arm::Treatment),
            "control" => Ok(Arm::Control),
            "external" => Ok(Arm::External),
            other => Err(format!("unknown arm label `{other}` (expected treatment, control or external)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub time: f64,
    /// `true` for an observed event, `false` for right censoring.
    pub event: bool,
    pub arm: Arm,
}

impl SurvivalRecord {
    pub fn new(time: f64, event: bool, arm: Arm) -> Result<Self> {
        if !(time > 0.0 && time.is_finite()) {
            return Err(Error::invalid("survival time", format!("must be finite and > 0, got {time}")));
        }
        Ok(SurvivalRecord { time, event, arm })
    }
}

/// Point in parameter space. `log_scale` is the log of the baseline scale
/// sigma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullPhParams {
    pub log_shape: f64,
    pub log_scale: f64,
    pub beta: f64,
    pub alpha_c: f64,
    pub alpha_e: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullPhHyper {
    /// Half-normal scale of the commensurability sd `tau`.
    pub s: f64,
}

impl WeibullPhHyper {
    pub fn new(s: f64) -> Result<Self> {
        Distribution::half_normal(s)?;
        Ok(WeibullPhHyper { s })
    }

    pub fn tau_prior(&self) -> Distribution {
        Distribution::half_normal(self.s).expect("validated")
    }
}

fn linear_predictor(p: &WeibullPhParams, arm: Arm) -> f64 {
    match arm {
        Arm::Treatment => p.alpha_c + p.beta,
        Arm::Control => p.alpha_c,
        Arm::External => p.alpha_e,
    }
}

/// Contribution `event * log h(t) - H(t)` of one record.
fn record_term(log_k: f64, k: f64, log_sigma: f64, eta: f64, log_t: f64, event: bool) -> f64 {
    let z = log_t - log_sigma;
    let cum_hazard = (k * z + eta).exp();
    if event {
        log_k - log_sigma + (k - 1.0) * z + eta - cum_hazard
    } else {
        -cum_hazard
    }
}

/// Censored-data log-likelihood.
pub fn log_likelihood(p: &WeibullPhParams, data: &[SurvivalRecord]) -> Result<f64> {
    let k = p.log_shape.exp();
    let mut total = 0.0;
    for (index, r) in data.iter().enumerate() {
        let term = record_term(p.log_shape, k, p.log_scale, linear_predictor(p, r.arm), r.time.ln(), r.event);
        if !term.is_finite() {
            return Err(Error::NonFiniteLikelihood { index });
        }
        total += term;
    }
    Ok(total)
}

/// The individual prior terms, named, on the constrained scale.
pub fn log_prior_terms(p: &WeibullPhParams, hyper: &WeibullPhHyper) -> [(&'static str, f64); 6] {
    let vague = Distribution::normal(0.0, VAGUE_SD).expect("valid");
    let commensurate = if p.tau > 0.0 {
        Distribution::normal(p.alpha_e, p.tau).expect("tau > 0").log_pdf(p.alpha_c)
    } else {
        f64::NEG_INFINITY
    };
    [
        (BETA, vague.log_pdf(p.beta)),
        (ALPHA_E, vague.log_pdf(p.alpha_e)),
        (ALPHA_C, commensurate),
        (SHAPE, Distribution::exponential(SHAPE_RATE).expect("valid").log_pdf(p.log_shape.exp())),
        (SCALE, vague.log_pdf(p.log_scale)),
        (TAU, hyper.tau_prior().log_pdf(p.tau)),
    ]
}

/// Joint prior density of `(k, log sigma, beta, alpha_c, alpha_e, tau)`.
///
/// The shape prior is a density in `k` and the scale prior a density in
/// `log sigma`. Transform Jacobians are not included.
pub fn log_prior(p: &WeibullPhParams, hyper: &WeibullPhHyper) -> f64 {
    if !(p.tau > 0.0) {
        return f64::NEG_INFINITY;
    }
    log_prior_terms(p, hyper).iter().map(|(_, v)| v).sum()
}

/// Elementwise `exp(beta)`.
pub fn hazard_ratio_draws(draws: &DrawMatrix) -> Result<DrawMatrix> {
    draws.derive(HR, BETA, f64::exp)
}

/// Appends the hazard-ratio column to the draws.
pub fn with_hazard_ratio(draws: DrawMatrix) -> Result<DrawMatrix> {
    if draws.column_index(HR).is_ok() {
        return Ok(draws);
    }
    draws.with_derived(HR, BETA, f64::exp)
}

/// Sampling target for the Weibull PH model.
///
/// By default the baseline scale is pinned at `sigma = 1`, leaving the two
/// intercepts to carry the overall hazard level; only `alpha - k log sigma`
/// is identified by the likelihood, so freeing `sigma` adds a ridge.
///
/// The sampled coordinates are `shape, alpha_t, alpha_c, alpha_e, tau`
/// (plus `scale`), where `alpha_t = alpha_c + beta` is the treatment-arm
/// intercept; the shear has unit Jacobian, so the prior on `beta` carries
/// over unchanged. `beta` and `hr` are stored as derived columns.
#[derive(Debug, Clone)]
pub struct WeibullPhModel {
    log_times: Vec<f64>,
    events: Vec<bool>,
    arms: Vec<Arm>,
    hyper: WeibullPhHyper,
    free_scale: bool,
    params: Vec<ParamSpec>,
    crude_log_rate: f64,
}

impl WeibullPhModel {
    pub fn new(data: &[SurvivalRecord], hyper: WeibullPhHyper) -> Self {
        Self::with_free_scale(data, hyper, false)
    }

    pub fn with_free_scale(data: &[SurvivalRecord], hyper: WeibullPhHyper, free_scale: bool) -> Self {
        let mut params = vec![
            ParamSpec::metropolis(SHAPE, Transform::Log),
            ParamSpec::metropolis(ALPHA_T, Transform::Identity),
            ParamSpec::metropolis(ALPHA_C, Transform::Identity),
            ParamSpec::metropolis(ALPHA_E, Transform::Identity),
            ParamSpec::metropolis(TAU, Transform::Log),
        ];
        if free_scale {
            params.push(ParamSpec::metropolis(SCALE, Transform::Log));
        }
        let events = data.iter().filter(|r| r.event).count() as f64;
        let exposure: f64 = data.iter().map(|r| r.time).sum();
        let crude_log_rate = if events > 0.0 && exposure > 0.0 { (events / exposure).ln() } else { 0.0 };
        WeibullPhModel {
            log_times: data.iter().map(|r| r.time.ln()).collect(),
            events: data.iter().map(|r| r.event).collect(),
            arms: data.iter().map(|r| r.arm).collect(),
            hyper,
            free_scale,
            params,
            crude_log_rate,
        }
    }

    pub fn hyper(&self) -> WeibullPhHyper {
        self.hyper
    }

    pub fn unpack(&self, state: &[f64]) -> WeibullPhParams {
        WeibullPhParams {
            log_shape: state[0].ln(),
            beta: state[1] - state[2],
            alpha_c: state[2],
            alpha_e: state[3],
            tau: state[4],
            log_scale: if self.free_scale { state[5].ln() } else { 0.0 },
        }
    }

    /// Prior on the sampled state: as [`log_prior`], but with the scale
    /// term dropped when sigma is pinned and expressed as a density in
    /// sigma when it is free.
    fn state_log_prior(&self, p: &WeibullPhParams) -> f64 {
        if !(p.tau > 0.0) {
            return f64::NEG_INFINITY;
        }
        log_prior_terms(p, &self.hyper)
            .iter()
            .map(|&(name, v)| match name {
                SCALE if !self.free_scale => 0.0,
                SCALE => v - p.log_scale,
                _ => v,
            })
            .sum()
    }
}

impl TargetModel for WeibullPhModel {
    fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    fn log_prior(&self, state: &[f64]) -> f64 {
        self.state_log_prior(&self.unpack(state))
    }

    fn log_likelihood(&self, state: &[f64]) -> f64 {
        let p = self.unpack(state);
        let k = state[0];
        let mut total = 0.0;
        for ((&log_t, &event), &arm) in self.log_times.iter().zip(&self.events).zip(&self.arms) {
            total += record_term(p.log_shape, k, p.log_scale, linear_predictor(&p, arm), log_t, event);
        }
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }

    fn sensitivity_params(&self) -> Vec<String> {
        vec![TAU.to_string()]
    }

    fn initial_state(&self, rng: &mut SimRng, shrink: f64) -> Vec<f64> {
        let mut jitter = |sd: f64| shrink * sd * std_normal(rng);
        let alpha_c = self.crude_log_rate + jitter(0.5);
        let mut state = vec![jitter(0.3).exp(), alpha_c + jitter(0.5), alpha_c, self.crude_log_rate + jitter(0.5)];
        state.push((shrink * self.hyper.s * std_normal(rng).abs()).max(1e-3 * self.hyper.s));
        if self.free_scale {
            state.push((shrink * 0.3 * std_normal(rng)).exp());
        }
        state
    }

    fn likelihood_depends_on(&self, idx: usize) -> bool {
        idx != 4
    }

    fn derived_columns(&self) -> Vec<ColumnMeta> {
        vec![ColumnMeta::new(BETA, Transform::Identity), ColumnMeta::new(HR, Transform::Log)]
    }

    fn derive_values(&self, state: &[f64], out: &mut Vec<f64>) {
        let beta = state[1] - state[2];
        out.push(beta);
        out.push(beta.exp());
    }
}

/// Trial layout and true parameters for [`simulate_trial`]. Times are on a
/// unit baseline scale (sigma = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialSpec {
    pub n_treatment: usize,
    pub n_control: usize,
    pub n_external: usize,
    pub shape: f64,
    pub hazard_ratio: f64,
    pub alpha_c: f64,
    pub alpha_e: f64,
    /// Expected fraction of administratively censored subjects, in `[0, 1)`.
    pub censor_frac: f64,
}

impl Default for TrialSpec {
    /// The shipped desk-scale setting: external controls fare better than
    /// current controls, so heavy borrowing dilutes the treatment effect.
    fn default() -> Self {
        TrialSpec {
            n_treatment: 100,
            n_control: 50,
            n_external: 40,
            shape: 1.2,
            hazard_ratio: 0.7,
            alpha_c: 0.0,
            alpha_e: -1.0,
            censor_frac: 0.2,
        }
    }
}

impl TrialSpec {
    /// Arm sizes 280/140/100.
    pub fn large() -> Self {
        TrialSpec { n_treatment: 280, n_control: 140, n_external: 100, ..TrialSpec::default() }
    }

    pub fn validate(&self) -> Result<()> {
        Distribution::weibull(self.shape, 1.0)?;
        if !(self.hazard_ratio > 0.0 && self.hazard_ratio.is_finite()) {
            return Err(Error::Config("hazard_ratio must be > 0".into()));
        }
        if !(self.alpha_c.is_finite() && self.alpha_e.is_finite()) {
            return Err(Error::Config("intercepts must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.censor_frac) {
            return Err(Error::Config("censor_frac must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn arms(&self) -> [(Arm, usize, f64); 3] {
        [
            (Arm::Treatment, self.n_treatment, self.alpha_c + self.hazard_ratio.ln()),
            (Arm::Control, self.n_control, self.alpha_c),
            (Arm::External, self.n_external, self.alpha_e),
        ]
    }

    /// Expected censored fraction under uniform censoring on `(0, c_max)`.
    fn expected_censoring(&self, c_max: f64) -> f64 {
        let total = (self.n_treatment + self.n_control + self.n_external) as f64;
        let n = 400;
        let h = c_max / n as f64;
        self.arms()
            .iter()
            .map(|&(_, size, eta)| {
                let surv = |c: f64| (-(c.powf(self.shape)) * eta.exp()).exp();
                let mut s = surv(0.0) + surv(c_max);
                for i in 1..n {
                    s += if i % 2 == 1 { 4.0 } else { 2.0 } * surv(i as f64 * h);
                }
                size as f64 / total * (s * h / 3.0) / c_max
            })
            .sum()
    }

    /// Censoring window length hitting `censor_frac` in expectation.
    pub fn censoring_window(&self) -> Option<f64> {
        if self.censor_frac == 0.0 || self.n_treatment + self.n_control + self.n_external == 0 {
            return None;
        }
        let (mut lo, mut hi) = (1e-8f64.ln(), 1e8f64.ln());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            // Censoring falls as the window grows.
            if self.expected_censoring(mid.exp()) > self.censor_frac {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some((0.5 * (lo + hi)).exp())
    }
}

/// Simulated trial: Weibull event times per arm under the model's hazard
/// structure, with independent uniform administrative censoring.
pub fn simulate_trial(spec: &TrialSpec, seed: u64) -> Result<Vec<SurvivalRecord>> {
    spec.validate()?;
    let window = spec.censoring_window();
    let mut rng = chain_rng(seed, 0);
    let mut out = Vec::with_capacity(spec.n_treatment + spec.n_control + spec.n_external);
    let unit_exp = Distribution::exponential(1.0)?;
    for (arm, size, eta) in spec.arms() {
        for _ in 0..size {
            // H(T) = T^k e^eta ~ Exp(1)
            let e = unit_exp.sample(&mut rng);
            let t = (e * (-eta).exp()).powf(1.0 / spec.shape);
            let c = window.map(|w| w * (1.0 - rand::Rng::random::<f64>(&mut rng)));
            let rec = match c {
                Some(c) if c < t => SurvivalRecord { time: c, event: false, arm },
                _ => SurvivalRecord { time: t, event: true, arm },
            };
            if !(rec.time > 0.0 && rec.time.is_finite()) {
                return Err(Error::Numerical(format!("simulated time {} out of range", rec.time)));
            }
            out.push(rec);
        }
    }
    Ok(out)
}
