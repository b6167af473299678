//! Bias-corrected Bayesian nonparametric meta-analysis.
//!
//! Study `i` reports `y_i ~ Normal(theta_i + I_i beta_i, se_i^2)` where
//! `theta_i ~ Normal(mu_theta, tau_theta^2)` is the bias-corrected effect,
//! `I_i ~ Bernoulli(pi_b)` flags a biased study and `beta_i` is drawn from a
//! Dirichlet process truncated at `K` atoms (stick-breaking weights over
//! `beta_star_k ~ Normal(mu_beta, tau_beta^2)`). Unbiased studies ignore
//! their `beta_i`.
//!
//! State layout (see [`BcbnpModel::params`]): the five continuous
//! hyperparameters, `pi_b`, then `theta[i]`, `bias[i]`, `cluster[i]` per
//! study, `v[k]` for the first `K - 1` sticks and `beta_star[k]` per atom.
//! `bias` is stored as 0/1 and `cluster` as a 1-based atom index.
//!
//! Only `tau_theta` and `tau_beta` take random-walk steps; every other
//! component is drawn from its full conditional.

use serde::{Deserialize, Serialize};

use crate::dist::{logistic, std_normal, Distribution, Transform};
use crate::error::{Error, Result};
use crate::mcmc::{chain_rng, ColumnMeta, DrawMatrix, ParamSpec, SimRng, TargetModel};

pub const MU_THETA: &str = "mu_theta";
pub const TAU_THETA: &str = "tau_theta";
pub const MU_BETA: &str = "mu_beta";
pub const TAU_BETA: &str = "tau_beta";
pub const DP_ALPHA: &str = "dp_alpha";
pub const PI_B: &str = "pi_b";
/// Derived pooled odds-ratio column.
pub const OR: &str = "or";

pub const DEFAULT_TRUNCATION: usize = 10;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRecord {
    /// Log odds ratio.
    pub y: f64,
    pub se: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl MetaRecord {
    pub fn new(y: f64, se: f64) -> Result<Self> {
        if !y.is_finite() {
            return Err(Error::invalid("effect estimate", format!("must be finite, got {y}")));
        }
        if !(se > 0.0 && se.is_finite()) {
            return Err(Error::invalid("standard error", format!("must be finite and > 0, got {se}")));
        }
        Ok(MetaRecord { y, se, label: None })
    }

    pub fn labelled(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

/// Beta prior hyperparameters of `pi_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcbnpHyper {
    pub a0: f64,
    pub a1: f64,
}

impl BcbnpHyper {
    pub fn new(a0: f64, a1: f64) -> Result<Self> {
        Distribution::beta(a0, a1)?;
        Ok(BcbnpHyper { a0, a1 })
    }

    pub fn pi_prior(&self) -> Distribution {
        Distribution::beta(self.a0, self.a1).expect("validated")
    }
}

/// Hyperpriors held fixed across base and alternative priors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcbnpSettings {
    pub truncation: usize,
    pub mu_theta_sd: f64,
    pub tau_theta_scale: f64,
    pub mu_beta_sd: f64,
    pub tau_beta_scale: f64,
    pub dp_alpha_rate: f64,
}

impl Default for BcbnpSettings {
    fn default() -> Self {
        BcbnpSettings {
            truncation: DEFAULT_TRUNCATION,
            mu_theta_sd: 10.0,
            tau_theta_scale: 5.0,
            mu_beta_sd: 1.0,
            tau_beta_scale: 1.0,
            dp_alpha_rate: 1.0,
        }
    }
}

/// Structured view of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct BcbnpParams {
    pub mu_theta: f64,
    pub tau_theta: f64,
    pub theta: Vec<f64>,
    pub bias: Vec<bool>,
    pub pi_b: f64,
    pub sticks: Vec<f64>,
    pub beta_star: Vec<f64>,
    pub mu_beta: f64,
    pub tau_beta: f64,
    pub dp_alpha: f64,
    /// 0-based atom index per study.
    pub cluster: Vec<usize>,
}

impl BcbnpParams {
    pub fn study_bias(&self, i: usize) -> f64 {
        self.beta_star[self.cluster[i]]
    }
}

/// Stick-breaking weights for `K = v.len() + 1` atoms; the last weight is
/// the remainder so the weights sum to one.
pub fn stick_weights(v: &[f64]) -> Vec<f64> {
    let mut w = Vec::with_capacity(v.len() + 1);
    let mut left = 1.0;
    for &vk in v {
        w.push(vk * left);
        left *= 1.0 - vk;
    }
    let assigned: f64 = w.iter().sum();
    w.push((1.0 - assigned).max(0.0));
    w
}

fn normal_lpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -HALF_LN_2PI - sd.ln() - 0.5 * z * z
}

fn half_normal_lpdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    std::f64::consts::LN_2 + normal_lpdf(x, 0.0, scale)
}

/// `Normal(y; theta_i + I_i beta_i, se_i^2)` summed over studies.
pub fn log_likelihood(p: &BcbnpParams, data: &[MetaRecord]) -> Result<f64> {
    let mut total = 0.0;
    for (i, r) in data.iter().enumerate() {
        let mean = p.theta[i] + if p.bias[i] { p.study_bias(i) } else { 0.0 };
        let term = normal_lpdf(r.y, mean, r.se);
        if !term.is_finite() {
            return Err(Error::NonFiniteLikelihood { index: i });
        }
        total += term;
    }
    Ok(total)
}

/// Named prior blocks, constrained scale, no Jacobians.
pub fn log_prior_terms(p: &BcbnpParams, hyper: &BcbnpHyper, s: &BcbnpSettings) -> Vec<(&'static str, f64)> {
    let invalid = !(p.pi_b > 0.0 && p.pi_b < 1.0)
        || !(p.tau_theta > 0.0 && p.tau_beta > 0.0 && p.dp_alpha > 0.0)
        || p.sticks.iter().any(|&v| !(v > 0.0 && v < 1.0));
    if invalid {
        return vec![("support", f64::NEG_INFINITY)];
    }
    let w = stick_weights(&p.sticks);
    let n_biased = p.bias.iter().filter(|&&b| b).count() as f64;
    let n = p.bias.len() as f64;
    vec![
        ("theta", p.theta.iter().map(|&t| normal_lpdf(t, p.mu_theta, p.tau_theta)).sum()),
        ("bias", n_biased * p.pi_b.ln() + (n - n_biased) * (1.0 - p.pi_b).ln()),
        (PI_B, hyper.pi_prior().log_pdf(p.pi_b)),
        // Beta(1, alpha) sticks
        ("sticks", p.sticks.iter().map(|&v| p.dp_alpha.ln() + (p.dp_alpha - 1.0) * (1.0 - v).ln()).sum()),
        ("cluster", p.cluster.iter().map(|&c| w[c].ln()).sum()),
        ("beta_star", p.beta_star.iter().map(|&b| normal_lpdf(b, p.mu_beta, p.tau_beta)).sum()),
        (MU_THETA, normal_lpdf(p.mu_theta, 0.0, s.mu_theta_sd)),
        (TAU_THETA, half_normal_lpdf(p.tau_theta, s.tau_theta_scale)),
        (MU_BETA, normal_lpdf(p.mu_beta, 0.0, s.mu_beta_sd)),
        (TAU_BETA, half_normal_lpdf(p.tau_beta, s.tau_beta_scale)),
        (DP_ALPHA, s.dp_alpha_rate.ln() - s.dp_alpha_rate * p.dp_alpha),
    ]
}

pub fn log_prior(p: &BcbnpParams, hyper: &BcbnpHyper, s: &BcbnpSettings) -> f64 {
    log_prior_terms(p, hyper, s).iter().map(|t| t.1).sum()
}

/// Elementwise `exp(mu_theta)`.
pub fn pooled_or_draws(draws: &DrawMatrix) -> Result<DrawMatrix> {
    draws.derive(OR, MU_THETA, f64::exp)
}

pub fn with_pooled_or(draws: DrawMatrix) -> Result<DrawMatrix> {
    if draws.column_index(OR).is_ok() {
        return Ok(draws);
    }
    draws.with_derived(OR, MU_THETA, f64::exp)
}

/// Sampling target for the BC-BNP model.
#[derive(Debug, Clone)]
pub struct BcbnpModel {
    data: Vec<MetaRecord>,
    hyper: BcbnpHyper,
    settings: BcbnpSettings,
    params: Vec<ParamSpec>,
}

// Fixed offsets into the state vector.
const I_MU_THETA: usize = 0;
const I_TAU_THETA: usize = 1;
const I_MU_BETA: usize = 2;
const I_TAU_BETA: usize = 3;
const I_DP_ALPHA: usize = 4;
const I_PI_B: usize = 5;
const N_FIXED: usize = 6;

impl BcbnpModel {
    pub fn new(data: Vec<MetaRecord>, hyper: BcbnpHyper, settings: BcbnpSettings) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::invalid("meta-analysis", "need at least two studies"));
        }
        if settings.truncation == 0 {
            return Err(Error::Config("truncation must be >= 1".into()));
        }
        for (what, v) in [
            ("mu_theta_sd", settings.mu_theta_sd),
            ("tau_theta_scale", settings.tau_theta_scale),
            ("mu_beta_sd", settings.mu_beta_sd),
            ("tau_beta_scale", settings.tau_beta_scale),
            ("dp_alpha_rate", settings.dp_alpha_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{what} must be > 0")));
            }
        }
        let n = data.len();
        let k = settings.truncation;
        let mut params = vec![
            ParamSpec::gibbs(MU_THETA, Transform::Identity),
            ParamSpec::metropolis(TAU_THETA, Transform::Log),
            ParamSpec::gibbs(MU_BETA, Transform::Identity),
            ParamSpec::metropolis(TAU_BETA, Transform::Log),
            ParamSpec::gibbs(DP_ALPHA, Transform::Log),
            ParamSpec::gibbs(PI_B, Transform::Logit),
        ];
        params.extend((1..=n).map(|i| ParamSpec::gibbs(format!("theta[{i}]"), Transform::Identity)));
        params.extend((1..=n).map(|i| ParamSpec::gibbs(format!("bias[{i}]"), Transform::Identity)));
        params.extend((1..=n).map(|i| ParamSpec::gibbs(format!("cluster[{i}]"), Transform::Identity)));
        params.extend((1..k).map(|j| ParamSpec::gibbs(format!("v[{j}]"), Transform::Logit)));
        params.extend((1..=k).map(|j| ParamSpec::gibbs(format!("beta_star[{j}]"), Transform::Identity)));
        Ok(BcbnpModel { data, hyper, settings, params })
    }

    pub fn data(&self) -> &[MetaRecord] {
        &self.data
    }

    pub fn hyper(&self) -> BcbnpHyper {
        self.hyper
    }

    pub fn settings(&self) -> BcbnpSettings {
        self.settings
    }

    fn n(&self) -> usize {
        self.data.len()
    }

    fn k(&self) -> usize {
        self.settings.truncation
    }

    fn theta_at(&self) -> usize {
        N_FIXED
    }

    fn bias_at(&self) -> usize {
        N_FIXED + self.n()
    }

    fn cluster_at(&self) -> usize {
        N_FIXED + 2 * self.n()
    }

    fn sticks_at(&self) -> usize {
        N_FIXED + 3 * self.n()
    }

    fn atoms_at(&self) -> usize {
        self.sticks_at() + self.k() - 1
    }

    pub fn unpack(&self, s: &[f64]) -> BcbnpParams {
        let (n, k) = (self.n(), self.k());
        BcbnpParams {
            mu_theta: s[I_MU_THETA],
            tau_theta: s[I_TAU_THETA],
            mu_beta: s[I_MU_BETA],
            tau_beta: s[I_TAU_BETA],
            dp_alpha: s[I_DP_ALPHA],
            pi_b: s[I_PI_B],
            theta: s[self.theta_at()..self.theta_at() + n].to_vec(),
            bias: s[self.bias_at()..self.bias_at() + n].iter().map(|&b| b > 0.5).collect(),
            cluster: s[self.cluster_at()..self.cluster_at() + n].iter().map(|&c| c as usize - 1).collect(),
            sticks: s[self.sticks_at()..self.sticks_at() + k - 1].to_vec(),
            beta_star: s[self.atoms_at()..self.atoms_at() + k].to_vec(),
        }
    }

    pub fn pack(&self, p: &BcbnpParams) -> Vec<f64> {
        let mut s = vec![p.mu_theta, p.tau_theta, p.mu_beta, p.tau_beta, p.dp_alpha, p.pi_b];
        s.extend(&p.theta);
        s.extend(p.bias.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        s.extend(p.cluster.iter().map(|&c| (c + 1) as f64));
        s.extend(&p.sticks);
        s.extend(&p.beta_star);
        s
    }

    /// One sweep: Metropolis moves on the collapsed density (see
    /// [`BcbnpModel::collapsed_log_density`]); per study `(I_i, cluster_i)`
    /// with `theta_i` integrated out, then `theta_i` given them; then
    /// sticks, `dp_alpha`, atoms, `mu_beta`, `mu_theta` and `pi_b` from
    /// their conjugate conditionals.
    pub fn gibbs_updates(&self, p: &mut BcbnpParams, rng: &mut SimRng) {
        self.collapsed_moves(p, rng);
        self.update_indicators(p, rng);
        self.update_sticks(p, rng);
        self.update_atoms(p, rng);
        p.mu_beta = normal_mean_draw(&p.beta_star, p.tau_beta, self.settings.mu_beta_sd, rng);
        p.mu_theta = normal_mean_draw(&p.theta, p.tau_theta, self.settings.mu_theta_sd, rng);
        let n_biased = p.bias.iter().filter(|&&b| b).count();
        p.pi_b = self.draw_pi_b(n_biased, rng);
    }

    /// Log density of the hyperparameters, sticks and atoms with `theta`,
    /// the bias indicators and the cluster labels summed and integrated
    /// out. Each study contributes the mixture
    /// `(1 - pi_b) N(y; mu_theta, v) + pi_b sum_k w_k N(y; mu_theta + beta*_k, v)`
    /// with `v = se^2 + tau_theta^2`.
    pub fn collapsed_log_density(&self, p: &BcbnpParams) -> f64 {
        let log_w: Vec<f64> = stick_weights(&p.sticks).iter().map(|x| x.ln()).collect();
        let s = &self.settings;
        let mut total = normal_lpdf(p.mu_theta, 0.0, s.mu_theta_sd)
            + half_normal_lpdf(p.tau_theta, s.tau_theta_scale)
            + normal_lpdf(p.mu_beta, 0.0, s.mu_beta_sd)
            + p.beta_star.iter().map(|&b| normal_lpdf(b, p.mu_beta, p.tau_beta)).sum::<f64>();
        let (l_unb, l_b) = ((1.0 - p.pi_b).ln(), p.pi_b.ln());
        let mut terms = vec![0.0; self.k() + 1];
        for r in &self.data {
            let sd = (r.se * r.se + p.tau_theta * p.tau_theta).sqrt();
            terms[0] = l_unb + normal_lpdf(r.y, p.mu_theta, sd);
            for (j, t) in terms[1..].iter_mut().enumerate() {
                *t = l_b + log_w[j] + normal_lpdf(r.y, p.mu_theta + p.beta_star[j], sd);
            }
            total += log_sum_exp(&terms);
        }
        total
    }

    /// Random-walk moves on the collapsed density for `mu_theta`,
    /// `log tau_theta` and a joint shift of `mu_theta` against the atoms
    /// and `mu_beta`. Each is valid because the integrated-out components
    /// are redrawn from their exact conditional right afterwards.
    fn collapsed_moves(&self, p: &mut BcbnpParams, rng: &mut SimRng) {
        let mut current = self.collapsed_log_density(p);
        for &step in &COLLAPSED_STEPS {
            for kind in 0..3 {
                let mut q = p.clone();
                let delta = step * std_normal(rng);
                let log_jac = match kind {
                    0 => {
                        q.mu_theta += delta;
                        0.0
                    }
                    1 => {
                        q.tau_theta *= (0.5 * delta).exp();
                        0.5 * delta
                    }
                    _ => {
                        q.mu_theta += delta;
                        q.mu_beta -= delta;
                        q.beta_star.iter_mut().for_each(|b| *b -= delta);
                        0.0
                    }
                };
                let proposed = self.collapsed_log_density(&q);
                let log_r = proposed - current + log_jac;
                if log_r.is_finite() && rand::Rng::random::<f64>(rng).ln() < log_r {
                    *p = q;
                    current = proposed;
                }
            }
        }
    }

    fn update_indicators(&self, p: &mut BcbnpParams, rng: &mut SimRng) {
        let k = self.k();
        let log_w: Vec<f64> = stick_weights(&p.sticks).iter().map(|x| x.ln()).collect();
        let tau2 = p.tau_theta * p.tau_theta;
        let mut scratch = vec![0.0; k + 1];
        for (i, r) in self.data.iter().enumerate() {
            let marginal_sd = (r.se * r.se + tau2).sqrt();
            // scratch[0]: unbiased; scratch[1 + j]: biased in atom j
            scratch[0] = (1.0 - p.pi_b).ln() + normal_lpdf(r.y, p.mu_theta, marginal_sd);
            for j in 0..k {
                scratch[1 + j] = p.pi_b.ln() + log_w[j] + normal_lpdf(r.y, p.mu_theta + p.beta_star[j], marginal_sd);
            }
            let pick = sample_log_categorical(&scratch, rng);
            if pick == 0 {
                p.bias[i] = false;
                p.cluster[i] = if k == 1 { 0 } else { sample_log_categorical(&log_w, rng) };
            } else {
                p.bias[i] = true;
                p.cluster[i] = pick - 1;
            }

            let obs = r.y - if p.bias[i] { p.beta_star[p.cluster[i]] } else { 0.0 };
            let prec = 1.0 / tau2 + 1.0 / (r.se * r.se);
            let mean = (p.mu_theta / tau2 + obs / (r.se * r.se)) / prec;
            p.theta[i] = mean + std_normal(rng) / prec.sqrt();
        }
    }

    /// `v_k ~ Beta(1 + n_k, alpha + n_{>k})`, then
    /// `alpha ~ Gamma(K, rate - sum log(1 - v_k))`.
    fn update_sticks(&self, p: &mut BcbnpParams, rng: &mut SimRng) {
        let k = self.k();
        let mut counts = vec![0usize; k];
        for &c in &p.cluster {
            counts[c] += 1;
        }
        let mut after: usize = counts.iter().sum();
        for j in 0..k - 1 {
            after -= counts[j];
            let d = Distribution::beta(1.0 + counts[j] as f64, p.dp_alpha + after as f64).expect("positive");
            p.sticks[j] = d.sample(rng).clamp(f64::EPSILON, 1.0 - f64::EPSILON);
        }
        let rate = self.settings.dp_alpha_rate - p.sticks.iter().map(|v| (1.0 - v).ln()).sum::<f64>();
        let g = rand_distr::Gamma::new(k as f64, 1.0 / rate).expect("positive");
        p.dp_alpha = rand_distr::Distribution::sample(&g, rng).max(f64::MIN_POSITIVE);
    }

    /// Each atom given the biased studies assigned to it.
    fn update_atoms(&self, p: &mut BcbnpParams, rng: &mut SimRng) {
        let prior_prec = 1.0 / (p.tau_beta * p.tau_beta);
        for j in 0..self.k() {
            let (mut prec, mut lin) = (prior_prec, p.mu_beta * prior_prec);
            for (i, r) in self.data.iter().enumerate() {
                if p.bias[i] && p.cluster[i] == j {
                    let wi = 1.0 / (r.se * r.se);
                    prec += wi;
                    lin += (r.y - p.theta[i]) * wi;
                }
            }
            p.beta_star[j] = lin / prec + std_normal(rng) / prec.sqrt();
        }
    }

    /// `pi_b ~ Beta(a0 + n_biased, a1 + N - n_biased)`.
    pub fn draw_pi_b(&self, n_biased: usize, rng: &mut SimRng) -> f64 {
        let n = self.n() as f64;
        let nb = n_biased as f64;
        let post = Distribution::beta(self.hyper.a0 + nb, self.hyper.a1 + n - nb).expect("positive");
        // Keep pi_b strictly inside (0, 1) for the logit column.
        post.sample(rng).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
    }
}

/// Mean of `Normal(mu, sd^2)` draws `xs` under a `Normal(0, prior_sd^2)`
/// prior on `mu`.
fn normal_mean_draw(xs: &[f64], sd: f64, prior_sd: f64, rng: &mut SimRng) -> f64 {
    let prec = 1.0 / (prior_sd * prior_sd) + xs.len() as f64 / (sd * sd);
    let mean = xs.iter().sum::<f64>() / (sd * sd) / prec;
    mean + std_normal(rng) / prec.sqrt()
}

/// Proposal scales for the collapsed moves, on the log-odds-ratio scale.
const COLLAPSED_STEPS: [f64; 3] = [0.05, 0.3, 1.5];

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Index drawn with probability proportional to `exp(log_p)`.
fn sample_log_categorical(log_p: &[f64], rng: &mut SimRng) -> usize {
    let max = log_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_p.iter().map(|l| (l - max).exp()).sum();
    let mut u = rand::Rng::random::<f64>(rng) * total;
    for (j, l) in log_p.iter().enumerate() {
        let p = (l - max).exp();
        if u < p {
            return j;
        }
        u -= p;
    }
    log_p.iter().rposition(|l| l.is_finite()).unwrap_or(0)
}

impl TargetModel for BcbnpModel {
    fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    fn log_prior(&self, state: &[f64]) -> f64 {
        log_prior(&self.unpack(state), &self.hyper, &self.settings)
    }

    fn log_likelihood(&self, state: &[f64]) -> f64 {
        let (th, bi, cl, at) = (self.theta_at(), self.bias_at(), self.cluster_at(), self.atoms_at());
        let mut total = 0.0;
        for (i, r) in self.data.iter().enumerate() {
            let mut mean = state[th + i];
            if state[bi + i] > 0.5 {
                mean += state[at + state[cl + i] as usize - 1];
            }
            total += normal_lpdf(r.y, mean, r.se);
        }
        total
    }

    fn sensitivity_params(&self) -> Vec<String> {
        vec![PI_B.to_string()]
    }

    fn initial_state(&self, rng: &mut SimRng, shrink: f64) -> Vec<f64> {
        let n = self.n();
        let k = self.k();
        let precision: f64 = self.data.iter().map(|r| 1.0 / (r.se * r.se)).sum();
        let pooled = self.data.iter().map(|r| r.y / (r.se * r.se)).sum::<f64>() / precision;
        let mut jitter = |sd: f64| shrink * sd * std_normal(rng);
        let mu_beta = jitter(0.5);
        let p = BcbnpParams {
            mu_theta: pooled + jitter(0.2),
            tau_theta: 0.2 * jitter(0.3).exp(),
            mu_beta,
            tau_beta: 0.5 * jitter(0.3).exp(),
            dp_alpha: jitter(0.3).exp(),
            pi_b: logistic(jitter(0.5) - 0.7),
            theta: self.data.iter().map(|r| r.y).collect(),
            bias: vec![false; n],
            cluster: vec![0; n],
            sticks: (1..k).map(|_| logistic(jitter(0.5))).collect(),
            beta_star: (0..k).map(|_| mu_beta + jitter(0.5)).collect(),
        };
        self.pack(&p)
    }

    fn gibbs_sweep(&self, state: &mut [f64], rng: &mut SimRng) {
        let mut p = self.unpack(state);
        self.gibbs_updates(&mut p, rng);
        state.copy_from_slice(&self.pack(&p));
    }

    fn likelihood_depends_on(&self, idx: usize) -> bool {
        idx >= N_FIXED
    }

    fn derived_columns(&self) -> Vec<ColumnMeta> {
        vec![ColumnMeta::new(OR, Transform::Log)]
    }

    fn derive_values(&self, state: &[f64], out: &mut Vec<f64>) {
        out.push(state[I_MU_THETA].exp());
    }
}

/// Synthetic meta-analysis layout for [`simulate_meta`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaSpec {
    pub n_studies: usize,
    pub n_biased: usize,
    pub mu_theta: f64,
    pub tau_theta: f64,
    pub bias_mean: f64,
    pub bias_sd: f64,
    pub se_lo: f64,
    pub se_hi: f64,
}

impl Default for MetaSpec {
    /// Fifteen studies, five of them contaminated by an upward bias.
    fn default() -> Self {
        MetaSpec {
            n_studies: 15,
            n_biased: 5,
            mu_theta: 0.4,
            tau_theta: 0.15,
            bias_mean: 0.9,
            bias_sd: 0.15,
            se_lo: 0.12,
            se_hi: 0.35,
        }
    }
}

impl MetaSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_studies < 2 {
            return Err(Error::Config("n_studies must be >= 2".into()));
        }
        if self.n_biased > self.n_studies {
            return Err(Error::Config("n_biased exceeds n_studies".into()));
        }
        if !(self.se_lo > 0.0 && self.se_hi >= self.se_lo) {
            return Err(Error::Config("need 0 < se_lo <= se_hi".into()));
        }
        if !(self.tau_theta >= 0.0 && self.bias_sd >= 0.0) {
            return Err(Error::Config("standard deviations must be >= 0".into()));
        }
        Ok(())
    }
}

/// Synthetic studies; the biased ones are placed at random positions.
pub fn simulate_meta(spec: &MetaSpec, seed: u64) -> Result<Vec<MetaRecord>> {
    spec.validate()?;
    let mut rng = chain_rng(seed, 0);
    let mut biased: Vec<bool> = (0..spec.n_studies).map(|i| i < spec.n_biased).collect();
    rand::seq::SliceRandom::shuffle(biased.as_mut_slice(), &mut rng);
    biased
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let se = if spec.se_hi > spec.se_lo {
                rand::Rng::random_range(&mut rng, spec.se_lo..spec.se_hi)
            } else {
                spec.se_lo
            };
            let theta = spec.mu_theta + spec.tau_theta * std_normal(&mut rng);
            let bias = if b { spec.bias_mean + spec.bias_sd * std_normal(&mut rng) } else { 0.0 };
            let y = theta + bias + se * std_normal(&mut rng);
            Ok(MetaRecord::new(y, se)?.labelled(format!("S{:02}", i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn toy_params(n: usize, k: usize) -> BcbnpParams {
        BcbnpParams {
            mu_theta: 0.3,
            tau_theta: 0.4,
            theta: (0..n).map(|i| 0.1 * i as f64).collect(),
            bias: (0..n).map(|i| i % 2 == 0).collect(),
            pi_b: 0.35,
            sticks: (1..k).map(|j| 0.2 + 0.05 * j as f64).collect(),
            beta_star: (0..k).map(|j| -0.5 + 0.3 * j as f64).collect(),
            mu_beta: 0.2,
            tau_beta: 0.7,
            dp_alpha: 1.3,
            cluster: (0..n).map(|i| i % k).collect(),
        }
    }

    fn toy_data(n: usize) -> Vec<MetaRecord> {
        (0..n).map(|i| MetaRecord::new(0.2 * i as f64 - 0.3, 0.1 + 0.05 * i as f64).unwrap()).collect()
    }

    #[test]
    fn stick_weight_examples() {
        assert_eq!(stick_weights(&[]), vec![1.0]);
        assert_eq!(stick_weights(&[0.5, 0.5]), vec![0.5, 0.25, 0.25]);
        let mut rng = SimRng::seed_from_u64(4);
        let v: Vec<f64> = (0..9).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let w = stick_weights(&v);
        assert_eq!(w.len(), 10);
        assert!(w.iter().all(|&x| x >= 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn likelihood_reductions() {
        let data = toy_data(5);
        let mut p = toy_params(5, 3);
        p.bias = vec![false; 5];
        let ll = log_likelihood(&p, &data).unwrap();
        let direct: f64 =
            data.iter().zip(&p.theta).map(|(r, t)| Distribution::normal(*t, r.se).unwrap().log_pdf(r.y)).sum();
        assert!((ll - direct).abs() < 1e-12);

        let one = [MetaRecord::new(0.8, 0.2).unwrap()];
        let single = BcbnpParams {
            theta: vec![0.0],
            bias: vec![true],
            cluster: vec![0],
            beta_star: vec![0.8],
            sticks: vec![],
            ..toy_params(1, 1)
        };
        let ll = log_likelihood(&single, &one).unwrap();
        assert!((ll + 0.5 * (2.0 * std::f64::consts::PI * 0.04f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn likelihood_term_by_term() {
        let data = toy_data(5);
        let p = toy_params(5, 3);
        let expected: f64 = (0..5)
            .map(|i| {
                let mean = p.theta[i] + if p.bias[i] { p.beta_star[p.cluster[i]] } else { 0.0 };
                Distribution::normal(mean, data[i].se).unwrap().log_pdf(data[i].y)
            })
            .sum();
        assert!((log_likelihood(&p, &data).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn prior_blocks() {
        let s = BcbnpSettings::default();
        let h = BcbnpHyper::new(0.5, 1.0).unwrap();
        assert!((h.pi_prior().mean() - 1.0 / 3.0).abs() < 1e-15);
        let mut p = toy_params(4, 3);
        p.bias = vec![false; 4];
        let terms = log_prior_terms(&p, &h, &s);
        let bias = terms.iter().find(|t| t.0 == "bias").unwrap().1;
        assert!((bias - 4.0 * (0.65f64).ln()).abs() < 1e-12);

        // Term-by-term against dist-core densities.
        let p = toy_params(4, 3);
        let w = stick_weights(&p.sticks);
        let d = |f: Result<Distribution>, x: f64| f.unwrap().log_pdf(x);
        let mut expected = 0.0;
        for &t in &p.theta {
            expected += d(Distribution::normal(p.mu_theta, p.tau_theta), t);
        }
        for &b in &p.bias {
            expected += if b { p.pi_b.ln() } else { (1.0 - p.pi_b).ln() };
        }
        expected += d(Distribution::beta(0.5, 1.0), p.pi_b);
        for &v in &p.sticks {
            expected += d(Distribution::beta(1.0, p.dp_alpha), v);
        }
        for &c in &p.cluster {
            expected += w[c].ln();
        }
        for &b in &p.beta_star {
            expected += d(Distribution::normal(p.mu_beta, p.tau_beta), b);
        }
        expected += d(Distribution::normal(0.0, 10.0), p.mu_theta);
        expected += d(Distribution::half_normal(5.0), p.tau_theta);
        expected += d(Distribution::normal(0.0, 1.0), p.mu_beta);
        expected += d(Distribution::half_normal(1.0), p.tau_beta);
        expected += d(Distribution::exponential(1.0), p.dp_alpha);
        assert!((log_prior(&p, &h, &s) - expected).abs() < 1e-10);

        let mut bad = p.clone();
        bad.pi_b = 1.0;
        assert_eq!(log_prior(&bad, &h, &s), f64::NEG_INFINITY);
    }

    #[test]
    fn pack_round_trip() {
        let m = BcbnpModel::new(
            toy_data(4),
            BcbnpHyper::new(1.0, 1.0).unwrap(),
            BcbnpSettings { truncation: 3, ..Default::default() },
        )
        .unwrap();
        let p = toy_params(4, 3);
        assert_eq!(m.unpack(&m.pack(&p)), p);
        assert_eq!(m.params().len(), 6 + 3 * 4 + 2 + 3);
        let direct = log_likelihood(&p, m.data()).unwrap();
        assert!((m.log_likelihood(&m.pack(&p)) - direct).abs() < 1e-12);
    }

    #[test]
    fn pi_b_conditional_is_beta() {
        // N = 10 with 3 biased studies under Beta(0.5, 1) gives Beta(3.5, 8).
        let m = BcbnpModel::new(toy_data(10), BcbnpHyper::new(0.5, 1.0).unwrap(), BcbnpSettings::default()).unwrap();
        let mut rng = SimRng::seed_from_u64(12);
        let reps = 100_000;
        let mean = (0..reps).map(|_| m.draw_pi_b(3, &mut rng)).sum::<f64>() / reps as f64;
        let se = (Distribution::beta(3.5, 8.0).unwrap().variance() / reps as f64).sqrt();
        assert!((mean - 3.5 / 11.5).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn collapsed_density_matches_quadrature() {
        // Two studies, one atom: integrate theta_i numerically and sum the
        // indicators explicitly.
        let data = toy_data(2);
        let m = BcbnpModel::new(
            data.clone(),
            BcbnpHyper::new(1.0, 1.0).unwrap(),
            BcbnpSettings { truncation: 1, ..Default::default() },
        )
        .unwrap();
        let p = BcbnpParams { sticks: vec![], beta_star: vec![0.3], cluster: vec![0; 2], ..toy_params(2, 1) };
        let mut per_study = 0.0;
        for r in &data {
            let mut mass = 0.0;
            let (lo, hi, n) = (-6.0, 6.0, 12_000);
            let h = (hi - lo) / n as f64;
            for j in 0..=n {
                let t = lo + j as f64 * h;
                let wt = if j == 0 || j == n { 0.5 } else { 1.0 };
                let prior = normal_lpdf(t, p.mu_theta, p.tau_theta).exp();
                let lik =
                    (1.0 - p.pi_b) * normal_lpdf(r.y, t, r.se).exp() + p.pi_b * normal_lpdf(r.y, t + 0.3, r.se).exp();
                mass += wt * prior * lik * h;
            }
            per_study += mass.ln();
        }
        let s = BcbnpSettings::default();
        let hyper = normal_lpdf(p.mu_theta, 0.0, s.mu_theta_sd)
            + half_normal_lpdf(p.tau_theta, s.tau_theta_scale)
            + normal_lpdf(p.mu_beta, 0.0, s.mu_beta_sd)
            + normal_lpdf(0.3, p.mu_beta, p.tau_beta);
        assert!((m.collapsed_log_density(&p) - (per_study + hyper)).abs() < 1e-8);
    }

    #[test]
    fn blocked_indicator_update_matches_quadrature() {
        // Frequencies of (bias, cluster) for study 1 after one sweep against
        // the joint density integrated over theta_1 on a grid.
        let data = toy_data(2);
        let m = BcbnpModel::new(
            data,
            BcbnpHyper::new(1.0, 1.0).unwrap(),
            BcbnpSettings { truncation: 2, ..Default::default() },
        )
        .unwrap();
        let base = BcbnpParams {
            mu_theta: -0.1,
            tau_theta: 0.3,
            pi_b: 0.4,
            sticks: vec![0.6],
            beta_star: vec![-0.4, 0.5],
            ..toy_params(2, 2)
        };
        let mut exact = [0.0; 3];
        for (slot, (b, c)) in [(false, 0usize), (true, 0), (true, 1)].into_iter().enumerate() {
            let (lo, hi, n) = (-4.0, 4.0, 8000);
            let h = (hi - lo) / n as f64;
            for c_unb in 0..2 {
                if b && c_unb > 0 {
                    break;
                }
                let mut mass = 0.0;
                for j in 0..=n {
                    let mut p = base.clone();
                    p.theta[0] = lo + j as f64 * h;
                    p.bias[0] = b;
                    p.cluster[0] = if b { c } else { c_unb };
                    let wt = if j == 0 || j == n { 0.5 } else { 1.0 };
                    mass += wt * m.log_density(&m.pack(&p)).exp();
                }
                exact[slot] += mass * h;
            }
        }
        let total: f64 = exact.iter().sum();
        let mut rng = SimRng::seed_from_u64(3);
        let reps = 60_000;
        let mut counts = [0usize; 3];
        for _ in 0..reps {
            let mut p = base.clone();
            m.update_indicators(&mut p, &mut rng);
            counts[match (p.bias[0], p.cluster[0]) {
                (false, _) => 0,
                (true, 0) => 1,
                _ => 2,
            }] += 1;
        }
        for s in 0..3 {
            let pe = exact[s] / total;
            let ph = counts[s] as f64 / reps as f64;
            let se = (pe * (1.0 - pe) / reps as f64).sqrt();
            assert!((ph - pe).abs() < 4.0 * se, "slot {s}: {ph} vs {pe}");
        }
    }

    #[test]
    fn single_atom_cluster_update_is_noop() {
        let data = toy_data(3);
        let m = BcbnpModel::new(
            data,
            BcbnpHyper::new(1.0, 1.0).unwrap(),
            BcbnpSettings { truncation: 1, ..Default::default() },
        )
        .unwrap();
        let mut rng = SimRng::seed_from_u64(2);
        let mut p = BcbnpParams { sticks: vec![], beta_star: vec![0.4], cluster: vec![0; 3], ..toy_params(3, 1) };
        for _ in 0..50 {
            m.gibbs_updates(&mut p, &mut rng);
            assert!(p.cluster.iter().all(|&c| c == 0));
            assert!(p.pi_b > 0.0 && p.pi_b < 1.0);
        }
    }

    #[test]
    fn simulated_meta_is_reproducible() {
        let a = simulate_meta(&MetaSpec::default(), 5).unwrap();
        assert_eq!(a.len(), 15);
        assert_eq!(a, simulate_meta(&MetaSpec::default(), 5).unwrap());
        assert!(a.iter().all(|r| r.se >= 0.12 && r.se < 0.35));
        assert!(simulate_meta(&MetaSpec { n_biased: 20, ..MetaSpec::default() }, 1).is_err());
    }
}
