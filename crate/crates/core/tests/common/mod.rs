//! Analytic oracles, toy models and Monte Carlo error helpers shared by the
//! integration tests.

#![allow(dead_code)]

pub mod props;

use rand::Rng;
use sirsens::dist::{Distribution, Transform};
use sirsens::mcmc::{ParamSpec, SimRng, TargetModel};

/// `y_i ~ Normal(mu, sigma^2)` with known `sigma` and `mu ~ prior`.
pub struct NormalMean {
    pub y: Vec<f64>,
    pub sigma: f64,
    pub prior: Distribution,
    params: Vec<ParamSpec>,
}

impl NormalMean {
    pub fn new(y: Vec<f64>, sigma: f64, prior: Distribution) -> Self {
        NormalMean { y, sigma, prior, params: vec![ParamSpec::metropolis("mu", Transform::Identity)] }
    }
}

impl TargetModel for NormalMean {
    fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    fn log_prior(&self, s: &[f64]) -> f64 {
        self.prior.log_pdf(s[0])
    }

    fn log_likelihood(&self, s: &[f64]) -> f64 {
        self.y.iter().map(|y| -0.5 * ((y - s[0]) / self.sigma).powi(2)).sum()
    }

    fn sensitivity_params(&self) -> Vec<String> {
        vec!["mu".into()]
    }

    fn initial_state(&self, rng: &mut SimRng, shrink: f64) -> Vec<f64> {
        let centre =
            if self.y.is_empty() { self.prior.mean() } else { self.y.iter().sum::<f64>() / self.y.len() as f64 };
        vec![centre + shrink * rng.random_range(-1.0..1.0)]
    }
}

/// Posterior `(mean, sd)` of `mu` under `Normal(m0, s0^2)`.
pub fn normal_posterior(y: &[f64], sigma: f64, m0: f64, s0: f64) -> (f64, f64) {
    let prec = 1.0 / (s0 * s0) + y.len() as f64 / (sigma * sigma);
    let mean = (m0 / (s0 * s0) + y.iter().sum::<f64>() / (sigma * sigma)) / prec;
    (mean, prec.recip().sqrt())
}

/// Standard normal quantile by bisection on the cdf.
pub fn norm_quantile(p: f64) -> f64 {
    let n = Distribution::normal(0.0, 1.0).unwrap();
    let (mut a, mut b) = (-40.0, 40.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if n.cdf(m) < p {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// `k` successes in `n` trials with `p ~ prior`.
pub struct BetaBinomial {
    pub k: u32,
    pub n: u32,
    pub prior: Distribution,
    params: Vec<ParamSpec>,
}

impl BetaBinomial {
    pub fn new(k: u32, n: u32, prior: Distribution) -> Self {
        BetaBinomial { k, n, prior, params: vec![ParamSpec::metropolis("p", Transform::Logit)] }
    }
}

impl TargetModel for BetaBinomial {
    fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    fn log_prior(&self, s: &[f64]) -> f64 {
        self.prior.log_pdf(s[0])
    }

    fn log_likelihood(&self, s: &[f64]) -> f64 {
        self.k as f64 * s[0].ln() + (self.n - self.k) as f64 * (1.0 - s[0]).ln()
    }

    fn sensitivity_params(&self) -> Vec<String> {
        vec!["p".into()]
    }

    fn initial_state(&self, rng: &mut SimRng, shrink: f64) -> Vec<f64> {
        vec![(0.5 + 0.4 * shrink * rng.random_range(-1.0..1.0)).clamp(0.05, 0.95)]
    }
}

/// Monte Carlo standard error of a weighted mean from autocorrelated
/// draws: the independent-draw importance-sampling variance inflated by
/// `M / ess_mcmc`.
pub fn weighted_mean_se(values: &[f64], weights: &[f64], ess_mcmc: f64) -> f64 {
    let mean: f64 = values.iter().zip(weights).map(|(x, w)| x * w).sum();
    let v: f64 = values.iter().zip(weights).map(|(x, w)| w * w * (x - mean) * (x - mean)).sum();
    (v * values.len() as f64 / ess_mcmc).sqrt()
}

/// Standard error of the weighted `p`-quantile estimate `q`, using the
/// true density `f(q)` of the target at that point.
pub fn weighted_quantile_se(values: &[f64], weights: &[f64], q: f64, p: f64, density: f64, ess_mcmc: f64) -> f64 {
    let v: f64 = values
        .iter()
        .zip(weights)
        .map(|(x, w)| {
            let ind = if *x <= q { 1.0 } else { 0.0 };
            w * w * (ind - p) * (ind - p)
        })
        .sum();
    (v * values.len() as f64 / ess_mcmc).sqrt() / density
}

/// Sample mean and its standard error given an MCMC effective sample size.
pub fn mean_and_se(values: &[f64], ess_mcmc: f64) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / ess_mcmc).sqrt())
}

/// Exact posterior probability that study 1 is biased in a two-study
/// BC-BNP model with truncation `K = 2`.
///
/// Given the indicators `I`, the cluster labels `c` and the two scales,
/// the data are jointly Gaussian with mean zero once `theta`, both
/// location hyperparameters and the atoms are integrated out:
///
/// ```text
/// Var(y_i)      = mt^2 + tau_t^2 + I_i (mb^2 + tau_b^2) + se_i^2
/// Cov(y_1, y_2) = mt^2 + I_1 I_2 (mb^2 + [c_1 = c_2] tau_b^2)
/// ```
///
/// with `mt`, `mb` the prior sds of the two location hyperparameters. The
/// indicators are Beta-Bernoulli, `P(c_1 = c_2)` averages
/// `E[v^2 + (1 - v)^2 | v ~ Beta(1, a)]` over `a ~ Exp(rate)`, and the two
/// half-normal scales are integrated by a midpoint rule.
pub struct TwoStudyOracle {
    pub y: [f64; 2],
    pub se: [f64; 2],
    pub a0: f64,
    pub a1: f64,
    pub mu_theta_sd: f64,
    pub tau_theta_scale: f64,
    pub mu_beta_sd: f64,
    pub tau_beta_scale: f64,
    pub dp_alpha_rate: f64,
}

impl TwoStudyOracle {
    fn ln_beta(a: f64, b: f64) -> f64 {
        use statrs::function::gamma::ln_gamma;
        ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
    }

    /// `P(I_1 = i1, I_2 = i2)`.
    pub fn p_indicators(&self, i1: bool, i2: bool) -> f64 {
        let nb = i1 as u8 as f64 + i2 as u8 as f64;
        (Self::ln_beta(self.a0 + nb, self.a1 + 2.0 - nb) - Self::ln_beta(self.a0, self.a1)).exp()
    }

    /// `P(c_1 = c_2)`.
    pub fn p_same_cluster(&self) -> f64 {
        let n = 200_000;
        let top = 60.0 / self.dp_alpha_rate;
        let h = top / n as f64;
        (0..n)
            .map(|j| {
                let a = (j as f64 + 0.5) * h;
                let same = (2.0 + a * (a + 1.0)) / ((1.0 + a) * (2.0 + a));
                same * self.dp_alpha_rate * (-self.dp_alpha_rate * a).exp() * h
            })
            .sum()
    }

    fn log_mvn2(y: [f64; 2], v1: f64, v2: f64, c: f64) -> f64 {
        let det = v1 * v2 - c * c;
        let q = (v2 * y[0] * y[0] - 2.0 * c * y[0] * y[1] + v1 * y[1] * y[1]) / det;
        -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * q
    }

    pub fn p_first_biased(&self) -> f64 {
        let p_same = self.p_same_cluster();
        let (mt2, mb2) = (self.mu_theta_sd.powi(2), self.mu_beta_sd.powi(2));
        let (nt, nb) = (600, 400);
        let ht = 8.0 * self.tau_theta_scale / nt as f64;
        let hb = 8.0 * self.tau_beta_scale / nb as f64;
        let hn_t = Distribution::half_normal(self.tau_theta_scale).unwrap();
        let hn_b = Distribution::half_normal(self.tau_beta_scale).unwrap();
        let mut mass = [[0.0; 2]; 2];
        for a in 0..nt {
            let tt = (a as f64 + 0.5) * ht;
            let wt = hn_t.log_pdf(tt).exp() * ht;
            for b in 0..nb {
                let tb = (b as f64 + 0.5) * hb;
                let w = wt * hn_b.log_pdf(tb).exp() * hb;
                for (i1, row) in mass.iter_mut().enumerate() {
                    for (i2, cell) in row.iter_mut().enumerate() {
                        let v1 = mt2 + tt * tt + i1 as f64 * (mb2 + tb * tb) + self.se[0].powi(2);
                        let v2 = mt2 + tt * tt + i2 as f64 * (mb2 + tb * tb) + self.se[1].powi(2);
                        let both = (i1 * i2) as f64;
                        let c_same = mt2 + both * (mb2 + tb * tb);
                        let c_diff = mt2 + both * mb2;
                        let lik = p_same * Self::log_mvn2(self.y, v1, v2, c_same).exp()
                            + (1.0 - p_same) * Self::log_mvn2(self.y, v1, v2, c_diff).exp();
                        *cell += w * lik;
                    }
                }
            }
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for i1 in 0..2 {
            for i2 in 0..2 {
                let m = mass[i1][i2] * self.p_indicators(i1 == 1, i2 == 1);
                den += m;
                if i1 == 1 {
                    num += m;
                }
            }
        }
        num / den
    }
}
