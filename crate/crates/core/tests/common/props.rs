//! Property checks, each a self-contained proptest run. The standalone
//! property tests and the acceptance run both call these.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sirsens::dist::{Distribution, Transform};
use sirsens::mcmc::{run_chains, ChainConfig, DrawMatrix};
use sirsens::models::bcbnp::{self, stick_weights, BcbnpParams, MetaRecord};
use sirsens::models::weibull::{self, Arm, SurvivalRecord, WeibullPhParams};
use sirsens::sir::{self, PriorSpec};
use sirsens::tipping::{bisect_tipping, iteration_bound, Bound, PriorFamily, TippingProblem};

use super::NormalMean;

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn ok(cond: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

pub fn weight_normalization() -> Result<(), String> {
    run(256, prop::collection::vec(-700.0f64..700.0, 1..300), |log_w| {
        let w = sir::normalize_log_weights(&log_w).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let total: f64 = w.iter().sum();
        ok((total - 1.0).abs() < 1e-12, || format!("sum {total}"))?;
        ok(w.iter().all(|&x| (0.0..=1.0).contains(&x)), || "weight outside [0, 1]".into())?;
        // invariant to a common shift
        let shifted: Vec<f64> = log_w.iter().map(|l| l - 123.0).collect();
        let w2 = sir::normalize_log_weights(&shifted).unwrap();
        ok(w.iter().zip(&w2).all(|(a, b)| (a - b).abs() < 1e-12), || "shift changed weights".into())
    })
}

pub fn ess_bounds() -> Result<(), String> {
    run(256, prop::collection::vec(-30.0f64..30.0, 1..300), |log_w| {
        let m = log_w.len() as f64;
        let w = sir::normalize_log_weights(&log_w).unwrap();
        let ess = sir::ess_of(&w);
        ok((1.0..=m).contains(&ess), || format!("ess {ess} outside [1, {m}]"))?;
        let uniform = vec![1.0 / m; log_w.len()];
        ok(sir::ess_of(&uniform) == m, || "uniform weights must give ESS = M".into())?;
        let mut spike = vec![0.0; log_w.len()];
        spike[log_w.len() / 2] = 1.0;
        ok(sir::ess_of(&spike) == 1.0, || "a single nonzero weight must give ESS = 1".into())
    })
}

pub fn identity_reweighting() -> Result<(), String> {
    run(128, (prop::collection::vec(0.001f64..20.0, 2..200), 0.05f64..5.0), |(tau, s)| {
        let n = tau.len();
        let d = DrawMatrix::single("tau", tau).unwrap();
        let prior = PriorSpec::new("tau", Distribution::half_normal(s).unwrap());
        let w = sir::uniform_weights(&d, &prior).unwrap();
        ok(w.weights().iter().all(|&x| x == 1.0 / n as f64), || "weights differ from 1/M".into())?;
        ok(w.ess() == n as f64, || "ESS differs from M".into())?;
        let probs = [0.025, 0.5, 0.975];
        let a = sir::weighted_summary(&d, &w, "tau", &probs).unwrap();
        let b = sir::summary(&d, "tau", &probs).unwrap();
        ok(a == b, || format!("{a:?} != {b:?}"))
    })
}

pub fn stick_simplex() -> Result<(), String> {
    run(256, prop::collection::vec(1e-9f64..(1.0 - 1e-9), 0..40), |v| {
        let w = stick_weights(&v);
        ok(w.len() == v.len() + 1, || "K weights from K-1 sticks".into())?;
        ok(w.iter().all(|&x| x >= 0.0), || "negative weight".into())?;
        let total: f64 = w.iter().sum();
        ok((total - 1.0).abs() < 1e-12, || format!("sum {total}"))?;
        let mut rest = 1.0;
        for (k, &vk) in v.iter().enumerate() {
            let expect = vk * rest;
            ok((w[k] - expect).abs() <= 1e-12 * expect.max(1e-300) + 1e-300, || format!("w[{k}]"))?;
            rest *= 1.0 - vk;
        }
        Ok(())
    })
}

/// Draws of `x ~ Normal(0, 1)` on an even quantile grid.
fn grid_normal(n: usize) -> DrawMatrix {
    let v = (0..n).map(|i| super::norm_quantile((i as f64 + 0.5) / n as f64)).collect();
    DrawMatrix::single("x", v).unwrap()
}

pub fn bisection_invariants() -> Result<(), String> {
    let draws = grid_normal(4000);
    let base = PriorSpec::new("x", Distribution::normal(0.0, 1.0).unwrap());
    // Under Normal(psi, 1) the reweighted law is Normal(psi / 2, 1/2), so
    // the upper bound increases in psi and crosses theta0 once.
    run(64, (-0.6f64..0.6, 0.05f64..0.8, 0.05f64..0.8, 1e-4f64..1e-2), |(root, left, right, tol)| {
        let theta0 = root / 2.0 + 1.959_964 * 0.5f64.sqrt();
        let bracket = (root - left, root + right);
        let mut p = TippingProblem::new(&draws, base.clone(), PriorFamily::NormalMean { sd: 1.0 }, "x", bracket);
        p.theta0 = theta0;
        p.tol_psi = tol;
        let r = match bisect_tipping(&p) {
            Ok(r) => r,
            // A bracket edge within MC noise of the root may show no sign
            // change; that is a reported error, not an invariant failure.
            Err(sirsens::Error::NoSignChange { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let (lo, hi) = r.final_bracket;
        ok(r.converged, || "did not converge".into())?;
        ok(hi - lo <= tol, || format!("final width {}", hi - lo))?;
        ok(lo <= r.psi_star && r.psi_star <= hi, || "psi_star outside the final bracket".into())?;
        let bound = iteration_bound(bracket.1 - bracket.0, tol);
        ok(r.iterations.len() <= bound, || format!("{} iterations > bound {bound}", r.iterations.len()))?;
        // Replay: every midpoint halves the bracket that keeps the sign change.
        let (mut a, mut b) = bracket;
        let f_a = r.endpoints[0].q - theta0;
        ok(f_a * (r.endpoints[1].q - theta0) < 0.0, || "endpoints do not straddle theta0".into())?;
        for s in &r.iterations {
            ok((s.psi - 0.5 * (a + b)).abs() < 1e-12, || "midpoint rule violated".into())?;
            if (s.q - theta0) * f_a > 0.0 {
                a = s.psi;
            } else {
                b = s.psi;
            }
        }
        ok((a, b) == (lo, hi), || "final bracket differs from replay".into())?;
        ok(Bound::Upper.prob(0.05) == 0.975, || "upper bound probability".into())
    })
}

pub fn transform_round_trips() -> Result<(), String> {
    let cases = prop_oneof![
        (-50.0f64..50.0).prop_map(|y| (Transform::Identity, y)),
        (-50.0f64..50.0).prop_map(|y| (Transform::Log, y)),
        // Beyond |y| ~ 15, 1 - x keeps too few digits for a tight round trip.
        (-15.0f64..15.0).prop_map(|y| (Transform::Logit, y)),
    ];
    run(512, cases, |(t, y)| {
        let (x, jac_inv) = t.inverse(y).unwrap();
        ok(t.contains(x), || format!("{} inverse left the domain at {y}", t.name()))?;
        let (y2, jac_fwd) = t.forward(x).unwrap();
        ok((y2 - y).abs() <= 1e-9 * (1.0 + y.abs()), || format!("{}: {y} -> {x} -> {y2}", t.name()))?;
        ok((jac_inv - jac_fwd).abs() <= 1e-9 * (1.0 + jac_inv.abs()), || "jacobians disagree".into())
    })
}

fn arm_of(i: u8) -> Arm {
    match i % 3 {
        0 => Arm::Treatment,
        1 => Arm::Control,
        _ => Arm::External,
    }
}

pub fn likelihood_additivity() -> Result<(), String> {
    let survival = prop::collection::vec((0.01f64..10.0, any::<bool>(), 0u8..3), 2..60);
    let params = (-0.7f64..0.7, -1.0f64..1.0, -2.0f64..1.0, -2.0f64..1.0);
    run(128, (survival, params), |(recs, (ls, beta, ac, ae))| {
        let data: Vec<SurvivalRecord> =
            recs.iter().map(|&(t, e, a)| SurvivalRecord::new(t, e, arm_of(a)).unwrap()).collect();
        let p = WeibullPhParams { log_shape: ls, log_scale: 0.0, beta, alpha_c: ac, alpha_e: ae, tau: 1.0 };
        let whole = weibull::log_likelihood(&p, &data).unwrap();
        let parts: f64 = data.iter().map(|r| weibull::log_likelihood(&p, std::slice::from_ref(r)).unwrap()).sum();
        let cut = data.len() / 2;
        let halves =
            weibull::log_likelihood(&p, &data[..cut]).unwrap() + weibull::log_likelihood(&p, &data[cut..]).unwrap();
        let tol = 1e-9 * (1.0 + whole.abs());
        ok((whole - parts).abs() < tol && (whole - halves).abs() < tol, || format!("{whole} vs {parts} / {halves}"))
    })?;
    let meta = prop::collection::vec((-2.0f64..2.0, 0.05f64..1.0, -1.0f64..1.0, any::<bool>()), 2..30);
    run(128, meta, |studies| {
        let data: Vec<MetaRecord> = studies.iter().map(|&(y, se, _, _)| MetaRecord::new(y, se).unwrap()).collect();
        let n = data.len();
        let p = BcbnpParams {
            mu_theta: 0.1,
            tau_theta: 0.3,
            theta: studies.iter().map(|s| s.2).collect(),
            bias: studies.iter().map(|s| s.3).collect(),
            pi_b: 0.3,
            sticks: vec![0.4],
            beta_star: vec![0.5, -0.2],
            mu_beta: 0.0,
            tau_beta: 1.0,
            dp_alpha: 1.0,
            cluster: (0..n).map(|i| i % 2).collect(),
        };
        let whole = bcbnp::log_likelihood(&p, &data).unwrap();
        let parts: f64 = (0..n)
            .map(|i| {
                let mut q = p.clone();
                q.theta = vec![p.theta[i]];
                q.bias = vec![p.bias[i]];
                q.cluster = vec![p.cluster[i]];
                bcbnp::log_likelihood(&q, std::slice::from_ref(&data[i])).unwrap()
            })
            .sum();
        ok((whole - parts).abs() < 1e-9 * (1.0 + whole.abs()), || format!("{whole} vs {parts}"))
    })
}

pub fn determinism() -> Result<(), String> {
    let y: Vec<f64> = (0..10).map(|i| 0.3 * i as f64 - 1.0).collect();
    let model = NormalMean::new(y, 1.0, Distribution::normal(0.0, 3.0).unwrap());
    run(8, (any::<u64>(), 1usize..4), |(seed, chains)| {
        let cfg =
            ChainConfig { n_chains: chains, n_iter: 1200, n_burnin: 200, thin: 2, seed, ..ChainConfig::default() };
        let (a, _) = run_chains(&model, &cfg).unwrap();
        let (b, _) = run_chains(&model, &cfg).unwrap();
        ok(a == b, || "chains differ under a fixed seed".into())?;
        let w = sir::importance_weights(
            &a,
            &PriorSpec::new("mu", model.prior),
            &PriorSpec::new("mu", Distribution::normal(0.5, 1.0).unwrap()),
        )
        .unwrap();
        let r1 = sir::resample_indices(w.weights(), 300, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let r2 = sir::resample_indices(w.weights(), 300, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        ok(r1 == r2, || "resampling differs under a fixed seed".into())
    })
}

/// Every suite, by name.
pub const SUITES: [(&str, fn() -> Result<(), String>); 8] = [
    ("weight normalization", weight_normalization),
    ("ESS bounds", ess_bounds),
    ("identity reweighting", identity_reweighting),
    ("stick-breaking simplex", stick_simplex),
    ("bisection invariants", bisection_invariants),
    ("transform round trips", transform_round_trips),
    ("likelihood additivity", likelihood_additivity),
    ("determinism", determinism),
];
