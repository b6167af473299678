//! Tipping-point search over a scalar prior hyperparameter `psi`.
//!
//! `Q(psi)` is the chosen credible bound of the target parameter under the
//! prior `family(psi)`, evaluated by reweighting a single set of base draws.
//! The tipping point is the root of `Q(psi) = theta0`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::mcmc::DrawMatrix;
use crate::sir::{self, PriorSpec, SortedColumn, WeightedSummary, LOW_ESS_FRACTION};

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 40;
const PRESCAN_POINTS: usize = 5;

type CustomFamily = Arc<dyn Fn(f64) -> Result<Distribution> + Send + Sync>;

/// Maps `psi` to a prior on the sensitivity parameter.
#[derive(Clone)]
pub enum PriorFamily {
    /// `HalfNormal(psi)`.
    HalfNormalScale,
    /// `Beta(psi, a1)`.
    BetaA0 {
        a1: f64,
    },
    /// `Beta(a0, psi)`.
    BetaA1 {
        a0: f64,
    },
    /// `Normal(psi, sd)`.
    NormalMean {
        sd: f64,
    },
    /// `Normal(mean, psi)`.
    NormalSd {
        mean: f64,
    },
    Custom(CustomFamily),
}

impl PriorFamily {
    pub fn custom(f: impl Fn(f64) -> Result<Distribution> + Send + Sync + 'static) -> Self {
        PriorFamily::Custom(Arc::new(f))
    }

    pub fn at(&self, psi: f64) -> Result<Distribution> {
        match self {
            PriorFamily::HalfNormalScale => Distribution::half_normal(psi),
            PriorFamily::BetaA0 { a1 } => Distribution::beta(psi, *a1),
            PriorFamily::BetaA1 { a0 } => Distribution::beta(*a0, psi),
            PriorFamily::NormalMean { sd } => Distribution::normal(psi, *sd),
            PriorFamily::NormalSd { mean } => Distribution::normal(*mean, psi),
            PriorFamily::Custom(f) => f(psi),
        }
    }
}

impl fmt::Debug for PriorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorFamily::HalfNormalScale => write!(f, "HalfNormalScale"),
            PriorFamily::BetaA0 { a1 } => write!(f, "BetaA0 {{ a1: {a1} }}"),
            PriorFamily::BetaA1 { a0 } => write!(f, "BetaA1 {{ a0: {a0} }}"),
            PriorFamily::NormalMean { sd } => write!(f, "NormalMean {{ sd: {sd} }}"),
            PriorFamily::NormalSd { mean } => write!(f, "NormalSd {{ mean: {mean} }}"),
            PriorFamily::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Which end of the equal-tailed interval is compared with `theta0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    /// Quantile `1 - alpha/2`.
    Upper,
    /// Quantile `alpha/2`.
    Lower,
}

impl Bound {
    pub fn prob(self, alpha: f64) -> f64 {
        match self {
            Bound::Upper => 1.0 - alpha / 2.0,
            Bound::Lower => alpha / 2.0,
        }
    }

    /// Whether a bound value lies on the far side of `theta0`, i.e. the
    /// interval excludes it.
    pub fn excludes(self, q: f64, theta0: f64) -> bool {
        match self {
            Bound::Upper => q < theta0,
            Bound::Lower => q > theta0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TippingProblem<'a> {
    pub draws: &'a DrawMatrix,
    /// Prior the draws were obtained under; its `param` is the sensitivity
    /// parameter.
    pub base: PriorSpec,
    pub family: PriorFamily,
    pub target: String,
    pub alpha: f64,
    pub theta0: f64,
    pub bound: Bound,
    pub bracket: (f64, f64),
    pub tol_psi: f64,
    pub max_iter: usize,
}

impl<'a> TippingProblem<'a> {
    /// 95% upper bound against `theta0 = 0` with default tolerances; adjust
    /// the public fields as needed.
    pub fn new(
        draws: &'a DrawMatrix,
        base: PriorSpec,
        family: PriorFamily,
        target: impl Into<String>,
        bracket: (f64, f64),
    ) -> Self {
        TippingProblem {
            draws,
            base,
            family,
            target: target.into(),
            alpha: 0.05,
            theta0: 0.0,
            bound: Bound::Upper,
            bracket,
            tol_psi: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn sensitivity_param(&self) -> &str {
        &self.base.param
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        let (lo, hi) = self.bracket;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid("bracket", format!("need finite lo < hi, got ({lo}, {hi})")));
        }
        if !(self.tol_psi > 0.0) {
            return Err(Error::invalid("tol_psi", "must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be >= 1"));
        }
        if !self.theta0.is_finite() {
            return Err(Error::invalid("theta0", "must be finite"));
        }
        self.draws.column(&self.target)?;
        self.draws.column(&self.base.param)?;
        Ok(())
    }

    fn prob(&self) -> f64 {
        self.bound.prob(self.alpha)
    }
}

/// One evaluation of `Q(psi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TippingStep {
    pub psi: f64,
    pub q: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TippingResult {
    pub psi_star: f64,
    /// Midpoint evaluations in order.
    pub iterations: Vec<TippingStep>,
    /// Initial bracket evaluations.
    pub endpoints: [TippingStep; 2],
    /// Bracket at exit.
    pub final_bracket: (f64, f64),
    pub converged: bool,
    pub min_ess_seen: f64,
    pub warnings: Vec<String>,
    pub refit_verified: bool,
}

/// `Q(psi)` and the importance ESS at `psi`.
pub fn quantile_at(problem: &TippingProblem<'_>, psi: f64) -> Result<(f64, f64)> {
    let values = problem.draws.column(&problem.target)?;
    QuantileEval { problem, sorted: SortedColumn::new(values) }.at(psi)
}

struct QuantileEval<'p, 'a> {
    problem: &'p TippingProblem<'a>,
    sorted: SortedColumn,
}

impl QuantileEval<'_, '_> {
    fn at(&self, psi: f64) -> Result<(f64, f64)> {
        let p = self.problem;
        let attach = |e: Error| Error::AtPsi { psi, source: Box::new(e) };
        let alt = PriorSpec::new(p.base.param.clone(), p.family.at(psi).map_err(attach)?);
        let w = sir::importance_weights(p.draws, &p.base, &alt).map_err(attach)?;
        let q = self.sorted.quantiles(w.weights(), &[p.prob()])[0];
        Ok((q, w.ess()))
    }
}

/// Bisection on `psi` for `Q(psi) = theta0`.
pub fn bisect_tipping(problem: &TippingProblem<'_>) -> Result<TippingResult> {
    problem.validate()?;
    let values = problem.draws.column(&problem.target)?;
    let eval = QuantileEval { problem, sorted: SortedColumn::new(values) };
    let m = problem.draws.n_rows() as f64;
    let (lo, hi) = problem.bracket;
    let mut result = bisect(lo, hi, problem.theta0, problem.tol_psi, problem.max_iter, m, |psi| eval.at(psi))?;

    if let Some(w) = prescan_warning(&result.endpoints, problem, |psi| eval.at(psi)) {
        result.warnings.insert(0, w);
    }
    Ok(result)
}

/// Interior points of a coarse scan; warns if the endpoint and interior
/// values are not monotone in `psi`.
fn prescan_warning(
    endpoints: &[TippingStep; 2],
    problem: &TippingProblem<'_>,
    eval: impl Fn(f64) -> Result<(f64, f64)>,
) -> Option<String> {
    let (lo, hi) = problem.bracket;
    let mut qs = vec![endpoints[0].q];
    for i in 1..PRESCAN_POINTS - 1 {
        let psi = lo + (hi - lo) * i as f64 / (PRESCAN_POINTS - 1) as f64;
        match eval(psi) {
            Ok((q, _)) => qs.push(q),
            Err(e) => return Some(format!("pre-scan failed at psi = {psi}: {e}")),
        }
    }
    qs.push(endpoints[1].q);
    let up = qs.windows(2).all(|w| w[1] >= w[0]);
    let down = qs.windows(2).all(|w| w[1] <= w[0]);
    if up || down {
        None
    } else {
        Some(format!("credible bound is not monotone over the bracket pre-scan {qs:?}; the crossing may not be unique"))
    }
}

fn bisect(
    mut lo: f64,
    mut hi: f64,
    theta0: f64,
    tol: f64,
    max_iter: usize,
    m: f64,
    mut eval: impl FnMut(f64) -> Result<(f64, f64)>,
) -> Result<TippingResult> {
    let (q_lo, ess_lo) = eval(lo)?;
    let (q_hi, ess_hi) = eval(hi)?;
    let (f_lo, f_hi) = (q_lo - theta0, q_hi - theta0);
    if !(f_lo * f_hi < 0.0) {
        return Err(Error::NoSignChange { lo, hi, f_lo, f_hi });
    }
    let endpoints = [TippingStep { psi: lo, q: q_lo, ess: ess_lo }, TippingStep { psi: hi, q: q_hi, ess: ess_hi }];
    let mut warnings = Vec::new();
    let low_ess = |step: &TippingStep, warnings: &mut Vec<String>| {
        if step.ess < LOW_ESS_FRACTION * m {
            warnings.push(format!("low ESS {:.1} at psi = {}", step.ess, step.psi));
        }
    };
    endpoints.iter().for_each(|s| low_ess(s, &mut warnings));

    let lo_negative = f_lo < 0.0;
    let mut iterations = Vec::new();
    while hi - lo > tol && iterations.len() < max_iter {
        let mid = 0.5 * (lo + hi);
        let (q, ess) = eval(mid)?;
        let step = TippingStep { psi: mid, q, ess };
        low_ess(&step, &mut warnings);
        iterations.push(step);
        let f = q - theta0;
        if f == 0.0 {
            lo = mid;
            hi = mid;
        } else if (f < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let converged = hi - lo <= tol;
    if !converged {
        warnings.push(format!("stopped after {max_iter} iterations with bracket width {}", hi - lo));
    }
    let min_ess_seen = endpoints.iter().chain(&iterations).map(|s| s.ess).fold(f64::INFINITY, f64::min);
    Ok(TippingResult {
        psi_star: 0.5 * (lo + hi),
        iterations,
        endpoints,
        final_bracket: (lo, hi),
        converged,
        min_ess_seen,
        warnings,
        refit_verified: false,
    })
}

/// Iterations bisection needs to shrink `width` to `tol`.
pub fn iteration_bound(width: f64, tol: f64) -> usize {
    (width / tol).log2().ceil().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub psi: f64,
    pub outcome: std::result::Result<WeightedSummary, String>,
}

impl GridRow {
    /// Lower and upper bounds of the equal-tailed interval.
    pub fn interval(&self, alpha: f64) -> Option<(f64, f64)> {
        let s = self.outcome.as_ref().ok()?;
        Some((s.quantile(alpha / 2.0)?, s.quantile(1.0 - alpha / 2.0)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridTipping {
    pub rows: Vec<GridRow>,
    /// Smallest grid value whose interval excludes `theta0` on the
    /// problem's bound; `None` when no grid value does.
    pub crossing: Option<f64>,
}

/// Interval probabilities `(alpha/2, 0.5, 1 - alpha/2)`.
pub fn interval_probs(alpha: f64) -> [f64; 3] {
    [alpha / 2.0, 0.5, 1.0 - alpha / 2.0]
}

/// Smallest `psi` whose bound value excludes `theta0`, from
/// `(psi, bound value)` pairs sorted by `psi`.
pub fn smallest_excluding(points: impl IntoIterator<Item = (f64, f64)>, theta0: f64, bound: Bound) -> Option<f64> {
    points.into_iter().find(|&(_, q)| bound.excludes(q, theta0)).map(|(psi, _)| psi)
}

/// Weighted summaries over an ascending grid of `psi`. Rows fail
/// independently.
pub fn grid_tipping(problem: &TippingProblem<'_>, grid: &[f64]) -> Result<GridTipping> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "must not be empty"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("grid", "must be strictly ascending"));
    }
    if !(problem.alpha > 0.0 && problem.alpha < 1.0) {
        return Err(Error::invalid("alpha", format!("must lie in (0, 1), got {}", problem.alpha)));
    }
    let mut alts = Vec::with_capacity(grid.len());
    let mut bad = Vec::new();
    for &psi in grid {
        match problem.family.at(psi) {
            Ok(d) => alts.push(PriorSpec::new(problem.base.param.clone(), d)),
            Err(e) => bad.push((psi, e.to_string())),
        }
    }
    let probs = interval_probs(problem.alpha);
    let swept = sir::prior_sweep(problem.draws, &problem.base, &alts, &problem.target, &probs)?;
    let mut swept = swept.into_iter();
    let rows: Vec<GridRow> = grid
        .iter()
        .map(|&psi| match bad.iter().find(|b| b.0 == psi) {
            Some((_, e)) => GridRow { psi, outcome: Err(e.clone()) },
            None => GridRow { psi, outcome: swept.next().expect("one row per valid grid value").outcome },
        })
        .collect();
    let p = problem.prob();
    let crossing = smallest_excluding(
        rows.iter().filter_map(|r| Some((r.psi, r.outcome.as_ref().ok()?.quantile(p)?))),
        problem.theta0,
        problem.bound,
    );
    Ok(GridTipping { rows, crossing })
}

/// Draws returned by a refit, with the prior they were sampled under.
#[derive(Debug, Clone)]
pub struct RefitDraws {
    pub draws: DrawMatrix,
    pub prior: PriorSpec,
}

/// Bisection between refits at `psi_star ± window` (clipped to the
/// problem's bracket). At each `psi` the refit draws are reweighted from
/// their own prior to `family(psi)`, which is the identity for a genuine
/// refit, so quantiles come from the refit draws themselves.
pub fn refine_tipping_by_refit(
    problem: &TippingProblem<'_>,
    psi_star: f64,
    refit: &dyn Fn(f64) -> Result<RefitDraws>,
    window: f64,
) -> Result<TippingResult> {
    problem.validate()?;
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::invalid("window", "must be finite and > 0"));
    }
    let lo = (psi_star - window).max(problem.bracket.0);
    let hi = (psi_star + window).min(problem.bracket.1);
    if !(lo < hi) {
        return Err(Error::invalid("window", format!("psi_star {psi_star} lies outside the bracket")));
    }
    let eval = |psi: f64| -> Result<(f64, f64)> {
        let attach = |e: Error| Error::AtPsi { psi, source: Box::new(e) };
        let fit = refit(psi).map_err(attach)?;
        let sub = TippingProblem {
            draws: &fit.draws,
            base: fit.prior.clone(),
            family: problem.family.clone(),
            target: problem.target.clone(),
            ..problem.clone()
        };
        quantile_at(&sub, psi)
    };
    let m = problem.draws.n_rows() as f64;
    let mut result =
        bisect(lo, hi, problem.theta0, problem.tol_psi, problem.max_iter, m, eval).map_err(|e| match e {
            Error::NoSignChange { lo, hi, .. } => Error::RefitBracket { lo, hi },
            other => other,
        })?;
    result.refit_verified = true;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_draws(n: usize) -> DrawMatrix {
        // Evenly spaced normal quantiles give a smooth deterministic sample.
        let n01 = Distribution::normal(0.0, 1.0).unwrap();
        let v: Vec<f64> = (0..n)
            .map(|i| {
                let p = (i as f64 + 0.5) / n as f64;
                let (mut a, mut b) = (-10.0, 10.0);
                for _ in 0..100 {
                    let m = 0.5 * (a + b);
                    if n01.cdf(m) < p {
                        a = m
                    } else {
                        b = m
                    }
                }
                0.5 * (a + b)
            })
            .collect();
        DrawMatrix::single("mu", v).unwrap()
    }

    fn shift_problem(draws: &DrawMatrix) -> TippingProblem<'_> {
        let base = PriorSpec::new("mu", Distribution::normal(0.0, 1.0).unwrap());
        let mut p = TippingProblem::new(draws, base, PriorFamily::NormalMean { sd: 1.0 }, "mu", (-1.0, 1.0));
        p.bound = Bound::Lower;
        p
    }

    #[test]
    fn base_psi_gives_unweighted_quantile() {
        let d = normal_draws(2000);
        let p = shift_problem(&d);
        let (q, ess) = quantile_at(&p, 0.0).unwrap();
        let plain = sir::summary(&d, "mu", &[0.025]).unwrap().quantiles[0].1;
        assert_eq!(q, plain);
        assert_eq!(ess, 2000.0);
    }

    #[test]
    fn bound_convention() {
        assert_eq!(Bound::Upper.prob(0.05), 0.975);
        assert_eq!(Bound::Lower.prob(0.05), 0.025);
        assert!(Bound::Upper.excludes(0.9, 1.0));
        assert!(!Bound::Lower.excludes(0.9, 1.0));
    }

    #[test]
    fn identity_bisection() {
        let r = bisect(0.0, 1.0, 0.3, 1e-4, 40, 2.0, |psi| Ok((psi, 2.0))).unwrap();
        assert!(r.converged);
        assert!((r.psi_star - 0.3).abs() <= 1e-4);
        assert!(r.iterations.len() <= 14);
        assert_eq!(r.iterations.len(), iteration_bound(1.0, 1e-4));
    }

    #[test]
    fn no_sign_change_is_error() {
        let err = bisect(0.5, 1.0, 0.25, 1e-3, 40, 1.0, |psi| Ok((psi, 1.0))).unwrap_err();
        assert!(matches!(err, Error::NoSignChange { .. }));
        assert_eq!(err.exit_code(), 5);
    }

    #[test]
    fn max_iter_reported_unconverged() {
        let r = bisect(0.0, 1.0, 0.3, 1e-9, 5, 1.0, |psi| Ok((psi, 1.0))).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations.len(), 5);
        assert!(r.warnings.iter().any(|w| w.contains("stopped")));
    }

    #[test]
    fn shifted_normal_mean_root() {
        // Reweighting N(0,1) draws of mu to prior N(psi,1) with no data is
        // the N(psi,1) distribution; its 2.5% quantile crosses 0 at 1.96.
        let d = normal_draws(20_000);
        let mut p = shift_problem(&d);
        p.bracket = (1.0, 3.0);
        let r = bisect_tipping(&p).unwrap();
        assert!(r.converged);
        assert!((r.psi_star - 1.959_964).abs() < 0.02, "{}", r.psi_star);
        assert!(!r.warnings.iter().any(|w| w.contains("monotone")));
        assert!(r.warnings.iter().any(|w| w.starts_with("low ESS")));
        assert!(r.min_ess_seen < 0.05 * 20_000.0);
    }

    #[test]
    fn non_monotone_prescan_warns() {
        let d = normal_draws(4000);
        let base = PriorSpec::new("mu", Distribution::normal(0.0, 1.0).unwrap());
        // mean(psi) rises then falls inside the bracket
        let fam = PriorFamily::custom(|psi| Distribution::normal(3.0 * psi * (1.0 - psi) - 0.5, 1.0));
        let mut p = TippingProblem::new(&d, base, fam, "mu", (0.0, 0.6));
        p.bound = Bound::Lower;
        p.theta0 = -2.3;
        let r = bisect_tipping(&p).unwrap();
        assert!(r.warnings.iter().any(|w| w.contains("not monotone")), "{:?}", r.warnings);
    }

    #[test]
    fn grid_and_sentinel() {
        let d = normal_draws(4000);
        let p = shift_problem(&d);
        let g = grid_tipping(&p, &[0.0]).unwrap();
        let plain = sir::summary(&d, "mu", &interval_probs(0.05)).unwrap();
        assert_eq!(g.rows[0].outcome.as_ref().unwrap(), &plain);

        let mut p = shift_problem(&d);
        p.theta0 = 10.0;
        let g = grid_tipping(&p, &[-0.5, 0.0, 0.5]).unwrap();
        assert_eq!(g.crossing, None);
        assert!(grid_tipping(&p, &[0.5, 0.0]).is_err());
    }

    #[test]
    fn grid_rows_fail_independently() {
        let d = normal_draws(1000);
        let base = PriorSpec::new("mu", Distribution::normal(0.0, 1.0).unwrap());
        let p = TippingProblem::new(&d, base, PriorFamily::NormalSd { mean: 0.0 }, "mu", (0.5, 2.0));
        let g = grid_tipping(&p, &[-1.0, 1.0, 2.0]).unwrap();
        assert!(g.rows[0].outcome.is_err());
        assert!(g.rows[1].outcome.is_ok() && g.rows[2].outcome.is_ok());
    }

    #[test]
    fn support_error_carries_psi() {
        let d = DrawMatrix::single("p", vec![0.2, 0.5]).unwrap();
        let base = PriorSpec::new("p", Distribution::beta(1.0, 1.0).unwrap());
        let p = TippingProblem::new(&d, base, PriorFamily::BetaA0 { a1: 1.0 }, "p", (0.5, 2.0));
        match quantile_at(&p, -1.0).unwrap_err() {
            Error::AtPsi { psi, .. } => assert_eq!(psi, -1.0),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn degenerate_refit_reproduces_sir() {
        let d = normal_draws(20_000);
        let mut p = shift_problem(&d);
        p.bracket = (1.0, 3.0);
        let sir_result = bisect_tipping(&p).unwrap();
        let base = p.base.clone();
        let refit = |_psi: f64| Ok(RefitDraws { draws: d.clone(), prior: base.clone() });
        let refined = refine_tipping_by_refit(&p, sir_result.psi_star, &refit, 0.05).unwrap();
        assert!(refined.refit_verified);
        assert!((refined.psi_star - sir_result.psi_star).abs() <= p.tol_psi);

        let err = refine_tipping_by_refit(&p, 2.5, &refit, 0.05).unwrap_err();
        assert!(matches!(err, Error::RefitBracket { .. }));
    }
}
