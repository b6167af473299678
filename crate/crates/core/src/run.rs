//! Run configuration and the fit, sweep, tipping and bench pipelines shared
//! by the command-line tool and the tests.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::io::{self, DrawsManifest, SweepRecord};
use crate::mcmc::{chain_rng, run_chains, ChainConfig, ChainDiagnostics, DrawMatrix};
use crate::models::bcbnp::{self, BcbnpHyper, BcbnpModel, BcbnpSettings, MetaRecord, MetaSpec};
use crate::models::weibull::{self, SurvivalRecord, TrialSpec, WeibullPhHyper, WeibullPhModel};
use crate::sir::{self, PriorSpec};
use crate::tipping::{self, Bound, PriorFamily, RefitDraws, TippingProblem, TippingResult};

pub const WEIBULL_DATA_SEED: u64 = 4;
pub const META_DATA_SEED: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    WeibullPh,
    Bcbnp,
}

impl ModelKind {
    pub fn id(self) -> &'static str {
        match self {
            ModelKind::WeibullPh => "weibull-ph",
            ModelKind::Bcbnp => "bcbnp",
        }
    }

    /// Column the analysis reports on.
    pub fn target(self) -> &'static str {
        match self {
            ModelKind::WeibullPh => weibull::HR,
            ModelKind::Bcbnp => bcbnp::OR,
        }
    }

    /// Parameter whose prior is varied.
    pub fn sensitivity_param(self) -> &'static str {
        match self {
            ModelKind::WeibullPh => weibull::TAU,
            ModelKind::Bcbnp => bcbnp::PI_B,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weibull-ph" => Ok(ModelKind::WeibullPh),
            "bcbnp" => Ok(ModelKind::Bcbnp),
            other => Err(Error::Config(format!("unknown model `{other}` (expected weibull-ph or bcbnp)"))),
        }
    }
}

/// Synthetic data used when no data file is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SimulateConfig {
    /// Defaults to the seed of the shipped dataset for the model.
    pub seed: Option<u64>,
    pub trial: TrialSpec,
    pub meta: MetaSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeibullConfig {
    /// Base scale of the half-normal prior on `tau`.
    pub s: f64,
    pub free_scale: bool,
}

impl Default for WeibullConfig {
    fn default() -> Self {
        WeibullConfig { s: 1.0, free_scale: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcbnpConfig {
    pub a0: f64,
    pub a1: f64,
    pub settings: BcbnpSettings,
}

impl Default for BcbnpConfig {
    fn default() -> Self {
        BcbnpConfig { a0: 1.0, a1: 1.0, settings: BcbnpSettings::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Values of `s` (Weibull) or `a0` (BC-BNP). `None` selects the model
    /// default.
    pub grid: Option<Vec<f64>>,
    /// `a1` values crossed with the `a0` grid.
    pub a1_values: Vec<f64>,
    /// Also write resampled target draws for every grid row.
    pub emit_resampled: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { grid: None, a1_values: vec![1.0, 1.5, 2.0], emit_resampled: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TippingConfig {
    /// `None` derives a bracket from a pre-scan over the sweep grid.
    pub bracket: Option<(f64, f64)>,
    pub alpha: f64,
    /// Defaults to 1 for both models (no effect on the ratio scale).
    pub theta0: Option<f64>,
    /// Defaults to `upper` for Weibull and `lower` for BC-BNP.
    pub bound: Option<Bound>,
    pub tol: f64,
    pub max_iter: usize,
    pub refine: bool,
    /// Half-width of the refit bracket around the SIR tipping point.
    pub window: f64,
    /// Fixed `a1` when tipping over `a0`.
    pub a1: f64,
}

impl Default for TippingConfig {
    fn default() -> Self {
        TippingConfig {
            bracket: None,
            alpha: 0.05,
            theta0: None,
            bound: None,
            tol: tipping::DEFAULT_TOL,
            max_iter: tipping::DEFAULT_MAX_ITER,
            refine: false,
            window: 0.05,
            a1: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelKind,
    /// CSV input; when absent the data are simulated from `simulate`.
    pub data: Option<PathBuf>,
    pub simulate: SimulateConfig,
    pub weibull: WeibullConfig,
    pub bcbnp: BcbnpConfig,
    pub sweep: SweepConfig,
    pub tipping: TippingConfig,
    /// Its `seed` is overwritten by the top-level `seed`.
    pub chains: ChainConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub probs: Vec<f64>,
    pub resample_frac: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::WeibullPh,
            data: None,
            simulate: SimulateConfig::default(),
            weibull: WeibullConfig::default(),
            bcbnp: BcbnpConfig::default(),
            sweep: SweepConfig::default(),
            tipping: TippingConfig::default(),
            chains: ChainConfig::default(),
            seed: 1,
            out: PathBuf::from("sirsens-out"),
            probs: vec![0.025, 0.5, 0.975],
            resample_frac: sir::DEFAULT_RESAMPLE_FRACTION,
        }
    }
}

/// Values `start, start + step, ..., stop` rounded to 12 decimals so that
/// `0.1:1:0.01` prints as written.
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite() && step > 0.0 && stop >= start) {
        return Err(Error::Config(format!("bad grid range {start}:{stop}:{step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
}

/// Parses `start:stop:step` or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad grid value `{t}`")));
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [a, b, c] => linear_grid(num(a)?, num(b)?, num(c)?)?,
        [_] => s.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => return Err(Error::Config(format!("grid `{s}`: use start:stop:step or a comma list"))),
    };
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config(format!("grid `{s}` must be non-empty and strictly ascending")));
    }
    Ok(grid)
}

/// Parses `lo,hi`.
pub fn parse_bracket(s: &str) -> Result<(f64, f64)> {
    let v = parse_grid(s).map_err(|_| Error::Config(format!("bracket `{s}`: expected lo,hi with lo < hi")))?;
    match v.as_slice() {
        [lo, hi] => Ok((*lo, *hi)),
        _ => Err(Error::Config(format!("bracket `{s}`: expected lo,hi with lo < hi"))),
    }
}

/// Loaded input data.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Survival(Vec<SurvivalRecord>),
    Meta(Vec<MetaRecord>),
}

impl Dataset {
    fn digest(&self) -> String {
        let text = match self {
            Dataset::Survival(d) => serde_json::to_string(d),
            Dataset::Meta(d) => serde_json::to_string(d),
        }
        .unwrap_or_default();
        let mut h = DefaultHasher::new();
        text.hash(&mut h);
        format!("{:016x}", h.finish())
    }

    /// Writes the data in the model's input format.
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        match self {
            Dataset::Survival(d) => io::write_survival_csv(path, d),
            Dataset::Meta(d) => io::write_meta_csv(path, d),
        }
    }
}

impl RunConfig {
    /// Model defaults for the given model.
    pub fn for_model(model: ModelKind) -> Self {
        RunConfig { model, ..RunConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.chain_config().validate()?;
        if self.probs.is_empty() || self.probs.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::Config("probs must be non-empty and lie in (0, 1)".into()));
        }
        if self.probs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("probs must be strictly ascending".into()));
        }
        if !(self.resample_frac > 0.0 && self.resample_frac <= 1.0) {
            return Err(Error::Config("resample_frac must lie in (0, 1]".into()));
        }
        let t = &self.tipping;
        if !(t.alpha > 0.0 && t.alpha < 1.0) {
            return Err(Error::Config("tipping alpha must lie in (0, 1)".into()));
        }
        if !(t.tol > 0.0) || t.max_iter == 0 || !(t.window > 0.0) {
            return Err(Error::Config("tipping tol, max_iter and window must be positive".into()));
        }
        match self.model {
            ModelKind::WeibullPh => {
                WeibullPhHyper::new(self.weibull.s)?;
            }
            ModelKind::Bcbnp => {
                BcbnpHyper::new(self.bcbnp.a0, self.bcbnp.a1)?;
            }
        }
        Ok(())
    }

    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig { seed: self.seed, ..self.chains }
    }

    pub fn data_seed(&self) -> u64 {
        self.simulate.seed.unwrap_or(match self.model {
            ModelKind::WeibullPh => WEIBULL_DATA_SEED,
            ModelKind::Bcbnp => META_DATA_SEED,
        })
    }

    pub fn simulate_data(&self) -> Result<Dataset> {
        Ok(match self.model {
            ModelKind::WeibullPh => Dataset::Survival(weibull::simulate_trial(&self.simulate.trial, self.data_seed())?),
            ModelKind::Bcbnp => Dataset::Meta(bcbnp::simulate_meta(&self.simulate.meta, self.data_seed())?),
        })
    }

    pub fn load_data(&self) -> Result<Dataset> {
        match &self.data {
            None => self.simulate_data(),
            Some(p) => Ok(match self.model {
                ModelKind::WeibullPh => Dataset::Survival(io::read_survival_csv(p)?),
                ModelKind::Bcbnp => Dataset::Meta(io::read_meta_csv(p)?),
            }),
        }
    }

    /// Base value of the scalar hyperparameter the tipping search moves.
    pub fn base_psi(&self) -> f64 {
        match self.model {
            ModelKind::WeibullPh => self.weibull.s,
            ModelKind::Bcbnp => self.bcbnp.a0,
        }
    }

    /// Prior the base fit uses on the sensitivity parameter.
    pub fn base_prior(&self) -> Result<PriorSpec> {
        let dist = match self.model {
            ModelKind::WeibullPh => WeibullPhHyper::new(self.weibull.s)?.tau_prior(),
            ModelKind::Bcbnp => BcbnpHyper::new(self.bcbnp.a0, self.bcbnp.a1)?.pi_prior(),
        };
        Ok(PriorSpec::new(self.model.sensitivity_param(), dist))
    }

    pub fn family(&self) -> PriorFamily {
        match self.model {
            ModelKind::WeibullPh => PriorFamily::HalfNormalScale,
            ModelKind::Bcbnp => PriorFamily::BetaA0 { a1: self.tipping.a1 },
        }
    }

    /// Scalar grid for the sweep and for the tipping pre-scan.
    pub fn psi_grid(&self) -> Result<Vec<f64>> {
        match &self.sweep.grid {
            Some(g) => Ok(g.clone()),
            None => match self.model {
                ModelKind::WeibullPh => linear_grid(0.1, 1.0, 0.01),
                ModelKind::Bcbnp => linear_grid(0.5, 9.0, 0.5),
            },
        }
    }

    /// Hyperparameter names and alternative priors of every sweep row.
    pub fn sweep_alternatives(&self) -> Result<(Vec<&'static str>, Vec<(Vec<(String, f64)>, Result<PriorSpec>)>)> {
        let grid = self.psi_grid()?;
        let param = self.model.sensitivity_param();
        Ok(match self.model {
            ModelKind::WeibullPh => (
                vec!["s"],
                grid.iter()
                    .map(|&s| {
                        (vec![("s".to_string(), s)], Distribution::half_normal(s).map(|d| PriorSpec::new(param, d)))
                    })
                    .collect(),
            ),
            ModelKind::Bcbnp => {
                let mut rows = Vec::new();
                for &a1 in &self.sweep.a1_values {
                    for &a0 in &grid {
                        let prior = Distribution::beta(a0, a1).map(|d| PriorSpec::new(param, d));
                        rows.push((vec![("a0".to_string(), a0), ("a1".to_string(), a1)], prior));
                    }
                }
                (vec!["a0", "a1"], rows)
            }
        })
    }

    pub fn theta0(&self) -> f64 {
        self.tipping.theta0.unwrap_or(1.0)
    }

    pub fn bound(&self) -> Bound {
        self.tipping.bound.unwrap_or(match self.model {
            ModelKind::WeibullPh => Bound::Upper,
            ModelKind::Bcbnp => Bound::Lower,
        })
    }

    /// Everything that determines the base fit.
    fn fit_key(&self, data: &Dataset) -> serde_json::Value {
        let hyper = match self.model {
            ModelKind::WeibullPh => serde_json::to_value(self.weibull),
            ModelKind::Bcbnp => serde_json::to_value(self.bcbnp),
        }
        .unwrap_or_default();
        serde_json::json!({
            "model": self.model.id(),
            "data": data.digest(),
            "hyper": hyper,
            "chains": self.chain_config(),
        })
    }
}

/// Runs the model's sampler with the sensitivity hyperparameter set to
/// `psi` (the base value when `None`).
pub fn fit_at(cfg: &RunConfig, data: &Dataset, psi: Option<f64>) -> Result<(DrawMatrix, ChainDiagnostics)> {
    let chains = cfg.chain_config();
    match (cfg.model, data) {
        (ModelKind::WeibullPh, Dataset::Survival(d)) => {
            let hyper = WeibullPhHyper::new(psi.unwrap_or(cfg.weibull.s))?;
            run_chains(&WeibullPhModel::with_free_scale(d, hyper, cfg.weibull.free_scale), &chains)
        }
        (ModelKind::Bcbnp, Dataset::Meta(d)) => {
            let (a0, a1) = match psi {
                Some(a0) => (a0, cfg.tipping.a1),
                None => (cfg.bcbnp.a0, cfg.bcbnp.a1),
            };
            let model = BcbnpModel::new(d.clone(), BcbnpHyper::new(a0, a1)?, cfg.bcbnp.settings)?;
            run_chains(&model, &chains)
        }
        _ => Err(Error::Config(format!("data do not match model {}", cfg.model.id()))),
    }
}

/// Base draws with their manifest.
#[derive(Debug, Clone)]
pub struct BaseFit {
    pub draws: DrawMatrix,
    pub manifest: DrawsManifest,
    pub diagnostics: Option<ChainDiagnostics>,
    /// Whether the draws were read back from an earlier run.
    pub reused: bool,
    pub seconds: f64,
}

pub const DRAWS_FILE: &str = "draws.csv";

pub fn fit(cfg: &RunConfig, data: &Dataset) -> Result<BaseFit> {
    let t = Instant::now();
    let (draws, diag) = fit_at(cfg, data, None)?;
    let manifest = DrawsManifest {
        model: cfg.model.id().into(),
        columns: draws.columns().to_vec(),
        n_rows: draws.n_rows(),
        n_chains: draws.n_chains(),
        seed: cfg.seed,
        fit: cfg.fit_key(data),
    };
    Ok(BaseFit { draws, manifest, diagnostics: Some(diag), reused: false, seconds: t.elapsed().as_secs_f64() })
}

/// Reuses `out/draws.csv` when its manifest matches this configuration,
/// otherwise fits.
pub fn base_draws(cfg: &RunConfig, data: &Dataset) -> Result<BaseFit> {
    let path = cfg.out.join(DRAWS_FILE);
    if path.exists() && io::manifest_path(&path).exists() {
        if let Ok((draws, manifest)) = io::read_draws(&path) {
            if manifest.fit == cfg.fit_key(data) {
                return Ok(BaseFit { draws, manifest, diagnostics: None, reused: true, seconds: 0.0 });
            }
        }
    }
    fit(cfg, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub model: String,
    pub target: String,
    pub sensitivity_param: String,
    pub base: PriorSpec,
    pub hyper_names: Vec<String>,
    pub probs: Vec<f64>,
    pub n_draws: usize,
    pub rows: Vec<SweepRecord>,
    pub warnings: Vec<String>,
}

pub fn sweep(cfg: &RunConfig, draws: &DrawMatrix) -> Result<SweepReport> {
    let base = cfg.base_prior()?;
    let (names, alts) = cfg.sweep_alternatives()?;
    let valid: Vec<PriorSpec> = alts.iter().filter_map(|(_, p)| p.as_ref().ok().cloned()).collect();
    let swept = sir::prior_sweep(draws, &base, &valid, cfg.model.target(), &cfg.probs)?;
    let mut swept = swept.into_iter();
    let m = draws.n_rows() as f64;
    let mut warnings = Vec::new();
    let rows: Vec<SweepRecord> = alts
        .into_iter()
        .map(|(hyper, prior)| {
            let (summary, error) = match prior {
                Err(e) => (None, Some(e.to_string())),
                Ok(_) => match swept.next().expect("one row per valid prior").outcome {
                    Ok(s) => (Some(s), None),
                    Err(e) => (None, Some(e)),
                },
            };
            if let Some(s) = &summary {
                if s.ess < sir::LOW_ESS_FRACTION * m {
                    warnings.push(format!("low ESS {:.1} at {}", s.ess, describe(&hyper)));
                }
            }
            SweepRecord { hyper, summary, error }
        })
        .collect();
    Ok(SweepReport {
        model: cfg.model.id().into(),
        target: cfg.model.target().into(),
        sensitivity_param: base.param.clone(),
        base,
        hyper_names: names.iter().map(|s| s.to_string()).collect(),
        probs: cfg.probs.clone(),
        n_draws: draws.n_rows(),
        rows,
        warnings,
    })
}

fn describe(hyper: &[(String, f64)]) -> String {
    hyper.iter().map(|(k, v)| format!("{k} = {v}")).collect::<Vec<_>>().join(", ")
}

/// Resampled target draws under one alternative prior, `resample_frac * M`
/// of them. The stream depends only on the seed and `stream`.
pub fn resample_target(cfg: &RunConfig, draws: &DrawMatrix, alt: &PriorSpec, stream: u64) -> Result<Vec<f64>> {
    let w = sir::importance_weights(draws, &cfg.base_prior()?, alt)?;
    let n = sir::resample_length(draws.n_rows(), cfg.resample_frac);
    let mut rng = chain_rng(cfg.seed, RESAMPLE_STREAM + stream);
    let idx = sir::resample_indices(w.weights(), n, &mut rng)?;
    let col = draws.column(cfg.model.target())?;
    Ok(idx.into_iter().map(|i| col[i]).collect())
}

/// Offset that keeps resampling streams clear of the chain streams.
const RESAMPLE_STREAM: u64 = 1 << 32;

pub fn tipping_problem<'a>(cfg: &RunConfig, draws: &'a DrawMatrix, bracket: (f64, f64)) -> Result<TippingProblem<'a>> {
    let mut p = TippingProblem::new(draws, cfg.base_prior()?, cfg.family(), cfg.model.target(), bracket);
    p.alpha = cfg.tipping.alpha;
    p.theta0 = cfg.theta0();
    p.bound = cfg.bound();
    p.tol_psi = cfg.tipping.tol;
    p.max_iter = cfg.tipping.max_iter;
    Ok(p)
}

/// The configured bracket, or the pair of adjacent grid values around the
/// first change of side in a grid pre-scan.
pub fn resolve_bracket(cfg: &RunConfig, draws: &DrawMatrix) -> Result<(f64, f64)> {
    if let Some(b) = cfg.tipping.bracket {
        return Ok(b);
    }
    let grid = cfg.psi_grid()?;
    let problem = tipping_problem(cfg, draws, (grid[0], grid[grid.len() - 1]))?;
    let scan = tipping::grid_tipping(&problem, &grid)?;
    let p = cfg.bound().prob(cfg.tipping.alpha);
    let pts: Vec<(f64, f64)> =
        scan.rows.iter().filter_map(|r| Some((r.psi, r.outcome.as_ref().ok()?.quantile(p)?))).collect();
    let theta0 = cfg.theta0();
    pts.windows(2).find(|w| (w[0].1 - theta0) * (w[1].1 - theta0) < 0.0).map(|w| (w[0].0, w[1].0)).ok_or_else(|| {
        let (lo, hi) = (grid[0], grid[grid.len() - 1]);
        let at = |psi: f64| pts.iter().find(|x| x.0 == psi).map_or(f64::NAN, |x| x.1 - theta0);
        Error::NoSignChange { lo, hi, f_lo: at(lo), f_hi: at(hi) }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TippingReport {
    pub model: String,
    pub target: String,
    pub theta0: f64,
    pub alpha: f64,
    pub bound: Bound,
    pub bracket: (f64, f64),
    pub sir: TippingResult,
    pub refined: Option<TippingResult>,
}

impl TippingReport {
    /// Refined value when available.
    pub fn psi_star(&self) -> f64 {
        self.refined.as_ref().unwrap_or(&self.sir).psi_star
    }
}

pub fn tipping(cfg: &RunConfig, data: &Dataset, draws: &DrawMatrix) -> Result<TippingReport> {
    let bracket = resolve_bracket(cfg, draws)?;
    let problem = tipping_problem(cfg, draws, bracket)?;
    let sir_result = tipping::bisect_tipping(&problem)?;
    let refined = if cfg.tipping.refine {
        let refit = |psi: f64| -> Result<RefitDraws> {
            let (d, _) = fit_at(cfg, data, Some(psi))?;
            let prior = PriorSpec::new(cfg.model.sensitivity_param(), cfg.family().at(psi)?);
            Ok(RefitDraws { draws: d, prior })
        };
        Some(tipping::refine_tipping_by_refit(&problem, sir_result.psi_star, &refit, cfg.tipping.window)?)
    } else {
        None
    };
    Ok(TippingReport {
        model: cfg.model.id().into(),
        target: cfg.model.target().into(),
        theta0: problem.theta0,
        alpha: problem.alpha,
        bound: problem.bound,
        bracket,
        sir: sir_result,
        refined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    pub grid_points: usize,
    pub draws: usize,
    pub base_fit_seconds: f64,
    pub sweep_seconds: f64,
    pub sir_total_seconds: f64,
    pub refit_total_seconds: f64,
    pub speedup: f64,
}

/// Times one fit plus a SIR sweep against a full refit at every sweep row.
pub fn bench(cfg: &RunConfig, data: &Dataset) -> Result<BenchReport> {
    let t = Instant::now();
    let base = fit(cfg, data)?;
    let base_fit_seconds = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let report = sweep(cfg, &base.draws)?;
    let sweep_seconds = t.elapsed().as_secs_f64();

    let (_, alts) = cfg.sweep_alternatives()?;
    let t = Instant::now();
    for (hyper, prior) in &alts {
        if prior.is_err() {
            continue;
        }
        let mut alt_cfg = cfg.clone();
        match cfg.model {
            ModelKind::WeibullPh => alt_cfg.weibull.s = hyper[0].1,
            ModelKind::Bcbnp => (alt_cfg.bcbnp.a0, alt_cfg.bcbnp.a1) = (hyper[0].1, hyper[1].1),
        }
        fit_at(&alt_cfg, data, None)?;
    }
    let refit_total_seconds = t.elapsed().as_secs_f64();
    let sir_total_seconds = base_fit_seconds + sweep_seconds;
    Ok(BenchReport {
        model: cfg.model.id().into(),
        grid_points: report.rows.len(),
        draws: base.draws.n_rows(),
        base_fit_seconds,
        sweep_seconds,
        sir_total_seconds,
        refit_total_seconds,
        speedup: refit_total_seconds / sir_total_seconds,
    })
}
