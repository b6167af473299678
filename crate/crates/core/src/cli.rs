//! Command-line front end.
//!
//! Every command resolves a [`RunConfig`] (file, then flags), writes it to
//! `<out>/config.json`, and writes its results next to it. Wall-clock
//! timings go to `<out>/timings.json` only, so rerunning with
//! `--config <out>/config.json` reproduces every CSV byte for byte.
//!
//! Exit codes: 0 success, 2 bad configuration or arguments, 3 unreadable
//! or malformed input, 4 numerical failure, 5 no sign change in the
//! tipping bracket.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::error::{Error, Result};
use crate::io::{self, ParamSummary};
use crate::run::{self, Dataset, ModelKind, RunConfig};
use crate::sir;
use crate::tipping::Bound;

#[derive(Debug, Parser)]
#[command(
    name = "sirsens",
    version,
    about = "Prior sensitivity and tipping points by importance reweighting of MCMC draws"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset to <out>/data.csv.
    Simulate(CommonArgs),
    /// Fit the model under the base prior and write the draws.
    Fit(CommonArgs),
    /// Reweight the base draws over a hyperparameter grid.
    Sweep(CommonArgs),
    /// Find where the credible bound crosses theta0.
    Tipping(CommonArgs),
    /// Time fit plus sweep against refitting at every grid point.
    Bench(CommonArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    WeibullPh,
    Bcbnp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BoundArg {
    Upper,
    Lower,
}

#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Input CSV; omitted means simulated data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Chain seed, or the data seed for `simulate`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `start:stop:step` or `v1,v2,...`.
    #[arg(long)]
    pub grid: Option<String>,
    /// `lo,hi`.
    #[arg(long)]
    pub bracket: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub theta0: Option<f64>,
    #[arg(long, value_enum)]
    pub bound: Option<BoundArg>,
    /// Verify the tipping point by refitting around it.
    #[arg(long)]
    pub refine: bool,
    #[arg(long)]
    pub resample_frac: Option<f64>,
}

impl CommonArgs {
    /// Configuration file (or defaults) with the flags applied.
    pub fn resolve(&self, simulate: bool) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => io::read_json::<RunConfig>(p).map_err(|e| match e {
                Error::Parse { path, line, message } => Error::Config(format!("{}:{line}: {message}", path.display())),
                other => other,
            })?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.model {
            cfg.model = match m {
                ModelArg::WeibullPh => ModelKind::WeibullPh,
                ModelArg::Bcbnp => ModelKind::Bcbnp,
            };
        }
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        if let Some(s) = self.seed {
            if simulate {
                cfg.simulate.seed = Some(s);
            } else {
                cfg.seed = s;
            }
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(g) = &self.grid {
            cfg.sweep.grid = Some(run::parse_grid(g)?);
        }
        if let Some(b) = &self.bracket {
            cfg.tipping.bracket = Some(run::parse_bracket(b)?);
        }
        if let Some(a) = self.alpha {
            cfg.tipping.alpha = a;
        }
        if let Some(t) = self.theta0 {
            cfg.tipping.theta0 = Some(t);
        }
        if let Some(b) = self.bound {
            cfg.tipping.bound = Some(match b {
                BoundArg::Upper => Bound::Upper,
                BoundArg::Lower => Bound::Lower,
            });
        }
        if self.refine {
            cfg.tipping.refine = true;
        }
        if let Some(f) = self.resample_frac {
            cfg.resample_frac = f;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(&a.resolve(true)?),
        Command::Fit(a) => fit(&a.resolve(false)?),
        Command::Sweep(a) => sweep(&a.resolve(false)?),
        Command::Tipping(a) => tipping(&a.resolve(false)?),
        Command::Bench(a) => bench(&a.resolve(false)?),
    }
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn write_timings(cfg: &RunConfig, command: &str, seconds: serde_json::Value) -> Result<()> {
    io::write_json(cfg.out.join("timings.json"), &json!({ "command": command, "seconds": seconds }))
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let data = cfg.simulate_data()?;
    let path = cfg.out.join("data.csv");
    data.write_csv(&path)?;
    io::write_json(cfg.out.join("config.json"), cfg)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_base(cfg: &RunConfig, base: &run::BaseFit) -> Result<()> {
    if !base.reused {
        io::write_draws(cfg.out.join(run::DRAWS_FILE), &base.draws, &base.manifest)?;
    }
    if let Some(d) = &base.diagnostics {
        warn_all(&d.warnings);
        io::write_json(cfg.out.join("diagnostics.json"), d)?;
    }
    Ok(())
}

fn load(cfg: &RunConfig) -> Result<Dataset> {
    let data = cfg.load_data()?;
    io::write_json(cfg.out.join("config.json"), cfg)?;
    Ok(data)
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    let data = load(cfg)?;
    let base = run::fit(cfg, &data)?;
    write_base(cfg, &base)?;
    let diag = base.diagnostics.as_ref().expect("fresh fit has diagnostics");
    let rows = base
        .draws
        .names()
        .map(|name| {
            let summary = sir::summary(&base.draws, name, &cfg.probs)?;
            let d = diag.param(name);
            Ok(ParamSummary {
                name: name.to_string(),
                summary,
                mcmc_ess: d.map_or(f64::NAN, |d| d.ess),
                rhat: d.and_then(|d| d.rhat),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    io::write_param_summary_csv(cfg.out.join("summary.csv"), &cfg.probs, &rows)?;
    write_timings(cfg, "fit", json!({ "fit": base.seconds }))?;
    let target = rows.iter().find(|r| r.name == cfg.model.target()).expect("target column exists");
    println!(
        "{}: mean {:.4}, sd {:.4}, {} draws, max R-hat {}",
        target.name,
        target.summary.mean,
        target.summary.sd,
        base.draws.n_rows(),
        diag.max_rhat().map_or("n/a".into(), |r| format!("{r:.3}"))
    );
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Result<()> {
    let data = load(cfg)?;
    let base = run::base_draws(cfg, &data)?;
    write_base(cfg, &base)?;
    let t = Instant::now();
    let report = run::sweep(cfg, &base.draws)?;
    let sweep_seconds = t.elapsed().as_secs_f64();
    let names: Vec<&str> = report.hyper_names.iter().map(String::as_str).collect();
    io::write_sweep_csv(cfg.out.join("sweep.csv"), &names, &cfg.probs, &report.rows)?;
    io::write_json(cfg.out.join("sweep.json"), &report)?;
    if cfg.sweep.emit_resampled {
        let (_, alts) = cfg.sweep_alternatives()?;
        for (i, (_, prior)) in alts.iter().enumerate() {
            if let Ok(prior) = prior {
                if let Ok(v) = run::resample_target(cfg, &base.draws, prior, i as u64) {
                    io::write_column_csv(cfg.out.join(format!("resampled/row_{i:03}.csv")), cfg.model.target(), &v)?;
                }
            }
        }
    }
    warn_all(&report.warnings);
    write_timings(cfg, "sweep", json!({ "fit": base.seconds, "sweep": sweep_seconds, "reused_draws": base.reused }))?;
    let failed = report.rows.iter().filter(|r| r.summary.is_none()).count();
    println!("{} rows ({} failed) -> {}", report.rows.len(), failed, cfg.out.join("sweep.csv").display());
    Ok(())
}

pub fn tipping(cfg: &RunConfig) -> Result<()> {
    let data = load(cfg)?;
    let base = run::base_draws(cfg, &data)?;
    write_base(cfg, &base)?;
    let t = Instant::now();
    let report = run::tipping(cfg, &data, &base.draws)?;
    let tipping_seconds = t.elapsed().as_secs_f64();
    io::write_json(cfg.out.join("tipping.json"), &report)?;
    io::write_tipping_trace(cfg.out.join("tipping_trace.csv"), &report.sir)?;
    if let Some(r) = &report.refined {
        io::write_tipping_trace(cfg.out.join("refit_trace.csv"), r)?;
    }
    let psi_star = report.psi_star();
    let alt = sir::PriorSpec::new(cfg.model.sensitivity_param(), cfg.family().at(psi_star)?);
    let resampled = run::resample_target(cfg, &base.draws, &alt, 0)?;
    io::write_column_csv(cfg.out.join("tipping_resampled.csv"), cfg.model.target(), &resampled)?;
    warn_all(&report.sir.warnings);
    write_timings(
        cfg,
        "tipping",
        json!({ "fit": base.seconds, "tipping": tipping_seconds, "reused_draws": base.reused }),
    )?;
    let status = if report.sir.converged { "" } else { " (not converged)" };
    match &report.refined {
        Some(r) => println!("tipping point {:.4} (SIR {:.4}, refit-verified){status}", r.psi_star, report.sir.psi_star),
        None => println!("tipping point {psi_star:.4}{status}"),
    }
    Ok(())
}

pub fn bench(cfg: &RunConfig) -> Result<()> {
    let data = load(cfg)?;
    let report = run::bench(cfg, &data)?;
    io::write_json(cfg.out.join("bench.json"), &report)?;
    println!(
        "{} grid points: fit + sweep {:.2} s, refits {:.2} s, speedup {:.1}x",
        report.grid_points, report.sir_total_seconds, report.refit_total_seconds, report.speedup
    );
    Ok(())
}
