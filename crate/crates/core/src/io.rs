//! File formats: survival and meta-analysis CSV input, draw matrices with a
//! JSON manifest, sweep and tipping tables.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! written file reads back bit-identically and a replay with the same
//! configuration produces byte-identical output.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{ColumnMeta, DrawMatrix};
use crate::models::bcbnp::MetaRecord;
use crate::models::weibull::SurvivalRecord;
use crate::sir::WeightedSummary;
use crate::tipping::TippingResult;

pub const SURVIVAL_HEADER: [&str; 3] = ["time", "event", "arm"];
pub const META_HEADER: [&str; 3] = ["y", "se", "label"];
pub const TIPPING_TRACE_HEADER: [&str; 4] = ["step", "psi", "q", "ess"];

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(file))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn csv_fail(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => parse_err(path, line, format!("{kind:?}")),
    }
}

fn header(path: &Path, rdr: &mut csv::Reader<File>) -> Result<Vec<String>> {
    let h = rdr.headers().map_err(|e| csv_fail(path, e))?;
    Ok(h.iter().map(str::to_owned).collect())
}

fn field_f64(path: &Path, line: u64, name: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw.parse().map_err(|_| parse_err(path, line, format!("{name}: `{raw}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("{name}: `{raw}` is not finite")));
    }
    Ok(v)
}

fn finish<W: Write>(path: &Path, w: csv::Writer<W>) -> Result<()> {
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

/// Reads a `time,event,arm` file. `event` is `1` (observed) or `0`
/// (censored); `arm` is `treatment`, `control` or `external`.
pub fn read_survival_csv(path: impl AsRef<Path>) -> Result<Vec<SurvivalRecord>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    if header(path, &mut rdr)? != SURVIVAL_HEADER {
        return Err(parse_err(path, 1, format!("header must be `{}`", SURVIVAL_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_fail(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(parse_err(path, line, format!("expected 3 fields, found {}", rec.len())));
        }
        let time = field_f64(path, line, "time", &rec[0])?;
        let event = match &rec[1] {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(path, line, format!("event: expected 0 or 1, found `{other}`"))),
        };
        let arm = rec[2].parse().map_err(|m: String| parse_err(path, line, m))?;
        out.push(SurvivalRecord::new(time, event, arm).map_err(|e| parse_err(path, line, e.to_string()))?);
    }
    if out.is_empty() {
        return Err(parse_err(path, 1, "no records"));
    }
    Ok(out)
}

pub fn write_survival_csv(path: impl AsRef<Path>, data: &[SurvivalRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| csv_fail(path, e);
    w.write_record(SURVIVAL_HEADER).map_err(io)?;
    for r in data {
        w.write_record([r.time.to_string(), u8::from(r.event).to_string(), r.arm.to_string()]).map_err(io)?;
    }
    finish(path, w)
}

/// Reads a `y,se` or `y,se,label` file of study log odds ratios.
pub fn read_meta_csv(path: impl AsRef<Path>) -> Result<Vec<MetaRecord>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let h = header(path, &mut rdr)?;
    let width = if h == META_HEADER[..2] {
        2
    } else if h == META_HEADER {
        3
    } else {
        return Err(parse_err(path, 1, "header must be `y,se` or `y,se,label`"));
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_fail(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(parse_err(path, line, format!("expected {width} fields, found {}", rec.len())));
        }
        let y = field_f64(path, line, "y", &rec[0])?;
        let se = field_f64(path, line, "se", &rec[1])?;
        let mut r = MetaRecord::new(y, se).map_err(|e| parse_err(path, line, e.to_string()))?;
        if width == 3 && !rec[2].is_empty() {
            r = r.labelled(&rec[2]);
        }
        out.push(r);
    }
    if out.is_empty() {
        return Err(parse_err(path, 1, "no records"));
    }
    Ok(out)
}

pub fn write_meta_csv(path: impl AsRef<Path>, data: &[MetaRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| csv_fail(path, e);
    let labelled = data.iter().any(|r| r.label.is_some());
    if labelled {
        w.write_record(META_HEADER).map_err(io)?;
    } else {
        w.write_record(&META_HEADER[..2]).map_err(io)?;
    }
    for r in data {
        let mut row = vec![r.y.to_string(), r.se.to_string()];
        if labelled {
            row.push(r.label.clone().unwrap_or_default());
        }
        w.write_record(row).map_err(io)?;
    }
    finish(path, w)
}

/// Sidecar describing a draws CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsManifest {
    pub model: String,
    pub columns: Vec<ColumnMeta>,
    pub n_rows: usize,
    pub n_chains: usize,
    pub seed: u64,
    /// Everything that determined the fit; a sweep reuses stored draws only
    /// when this matches its own configuration.
    #[serde(default)]
    pub fit: serde_json::Value,
}

/// Path of the manifest that accompanies a draws CSV.
pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `draws` to `csv_path` and the manifest next to it.
pub fn write_draws(csv_path: impl AsRef<Path>, draws: &DrawMatrix, manifest: &DrawsManifest) -> Result<()> {
    let path = csv_path.as_ref();
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| csv_fail(path, e);
    w.write_record(draws.names()).map_err(io)?;
    let mut row = Vec::with_capacity(draws.n_cols());
    for i in 0..draws.n_rows() {
        row.clear();
        row.extend((0..draws.n_cols()).map(|j| draws.column_at(j)[i].to_string()));
        w.write_record(&row).map_err(io)?;
    }
    finish(path, w)?;
    write_json(manifest_path(path), manifest)
}

/// Reads a draws CSV and its manifest. The CSV header must list the
/// manifest's columns in order.
pub fn read_draws(csv_path: impl AsRef<Path>) -> Result<(DrawMatrix, DrawsManifest)> {
    let path = csv_path.as_ref();
    let manifest: DrawsManifest = read_json(manifest_path(path))?;
    let mut rdr = csv_reader(path)?;
    let names: Vec<&str> = manifest.columns.iter().map(|c| c.name.as_str()).collect();
    if header(path, &mut rdr)? != names {
        return Err(parse_err(path, 1, "header does not match the manifest columns"));
    }
    let mut values = vec![Vec::with_capacity(manifest.n_rows); names.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_fail(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != names.len() {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", names.len(), rec.len())));
        }
        for (j, raw) in rec.iter().enumerate() {
            values[j].push(field_f64(path, line, names[j], raw)?);
        }
    }
    if values[0].len() != manifest.n_rows {
        return Err(parse_err(
            path,
            values[0].len() as u64 + 1,
            format!("manifest declares {} rows, file has {}", manifest.n_rows, values[0].len()),
        ));
    }
    let draws = DrawMatrix::new(manifest.columns.clone(), values, manifest.n_chains)?;
    Ok((draws, manifest))
}

/// One line of a sweep table: the hyperparameter values and either a
/// summary or the reason the row failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub hyper: Vec<(String, f64)>,
    pub summary: Option<WeightedSummary>,
    pub error: Option<String>,
}

/// Column names of a sweep table: the hyperparameters, then
/// `mean,sd,q<p>...,ess,error`.
pub fn sweep_header(hyper_names: &[&str], probs: &[f64]) -> Vec<String> {
    let mut h: Vec<String> = hyper_names.iter().map(|s| s.to_string()).collect();
    h.extend(["mean".to_string(), "sd".to_string()]);
    h.extend(probs.iter().map(|p| format!("q{p}")));
    h.extend(["ess".to_string(), "error".to_string()]);
    h
}

/// Failed rows leave the numeric fields empty and carry the message.
pub fn write_sweep_csv(
    path: impl AsRef<Path>,
    hyper_names: &[&str],
    probs: &[f64],
    rows: &[SweepRecord],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| csv_fail(path, e);
    w.write_record(sweep_header(hyper_names, probs)).map_err(io)?;
    let blanks = 3 + probs.len();
    for r in rows {
        let mut out: Vec<String> = r.hyper.iter().map(|(_, v)| v.to_string()).collect();
        match &r.summary {
            Some(s) => {
                out.push(s.mean.to_string());
                out.push(s.sd.to_string());
                out.extend(probs.iter().map(|&p| s.quantile(p).map_or(String::new(), |q| q.to_string())));
                out.push(s.ess.to_string());
            }
            None => out.extend(std::iter::repeat(String::new()).take(blanks)),
        }
        out.push(r.error.clone().unwrap_or_default());
        w.write_record(&out).map_err(io)?;
    }
    finish(path, w)
}

/// Writes the bracket endpoints and the bisection midpoints, in evaluation
/// order, as `step,psi,q,ess`. Endpoints are steps `lo` and `hi`.
pub fn write_tipping_trace(path: impl AsRef<Path>, result: &TippingResult) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| csv_fail(path, e);
    w.write_record(TIPPING_TRACE_HEADER).map_err(io)?;
    let labelled = [("lo".to_string(), &result.endpoints[0]), ("hi".to_string(), &result.endpoints[1])];
    let mids = result.iterations.iter().enumerate().map(|(i, s)| ((i + 1).to_string(), s));
    for (label, s) in labelled.into_iter().chain(mids) {
        w.write_record([label, s.psi.to_string(), s.q.to_string(), s.ess.to_string()]).map_err(io)?;
    }
    finish(path, w)
}

/// Writes one named column of values under `header`.
pub fn write_column_csv(path: impl AsRef<Path>, header: &str, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| csv_fail(path, e);
    w.write_record([header]).map_err(io)?;
    for v in values {
        w.write_record([v.to_string()]).map_err(io)?;
    }
    finish(path, w)
}

/// Posterior summary of one column with its MCMC diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub summary: WeightedSummary,
    pub mcmc_ess: f64,
    pub rhat: Option<f64>,
}

/// Writes `param,mean,sd,q<p>...,ess,rhat`; `ess` is the MCMC effective
/// sample size.
pub fn write_param_summary_csv(path: impl AsRef<Path>, probs: &[f64], rows: &[ParamSummary]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| csv_fail(path, e);
    let mut h = vec!["param".to_string(), "mean".to_string(), "sd".to_string()];
    h.extend(probs.iter().map(|p| format!("q{p}")));
    h.extend(["ess".to_string(), "rhat".to_string()]);
    w.write_record(&h).map_err(io)?;
    for r in rows {
        let mut out = vec![r.name.clone(), r.summary.mean.to_string(), r.summary.sd.to_string()];
        out.extend(probs.iter().map(|&p| r.summary.quantile(p).map_or(String::new(), |q| q.to_string())));
        out.push(r.mcmc_ess.to_string());
        out.push(r.rhat.map_or(String::new(), |v| v.to_string()));
        w.write_record(&out).map_err(io)?;
    }
    finish(path, w)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(format!("serializing json: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line() as u64, e.to_string()))
}
