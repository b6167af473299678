use serde::{Deserialize, Serialize};

use super::draws::DrawMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub name: String,
    /// Split-R̂; `None` with a single chain or a constant column.
    pub rhat: Option<f64>,
    /// Autocorrelation-based effective sample size over all chains.
    pub ess: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub params: Vec<ParamDiagnostics>,
    /// Post-adaptation Metropolis acceptance rate per chain. Empty when the
    /// diagnostics were computed from stored draws.
    pub acceptance: Vec<f64>,
    pub warnings: Vec<String>,
}

impl ChainDiagnostics {
    pub fn param(&self, name: &str) -> Option<&ParamDiagnostics> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn max_rhat(&self) -> Option<f64> {
        self.params.iter().filter_map(|p| p.rhat).fold(None, |m, r| Some(m.map_or(r, |m: f64| m.max(r))))
    }
}

pub const RHAT_WARN: f64 = 1.01;

/// Split-R̂ and effective sample size for every column.
pub fn diagnostics(draws: &DrawMatrix) -> Result<ChainDiagnostics> {
    let per = draws.draws_per_chain();
    if per < 4 {
        return Err(Error::invalid("diagnostics", format!("need at least 4 draws per chain, got {per}")));
    }
    let mut out = ChainDiagnostics::default();
    if draws.n_chains() < 2 {
        out.warnings.push("single chain: split-R-hat unavailable".into());
    }
    if per < 50 {
        out.warnings.push(format!("only {per} draws per chain; diagnostics are unreliable"));
    }
    for (idx, meta) in draws.columns().iter().enumerate() {
        let chains: Vec<&[f64]> = (0..draws.n_chains()).map(|c| draws.chain_slice(idx, c)).collect();
        let rhat = if chains.len() >= 2 { split_rhat(&chains) } else { None };
        let ess = effective_sample_size(&chains);
        if let Some(r) = rhat {
            if r > RHAT_WARN {
                out.warnings.push(format!("{}: R-hat {r:.4} exceeds {RHAT_WARN}", meta.name));
            }
        }
        out.params.push(ParamDiagnostics { name: meta.name.clone(), rhat, ess });
    }
    Ok(out)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Split-R̂: each chain is cut in half and the halves compared as separate
/// chains.
pub fn split_rhat(chains: &[&[f64]]) -> Option<f64> {
    let half = chains.iter().map(|c| c.len()).min()? / 2;
    if half < 2 {
        return None;
    }
    let mut pieces = Vec::with_capacity(2 * chains.len());
    for c in chains {
        pieces.push(&c[..half]);
        pieces.push(&c[c.len() - half..]);
    }
    let stats: Vec<(f64, f64)> = pieces.iter().map(|p| mean_var(p)).collect();
    let n = half as f64;
    let w = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let (_, b_over_n) = mean_var(&means);
    if w <= 0.0 || !w.is_finite() {
        return None;
    }
    let var_plus = (n - 1.0) / n * w + b_over_n;
    Some((var_plus / w).sqrt())
}

/// Multi-chain effective sample size using Geyer's initial monotone
/// sequence on the combined autocorrelation.
pub fn effective_sample_size(chains: &[&[f64]]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let total = (m * n) as f64;
    if n < 4 {
        return total;
    }
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| mean_var(&c[..n])).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m as f64;
    if w <= 0.0 {
        return total;
    }
    let b_over_n = if m > 1 { mean_var(&stats.iter().map(|s| s.0).collect::<Vec<_>>()).1 } else { 0.0 };
    let nf = n as f64;
    let var_plus = (nf - 1.0) / nf * w + b_over_n;

    // Biased (divide-by-n) autocovariance per chain at a given lag.
    let acov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&stats)
            .map(|(c, (mu, _))| {
                let c = &c[..n];
                c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| (a - mu) * (b - mu)).sum::<f64>() / nf
            })
            .sum::<f64>()
            / m as f64
    };
    let rho = |lag: usize| 1.0 - (w - acov(lag)) / var_plus;

    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let mut pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = tau.max(1.0 / total.log10().max(1.0));
    total / tau
}
