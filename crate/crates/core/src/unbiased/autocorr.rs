//! Integrated autocorrelation time with a self-consistent window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WINDOW_FACTOR: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutocorrResult {
    /// `1 + 2 Σ_{τ=1}^{K} ρ̂(τ)`; may dip below 1 for anticorrelated chains.
    pub tau: f64,
    pub window: usize,
    /// `ρ̂(0..=K)`.
    pub rho: Vec<f64>,
}

/// Single-series form of [`autocorr_time_chains`].
pub fn autocorr_time(series: &[f64], c: f64) -> Result<AutocorrResult> {
    autocorr_time_chains(&[series], c)
}

/// Pools `ĉ(τ)` over chains of equal or unequal length around the global
/// mean, then grows `K` until `K ≥ c τ̂(K)`.
pub fn autocorr_time_chains<S: AsRef<[f64]>>(chains: &[S], c: f64) -> Result<AutocorrResult> {
    let chains: Vec<&[f64]> = chains
        .iter()
        .map(|s| s.as_ref())
        .filter(|s| !s.is_empty())
        .collect();
    let total: usize = chains.iter().map(|s| s.len()).sum();
    let min_len = chains.iter().map(|s| s.len()).min().unwrap_or(0);
    if min_len < 2 {
        return Err(Error::InvalidConfig(
            "autocorrelation needs at least two samples per chain".into(),
        ));
    }
    let mean = chains.iter().flat_map(|s| s.iter()).sum::<f64>() / total as f64;
    let cov = |lag: usize| -> f64 {
        let mut acc = 0.0;
        let mut count = 0usize;
        for s in &chains {
            if s.len() <= lag {
                continue;
            }
            for i in 0..s.len() - lag {
                acc += (s[i] - mean) * (s[i + lag] - mean);
            }
            count += s.len() - lag;
        }
        acc / count as f64
    };
    let c0 = cov(0);
    let scale = mean.abs().max(1.0);
    if !(c0 > 1e-24 * scale * scale) {
        return Err(Error::Degenerate("zero-variance series".into()));
    }
    let mut rho = vec![1.0];
    let mut tau = 1.0;
    let max_window = min_len / 2;
    for k in 1..=max_window {
        let r = cov(k) / c0;
        rho.push(r);
        tau += 2.0 * r;
        if k as f64 >= c * tau {
            return Ok(AutocorrResult {
                tau,
                window: k,
                rho,
            });
        }
    }
    Err(Error::NotConverged(format!(
        "autocorrelation window did not settle within {max_window} lags (τ̂ = {tau:.3})"
    )))
}
