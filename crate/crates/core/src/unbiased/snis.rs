//! Self-normalized neural importance sampling over diffusion paths.

use serde::{Deserialize, Serialize};

use crate::diffusion::{
    path_log_p_hat, sample_reverse_paths, DiffusionPath, NoiseSchedule, Policy,
};
use crate::energy::BoltzmannTarget;
use crate::error::{check_dim, Error, Result};

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Softmax of log-weights.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    if log_w.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
        return Err(Error::NonFinite("importance log-weight".into()));
    }
    let lse = log_sum_exp(log_w);
    if lse == f64::NEG_INFINITY {
        return Err(Error::Degenerate("all importance weights are zero".into()));
    }
    Ok(log_w.iter().map(|l| (l - lse).exp()).collect())
}

/// `ε_eff / M = (Σ w)² / (M Σ w²)`, for normalized or unnormalized weights.
pub fn ess_per_sample(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    s * s / s2 / weights.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSamples {
    pub log_w: Vec<f64>,
    pub weights: Vec<f64>,
    /// `log Ẑ = logsumexp(log ŵ) − log M`.
    pub log_z: f64,
}

impl WeightedSamples {
    pub fn from_log_weights(log_w: Vec<f64>) -> Result<Self> {
        if log_w.is_empty() {
            return Err(Error::InvalidConfig("no samples".into()));
        }
        let weights = normalize_log_weights(&log_w)?;
        let log_z = log_sum_exp(&log_w) - (log_w.len() as f64).ln();
        Ok(Self {
            log_w,
            weights,
            log_z,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn ess_per_sample(&self) -> f64 {
        ess_per_sample(&self.weights)
    }

    /// `Σ_i w_i O_i`.
    pub fn expectation(&self, values: &[f64]) -> Result<f64> {
        check_dim(self.len(), values.len())?;
        Ok(self.weights.iter().zip(values).map(|(w, o)| w * o).sum())
    }
}

/// Weights of stored paths, using the `log q` recorded at sampling time.
pub fn snis_weights(
    target: &BoltzmannTarget,
    schedule: &NoiseSchedule,
    paths: &[DiffusionPath],
) -> Result<WeightedSamples> {
    let log_w = paths
        .iter()
        .map(|p| {
            let l = path_log_p_hat(target, schedule, p)? - p.log_q();
            if !l.is_finite() {
                return Err(Error::NonFinite("importance log-ratio".into()));
            }
            Ok(l)
        })
        .collect::<Result<Vec<_>>>()?;
    WeightedSamples::from_log_weights(log_w)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableEstimates {
    pub log_z: f64,
    pub free_energy: f64,
    pub internal_energy: f64,
    pub entropy: f64,
    pub ess_per_sample: f64,
    pub n_samples: usize,
}

impl ObservableEstimates {
    pub fn per_site(&self, n_sites: usize) -> (f64, f64, f64) {
        let n = n_sites as f64;
        (
            self.free_energy / n,
            self.internal_energy / n,
            self.entropy / n,
        )
    }
}

/// `F = −log Ẑ / β`, `U = Σ w H`, `S = β (U − F)`.
pub fn observable_estimates(
    ws: &WeightedSamples,
    energies: &[f64],
    beta: f64,
) -> Result<ObservableEstimates> {
    if !(beta > 0.0) {
        return Err(Error::InvalidConfig("free energy needs β > 0".into()));
    }
    let u = ws.expectation(energies)?;
    let f = -ws.log_z / beta;
    Ok(ObservableEstimates {
        log_z: ws.log_z,
        free_energy: f,
        internal_energy: u,
        entropy: beta * (u - f),
        ess_per_sample: ws.ess_per_sample(),
        n_samples: ws.len(),
    })
}

/// Log-weights and `X_0` energies of `m` fresh paths, drawn in chunks so
/// that only two numbers per path are kept.
pub struct SnisDraw {
    pub log_w: Vec<f64>,
    pub energies: Vec<f64>,
}

pub fn draw_snis<P: Policy + ?Sized>(
    policy: &P,
    target: &BoltzmannTarget,
    schedule: &NoiseSchedule,
    m: usize,
    seed: u64,
    chunk: usize,
) -> Result<SnisDraw> {
    let chunk = chunk.max(1);
    let mut log_w = Vec::with_capacity(m);
    let mut energies = Vec::with_capacity(m);
    let mut start = 0;
    while start < m {
        let k = chunk.min(m - start);
        let batch = sample_reverse_paths(policy, schedule, k, seed, start as u64)?;
        for p in &batch.paths {
            let h = target.model.energy(p.x0())?;
            let l = target.log_weight_of_energy(h)
                + crate::diffusion::path_log_forward(schedule, p)?
                - p.log_q();
            if !l.is_finite() {
                return Err(Error::NonFinite("importance log-ratio".into()));
            }
            log_w.push(l);
            energies.push(h);
        }
        start += k;
    }
    Ok(SnisDraw { log_w, energies })
}
