//! Exact partition functions and thermodynamic observables by sweeping all
//! `2^N` states.

use serde::{Deserialize, Serialize};

use crate::energy::BoltzmannTarget;
use crate::error::{Error, Result};
use crate::state::index_to_bits;

/// Hard limit on exhaustive sweeps.
pub const ENUMERATION_CAP: usize = 26;
/// Per-state probabilities are only materialized up to this size.
pub const PROBABILITY_TABLE_CAP: usize = 22;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub n_bits: usize,
    pub beta: f64,
    pub log_z: f64,
    /// `exp(log_z)`; may overflow to infinity for large systems.
    pub z: f64,
    /// Free energy `−log Z / β`; absent at `β = 0`.
    pub free_energy: Option<f64>,
    pub internal_energy: f64,
    /// `β (U − F)`, computed as `β U + log Z` so it is defined at `β = 0`.
    pub entropy: f64,
    /// Probability of the state with index `i` (bit `k` = bit `k` of `i`).
    #[serde(skip)]
    pub probabilities: Option<Vec<f64>>,
}

/// Exact observables of a Boltzmann target.
pub fn enumerate_observables(target: &BoltzmannTarget) -> Result<Observables> {
    let model = &target.model;
    enumerate_with(target.n_bits(), target.beta, |x| model.energy_unchecked(x))
}

/// Exact observables of `exp(−β H)` for an arbitrary energy on `N` bits.
///
/// States are visited in index order with a streaming log-sum-exp, so the
/// result does not depend on anything but the energy values.
pub fn enumerate_with(
    n: usize,
    beta: f64,
    mut energy: impl FnMut(&[u8]) -> f64,
) -> Result<Observables> {
    if n > ENUMERATION_CAP {
        return Err(Error::CapExceeded {
            n,
            cap: ENUMERATION_CAP,
        });
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidConfig(format!("inverse temperature {beta}")));
    }
    let n_states = 1u64 << n;
    let keep = n <= PROBABILITY_TABLE_CAP;
    let mut log_w = if keep {
        Vec::with_capacity(n_states as usize)
    } else {
        Vec::new()
    };

    let mut bits = vec![0u8; n];
    let mut max = f64::NEG_INFINITY;
    // Σ exp(l − max) and Σ exp(l − max) H
    let mut s = 0.0;
    let mut u = 0.0;
    for idx in 0..n_states {
        index_to_bits(idx, &mut bits);
        let h = energy(&bits);
        if !h.is_finite() {
            return Err(Error::NonFinite(format!("energy of state {idx}")));
        }
        let l = if beta == 0.0 { 0.0 } else { -beta * h };
        if l > max {
            let r = (max - l).exp();
            s *= r;
            u *= r;
            max = l;
        }
        let w = (l - max).exp();
        s += w;
        u += w * h;
        if keep {
            log_w.push(l);
        }
    }

    let log_z = max + s.ln();
    let internal_energy = u / s;
    let free_energy = (beta > 0.0).then(|| -log_z / beta);
    let entropy = beta * internal_energy + log_z;
    let probabilities = keep.then(|| log_w.iter().map(|l| (l - log_z).exp()).collect());
    Ok(Observables {
        n_bits: n,
        beta,
        log_z,
        z: log_z.exp(),
        free_energy,
        internal_energy,
        entropy,
        probabilities,
    })
}
