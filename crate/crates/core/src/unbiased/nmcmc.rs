//! Metropolis–Hastings over whole diffusion paths with the policy as an
//! independence proposal.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    path_log_p_hat, path_log_q, sample_reverse_paths, DiffusionPath, NoiseSchedule, Policy,
};
use crate::energy::BoltzmannTarget;
use crate::error::{Error, Result};
use crate::unbiased::autocorr::{autocorr_time_chains, WINDOW_FACTOR};

pub const MIN_BURN_IN: usize = 100;
pub const BURN_IN_TAUS: f64 = 10.0;
/// Post-burn-in samples per chain required, in units of `τ̂`.
pub const MIN_RETAINED_TAUS: f64 = 50.0;
const CACHE_TOL: f64 = 1e-10;

/// `log A = min(0, log ŵ(X′) − log ŵ(X))` with `log ŵ = log p̂ − log q`.
pub fn log_acceptance(log_w_current: f64, log_w_proposal: f64) -> f64 {
    (log_w_proposal - log_w_current).min(0.0)
}

/// A batch of independent chains.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub paths: Vec<DiffusionPath>,
    pub log_p_hat: Vec<f64>,
    pub log_q: Vec<f64>,
    pub accepted: Vec<u64>,
    pub proposed: Vec<u64>,
    /// `H(X_0)` of the current state after every step, per chain.
    pub energies: Vec<Vec<f64>>,
    steps: u64,
}

impl ChainState {
    /// Starts every chain from a fresh policy sample.
    pub fn init<P: Policy + ?Sized>(
        policy: &P,
        target: &BoltzmannTarget,
        schedule: &NoiseSchedule,
        n_chains: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_chains == 0 {
            return Err(Error::InvalidConfig("need at least one chain".into()));
        }
        let paths = sample_reverse_paths(policy, schedule, n_chains, seed, 0)?.paths;
        let mut log_p_hat = Vec::with_capacity(n_chains);
        let mut log_q = Vec::with_capacity(n_chains);
        for p in &paths {
            log_p_hat.push(path_log_p_hat(target, schedule, p)?);
            log_q.push(p.log_q());
        }
        Ok(Self {
            paths,
            log_p_hat,
            log_q,
            accepted: vec![0; n_chains],
            proposed: vec![0; n_chains],
            energies: vec![Vec::new(); n_chains],
            steps: 0,
        })
    }

    pub fn n_chains(&self) -> usize {
        self.paths.len()
    }

    pub fn acceptance_rate(&self) -> f64 {
        let a: u64 = self.accepted.iter().sum();
        let p: u64 = self.proposed.iter().sum();
        if p == 0 {
            0.0
        } else {
            a as f64 / p as f64
        }
    }

    /// Chains with no accepted move so far.
    pub fn stuck_chains(&self) -> Vec<usize> {
        (0..self.n_chains())
            .filter(|&c| self.proposed[c] > 0 && self.accepted[c] == 0)
            .collect()
    }

    /// Recomputes the cached logs of every current path.
    pub fn verify_cache<P: Policy + ?Sized>(
        &self,
        policy: &P,
        target: &BoltzmannTarget,
        schedule: &NoiseSchedule,
    ) -> Result<()> {
        for (c, p) in self.paths.iter().enumerate() {
            let lp = path_log_p_hat(target, schedule, p)?;
            let lq = path_log_q(policy, schedule, p)?;
            if (lp - self.log_p_hat[c]).abs() > CACHE_TOL || (lq - self.log_q[c]).abs() > CACHE_TOL
            {
                return Err(Error::Degenerate(format!(
                    "chain {c}: cached path logs are stale"
                )));
            }
        }
        Ok(())
    }
}

/// One proposal and accept/reject per chain. Proposals for step `s` use the
/// per-chain streams of a seed drawn from `rng`; the uniforms come from `rng`.
pub fn nmcmc_step<P: Policy + ?Sized, R: Rng + RngCore>(
    chain: &mut ChainState,
    policy: &P,
    target: &BoltzmannTarget,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<()> {
    let seed = rng.next_u64();
    let proposals = sample_reverse_paths(policy, schedule, chain.n_chains(), seed, 0)?.paths;
    for (c, prop) in proposals.into_iter().enumerate() {
        let lp = path_log_p_hat(target, schedule, &prop)?;
        let lq = prop.log_q();
        if !(lp - lq).is_finite() {
            return Err(Error::NonFinite("proposal log-ratio".into()));
        }
        let log_a = log_acceptance(chain.log_p_hat[c] - chain.log_q[c], lp - lq);
        let u: f64 = rng.random();
        chain.proposed[c] += 1;
        if u.ln() < log_a {
            chain.paths[c] = prop;
            chain.log_p_hat[c] = lp;
            chain.log_q[c] = lq;
            chain.accepted[c] += 1;
        }
        let h = target.model.energy(chain.paths[c].x0())?;
        chain.energies[c].push(h);
    }
    chain.steps += 1;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmcmcEstimate {
    pub mean: f64,
    /// `σ √(τ̂ / n)`; absent for a constant series.
    pub stderr: Option<f64>,
    pub tau: Option<f64>,
    pub burn_in: usize,
    pub n_samples: usize,
    pub n_chains_used: usize,
    pub degenerate: bool,
}

/// Pools the post-burn-in samples of `chains`. The burn-in is
/// `max(10 τ̂, 100)` steps with `τ̂` from the full series; the error bar uses
/// `τ̂` re-estimated on the retained part.
pub fn nmcmc_estimate<S: AsRef<[f64]>>(chains: &[S]) -> Result<NmcmcEstimate> {
    let chains: Vec<&[f64]> = chains.iter().map(|s| s.as_ref()).collect();
    if chains.is_empty() || chains.iter().any(|s| s.is_empty()) {
        return Err(Error::InvalidConfig("empty chain".into()));
    }
    let len = chains.iter().map(|s| s.len()).min().unwrap();
    let tau_full = match autocorr_time_chains(&chains, WINDOW_FACTOR) {
        Ok(r) => Some(r.tau),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let Some(tau_full) = tau_full else {
        let mean = chains.iter().flat_map(|s| s.iter()).sum::<f64>()
            / chains.iter().map(|s| s.len()).sum::<usize>() as f64;
        return Ok(NmcmcEstimate {
            mean,
            stderr: None,
            tau: None,
            burn_in: 0,
            n_samples: chains.iter().map(|s| s.len()).sum(),
            n_chains_used: chains.len(),
            degenerate: true,
        });
    };
    let burn_in = ((BURN_IN_TAUS * tau_full).ceil() as usize).max(MIN_BURN_IN);
    if burn_in >= len {
        return Err(Error::NotConverged(format!(
            "burn-in of {burn_in} steps exceeds chain length {len}"
        )));
    }
    let kept: Vec<&[f64]> = chains.iter().map(|s| &s[burn_in..]).collect();
    let n: usize = kept.iter().map(|s| s.len()).sum();
    let mean = kept.iter().flat_map(|s| s.iter()).sum::<f64>() / n as f64;
    let var = kept
        .iter()
        .flat_map(|s| s.iter())
        .map(|x| (x - mean).powi(2))
        .sum::<f64>()
        / (n - 1).max(1) as f64;
    let (tau, degenerate) = match autocorr_time_chains(&kept, WINDOW_FACTOR) {
        Ok(r) => (Some(r.tau), false),
        Err(Error::Degenerate(_)) => (None, true),
        Err(e) => return Err(e),
    };
    if let Some(t) = tau {
        let retained = len - burn_in;
        if (retained as f64) < MIN_RETAINED_TAUS * t {
            return Err(Error::NotConverged(format!(
                "{retained} post-burn-in steps per chain is under {MIN_RETAINED_TAUS} τ̂ (τ̂ = {t:.2})"
            )));
        }
    }
    Ok(NmcmcEstimate {
        mean,
        stderr: tau.map(|t| (var * t.max(0.0) / n as f64).sqrt()),
        tau,
        burn_in,
        n_samples: n,
        n_chains_used: kept.len(),
        degenerate,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmcmcReport {
    pub energy: NmcmcEstimate,
    pub acceptance_rate: f64,
    pub stuck_chains: usize,
    pub n_chains: usize,
    pub n_steps: usize,
}

/// Runs `n_steps` updates of `n_chains` chains and estimates `⟨H⟩`. Chains
/// that never accepted a move are excluded from the estimate and counted.
pub fn run_nmcmc<P: Policy + ?Sized>(
    policy: &P,
    target: &BoltzmannTarget,
    schedule: &NoiseSchedule,
    n_chains: usize,
    n_steps: usize,
    seed: u64,
) -> Result<(NmcmcReport, ChainState)> {
    let mut rng = crate::diffusion::path_rng(seed, u64::MAX);
    let mut chain = ChainState::init(policy, target, schedule, n_chains, seed)?;
    for _ in 0..n_steps {
        nmcmc_step(&mut chain, policy, target, schedule, &mut rng)?;
    }
    let stuck = chain.stuck_chains();
    let live: Vec<&[f64]> = (0..n_chains)
        .filter(|c| !stuck.contains(c))
        .map(|c| chain.energies[c].as_slice())
        .collect();
    if live.is_empty() {
        return Err(Error::NotConverged(format!(
            "no chain accepted a move in {n_steps} steps"
        )));
    }
    let energy = nmcmc_estimate(&live)?;
    Ok((
        NmcmcReport {
            energy,
            acceptance_rate: chain.acceptance_rate(),
            stuck_chains: stuck.len(),
            n_chains,
            n_steps,
        },
        chain,
    ))
}
