//! Unbiased observables of a trained lattice sampler.

use serde::{Deserialize, Serialize};

use crate::diffusion::{NoiseSchedule, Policy};
use crate::energy::{BoltzmannTarget, EnergyModel};
use crate::enumerate::{enumerate_observables, Observables, ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::nets::Network;
use crate::unbiased::snis::{draw_snis, observable_estimates, WeightedSamples};
use crate::unbiased::{run_nmcmc, ClippedPolicy, NmcmcReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum EstimateMethod {
    Snis { samples: usize, chunk: usize },
    Nmcmc { chains: usize, steps: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerSite {
    pub free_energy: f64,
    pub internal_energy: f64,
    pub entropy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnisRun {
    pub seed: u64,
    pub log_z: f64,
    pub per_site: PerSite,
    pub ess_per_sample: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmcmcRun {
    pub seed: u64,
    pub internal_energy_per_site: f64,
    pub stderr_per_site: Option<f64>,
    pub tau: Option<f64>,
    pub report: NmcmcReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: EstimateMethod,
    pub beta: f64,
    pub n_sites: usize,
    pub n_steps: usize,
    pub sampling_epsilon: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub snis: Vec<SnisRun>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub nmcmc: Vec<NmcmcRun>,
    /// Enumerated reference per site, when requested and small enough.
    pub exact: Option<PerSite>,
}

pub fn exact_per_site(obs: &Observables, n_sites: usize) -> Option<PerSite> {
    let n = n_sites as f64;
    Some(PerSite {
        free_energy: obs.free_energy? / n,
        internal_energy: obs.internal_energy / n,
        entropy: obs.entropy / n,
    })
}

pub fn snis_run<P: Policy + ?Sized>(
    policy: &P,
    target: &BoltzmannTarget,
    schedule: &NoiseSchedule,
    samples: usize,
    chunk: usize,
    seed: u64,
) -> Result<SnisRun> {
    let draw = draw_snis(policy, target, schedule, samples, seed, chunk)?;
    let ws = WeightedSamples::from_log_weights(draw.log_w)?;
    let obs = observable_estimates(&ws, &draw.energies, target.beta)?;
    let (f, u, s) = obs.per_site(target.n_bits());
    Ok(SnisRun {
        seed,
        log_z: obs.log_z,
        per_site: PerSite {
            free_energy: f,
            internal_energy: u,
            entropy: s,
        },
        ess_per_sample: obs.ess_per_sample,
    })
}

pub fn nmcmc_run<P: Policy + ?Sized>(
    policy: &P,
    target: &BoltzmannTarget,
    schedule: &NoiseSchedule,
    chains: usize,
    steps: usize,
    seed: u64,
) -> Result<NmcmcRun> {
    let (report, _) = run_nmcmc(policy, target, schedule, chains, steps, seed)?;
    let n = target.n_bits() as f64;
    Ok(NmcmcRun {
        seed,
        internal_energy_per_site: report.energy.mean / n,
        stderr_per_site: report.energy.stderr.map(|s| s / n),
        tau: report.energy.tau,
        report,
    })
}

/// Runs `method` once per seed with the trained network as proposal.
#[allow(clippy::too_many_arguments)]
pub fn estimate(
    net: &Network,
    theta: &[f64],
    model: EnergyModel,
    beta: f64,
    n_steps: usize,
    method: &EstimateMethod,
    seeds: &[u64],
    sampling_epsilon: f64,
    with_exact: bool,
) -> Result<EstimateReport> {
    if !matches!(
        model,
        EnergyModel::Ising(_) | EnergyModel::EdwardsAnderson(_)
    ) {
        return Err(Error::InvalidConfig(
            "estimate needs a lattice model".into(),
        ));
    }
    let graph: Option<Graph> = net
        .architecture()
        .is_conditional()
        .then(|| model.interaction_graph());
    let target = BoltzmannTarget::new(model, beta)?;
    let schedule = NoiseSchedule::exponential(n_steps)?;
    let policy = ClippedPolicy::new(net.policy(theta, graph.as_ref())?, sampling_epsilon)?;
    let n_sites = target.n_bits();
    let mut report = EstimateReport {
        method: method.clone(),
        beta,
        n_sites,
        n_steps,
        sampling_epsilon,
        snis: Vec::new(),
        nmcmc: Vec::new(),
        exact: None,
    };
    for &seed in seeds {
        match *method {
            EstimateMethod::Snis { samples, chunk } => report
                .snis
                .push(snis_run(&policy, &target, &schedule, samples, chunk, seed)?),
            EstimateMethod::Nmcmc { chains, steps } => report
                .nmcmc
                .push(nmcmc_run(&policy, &target, &schedule, chains, steps, seed)?),
        }
    }
    if with_exact && n_sites <= ENUMERATION_CAP {
        report.exact = exact_per_site(&enumerate_observables(&target)?, n_sites);
    }
    Ok(report)
}
