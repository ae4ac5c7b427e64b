//! Sampling solutions to graph problems from a trained conditional sampler.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::decode::{decode_with_model, ProductDistribution};
use crate::diffusion::{path_rng, sample_reverse_paths, NoiseSchedule};
use crate::energy::{CoProblem, EnergyModel};
use crate::error::{Error, Result};
use crate::graphs::{brute_force_co, solution_quantity, Graph};
use crate::nets::Network;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub n_samples: usize,
    /// Round the last step's probabilities by conditional expectation
    /// instead of using the sampled `X_0`.
    pub conditional_expectation: bool,
    pub seed: u64,
    /// Run `factor × T` diffusion steps at inference.
    pub step_factor: usize,
    /// Compare against exhaustive search (small graphs only).
    pub with_optimum: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub index: usize,
    pub n_nodes: usize,
    /// Best feasible set size or cut, `None` if no sample was feasible.
    pub best: Option<usize>,
    /// Mean over feasible samples.
    pub mean: Option<f64>,
    pub n_feasible: usize,
    pub best_energy: f64,
    pub optimum: Option<usize>,
    /// No feasible sample was drawn.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub problem: CoProblem,
    pub options: SolveOptions,
    pub instances: Vec<InstanceResult>,
    pub mean_best: Option<f64>,
    pub mean_mean: Option<f64>,
    /// Fraction of instances whose best equals the exhaustive optimum.
    pub optimal_fraction: Option<f64>,
}

/// Solves every graph. Sample `k` of graph `i` uses a stream that depends
/// only on `(seed, i, k)`, so a larger `n_samples` extends a smaller run.
pub fn solve(
    net: &Network,
    theta: &[f64],
    n_steps: usize,
    problem: CoProblem,
    models: &[EnergyModel],
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if opts.n_samples == 0 || opts.step_factor == 0 {
        return Err(Error::InvalidConfig(
            "n_samples and step_factor must be ≥ 1".into(),
        ));
    }
    let schedule = NoiseSchedule::exponential(n_steps * opts.step_factor)?;
    let mut instances = Vec::with_capacity(models.len());
    for (i, model) in models.iter().enumerate() {
        let EnergyModel::Co(co) = model else {
            return Err(Error::InvalidConfig("solve needs graph problems".into()));
        };
        let graph: &Graph = &co.graph;
        let cond = net.architecture().is_conditional().then_some(graph);
        let policy = net.policy(theta, cond)?;
        let seed = path_rng(opts.seed, i as u64).next_u64();
        let batch = sample_reverse_paths(&policy, &schedule, opts.n_samples, seed, 0)?;
        let mut quantities = Vec::new();
        let mut best_energy = f64::INFINITY;
        for (path, probs) in batch.paths.iter().zip(&batch.final_probs) {
            let x = if opts.conditional_expectation {
                decode_with_model(&ProductDistribution::new(probs.clone())?, model)?
            } else {
                path.x0().to_vec()
            };
            best_energy = best_energy.min(model.energy(&x)?);
            if let Some(q) = solution_quantity(problem, graph, &x) {
                quantities.push(q);
            }
        }
        let best = if problem.maximizes() {
            quantities.iter().copied().max()
        } else {
            quantities.iter().copied().min()
        };
        let mean = (!quantities.is_empty())
            .then(|| quantities.iter().sum::<usize>() as f64 / quantities.len() as f64);
        let optimum = if opts.with_optimum {
            Some(brute_force_co(problem, graph, co.penalty_a, co.penalty_b, None)?.quantity)
        } else {
            None
        };
        instances.push(InstanceResult {
            index: i,
            n_nodes: graph.n_nodes(),
            best,
            mean,
            n_feasible: quantities.len(),
            best_energy,
            optimum,
            flagged: quantities.is_empty(),
        });
    }
    let avg = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let mean_best = avg(instances
        .iter()
        .filter_map(|r| r.best.map(|b| b as f64))
        .collect());
    let mean_mean = avg(instances.iter().filter_map(|r| r.mean).collect());
    let optimal_fraction = opts.with_optimum.then(|| {
        instances
            .iter()
            .filter(|r| r.best.is_some() && r.best == r.optimum)
            .count() as f64
            / instances.len().max(1) as f64
    });
    Ok(SolveReport {
        problem,
        options: opts.clone(),
        instances,
        mean_best,
        mean_mean,
        optimal_fraction,
    })
}
