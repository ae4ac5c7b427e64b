//! End-to-end workflows behind the command-line tool.

pub mod config;
pub mod dataset;
pub mod estimate;
pub mod solve;
pub mod train;

pub use config::{BatchConfig, ProblemSpec, RunConfig};
pub use train::{run_training, EpochMetrics, Trainer};

use serde::{Deserialize, Serialize};

use crate::energy::{BoltzmannTarget, CoProblem, EnergyModel};
use crate::enumerate::{enumerate_observables, enumerate_with, Observables};
use crate::error::Result;
use crate::graphs::{brute_force_co, Graph};
use crate::io::EdgeList;
use crate::state::spin;

/// Exact reference values produced by the `oracle` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleReport {
    Thermo {
        observables: Observables,
        per_site: Option<estimate::PerSite>,
    },
    Co {
        problem: CoProblem,
        energy: f64,
        quantity: usize,
        n_minimizers: usize,
    },
}

pub fn oracle_model(model: EnergyModel, beta: f64) -> Result<OracleReport> {
    let n = model.n_bits();
    let obs = enumerate_observables(&BoltzmannTarget::new(model, beta)?)?;
    Ok(OracleReport::Thermo {
        per_site: estimate::exact_per_site(&obs, n),
        observables: obs,
    })
}

/// Ising model on an arbitrary weighted graph, `H = −Σ w_ij σ_i σ_j`.
pub fn oracle_ising_graph(list: &EdgeList, beta: f64) -> Result<OracleReport> {
    let obs = enumerate_with(list.n_nodes, beta, |x| {
        -list
            .entries
            .iter()
            .map(|&(i, j, w)| w * spin(x[i]) * spin(x[j]))
            .sum::<f64>()
    })?;
    Ok(OracleReport::Thermo {
        per_site: estimate::exact_per_site(&obs, list.n_nodes),
        observables: obs,
    })
}

pub fn oracle_co(problem: CoProblem, graph: &Graph, a: f64, b: f64) -> Result<OracleReport> {
    let opt = brute_force_co(problem, graph, a, b, None)?;
    Ok(OracleReport::Co {
        problem,
        energy: opt.energy,
        quantity: opt.quantity,
        n_minimizers: opt.states.len(),
    })
}
