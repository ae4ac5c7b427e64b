//! Run configuration, read from TOML. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energy::{
    CoInstance, CoProblem, CouplingDistribution, EnergyModel, DEFAULT_PENALTY_A, DEFAULT_PENALTY_B,
};
use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::io::LatticeFile;
use crate::nets::Architecture;
use crate::objectives::{AnnealSchedule, Objective, PpoConfig};
use crate::pipeline::dataset::load_dataset;

fn unit() -> f64 {
    1.0
}

fn default_a() -> f64 {
    DEFAULT_PENALTY_A
}

fn default_b() -> f64 {
    DEFAULT_PENALTY_B
}

fn normal() -> CouplingDistribution {
    CouplingDistribution::Normal
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Ferromagnet on a periodic `side × side` lattice at inverse temperature `beta`.
    Ising {
        side: usize,
        beta: f64,
        #[serde(default = "unit")]
        coupling: f64,
    },
    /// Spin glass with couplings drawn from `instance_seed`.
    Ea {
        side: usize,
        beta: f64,
        instance_seed: u64,
        #[serde(default = "normal")]
        distribution: CouplingDistribution,
    },
    /// Graph problem over a dataset directory written by `gen-graphs`.
    Co {
        problem: CoProblem,
        dataset: PathBuf,
        #[serde(default = "default_a")]
        penalty_a: f64,
        #[serde(default = "default_b")]
        penalty_b: f64,
    },
}

impl ProblemSpec {
    /// Target inverse temperature of lattice problems.
    pub fn beta(&self) -> Option<f64> {
        match self {
            ProblemSpec::Ising { beta, .. } | ProblemSpec::Ea { beta, .. } => Some(*beta),
            ProblemSpec::Co { .. } => None,
        }
    }

    pub fn lattice_model(&self) -> Result<Option<EnergyModel>> {
        let file = match self {
            ProblemSpec::Ising { side, coupling, .. } => LatticeFile::Ising {
                side: *side,
                coupling: *coupling,
            },
            ProblemSpec::Ea {
                side,
                instance_seed,
                distribution,
                ..
            } => LatticeFile::Ea {
                side: *side,
                seed: Some(*instance_seed),
                distribution: Some(*distribution),
                couplings: None,
            },
            ProblemSpec::Co { .. } => return Ok(None),
        };
        file.to_model().map(Some)
    }

    /// Energy models of the problem: one lattice or every dataset graph.
    pub fn models(&self) -> Result<Vec<EnergyModel>> {
        if let Some(m) = self.lattice_model()? {
            return Ok(vec![m]);
        }
        let ProblemSpec::Co { dataset, .. } = self else {
            unreachable!()
        };
        load_dataset(dataset)?
            .into_iter()
            .map(|g| self.co_model(g))
            .collect()
    }

    pub fn co_model(&self, graph: Graph) -> Result<EnergyModel> {
        match self {
            ProblemSpec::Co {
                problem,
                penalty_a,
                penalty_b,
                ..
            } => Ok(EnergyModel::Co(CoInstance::with_penalties(
                *problem, graph, *penalty_a, *penalty_b,
            )?)),
            _ => Err(Error::InvalidConfig("not a graph problem".into())),
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(beta) = self.beta() {
            if !(beta.is_finite() && beta > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "beta = {beta} must be positive"
                )));
            }
        }
        self.lattice_model()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    /// Paths sampled per instance and epoch.
    pub n_paths: usize,
    /// Instances drawn per epoch.
    #[serde(default = "one")]
    pub n_graphs: usize,
    /// Paths per gradient minibatch; all paths when absent.
    #[serde(default)]
    pub minibatch_paths: Option<usize>,
    /// Diffusion steps per path in a minibatch.
    pub minibatch_steps: usize,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub objective: Objective,
    pub n_steps: usize,
    pub network: Architecture,
    pub anneal: AnnealSchedule,
    pub batch: BatchConfig,
    pub epochs: u64,
    pub lr_max: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Write a checkpoint every this many epochs; 0 keeps only the final one.
    #[serde(default)]
    pub checkpoint_every: u64,
    #[serde(default)]
    pub ppo: PpoConfig,
    /// Leave-one-out baseline for the score-function term of `diffuco`.
    #[serde(default = "yes")]
    pub diffuco_baseline: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses and validates `path`; relative paths inside resolve against
    /// its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let ProblemSpec::Co { dataset, .. } = &mut self.problem {
            fix(dataset);
        }
        if let Some(o) = &mut self.out_dir {
            fix(o);
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn paths_per_minibatch(&self) -> usize {
        self.batch.minibatch_paths.unwrap_or(self.batch.n_paths)
    }

    /// The network actually built: PPO with a value loss gets a value head.
    pub fn architecture(&self) -> Architecture {
        let needs_value = self.objective == Objective::RklRl && self.ppo.c1 > 0.0;
        self.network.clone().with_value_head(needs_value)
    }

    /// Optimizer updates per epoch.
    pub fn updates_per_epoch(&self) -> u64 {
        let per_pass = (self
            .batch
            .n_paths
            .div_ceil(self.paths_per_minibatch().clamp(1, self.batch.n_paths))
            * self.n_steps.div_ceil(self.batch.minibatch_steps)) as u64;
        match self.objective {
            Objective::Diffuco => 1,
            Objective::FklMc => per_pass,
            Objective::RklRl => per_pass * self.ppo.epochs_per_buffer as u64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        self.problem.validate()?;
        self.network.validate()?;
        self.anneal.validate()?;
        self.ppo.validate()?;
        if self.n_steps == 0 {
            return bad("n_steps must be ≥ 1".into());
        }
        if self.batch.n_paths == 0 || self.batch.n_graphs == 0 {
            return bad("batch sizes must be ≥ 1".into());
        }
        if self.batch.minibatch_steps == 0 || self.batch.minibatch_steps > self.n_steps {
            return bad(format!(
                "minibatch_steps = {} must lie in 1..={}",
                self.batch.minibatch_steps, self.n_steps
            ));
        }
        if self.batch.minibatch_paths == Some(0) {
            return bad("minibatch_paths must be ≥ 1".into());
        }
        if !(self.lr_max.is_finite() && self.lr_max > 0.0) {
            return bad(format!("lr_max = {} must be positive", self.lr_max));
        }
        match (&self.problem, &self.network) {
            (ProblemSpec::Co { .. }, Architecture::Mlp { .. }) => {
                return bad("graph problems need the graph network".into());
            }
            (
                ProblemSpec::Ising { side, .. } | ProblemSpec::Ea { side, .. },
                Architecture::Mlp { n_bits, .. },
            ) if *n_bits != side * side => {
                return bad(format!(
                    "network n_bits = {n_bits} but the lattice has {} sites",
                    side * side
                ));
            }
            _ => {}
        }
        if matches!(self.problem, ProblemSpec::Co { .. })
            && self.batch.n_graphs > 1
            && !self.network.is_conditional()
        {
            return bad("several instances per epoch need a conditional network".into());
        }
        Ok(())
    }
}
