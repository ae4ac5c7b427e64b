//! Training objectives and temperature schedules.
//!
//! * [`diffuco`]: joint reverse KL with a score-function estimator that
//!   backpropagates through every diffusion step.
//! * [`ppo`]: reverse KL as a reinforcement-learning problem, optimized
//!   with PPO on minibatches of (path, step) pairs.
//! * [`fkl`]: forward KL with self-normalized importance weights, also on
//!   step minibatches.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionPath;
use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::nets::{Network, Tape, Var};

pub mod anneal;
pub mod diffuco;
pub mod fkl;
pub mod ppo;

pub use anneal::AnnealSchedule;
pub use ppo::PpoConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Diffuco,
    RklRl,
    FklMc,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Diffuco => "diffuco",
            Objective::RklRl => "rkl_rl",
            Objective::FklMc => "fkl_mc",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffuco" => Ok(Objective::Diffuco),
            "rkl_rl" => Ok(Objective::RklRl),
            "fkl_mc" => Ok(Objective::FklMc),
            other => Err(Error::Parse(format!("unknown objective '{other}'"))),
        }
    }
}

/// Scalar loss, its parameter gradient and what the tape had to keep for
/// it: activation elements, and activation records (one per differentiated
/// `(path, t)` row).
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub activations: usize,
    pub records: usize,
}

impl LossGrad {
    pub fn zeros(n_params: usize) -> Self {
        Self {
            loss: 0.0,
            grad: vec![0.0; n_params],
            activations: 0,
            records: 0,
        }
    }

    /// `self += c · other`, keeping the larger activation counts.
    pub fn add_scaled(&mut self, other: &LossGrad, c: f64) {
        self.loss += c * other.loss;
        for (a, b) in self.grad.iter_mut().zip(&other.grad) {
            *a += c * b;
        }
        self.activations = self.activations.max(other.activations);
        self.records = self.records.max(other.records);
    }
}

/// Rows `(X_t, X_{t−1}, t/T)` gathered from stored paths.
#[derive(Clone, Debug)]
pub struct StepRows {
    pub n_bits: usize,
    pub states: Vec<u8>,
    pub next: Vec<u8>,
    pub times: Vec<f64>,
}

impl StepRows {
    /// `picks` are `(path index, t)` with `t ∈ {1..T}`.
    pub fn gather(paths: &[DiffusionPath], picks: &[(usize, usize)]) -> Self {
        let n = paths.first().map_or(0, DiffusionPath::n_bits);
        let mut states = Vec::with_capacity(picks.len() * n);
        let mut next = Vec::with_capacity(picks.len() * n);
        let mut times = Vec::with_capacity(picks.len());
        for &(p, t) in picks {
            let path = &paths[p];
            states.extend_from_slice(path.state(t));
            next.extend_from_slice(path.state(t - 1));
            times.push(t as f64 / path.n_steps() as f64);
        }
        Self {
            n_bits: n,
            states,
            next,
            times,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Records `log q_θ(X_{t−1} | X_t)` per row (and `V(X_t)` if asked).
    pub fn record(
        &self,
        net: &Network,
        tape: &mut Tape,
        theta: &[f64],
        graph: Option<&Graph>,
        with_value: bool,
    ) -> Result<(Var, Option<Var>)> {
        let out = net.forward(tape, theta, &self.states, &self.times, graph, with_value)?;
        let logq = tape.bernoulli_logprob(out.logits, self.next.clone());
        Ok((logq, out.value))
    }
}

/// Splits `n_paths × n_steps` (path, t) pairs into minibatches: paths are
/// shuffled and grouped by `paths_per_batch`; within a group each path's
/// steps are shuffled independently and cut into chunks of `steps_per_batch`.
/// Every pair appears in exactly one minibatch.
pub fn plan_minibatches<R: Rng>(
    n_paths: usize,
    n_steps: usize,
    paths_per_batch: usize,
    steps_per_batch: usize,
    rng: &mut R,
) -> Vec<Vec<(usize, usize)>> {
    let paths_per_batch = paths_per_batch.clamp(1, n_paths.max(1));
    let steps_per_batch = steps_per_batch.clamp(1, n_steps.max(1));
    let mut order: Vec<usize> = (0..n_paths).collect();
    order.shuffle(rng);
    let mut out = Vec::new();
    for group in order.chunks(paths_per_batch) {
        let schedules: Vec<Vec<usize>> = group
            .iter()
            .map(|_| {
                let mut ts: Vec<usize> = (1..=n_steps).collect();
                ts.shuffle(rng);
                ts
            })
            .collect();
        for c in 0..n_steps.div_ceil(steps_per_batch) {
            let lo = c * steps_per_batch;
            let hi = (lo + steps_per_batch).min(n_steps);
            let mut mb = Vec::with_capacity(group.len() * (hi - lo));
            for (&p, ts) in group.iter().zip(&schedules) {
                mb.extend(ts[lo..hi].iter().map(|&t| (p, t)));
            }
            out.push(mb);
        }
    }
    out
}
