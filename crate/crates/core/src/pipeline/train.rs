//! Epoch loop shared by the three objectives, with checkpoints and a
//! per-epoch metrics CSV.

use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    path_log_forward, path_rng, sample_reverse_paths, DiffusionPath, NoiseSchedule,
};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::nets::{Adam, Checkpoint, LrSchedule, Network, RngState};
use crate::objectives::diffuco::{diffuco_loss_grad, DiffucoOptions};
use crate::objectives::fkl::fkl_mc_loss_grad;
use crate::objectives::ppo::{
    path_values, ppo_loss_grad, rl_rewards, PpoRows, RewardNormalizer, TrajectoryBuffer,
};
use crate::objectives::{plan_minibatches, LossGrad, Objective};
use crate::pipeline::config::RunConfig;
use crate::unbiased::snis::{ess_per_sample, normalize_log_weights};

/// Smallest temperature used for importance weights; the annealed
/// temperature itself may reach zero.
pub const TEMPERATURE_FLOOR: f64 = 1e-4;
pub const METRICS_HEADER: &str = "epoch,temperature,loss,mean_energy,entropy_estimate,ess";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// One problem instance and the graph the network is conditioned on.
#[derive(Clone, Debug)]
pub struct Instance {
    pub model: EnergyModel,
    pub graph: Option<Graph>,
}

pub fn build_instances(config: &RunConfig) -> Result<Vec<Instance>> {
    let conditional = config.network.is_conditional();
    let n_bits = match &config.network {
        crate::nets::Architecture::Mlp { n_bits, .. } => Some(*n_bits),
        _ => None,
    };
    config
        .problem
        .models()?
        .into_iter()
        .map(|model| {
            if let Some(n) = n_bits {
                if n != model.n_bits() {
                    return Err(Error::InvalidConfig(format!(
                        "network expects {n} bits, instance has {}",
                        model.n_bits()
                    )));
                }
            }
            let graph = conditional.then(|| model.interaction_graph());
            Ok(Instance { model, graph })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: u64,
    pub temperature: f64,
    pub loss: f64,
    pub mean_energy: f64,
    /// Mean of `Σ_t log p(X_t|X_{t−1}) − log q(X_{0:T})` over sampled paths.
    pub entropy_estimate: f64,
    /// Mean `ε_eff / M` at the (floored) epoch temperature.
    pub ess: f64,
    /// Largest number of activation elements kept by one differentiable pass.
    pub max_activations: usize,
    /// Largest number of `(path, t)` activation records in one pass.
    pub max_records: usize,
    pub updates: u64,
}

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch,
            self.temperature,
            self.loss,
            self.mean_energy,
            self.entropy_estimate,
            self.ess
        )
    }
}

#[derive(Serialize, Deserialize)]
struct TrainerState {
    config: RunConfig,
    epoch: u64,
    normalizer: RewardNormalizer,
}

/// Largest tape footprint seen during one epoch's updates.
struct Peak {
    activations: usize,
    records: usize,
}

struct InstanceBatch {
    instance: usize,
    paths: Vec<DiffusionPath>,
    energies: Vec<f64>,
    log_forward: Vec<f64>,
}

impl InstanceBatch {
    fn log_weights(&self, temperature: f64) -> Vec<f64> {
        self.paths
            .iter()
            .zip(&self.energies)
            .zip(&self.log_forward)
            .map(|((p, h), lf)| -h / temperature + lf - p.log_q())
            .collect()
    }
}

pub struct Trainer {
    config: RunConfig,
    net: Network,
    theta: Vec<f64>,
    adam: Adam,
    rng: ChaCha8Rng,
    epoch: u64,
    normalizer: RewardNormalizer,
    instances: Vec<Instance>,
    schedule: NoiseSchedule,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let net = Network::new(config.architecture())?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let theta = net.init_params(rng.next_u64());
        let adam = Adam::new(net.n_params(), Self::lr_schedule(&config));
        Self::assemble(
            config,
            net,
            theta,
            adam,
            rng,
            0,
            RewardNormalizer::default(),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let state: TrainerState = serde_json::from_str(&ck.trainer)
            .map_err(|e| Error::Parse(format!("checkpoint trainer state: {e}")))?;
        state.config.validate()?;
        let net = Network::new(ck.arch.clone())?;
        if net.n_params() != ck.theta.len() {
            return Err(Error::DimensionMismatch {
                expected: net.n_params(),
                got: ck.theta.len(),
            });
        }
        Self::assemble(
            state.config,
            net,
            ck.theta.clone(),
            ck.optimizer.clone(),
            ck.rng.restore(),
            state.epoch,
            state.normalizer,
        )
    }

    fn assemble(
        config: RunConfig,
        net: Network,
        theta: Vec<f64>,
        adam: Adam,
        rng: ChaCha8Rng,
        epoch: u64,
        normalizer: RewardNormalizer,
    ) -> Result<Self> {
        let instances = build_instances(&config)?;
        let schedule = NoiseSchedule::exponential(config.n_steps)?;
        Ok(Self {
            config,
            net,
            theta,
            adam,
            rng,
            epoch,
            normalizer,
            instances,
            schedule,
        })
    }

    fn lr_schedule(config: &RunConfig) -> LrSchedule {
        LrSchedule {
            peak: config.lr_max,
            total_steps: (config.epochs * config.updates_per_epoch()).max(1),
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let state = TrainerState {
            config: self.config.clone(),
            epoch: self.epoch,
            normalizer: self.normalizer.clone(),
        };
        Ok(Checkpoint {
            arch: self.net.architecture().clone(),
            theta: self.theta.clone(),
            optimizer: self.adam.clone(),
            rng: RngState::capture(&self.rng),
            trainer: serde_json::to_string(&state).map_err(|e| Error::Parse(e.to_string()))?,
        })
    }

    fn pick_instances(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let n = self.instances.len();
        let k = self.config.batch.n_graphs;
        if k >= n {
            (0..n).collect()
        } else {
            index::sample(rng, n, k).into_vec()
        }
    }

    fn sample_batches(&self, chosen: &[usize], seed: u64) -> Result<Vec<InstanceBatch>> {
        let n_b = self.config.batch.n_paths;
        chosen
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let inst = &self.instances[i];
                let policy = self.net.policy(&self.theta, inst.graph.as_ref())?;
                let paths =
                    sample_reverse_paths(&policy, &self.schedule, n_b, seed, (k * n_b) as u64)?
                        .paths;
                let energies = paths
                    .iter()
                    .map(|p| inst.model.energy(p.x0()))
                    .collect::<Result<Vec<_>>>()?;
                let log_forward = paths
                    .iter()
                    .map(|p| path_log_forward(&self.schedule, p))
                    .collect::<Result<Vec<_>>>()?;
                Ok(InstanceBatch {
                    instance: i,
                    paths,
                    energies,
                    log_forward,
                })
            })
            .collect()
    }

    /// Samples a fresh buffer, takes the objective's optimizer steps and
    /// returns the epoch's metrics.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let temperature = self.config.anneal.temperature(self.epoch);
        let epoch_seed = self.rng.next_u64();
        let mut erng = path_rng(epoch_seed, u64::MAX);
        let chosen = self.pick_instances(&mut erng);
        let batches = self.sample_batches(&chosen, epoch_seed)?;

        let t_eff = temperature.max(TEMPERATURE_FLOOR);
        let n_total: usize = batches.iter().map(|b| b.paths.len()).sum();
        let mean_energy =
            batches.iter().flat_map(|b| b.energies.iter()).sum::<f64>() / n_total as f64;
        let entropy_estimate = batches
            .iter()
            .flat_map(|b| {
                b.paths
                    .iter()
                    .zip(&b.log_forward)
                    .map(|(p, lf)| lf - p.log_q())
            })
            .sum::<f64>()
            / n_total as f64;
        let mut ess = 0.0;
        for b in &batches {
            ess += ess_per_sample(&normalize_log_weights(&b.log_weights(t_eff))?);
        }
        ess /= batches.len() as f64;

        let updates_before = self.adam.step;
        let (loss, peak) = match self.config.objective {
            Objective::Diffuco => self.diffuco_update(&batches, temperature)?,
            Objective::FklMc => self.fkl_updates(&batches, t_eff, &mut erng)?,
            Objective::RklRl => self.ppo_updates(batches, temperature, &mut erng)?,
        };
        let metrics = EpochMetrics {
            epoch: self.epoch,
            temperature,
            loss,
            mean_energy,
            entropy_estimate,
            ess,
            max_activations: peak.activations,
            max_records: peak.records,
            updates: self.adam.step - updates_before,
        };
        self.epoch += 1;
        Ok(metrics)
    }

    fn graph_of(&self, b: &InstanceBatch) -> Option<&Graph> {
        self.instances[b.instance].graph.as_ref()
    }

    fn diffuco_update(
        &mut self,
        batches: &[InstanceBatch],
        temperature: f64,
    ) -> Result<(f64, Peak)> {
        let mut acc = LossGrad::zeros(self.theta.len());
        let opts = DiffucoOptions {
            temperature,
            path_weights: None,
            baseline: self.config.diffuco_baseline,
        };
        let scale = 1.0 / batches.len() as f64;
        for b in batches {
            let lg = diffuco_loss_grad(
                &self.net,
                &self.theta,
                self.graph_of(b),
                &self.schedule,
                &b.paths,
                &b.energies,
                &opts,
            )?;
            acc.add_scaled(&lg, scale);
        }
        self.adam.update(&mut self.theta, &acc.grad)?;
        Ok((
            acc.loss,
            Peak {
                activations: acc.activations,
                records: acc.records,
            },
        ))
    }

    fn fkl_updates(
        &mut self,
        batches: &[InstanceBatch],
        t_eff: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Peak)> {
        let weights = batches
            .iter()
            .map(|b| normalize_log_weights(&b.log_weights(t_eff)))
            .collect::<Result<Vec<_>>>()?;
        let n_b = self.config.batch.n_paths;
        let plan = plan_minibatches(
            n_b,
            self.config.n_steps,
            self.config.paths_per_minibatch(),
            self.config.batch.minibatch_steps,
            rng,
        );
        let mut losses = 0.0;
        let (mut peak_act, mut peak_rec) = (0, 0);
        for mb in &plan {
            let n_paths_mb = mb.iter().map(|&(p, _)| p).collect::<BTreeSet<_>>().len();
            let scale = n_b as f64 / n_paths_mb as f64 / batches.len() as f64;
            let mut acc = LossGrad::zeros(self.theta.len());
            for (b, w) in batches.iter().zip(&weights) {
                let lg =
                    fkl_mc_loss_grad(&self.net, &self.theta, self.graph_of(b), &b.paths, w, mb)?;
                acc.add_scaled(&lg, scale);
            }
            self.adam.update(&mut self.theta, &acc.grad)?;
            losses += acc.loss;
            peak_act = peak_act.max(acc.activations);
            peak_rec = peak_rec.max(acc.records);
        }
        Ok((
            losses / plan.len() as f64,
            Peak {
                activations: peak_act,
                records: peak_rec,
            },
        ))
    }

    fn ppo_updates(
        &mut self,
        batches: Vec<InstanceBatch>,
        temperature: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Peak)> {
        let ppo = self.config.ppo.clone();
        let t_max = self.config.n_steps;
        let mut rewards = Vec::with_capacity(batches.len());
        for b in &batches {
            let r = b
                .paths
                .iter()
                .zip(&b.energies)
                .map(|(p, &h)| rl_rewards(p, &self.schedule, h, temperature))
                .collect::<Result<Vec<_>>>()?;
            rewards.push(r);
        }
        if ppo.normalize_rewards {
            let flat: Vec<f64> = rewards.iter().flatten().flatten().copied().collect();
            self.normalizer.update(&flat, ppo.alpha);
            for r in rewards.iter_mut().flatten().flatten() {
                *r = self.normalizer.apply(*r);
            }
        }
        let mut buffers = Vec::with_capacity(batches.len());
        let mut graphs = Vec::with_capacity(batches.len());
        for (b, r) in batches.into_iter().zip(rewards) {
            let graph = self.instances[b.instance].graph.clone();
            let values = if ppo.c1 > 0.0 {
                path_values(&self.net, &self.theta, graph.as_ref(), &b.paths)?
            } else {
                vec![vec![0.0; t_max + 1]; b.paths.len()]
            };
            buffers.push(TrajectoryBuffer::new(b.paths, r, values, ppo.lambda));
            graphs.push(graph);
        }
        let scale = 1.0 / buffers.len() as f64;
        let mut losses = 0.0;
        let mut count = 0usize;
        let (mut peak_act, mut peak_rec) = (0, 0);
        for _ in 0..ppo.epochs_per_buffer {
            let plan = plan_minibatches(
                self.config.batch.n_paths,
                t_max,
                self.config.paths_per_minibatch(),
                self.config.batch.minibatch_steps,
                rng,
            );
            for mb in &plan {
                let mut acc = LossGrad::zeros(self.theta.len());
                for (buf, g) in buffers.iter().zip(&graphs) {
                    let rows = PpoRows::from_buffer(buf, mb);
                    let lg = ppo_loss_grad(
                        &self.net,
                        &self.theta,
                        g.as_ref(),
                        &buf.paths,
                        &rows,
                        ppo.kappa,
                        ppo.c1,
                    )?;
                    acc.add_scaled(&lg, scale);
                }
                self.adam.update(&mut self.theta, &acc.grad)?;
                losses += acc.loss;
                count += 1;
                peak_act = peak_act.max(acc.activations);
                peak_rec = peak_rec.max(acc.records);
            }
        }
        Ok((
            losses / count.max(1) as f64,
            Peak {
                activations: peak_act,
                records: peak_rec,
            },
        ))
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub out_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub metrics: Vec<EpochMetrics>,
}

/// Keeps the header and the rows of epochs before `epoch`.
fn truncate_metrics(path: &Path, epoch: u64) -> Result<()> {
    let text = fs::read_to_string(path).unwrap_or_default();
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for line in text.lines().skip(1) {
        let e: u64 = line
            .split(',')
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad metrics row '{line}'")))?;
        if e < epoch {
            out.push_str(line);
            out.push('\n');
        }
    }
    Ok(fs::write(path, out)?)
}

/// Trains to `config.epochs`, writing `metrics.csv` and `checkpoint.bin` to
/// `out_dir`. A resumed run continues from the checkpoint's state and keeps
/// the metrics rows of finished epochs. On a numerical failure the last good
/// state is written before the error is returned.
pub fn run_training(trainer: &mut Trainer, out_dir: &Path, resumed: bool) -> Result<TrainOutcome> {
    fs::create_dir_all(out_dir)?;
    let metrics_path = out_dir.join(METRICS_FILE);
    let ck_path = out_dir.join(CHECKPOINT_FILE);
    if resumed {
        truncate_metrics(&metrics_path, trainer.epoch())?;
    } else {
        fs::write(&metrics_path, format!("{METRICS_HEADER}\n"))?;
    }
    let mut file = OpenOptions::new().append(true).open(&metrics_path)?;
    let mut metrics = Vec::new();
    while !trainer.is_done() {
        let last_good = trainer.checkpoint()?;
        let m = match trainer.run_epoch() {
            Ok(m) => m,
            Err(e) => {
                last_good.save(&ck_path)?;
                return Err(e);
            }
        };
        writeln!(file, "{}", m.csv_row())?;
        metrics.push(m);
        let every = trainer.config().checkpoint_every;
        if every > 0 && trainer.epoch().is_multiple_of(every) {
            trainer.checkpoint()?.save(&ck_path)?;
        }
    }
    file.flush()?;
    trainer.checkpoint()?.save(&ck_path)?;
    Ok(TrainOutcome {
        out_dir: out_dir.to_path_buf(),
        checkpoint: ck_path,
        metrics,
    })
}
