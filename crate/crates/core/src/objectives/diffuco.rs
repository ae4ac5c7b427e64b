//! Joint reverse-KL baseline.
//!
//! Minimizes `E_q[𝒯 Σ_t log q_θ(X_{t−1}|X_t) − 𝒯 Σ_t log p(X_t|X_{t−1}) + H(X_0)]`.
//! The `log q` terms enter through the exact per-step Bernoulli entropies;
//! the rest is handled by a score-function estimator whose cost for step `t`
//! contains only the terms sampled after `X_{t−1}` was drawn. Every step of
//! every path is recorded on one tape, so memory grows with `T`.

use crate::diffusion::{forward_kernel_logprob, DiffusionPath, NoiseSchedule};
use crate::error::{check_dim, Error, Result};
use crate::graphs::Graph;
use crate::nets::{Network, Tape};
use crate::objectives::{LossGrad, StepRows};

/// Options for [`diffuco_loss_grad`].
#[derive(Clone, Debug)]
pub struct DiffucoOptions<'a> {
    pub temperature: f64,
    /// Per-path weights of the average; uniform `1/M` when absent.
    pub path_weights: Option<&'a [f64]>,
    /// Subtract the leave-one-out mean cost of the other paths.
    pub baseline: bool,
}

/// Returns the batch estimate of the objective as `loss` and the gradient
/// estimate.
pub fn diffuco_loss_grad(
    net: &Network,
    theta: &[f64],
    graph: Option<&Graph>,
    schedule: &NoiseSchedule,
    paths: &[DiffusionPath],
    energies_x0: &[f64],
    opts: &DiffucoOptions<'_>,
) -> Result<LossGrad> {
    let m = paths.len();
    check_dim(m, energies_x0.len())?;
    if m == 0 {
        return Ok(LossGrad::zeros(theta.len()));
    }
    let t_max = schedule.n_steps();
    let temp = opts.temperature;
    let uniform = vec![1.0 / m as f64; m];
    let weights = match opts.path_weights {
        Some(w) => {
            check_dim(m, w.len())?;
            w
        }
        None => &uniform,
    };

    // rows ordered path-major, t = 1..T
    let picks: Vec<(usize, usize)> = (0..m)
        .flat_map(|p| (1..=t_max).map(move |t| (p, t)))
        .collect();
    let rows = StepRows::gather(paths, &picks);
    let mut tape = Tape::new();
    let out = net.forward(&mut tape, theta, &rows.states, &rows.times, graph, false)?;
    let logq = tape.bernoulli_logprob(out.logits, rows.next.clone());
    let entropy = tape.bernoulli_entropy(out.logits);

    let ent = tape.value(entropy).column(0).to_vec();
    let lq = tape.value(logq).column(0).to_vec();
    let mut log_p = vec![0.0; m * t_max];
    for (k, &(p, t)) in picks.iter().enumerate() {
        log_p[k] =
            forward_kernel_logprob(paths[p].state(t), paths[p].state(t - 1), schedule.beta(t))?;
    }

    // cost_t = −𝒯 Σ_{t'<t} S_{t'} − 𝒯 Σ_{t'≤t} log p_{t'} + H(X_0)
    let mut cost = vec![0.0; m * t_max];
    let mut objective = 0.0;
    for p in 0..m {
        let base = p * t_max;
        let mut acc = energies_x0[p];
        for t in 1..=t_max {
            acc -= temp * log_p[base + t - 1];
            cost[base + t - 1] = acc;
            acc -= temp * ent[base + t - 1];
        }
        let path_obj: f64 = (0..t_max)
            .map(|k| temp * (lq[base + k] - log_p[base + k]))
            .sum::<f64>()
            + energies_x0[p];
        objective += weights[p] * path_obj;
    }

    let mut score_coeff = vec![0.0; m * t_max];
    for t in 0..t_max {
        let total: f64 = (0..m).map(|p| cost[p * t_max + t]).sum();
        for p in 0..m {
            let c = cost[p * t_max + t];
            let b = if opts.baseline && m > 1 {
                (total - c) / (m - 1) as f64
            } else {
                0.0
            };
            score_coeff[p * t_max + t] = weights[p] * (c - b);
        }
    }
    let ent_coeff: Vec<f64> = picks.iter().map(|&(p, _)| -temp * weights[p]).collect();

    let score = tape.dot(logq, score_coeff);
    let ent_term = tape.dot(entropy, ent_coeff);
    let surrogate = tape.add(score, ent_term);
    if !objective.is_finite() || !tape.scalar(surrogate).is_finite() {
        return Err(Error::NonFinite("diffuco loss".into()));
    }
    Ok(LossGrad {
        loss: objective,
        grad: tape.backward(surrogate, theta.len()),
        activations: tape.activation_elements(),
        records: rows.len(),
    })
}
