//! Forward-KL gradient from self-normalized importance weights, estimated
//! on minibatches of diffusion steps.

use std::collections::BTreeMap;

use crate::diffusion::{path_log_p_hat, DiffusionPath, NoiseSchedule};
use crate::energy::BoltzmannTarget;
use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::nets::{Network, Tape};
use crate::objectives::{LossGrad, StepRows};

/// `log ŵ_i = log p̂(X^i_{0:T}) − log q_old(X^i_{0:T})`, with `q_old` taken
/// from the logs stored when the paths were sampled.
pub fn log_importance_weights(
    target: &BoltzmannTarget,
    schedule: &NoiseSchedule,
    paths: &[DiffusionPath],
) -> Result<Vec<f64>> {
    paths
        .iter()
        .map(|p| {
            let lw = path_log_p_hat(target, schedule, p)? - p.log_q();
            if lw.is_nan() || lw == f64::INFINITY {
                return Err(Error::NonFinite("importance log-weight".into()));
            }
            Ok(lw)
        })
        .collect()
}

/// `−Σ_i (T / |τ_i|) w_i Σ_{t∈τ_i} log q_θ(X^i_{t−1} | X^i_t)` and its
/// gradient. `weights[i]` belongs to `paths[i]`; `picks` lists the sampled
/// `(path, t)` pairs. With every step of every path picked this is the
/// gradient of `−Σ_i w_i log q_θ(X^i_{0:T})`.
pub fn fkl_mc_loss_grad(
    net: &Network,
    theta: &[f64],
    graph: Option<&Graph>,
    paths: &[DiffusionPath],
    weights: &[f64],
    picks: &[(usize, usize)],
) -> Result<LossGrad> {
    if picks.is_empty() {
        return Ok(LossGrad::zeros(theta.len()));
    }
    let mut per_path: BTreeMap<usize, usize> = BTreeMap::new();
    for &(p, _) in picks {
        *per_path.entry(p).or_default() += 1;
    }
    let coeff: Vec<f64> = picks
        .iter()
        .map(|&(p, _)| -(paths[p].n_steps() as f64) * weights[p] / per_path[&p] as f64)
        .collect();

    let rows = StepRows::gather(paths, picks);
    let mut tape = Tape::new();
    let (logq, _) = rows.record(net, &mut tape, theta, graph, false)?;
    let loss = tape.dot(logq, coeff);
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(Error::NonFinite("fKL loss".into()));
    }
    Ok(LossGrad {
        loss: value,
        grad: tape.backward(loss, theta.len()),
        activations: tape.activation_elements(),
        records: rows.len(),
    })
}

#[cfg(test)]
mod tests {
    use crate::unbiased::snis::normalize_log_weights;

    #[test]
    fn softmax_of_two() {
        let w = normalize_log_weights(&[0.0, 3f64.ln()]).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15);
    }
}
