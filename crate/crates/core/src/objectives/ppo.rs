//! Reverse KL as an episodic control problem solved with PPO.
//!
//! An episode runs backwards in diffusion time: in state `X_t` the action
//! draws `X_{t−1}` and earns `R_t`. The terminal state `X_0` has value 0.

use serde::{Deserialize, Serialize};

use crate::diffusion::{forward_kernel_logprob, DiffusionPath, NoiseSchedule};
use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::nets::{Network, Tape};
use crate::objectives::{LossGrad, StepRows};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    /// Clip range `κ` of the probability ratio.
    pub kappa: f64,
    /// Weight `c1` of the value loss.
    pub c1: f64,
    /// Trace decay `λ` of the returns.
    pub lambda: f64,
    /// Moving-average rate `α` of the reward statistics.
    pub alpha: f64,
    /// Discount; only 1 is supported.
    pub gamma: f64,
    pub epochs_per_buffer: usize,
    pub normalize_rewards: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            kappa: 0.2,
            c1: 0.5,
            lambda: 0.95,
            alpha: 0.01,
            gamma: 1.0,
            epochs_per_buffer: 2,
            normalize_rewards: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("ppo: {m}")));
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return bad("kappa must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.c1) {
            return bad("c1 must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if self.gamma != 1.0 {
            return bad("gamma is fixed to 1");
        }
        if self.epochs_per_buffer == 0 {
            return bad("epochs_per_buffer must be ≥ 1");
        }
        Ok(())
    }
}

/// `R_t = 𝒯 [log p(X_t | X_{t−1}) − log q(X_{t−1} | X_t)]`, with `−H(X_0)`
/// added at `t = 1`. Index `t − 1` holds `R_t`.
pub fn rl_rewards(
    path: &DiffusionPath,
    schedule: &NoiseSchedule,
    energy_x0: f64,
    temperature: f64,
) -> Result<Vec<f64>> {
    let mut r = Vec::with_capacity(path.n_steps());
    for t in 1..=path.n_steps() {
        let lp = forward_kernel_logprob(path.state(t), path.state(t - 1), schedule.beta(t))?;
        r.push(if temperature == 0.0 {
            0.0
        } else {
            temperature * (lp - path.step_logq[t - 1])
        });
    }
    r[0] -= energy_x0;
    Ok(r)
}

/// Exponential moving estimates of the reward mean and variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardNormalizer {
    pub mean: f64,
    pub var: f64,
    pub initialized: bool,
}

impl Default for RewardNormalizer {
    fn default() -> Self {
        Self {
            mean: 0.0,
            var: 1.0,
            initialized: false,
        }
    }
}

impl RewardNormalizer {
    /// The first batch sets the statistics; later batches blend in with
    /// rate `alpha`.
    pub fn update(&mut self, rewards: &[f64], alpha: f64) {
        if rewards.is_empty() {
            return;
        }
        let n = rewards.len() as f64;
        let m = rewards.iter().sum::<f64>() / n;
        let v = rewards.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / n;
        if self.initialized {
            self.mean = (1.0 - alpha) * self.mean + alpha * m;
            self.var = (1.0 - alpha) * self.var + alpha * v;
        } else {
            self.mean = m;
            self.var = v;
            self.initialized = true;
        }
    }

    pub fn apply(&self, r: f64) -> f64 {
        (r - self.mean) / self.var.sqrt().max(1e-8)
    }
}

/// λ-returns with `γ = 1`: `G_t = R_t + (1 − λ) V(X_{t−1}) + λ G_{t−1}`,
/// `G_0 = 0`. `rewards[t−1] = R_t`, `values[t] = V(X_t)` with
/// `values[0] = V(X_0) = 0`.
pub fn td_lambda_returns(rewards: &[f64], values: &[f64], lambda: f64) -> Vec<f64> {
    assert_eq!(values.len(), rewards.len() + 1, "values cover X_0..X_T");
    let mut g = vec![0.0; rewards.len()];
    let mut prev = 0.0;
    for t in 1..=rewards.len() {
        let v_next = if t == 1 { 0.0 } else { values[t - 1] };
        prev = rewards[t - 1] + (1.0 - lambda) * v_next + lambda * prev;
        g[t - 1] = prev;
    }
    g
}

/// Zero mean and unit variance; only centered when the variance is below
/// `1e−12`.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let m = adv.iter().sum::<f64>() / n;
    let v = adv.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n;
    let s = if v < 1e-12 { 1.0 } else { v.sqrt() };
    for a in adv.iter_mut() {
        *a = (*a - m) / s;
    }
}

/// Paths collected under `θ_old` with their returns and advantages.
#[derive(Clone, Debug)]
pub struct TrajectoryBuffer {
    pub paths: Vec<DiffusionPath>,
    /// Per path, `R_t` at index `t − 1` (after normalization, if enabled).
    pub rewards: Vec<Vec<f64>>,
    /// Per path, `V_old(X_t)` at index `t`.
    pub values: Vec<Vec<f64>>,
    pub returns: Vec<Vec<f64>>,
    pub advantages: Vec<Vec<f64>>,
}

impl TrajectoryBuffer {
    pub fn new(
        paths: Vec<DiffusionPath>,
        rewards: Vec<Vec<f64>>,
        values: Vec<Vec<f64>>,
        lambda: f64,
    ) -> Self {
        let returns: Vec<Vec<f64>> = rewards
            .iter()
            .zip(&values)
            .map(|(r, v)| td_lambda_returns(r, v, lambda))
            .collect();
        let mut flat: Vec<f64> = returns
            .iter()
            .zip(&values)
            .flat_map(|(g, v)| g.iter().enumerate().map(move |(k, g)| g - v[k + 1]))
            .collect();
        normalize_advantages(&mut flat);
        let t = paths.first().map_or(0, DiffusionPath::n_steps);
        let advantages = flat.chunks(t.max(1)).map(<[f64]>::to_vec).collect();
        Self {
            paths,
            rewards,
            values,
            returns,
            advantages,
        }
    }
}

/// Evaluates `V_old(X_t)` for `t = 1..T` on every path; `V(X_0) = 0`.
pub fn path_values(
    net: &Network,
    theta: &[f64],
    graph: Option<&Graph>,
    paths: &[DiffusionPath],
) -> Result<Vec<Vec<f64>>> {
    let t_max = paths.first().map_or(0, DiffusionPath::n_steps);
    let picks: Vec<(usize, usize)> = (0..paths.len())
        .flat_map(|p| (1..=t_max).map(move |t| (p, t)))
        .collect();
    if picks.is_empty() {
        return Ok(vec![vec![0.0]; paths.len()]);
    }
    let rows = StepRows::gather(paths, &picks);
    let v = net.values(theta, &rows.states, &rows.times, graph)?;
    Ok(v.chunks(t_max)
        .map(|c| std::iter::once(0.0).chain(c.iter().copied()).collect())
        .collect())
}

/// Per-row inputs of the clipped surrogate.
#[derive(Clone, Debug)]
pub struct PpoRows {
    pub picks: Vec<(usize, usize)>,
    pub old_logq: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Row weights of the averages; `1/R` for a plain minibatch mean.
    pub weights: Vec<f64>,
}

impl PpoRows {
    pub fn from_buffer(buf: &TrajectoryBuffer, picks: &[(usize, usize)]) -> Self {
        let w = 1.0 / picks.len().max(1) as f64;
        Self {
            picks: picks.to_vec(),
            old_logq: picks
                .iter()
                .map(|&(p, t)| buf.paths[p].step_logq[t - 1])
                .collect(),
            advantages: picks
                .iter()
                .map(|&(p, t)| buf.advantages[p][t - 1])
                .collect(),
            returns: picks.iter().map(|&(p, t)| buf.returns[p][t - 1]).collect(),
            weights: vec![w; picks.len()],
        }
    }
}

/// `−(1 − c1) Σ w_r min(r Â, clip(r, 1 − κ, 1 + κ) Â) + c1 Σ w_r ½ (V − G)²`.
/// The value head is skipped when `c1 = 0`.
pub fn ppo_loss_grad(
    net: &Network,
    theta: &[f64],
    graph: Option<&Graph>,
    paths: &[DiffusionPath],
    rows: &PpoRows,
    kappa: f64,
    c1: f64,
) -> Result<LossGrad> {
    if rows.picks.is_empty() {
        return Ok(LossGrad::zeros(theta.len()));
    }
    let steps = StepRows::gather(paths, &rows.picks);
    let mut tape = Tape::new();
    let (logq, value) = steps.record(net, &mut tape, theta, graph, c1 > 0.0)?;
    if let Some(i) = tape
        .value(logq)
        .iter()
        .zip(&rows.old_logq)
        .position(|(n, o)| !(n - o).is_finite())
    {
        return Err(Error::NonFinite(format!("probability ratio of row {i}")));
    }
    let surrogate = tape.ppo_clip(logq, &rows.old_logq, &rows.advantages, kappa);
    let policy_w: Vec<f64> = rows.weights.iter().map(|w| -(1.0 - c1) * w).collect();
    let mut loss = tape.dot(surrogate, policy_w);
    if let Some(v) = value {
        let err = tape.half_sq_err(v, &rows.returns);
        let value_w: Vec<f64> = rows.weights.iter().map(|w| c1 * w).collect();
        let vl = tape.dot(err, value_w);
        loss = tape.add(loss, vl);
    }
    let l = tape.scalar(loss);
    if !l.is_finite() {
        return Err(Error::NonFinite("PPO loss".into()));
    }
    Ok(LossGrad {
        loss: l,
        grad: tape.backward(loss, theta.len()),
        activations: tape.activation_elements(),
        records: steps.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{sample_reverse_paths, ConstantPolicy, KernelMatchedPolicy};
    use crate::nets::Architecture;
    use proptest::prelude::*;

    #[test]
    fn zero_temperature_rewards() {
        let s = NoiseSchedule::exponential(4).unwrap();
        let pol = ConstantPolicy { n_bits: 3, q: 0.3 };
        let b = sample_reverse_paths(&pol, &s, 1, 0, 0).unwrap();
        let r = rl_rewards(&b.paths[0], &s, 2.5, 0.0).unwrap();
        assert_eq!(r, vec![-2.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn kernel_matched_rewards_cancel() {
        let s = NoiseSchedule::exponential(5).unwrap();
        let pol = KernelMatchedPolicy {
            n_bits: 4,
            schedule: s.clone(),
        };
        let b = sample_reverse_paths(&pol, &s, 3, 1, 0).unwrap();
        for p in &b.paths {
            let r = rl_rewards(p, &s, -1.0, 0.7).unwrap();
            assert!((r[0] - 1.0).abs() < 1e-12);
            assert!(r[1..].iter().all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn single_step_reward_by_hand() {
        let s = NoiseSchedule::from_betas(vec![0.2]).unwrap();
        let mut p = DiffusionPath::from_states(vec![vec![1], vec![0]], vec![0.4f64.ln()]).unwrap();
        p.prior_logq = 0.5f64.ln();
        let r = rl_rewards(&p, &s, 0.3, 2.0).unwrap();
        assert!((r[0] - (2.0 * (0.2f64.ln() - 0.4f64.ln()) - 0.3)).abs() < 1e-14);
    }

    #[test]
    fn lambda_limits() {
        let r = [1.0, -2.0, 0.5, 3.0];
        let v = [0.0, 0.3, -0.1, 0.7, 1.1];
        let mc = td_lambda_returns(&r, &v, 1.0);
        assert_eq!(mc, vec![1.0, -1.0, -0.5, 2.5]);
        let one = td_lambda_returns(&r, &v, 0.0);
        for t in 1..=4 {
            let boot = if t == 1 { 0.0 } else { v[t - 1] };
            assert!((one[t - 1] - (r[t - 1] + boot)).abs() < 1e-15);
        }
    }

    #[test]
    fn lambda_half_constant_rewards() {
        // n-step returns G^(1..3) = r, 2r, 3r for the first action of a
        // three-step episode: (1−λ)(G1 + λ G2) + λ² G3
        let r = 1.3;
        let g = td_lambda_returns(&[r; 3], &[0.0; 4], 0.5);
        let expected = 0.5 * (r + 0.5 * 2.0 * r) + 0.25 * 3.0 * r;
        assert!((g[2] - expected).abs() < 1e-15);
        assert!((g[2] - 1.75 * r).abs() < 1e-15);
    }

    #[test]
    fn normalizer_statistics() {
        let mut n = RewardNormalizer::default();
        n.update(&[1.0, 3.0], 0.5);
        assert_eq!((n.mean, n.var), (2.0, 1.0));
        n.update(&[4.0, 4.0], 0.5);
        assert_eq!((n.mean, n.var), (3.0, 0.5));
        assert!((n.apply(3.0 + 0.5f64.sqrt()) - 1.0).abs() < 1e-12);
        let flat = RewardNormalizer {
            mean: 0.0,
            var: 0.0,
            initialized: true,
        };
        assert!(flat.apply(1e-9).is_finite());
    }

    #[test]
    fn advantages_are_normalized() {
        let mut a = vec![1.0, 2.0, 3.0, 10.0];
        normalize_advantages(&mut a);
        let m: f64 = a.iter().sum::<f64>() / 4.0;
        let v: f64 = a.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        let mut c = vec![2.0; 3];
        normalize_advantages(&mut c);
        assert_eq!(c, vec![0.0; 3]);
    }

    #[test]
    fn clipped_branch_has_no_policy_gradient() {
        let net = Network::new(Architecture::Mlp {
            n_bits: 2,
            hidden: 4,
            layers: 1,
            value_head: false,
        })
        .unwrap();
        let theta = net.random_params(3, 1.0);
        let s = NoiseSchedule::exponential(2).unwrap();
        let pol = net.policy(&theta, None).unwrap();
        let b = sample_reverse_paths(&pol, &s, 1, 0, 0).unwrap();
        let current = b.paths[0].step_logq[0];
        let rows = |old: f64| PpoRows {
            picks: vec![(0, 1)],
            old_logq: vec![old],
            advantages: vec![1.0],
            returns: vec![0.0],
            weights: vec![1.0],
        };
        // r = e^{0.5} > 1 + κ with Â > 0: flat
        let clipped =
            ppo_loss_grad(&net, &theta, None, &b.paths, &rows(current - 0.5), 0.2, 0.0).unwrap();
        assert!(clipped.grad.iter().all(|g| *g == 0.0));
        // r = 1: both branches agree and the gradient is −Â ∇log q
        let fresh = ppo_loss_grad(&net, &theta, None, &b.paths, &rows(current), 0.2, 0.0).unwrap();
        assert!((fresh.loss + 1.0).abs() < 1e-12);
        assert!(fresh.grad.iter().any(|g| *g != 0.0));
    }

    proptest! {
        #[test]
        fn advantage_normalization_is_scale_invariant(
            rewards in proptest::collection::vec(-5.0f64..5.0, 12),
            values in proptest::collection::vec(-3.0f64..3.0, 12),
            c in 0.01f64..100.0,
        ) {
            let s = NoiseSchedule::exponential(3).unwrap();
            let pol = ConstantPolicy { n_bits: 1, q: 0.5 };
            let paths = sample_reverse_paths(&pol, &s, 4, 0, 0).unwrap().paths;
            let split = |v: &[f64], scale: f64, pad: bool| -> Vec<Vec<f64>> {
                v.chunks(3).map(|c| {
                    let mut row: Vec<f64> = c.iter().map(|x| x * scale).collect();
                    if pad { row.insert(0, 0.0); }
                    row
                }).collect()
            };
            let a = TrajectoryBuffer::new(paths.clone(), split(&rewards, 1.0, false), split(&values, 1.0, true), 0.9);
            let b = TrajectoryBuffer::new(paths, split(&rewards, c, false), split(&values, c, true), 0.9);
            for (x, y) in a.advantages.iter().flatten().zip(b.advantages.iter().flatten()) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }
}
