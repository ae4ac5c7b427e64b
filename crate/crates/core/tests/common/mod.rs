//! Shared oracles for integration and acceptance tests: exhaustive path
//! enumeration, exact reverse KL and central differences.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdds::diffusion::{path_log_forward, path_step_logq, DiffusionPath, NoiseSchedule, Policy};
use sdds::energy::{BoltzmannTarget, CoInstance, CoProblem, EnergyModel, QuboInstance};
use sdds::graphs::Graph;
use sdds::nets::{Architecture, Network, Tape};
use sdds::objectives::ppo::{ppo_loss_grad, rl_rewards, td_lambda_returns, PpoRows};
use sdds::state::index_to_bits;

/// Central differences of `f` at `theta` with step `h`.
pub fn numeric_grad(theta: &[f64], h: f64, f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut th = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            th[i] = theta[i] + h;
            let up = f(&th);
            th[i] = theta[i] - h;
            let down = f(&th);
            th[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest entrywise `|a − b| / max(|a|, |b|, floor)`.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// `‖a − b‖ / ‖b‖`.
pub fn norm_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let n: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    d / n.max(1e-300)
}

/// Every `(X_0, …, X_T)` with `N` bits per state, as `DiffusionPath`s whose
/// step log-probabilities come from `policy`.
pub fn enumerate_paths<P: Policy + ?Sized>(
    policy: &P,
    schedule: &NoiseSchedule,
) -> Vec<DiffusionPath> {
    let n = policy.n_bits();
    let t_max = schedule.n_steps();
    let total_bits = n * (t_max + 1);
    assert!(total_bits <= 20, "too many paths to enumerate");
    (0..1u64 << total_bits)
        .map(|idx| {
            let mut flat = vec![0u8; total_bits];
            index_to_bits(idx, &mut flat);
            let states: Vec<Vec<u8>> = flat.chunks(n).map(<[u8]>::to_vec).collect();
            let mut path = DiffusionPath::from_states(states, vec![0.0; t_max]).unwrap();
            path.step_logq = path_step_logq(policy, schedule, &path).unwrap();
            path
        })
        .collect()
}

/// Exact `𝒯 · KL(q_θ(X_{0:T}) ‖ p(X_{0:T}))` with `β = 1/𝒯`, summed over all
/// paths. `log_z` is the enumerated log partition sum of the target.
pub fn exact_scaled_rkl(
    paths: &[DiffusionPath],
    schedule: &NoiseSchedule,
    target: &BoltzmannTarget,
    log_z: f64,
) -> f64 {
    let temp = 1.0 / target.beta;
    paths
        .iter()
        .map(|p| {
            let log_q = p.prior_logq + p.step_logq.iter().sum::<f64>();
            let log_p = target.log_unnormalized(p.x0()).unwrap() - log_z
                + path_log_forward(schedule, p).unwrap();
            temp * log_q.exp() * (log_q - log_p)
        })
        .sum()
}

pub fn log_partition(target: &BoltzmannTarget) -> f64 {
    let n = target.n_bits();
    let mut x = vec![0u8; n];
    let logs: Vec<f64> = (0..1u64 << n)
        .map(|i| {
            index_to_bits(i, &mut x);
            target.log_unnormalized(&x).unwrap()
        })
        .collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

/// Exact expectation of the policy-gradient estimator
/// `−Σ_t ∇ log q_θ(X_{t−1}|X_t) Q_t`, `Q_t = Σ_{t' ≤ t} R_{t'}`, taken over all
/// enumerated paths. Evaluated through the on-policy clipped surrogate
/// (ratio 1) with path-probability row weights, λ = 1 and no value head.
pub fn exact_policy_gradient(
    net: &Network,
    theta: &[f64],
    graph: Option<&Graph>,
    schedule: &NoiseSchedule,
    target: &BoltzmannTarget,
    paths: &[DiffusionPath],
) -> Vec<f64> {
    let temp = 1.0 / target.beta;
    let t_max = schedule.n_steps();
    let mut rows = PpoRows {
        picks: Vec::new(),
        old_logq: Vec::new(),
        advantages: Vec::new(),
        returns: Vec::new(),
        weights: Vec::new(),
    };
    for (k, p) in paths.iter().enumerate() {
        let h = target.model.energy(p.x0()).unwrap();
        let r = rl_rewards(p, schedule, h, temp).unwrap();
        let q = td_lambda_returns(&r, &vec![0.0; t_max + 1], 1.0);
        let prob = (p.prior_logq + p.step_logq.iter().sum::<f64>()).exp();
        for t in 1..=t_max {
            rows.picks.push((k, t));
            rows.old_logq.push(p.step_logq[t - 1]);
            rows.advantages.push(q[t - 1]);
            rows.returns.push(0.0);
            rows.weights.push(prob);
        }
    }
    ppo_loss_grad(net, theta, graph, paths, &rows, 0.2, 0.0)
        .unwrap()
        .grad
}

/// A random small instance: an MLP on a random QUBO, or a GNN on MIS over a
/// random graph.
pub struct SmallCase {
    pub net: Network,
    pub theta: Vec<f64>,
    pub graph: Option<Graph>,
    pub target: BoltzmannTarget,
    pub schedule: NoiseSchedule,
}

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.6) {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, edges).unwrap()
}

pub fn small_case(seed: u64, max_bits: usize, max_steps: usize) -> SmallCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_bits);
    let t_max = rng.random_range(1..=max_steps);
    let beta = rng.random_range(0.3..2.0);
    let betas: Vec<f64> = (0..t_max).map(|_| rng.random_range(0.05..0.5)).collect();
    let schedule = NoiseSchedule::from_betas(betas).unwrap();
    let hidden = rng.random_range(3..=6);
    if seed.is_multiple_of(2) {
        let mut terms = Vec::new();
        for i in 0..n {
            for j in i..n {
                terms.push((i, j, rng.random_range(-1.5..1.5)));
            }
        }
        let model = EnergyModel::Qubo(QuboInstance::from_terms(n, terms, 1.0, 1.1).unwrap());
        let net = Network::new(Architecture::Mlp {
            n_bits: n,
            hidden,
            layers: 2,
            value_head: false,
        })
        .unwrap();
        let theta = net.random_params(seed, 0.8);
        SmallCase {
            net,
            theta,
            graph: None,
            target: BoltzmannTarget::new(model, beta).unwrap(),
            schedule,
        }
    } else {
        let g = random_graph(&mut rng, n);
        let model = EnergyModel::Co(CoInstance::new(CoProblem::Mis, g.clone()));
        let net = Network::new(Architecture::Gnn {
            hidden,
            layers: 2,
            value_head: false,
        })
        .unwrap();
        let theta = net.random_params(seed, 0.8);
        SmallCase {
            net,
            theta,
            graph: Some(g),
            target: BoltzmannTarget::new(model, beta).unwrap(),
            schedule,
        }
    }
}

/// Analytic versus central-difference gradient of a random scalar built from
/// policy log-probabilities and value outputs of a random network. Returns
/// the largest entrywise relative error.
pub fn network_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let gnn = seed % 2 == 1;
    let hidden = rng.random_range(3..=8);
    let layers = rng.random_range(1..=3);
    let n = rng.random_range(2..=6);
    let arch = if gnn {
        Architecture::Gnn {
            hidden,
            layers,
            value_head: true,
        }
    } else {
        Architecture::Mlp {
            n_bits: n,
            hidden,
            layers,
            value_head: true,
        }
    };
    let graph = gnn.then(|| random_graph(&mut rng, n));
    let net = Network::new(arch).unwrap();
    let theta = net.random_params(seed, 0.7);
    let rows = 3;
    let states: Vec<u8> = (0..rows * n).map(|_| rng.random_range(0..2)).collect();
    let next: Vec<u8> = (0..rows * n).map(|_| rng.random_range(0..2)).collect();
    let times: Vec<f64> = (0..rows).map(|_| rng.random_range(0.0..1.0)).collect();
    let w: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
    let targets: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
    let build = |tape: &mut Tape, th: &[f64]| {
        let out = net
            .forward(tape, th, &states, &times, graph.as_ref(), true)
            .unwrap();
        let lq = tape.bernoulli_logprob(out.logits, next.clone());
        let a = tape.dot(lq, w.clone());
        let ent = tape.bernoulli_entropy(out.logits);
        let b = tape.dot(ent, w.clone());
        let err = tape.half_sq_err(out.value.unwrap(), &targets);
        let c = tape.dot(err, vec![0.5; rows]);
        let ab = tape.add(a, b);
        tape.add(ab, c)
    };
    let mut tape = Tape::new();
    let root = build(&mut tape, &theta);
    let analytic = tape.backward(root, theta.len());
    let numeric = numeric_grad(&theta, 1e-5, &|th| {
        let mut t = Tape::new();
        let r = build(&mut t, th);
        t.scalar(r)
    });
    max_rel_err(&analytic, &numeric, 1e-6)
}
