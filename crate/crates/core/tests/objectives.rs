mod common;

use common::*;

use sdds::diffusion::{sample_reverse_paths, NoiseSchedule};
use sdds::energy::{BoltzmannTarget, EnergyModel, QuboInstance};
use sdds::nets::{Architecture, Network};
use sdds::objectives::diffuco::{diffuco_loss_grad, DiffucoOptions};
use sdds::objectives::fkl::{fkl_mc_loss_grad, log_importance_weights};
use sdds::unbiased::snis::normalize_log_weights;

/// Fourth-order central differences, accurate enough for 1e−8 comparisons.
fn numeric_grad4(theta: &[f64], h: f64, f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut th = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let mut at = |d: f64| {
                th[i] = theta[i] + d;
                let v = f(&th);
                th[i] = theta[i];
                v
            };
            (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
        })
        .collect()
}

fn path_prob(p: &sdds::diffusion::DiffusionPath) -> f64 {
    (p.prior_logq + p.step_logq.iter().sum::<f64>()).exp()
}

#[test]
fn diffuco_estimator_mean_is_the_exact_gradient() {
    for seed in [0u64, 2, 4, 6] {
        let mut c = small_case(seed, 2, 2);
        // pin N = 2, T = 2 while keeping the random network and target
        if c.target.n_bits() != 2 || c.schedule.n_steps() != 2 {
            let model = EnergyModel::Qubo(
                QuboInstance::from_terms(2, [(0, 0, 0.4), (0, 1, -1.1), (1, 1, 0.3)], 1.0, 1.1)
                    .unwrap(),
            );
            c.target = BoltzmannTarget::new(model, 0.8).unwrap();
            c.schedule = NoiseSchedule::from_betas(vec![0.2, 0.45]).unwrap();
            c.net = Network::new(Architecture::Mlp {
                n_bits: 2,
                hidden: 5,
                layers: 2,
                value_head: false,
            })
            .unwrap();
            c.theta = c.net.random_params(seed, 0.8);
        }
        let policy = c.net.policy(&c.theta, None).unwrap();
        let paths = enumerate_paths(&policy, &c.schedule);
        let probs: Vec<f64> = paths.iter().map(path_prob).collect();
        let energies: Vec<f64> = paths
            .iter()
            .map(|p| c.target.model.energy(p.x0()).unwrap())
            .collect();
        let opts = DiffucoOptions {
            temperature: 1.0 / c.target.beta,
            path_weights: Some(&probs),
            baseline: false,
        };
        let est = diffuco_loss_grad(
            &c.net,
            &c.theta,
            None,
            &c.schedule,
            &paths,
            &energies,
            &opts,
        )
        .unwrap();
        let log_z = log_partition(&c.target);
        let exact = numeric_grad4(&c.theta, 1e-3, &|th| {
            let pol = c.net.policy(th, None).unwrap();
            exact_scaled_rkl(
                &enumerate_paths(&pol, &c.schedule),
                &c.schedule,
                &c.target,
                log_z,
            )
        });
        let err = norm_rel_err(&est.grad, &exact);
        assert!(err < 1e-8, "seed {seed}: relative error {err}");
    }
}

#[test]
fn on_policy_score_has_zero_mean() {
    for seed in 0..6 {
        let c = small_case(40 + seed, 3, 2);
        let policy = c.net.policy(&c.theta, c.graph.as_ref()).unwrap();
        let paths = enumerate_paths(&policy, &c.schedule);
        let probs: Vec<f64> = paths.iter().map(path_prob).collect();
        let t_max = c.schedule.n_steps();
        for t in 1..=t_max {
            let picks: Vec<(usize, usize)> = (0..paths.len()).map(|p| (p, t)).collect();
            let g = fkl_mc_loss_grad(&c.net, &c.theta, c.graph.as_ref(), &paths, &probs, &picks)
                .unwrap();
            // scale of the individual score terms
            let single = fkl_mc_loss_grad(
                &c.net,
                &c.theta,
                c.graph.as_ref(),
                &paths,
                &vec![1.0; paths.len()],
                &picks[..1],
            )
            .unwrap();
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(
                norm(&g.grad) < 1e-12 * norm(&single.grad).max(1.0),
                "seed {seed}, t {t}"
            );
        }
    }
}

#[test]
fn perfect_proposal_fkl_gradient_vanishes_at_root_m_rate() {
    // T = 1 with β_1 = 0.5 makes X_1 uniform, so a product target is matched
    // exactly by output biases set to the marginal logits.
    let fields = [0.7, -0.4];
    let model = EnergyModel::Qubo(
        QuboInstance::from_terms(2, [(0, 0, fields[0]), (1, 1, fields[1])], 1.0, 1.1).unwrap(),
    );
    let beta = 1.3;
    let target = BoltzmannTarget::new(model, beta).unwrap();
    let schedule = NoiseSchedule::from_betas(vec![0.5]).unwrap();
    let net = Network::new(Architecture::Mlp {
        n_bits: 2,
        hidden: 6,
        layers: 2,
        value_head: false,
    })
    .unwrap();
    let mut theta = net.init_params(3);
    let n = theta.len();
    for (i, h) in fields.iter().enumerate() {
        // p(x_i = 1) ∝ exp(−β h_i)
        theta[n - 2 + i] = -beta * h;
    }
    let policy = net.policy(&theta, None).unwrap();

    let mean_norm = |m: usize| {
        let reps = 20;
        let mut total = 0.0;
        for r in 0..reps {
            let paths = sample_reverse_paths(&policy, &schedule, m, 1000 * m as u64 + r, 0)
                .unwrap()
                .paths;
            let lw = log_importance_weights(&target, &schedule, &paths).unwrap();
            let spread = lw.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
                - lw.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            assert!(spread < 1e-12, "weights are not uniform");
            let w = normalize_log_weights(&lw).unwrap();
            let picks: Vec<(usize, usize)> = (0..m).map(|p| (p, 1)).collect();
            let g = fkl_mc_loss_grad(&net, &theta, None, &paths, &w, &picks).unwrap();
            total += g.grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
        total / reps as f64
    };
    let (a, b, c) = (mean_norm(100), mean_norm(1000), mean_norm(10_000));
    for (big, small) in [(a, b), (b, c)] {
        let ratio = big / small;
        assert!((ratio - 10f64.sqrt()).abs() < 1.0, "norm ratio {ratio}");
    }
}
