mod common;

use common::*;
use proptest::prelude::*;

use sdds::diffusion::{forward_kernel_logprob, sample_reverse_paths, NoiseSchedule};
use sdds::energy::{BoltzmannTarget, EnergyModel, IsingLattice2D};
use sdds::enumerate::enumerate_observables;
use sdds::nets::Tape;
use sdds::objectives::fkl::{fkl_mc_loss_grad, log_importance_weights};
use sdds::objectives::StepRows;
use sdds::state::index_to_bits;
use sdds::unbiased::snis::normalize_log_weights;

#[test]
fn network_gradients_match_central_differences() {
    for seed in 0..20 {
        let err = network_gradient_error(seed);
        assert!(err < 1e-4, "seed {seed}: max relative error {err}");
    }
}

#[test]
fn policy_gradient_matches_exact_rkl_derivative() {
    for seed in 0..10 {
        let c = small_case(seed, 3, 2);
        let log_z = log_partition(&c.target);
        let policy = c.net.policy(&c.theta, c.graph.as_ref()).unwrap();
        let paths = enumerate_paths(&policy, &c.schedule);
        let pg = exact_policy_gradient(
            &c.net,
            &c.theta,
            c.graph.as_ref(),
            &c.schedule,
            &c.target,
            &paths,
        );
        let fd = numeric_grad(&c.theta, 1e-4, &|th| {
            let pol = c.net.policy(th, c.graph.as_ref()).unwrap();
            exact_scaled_rkl(
                &enumerate_paths(&pol, &c.schedule),
                &c.schedule,
                &c.target,
                log_z,
            )
        });
        let err = norm_rel_err(&pg, &fd);
        assert!(err < 1e-5, "seed {seed}: relative error {err}");
    }
}

#[test]
fn fkl_full_batch_equals_weighted_likelihood_gradient() {
    for seed in 0..6 {
        let c = small_case(seed, 4, 4);
        let policy = c.net.policy(&c.theta, c.graph.as_ref()).unwrap();
        let batch = sample_reverse_paths(&policy, &c.schedule, 12, seed, 0).unwrap();
        let paths = batch.paths;
        let w =
            normalize_log_weights(&log_importance_weights(&c.target, &c.schedule, &paths).unwrap())
                .unwrap();
        let t_max = c.schedule.n_steps();
        let all: Vec<(usize, usize)> = (0..paths.len())
            .flat_map(|p| (1..=t_max).map(move |t| (p, t)))
            .collect();
        let full = fkl_mc_loss_grad(&c.net, &c.theta, c.graph.as_ref(), &paths, &w, &all).unwrap();

        // one tape per path: −w_i ∇ Σ_t log q(X_{t−1}|X_t)
        let mut direct = vec![0.0; c.theta.len()];
        for (i, wi) in w.iter().enumerate() {
            let picks: Vec<(usize, usize)> = (1..=t_max).map(|t| (i, t)).collect();
            let rows = StepRows::gather(&paths, &picks);
            let mut tape = Tape::new();
            let (lq, _) = rows
                .record(&c.net, &mut tape, &c.theta, c.graph.as_ref(), false)
                .unwrap();
            let s = tape.sum_all(lq);
            for (d, g) in direct.iter_mut().zip(tape.backward(s, c.theta.len())) {
                *d -= wi * g;
            }
        }
        assert!(
            max_rel_err(&full.grad, &direct, 1e-8) < 1e-10,
            "seed {seed}"
        );

        let mut avg = vec![0.0; c.theta.len()];
        for t in 1..=t_max {
            let picks: Vec<(usize, usize)> = (0..paths.len()).map(|p| (p, t)).collect();
            let g =
                fkl_mc_loss_grad(&c.net, &c.theta, c.graph.as_ref(), &paths, &w, &picks).unwrap();
            for (a, b) in avg.iter_mut().zip(g.grad) {
                *a += b / t_max as f64;
            }
        }
        assert!(max_rel_err(&avg, &full.grad, 1e-6) < 1e-8, "seed {seed}");
    }
}

#[test]
fn path_likelihoods_are_normalized() {
    for seed in 0..8 {
        let c = small_case(seed, 4, 3);
        let policy = c.net.policy(&c.theta, c.graph.as_ref()).unwrap();
        let paths = enumerate_paths(&policy, &c.schedule);
        let total: f64 = paths
            .iter()
            .map(|p| (p.prior_logq + p.step_logq.iter().sum::<f64>()).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-10, "seed {seed}: Σ q = {total}");
    }
}

#[test]
fn forward_kernel_is_normalized() {
    for n in 1..=4 {
        for beta in [1e-3, 0.1, 0.37, 0.5] {
            let mut prev = vec![0u8; n];
            let mut next = vec![0u8; n];
            for a in 0..1u64 << n {
                index_to_bits(a, &mut prev);
                let s: f64 = (0..1u64 << n)
                    .map(|b| {
                        index_to_bits(b, &mut next);
                        forward_kernel_logprob(&next, &prev, beta).unwrap().exp()
                    })
                    .sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn golden_4x4_ising_observables() {
    let golden: serde_json::Value =
        serde_json::from_str(include_str!("data/ising_4x4_beta0.4407.json")).unwrap();
    let beta = golden["beta"].as_f64().unwrap();
    let model = EnergyModel::Ising(IsingLattice2D::new(4, 1.0).unwrap());
    let obs = enumerate_observables(&BoltzmannTarget::new(model, beta).unwrap()).unwrap();
    let close = |a: f64, key: &str| {
        let b = golden[key].as_f64().unwrap();
        assert!(
            (a - b).abs() <= 1e-10 * b.abs().max(1.0),
            "{key}: {a} vs {b}"
        );
    };
    close(obs.log_z, "log_z");
    close(obs.free_energy.unwrap(), "free_energy");
    close(obs.internal_energy, "internal_energy");
    close(obs.entropy, "entropy");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exponential_schedule_is_increasing_and_ends_at_half(t in 1usize..200) {
        let s = NoiseSchedule::exponential(t).unwrap();
        prop_assert_eq!(s.beta(t), 0.5);
        for k in 1..t {
            prop_assert!(s.beta(k) < s.beta(k + 1));
        }
    }
}
