//! Unbiased estimation with a trained sampler: importance sampling and
//! neural MCMC over whole diffusion paths.

pub mod autocorr;
pub mod nmcmc;
pub mod snis;

pub use autocorr::{autocorr_time, autocorr_time_chains, AutocorrResult};
pub use nmcmc::{nmcmc_estimate, nmcmc_step, run_nmcmc, ChainState, NmcmcEstimate, NmcmcReport};
pub use snis::{
    draw_snis, ess_per_sample, normalize_log_weights, observable_estimates, snis_weights,
    ObservableEstimates, SnisDraw, WeightedSamples,
};

use crate::diffusion::Policy;
use crate::error::{Error, Result};

/// Reference observables per site of the 24×24 ferromagnet at the critical
/// point, kept for documentation only.
pub mod reference_24x24 {
    pub const FREE_ENERGY: f64 = -2.11215;
    pub const INTERNAL_ENERGY: f64 = -1.44025;
    pub const ENTROPY: f64 = 0.29611;
}

/// Clamps every output of `inner` to `[ε, 1 − ε]` so that the proposal has
/// full support. `ε = 0` passes probabilities through.
pub struct ClippedPolicy<P> {
    pub inner: P,
    pub epsilon: f64,
}

impl<P> ClippedPolicy<P> {
    pub fn new(inner: P, epsilon: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&epsilon) {
            return Err(Error::InvalidConfig(format!(
                "sampling epsilon {epsilon} not in [0, 0.5)"
            )));
        }
        Ok(Self { inner, epsilon })
    }
}

impl<P: Policy> Policy for ClippedPolicy<P> {
    fn n_bits(&self) -> usize {
        self.inner.n_bits()
    }

    fn probs(&self, states: &[u8], t: usize, n_steps: usize) -> Result<Vec<f64>> {
        let mut q = self.inner.probs(states, t, n_steps)?;
        if self.epsilon > 0.0 {
            for p in &mut q {
                *p = p.clamp(self.epsilon, 1.0 - self.epsilon);
            }
        }
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{
        bernoulli_logprob, path_log_p_hat, stationary_logprob, DiffusionPath, FnPolicy,
        NoiseSchedule,
    };
    use crate::energy::{BoltzmannTarget, EnergyModel, QuboInstance};
    use crate::enumerate::enumerate_observables;
    use crate::state::index_to_bits;

    fn two_bit_target() -> BoltzmannTarget {
        let q = QuboInstance::from_terms(2, [(0, 0, 0.7), (1, 1, -0.4), (0, 1, 1.3)], 1.0, 1.1)
            .unwrap();
        BoltzmannTarget::new(EnergyModel::Qubo(q), 0.9).unwrap()
    }

    fn q_hat(x: &[u8]) -> Vec<f64> {
        vec![0.2 + 0.5 * x[1] as f64, 0.7 - 0.3 * x[0] as f64]
    }

    #[test]
    fn z_hat_is_exactly_unbiased_when_enumerated() {
        // E_q[ŵ] over every (X_1, X_0) pair of a two-bit, one-step system
        let target = two_bit_target();
        let s = NoiseSchedule::from_betas(vec![0.35]).unwrap();
        let mut expectation = 0.0;
        let mut bits1 = [0u8; 2];
        let mut bits0 = [0u8; 2];
        for i1 in 0..4 {
            index_to_bits(i1, &mut bits1);
            for i0 in 0..4 {
                index_to_bits(i0, &mut bits0);
                let path = DiffusionPath::from_states(
                    vec![bits0.to_vec(), bits1.to_vec()],
                    vec![bernoulli_logprob(&bits0, &q_hat(&bits1))],
                )
                .unwrap();
                let lq = path.log_q();
                let ws = snis_weights(&target, &s, std::slice::from_ref(&path)).unwrap();
                assert_eq!(ws.weights, vec![1.0]);
                expectation += lq.exp() * ws.log_z.exp();
                assert!(
                    (path_log_p_hat(&target, &s, &path).unwrap() - lq - ws.log_z).abs() < 1e-12
                );
            }
        }
        let z = enumerate_observables(&target).unwrap().z;
        assert!((expectation - z).abs() < 1e-12 * z);
        assert_eq!(stationary_logprob(2), 2.0 * 0.5f64.ln());
    }

    #[test]
    fn uniform_policy_z_hat_mean_over_repeats() {
        let target = two_bit_target();
        let s = NoiseSchedule::exponential(2).unwrap();
        let policy = FnPolicy {
            n_bits: 2,
            f: |_: &[u8], _, _| vec![0.5; 2],
        };
        let z = enumerate_observables(&target).unwrap().z;
        let draw = draw_snis(&policy, &target, &s, 10_000, 4, 1000).unwrap();
        let zs: Vec<f64> = draw.log_w.iter().map(|l| l.exp()).collect();
        let mean = zs.iter().sum::<f64>() / zs.len() as f64;
        let sd =
            (zs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (zs.len() - 1) as f64).sqrt();
        assert!((mean - z).abs() < 3.0 * sd / (zs.len() as f64).sqrt());
    }

    #[test]
    fn clipping_bounds_probabilities() {
        let p = ClippedPolicy::new(
            FnPolicy {
                n_bits: 2,
                f: |_: &[u8], _, _| vec![0.0, 0.999],
            },
            0.01,
        )
        .unwrap();
        assert_eq!(p.probs(&[0, 1], 1, 1).unwrap(), vec![0.01, 0.99]);
        assert!(ClippedPolicy::new(p, 0.5).is_err());
    }
}
