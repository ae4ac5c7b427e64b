use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Temperature as a function of the epoch index `n ≥ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnnealSchedule {
    /// Fixed temperature.
    Constant { temperature: f64 },
    /// `T_start (1 − n / N_anneal)`, floored at zero.
    Linear { t_start: f64, n_anneal: u64 },
    /// `T(n) = (1/β) / (1 − 0.998^{h (n+1)})`, decaying to `1/β`.
    IsingDecay { beta: f64, h: f64 },
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            AnnealSchedule::Constant { temperature } => {
                temperature.is_finite() && *temperature >= 0.0
            }
            AnnealSchedule::Linear { t_start, n_anneal } => {
                t_start.is_finite() && *t_start >= 0.0 && *n_anneal > 0
            }
            AnnealSchedule::IsingDecay { beta, h } => {
                beta.is_finite() && *beta > 0.0 && h.is_finite() && *h > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid anneal schedule {self:?}"
            )))
        }
    }

    pub fn temperature(&self, epoch: u64) -> f64 {
        match *self {
            AnnealSchedule::Constant { temperature } => temperature,
            AnnealSchedule::Linear { t_start, n_anneal } => {
                (t_start * (1.0 - epoch as f64 / n_anneal as f64)).max(0.0)
            }
            AnnealSchedule::IsingDecay { beta, h } => {
                (1.0 / beta) / (1.0 - 0.998f64.powf(h * (epoch as f64 + 1.0)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluations_at_zero() {
        let s = AnnealSchedule::IsingDecay {
            beta: 0.4407,
            h: 1.0,
        };
        let expected = (1.0 / 0.4407) / (1.0 - 0.998);
        assert!((s.temperature(0) - expected).abs() < 1e-9 * expected);
        let lin = AnnealSchedule::Linear {
            t_start: 0.3,
            n_anneal: 50,
        };
        assert_eq!(lin.temperature(0), 0.3);
        assert_eq!(lin.temperature(50), 0.0);
        assert_eq!(lin.temperature(80), 0.0);
    }

    #[test]
    fn ising_decay_limit_and_monotonicity() {
        let s = AnnealSchedule::IsingDecay { beta: 0.5, h: 5.0 };
        assert!((s.temperature(100_000) - 2.0).abs() < 1e-12);
        for n in 0..500 {
            assert!(s.temperature(n + 1) <= s.temperature(n));
        }
    }

    #[test]
    fn validation() {
        assert!(AnnealSchedule::IsingDecay { beta: 0.0, h: 1.0 }
            .validate()
            .is_err());
        assert!(AnnealSchedule::Linear {
            t_start: 1.0,
            n_anneal: 0
        }
        .validate()
        .is_err());
        assert!(AnnealSchedule::Constant { temperature: 1.0 }
            .validate()
            .is_ok());
    }
}
