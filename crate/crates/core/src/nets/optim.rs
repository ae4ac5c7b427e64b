//! Adam with a linear-warmup, cosine-decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub const WARMUP_FRACTION: f64 = 0.025;
pub const WARMUP_START_LR: f64 = 1e-10;

/// Linear warmup from `1e−10` to `peak` over the first 2.5% of updates,
/// then cosine decay to `peak / 10` at the last update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak: f64,
    pub total_steps: u64,
}

impl LrSchedule {
    pub fn warmup_steps(&self) -> u64 {
        ((self.total_steps as f64 * WARMUP_FRACTION).ceil() as u64).max(1)
    }

    pub fn lr(&self, step: u64) -> f64 {
        let w = self.warmup_steps();
        if step < w {
            return WARMUP_START_LR + (self.peak - WARMUP_START_LR) * step as f64 / w as f64;
        }
        let floor = self.peak / 10.0;
        let span = self.total_steps.saturating_sub(w).max(1) as f64;
        let progress = ((step - w) as f64 / span).min(1.0);
        floor + (self.peak - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule: LrSchedule,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, schedule: LrSchedule) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            schedule,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.schedule.lr(self.step)
    }

    /// One descent step on `theta` along `grad`.
    pub fn update(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        check_dim(self.m.len(), theta.len())?;
        check_dim(self.m.len(), grad.len())?;
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient component {i}")));
        }
        let lr = self.current_lr();
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in theta.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}
