use serde::{Deserialize, Serialize};

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};

/// Linear warmup to `peak` at `warmup`, then inverse-square-root decay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoamSchedule {
    pub peak_lr: f64,
    pub warmup: u64,
}

impl NoamSchedule {
    pub fn new(peak_lr: f64, warmup: u64) -> Result<Self> {
        if !(peak_lr > 0.0 && peak_lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("peak_lr must be > 0, got {peak_lr}")));
        }
        if warmup == 0 {
            return Err(Error::InvalidArgument("warmup must be positive".into()));
        }
        Ok(Self { peak_lr, warmup })
    }

    /// `peak · min(step / warmup, sqrt(warmup / step))`, for `step ≥ 1`.
    pub fn lr(&self, step: u64) -> Result<f64> {
        if step == 0 {
            return Err(Error::InvalidArgument("noam schedule step must be >= 1".into()));
        }
        let s = step as f64;
        let w = self.warmup as f64;
        Ok(self.peak_lr * (s / w).min((w / s).sqrt()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

/// Adam with bias correction. Moment buffers are created lazily per
/// trainable parameter name.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    moments: Vec<(String, Tensor, Tensor)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of every trainable entry from its gradient slot. Frozen
    /// entries are never touched.
    pub fn step(&mut self, params: &mut ParamSet, lr: f64) -> Result<()> {
        // Validate before mutating anything.
        for (name, p) in params.iter() {
            if p.trainable() && p.grad.is_none() {
                return Err(Error::MissingGradient(name.to_string()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for (name, p) in params.iter_mut() {
            if !p.trainable() {
                continue;
            }
            let slot = match self.moments.iter().position(|(n, ..)| n == name) {
                Some(i) => i,
                None => {
                    let (r, c) = p.value.shape();
                    self.moments
                        .push((name.to_string(), Tensor::zeros(r, c), Tensor::zeros(r, c)));
                    self.moments.len() - 1
                }
            };
            let (_, m, v) = &mut self.moments[slot];
            let grad = p.grad.as_ref().expect("checked above");
            let values = p.value.data_mut();
            let moments = m.data_mut().iter_mut().zip(v.data_mut().iter_mut());
            for ((x, &g), (mi, vi)) in values.iter_mut().zip(grad.data()).zip(moments) {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                *x -= lr * (*mi / bc1) / ((*vi / bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Gradients;

    #[test]
    fn noam_examples() {
        let s = NoamSchedule::new(5e-5, 800_000).unwrap();
        assert_eq!(s.lr(800_000).unwrap(), 5e-5);
        assert!((s.lr(200_000).unwrap() - 5e-5 / 4.0).abs() < 1e-20);
        assert!((s.lr(3_200_000).unwrap() - 5e-5 / 2.0).abs() < 1e-20);
        assert!(s.lr(0).is_err());
    }

    fn one_param(value: f64, grad: Option<f64>, trainable: bool) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(value), trainable);
        if let Some(g) = grad {
            let mut gs = Gradients::default();
            gs.by_name.insert("w".into(), Tensor::scalar(g));
            p.accumulate(&gs).unwrap();
        }
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = one_param(0.0, Some(1.0), true);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut p, 0.1).unwrap();
        let expected = -0.1 * (1.0 / (1.0 + 1e-9));
        assert!((p.value("w").unwrap().item() - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_value_unchanged() {
        let mut p = one_param(0.75, Some(0.0), true);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut p, 0.1).unwrap();
        assert_eq!(p.value("w").unwrap().item().to_bits(), 0.75f64.to_bits());
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut p = one_param(1.0, None, true);
        let mut adam = Adam::new(AdamConfig::default());
        assert!(matches!(adam.step(&mut p, 0.1), Err(Error::MissingGradient(_))));
    }

    #[test]
    fn frozen_entry_is_untouched() {
        let mut p = one_param(1.0, Some(1.0), true);
        p.insert("frozen", Tensor::row(vec![0.1, -3.0]), false);
        let before = p.get("frozen").unwrap().value.to_le_bytes();
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut p, 0.1).unwrap();
        assert_eq!(before, p.get("frozen").unwrap().value.to_le_bytes());
    }
}
