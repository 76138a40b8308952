use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            peak_lr: 1e-4,
            warmup_fraction: 0.10,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return fail(format!("warmup fraction {} not in [0, 1)", self.warmup_fraction));
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return fail(format!("peak learning rate must be > 0, got {}", self.peak_lr));
        }
        if self.batch_size == 0 {
            return fail("batch size must be >= 1".into());
        }
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail(format!("betas ({}, {}) not in [0, 1)", self.beta1, self.beta2));
        }
        if !(self.eps > 0.0) || self.weight_decay < 0.0 {
            return fail("eps must be > 0 and weight decay >= 0".into());
        }
        Ok(())
    }

    pub fn warmup_steps(&self, total_steps: usize) -> usize {
        (self.warmup_fraction * total_steps as f64).round() as usize
    }
}

/// Linear warmup from 0 to `peak_lr` over `round(warmup_fraction * total)`
/// steps, then half-cosine decay to 0 at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, cfg: &TrainConfig) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::Config("total_steps must be positive".into()));
    }
    if step > total_steps {
        return Err(Error::Config(format!("step {step} beyond total {total_steps}")));
    }
    let warmup = cfg.warmup_steps(total_steps);
    if step < warmup {
        return Ok(cfg.peak_lr * step as f64 / warmup as f64);
    }
    if warmup == total_steps {
        return Ok(cfg.peak_lr);
    }
    let progress = (step - warmup) as f64 / (total_steps - warmup) as f64;
    Ok(cfg.peak_lr * 0.5 * (1.0 + (PI * progress).cos()))
}

/// AdamW state: first/second moments per parameter tensor and a step counter.
#[derive(Clone, Debug)]
pub struct AdamW {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamW {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let (m, v) = params
            .into_iter()
            .map(|p| (Tensor::zeros(p.rows(), p.cols()), Tensor::zeros(p.rows(), p.cols())))
            .unzip();
        Self { m, v, step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    /// `w <- w - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * w`
    pub fn step(
        &mut self,
        params: Vec<&mut Tensor>,
        grads: &[Tensor],
        lr: f64,
        cfg: &TrainConfig,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape {
                op: "adamw_step",
                left: (params.len(), grads.len()),
                right: (self.m.len(), self.m.len()),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(Error::Shape {
                    op: "adamw_step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
        }
        if lr < 0.0 {
            return Err(Error::Config(format!("negative learning rate {lr}")));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let decay = 1.0 - lr * cfg.weight_decay;
        for ((p, g), (m, v)) in params
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let w = p.as_mut_slice();
            for (j, &gj) in g.as_slice().iter().enumerate() {
                let mj = &mut m.as_mut_slice()[j];
                *mj = cfg.beta1 * *mj + (1.0 - cfg.beta1) * gj;
                let vj = &mut v.as_mut_slice()[j];
                *vj = cfg.beta2 * *vj + (1.0 - cfg.beta2) * gj * gj;
                let m_hat = *mj / bc1;
                let v_hat = *vj / bc2;
                w[j] = w[j] * decay - lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}
