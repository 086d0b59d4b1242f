use serde::{Deserialize, Serialize};

use crate::encoder::EncoderParams;
use crate::error::{Error, Result};

/// Step size with linear warm-up followed by linear decay to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub peak: f64,
    pub warmup: usize,
    pub total: usize,
}

impl Schedule {
    pub fn new(peak: f64, warmup_frac: f64, total: usize) -> Self {
        let warmup = ((warmup_frac * total as f64).ceil() as usize).min(total);
        Self { peak, warmup, total }
    }

    /// Step size for the 1-based step `t`.
    pub fn lr(&self, t: usize) -> f64 {
        if self.warmup > 0 && t <= self.warmup {
            return self.peak * t as f64 / self.warmup as f64;
        }
        let span = (self.total - self.warmup).max(1) as f64;
        self.peak * ((self.total + 1).saturating_sub(t)) as f64 / span
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
        }
    }
}

pub struct Adam {
    cfg: AdamConfig,
    m: EncoderParams,
    v: EncoderParams,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &EncoderParams) -> Self {
        Self {
            cfg,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// Applies one update with step size `lr`; tensors are visited in a fixed order.
    pub fn step(&mut self, params: &mut EncoderParams, grads: &EncoderParams, lr: f64) -> Result<()> {
        let g_tensors = grads.tensors();
        let norm = g_tensors
            .iter()
            .flat_map(|(_, m)| m.as_slice())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        let clip = if self.cfg.clip_norm > 0.0 && norm > self.cfg.clip_norm {
            self.cfg.clip_norm / norm
        } else {
            1.0
        };
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let p_tensors = params.tensors_mut();
        let m_tensors = self.m.tensors_mut();
        let v_tensors = self.v.tensors_mut();
        if p_tensors.len() != g_tensors.len() {
            return Err(Error::Shape("gradient tensors do not match parameters".into()));
        }
        for (((p, g), m), v) in p_tensors.into_iter().zip(&g_tensors).zip(m_tensors).zip(v_tensors) {
            let (p, g, m, v) = (p.1.as_mut_slice(), g.1.as_slice(), m.1.as_mut_slice(), v.1.as_mut_slice());
            for i in 0..p.len() {
                let gi = g[i] * clip;
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.cfg.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_then_decay() {
        let s = Schedule::new(1.0, 0.1, 100);
        assert_eq!(s.warmup, 10);
        assert!((s.lr(1) - 0.1).abs() < 1e-12);
        assert!((s.lr(10) - 1.0).abs() < 1e-12);
        assert!(s.lr(50) < s.lr(11));
        assert!(s.lr(100) > 0.0);
        let flat = Schedule::new(0.5, 0.0, 4);
        assert_eq!(flat.lr(1), 0.5);
    }
}
