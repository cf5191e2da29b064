//! Decoupled-weight-decay Adam and the warmup + cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4 }
    }
}

impl AdamW {
    /// One update at 1-based step `t`.
    pub fn update(&self, params: &mut [Vec<f32>], grads: &[Vec<f32>], m: &mut [Vec<f32>], v: &mut [Vec<f32>], lr: f64, t: u64) {
        let c1 = 1.0 - self.beta1.powf(t as f64);
        let c2 = 1.0 - self.beta2.powf(t as f64);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                if lr == 0.0 {
                    continue;
                }
                let mh = f64::from(m[i]) / c1;
                let vh = f64::from(v[i]) / c2;
                let step = lr * (mh / (vh.sqrt() + self.eps) + self.weight_decay * f64::from(p[i]));
                p[i] = (f64::from(p[i]) - step) as f32;
            }
        }
    }
}

/// Linear warmup from 0 to `peak`, then cosine decay reaching
/// `alpha · peak` at the last step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub peak: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub alpha: f64,
}

impl Schedule {
    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.peak * step as f64 / self.warmup_steps as f64;
        }
        let last = self.total_steps.saturating_sub(1);
        if last <= self.warmup_steps {
            return self.peak;
        }
        let progress = ((step - self.warmup_steps) as f64 / (last - self.warmup_steps) as f64).min(1.0);
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.peak * ((1.0 - self.alpha) * cos + self.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let s = Schedule { peak: 1e-2, warmup_steps: 10, total_steps: 100, alpha: 0.001 };
        assert_eq!(s.lr_at(0), 0.0);
        assert!((s.lr_at(5) - 5e-3).abs() < 1e-15);
        assert_eq!(s.lr_at(10), 1e-2);
        assert!((s.lr_at(99) - 1e-5).abs() < 1e-9);
        let mut prev = f64::INFINITY;
        for t in 10..100 {
            let lr = s.lr_at(t);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn zero_lr_leaves_params() {
        let mut p = vec![vec![1.0f32, -2.0]];
        let g = vec![vec![0.5f32, 0.5]];
        let mut m = vec![vec![0.0; 2]];
        let mut v = vec![vec![0.0; 2]];
        AdamW::default().update(&mut p, &g, &mut m, &mut v, 0.0, 1);
        assert_eq!(p, vec![vec![1.0, -2.0]]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // bias-corrected first step is lr·sign(g) (plus decay)
        let mut p = vec![vec![0.0f32]];
        let mut m = vec![vec![0.0]];
        let mut v = vec![vec![0.0]];
        let opt = AdamW { weight_decay: 0.0, ..AdamW::default() };
        opt.update(&mut p, &[vec![3.0]], &mut m, &mut v, 0.1, 1);
        assert!((p[0][0] + 0.1).abs() < 1e-6);
    }
}
