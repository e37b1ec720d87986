//! First-order optimizers shared by the fitting and training loops.

/// Adam with per-buffer moment state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(params.len(), grads.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Cosine decay after a linear warm-up, in [0, base_lr].
pub fn cosine_warmup_lr(step: u64, total_steps: u64, warmup_steps: u64, base_lr: f64) -> f64 {
    if total_steps == 0 {
        return base_lr;
    }
    if warmup_steps > 0 && step < warmup_steps {
        return base_lr * (step + 1) as f64 / warmup_steps as f64;
    }
    let denom = total_steps.saturating_sub(warmup_steps).max(1) as f64;
    let progress = (step.saturating_sub(warmup_steps) as f64 / denom).min(1.0);
    base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}
