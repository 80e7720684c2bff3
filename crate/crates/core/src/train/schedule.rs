use serde::{Deserialize, Serialize};

/// Linear warm-up from 0 to `base_lr`, then linear decay to 0.
///
/// Steps are numbered from 1. With W = ceil(ratio·total) warm-up steps,
/// step s ≤ W gets base·s/W and later steps base·(total−s)/(total−W), so
/// the rate peaks at step W and the final step is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSchedule {
    pub base_lr: f64,
    pub total_steps: usize,
    pub warmup_steps: usize,
}

impl LinearSchedule {
    pub fn new(base_lr: f64, total_steps: usize, warmup_ratio: f64) -> Self {
        let warmup_steps = ((warmup_ratio * total_steps as f64).ceil() as usize).min(total_steps);
        LinearSchedule { base_lr, total_steps, warmup_steps }
    }

    pub fn lr(&self, step: usize) -> f64 {
        let (w, t) = (self.warmup_steps, self.total_steps);
        if step <= w {
            self.base_lr * (step as f64 / w as f64)
        } else if step >= t {
            0.0
        } else {
            self.base_lr * ((t - step) as f64 / (t - w) as f64)
        }
    }
}
