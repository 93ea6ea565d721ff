use serde::{Deserialize, Serialize};

use super::{MlpGrads, MlpParams, NumericError};

/// Adaptive-moment optimizer state (Adam with bias correction).
///
/// Accumulator shapes mirror the parameter blocks they update; the step
/// counter only ever increases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerState {
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(params: &MlpParams, learning_rate: f64) -> Self {
        let blocks: Vec<Vec<f64>> = params
            .blocks()
            .iter()
            .map(|b| vec![0.0; b.len()])
            .collect();
        Self {
            first_moment: blocks.clone(),
            second_moment: blocks,
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update. Rejects non-finite gradients before touching any state.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads) -> Result<(), NumericError> {
        if !grads.all_finite() {
            return Err(NumericError::NonFinite {
                context: "optimizer gradient",
            });
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let grad_blocks = grads.blocks();
        let mut param_blocks = params.blocks_mut();
        assert_eq!(grad_blocks.len(), param_blocks.len(), "block structure");
        for (bi, g) in grad_blocks.iter().enumerate() {
            let m = &mut self.first_moment[bi];
            let v = &mut self.second_moment[bi];
            let p = &mut param_blocks[bi];
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
