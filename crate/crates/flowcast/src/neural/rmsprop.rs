//! RMSprop: per-parameter moving average of squared gradients.
//!
//! `acc <- decay * acc + (1 - decay) * g^2`, then
//! `p <- p - lr * g / (sqrt(acc) + eps)`, element-wise.

use super::model::ModelParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmspropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmspropConfig {
    fn default() -> Self {
        RmspropConfig { learning_rate: 0.0002, decay: 0.9, eps: 1e-8 }
    }
}

/// Squared-gradient accumulators, mirroring the parameter shapes.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    acc: ModelParams,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        OptimizerState { acc: params.zeros_like() }
    }

    pub fn accumulators(&self) -> Vec<&[f64]> {
        self.acc.tensors()
    }
}

/// One update over flat slices; the building block shared by the full model
/// and the neural baselines.
pub fn step_slices(param: &mut [f64], grad: &[f64], acc: &mut [f64], cfg: &RmspropConfig) {
    debug_assert_eq!(param.len(), grad.len());
    debug_assert_eq!(param.len(), acc.len());
    for k in 0..param.len() {
        let g = grad[k];
        acc[k] = cfg.decay * acc[k] + (1.0 - cfg.decay) * g * g;
        param[k] -= cfg.learning_rate * g / (acc[k].sqrt() + cfg.eps);
    }
}

/// One update over every tensor of the model.
pub fn rmsprop_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
    cfg: &RmspropConfig,
) {
    let mut ps = params.tensors_mut();
    let gs = grads.tensors();
    let mut accs = state.acc.tensors_mut();
    debug_assert_eq!(ps.len(), gs.len());
    for ((p, g), a) in ps.iter_mut().zip(gs.iter()).zip(accs.iter_mut()) {
        step_slices(p, g, a, cfg);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_gradient_leaves_params_and_decays_acc() {
        let cfg = RmspropConfig::default();
        let mut p = [1.5, -2.0];
        let mut acc = [0.4, 0.1];
        step_slices(&mut p, &[0.0, 0.0], &mut acc, &cfg);
        assert_eq!(p, [1.5, -2.0]);
        assert_relative_eq!(acc[0], 0.36, max_relative = 1e-12);
        assert_relative_eq!(acc[1], 0.09, max_relative = 1e-12);
    }

    #[test]
    fn single_step_arithmetic() {
        let cfg = RmspropConfig { learning_rate: 0.0002, decay: 0.9, eps: 1e-8 };
        let mut p = [1.0];
        let mut acc = [0.0];
        step_slices(&mut p, &[1.0], &mut acc, &cfg);
        assert_relative_eq!(acc[0], 0.1, max_relative = 1e-12);
        let expect = 1.0 - 0.0002 * 1.0 / (0.1f64.sqrt() + 1e-8);
        assert_relative_eq!(p[0], expect, max_relative = 1e-12);
    }

    #[test]
    fn constant_gradient_accumulator_converges_to_g_squared() {
        let cfg = RmspropConfig { learning_rate: 0.0, decay: 0.9, eps: 1e-8 };
        let mut p = [0.0];
        let mut acc = [0.0];
        let g = 3.0;
        for _ in 0..500 {
            step_slices(&mut p, &[g], &mut acc, &cfg);
        }
        assert_relative_eq!(acc[0], g * g, max_relative = 1e-6);
    }

    #[test]
    fn accumulators_stay_nonnegative_and_steps_bounded() {
        use rand::{Rng, SeedableRng};
        let cfg = RmspropConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut p = vec![0.0; 64];
        let mut acc = vec![0.0; 64];
        for _ in 0..200 {
            let g: Vec<f64> = (0..64).map(|_| rng.random_range(-5.0..5.0)).collect();
            let before = p.clone();
            step_slices(&mut p, &g, &mut acc, &cfg);
            for k in 0..64 {
                assert!(acc[k] >= 0.0);
                let step = (p[k] - before[k]).abs();
                assert!(step <= cfg.learning_rate * g[k].abs() / cfg.eps + 1e-30);
            }
        }
    }
}
