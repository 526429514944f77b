//! Adam optimizer with coupled L2 weight decay (the decay term is added to
//! the gradient before the moment updates).

use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First/second moment accumulators, shaped like the parameters they track.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Matrix]) -> Self {
        AdamState {
            config,
            step: 0,
            first: params
                .iter()
                .map(|p| Matrix::zeros(p.rows(), p.cols()))
                .collect(),
            second: params
                .iter()
                .map(|p| Matrix::zeros(p.rows(), p.cols()))
                .collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of every parameter in place.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix]) {
        assert_eq!(params.len(), grads.len(), "params/grads length mismatch");
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            assert_eq!(param.shape(), grad.shape(), "param/grad shape mismatch");
            let pd = param.data_mut();
            let gd = grad.data();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let g = gd[i] + c.weight_decay * pd[i];
                md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * g;
                vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * g * g;
                let m_hat = md[i] / bias1;
                let v_hat = vd[i] / bias2;
                pd[i] -= c.lr * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_leaves_params_unchanged() {
        let mut params = vec![Matrix::from_vec(1, 2, vec![0.5, -1.5])];
        let grads = vec![Matrix::zeros(1, 2)];
        let mut state = AdamState::new(AdamConfig::default(), &params);
        let before = params[0].clone();
        for _ in 0..5 {
            state.step(&mut params, &grads);
        }
        assert_eq!(params[0], before);
    }

    #[test]
    fn first_step_on_quadratic_moves_by_learning_rate() {
        // f(w) = w^2 at w0 = 1: bias correction makes the first update
        // lr * g / (|g| + eps), i.e. almost exactly lr toward zero.
        let mut params = vec![Matrix::from_vec(1, 1, vec![1.0])];
        let grads = vec![Matrix::from_vec(1, 1, vec![2.0])];
        let mut state = AdamState::new(AdamConfig::default(), &params);
        state.step(&mut params, &grads);
        let w = params[0].get(0, 0);
        assert!((w - 0.99).abs() < 1e-6, "w after one step: {w}");
    }

    #[test]
    fn first_step_magnitude_is_lr_times_sign() {
        for g0 in [3.0, -0.25, 1e-3] {
            let mut params = vec![Matrix::from_vec(1, 1, vec![0.0])];
            let grads = vec![Matrix::from_vec(1, 1, vec![g0])];
            let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
            let mut state = AdamState::new(cfg, &params);
            state.step(&mut params, &grads);
            let update = -params[0].get(0, 0);
            assert!(
                (update - 0.01 * g0.signum()).abs() < 1e-4,
                "g0={g0} update={update}"
            );
        }
    }

    #[test]
    fn descends_a_quadratic_bowl() {
        // w^2 minimization over 20 steps with the analytic gradient.
        let mut params = vec![Matrix::from_vec(1, 1, vec![1.0])];
        let cfg = AdamConfig { lr: 0.05, ..AdamConfig::default() };
        let mut state = AdamState::new(cfg, &params);
        let mut losses = Vec::new();
        for _ in 0..20 {
            let w = params[0].get(0, 0);
            losses.push(w * w);
            let grads = vec![Matrix::from_vec(1, 1, vec![2.0 * w])];
            state.step(&mut params, &grads);
        }
        let final_w = params[0].get(0, 0);
        assert!(final_w.abs() < 1.0);
        let non_monotone = losses.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(non_monotone <= 3, "non-monotone steps: {non_monotone}");
    }

    #[test]
    fn weight_decay_shrinks_params_under_zero_gradient() {
        let mut params = vec![Matrix::from_vec(1, 1, vec![1.0])];
        let grads = vec![Matrix::zeros(1, 1)];
        let cfg = AdamConfig {
            weight_decay: 0.1,
            ..AdamConfig::default()
        };
        let mut state = AdamState::new(cfg, &params);
        state.step(&mut params, &grads);
        assert!(params[0].get(0, 0) < 1.0);
    }
}
