use crate::network::Network;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter buffer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamMoments {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One bias-corrected Adam update; `t` is the 1-based step count.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamMoments,
    t: u64,
    cfg: &AdamConfig,
) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Adam over every trainable parameter of a network.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    t: u64,
    moments: Vec<AdamMoments>,
}

impl Adam {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            moments: net
                .params()
                .iter()
                .map(|p| AdamMoments::zeros(p.tensor.len()))
                .collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies the accumulated gradients and clears them. Frozen parameters,
    /// and parameters without a gradient buffer, are left untouched.
    pub fn step(&mut self, net: &mut Network) {
        self.t += 1;
        for (p, state) in net.params_mut().iter_mut().zip(&mut self.moments) {
            if !p.trainable {
                continue;
            }
            let Some(grad) = p.tensor.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            adam_step(p.tensor.data_mut(), &grad, state, self.t, &self.config);
            p.tensor.clear_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let mut st = AdamMoments::zeros(2);
        adam_step(&mut p, &[0.0, 0.0], &mut st, 1, &AdamConfig::default());
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        let cfg = AdamConfig::default();
        let mut p = vec![0.0, 0.0];
        let mut st = AdamMoments::zeros(2);
        adam_step(&mut p, &[3.0, -0.5], &mut st, 1, &cfg);
        assert!((p[0] + cfg.lr).abs() < 1e-10);
        assert!((p[1] - cfg.lr).abs() < 1e-10);
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        let mut theta = vec![1.0];
        let mut st = AdamMoments::zeros(1);
        for t in 1..=200 {
            let g = vec![2.0 * theta[0]];
            adam_step(&mut theta, &g, &mut st, t, &cfg);
        }
        assert!(theta[0].abs() < 1e-2, "{}", theta[0]);
    }
}
