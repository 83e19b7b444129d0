use super::Tensor;

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

/// Moment estimates for a fixed list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (m, v) = shapes
            .into_iter()
            .map(|(r, c)| (Tensor::zeros(r, c), Tensor::zeros(r, c)))
            .unzip();
        Self { config, m, v, t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState) {
    assert_eq!(params.len(), grads.len(), "adam: parameter/gradient count mismatch");
    assert_eq!(params.len(), state.m.len(), "adam: state built for a different parameter list");
    state.t += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let bias1 = 1.0 - beta1.powi(state.t as i32);
    let bias2 = 1.0 - beta2.powi(state.t as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        assert_eq!(p.shape(), g.shape(), "adam: gradient shape mismatch");
        let iter = p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut());
        for (((p, &g), m), v) in iter {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::from_vec(1, 3, vec![1.0, -2.0, 3.0]);
        let before = p.clone();
        let mut state = AdamState::new(AdamConfig::default(), [(1, 3)]);
        for _ in 0..5 {
            adam_step(&mut [&mut p], &[Tensor::zeros(1, 3)], &mut state);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Tensor::scalar(0.0);
        let mut state = AdamState::new(AdamConfig::default(), [(1, 1)]);
        adam_step(&mut [&mut p], &[Tensor::scalar(1.0)], &mut state);
        // m_hat = v_hat = 1 after bias correction.
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p.item() - expected).abs() < 1e-18);
        assert_eq!(state.steps(), 1);
    }

    #[test]
    fn equal_gradients_keep_params_equal() {
        let mut a = Tensor::scalar(0.5);
        let mut b = Tensor::scalar(0.5);
        let mut state = AdamState::new(AdamConfig::default(), [(1, 1), (1, 1)]);
        for k in 0..50 {
            let g = Tensor::scalar((k as f64 * 0.37).sin());
            adam_step(&mut [&mut a, &mut b], &[g.clone(), g], &mut state);
            assert_eq!(a, b);
        }
    }
}
