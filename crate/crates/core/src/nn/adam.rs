use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 5e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam with bias-corrected moments over a list of parameter groups,
/// treated as one concatenated vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self { config, step: 0, first_moment: vec![0.0; len], second_moment: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    /// One update. A non-finite gradient aborts the step before anything changes.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<(), NnError> {
        let total: usize = params.iter().map(|p| p.len()).sum();
        let grad_total: usize = grads.iter().map(|g| g.len()).sum();
        if params.len() != grads.len() || total != self.len() || grad_total != total {
            return Err(NnError::DimensionMismatch { expected: self.len(), got: grad_total });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(NnError::DimensionMismatch { expected: p.len(), got: g.len() });
            }
        }
        if let Some(index) = grads.iter().flat_map(|g| g.iter()).position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient { index });
        }
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let mut i = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            for (x, &gi) in p.iter_mut().zip(g.iter()) {
                let m = &mut self.first_moment[i];
                let v = &mut self.second_moment[i];
                *m = beta1 * *m + (1.0 - beta1) * gi;
                *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *x -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                i += 1;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = vec![1.0, -2.0];
        let mut adam = AdamState::new(2, AdamConfig::default());
        adam.step(&mut [&mut p], &[&[0.0, 0.0]]).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![0.0, 0.0, 0.0];
        let config = AdamConfig { learning_rate: 0.01, ..Default::default() };
        let mut adam = AdamState::new(3, config);
        adam.step(&mut [&mut p], &[&[3.0, -0.5, 100.0]]).unwrap();
        for (x, s) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((x - s * 0.01).abs() < 1e-8);
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut x = vec![1.0];
        let mut adam = AdamState::new(1, AdamConfig { learning_rate: 0.1, ..Default::default() });
        for _ in 0..500 {
            let g = 2.0 * x[0];
            adam.step(&mut [&mut x], &[&[g]]).unwrap();
        }
        assert!(x[0].abs() < 1e-3, "x = {}", x[0]);
    }

    #[test]
    fn non_finite_gradient_skips_step() {
        let mut p = vec![1.0, 1.0];
        let mut q = vec![3.0];
        let mut adam = AdamState::new(3, AdamConfig::default());
        let err = adam.step(&mut [&mut p, &mut q], &[&[0.1, 0.2], &[f64::NAN]]).unwrap_err();
        assert!(matches!(err, NnError::NonFiniteGradient { index: 2 }));
        assert_eq!(adam.step, 0);
        assert_eq!((p, q), (vec![1.0, 1.0], vec![3.0]));
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![1.0];
        let mut adam = AdamState::new(2, AdamConfig::default());
        assert!(adam.step(&mut [&mut p], &[&[0.1]]).is_err());
    }
}
