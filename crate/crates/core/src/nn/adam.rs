use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 2e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(invalid("adam needs lr > 0, betas in [0, 1) and eps > 0"))
        }
    }
}

/// Moment estimates for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self { config, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Bias-corrected Adam update applied in place (gradient descent).
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::DimensionMismatch { expected: self.m.len(), got: params.len() });
        }
        if grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch { expected: self.m.len(), got: grads.len() });
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![0.5, -1.0];
        let mut a = Adam::new(2, AdamConfig::default());
        a.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.5, -1.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.0];
        let mut a = Adam::new(1, cfg);
        a.step(&mut p, &[1.0]).unwrap();
        let want = -cfg.lr / (1.0 + cfg.eps);
        assert!((p[0] - want).abs() < 1e-18);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        for scale in [1e-3, 1.0, 250.0] {
            let cfg = AdamConfig::default();
            let mut p = vec![0.0];
            let mut a = Adam::new(1, cfg);
            let mut last = 0.0;
            for _ in 0..20_000 {
                let before = p[0];
                a.step(&mut p, &[scale]).unwrap();
                last = p[0] - before;
            }
            assert!((last.abs() - cfg.lr).abs() < 1e-9 * (1.0 + 1.0 / scale));
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut a = Adam::new(2, AdamConfig::default());
        assert!(a.step(&mut [0.0; 3], &[0.0; 3]).is_err());
        assert!(a.step(&mut [0.0; 2], &[0.0; 1]).is_err());
    }
}
