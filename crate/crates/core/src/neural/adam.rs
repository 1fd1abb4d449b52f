use serde::{Deserialize, Serialize};

use crate::error::{CrnlError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Added as `weight_decay * param` to every gradient (coupled L2).
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment accumulators for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. A non-finite gradient aborts the step
    /// before any parameter or moment is touched.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(CrnlError::shape(format!(
                "optimizer tracks {} tensors, got {} params / {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[k].len() || g.len() != self.first[k].len() {
                return Err(CrnlError::shape(format!("tensor {k} changed size")));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(CrnlError::NonFinite(format!("gradient of tensor {k}")));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for i in 0..p.len() {
                let gi = g[i] + weight_decay * p[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= learning_rate * mhat / (vhat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let mut st = AdamState::new(AdamConfig::default(), &[2]);
        st.step(&mut [&mut p[..]], &[&[0.0, 0.0]]).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn descends_on_square() {
        let mut w = vec![1.0];
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..Default::default()
        };
        let mut st = AdamState::new(cfg, &[1]);
        let g = 2.0 * w[0];
        st.step(&mut [&mut w[..]], &[&[g]]).unwrap();
        assert!(w[0] < 1.0);
    }

    #[test]
    fn converges_on_two_parameter_quadratic() {
        // f(a, b) = (a - 3)^2 + 2 (b + 1)^2 + (a - 3)(b + 1), minimizer (3, -1)
        let mut p = vec![0.0, 0.0];
        let cfg = AdamConfig {
            learning_rate: 0.05,
            ..Default::default()
        };
        let mut st = AdamState::new(cfg, &[2]);
        for _ in 0..200 {
            let (a, b) = (p[0] - 3.0, p[1] + 1.0);
            let g = [2.0 * a + b, 4.0 * b + a];
            st.step(&mut [&mut p[..]], &[&g]).unwrap();
        }
        assert!((p[0] - 3.0).abs() < 1e-3, "{p:?}");
        assert!((p[1] + 1.0).abs() < 1e-3, "{p:?}");
    }

    #[test]
    fn nonfinite_gradient_skips_step() {
        let mut p = vec![0.5];
        let mut st = AdamState::new(AdamConfig::default(), &[1]);
        let err = st.step(&mut [&mut p[..]], &[&[f64::NAN]]);
        assert!(matches!(err, Err(CrnlError::NonFinite(_))));
        assert_eq!(p, vec![0.5]);
        assert_eq!(st.steps_taken(), 0);
    }

    #[test]
    fn weight_decay_shrinks_params_without_data_gradient() {
        let mut p = vec![2.0];
        let cfg = AdamConfig {
            learning_rate: 0.01,
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut st = AdamState::new(cfg, &[1]);
        st.step(&mut [&mut p[..]], &[&[0.0]]).unwrap();
        assert!(p[0] < 2.0);
    }
}
