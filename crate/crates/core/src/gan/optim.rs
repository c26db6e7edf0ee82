use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimiser with bias correction. Minimises.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[&Array2<f64>]) -> Self {
        let zeros: Vec<Array2<f64>> = params.iter().map(|p| Array2::zeros(p.dim())).collect();
        Self {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update. A non-finite gradient leaves parameters and state untouched.
    pub fn step(&mut self, params: Vec<&mut Array2<f64>>, grads: &[Array2<f64>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters, {} gradients, optimiser state for {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.dim() != g.dim() || g.dim() != self.m[k].dim() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter {k}: {:?} vs gradient {:?}",
                    p.dim(),
                    g.dim()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of parameter {k}")));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params.into_iter().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = array![[1.5, -2.0]];
        let mut opt = Adam::new(AdamConfig::default(), &[&p]);
        for _ in 0..5 {
            opt.step(vec![&mut p], &[Array2::zeros((1, 2))]).unwrap();
        }
        assert_eq!(p, array![[1.5, -2.0]]);
    }

    #[test]
    fn first_step_by_hand() {
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        let mut p = array![[1.0, 1.0]];
        let mut opt = Adam::new(cfg, &[&p]);
        opt.step(vec![&mut p], &[array![[3.0, -0.5]]]).unwrap();
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps).
        let expect = [1.0 - 0.01 * 3.0 / (3.0 + 1e-8), 1.0 + 0.01 * 0.5 / (0.5 + 1e-8)];
        assert!((p[[0, 0]] - expect[0]).abs() < 1e-15);
        assert!((p[[0, 1]] - expect[1]).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = array![[1.0]];
        let mut opt = Adam::new(AdamConfig::default(), &[&p]);
        assert!(opt.step(vec![&mut p], &[array![[f64::NAN]]]).is_err());
        assert_eq!(p, array![[1.0]]);
        assert_eq!(opt.t, 0);
    }
}
