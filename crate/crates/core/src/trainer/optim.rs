use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderParams, Gradients};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerKind {
    pub fn validate(self) -> Result<()> {
        if let OptimizerKind::Adam { beta1, beta2, eps } = self {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "adam needs 0 <= beta < 1 and eps > 0 (got {beta1}, {beta2}, {eps})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &EncoderParams) -> Self {
        let n = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam { .. } => params.n_params(),
        };
        Optimizer {
            kind,
            lr,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut EncoderParams, grads: &Gradients) {
        self.step += 1;
        let p = params.weights.iter_mut().chain(params.bias.iter_mut());
        let g = grads.weights.iter().chain(&grads.bias);
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in p.zip(g) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                for (((p, &g), m), v) in p.zip(g).zip(&mut self.m).zip(&mut self.v) {
                    if g == 0.0 && *m == 0.0 && *v == 0.0 {
                        continue;
                    }
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= self.lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(w: Vec<f64>) -> EncoderParams {
        EncoderParams {
            feature_dim: w.len(),
            ngram_range: (2, 2),
            out_dim: 1,
            weights: w,
            bias: vec![0.0],
        }
    }

    #[test]
    fn sgd_step() {
        let mut p = params(vec![1.0, -1.0]);
        let g = Gradients {
            weights: vec![0.5, -2.0],
            bias: vec![1.0],
        };
        let mut o = Optimizer::new(OptimizerKind::Sgd, 0.1, &p);
        o.step(&mut p, &g);
        assert_eq!(p.weights, vec![0.95, -0.8]);
        assert_eq!(p.bias, vec![-0.1]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // with bias correction the first update is lr * g / (|g| + eps)
        let mut p = params(vec![0.0, 0.0]);
        let g = Gradients {
            weights: vec![3.0, -0.25],
            bias: vec![0.0],
        };
        let mut o = Optimizer::new(OptimizerKind::default(), 0.01, &p);
        o.step(&mut p, &g);
        assert!((p.weights[0] + 0.01).abs() < 1e-9);
        assert!((p.weights[1] - 0.01).abs() < 1e-9);
        assert_eq!(p.bias[0], 0.0);
    }

    #[test]
    fn adam_validation() {
        assert!(OptimizerKind::Adam { beta1: 1.0, beta2: 0.9, eps: 1e-8 }.validate().is_err());
        assert!(OptimizerKind::Adam { beta1: 0.9, beta2: 0.9, eps: 0.0 }.validate().is_err());
        assert!(OptimizerKind::default().validate().is_ok());
    }
}
