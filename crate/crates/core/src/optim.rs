//! Adam with bias correction.

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::mapper::Gradients;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Array2<f64>>) -> Self {
        let (m, v) = params
            .into_iter()
            .map(|p| (Array2::zeros(p.raw_dim()), Array2::zeros(p.raw_dim())))
            .unzip();
        Self {
            m,
            v,
            step: 0,
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
        }
    }

    /// One in-place update `θ -= lr * m_hat / (sqrt(v_hat) + ε)`.
    pub fn step(&mut self, params: Vec<&mut Array2<f64>>, grads: &Gradients, lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.0.len() != self.m.len() {
            return Err(Error::Shape("Adam state, parameters and gradients disagree".into()));
        }
        for (p, g) in params.iter().zip(&grads.0) {
            if p.dim() != g.dim() {
                return Err(Error::Shape(format!("parameter {:?} vs gradient {:?}", p.dim(), g.dim())));
            }
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }

        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (((p, g), m), v) in params.into_iter().zip(&grads.0).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
        Ok(())
    }
}
