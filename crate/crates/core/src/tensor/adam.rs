use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Mat;

/// A trainable matrix together with the gradient from the latest backward pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Param<T> {
    pub value: Mat<T>,
    #[serde(skip)]
    pub grad: Option<Mat<T>>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Mat<T>) -> Self {
        Self { value, grad: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Adam moment estimates for an ordered parameter list.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Mat<T>>,
    v: Vec<Mat<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Every parameter must carry a gradient
    /// of its own shape; gradients are cleared afterwards. The parameter list
    /// must be presented in the same order on every call.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        for (i, p) in params.iter().enumerate() {
            match &p.grad {
                None => return Err(Error::MissingGradient { index: i }),
                Some(g) if g.shape() != p.value.shape() => {
                    return Err(Error::Dimension {
                        op: "adam_step",
                        lhs: p.value.shape(),
                        rhs: g.shape(),
                    })
                }
                Some(_) => {}
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Mat::zeros(p.value.rows(), p.value.cols())).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len()
            || self.m.iter().zip(params.iter()).any(|(m, p)| m.shape() != p.value.shape())
        {
            return Err(Error::invalid("adam_step: parameter list changed between steps"));
        }

        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let lr = T::of(c.lr);
        let eps = T::of(c.eps);
        let t = self.step as i32;
        let bc1 = T::one() - T::of(c.beta1.powi(t));
        let bc2 = T::one() - T::of(c.beta2.powi(t));

        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad.take().expect("checked above");
            let pd = p.value.data_mut();
            for (((w, &gi), mi), vi) in pd
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            if !p.value.is_finite() {
                return Err(Error::NonFinite { op: "adam_step" });
            }
        }
        Ok(())
    }
}
