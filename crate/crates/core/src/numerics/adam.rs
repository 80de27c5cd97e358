use serde::{Deserialize, Serialize};

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// A trainable tensor with its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub value: DenseMatrix,
    pub grad: DenseMatrix,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, value: DenseMatrix) -> Self {
        let grad = DenseMatrix::zeros(value.rows(), value.cols());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn scalar(name: impl Into<String>, value: f64) -> Self {
        Self::new(name, DenseMatrix::filled(1, 1, value))
    }

    /// Value of a 1×1 parameter.
    pub fn scalar_value(&self) -> f64 {
        self.value.as_slice()[0]
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn accumulate_grad(&mut self, g: &DenseMatrix) -> Result<()> {
        self.grad.add_assign(g)
    }

    pub fn len(&self) -> usize {
        self.value.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: DenseMatrix,
    pub second_moment: DenseMatrix,
    pub step_count: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(shape: (usize, usize), config: AdamConfig) -> Self {
        Self {
            first_moment: DenseMatrix::zeros(shape.0, shape.1),
            second_moment: DenseMatrix::zeros(shape.0, shape.1),
            step_count: 0,
            config,
        }
    }

    pub fn for_param(p: &ParamTensor, config: AdamConfig) -> Self {
        Self::new(p.value.shape(), config)
    }
}

/// One bias-corrected Adam update. The gradient buffer is zeroed afterwards.
pub fn adam_step(p: &mut ParamTensor, s: &mut AdamState, lr: f64) -> Result<()> {
    if p.value.shape() != s.first_moment.shape() || p.grad.shape() != p.value.shape() {
        return Err(Error::shape(
            format!("adam_step({})", p.name),
            format!("{:?}", p.value.shape()),
            format!("{:?}", s.first_moment.shape()),
        ));
    }
    // A finite gradient whose square overflows would turn the second moment into
    // infinity and silently freeze the parameter.
    if p.grad.as_slice().iter().any(|g| !(g * g).is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite or overflowing gradient for parameter '{}'",
            p.name
        )));
    }
    s.step_count += 1;
    let AdamConfig {
        beta1,
        beta2,
        epsilon,
    } = s.config;
    let t = s.step_count as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);

    let values = p.value.as_mut_slice();
    let m = s.first_moment.as_mut_slice();
    let v = s.second_moment.as_mut_slice();
    for (((theta, &g), m), v) in values.iter_mut().zip(p.grad.as_slice()).zip(m).zip(v) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *theta -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
    p.zero_grad();
    Ok(())
}
