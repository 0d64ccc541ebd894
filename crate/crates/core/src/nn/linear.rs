use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Axis};

use super::params::{GradSink, ParamId, ParameterSet};
use super::{expect_shape, NnError};
use crate::rng::Stream;

/// `y = x W + b`, shape-checked.
pub fn linear_forward(x: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>, NnError> {
    let (in_dim, out_dim) = w.dim();
    expect_shape("linear input", x, None, in_dim)?;
    expect_shape("linear bias", b, Some(1), out_dim)?;
    Ok(x.dot(w) + b)
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(ps: &mut ParameterSet, name: &str, in_dim: usize, out_dim: usize, rng: &mut Stream) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w = ps.add_uniform(format!("{name}.weight"), in_dim, out_dim, bound, rng);
        let b = ps.add_uniform(format!("{name}.bias"), 1, out_dim, bound, rng);
        Self { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, ps: &ParameterSet, x: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        linear_forward(x, ps.value(self.w), ps.value(self.b))
    }

    /// Accumulates weight and bias gradients; returns the input gradient.
    pub fn backward(&self, g: &mut GradSink, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        general_mat_mul(1.0, &x.t(), dy, 1.0, g.grad_mut(self.w));
        *g.grad_mut(self.b) += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&g.value(self.w).t())
    }
}
