//! Sequence models with hand-written backpropagation, in `f64` throughout.
//!
//! Layouts: recurrent layers work on time-major sequences stored as
//! `[T * batch, features]` (row `t * batch + b`); attention layers work on
//! window-major sequences `[batch * T, features]` (row `b * T + t`).
//! [`model::SurrogateModel`] converts between the two and the
//! `[window, position, feature]` arrays of a [`crate::preprocess::WindowBatch`].

pub mod attention;
pub mod linear;
pub mod model;
pub mod params;
pub mod recurrent;

use ndarray::Array2;
use thiserror::Error;

pub use attention::{EncoderBlock, FeedForward, LayerNorm, MultiHeadAttention};
pub use linear::{linear_forward, Linear};
pub use model::{Architecture, ModelConfig, SurrogateModel};
pub use params::{GradSink, ParamId, ParameterSet};
pub use recurrent::{Bidirectional, GruCell, LstmCell, RecurrentCell};

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("parameter mismatch: {0}")]
    Params(String),
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// tanh approximation of GELU.
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub(crate) fn expect_shape(what: &str, a: &Array2<f64>, rows: Option<usize>, cols: usize) -> Result<(), NnError> {
    let (r, c) = a.dim();
    if c != cols || rows.is_some_and(|n| n != r) {
        return Err(NnError::Shape(format!(
            "{what}: got [{r}, {c}], expected [{}, {cols}]",
            rows.map_or("*".to_owned(), |n| n.to_string())
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn gelu_derivative_matches_differences() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }
}
