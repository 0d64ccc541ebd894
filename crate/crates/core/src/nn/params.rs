use ndarray::Array2;

use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named weight matrices with same-shape gradient buffers. Biases are stored
/// as `[1, n]` rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
    grads: Vec<Array2<f64>>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name {name}");
        self.names.push(name);
        self.grads.push(Array2::zeros(value.dim()));
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn add_uniform(&mut self, name: impl Into<String>, rows: usize, cols: usize, bound: f64, rng: &mut Stream) -> ParamId {
        let value = Array2::from_shape_simple_fn((rows, cols), || rng.uniform_range(-bound, bound));
        self.add(name, value)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Array2<f64> {
        &self.grads[id.0]
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().chain(&self.grads).all(|a| a.iter().all(|v| v.is_finite()))
    }

    pub fn sink(&mut self) -> GradSink<'_> {
        GradSink {
            values: &self.values,
            grads: &mut self.grads,
        }
    }

    /// Values and gradients side by side, for optimizers.
    pub fn values_and_grads_mut(&mut self) -> impl Iterator<Item = (&mut Array2<f64>, &Array2<f64>)> {
        self.values.iter_mut().zip(self.grads.iter())
    }
}

/// Read access to parameter values plus write access to their gradients,
/// handed to backward passes.
pub struct GradSink<'a> {
    values: &'a [Array2<f64>],
    grads: &'a mut [Array2<f64>],
}

impl GradSink<'_> {
    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.grads[id.0]
    }

    /// Splits into the value of `v` and the gradient of `g`.
    pub fn value_and_grad(&mut self, v: ParamId, g: ParamId) -> (&Array2<f64>, &mut Array2<f64>) {
        (&self.values[v.0], &mut self.grads[g.0])
    }
}
