//! The three surrogate architectures behind one [`SurrogateModel`] type.
//!
//! Recurrent models: `Linear(in, hidden)` then `num_layers` bidirectional
//! layers (the first reads `hidden`, later ones read `2 * hidden`), then
//! `Linear(2 * hidden, out)` per position. Transformer: `Linear(in, hidden)`
//! plus sinusoidal positions, `num_layers` pre-norm encoder blocks, then
//! `Linear(hidden, out)`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use super::attention::{positional_encoding, EncoderBlock, EncoderCache};
use super::linear::Linear;
use super::params::ParameterSet;
use super::recurrent::{Bidirectional, BidirectionalCache, GruCell, LstmCell, RecurrentCell};
use super::NnError;
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Bigru,
    Bilstm,
    Transformer,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::Bigru, Architecture::Bilstm, Architecture::Transformer];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Bigru => "bigru",
            Architecture::Bilstm => "bilstm",
            Architecture::Transformer => "transformer",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, NnError> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| NnError::Config(format!("unknown architecture `{s}` (expected bigru, bilstm or transformer)")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub window_size: usize,
    pub window_overlap: usize,
    pub batch_size: usize,
    /// Only read by the transformer.
    pub num_heads: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let positive = [
            ("hidden_size", self.hidden_size),
            ("num_layers", self.num_layers),
            ("window_size", self.window_size),
            ("batch_size", self.batch_size),
            ("input_dim", self.input_dim),
            ("output_dim", self.output_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(NnError::Config(format!("{name} must be positive")));
            }
        }
        if self.window_overlap >= self.window_size {
            return Err(NnError::Config(format!(
                "window_overlap {} must be smaller than window_size {}",
                self.window_overlap, self.window_size
            )));
        }
        if self.architecture == Architecture::Transformer
            && (self.num_heads == 0 || !self.hidden_size.is_multiple_of(self.num_heads))
        {
            return Err(NnError::Config(format!(
                "hidden_size {} must be divisible by num_heads {}",
                self.hidden_size, self.num_heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Body {
    Gru(Vec<Bidirectional<GruCell>>),
    Lstm(Vec<Bidirectional<LstmCell>>),
    Transformer(Vec<EncoderBlock>),
}

enum BodyCache {
    Gru(Vec<BidirectionalCache<GruCell>>),
    Lstm(Vec<BidirectionalCache<LstmCell>>),
    Transformer(Vec<EncoderCache>),
}

/// Activations retained by [`SurrogateModel::forward_cached`].
pub struct ModelCache {
    x: Array2<f64>,
    body: BodyCache,
    body_out: Array2<f64>,
    batch: usize,
    steps: usize,
}

impl ModelCache {
    /// Attention weights of each encoder block (transformer only).
    pub fn attention_weights(&self) -> Vec<&Array3<f64>> {
        match &self.body {
            BodyCache::Transformer(c) => c.iter().map(|b| &b.attn.weights).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SurrogateModel {
    config: ModelConfig,
    params: ParameterSet,
    input: Linear,
    body: Body,
    output: Linear,
}

fn rnn_stack<C>(
    ps: &mut ParameterSet,
    cfg: &ModelConfig,
    rng: &mut Stream,
    make: impl Fn(&mut ParameterSet, &str, usize, usize, &mut Stream) -> C,
) -> Vec<Bidirectional<C>> {
    (0..cfg.num_layers)
        .map(|l| {
            let input = if l == 0 { cfg.hidden_size } else { 2 * cfg.hidden_size };
            Bidirectional {
                fwd: make(ps, &format!("layer{l}.fwd"), input, cfg.hidden_size, rng),
                bwd: make(ps, &format!("layer{l}.bwd"), input, cfg.hidden_size, rng),
            }
        })
        .collect()
}

fn rnn_forward<C: RecurrentCell>(
    layers: &[Bidirectional<C>],
    ps: &ParameterSet,
    mut x: Array2<f64>,
    steps: usize,
    batch: usize,
) -> Result<(Array2<f64>, Vec<BidirectionalCache<C>>), NnError> {
    let mut caches = Vec::with_capacity(layers.len());
    for layer in layers {
        let (y, c) = layer.forward(ps, &x, steps, batch)?;
        caches.push(c);
        x = y;
    }
    Ok((x, caches))
}

fn rnn_infer<C: RecurrentCell>(
    layers: &[Bidirectional<C>],
    ps: &ParameterSet,
    mut x: Array2<f64>,
    steps: usize,
    batch: usize,
) -> Result<Array2<f64>, NnError> {
    for layer in layers {
        x = layer.infer(ps, &x, steps, batch)?;
    }
    Ok(x)
}

fn rnn_backward<C: RecurrentCell>(
    layers: &[Bidirectional<C>],
    g: &mut super::GradSink,
    caches: &[BidirectionalCache<C>],
    mut dy: Array2<f64>,
) -> Array2<f64> {
    for (layer, c) in layers.iter().zip(caches).rev() {
        dy = layer.backward(g, c, &dy);
    }
    dy
}

/// `[B, T, F]` to time-major rows `t * B + b`.
fn to_time_major(a: &Array3<f64>) -> Array2<f64> {
    let (b, t, f) = a.dim();
    let p = a.view().permuted_axes([1, 0, 2]);
    Array2::from_shape_vec((t * b, f), p.iter().copied().collect()).expect("sizes agree")
}

fn from_time_major(a: &Array2<f64>, b: usize, t: usize) -> Array3<f64> {
    let f = a.ncols();
    let a = a.as_standard_layout();
    let v = a.view().into_shape_with_order((t, b, f)).expect("sizes agree");
    v.permuted_axes([1, 0, 2]).as_standard_layout().into_owned()
}

fn to_window_major(a: &Array3<f64>) -> Array2<f64> {
    let (b, t, f) = a.dim();
    a.as_standard_layout().into_owned().into_shape_with_order((b * t, f)).expect("sizes agree")
}

impl SurrogateModel {
    /// Fresh model initialized from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = Stream::keyed(config.seed, 0x006d_6f64_656c);
        let mut ps = ParameterSet::new();
        let h = config.hidden_size;
        let input = Linear::new(&mut ps, "input", config.input_dim, h, &mut rng);
        let (body, out_in) = match config.architecture {
            Architecture::Bigru => (Body::Gru(rnn_stack(&mut ps, &config, &mut rng, GruCell::new)), 2 * h),
            Architecture::Bilstm => (Body::Lstm(rnn_stack(&mut ps, &config, &mut rng, LstmCell::new)), 2 * h),
            Architecture::Transformer => {
                let blocks = (0..config.num_layers)
                    .map(|l| EncoderBlock::new(&mut ps, &format!("block{l}"), h, config.num_heads, &mut rng))
                    .collect::<Result<_, _>>()?;
                (Body::Transformer(blocks), h)
            }
        };
        let output = Linear::new(&mut ps, "output", out_in, config.output_dim, &mut rng);
        Ok(Self {
            config,
            params: ps,
            input,
            body,
            output,
        })
    }

    /// Model with the given parameter values, matched by name and shape.
    pub fn from_parts(config: ModelConfig, values: Vec<(String, Array2<f64>)>) -> Result<Self, NnError> {
        let mut model = Self::new(config)?;
        if values.len() != model.params.len() {
            return Err(NnError::Params(format!(
                "expected {} parameter arrays, got {}",
                model.params.len(),
                values.len()
            )));
        }
        for (name, value) in values {
            let id = model
                .params
                .id(&name)
                .ok_or_else(|| NnError::Params(format!("unknown parameter `{name}`")))?;
            let slot = model.params.value_mut(id);
            if slot.dim() != value.dim() {
                return Err(NnError::Params(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    value.dim(),
                    slot.dim()
                )));
            }
            *slot = value;
        }
        if !model.params.all_finite() {
            return Err(NnError::Params("non-finite parameter value".into()));
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    /// Output layer, exposed for tests and inspection.
    pub fn output_layer(&self) -> &Linear {
        &self.output
    }

    /// Predictions `[window, position, output_dim]`.
    /// Inference-only forward pass; equals `forward_cached(..).0`.
    pub fn forward(&self, windows: &Array3<f64>, mask: &Array2<bool>) -> Result<Array3<f64>, NnError> {
        let (batch, steps, _) = windows.dim();
        let layers_out = match &self.body {
            Body::Gru(layers) => rnn_infer(layers, &self.params, self.input.forward(&self.params, &self.checked_time_major(windows, mask)?)?, steps, batch)?,
            Body::Lstm(layers) => rnn_infer(layers, &self.params, self.input.forward(&self.params, &self.checked_time_major(windows, mask)?)?, steps, batch)?,
            Body::Transformer(_) => return Ok(self.forward_cached(windows, mask)?.0),
        };
        Ok(from_time_major(&self.output.forward(&self.params, &layers_out)?, batch, steps))
    }

    fn checked_time_major(&self, windows: &Array3<f64>, mask: &Array2<bool>) -> Result<Array2<f64>, NnError> {
        self.check_input(windows, mask)?;
        Ok(to_time_major(windows))
    }

    fn check_input(&self, windows: &Array3<f64>, mask: &Array2<bool>) -> Result<(), NnError> {
        let (batch, steps, features) = windows.dim();
        if features != self.config.input_dim {
            return Err(NnError::Shape(format!(
                "windows carry {features} features, model expects {}",
                self.config.input_dim
            )));
        }
        if mask.dim() != (batch, steps) {
            return Err(NnError::Shape(format!("mask {:?} does not match windows [{batch}, {steps}]", mask.dim())));
        }
        if batch == 0 || steps == 0 {
            return Err(NnError::Shape("empty window batch".into()));
        }
        Ok(())
    }

    pub fn forward_cached(&self, windows: &Array3<f64>, mask: &Array2<bool>) -> Result<(Array3<f64>, ModelCache), NnError> {
        let (batch, steps, _) = windows.dim();
        self.check_input(windows, mask)?;
        let ps = &self.params;
        let (x, body, body_out) = match &self.body {
            Body::Gru(layers) => {
                let x = to_time_major(windows);
                let (y, c) = rnn_forward(layers, ps, self.input.forward(ps, &x)?, steps, batch)?;
                (x, BodyCache::Gru(c), y)
            }
            Body::Lstm(layers) => {
                let x = to_time_major(windows);
                let (y, c) = rnn_forward(layers, ps, self.input.forward(ps, &x)?, steps, batch)?;
                (x, BodyCache::Lstm(c), y)
            }
            Body::Transformer(blocks) => {
                let x = to_window_major(windows);
                let mut h = self.input.forward(ps, &x)?;
                let pe = positional_encoding(steps, self.config.hidden_size);
                for mut chunk in h.axis_chunks_iter_mut(Axis(0), steps) {
                    chunk += &pe;
                }
                let mut caches = Vec::with_capacity(blocks.len());
                for block in blocks {
                    let (y, c) = block.forward(ps, &h, batch, steps, mask)?;
                    caches.push(c);
                    h = y;
                }
                (x, BodyCache::Transformer(caches), h)
            }
        };
        let y = self.output.forward(ps, &body_out)?;
        let out = match self.body {
            Body::Transformer(_) => y.as_standard_layout().into_owned().into_shape_with_order((batch, steps, self.config.output_dim)).expect("sizes agree"),
            _ => from_time_major(&y, batch, steps),
        };
        Ok((
            out,
            ModelCache {
                x,
                body,
                body_out,
                batch,
                steps,
            },
        ))
    }

    /// Accumulates parameter gradients for upstream gradient `d_out`
    /// (same shape as the forward output).
    pub fn backward(&mut self, cache: &ModelCache, d_out: &Array3<f64>) {
        let mut g = self.params.sink();
        let dy = match cache.body {
            BodyCache::Transformer(_) => to_window_major(d_out),
            _ => to_time_major(d_out),
        };
        debug_assert_eq!(dy.nrows(), cache.batch * cache.steps);
        let d_body = self.output.backward(&mut g, &cache.body_out, &dy);
        let d_in = match (&self.body, &cache.body) {
            (Body::Gru(l), BodyCache::Gru(c)) => rnn_backward(l, &mut g, c, d_body),
            (Body::Lstm(l), BodyCache::Lstm(c)) => rnn_backward(l, &mut g, c, d_body),
            (Body::Transformer(blocks), BodyCache::Transformer(c)) => {
                let mut d = d_body;
                for (block, bc) in blocks.iter().zip(c).rev() {
                    d = block.backward(&mut g, bc, &d);
                }
                d
            }
            _ => unreachable!("cache from a different architecture"),
        };
        self.input.backward(&mut g, &cache.x, &d_in);
    }
}
