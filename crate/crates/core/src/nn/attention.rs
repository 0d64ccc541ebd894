//! Multi-head self-attention and the pre-norm transformer encoder block.
//!
//! All layers here take window-major activations `[batch * steps, d]` and a
//! `[batch, steps]` mask; masked key positions get exactly zero attention.

use ndarray::{s, Array2, Array3, Axis};

use super::linear::Linear;
use super::params::{GradSink, ParamId, ParameterSet};
use super::{expect_shape, gelu, gelu_grad, NnError};
use crate::rng::Stream;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Sinusoidal position table `[steps, d]`.
pub fn positional_encoding(steps: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((steps, d), |(t, j)| {
        let freq = 10000f64.powf(-((j / 2 * 2) as f64) / d as f64);
        let angle = t as f64 * freq;
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub d: usize,
    pub heads: usize,
}

pub struct AttentionCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Softmax weights `[batch * heads, steps (query), steps (key)]`.
    pub weights: Array3<f64>,
    concat: Array2<f64>,
    batch: usize,
    steps: usize,
}

impl MultiHeadAttention {
    pub fn new(ps: &mut ParameterSet, name: &str, d: usize, heads: usize, rng: &mut Stream) -> Result<Self, NnError> {
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(NnError::Config(format!("model width {d} is not divisible by {heads} heads")));
        }
        Ok(Self {
            q: Linear::new(ps, &format!("{name}.query"), d, d, rng),
            k: Linear::new(ps, &format!("{name}.key"), d, d, rng),
            v: Linear::new(ps, &format!("{name}.value"), d, d, rng),
            o: Linear::new(ps, &format!("{name}.out"), d, d, rng),
            d,
            heads,
        })
    }

    pub fn forward(
        &self,
        ps: &ParameterSet,
        x: &Array2<f64>,
        batch: usize,
        steps: usize,
        mask: &Array2<bool>,
    ) -> Result<(Array2<f64>, AttentionCache), NnError> {
        expect_shape("attention input", x, Some(batch * steps), self.d)?;
        if mask.dim() != (batch, steps) {
            return Err(NnError::Shape(format!("attention mask {:?}, expected [{batch}, {steps}]", mask.dim())));
        }
        let q = self.q.forward(ps, x)?;
        let k = self.k.forward(ps, x)?;
        let v = self.v.forward(ps, x)?;
        let dh = self.d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut weights = Array3::zeros((batch * self.heads, steps, steps));
        let mut concat = Array2::zeros((batch * steps, self.d));
        for b in 0..batch {
            let rows = b * steps..(b + 1) * steps;
            let keep = mask.row(b);
            for h in 0..self.heads {
                let cols = h * dh..(h + 1) * dh;
                let qh = q.slice(s![rows.clone(), cols.clone()]);
                let kh = k.slice(s![rows.clone(), cols.clone()]);
                let vh = v.slice(s![rows.clone(), cols.clone()]);
                let mut a = weights.index_axis_mut(Axis(0), b * self.heads + h);
                a.assign(&(qh.dot(&kh.t()) * scale));
                for mut row in a.rows_mut() {
                    let max = row
                        .iter()
                        .zip(keep.iter())
                        .filter(|(_, &m)| m)
                        .fold(f64::NEG_INFINITY, |acc, (&s, _)| acc.max(s));
                    let mut total = 0.0;
                    for (s, &m) in row.iter_mut().zip(keep.iter()) {
                        *s = if m { (*s - max).exp() } else { 0.0 };
                        total += *s;
                    }
                    if total > 0.0 {
                        row.mapv_inplace(|s| s / total);
                    }
                }
                concat.slice_mut(s![rows.clone(), cols]).assign(&a.dot(&vh));
            }
        }
        let out = self.o.forward(ps, &concat)?;
        Ok((
            out,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                weights,
                concat,
                batch,
                steps,
            },
        ))
    }

    pub fn backward(&self, g: &mut GradSink, c: &AttentionCache, dy: &Array2<f64>) -> Array2<f64> {
        let d_concat = self.o.backward(g, &c.concat, dy);
        let dh = self.d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Array2::zeros(c.q.dim());
        let mut dk = Array2::zeros(c.k.dim());
        let mut dv = Array2::zeros(c.v.dim());
        for b in 0..c.batch {
            let rows = b * c.steps..(b + 1) * c.steps;
            for h in 0..self.heads {
                let cols = h * dh..(h + 1) * dh;
                let a = c.weights.index_axis(Axis(0), b * self.heads + h);
                let d_o = d_concat.slice(s![rows.clone(), cols.clone()]);
                let qh = c.q.slice(s![rows.clone(), cols.clone()]);
                let kh = c.k.slice(s![rows.clone(), cols.clone()]);
                let vh = c.v.slice(s![rows.clone(), cols.clone()]);
                let da = d_o.dot(&vh.t());
                dv.slice_mut(s![rows.clone(), cols.clone()]).assign(&a.t().dot(&d_o));
                // softmax backward, row-wise
                let inner = (&da * &a).sum_axis(Axis(1)).insert_axis(Axis(1));
                let ds = (&a * &(&da - &inner)) * scale;
                dq.slice_mut(s![rows.clone(), cols.clone()]).assign(&ds.dot(&kh));
                dk.slice_mut(s![rows.clone(), cols]).assign(&ds.t().dot(&qh));
            }
        }
        let mut dx = self.q.backward(g, &c.x, &dq);
        dx += &self.k.backward(g, &c.x, &dk);
        dx += &self.v.backward(g, &c.x, &dv);
        dx
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub d: usize,
}

pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array2<f64>,
}

impl LayerNorm {
    pub fn new(ps: &mut ParameterSet, name: &str, d: usize) -> Self {
        Self {
            gamma: ps.add(format!("{name}.gamma"), Array2::ones((1, d))),
            beta: ps.add(format!("{name}.beta"), Array2::zeros((1, d))),
            d,
        }
    }

    pub fn forward(&self, ps: &ParameterSet, x: &Array2<f64>) -> Result<(Array2<f64>, LayerNormCache), NnError> {
        expect_shape("layer norm input", x, None, self.d)?;
        let mean = x.mean_axis(Axis(1)).expect("non-empty").insert_axis(Axis(1));
        let centered = x - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(1)).expect("non-empty").insert_axis(Axis(1));
        let inv_std = var.mapv(|v| 1.0 / (v + LAYER_NORM_EPS).sqrt());
        let xhat = centered * &inv_std;
        let y = &xhat * ps.value(self.gamma) + ps.value(self.beta);
        Ok((y, LayerNormCache { xhat, inv_std }))
    }

    pub fn backward(&self, g: &mut GradSink, c: &LayerNormCache, dy: &Array2<f64>) -> Array2<f64> {
        *g.grad_mut(self.gamma) += &(dy * &c.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
        *g.grad_mut(self.beta) += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dxhat = dy * g.value(self.gamma);
        let m1 = dxhat.mean_axis(Axis(1)).expect("non-empty").insert_axis(Axis(1));
        let m2 = (&dxhat * &c.xhat).mean_axis(Axis(1)).expect("non-empty").insert_axis(Axis(1));
        (dxhat - &m1 - &(&c.xhat * &m2)) * &c.inv_std
    }
}

/// Position-wise `Linear(d, 4d) -> GELU -> Linear(4d, d)`.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

pub struct FeedForwardCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

impl FeedForward {
    pub fn new(ps: &mut ParameterSet, name: &str, d: usize, rng: &mut Stream) -> Self {
        Self {
            inner: Linear::new(ps, &format!("{name}.inner"), d, 4 * d, rng),
            outer: Linear::new(ps, &format!("{name}.outer"), 4 * d, d, rng),
        }
    }

    pub fn forward(&self, ps: &ParameterSet, x: &Array2<f64>) -> Result<(Array2<f64>, FeedForwardCache), NnError> {
        let pre = self.inner.forward(ps, x)?;
        let act = pre.mapv(gelu);
        let y = self.outer.forward(ps, &act)?;
        Ok((y, FeedForwardCache { x: x.clone(), pre, act }))
    }

    pub fn backward(&self, g: &mut GradSink, c: &FeedForwardCache, dy: &Array2<f64>) -> Array2<f64> {
        let d_act = self.outer.backward(g, &c.act, dy);
        let d_pre = d_act * &c.pre.mapv(gelu_grad);
        self.inner.backward(g, &c.x, &d_pre)
    }
}

/// `h = x + MHA(LN1(x)); y = h + FF(LN2(h))`.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ff: FeedForward,
}

pub struct EncoderCache {
    ln1: LayerNormCache,
    pub attn: AttentionCache,
    ln2: LayerNormCache,
    ff: FeedForwardCache,
}

impl EncoderBlock {
    pub fn new(ps: &mut ParameterSet, name: &str, d: usize, heads: usize, rng: &mut Stream) -> Result<Self, NnError> {
        Ok(Self {
            ln1: LayerNorm::new(ps, &format!("{name}.ln1"), d),
            attn: MultiHeadAttention::new(ps, &format!("{name}.attn"), d, heads, rng)?,
            ln2: LayerNorm::new(ps, &format!("{name}.ln2"), d),
            ff: FeedForward::new(ps, &format!("{name}.ff"), d, rng),
        })
    }

    pub fn forward(
        &self,
        ps: &ParameterSet,
        x: &Array2<f64>,
        batch: usize,
        steps: usize,
        mask: &Array2<bool>,
    ) -> Result<(Array2<f64>, EncoderCache), NnError> {
        let (n1, ln1) = self.ln1.forward(ps, x)?;
        let (a, attn) = self.attn.forward(ps, &n1, batch, steps, mask)?;
        let h = x + &a;
        let (n2, ln2) = self.ln2.forward(ps, &h)?;
        let (f, ff) = self.ff.forward(ps, &n2)?;
        Ok((h + &f, EncoderCache { ln1, attn, ln2, ff }))
    }

    pub fn backward(&self, g: &mut GradSink, c: &EncoderCache, dy: &Array2<f64>) -> Array2<f64> {
        let d_n2 = self.ff.backward(g, &c.ff, dy);
        let dh = dy + &self.ln2.backward(g, &c.ln2, &d_n2);
        let d_n1 = self.attn.backward(g, &c.attn, &dh);
        &dh + &self.ln1.backward(g, &c.ln1, &d_n1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_attention(ps: &mut ParameterSet, d: usize, heads: usize) -> MultiHeadAttention {
        let mha = MultiHeadAttention::new(ps, "a", d, heads, &mut Stream::new(1)).unwrap();
        for lin in [&mha.q, &mha.k, &mha.v, &mha.o] {
            ps.value_mut(lin.w).assign(&Array2::eye(d));
            ps.value_mut(lin.b).fill(0.0);
        }
        mha
    }

    #[test]
    fn single_position_returns_value() {
        let mut ps = ParameterSet::new();
        let mha = identity_attention(&mut ps, 4, 2);
        let x = Array2::from_shape_vec((1, 4), vec![0.3, -1.0, 2.0, 0.5]).unwrap();
        let (y, _) = mha.forward(&ps, &x, 1, 1, &Array2::from_elem((1, 1), true)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn identical_positions_split_evenly() {
        let mut ps = ParameterSet::new();
        let mha = identity_attention(&mut ps, 4, 2);
        let x = Array2::from_shape_fn((2, 4), |(_, j)| j as f64 * 0.25);
        let (_, c) = mha.forward(&ps, &x, 1, 2, &Array2::from_elem((1, 2), true)).unwrap();
        assert!(c.weights.iter().all(|w| *w == 0.5));
    }

    #[test]
    fn masked_keys_get_zero_weight_and_rows_sum_to_one() {
        let mut ps = ParameterSet::new();
        let mha = MultiHeadAttention::new(&mut ps, "a", 6, 3, &mut Stream::new(7)).unwrap();
        let mut rng = Stream::new(8);
        let x = Array2::from_shape_simple_fn((2 * 5, 6), || rng.uniform_range(-2.0, 2.0));
        let mut mask = Array2::from_elem((2, 5), true);
        mask.slice_mut(s![1, 3..]).fill(false);
        let (_, c) = mha.forward(&ps, &x, 2, 5, &mask).unwrap();
        for bh in 0..6 {
            let b = bh / 3;
            for row in c.weights.index_axis(Axis(0), bh).rows() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
                for (t, w) in row.iter().enumerate() {
                    if !mask[[b, t]] {
                        assert_eq!(*w, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn indivisible_heads_rejected() {
        let mut ps = ParameterSet::new();
        assert!(matches!(
            MultiHeadAttention::new(&mut ps, "a", 6, 4, &mut Stream::new(1)),
            Err(NnError::Config(_))
        ));
    }

    #[test]
    fn layer_norm_normalizes_rows() {
        let mut ps = ParameterSet::new();
        let ln = LayerNorm::new(&mut ps, "ln", 5);
        let x = Array2::from_shape_fn((3, 5), |(i, j)| (i * 7 + j * j) as f64);
        let (y, _) = ln.forward(&ps, &x).unwrap();
        for row in y.rows() {
            assert!(row.mean().unwrap().abs() < 1e-12);
            let var = row.mapv(|v| v * v).mean().unwrap();
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn positional_encoding_first_row() {
        let pe = positional_encoding(3, 4);
        assert_eq!(pe.row(0).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
        assert!((pe[[1, 0]] - 1f64.sin()).abs() < 1e-15);
        assert!((pe[[1, 2]] - 0.01f64.sin()).abs() < 1e-15);
    }
}
