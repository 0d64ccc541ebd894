//! GRU and LSTM cells and the bidirectional sequence wrapper.
//!
//! Both cells split their input contribution `x W_x + b` from the recurrent
//! part so a whole sequence can be projected with one matrix product.
//! Gate blocks are laid out along columns: GRU `[z | r | n]`, LSTM
//! `[i | f | g | o]`.

use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array2, Array3, ArrayView2, Axis, Zip};

use super::params::{GradSink, ParamId, ParameterSet};
use super::{expect_shape, sigmoid, NnError};
use crate::rng::Stream;

/// A recurrent cell stepped over pre-projected inputs.
pub trait RecurrentCell {
    type State: Clone;
    type Cache;

    fn input_dim(&self) -> usize;
    fn hidden(&self) -> usize;
    /// Width of the stacked gate pre-activations (columns of `W_x`).
    fn gate_width(&self) -> usize;
    fn w_x(&self) -> ParamId;
    fn bias(&self) -> ParamId;
    fn zero_state(&self, batch: usize) -> Self::State;
    fn output(state: &Self::State) -> &Array2<f64>;
    fn output_mut(state: &mut Self::State) -> &mut Array2<f64>;

    /// One step from the input projection `px = x W_x + b`.
    fn step(&self, ps: &ParameterSet, px: ArrayView2<f64>, prev: &Self::State) -> (Self::State, Self::Cache);

    /// `step` without building a backward cache. Must return the same state
    /// bit for bit.
    fn advance(&self, ps: &ParameterSet, px: ArrayView2<f64>, prev: &Self::State) -> Self::State {
        self.step(ps, px, prev).0
    }

    /// Given the gradient w.r.t. the new state, accumulates recurrent weight
    /// gradients and returns (gradient w.r.t. `px`, gradient w.r.t. `prev`).
    fn step_backward(&self, g: &mut GradSink, cache: &Self::Cache, d_state: &Self::State) -> (Array2<f64>, Self::State);

    fn project(&self, ps: &ParameterSet, x: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        expect_shape("recurrent input", x, None, self.input_dim())?;
        Ok(x.dot(ps.value(self.w_x())) + ps.value(self.bias()))
    }

    /// Folds the projection gradient back into `W_x`, `b` and the input.
    fn project_backward(&self, g: &mut GradSink, x: &Array2<f64>, d_px: &Array2<f64>) -> Array2<f64> {
        general_mat_mul(1.0, &x.t(), d_px, 1.0, g.grad_mut(self.w_x()));
        *g.grad_mut(self.bias()) += &d_px.sum_axis(Axis(0)).insert_axis(Axis(0));
        d_px.dot(&g.value(self.w_x()).t())
    }
}

#[derive(Debug, Clone)]
pub struct GruCell {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    input: usize,
    hidden: usize,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    h_prev: Array2<f64>,
    z: Array2<f64>,
    r: Array2<f64>,
    n: Array2<f64>,
    rh: Array2<f64>,
}

impl GruCell {
    pub fn new(ps: &mut ParameterSet, name: &str, input: usize, hidden: usize, rng: &mut Stream) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_x: ps.add_uniform(format!("{name}.w_x"), input, 3 * hidden, bound, rng),
            w_h: ps.add_uniform(format!("{name}.w_h"), hidden, 3 * hidden, bound, rng),
            b: ps.add_uniform(format!("{name}.bias"), 1, 3 * hidden, bound, rng),
            input,
            hidden,
        }
    }

    /// `h_t` for input `x_t` and previous state `h_prev`.
    pub fn forward(&self, ps: &ParameterSet, x: &Array2<f64>, h_prev: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        expect_shape("gru state", h_prev, Some(x.nrows()), self.hidden)?;
        let px = self.project(ps, x)?;
        Ok(self.step(ps, px.view(), h_prev).0)
    }
}

impl RecurrentCell for GruCell {
    type State = Array2<f64>;
    type Cache = GruCache;

    fn input_dim(&self) -> usize {
        self.input
    }
    fn hidden(&self) -> usize {
        self.hidden
    }
    fn gate_width(&self) -> usize {
        3 * self.hidden
    }
    fn w_x(&self) -> ParamId {
        self.w_x
    }
    fn bias(&self) -> ParamId {
        self.b
    }
    fn zero_state(&self, batch: usize) -> Array2<f64> {
        Array2::zeros((batch, self.hidden))
    }
    fn output(state: &Array2<f64>) -> &Array2<f64> {
        state
    }
    fn output_mut(state: &mut Array2<f64>) -> &mut Array2<f64> {
        state
    }

    fn step(&self, ps: &ParameterSet, px: ArrayView2<f64>, h_prev: &Array2<f64>) -> (Array2<f64>, GruCache) {
        let h = self.hidden;
        let wh = ps.value(self.w_h);
        let hh = h_prev.dot(&wh.slice(s![.., ..2 * h]));
        let z = (&px.slice(s![.., ..h]) + &hh.slice(s![.., ..h])).mapv(sigmoid);
        let r = (&px.slice(s![.., h..2 * h]) + &hh.slice(s![.., h..])).mapv(sigmoid);
        let rh = &r * h_prev;
        let n = (&px.slice(s![.., 2 * h..]) + &rh.dot(&wh.slice(s![.., 2 * h..]))).mapv(f64::tanh);
        let h_new = h_prev + &(&z * &(&n - h_prev));
        let cache = GruCache {
            h_prev: h_prev.clone(),
            z,
            r,
            n,
            rh,
        };
        (h_new, cache)
    }

    fn advance(&self, ps: &ParameterSet, px: ArrayView2<f64>, h_prev: &Array2<f64>) -> Array2<f64> {
        let h = self.hidden;
        let wh = ps.value(self.w_h);
        let hh = h_prev.dot(&wh.slice(s![.., ..2 * h]));
        let mut z = Array2::zeros(h_prev.raw_dim());
        Zip::from(&mut z)
            .and(px.slice(s![.., ..h]))
            .and(hh.slice(s![.., ..h]))
            .for_each(|z, &p, &q| *z = sigmoid(p + q));
        let mut rh = Array2::zeros(h_prev.raw_dim());
        Zip::from(&mut rh)
            .and(px.slice(s![.., h..2 * h]))
            .and(hh.slice(s![.., h..]))
            .and(h_prev)
            .for_each(|rh, &p, &q, &hp| *rh = sigmoid(p + q) * hp);
        let mut out = rh.dot(&wh.slice(s![.., 2 * h..]));
        Zip::from(&mut out)
            .and(px.slice(s![.., 2 * h..]))
            .and(&z)
            .and(h_prev)
            .for_each(|o, &p, &z, &hp| {
                let n = (p + *o).tanh();
                *o = hp + z * (n - hp);
            });
        out
    }

    fn step_backward(&self, g: &mut GradSink, c: &GruCache, dh_new: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let h = self.hidden;
        let dz = dh_new * &(&c.n - &c.h_prev);
        let dn = dh_new * &c.z;
        let mut dh = dh_new * &c.z.mapv(|z| 1.0 - z);
        let dn_pre = &dn * &c.n.mapv(|n| 1.0 - n * n);

        let (wh, gwh) = g.value_and_grad(self.w_h, self.w_h);
        let wh_n = wh.slice(s![.., 2 * h..]);
        let d_rh = dn_pre.dot(&wh_n.t());
        general_mat_mul(1.0, &c.rh.t(), &dn_pre, 1.0, &mut gwh.slice_mut(s![.., 2 * h..]));
        let dr = &d_rh * &c.h_prev;
        dh += &(&d_rh * &c.r);
        let dz_pre = &dz * &c.z.mapv(|z| z * (1.0 - z));
        let dr_pre = &dr * &c.r.mapv(|r| r * (1.0 - r));
        let d_zr = concatenate![Axis(1), dz_pre, dr_pre];
        general_mat_mul(1.0, &c.h_prev.t(), &d_zr, 1.0, &mut gwh.slice_mut(s![.., ..2 * h]));
        dh += &d_zr.dot(&wh.slice(s![.., ..2 * h]).t());
        (concatenate![Axis(1), d_zr, dn_pre], dh)
    }
}

#[derive(Debug, Clone)]
pub struct LstmCell {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    input: usize,
    hidden: usize,
}

#[derive(Debug, Clone)]
pub struct LstmState {
    pub h: Array2<f64>,
    pub c: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    tc: Array2<f64>,
}

impl LstmCell {
    pub fn new(ps: &mut ParameterSet, name: &str, input: usize, hidden: usize, rng: &mut Stream) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_x: ps.add_uniform(format!("{name}.w_x"), input, 4 * hidden, bound, rng),
            w_h: ps.add_uniform(format!("{name}.w_h"), hidden, 4 * hidden, bound, rng),
            b: ps.add_uniform(format!("{name}.bias"), 1, 4 * hidden, bound, rng),
            input,
            hidden,
        }
    }

    /// `(h_t, c_t)` for input `x_t` and previous state.
    pub fn forward(&self, ps: &ParameterSet, x: &Array2<f64>, prev: &LstmState) -> Result<LstmState, NnError> {
        expect_shape("lstm hidden state", &prev.h, Some(x.nrows()), self.hidden)?;
        expect_shape("lstm cell state", &prev.c, Some(x.nrows()), self.hidden)?;
        let px = self.project(ps, x)?;
        Ok(self.step(ps, px.view(), prev).0)
    }
}

impl RecurrentCell for LstmCell {
    type State = LstmState;
    type Cache = LstmCache;

    fn input_dim(&self) -> usize {
        self.input
    }
    fn hidden(&self) -> usize {
        self.hidden
    }
    fn gate_width(&self) -> usize {
        4 * self.hidden
    }
    fn w_x(&self) -> ParamId {
        self.w_x
    }
    fn bias(&self) -> ParamId {
        self.b
    }
    fn zero_state(&self, batch: usize) -> LstmState {
        LstmState {
            h: Array2::zeros((batch, self.hidden)),
            c: Array2::zeros((batch, self.hidden)),
        }
    }
    fn output(state: &LstmState) -> &Array2<f64> {
        &state.h
    }
    fn output_mut(state: &mut LstmState) -> &mut Array2<f64> {
        &mut state.h
    }

    fn step(&self, ps: &ParameterSet, px: ArrayView2<f64>, prev: &LstmState) -> (LstmState, LstmCache) {
        let h = self.hidden;
        let pre = &px + &prev.h.dot(ps.value(self.w_h));
        let i = pre.slice(s![.., ..h]).mapv(sigmoid);
        let f = pre.slice(s![.., h..2 * h]).mapv(sigmoid);
        let g = pre.slice(s![.., 2 * h..3 * h]).mapv(f64::tanh);
        let o = pre.slice(s![.., 3 * h..]).mapv(sigmoid);
        let c = &f * &prev.c + &i * &g;
        let tc = c.mapv(f64::tanh);
        let h_new = &o * &tc;
        let cache = LstmCache {
            h_prev: prev.h.clone(),
            c_prev: prev.c.clone(),
            i,
            f,
            g,
            o,
            tc,
        };
        (LstmState { h: h_new, c }, cache)
    }

    fn advance(&self, ps: &ParameterSet, px: ArrayView2<f64>, prev: &LstmState) -> LstmState {
        let h = self.hidden;
        let pre = &px + &prev.h.dot(ps.value(self.w_h));
        let mut c = prev.c.clone();
        let mut h_new = Array2::zeros(prev.h.raw_dim());
        Zip::from(&mut c)
            .and(&mut h_new)
            .and(pre.slice(s![.., ..h]))
            .and(pre.slice(s![.., h..2 * h]))
            .and(pre.slice(s![.., 2 * h..3 * h]))
            .and(pre.slice(s![.., 3 * h..]))
            .for_each(|c, hn, &i, &f, &g, &o| {
                *c = sigmoid(f) * *c + sigmoid(i) * g.tanh();
                *hn = sigmoid(o) * c.tanh();
            });
        LstmState { h: h_new, c }
    }

    fn step_backward(&self, gs: &mut GradSink, k: &LstmCache, d: &LstmState) -> (Array2<f64>, LstmState) {
        let d_o = &d.h * &k.tc;
        let dc = &d.c + &(&d.h * &k.o * &k.tc.mapv(|t| 1.0 - t * t));
        let d_i = &dc * &k.g;
        let d_g = &dc * &k.i;
        let d_f = &dc * &k.c_prev;
        let dc_prev = &dc * &k.f;
        let d_pre = concatenate![
            Axis(1),
            d_i * &k.i.mapv(|v| v * (1.0 - v)),
            d_f * &k.f.mapv(|v| v * (1.0 - v)),
            d_g * &k.g.mapv(|v| 1.0 - v * v),
            d_o * &k.o.mapv(|v| v * (1.0 - v))
        ];
        let (wh, gwh) = gs.value_and_grad(self.w_h, self.w_h);
        general_mat_mul(1.0, &k.h_prev.t(), &d_pre, 1.0, gwh);
        let dh_prev = d_pre.dot(&wh.t());
        (d_pre, LstmState { h: dh_prev, c: dc_prev })
    }
}

/// Per-direction activations kept for the backward pass.
pub struct DirectionCache<C: RecurrentCell> {
    steps: Vec<C::Cache>,
}

/// Forward and backward cells over one sequence, outputs concatenated as
/// `[forward | backward]` per position.
#[derive(Debug, Clone)]
pub struct Bidirectional<C> {
    pub fwd: C,
    pub bwd: C,
}

pub struct BidirectionalCache<C: RecurrentCell> {
    x: Array2<f64>,
    steps: usize,
    batch: usize,
    fwd: DirectionCache<C>,
    bwd: DirectionCache<C>,
}

fn time_rows(t: usize, batch: usize) -> std::ops::Range<usize> {
    t * batch..(t + 1) * batch
}

fn run_direction<C: RecurrentCell>(
    cell: &C,
    ps: &ParameterSet,
    px: &Array2<f64>,
    steps: usize,
    batch: usize,
    reverse: bool,
) -> (Array2<f64>, DirectionCache<C>) {
    let mut out = Array2::zeros((steps * batch, cell.hidden()));
    let mut state = cell.zero_state(batch);
    let mut caches = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = if reverse { steps - 1 - k } else { k };
        let (next, cache) = cell.step(ps, px.slice(s![time_rows(t, batch), ..]), &state);
        out.slice_mut(s![time_rows(t, batch), ..]).assign(C::output(&next));
        caches.push(cache);
        state = next;
    }
    (out, DirectionCache { steps: caches })
}

fn infer_direction<C: RecurrentCell>(
    cell: &C,
    ps: &ParameterSet,
    px: &Array2<f64>,
    steps: usize,
    batch: usize,
    reverse: bool,
) -> Array2<f64> {
    let mut out = Array2::zeros((steps * batch, cell.hidden()));
    let mut state = cell.zero_state(batch);
    for k in 0..steps {
        let t = if reverse { steps - 1 - k } else { k };
        state = cell.advance(ps, px.slice(s![time_rows(t, batch), ..]), &state);
        out.slice_mut(s![time_rows(t, batch), ..]).assign(C::output(&state));
    }
    out
}

fn backprop_direction<C: RecurrentCell>(
    cell: &C,
    g: &mut GradSink,
    cache: &DirectionCache<C>,
    d_out: ndarray::ArrayView2<f64>,
    steps: usize,
    batch: usize,
    reverse: bool,
) -> Array2<f64> {
    let mut d_px = Array2::zeros((steps * batch, cell.gate_width()));
    let mut d_state = cell.zero_state(batch);
    for k in (0..steps).rev() {
        let t = if reverse { steps - 1 - k } else { k };
        *C::output_mut(&mut d_state) += &d_out.slice(s![time_rows(t, batch), ..]);
        let (dp, prev) = cell.step_backward(g, &cache.steps[k], &d_state);
        d_px.slice_mut(s![time_rows(t, batch), ..]).assign(&dp);
        d_state = prev;
    }
    d_px
}

impl<C: RecurrentCell> Bidirectional<C> {
    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    /// Time-major input `[steps * batch, in]` to `[steps * batch, 2 * hidden]`.
    pub fn forward(
        &self,
        ps: &ParameterSet,
        x: &Array2<f64>,
        steps: usize,
        batch: usize,
    ) -> Result<(Array2<f64>, BidirectionalCache<C>), NnError> {
        if steps == 0 {
            return Err(NnError::Shape("bidirectional layer needs a non-empty sequence".into()));
        }
        expect_shape("bidirectional input", x, Some(steps * batch), self.fwd.input_dim())?;
        let (of, cf) = run_direction(&self.fwd, ps, &self.fwd.project(ps, x)?, steps, batch, false);
        let (ob, cb) = run_direction(&self.bwd, ps, &self.bwd.project(ps, x)?, steps, batch, true);
        let out = concatenate![Axis(1), of, ob];
        Ok((
            out,
            BidirectionalCache {
                x: x.clone(),
                steps,
                batch,
                fwd: cf,
                bwd: cb,
            },
        ))
    }

    /// Same output as [`Self::forward`] without keeping activations.
    pub fn infer(&self, ps: &ParameterSet, x: &Array2<f64>, steps: usize, batch: usize) -> Result<Array2<f64>, NnError> {
        if steps == 0 {
            return Err(NnError::Shape("bidirectional layer needs a non-empty sequence".into()));
        }
        expect_shape("bidirectional input", x, Some(steps * batch), self.fwd.input_dim())?;
        let of = infer_direction(&self.fwd, ps, &self.fwd.project(ps, x)?, steps, batch, false);
        let ob = infer_direction(&self.bwd, ps, &self.bwd.project(ps, x)?, steps, batch, true);
        Ok(concatenate![Axis(1), of, ob])
    }

    /// Convenience wrapper over `[T, batch, in]` arrays.
    pub fn forward_sequence(&self, ps: &ParameterSet, seq: &Array3<f64>) -> Result<Array3<f64>, NnError> {
        let (t, b, f) = seq.dim();
        let x = seq
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((t * b, f))
            .expect("contiguous");
        let (out, _) = self.forward(ps, &x, t, b)?;
        Ok(out
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((t, b, 2 * self.hidden()))
            .expect("contiguous"))
    }

    pub fn backward(&self, g: &mut GradSink, cache: &BidirectionalCache<C>, dy: &Array2<f64>) -> Array2<f64> {
        let h = self.hidden();
        let (steps, batch) = (cache.steps, cache.batch);
        let dpf = backprop_direction(&self.fwd, g, &cache.fwd, dy.slice(s![.., ..h]), steps, batch, false);
        let dpb = backprop_direction(&self.bwd, g, &cache.bwd, dy.slice(s![.., h..]), steps, batch, true);
        let dx = self.fwd.project_backward(g, &cache.x, &dpf);
        dx + self.bwd.project_backward(g, &cache.x, &dpb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeroed(ps: &mut ParameterSet) {
        for id in ps.ids().collect::<Vec<_>>() {
            ps.value_mut(id).fill(0.0);
        }
    }

    #[test]
    fn gru_zero_params_halve_state() {
        let mut ps = ParameterSet::new();
        let cell = GruCell::new(&mut ps, "g", 3, 4, &mut Stream::new(1));
        zeroed(&mut ps);
        let x = Array2::from_shape_fn((2, 3), |(i, j)| (i + j) as f64 - 1.5);
        let h = Array2::from_shape_fn((2, 4), |(i, j)| 0.3 * i as f64 - 0.2 * j as f64);
        let px = cell.project(&ps, &x).unwrap();
        let (out, cache) = cell.step(&ps, px.view(), &h);
        assert!(cache.z.iter().all(|v| *v == 0.5));
        assert!(cache.r.iter().all(|v| *v == 0.5));
        assert!(cache.n.iter().all(|v| *v == 0.0));
        assert_eq!(out, h.mapv(|v| 0.5 * v));
    }

    #[test]
    fn gru_zero_state_and_candidate_weights_stay_zero() {
        let mut ps = ParameterSet::new();
        let cell = GruCell::new(&mut ps, "g", 3, 4, &mut Stream::new(2));
        // zero the candidate columns of W_x, W_h and the bias
        for id in [cell.w_x, cell.w_h, cell.b] {
            ps.value_mut(id).slice_mut(s![.., 8..]).fill(0.0);
        }
        let x = Array2::from_elem((2, 3), 0.7);
        let out = cell.forward(&ps, &x, &Array2::zeros((2, 4))).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lstm_zero_params() {
        let mut ps = ParameterSet::new();
        let cell = LstmCell::new(&mut ps, "l", 3, 2, &mut Stream::new(3));
        zeroed(&mut ps);
        let prev = LstmState {
            h: Array2::from_elem((1, 2), 0.4),
            c: Array2::from_shape_vec((1, 2), vec![1.2, -0.6]).unwrap(),
        };
        let out = cell.forward(&ps, &Array2::from_elem((1, 3), 2.0), &prev).unwrap();
        let c = prev.c.mapv(|v| 0.5 * v);
        assert_eq!(out.c, c);
        assert_eq!(out.h, c.mapv(|v| 0.5 * v.tanh()));
    }

    #[test]
    fn lstm_zero_cell_and_candidate_weights() {
        let mut ps = ParameterSet::new();
        let cell = LstmCell::new(&mut ps, "l", 3, 2, &mut Stream::new(4));
        for id in [cell.w_x, cell.w_h, cell.b] {
            ps.value_mut(id).slice_mut(s![.., 4..6]).fill(0.0);
        }
        let out = cell.forward(&ps, &Array2::from_elem((2, 3), -0.3), &cell.zero_state(2)).unwrap();
        assert!(out.c.iter().chain(out.h.iter()).all(|v| *v == 0.0));
    }

    #[test]
    fn cell_shape_errors() {
        let mut ps = ParameterSet::new();
        let gru = GruCell::new(&mut ps, "g", 3, 4, &mut Stream::new(1));
        assert!(gru.forward(&ps, &Array2::zeros((2, 5)), &Array2::zeros((2, 4))).is_err());
        assert!(gru.forward(&ps, &Array2::zeros((2, 3)), &Array2::zeros((2, 3))).is_err());
    }

    #[test]
    fn single_step_is_concat_of_both_directions() {
        let mut ps = ParameterSet::new();
        let mut rng = Stream::new(9);
        let layer = Bidirectional {
            fwd: GruCell::new(&mut ps, "f", 2, 3, &mut rng),
            bwd: GruCell::new(&mut ps, "b", 2, 3, &mut rng),
        };
        let x = Array2::from_shape_vec((1, 2), vec![0.4, -1.1]).unwrap();
        let (out, _) = layer.forward(&ps, &x, 1, 1).unwrap();
        let f = layer.fwd.forward(&ps, &x, &Array2::zeros((1, 3))).unwrap();
        let b = layer.bwd.forward(&ps, &x, &Array2::zeros((1, 3))).unwrap();
        assert_eq!(out, concatenate![Axis(1), f, b]);
    }

    #[test]
    fn palindrome_symmetry() {
        let mut ps = ParameterSet::new();
        let mut rng = Stream::new(10);
        let fwd = LstmCell::new(&mut ps, "f", 2, 3, &mut rng);
        let layer = Bidirectional { fwd: fwd.clone(), bwd: fwd };
        let vals = [[0.1, 0.5], [-0.7, 0.2], [0.9, -0.4], [-0.7, 0.2], [0.1, 0.5]];
        let seq = Array3::from_shape_fn((5, 1, 2), |(t, _, f)| vals[t][f]);
        let out = layer.forward_sequence(&ps, &seq).unwrap();
        for t in 0..5 {
            for j in 0..3 {
                assert!((out[[t, 0, j]] - out[[4 - t, 0, 3 + j]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let mut ps = ParameterSet::new();
        let mut rng = Stream::new(1);
        let layer = Bidirectional {
            fwd: GruCell::new(&mut ps, "f", 2, 3, &mut rng),
            bwd: GruCell::new(&mut ps, "b", 2, 3, &mut rng),
        };
        assert!(layer.forward(&ps, &Array2::zeros((0, 2)), 0, 1).is_err());
    }
}
