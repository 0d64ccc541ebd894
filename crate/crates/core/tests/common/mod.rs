//! Oracles and fixtures shared by the integration tests and the acceptance
//! runner.
#![allow(dead_code)]

use gridsurrogate::nn::attention::MultiHeadAttention;
use gridsurrogate::nn::recurrent::LstmState;
use gridsurrogate::nn::{
    Architecture, Bidirectional, GruCell, LstmCell, ModelConfig, ParameterSet, RecurrentCell, SurrogateModel,
};
use gridsurrogate::preprocess::{make_windows, WindowBatch};
use gridsurrogate::rng::Stream;
use gridsurrogate::trace_io::SampleRow;
use gridsurrogate::train::mse_loss_grad;
use ndarray::{Array2, Array3};

/// Relative error with a small absolute floor so that two near-zero
/// gradients compare equal.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Worst relative error between the gradients stored in `ps` and central
/// differences of `loss` over every scalar parameter.
pub fn param_grad_error(ps: &ParameterSet, step: f64, loss: impl Fn(&ParameterSet) -> f64) -> f64 {
    let mut probe = ps.clone();
    let mut worst = 0.0f64;
    for id in ps.ids() {
        let (rows, cols) = ps.value(id).dim();
        for r in 0..rows {
            for c in 0..cols {
                let orig = ps.value(id)[[r, c]];
                probe.value_mut(id)[[r, c]] = orig + step;
                let up = loss(&probe);
                probe.value_mut(id)[[r, c]] = orig - step;
                let down = loss(&probe);
                probe.value_mut(id)[[r, c]] = orig;
                worst = worst.max(rel_err(ps.grad(id)[[r, c]], (up - down) / (2.0 * step)));
            }
        }
    }
    worst
}

/// Same comparison for a free input array.
pub fn input_grad_error(x: &Array2<f64>, grad: &Array2<f64>, step: f64, loss: impl Fn(&Array2<f64>) -> f64) -> f64 {
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for idx in ndarray::indices(x.dim()) {
        let orig = x[idx];
        probe[idx] = orig + step;
        let up = loss(&probe);
        probe[idx] = orig - step;
        let down = loss(&probe);
        probe[idx] = orig;
        worst = worst.max(rel_err(grad[idx], (up - down) / (2.0 * step)));
    }
    worst
}

pub fn random(rows: usize, cols: usize, rng: &mut Stream) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.uniform_range(-1.0, 1.0))
}

fn weighted(y: &Array2<f64>, w: &Array2<f64>) -> f64 {
    (y * w).sum()
}

pub const CELL_STEP: f64 = 1e-3;
pub const CELL_TOL: f64 = 1e-4;
pub const MODEL_TOL: f64 = 1e-3;

/// GRU cell, batch 3, input 3, hidden 4: worst error over parameters,
/// input and previous state.
pub fn gru_cell_grad_error() -> f64 {
    let mut rng = Stream::new(101);
    let mut ps = ParameterSet::new();
    let cell = GruCell::new(&mut ps, "gru", 3, 4, &mut rng);
    let x = random(3, 3, &mut rng);
    let h = random(3, 4, &mut rng);
    let w = random(3, 4, &mut rng);
    let run = |ps: &ParameterSet, x: &Array2<f64>, h: &Array2<f64>| {
        let px = cell.project(ps, x).unwrap();
        cell.step(ps, px.view(), h)
    };
    let (_, cache) = run(&ps, &x, &h);
    let (dx, dh) = {
        let mut g = ps.sink();
        let (d_px, dh) = cell.step_backward(&mut g, &cache, &w);
        (cell.project_backward(&mut g, &x, &d_px), dh)
    };
    let p = param_grad_error(&ps, CELL_STEP, |ps| weighted(&run(ps, &x, &h).0, &w));
    let gx = input_grad_error(&x, &dx, CELL_STEP, |x| weighted(&run(&ps, x, &h).0, &w));
    let gh = input_grad_error(&h, &dh, CELL_STEP, |h| weighted(&run(&ps, &x, h).0, &w));
    p.max(gx).max(gh)
}

pub fn lstm_cell_grad_error() -> f64 {
    let mut rng = Stream::new(102);
    let mut ps = ParameterSet::new();
    let cell = LstmCell::new(&mut ps, "lstm", 3, 4, &mut rng);
    let x = random(3, 3, &mut rng);
    let prev = LstmState {
        h: random(3, 4, &mut rng),
        c: random(3, 4, &mut rng),
    };
    let wh = random(3, 4, &mut rng);
    let wc = random(3, 4, &mut rng);
    let run = |ps: &ParameterSet, x: &Array2<f64>, prev: &LstmState| {
        let px = cell.project(ps, x).unwrap();
        cell.step(ps, px.view(), prev)
    };
    let score = |s: &LstmState| weighted(&s.h, &wh) + weighted(&s.c, &wc);
    let (_, cache) = run(&ps, &x, &prev);
    let (dx, dprev) = {
        let mut g = ps.sink();
        let d = LstmState { h: wh.clone(), c: wc.clone() };
        let (d_px, dprev) = cell.step_backward(&mut g, &cache, &d);
        (cell.project_backward(&mut g, &x, &d_px), dprev)
    };
    let p = param_grad_error(&ps, CELL_STEP, |ps| score(&run(ps, &x, &prev).0));
    let gx = input_grad_error(&x, &dx, CELL_STEP, |x| score(&run(&ps, x, &prev).0));
    let gh = input_grad_error(&prev.h, &dprev.h, CELL_STEP, |h| {
        score(&run(&ps, &x, &LstmState { h: h.clone(), c: prev.c.clone() }).0)
    });
    let gc = input_grad_error(&prev.c, &dprev.c, CELL_STEP, |c| {
        score(&run(&ps, &x, &LstmState { h: prev.h.clone(), c: c.clone() }).0)
    });
    p.max(gx).max(gh).max(gc)
}

/// Two stacked bidirectional layers over T = 3, batch 2.
pub fn bidirectional_grad_error<C: RecurrentCell>(
    make: impl Fn(&mut ParameterSet, &str, usize, usize, &mut Stream) -> C,
) -> f64 {
    let (steps, batch, input, hidden) = (3, 2, 3, 4);
    let mut rng = Stream::new(103);
    let mut ps = ParameterSet::new();
    let l1 = Bidirectional {
        fwd: make(&mut ps, "l1f", input, hidden, &mut rng),
        bwd: make(&mut ps, "l1b", input, hidden, &mut rng),
    };
    let l2 = Bidirectional {
        fwd: make(&mut ps, "l2f", 2 * hidden, hidden, &mut rng),
        bwd: make(&mut ps, "l2b", 2 * hidden, hidden, &mut rng),
    };
    let x = random(steps * batch, input, &mut rng);
    let w = random(steps * batch, 2 * hidden, &mut rng);
    let run = |ps: &ParameterSet, x: &Array2<f64>| {
        let (y1, _) = l1.forward(ps, x, steps, batch).unwrap();
        let (y2, _) = l2.forward(ps, &y1, steps, batch).unwrap();
        weighted(&y2, &w)
    };
    let (y1, c1) = l1.forward(&ps, &x, steps, batch).unwrap();
    let (_, c2) = l2.forward(&ps, &y1, steps, batch).unwrap();
    let dx = {
        let mut g = ps.sink();
        let d1 = l2.backward(&mut g, &c2, &w);
        l1.backward(&mut g, &c1, &d1)
    };
    let p = param_grad_error(&ps, CELL_STEP, |ps| run(ps, &x));
    let gx = input_grad_error(&x, &dx, CELL_STEP, |x| run(&ps, x));
    p.max(gx)
}

/// Multi-head attention, T = 3, d = 4, 2 heads, batch 2 with one padded key.
pub fn attention_grad_error() -> f64 {
    let (steps, batch, d) = (3, 2, 4);
    let mut rng = Stream::new(104);
    let mut ps = ParameterSet::new();
    let mha = MultiHeadAttention::new(&mut ps, "mha", d, 2, &mut rng).unwrap();
    let x = random(batch * steps, d, &mut rng);
    let w = random(batch * steps, d, &mut rng);
    let mut mask = Array2::from_elem((batch, steps), true);
    mask[[1, 2]] = false;
    let run = |ps: &ParameterSet, x: &Array2<f64>| weighted(&mha.forward(ps, x, batch, steps, &mask).unwrap().0, &w);
    let (_, cache) = mha.forward(&ps, &x, batch, steps, &mask).unwrap();
    let dx = mha.backward(&mut ps.sink(), &cache, &w);
    let p = param_grad_error(&ps, CELL_STEP, |ps| run(ps, &x));
    let gx = input_grad_error(&x, &dx, CELL_STEP, |x| run(&ps, x));
    p.max(gx)
}

pub fn tiny_config(arch: Architecture) -> ModelConfig {
    ModelConfig {
        architecture: arch,
        hidden_size: 4,
        num_layers: 2,
        window_size: 4,
        window_overlap: 0,
        batch_size: 2,
        num_heads: 2,
        input_dim: 3,
        output_dim: 2,
        seed: 77,
    }
}

/// Full model, 2 windows of 4 positions (one padded), masked MSE loss.
pub fn model_grad_error(arch: Architecture) -> f64 {
    let mut model = SurrogateModel::new(tiny_config(arch)).unwrap();
    let mut rng = Stream::new(105);
    let x = Array3::from_shape_simple_fn((2, 4, 3), || rng.uniform_range(-1.0, 1.0));
    let t = Array3::from_shape_simple_fn((2, 4, 2), || rng.uniform_range(-1.0, 1.0));
    let mut mask = Array2::from_elem((2, 4), true);
    mask[[1, 3]] = false;
    let (pred, cache) = model.forward_cached(&x, &mask).unwrap();
    let (_, grad) = mse_loss_grad(&pred, &t, &mask).unwrap();
    model.params_mut().zero_grad();
    model.backward(&cache, &grad);
    let cfg = model.config().clone();
    param_grad_error(model.params(), CELL_STEP, |ps| {
        let values = ps.ids().map(|id| (ps.name(id).to_owned(), ps.value(id).clone())).collect();
        let m = SurrogateModel::from_parts(cfg.clone(), values).unwrap();
        let pred = m.forward(&x, &mask).unwrap();
        gridsurrogate::train::mse_loss(&pred, &t, &mask).unwrap()
    })
}

/// Synthetic standardized rows with target `y = 2 * x1` over `sims`
/// simulations of `len` rows each.
pub fn linear_task_rows(sims: u64, len: u64, seed: u64) -> Vec<SampleRow> {
    let mut rng = Stream::new(seed);
    (0..sims)
        .flat_map(|s| (0..len).map(move |j| (s, j)))
        .map(|(s, j)| {
            let f: Vec<f64> = (0..3).map(|_| rng.standard_normal()).collect();
            SampleRow {
                simulation_id: s,
                job_index: j,
                targets: vec![2.0 * f[0]],
                features: f,
            }
        })
        .collect()
}

pub fn linear_task(window: usize) -> (WindowBatch, WindowBatch) {
    let train = make_windows(&linear_task_rows(64, 32, 1), window, 0).unwrap();
    let eval = make_windows(&linear_task_rows(8, 32, 2), window, 0).unwrap();
    (train, eval)
}

pub mod sim_fixtures {
    use std::collections::BTreeMap;

    use gridsurrogate::platform::{LinkSpec, NodeRole, NodeSpec, PlatformSpec};
    use gridsurrogate::workload::{DatasetSpec, FileSpec, JobSpec};

    pub fn node(id: &str, role: NodeRole, cores: u32, speed: f64, disk: f64) -> NodeSpec {
        NodeSpec {
            id: id.into(),
            role,
            cores,
            core_speed_flops: speed,
            disk_read_bw_bps: disk,
            disk_write_bw_bps: disk,
            storage_capacity_bytes: if role == NodeRole::Storage { 1 << 50 } else { 0 },
        }
    }

    /// `storage --link--> worker` with one link; storage disks far faster
    /// than the link.
    pub fn single_worker(cores: u32, speed: f64, bandwidth: f64, latency: f64) -> PlatformSpec {
        let mut routes = BTreeMap::new();
        routes.insert(("storage".to_owned(), "worker".to_owned()), vec!["link".to_owned()]);
        PlatformSpec::new(
            vec![
                node("storage", NodeRole::Storage, 0, 0.0, 1e15),
                node("worker", NodeRole::Worker, cores, speed, 0.0),
            ],
            vec![LinkSpec {
                id: "link".into(),
                bandwidth_bps: bandwidth,
                latency_s: latency,
            }],
            routes,
        )
        .unwrap()
    }

    pub fn job(index: u64, submit: f64, flops: f64, input: Option<(&str, u64)>, output: u64) -> JobSpec {
        JobSpec {
            simulation_id: 0,
            job_index: index,
            submission_time: submit,
            flops,
            input_files: input.iter().map(|(f, _)| f.to_string()).collect(),
            input_files_size: input.map_or(0, |(_, b)| b),
            output_files_size: output,
            class_id: 0,
        }
    }

    pub fn files(list: &[(&str, u64)]) -> DatasetSpec {
        DatasetSpec {
            files: list
                .iter()
                .map(|(f, b)| FileSpec {
                    file_id: f.to_string(),
                    size_bytes: *b,
                    location: "storage".into(),
                })
                .collect(),
        }
    }

    /// Completion times of `n` equal jobs of duration `d` on `c` cores by
    /// brute force: every job takes the earliest free core.
    pub fn brute_force_waves(n: usize, c: usize, d: f64) -> Vec<f64> {
        let mut free = vec![0.0f64; c];
        (0..n)
            .map(|_| {
                let (i, t) = free
                    .iter()
                    .copied()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                    .unwrap();
                free[i] = t + d;
                free[i]
            })
            .collect()
    }
}

pub mod tuner_fixtures {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use gridsurrogate::nn::{Architecture, ModelConfig};
    use gridsurrogate::train::{SearchSpace, TrainConfig, TrainError, TrialEvaluator};

    /// Getter, setter and candidate list of one swept hyperparameter.
    type Knob<'a> = (fn(&ModelConfig) -> usize, fn(&mut ModelConfig, usize), &'a Vec<usize>);

    /// Separable loss with a known optimum at hidden 32, window 64,
    /// overlap 8, layers 2, batch 16, heads 4.
    pub fn known_loss(m: &ModelConfig) -> f64 {
        let d = |a: usize, b: usize| (a as f64 - b as f64).abs();
        1.0 + d(m.hidden_size, 32) / 8.0
            + d(m.window_size, 64) / 16.0
            + d(m.window_overlap, 8) / 4.0
            + d(m.num_layers, 2)
            + d(m.batch_size, 16) / 16.0
            + if m.architecture == Architecture::Transformer { d(m.num_heads, 4) / 2.0 } else { 0.0 }
    }

    pub struct Stub {
        pub calls: AtomicUsize,
    }

    impl Stub {
        pub fn new() -> Self {
            Self { calls: AtomicUsize::new(0) }
        }
    }

    impl TrialEvaluator for Stub {
        fn evaluate(&self, cfg: &TrainConfig) -> Result<f64, TrainError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(known_loss(&cfg.model))
        }
    }

    pub fn space() -> SearchSpace {
        SearchSpace {
            hidden_size: vec![8, 16, 32, 64],
            window_size: vec![16, 32, 64],
            window_overlap: vec![0, 4, 8],
            num_layers: vec![1, 2, 3],
            batch_size: vec![8, 16, 32, 64],
            num_heads: vec![1, 2, 4],
        }
    }

    pub fn base(arch: Architecture) -> TrainConfig {
        TrainConfig::new(ModelConfig {
            architecture: arch,
            hidden_size: 8,
            num_layers: 1,
            window_size: 16,
            window_overlap: 0,
            batch_size: 8,
            num_heads: 1,
            input_dim: 5,
            output_dim: 5,
            seed: 0,
        })
    }

    /// Independent re-statement of the search schedule on the stage-1 draws:
    /// rank, keep three, sweep each knob in order keeping strict
    /// improvements, and return the lowest loss reached.
    pub fn schedule_optimum(stage1: &[ModelConfig], space: &SearchSpace) -> (f64, usize) {
        let mut ranked: Vec<(f64, usize)> = stage1.iter().enumerate().map(|(i, m)| (known_loss(m), i)).collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut best = f64::INFINITY;
        let mut stage2 = 0;
        for &(loss, i) in ranked.iter().take(3) {
            let mut cur = stage1[i].clone();
            let mut cur_loss = loss;
            let heads = cur.architecture == Architecture::Transformer;
            let knobs: Vec<Knob<'_>> = {
                let mut k: Vec<Knob<'_>> = vec![
                    (|m| m.hidden_size, |m, v| m.hidden_size = v, &space.hidden_size),
                    (|m| m.window_size, |m, v| m.window_size = v, &space.window_size),
                    (|m| m.window_overlap, |m, v| m.window_overlap = v, &space.window_overlap),
                    (|m| m.num_layers, |m, v| m.num_layers = v, &space.num_layers),
                    (|m| m.batch_size, |m, v| m.batch_size = v, &space.batch_size),
                ];
                if heads {
                    k.push((|m| m.num_heads, |m, v| m.num_heads = v, &space.num_heads));
                }
                k
            };
            for (get, set, cands) in knobs {
                let now = get(&cur);
                let mut next = cur.clone();
                for &v in cands.iter().filter(|&&v| v != now) {
                    let mut m = cur.clone();
                    set(&mut m, v);
                    if m.validate().is_err() {
                        continue;
                    }
                    stage2 += 1;
                    let l = known_loss(&m);
                    if l < cur_loss {
                        cur_loss = l;
                        next = m;
                    }
                }
                cur = next;
            }
            best = best.min(cur_loss);
        }
        (best, stage2)
    }
}
