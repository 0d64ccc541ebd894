//! Masked-MSE training with Adam, and the two-stage hyperparameter search.

use std::io::{Read, Write};
use std::time::Instant;

use ndarray::{Array2, Array3, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Architecture, ModelConfig, NnError, ParameterSet, SurrogateModel};
use crate::preprocess::{make_windows, PreprocessError, WindowBatch};
use crate::rng::{splitmix64, Stream};
use crate::trace_io::SampleRow;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("mask selects no positions; loss is undefined")]
    EmptyMask,
    #[error("prediction shape {pred:?} does not match target shape {target:?}")]
    Shape { pred: (usize, usize, usize), target: (usize, usize, usize) },
    #[error("training diverged: non-finite loss in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid training setup: {0}")]
    Config(String),
    #[error("invalid search space: {0}")]
    SearchSpace(String),
    #[error("every tuning trial failed")]
    NoSuccessfulTrial,
    #[error("audit log: {0}")]
    Audit(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

fn check_shapes(pred: &Array3<f64>, target: &Array3<f64>, mask: &Array2<bool>) -> Result<(), TrainError> {
    let (b, t, _) = pred.dim();
    if pred.dim() != target.dim() || mask.dim() != (b, t) {
        return Err(TrainError::Shape {
            pred: pred.dim(),
            target: target.dim(),
        });
    }
    Ok(())
}

/// Sum of squared errors over masked-in positions, and the number of
/// scalars it covers.
fn masked_sse(pred: &Array3<f64>, target: &Array3<f64>, mask: &Array2<bool>) -> (f64, usize) {
    let outputs = pred.dim().2;
    let mut sse = 0.0;
    let mut count = 0;
    for ((w, t), &keep) in mask.indexed_iter() {
        if keep {
            for o in 0..outputs {
                let d = pred[[w, t, o]] - target[[w, t, o]];
                sse += d * d;
            }
            count += outputs;
        }
    }
    (sse, count)
}

/// Mean squared error over real positions and all observables.
pub fn mse_loss(pred: &Array3<f64>, target: &Array3<f64>, mask: &Array2<bool>) -> Result<f64, TrainError> {
    check_shapes(pred, target, mask)?;
    let (sse, count) = masked_sse(pred, target, mask);
    if count == 0 {
        return Err(TrainError::EmptyMask);
    }
    Ok(sse / count as f64)
}

/// Loss together with its gradient w.r.t. `pred`; padded positions get zero.
pub fn mse_loss_grad(
    pred: &Array3<f64>,
    target: &Array3<f64>,
    mask: &Array2<bool>,
) -> Result<(f64, Array3<f64>), TrainError> {
    let loss = mse_loss(pred, target, mask)?;
    let count = mask.iter().filter(|m| **m).count() * pred.dim().2;
    let scale = 2.0 / count as f64;
    let mut grad = pred - target;
    for ((w, t), &keep) in mask.indexed_iter() {
        let mut lane = grad.slice_mut(ndarray::s![w, t, ..]);
        if keep {
            lane *= scale;
        } else {
            lane.fill(0.0);
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(params: &ParameterSet, lr: f64) -> Self {
        let zeros: Vec<_> = params.ids().map(|id| Array2::zeros(params.value(id).dim())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ParameterSet) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = self.lr;
        for (((value, grad), m), v) in params.values_and_grads_mut().zip(&mut self.m).zip(&mut self.v) {
            Zip::from(value).and(grad).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        let seed = model.seed;
        Self {
            model,
            learning_rate: 1e-3,
            max_epochs: 200,
            patience: 20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.model.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning_rate must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::Config("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_loss: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest eval loss.
    pub model: SurrogateModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_eval_loss: f64,
    /// Size of the final short batch of each epoch, if the window count is
    /// not a multiple of the batch size.
    pub ragged_batch: Option<usize>,
}

/// Forward passes are chunked so evaluation memory stays bounded.
const EVAL_CHUNK: usize = 256;

/// Masked MSE of `model` over a whole batch.
pub fn evaluate_loss(model: &SurrogateModel, data: &WindowBatch) -> Result<f64, TrainError> {
    let mut sse = 0.0;
    let mut count = 0;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let part = data.select(chunk);
        let pred = model.forward(&part.windows, &part.mask)?;
        check_shapes(&pred, &part.targets, &part.mask)?;
        let (s, c) = masked_sse(&pred, &part.targets, &part.mask);
        sse += s;
        count += c;
    }
    if count == 0 {
        return Err(TrainError::EmptyMask);
    }
    Ok(sse / count as f64)
}

/// Mini-batch Adam with per-epoch window shuffling and early stopping on
/// the eval loss.
pub fn train_model(cfg: &TrainConfig, train: &WindowBatch, eval: &WindowBatch) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() || train.real_positions() == 0 {
        return Err(TrainError::Config("no training windows".into()));
    }
    if eval.is_empty() || eval.real_positions() == 0 {
        return Err(TrainError::Config("no evaluation windows".into()));
    }
    let mut model = SurrogateModel::new(cfg.model.clone())?;
    let mut adam = Adam::new(model.params(), cfg.learning_rate);
    let batch = cfg.model.batch_size;
    let ragged = match train.len() % batch {
        0 => None,
        r => Some(r),
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.params().clone());

    for epoch in 1..=cfg.max_epochs {
        let mut rng = Stream::keyed(cfg.seed, epoch as u64);
        rng.shuffle(&mut order);
        let mut sse = 0.0;
        let mut count = 0usize;
        let mut steps = 0;
        for idx in order.chunks(batch) {
            let part = train.select(idx);
            let real = part.real_positions();
            if real == 0 {
                continue;
            }
            let (pred, cache) = model.forward_cached(&part.windows, &part.mask)?;
            let (loss, grad) = mse_loss_grad(&pred, &part.targets, &part.mask)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            model.params_mut().zero_grad();
            model.backward(&cache, &grad);
            adam.step(model.params_mut());
            let n = real * pred.dim().2;
            sse += loss * n as f64;
            count += n;
            steps += 1;
        }
        let train_loss = sse / count as f64;
        let eval_loss = evaluate_loss(&model, eval)?;
        if !train_loss.is_finite() || !eval_loss.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            eval_loss,
            steps,
        });
        if eval_loss < best.0 {
            best = (eval_loss, epoch, model.params().clone());
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }

    let (best_eval_loss, best_epoch, params) = best;
    *model.params_mut() = params;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_eval_loss,
        ragged_batch: ragged,
    })
}

/// Candidate values per tunable hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub hidden_size: Vec<usize>,
    pub window_size: Vec<usize>,
    pub window_overlap: Vec<usize>,
    pub num_layers: Vec<usize>,
    pub batch_size: Vec<usize>,
    /// Swept after the other five, transformer only.
    #[serde(default)]
    pub num_heads: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            hidden_size: vec![8, 16, 32],
            window_size: vec![16, 32, 64],
            window_overlap: vec![0, 4, 8],
            num_layers: vec![1, 2],
            batch_size: vec![16, 32, 64],
            num_heads: vec![1, 2, 4],
        }
    }
}

/// Hyperparameters in the order stage 2 sweeps them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Knob {
    HiddenSize,
    WindowSize,
    WindowOverlap,
    NumLayers,
    BatchSize,
    NumHeads,
}

impl Knob {
    pub const ORDER: [Knob; 6] = [
        Knob::HiddenSize,
        Knob::WindowSize,
        Knob::WindowOverlap,
        Knob::NumLayers,
        Knob::BatchSize,
        Knob::NumHeads,
    ];

    pub fn get(self, m: &ModelConfig) -> usize {
        match self {
            Knob::HiddenSize => m.hidden_size,
            Knob::WindowSize => m.window_size,
            Knob::WindowOverlap => m.window_overlap,
            Knob::NumLayers => m.num_layers,
            Knob::BatchSize => m.batch_size,
            Knob::NumHeads => m.num_heads,
        }
    }

    fn set(self, m: &mut ModelConfig, v: usize) {
        match self {
            Knob::HiddenSize => m.hidden_size = v,
            Knob::WindowSize => m.window_size = v,
            Knob::WindowOverlap => m.window_overlap = v,
            Knob::NumLayers => m.num_layers = v,
            Knob::BatchSize => m.batch_size = v,
            Knob::NumHeads => m.num_heads = v,
        }
    }
}

impl SearchSpace {
    pub fn candidates(&self, knob: Knob) -> &[usize] {
        match knob {
            Knob::HiddenSize => &self.hidden_size,
            Knob::WindowSize => &self.window_size,
            Knob::WindowOverlap => &self.window_overlap,
            Knob::NumLayers => &self.num_layers,
            Knob::BatchSize => &self.batch_size,
            Knob::NumHeads => &self.num_heads,
        }
    }

    /// Knobs swept for an architecture, in sweep order.
    pub fn knobs(arch: Architecture) -> &'static [Knob] {
        if arch == Architecture::Transformer {
            &Knob::ORDER
        } else {
            &Knob::ORDER[..5]
        }
    }

    pub fn validate(&self, arch: Architecture) -> Result<(), TrainError> {
        for &knob in Self::knobs(arch) {
            let c = self.candidates(knob);
            if c.is_empty() {
                return Err(TrainError::SearchSpace(format!("{knob:?} has no candidates")));
            }
            if c.contains(&0) && knob != Knob::WindowOverlap {
                return Err(TrainError::SearchSpace(format!("{knob:?} candidates must be positive")));
            }
        }
        for &w in &self.window_size {
            if !self.window_overlap.iter().any(|&v| v < w) {
                return Err(TrainError::SearchSpace(format!("no overlap candidate is smaller than window size {w}")));
            }
        }
        if arch == Architecture::Transformer
            && !self
                .hidden_size
                .iter()
                .all(|&h| self.num_heads.iter().any(|&n| h % n == 0))
        {
            return Err(TrainError::SearchSpace("some hidden size fits no head count".into()));
        }
        Ok(())
    }

    /// Uniform draw of every knob; overlap and head count are redrawn from
    /// the values compatible with the drawn window and hidden size.
    fn sample(&self, base: &ModelConfig, rng: &mut Stream) -> ModelConfig {
        let pick = |c: &[usize], rng: &mut Stream| c[rng.index(c.len())];
        let mut m = base.clone();
        m.hidden_size = pick(&self.hidden_size, rng);
        m.window_size = pick(&self.window_size, rng);
        let overlaps: Vec<usize> = self.window_overlap.iter().copied().filter(|&v| v < m.window_size).collect();
        m.window_overlap = pick(&overlaps, rng);
        m.num_layers = pick(&self.num_layers, rng);
        m.batch_size = pick(&self.batch_size, rng);
        if m.architecture == Architecture::Transformer {
            let heads: Vec<usize> = self.num_heads.iter().copied().filter(|&n| m.hidden_size.is_multiple_of(n)).collect();
            m.num_heads = pick(&heads, rng);
        }
        m
    }
}

/// Something that scores a training configuration by eval loss.
pub trait TrialEvaluator: Sync {
    fn evaluate(&self, cfg: &TrainConfig) -> Result<f64, TrainError>;
}

/// Trains on standardized rows, windowing them per trial since window size
/// and overlap are tunable.
pub struct RowData<'a> {
    pub train: &'a [SampleRow],
    pub eval: &'a [SampleRow],
}

impl TrialEvaluator for RowData<'_> {
    fn evaluate(&self, cfg: &TrainConfig) -> Result<f64, TrainError> {
        let m = &cfg.model;
        let train = make_windows(self.train, m.window_size, m.window_overlap)?;
        let eval = make_windows(self.eval, m.window_size, m.window_overlap)?;
        Ok(train_model(cfg, &train, &eval)?.best_eval_loss)
    }
}

pub const STAGE1_TRIALS: usize = 10;
pub const SURVIVORS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub stage: u8,
    /// Rank of the stage-1 survivor a stage-2 trial refines.
    pub survivor: Option<usize>,
    pub config: TrainConfig,
    pub eval_loss: Option<f64>,
    pub wall_clock_s: f64,
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub best: TrainConfig,
    pub best_trial: usize,
    pub best_eval_loss: f64,
    pub audit: Vec<TrialRecord>,
}

fn run_trial(evaluator: &dyn TrialEvaluator, cfg: TrainConfig, stage: u8, survivor: Option<usize>) -> TrialRecord {
    let started = Instant::now();
    let result = evaluator.evaluate(&cfg);
    let (eval_loss, status) = match result {
        Ok(l) if l.is_finite() => (Some(l), "ok".to_owned()),
        Ok(l) => (None, format!("failed: non-finite eval loss {l}")),
        Err(e) => (None, format!("failed: {e}")),
    };
    TrialRecord {
        trial_id: 0,
        stage,
        survivor,
        config: cfg,
        eval_loss,
        wall_clock_s: started.elapsed().as_secs_f64(),
        status,
    }
}

/// Orders successful trials by eval loss, ties to the lower trial id.
fn ranked(records: &[TrialRecord]) -> Vec<&TrialRecord> {
    let mut ok: Vec<&TrialRecord> = records.iter().filter(|r| r.eval_loss.is_some()).collect();
    ok.sort_by(|a, b| {
        a.eval_loss
            .partial_cmp(&b.eval_loss)
            .expect("finite losses")
            .then(a.trial_id.cmp(&b.trial_id))
    });
    ok
}

/// Stage-2 refinement of one survivor: one knob at a time, each fixed at its
/// best value before moving on. The survivor keeps its seed throughout.
fn refine(
    evaluator: &dyn TrialEvaluator,
    space: &SearchSpace,
    start: &TrialRecord,
    rank: usize,
) -> Vec<TrialRecord> {
    let mut current = start.config.clone();
    let mut current_loss = start.eval_loss.expect("survivors succeeded");
    let mut log = Vec::new();
    for &knob in SearchSpace::knobs(current.model.architecture) {
        let now = knob.get(&current.model);
        let trials: Vec<TrainConfig> = space
            .candidates(knob)
            .iter()
            .filter(|&&v| v != now)
            .filter_map(|&v| {
                let mut cfg = current.clone();
                knob.set(&mut cfg.model, v);
                cfg.model.validate().is_ok().then_some(cfg)
            })
            .collect();
        let records: Vec<TrialRecord> = trials
            .into_par_iter()
            .map(|cfg| run_trial(evaluator, cfg, 2, Some(rank)))
            .collect();
        for r in &records {
            if let Some(l) = r.eval_loss {
                if l < current_loss {
                    current_loss = l;
                    current = r.config.clone();
                }
            }
        }
        log.extend(records);
    }
    log
}

/// Ten random configurations, the best three refined coordinate-wise, the
/// overall lowest eval loss wins.
pub fn tune_hyperparameters(
    space: &SearchSpace,
    base: &TrainConfig,
    evaluator: &dyn TrialEvaluator,
    seed: u64,
) -> Result<TuneOutcome, TrainError> {
    space.validate(base.model.architecture)?;
    let mut rng = Stream::keyed(seed, 0x7475_6e65);
    let stage1: Vec<TrainConfig> = (0..STAGE1_TRIALS)
        .map(|i| {
            let mut cfg = base.clone();
            cfg.model = space.sample(&base.model, &mut rng);
            cfg.seed = splitmix64(seed ^ splitmix64(i as u64 + 1));
            cfg.model.seed = cfg.seed;
            cfg
        })
        .collect();
    let mut audit: Vec<TrialRecord> = stage1
        .into_par_iter()
        .map(|cfg| run_trial(evaluator, cfg, 1, None))
        .collect();
    for (i, r) in audit.iter_mut().enumerate() {
        r.trial_id = i;
    }

    let survivors: Vec<TrialRecord> = ranked(&audit).into_iter().take(SURVIVORS).cloned().collect();
    if survivors.is_empty() {
        return Err(TrainError::NoSuccessfulTrial);
    }
    let refined: Vec<Vec<TrialRecord>> = survivors
        .par_iter()
        .enumerate()
        .map(|(rank, s)| refine(evaluator, space, s, rank))
        .collect();
    for mut r in refined.into_iter().flatten() {
        r.trial_id = audit.len();
        audit.push(r);
    }

    let (best_trial, best, best_eval_loss) = replay_winner(&audit)?;
    Ok(TuneOutcome {
        best,
        best_trial,
        best_eval_loss,
        audit,
    })
}

/// Winner implied by an audit log: lowest eval loss, ties to the lowest
/// trial id.
pub fn replay_winner(audit: &[TrialRecord]) -> Result<(usize, TrainConfig, f64), TrainError> {
    let best = ranked(audit).into_iter().next().ok_or(TrainError::NoSuccessfulTrial)?;
    Ok((best.trial_id, best.config.clone(), best.eval_loss.expect("ranked")))
}

pub const AUDIT_COLUMNS: [&str; 18] = [
    "trial_id",
    "stage",
    "survivor",
    "architecture",
    "hidden_size",
    "window_size",
    "window_overlap",
    "num_layers",
    "batch_size",
    "num_heads",
    "input_dim",
    "output_dim",
    "seed",
    "learning_rate",
    "max_epochs",
    "patience",
    "eval_loss",
    "wall_clock_s",
];

/// Audit CSV: one row per trial plus `status` and the selection metric.
pub fn write_audit_csv<W: Write>(audit: &[TrialRecord], out: W) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| TrainError::Audit(e.to_string());
    let mut header: Vec<&str> = AUDIT_COLUMNS.to_vec();
    header.extend(["status", "selection_metric"]);
    w.write_record(&header).map_err(io)?;
    for r in audit {
        let m = &r.config.model;
        let row = vec![
            r.trial_id.to_string(),
            r.stage.to_string(),
            r.survivor.map(|s| s.to_string()).unwrap_or_default(),
            m.architecture.to_string(),
            m.hidden_size.to_string(),
            m.window_size.to_string(),
            m.window_overlap.to_string(),
            m.num_layers.to_string(),
            m.batch_size.to_string(),
            m.num_heads.to_string(),
            m.input_dim.to_string(),
            m.output_dim.to_string(),
            r.config.seed.to_string(),
            format!("{:?}", r.config.learning_rate),
            r.config.max_epochs.to_string(),
            r.config.patience.to_string(),
            r.eval_loss.map(|l| format!("{l:?}")).unwrap_or_default(),
            format!("{:.6}", r.wall_clock_s),
            r.status.clone(),
            "eval_mse".to_owned(),
        ];
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| TrainError::Audit(e.to_string()))?;
    Ok(())
}

pub fn read_audit_csv<R: Read>(input: R) -> Result<Vec<TrialRecord>, TrainError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| TrainError::Audit(e.to_string()))?;
        let bad = |col: &str| TrainError::Audit(format!("row {}: bad `{col}`", line + 1));
        let get = |i: usize| rec.get(i).unwrap_or("");
        macro_rules! num {
            ($i:expr) => {
                get($i).parse().map_err(|_| bad(AUDIT_COLUMNS[$i]))?
            };
        }
        let model = ModelConfig {
            architecture: get(3).parse().map_err(|_| bad("architecture"))?,
            hidden_size: num!(4),
            window_size: num!(5),
            window_overlap: num!(6),
            num_layers: num!(7),
            batch_size: num!(8),
            num_heads: num!(9),
            input_dim: num!(10),
            output_dim: num!(11),
            seed: num!(12),
        };
        out.push(TrialRecord {
            trial_id: num!(0),
            stage: num!(1),
            survivor: match get(2) {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("survivor"))?),
            },
            config: TrainConfig {
                seed: model.seed,
                model,
                learning_rate: num!(13),
                max_epochs: num!(14),
                patience: num!(15),
            },
            eval_loss: match get(16) {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("eval_loss"))?),
            },
            wall_clock_s: num!(17),
            status: get(18).to_owned(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};

    #[test]
    fn mse_examples() {
        let p = Array3::from_shape_vec((1, 2, 1), vec![0.0, 2.0]).unwrap();
        let t = Array3::zeros((1, 2, 1));
        let m = Array2::from_elem((1, 2), true);
        assert_eq!(mse_loss(&p, &t, &m).unwrap(), 2.0);
        assert_eq!(mse_loss(&p, &p, &m).unwrap(), 0.0);
    }

    #[test]
    fn masked_positions_are_ignored() {
        let mut p = Array3::from_shape_vec((1, 3, 1), vec![1.0, 2.0, 0.0]).unwrap();
        let t = Array3::zeros((1, 3, 1));
        let m = array![[true, true, false]];
        let base = mse_loss(&p, &t, &m).unwrap();
        p[[0, 2, 0]] = 1e9;
        assert_eq!(mse_loss(&p, &t, &m).unwrap(), base);
        let (_, g) = mse_loss_grad(&p, &t, &m).unwrap();
        assert_eq!(g[[0, 2, 0]], 0.0);
        assert_eq!(g[[0, 1, 0]], 2.0);
    }

    #[test]
    fn all_false_mask_is_error() {
        let p = Array3::zeros((1, 2, 1));
        assert!(matches!(
            mse_loss(&p, &p, &Array2::from_elem((1, 2), false)),
            Err(TrainError::EmptyMask)
        ));
    }

    #[test]
    fn loss_gradient_matches_differences() {
        let mut rng = Stream::new(3);
        let p = Array3::from_shape_simple_fn((2, 3, 2), || rng.uniform());
        let t = Array3::from_shape_simple_fn((2, 3, 2), || rng.uniform());
        let m = array![[true, false, true], [true, true, true]];
        let (_, g) = mse_loss_grad(&p, &t, &m).unwrap();
        for idx in [(0, 0, 1), (1, 2, 0), (0, 1, 0)] {
            let mut a = p.clone();
            let mut b = p.clone();
            a[idx] += 1e-6;
            b[idx] -= 1e-6;
            let fd = (mse_loss(&a, &t, &m).unwrap() - mse_loss(&b, &t, &m).unwrap()) / 2e-6;
            assert!((fd - g[idx]).abs() < 1e-8);
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut ps = ParameterSet::new();
        let id = ps.add("w", array![[1.0, -1.0]]);
        let mut adam = Adam::new(&ps, 0.1);
        {
            let mut g = ps.sink();
            g.grad_mut(id).assign(&array![[3.0, -0.5]]);
        }
        adam.step(&mut ps);
        let v = ps.value(id);
        assert!((v[[0, 0]] - 0.9).abs() < 1e-6);
        assert!((v[[0, 1]] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn search_space_validation() {
        let mut s = SearchSpace::default();
        assert!(s.validate(Architecture::Transformer).is_ok());
        s.window_overlap = vec![64];
        assert!(s.validate(Architecture::Bigru).is_err());
        let mut s = SearchSpace::default();
        s.batch_size.clear();
        assert!(s.validate(Architecture::Bigru).is_err());
    }
}
