mod common;

use common::*;
use gridsurrogate::nn::{Architecture, ModelConfig};
use gridsurrogate::preprocess::{make_windows, RowScaler};
use gridsurrogate::trace_io::SampleRow;
use gridsurrogate::train::{evaluate_loss, train_model, TrainConfig};

fn linear_config(arch: Architecture) -> TrainConfig {
    TrainConfig::new(ModelConfig {
        architecture: arch,
        hidden_size: 16,
        num_layers: 1,
        window_size: 16,
        window_overlap: 0,
        batch_size: 4,
        num_heads: 2,
        input_dim: 3,
        output_dim: 1,
        seed: 3,
    })
}

#[test]
fn linear_target_is_learned_by_every_architecture() {
    let (train, eval) = linear_task(16);
    for arch in Architecture::ALL {
        let out = train_model(&linear_config(arch), &train, &eval).unwrap();
        assert!(out.history.len() <= 200);
        assert!(out.best_eval_loss < 1e-3, "{arch}: {:e}", out.best_eval_loss);
    }
}

#[test]
fn constant_target_is_learned_quickly() {
    let raw: Vec<SampleRow> = linear_task_rows(64, 16, 9)
        .into_iter()
        .map(|mut r| {
            r.targets = vec![0.75];
            r
        })
        .collect();
    let scaler = RowScaler::fit(&["a", "b", "c"], &["y"], &raw[..768]).unwrap();
    let rows = scaler.transform(&raw).unwrap();
    let train = make_windows(&rows[..768], 4, 0).unwrap();
    let eval = make_windows(&rows[768..], 4, 0).unwrap();
    let mut cfg = linear_config(Architecture::Bigru);
    cfg.model.window_size = 4;
    cfg.model.batch_size = 1;
    cfg.max_epochs = 50;
    let out = train_model(&cfg, &train, &eval).unwrap();
    assert!(out.best_eval_loss < 1e-6, "{:e}", out.best_eval_loss);
}

#[test]
fn training_is_deterministic_and_keeps_best_parameters() {
    let (train, eval) = linear_task(8);
    let mut cfg = linear_config(Architecture::Transformer);
    cfg.model.window_size = 8;
    cfg.model.batch_size = 5;
    cfg.max_epochs = 6;
    let a = train_model(&cfg, &train, &eval).unwrap();
    let b = train_model(&cfg, &train, &eval).unwrap();
    assert_eq!(a.history, b.history);
    let best = evaluate_loss(&a.model, &eval).unwrap();
    assert_eq!(best, a.best_eval_loss);
    assert!(a.history.iter().all(|h| best <= h.eval_loss));
    // 256 windows in batches of 5: 51 full steps plus one ragged step of 1
    assert_eq!(a.ragged_batch, Some(1));
    assert!(a.history.iter().all(|h| h.steps == 52));
}

#[test]
fn early_stopping_honors_patience() {
    let (train, eval) = linear_task(8);
    let mut cfg = linear_config(Architecture::Bigru);
    cfg.model.window_size = 8;
    cfg.learning_rate = 0.5;
    cfg.patience = 2;
    cfg.max_epochs = 60;
    let out = train_model(&cfg, &train, &eval).unwrap();
    let last = out.history.last().unwrap().epoch;
    assert!(last - out.best_epoch <= 2);
}
