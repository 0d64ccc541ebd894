mod common;

use common::*;
use gridsurrogate::nn::{Architecture, GruCell, LstmCell};

#[test]
fn gru_cell_matches_finite_differences() {
    let e = gru_cell_grad_error();
    assert!(e < CELL_TOL, "relative error {e:e}");
}

#[test]
fn lstm_cell_matches_finite_differences() {
    let e = lstm_cell_grad_error();
    assert!(e < CELL_TOL, "relative error {e:e}");
}

#[test]
fn bigru_stack_matches_finite_differences() {
    let e = bidirectional_grad_error(GruCell::new);
    assert!(e < CELL_TOL, "relative error {e:e}");
}

#[test]
fn bilstm_stack_matches_finite_differences() {
    let e = bidirectional_grad_error(LstmCell::new);
    assert!(e < CELL_TOL, "relative error {e:e}");
}

#[test]
fn attention_matches_finite_differences() {
    let e = attention_grad_error();
    assert!(e < CELL_TOL, "relative error {e:e}");
}

#[test]
fn full_models_match_finite_differences() {
    for arch in Architecture::ALL {
        let e = model_grad_error(arch);
        assert!(e < MODEL_TOL, "{arch}: relative error {e:e}");
    }
}
