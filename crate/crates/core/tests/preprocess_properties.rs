use std::collections::BTreeSet;

use ndarray::Array3;
use proptest::prelude::*;

use gridsurrogate::preprocess::{make_windows, split_train_eval, train_count, unwindow, Standardizer};
use gridsurrogate::trace_io::SampleRow;

fn rows_for(lengths: &[usize]) -> Vec<SampleRow> {
    let mut rows = Vec::new();
    for (s, &len) in lengths.iter().enumerate() {
        for j in 0..len {
            let sim = s as u64 + 1;
            rows.push(SampleRow {
                simulation_id: sim,
                job_index: j as u64,
                features: vec![sim as f64, j as f64],
                targets: vec![(sim * 1000 + j as u64) as f64],
            });
        }
    }
    rows
}

/// Predictions that equal the target of the row in each position, so the
/// identity can be checked exactly.
fn echo_predictions(batch: &gridsurrogate::preprocess::WindowBatch) -> Array3<f64> {
    batch.targets.clone()
}

proptest! {
    #[test]
    fn standardize_round_trips(
        rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 1..40)
    ) {
        let s = Standardizer::fit(&["a", "b", "c"], rows.iter().map(|r| r.as_slice())).unwrap();
        for r in &rows {
            let back = s.inverse_transform(&s.transform(r).unwrap()).unwrap();
            for (x, y) in r.iter().zip(&back) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} -> {y}");
            }
        }
    }

    #[test]
    fn transformed_training_columns_are_centered(
        rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 2), 2..40)
    ) {
        let s = Standardizer::fit(&["a", "b"], rows.iter().map(|r| r.as_slice())).unwrap();
        let z = s.transform_rows(&rows).unwrap();
        for c in 0..2 {
            let mean = z.iter().map(|r| r[c]).sum::<f64>() / z.len() as f64;
            prop_assert!(mean.abs() < 1e-9, "column {c} mean {mean}");
        }
    }

    #[test]
    fn unwindow_inverts_windowing(
        lengths in prop::collection::vec(1usize..50, 1..5),
        shape in prop::sample::select(vec![(4usize, 0usize), (4, 2), (8, 4), (16, 0)]),
    ) {
        let (w, o) = shape;
        let rows = rows_for(&lengths);
        let batch = make_windows(&rows, w, o).unwrap();
        prop_assert_eq!(batch.real_positions() >= rows.len(), true);
        let back = unwindow(&echo_predictions(&batch), &batch.provenance);
        prop_assert_eq!(back.len(), rows.len());
        for r in &rows {
            prop_assert_eq!(&back[&r.key()], &r.targets);
        }
        // no window straddles two simulations
        for win in 0..batch.len() {
            let sims: BTreeSet<u64> = batch.provenance[win * w..(win + 1) * w].iter().flatten().map(|k| k.0).collect();
            prop_assert_eq!(sims.len(), 1);
        }
    }

    #[test]
    fn split_is_a_partition_with_rounded_counts(
        groups in prop::collection::vec((1usize..30, 1usize..6), 1..5),
        seed in any::<u64>(),
    ) {
        let mut sims = Vec::new();
        let mut next = 1u64;
        let mut sizes = std::collections::BTreeMap::new();
        for (count, len) in groups {
            let len = len * 10;
            for _ in 0..count {
                sims.push((next, len));
                next += 1;
            }
            *sizes.entry(len).or_insert(0usize) += count;
        }
        let split = split_train_eval(&sims, 0.7, seed).unwrap();
        let train: BTreeSet<u64> = split.train_ids().into_iter().collect();
        let eval: BTreeSet<u64> = split.eval_ids().into_iter().collect();
        prop_assert!(train.is_disjoint(&eval));
        prop_assert_eq!(train.len() + eval.len(), sims.len());
        for (len, n) in sizes {
            let g = &split.groups[&len];
            // round half up of 0.7 n, computed in integers
            let expected = (7 * n + 5) / 10;
            prop_assert_eq!(g.train.len(), expected);
            prop_assert_eq!(train_count(n, 0.7), expected);
        }
        prop_assert_eq!(split_train_eval(&sims, 0.7, seed).unwrap(), split);
    }
}

#[test]
fn split_counts_for_the_suite_sizes() {
    for (n, k) in [(20usize, 14usize), (5, 4), (10, 7), (1, 1), (3, 2)] {
        assert_eq!(train_count(n, 0.7), k, "n = {n}");
    }
}
