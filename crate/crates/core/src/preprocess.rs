//! Z-scoring, fixed-size windowing with zero padding, and the per-length
//! train/eval split.

use std::collections::BTreeMap;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Stream;
use crate::trace_io::SampleRow;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("cannot fit a standardizer on zero rows")]
    Empty,
    #[error("row has {got} values, standardizer expects {expected}")]
    Arity { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a, I>(names: &[&str], rows: I) -> Result<Self, PreprocessError>
    where
        I: IntoIterator<Item = &'a [f64]> + Clone,
    {
        let dim = names.len();
        let mut n = 0usize;
        let mut sums = vec![0.0; dim];
        for row in rows.clone() {
            if row.len() != dim {
                return Err(PreprocessError::Arity { expected: dim, got: row.len() });
            }
            n += 1;
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        if n == 0 {
            return Err(PreprocessError::Empty);
        }
        let means: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        let mut sq = vec![0.0; dim];
        for row in rows {
            for ((acc, v), m) in sq.iter_mut().zip(row).zip(&means) {
                *acc += (v - m) * (v - m);
            }
        }
        Ok(Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            means,
            stds: sq.iter().map(|s| (s / n as f64).sqrt()).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Divisor used when transforming: zero std columns pass through unscaled.
    fn scale(&self, i: usize) -> f64 {
        if self.stds[i] == 0.0 {
            1.0
        } else {
            self.stds[i]
        }
    }

    fn check(&self, row: &[f64]) -> Result<(), PreprocessError> {
        if row.len() != self.dim() {
            return Err(PreprocessError::Arity { expected: self.dim(), got: row.len() });
        }
        Ok(())
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>, PreprocessError> {
        self.check(row)?;
        Ok(row
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.means[i]) / self.scale(i))
            .collect())
    }

    /// [`Self::transform`] without allocating.
    pub fn transform_in_place(&self, row: &mut [f64]) -> Result<(), PreprocessError> {
        self.check(row)?;
        for (i, v) in row.iter_mut().enumerate() {
            *v = (*v - self.means[i]) / self.scale(i);
        }
        Ok(())
    }

    pub fn inverse_transform(&self, row: &[f64]) -> Result<Vec<f64>, PreprocessError> {
        self.check(row)?;
        Ok(row
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.scale(i) + self.means[i])
            .collect())
    }

    pub fn transform_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, PreprocessError> {
        rows.iter().map(|r| self.transform(r)).collect()
    }

    pub fn inverse_transform_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, PreprocessError> {
        rows.iter().map(|r| self.inverse_transform(r)).collect()
    }
}

/// Feature and target standardizers fitted on the same training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowScaler {
    pub features: Standardizer,
    pub targets: Standardizer,
}

impl RowScaler {
    pub fn fit(feature_names: &[&str], target_names: &[&str], rows: &[SampleRow]) -> Result<Self, PreprocessError> {
        Ok(Self {
            features: Standardizer::fit(feature_names, rows.iter().map(|r| r.features.as_slice()))?,
            targets: Standardizer::fit(target_names, rows.iter().map(|r| r.targets.as_slice()))?,
        })
    }

    /// Standardizes features, and targets when present.
    pub fn transform(&self, rows: &[SampleRow]) -> Result<Vec<SampleRow>, PreprocessError> {
        rows.iter()
            .map(|r| {
                Ok(SampleRow {
                    simulation_id: r.simulation_id,
                    job_index: r.job_index,
                    features: self.features.transform(&r.features)?,
                    targets: if r.targets.is_empty() {
                        Vec::new()
                    } else {
                        self.targets.transform(&r.targets)?
                    },
                })
            })
            .collect()
    }
}

/// Where a window position came from; `None` marks padding.
pub type RowKey = (u64, u64);

#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    /// [window, position, feature]
    pub windows: Array3<f64>,
    /// [window, position, observable]
    pub targets: Array3<f64>,
    /// true = real row
    pub mask: Array2<bool>,
    /// row-major over (window, position)
    pub provenance: Vec<Option<RowKey>>,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.windows.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn window_size(&self) -> usize {
        self.windows.dim().1
    }

    pub fn real_positions(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Sub-batch made of the given windows, in the given order.
    pub fn select(&self, idx: &[usize]) -> WindowBatch {
        let w = self.window_size();
        let mut provenance = Vec::with_capacity(idx.len() * w);
        for &i in idx {
            provenance.extend_from_slice(&self.provenance[i * w..(i + 1) * w]);
        }
        WindowBatch {
            windows: self.windows.select(ndarray::Axis(0), idx),
            targets: self.targets.select(ndarray::Axis(0), idx),
            mask: self.mask.select(ndarray::Axis(0), idx),
            provenance,
        }
    }
}

/// Window start offsets for one simulation of `n` rows.
pub fn window_starts(n: usize, window_size: usize, overlap: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let stride = window_size - overlap;
    let mut starts = vec![0];
    while starts.last().unwrap() + window_size < n {
        let next = starts.last().unwrap() + stride;
        starts.push(next);
    }
    starts
}

/// Cuts rows (sorted by simulation, then job index) into windows that never
/// cross a simulation boundary. The last window of a simulation is
/// zero-padded.
pub fn make_windows(rows: &[SampleRow], window_size: usize, overlap: usize) -> Result<WindowBatch, PreprocessError> {
    if window_size == 0 {
        return Err(PreprocessError::Argument("window size must be positive".into()));
    }
    if overlap >= window_size {
        return Err(PreprocessError::Argument(format!(
            "window overlap {overlap} must be smaller than window size {window_size}"
        )));
    }
    let n_feat = rows.first().map_or(0, |r| r.features.len());
    let n_tgt = rows.first().map_or(0, |r| r.targets.len());
    for r in rows {
        if r.features.len() != n_feat {
            return Err(PreprocessError::Arity { expected: n_feat, got: r.features.len() });
        }
        if r.targets.len() != n_tgt {
            return Err(PreprocessError::Arity { expected: n_tgt, got: r.targets.len() });
        }
    }

    let mut groups: Vec<&[SampleRow]> = Vec::new();
    let mut begin = 0;
    for i in 1..=rows.len() {
        if i == rows.len() || rows[i].simulation_id != rows[begin].simulation_id {
            if i > begin {
                groups.push(&rows[begin..i]);
            }
            begin = i;
        }
    }

    let spans: Vec<(&[SampleRow], usize)> = groups
        .iter()
        .flat_map(|g| window_starts(g.len(), window_size, overlap).into_iter().map(move |s| (*g, s)))
        .collect();
    let n = spans.len();
    let mut windows = Array3::zeros((n, window_size, n_feat));
    let mut targets = Array3::zeros((n, window_size, n_tgt));
    let mut mask = Array2::from_elem((n, window_size), false);
    let mut provenance = vec![None; n * window_size];
    for (w, (group, start)) in spans.into_iter().enumerate() {
        for p in 0..window_size {
            let Some(row) = group.get(start + p) else { break };
            for (f, v) in row.features.iter().enumerate() {
                windows[[w, p, f]] = *v;
            }
            for (o, v) in row.targets.iter().enumerate() {
                targets[[w, p, o]] = *v;
            }
            mask[[w, p]] = true;
            provenance[w * window_size + p] = Some(row.key());
        }
    }
    Ok(WindowBatch { windows, targets, mask, provenance })
}

/// Reassembles per-row predictions. Rows covered by several windows keep the
/// prediction of the earliest window; padding is dropped.
pub fn unwindow(predictions: &Array3<f64>, provenance: &[Option<RowKey>]) -> BTreeMap<RowKey, Vec<f64>> {
    let (n, w, _) = predictions.dim();
    assert_eq!(provenance.len(), n * w, "provenance does not match prediction shape");
    let mut out = BTreeMap::new();
    for win in 0..n {
        for p in 0..w {
            if let Some(key) = provenance[win * w + p] {
                out.entry(key)
                    .or_insert_with(|| predictions.slice(ndarray::s![win, p, ..]).to_vec());
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub train: Vec<u64>,
    pub eval: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    /// keyed by simulation length (number of jobs)
    pub groups: BTreeMap<usize, GroupAssignment>,
}

impl SplitSpec {
    pub fn train_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.groups.values().flat_map(|g| g.train.iter().copied()).collect();
        ids.sort_unstable();
        ids
    }

    pub fn eval_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.groups.values().flat_map(|g| g.eval.iter().copied()).collect();
        ids.sort_unstable();
        ids
    }
}

/// Train count for a group of `n` simulations: round-half-up of `fraction * n`.
pub fn train_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64 + 0.5 + 1e-9).floor() as usize).min(n)
}

/// Assigns whole simulations to train or eval, separately for every
/// simulation length. `simulations` holds (simulation_id, n_jobs).
pub fn split_train_eval(simulations: &[(u64, usize)], fraction: f64, seed: u64) -> Result<SplitSpec, PreprocessError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(PreprocessError::Argument(format!("train fraction {fraction} not in (0, 1)")));
    }
    if simulations.is_empty() {
        return Err(PreprocessError::Argument("no simulations to split".into()));
    }
    let mut by_len: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for &(id, len) in simulations {
        by_len.entry(len).or_default().push(id);
    }
    let mut groups = BTreeMap::new();
    for (len, mut ids) in by_len {
        ids.sort_unstable();
        Stream::keyed(seed, len as u64).shuffle(&mut ids);
        let k = train_count(ids.len(), fraction);
        let mut train = ids[..k].to_vec();
        let mut eval = ids[k..].to_vec();
        train.sort_unstable();
        eval.sort_unstable();
        groups.insert(len, GroupAssignment { train, eval });
    }
    Ok(SplitSpec { train_fraction: fraction, seed, groups })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(sim: u64, n: usize) -> Vec<SampleRow> {
        (0..n as u64)
            .map(|i| SampleRow {
                simulation_id: sim,
                job_index: i,
                features: vec![i as f64, 1.0],
                targets: vec![10.0 * i as f64 + sim as f64],
            })
            .collect()
    }

    #[test]
    fn fit_three_values() {
        let data = [[3.0], [5.0], [7.0]];
        let s = Standardizer::fit(&["x"], data.iter().map(|r| &r[..])).unwrap();
        assert_eq!(s.means, vec![5.0]);
        assert!((s.stds[0] - (8.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_column_divides_by_one() {
        let data = [[4.0], [4.0]];
        let s = Standardizer::fit(&["x"], data.iter().map(|r| &r[..])).unwrap();
        assert_eq!(s.means, vec![4.0]);
        assert_eq!(s.stds, vec![0.0]);
        assert_eq!(s.transform(&[6.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn transform_example() {
        let s = Standardizer { names: vec!["x".into()], means: vec![5.0], stds: vec![2.0] };
        assert_eq!(s.transform(&[7.0]).unwrap(), vec![1.0]);
        assert_eq!(s.inverse_transform(&[0.0]).unwrap(), vec![5.0]);
    }

    #[test]
    fn fit_rejects_empty_and_arity() {
        let none: [[f64; 1]; 0] = [];
        assert_eq!(Standardizer::fit(&["x"], none.iter().map(|r| &r[..])), Err(PreprocessError::Empty));
        let s = Standardizer { names: vec!["x".into()], means: vec![0.0], stds: vec![1.0] };
        assert_eq!(s.transform(&[1.0, 2.0]), Err(PreprocessError::Arity { expected: 1, got: 2 }));
        assert!(s.inverse_transform(&[]).is_err());
    }

    #[test]
    fn seven_rows_no_overlap() {
        let b = make_windows(&rows(0, 7), 4, 0).unwrap();
        assert_eq!(b.len(), 2);
        let keys: Vec<Option<u64>> = b.provenance.iter().map(|p| p.map(|k| k.1)).collect();
        assert_eq!(keys, vec![Some(0), Some(1), Some(2), Some(3), Some(4), Some(5), Some(6), None]);
        assert!(!b.mask[[1, 3]]);
        assert_eq!(b.windows[[1, 3, 0]], 0.0);
        assert_eq!(b.windows[[1, 3, 1]], 0.0);
        assert_eq!(b.targets[[1, 3, 0]], 0.0);
    }

    #[test]
    fn six_rows_overlap_two() {
        let b = make_windows(&rows(0, 6), 4, 2).unwrap();
        assert_eq!(window_starts(6, 4, 2), vec![0, 2]);
        assert_eq!(b.len(), 2);
        assert!(b.mask.iter().all(|m| *m));
        assert_eq!(b.windows[[1, 0, 0]], 2.0);
        assert_eq!(b.windows[[1, 3, 0]], 5.0);
    }

    #[test]
    fn single_row_window() {
        let b = make_windows(&rows(0, 1), 4, 0).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.mask.row(0).to_vec(), vec![true, false, false, false]);
    }

    #[test]
    fn overlap_must_be_smaller() {
        assert!(make_windows(&rows(0, 3), 4, 4).is_err());
        assert!(make_windows(&rows(0, 3), 0, 0).is_err());
    }

    #[test]
    fn windows_stay_inside_simulations() {
        let mut all = rows(0, 5);
        all.extend(rows(1, 3));
        let b = make_windows(&all, 4, 0).unwrap();
        assert_eq!(b.len(), 3);
        for w in 0..b.len() {
            let sims: Vec<u64> = b.provenance[w * 4..(w + 1) * 4].iter().flatten().map(|k| k.0).collect();
            assert!(sims.windows(2).all(|p| p[0] == p[1]));
        }
    }

    #[test]
    fn earliest_window_wins() {
        let b = make_windows(&rows(0, 6), 4, 2).unwrap();
        let mut preds = b.targets.clone();
        // tag each window's predictions with its window number
        for w in 0..b.len() {
            for p in 0..4 {
                preds[[w, p, 0]] = w as f64;
            }
        }
        let out = unwindow(&preds, &b.provenance);
        assert_eq!(out.len(), 6);
        assert_eq!(out[&(0, 2)], vec![0.0]);
        assert_eq!(out[&(0, 3)], vec![0.0]);
        assert_eq!(out[&(0, 4)], vec![1.0]);
    }

    #[test]
    fn all_padding_window_contributes_nothing() {
        let preds = Array3::from_elem((2, 2, 1), 9.0);
        let out = unwindow(&preds, &[Some((0, 0)), Some((0, 1)), None, None]);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn split_ten_of_length_hundred() {
        let sims: Vec<(u64, usize)> = (0..10).map(|i| (i, 100)).collect();
        let s = split_train_eval(&sims, 0.7, 1).unwrap();
        assert_eq!(s.groups[&100].train.len(), 7);
        assert_eq!(s.groups[&100].eval.len(), 3);
        assert_eq!(s, split_train_eval(&sims, 0.7, 1).unwrap());
    }

    #[test]
    fn split_rounding() {
        assert_eq!(train_count(1, 0.7), 1);
        assert_eq!(train_count(2, 0.7), 1);
        assert_eq!(train_count(5, 0.7), 4);
        assert_eq!(train_count(20, 0.7), 14);
        let s = split_train_eval(&[(9, 3)], 0.7, 0).unwrap();
        assert_eq!(s.groups[&3].train, vec![9]);
    }

    #[test]
    fn split_errors() {
        assert!(split_train_eval(&[], 0.7, 0).is_err());
        assert!(split_train_eval(&[(0, 1)], 1.0, 0).is_err());
        assert!(split_train_eval(&[(0, 1)], 0.0, 0).is_err());
    }
}
