//! R², Gaussian KDE curves, prediction reports and runtime comparisons.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::Surrogate;
use crate::error::{Error, Result};
use crate::sim::BenchRow;
use crate::trace_io::SampleRow;
use crate::workload::Scenario;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} predictions vs {1} targets")]
    Length(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("actual values are constant; R² is undefined")]
    ConstantActual,
    #[error("bandwidth must be positive, got {0}")]
    Bandwidth(f64),
    #[error("no simulator timing for ({0}, {1} jobs)")]
    KeyMismatch(Scenario, usize),
    #[error("{0}")]
    Schema(String),
}

/// `1 - SS_res / SS_tot`.
pub fn r_squared(pred: &[f64], actual: &[f64]) -> Result<f64, EvalError> {
    if pred.len() != actual.len() {
        return Err(EvalError::Length(pred.len(), actual.len()));
    }
    if actual.len() < 2 {
        return Err(EvalError::TooFew { needed: 2, got: actual.len() });
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(EvalError::ConstantActual);
    }
    let ss_res: f64 = pred.iter().zip(actual).map(|(p, a)| (a - p) * (a - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Linear-interpolation quantile of sorted data (type 7).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub const MIN_BANDWIDTH: f64 = 1e-9;

/// Silverman's rule `0.9 * min(std, IQR / 1.34) * n^(-1/5)`, falling back to
/// the std alone when the IQR is zero, floored at [`MIN_BANDWIDTH`].
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64, EvalError> {
    if values.len() < 2 {
        return Err(EvalError::TooFew { needed: 2, got: values.len() });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { std.min(iqr / 1.34) } else { std };
    Ok((0.9 * spread * n.powf(-0.2)).max(MIN_BANDWIDTH))
}

/// Gaussian kernel density of `values` evaluated on `grid`.
pub fn kde(values: &[f64], grid: &[f64], bandwidth: Option<f64>) -> Result<Vec<f64>, EvalError> {
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(EvalError::Bandwidth(h)),
        None => silverman_bandwidth(values)?,
    };
    if values.len() < 2 {
        return Err(EvalError::TooFew { needed: 2, got: values.len() });
    }
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|&x| {
            norm * values
                .iter()
                .map(|&v| {
                    let u = (x - v) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
        })
        .collect())
}

/// Evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![lo];
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}

pub const KDE_POINTS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub target: Vec<f64>,
    pub predicted: Vec<f64>,
}

/// Target and predicted densities on one grid spanning both samples plus
/// four bandwidths either side.
pub fn kde_pair(target: &[f64], predicted: &[f64]) -> Result<KdeCurve, EvalError> {
    let ht = silverman_bandwidth(target)?;
    let hp = silverman_bandwidth(predicted)?;
    let all = target.iter().chain(predicted);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min) - 4.0 * ht.max(hp);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * ht.max(hp);
    let grid = linspace(lo, hi, KDE_POINTS);
    Ok(KdeCurve {
        target: kde(target, &grid, Some(ht))?,
        predicted: kde(predicted, &grid, Some(hp))?,
        grid,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableReport {
    pub name: String,
    /// `None` when the actual values are constant.
    pub r2: Option<f64>,
    pub kde: KdeCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub scenario: Scenario,
    pub n_jobs: usize,
    pub simulator_s: f64,
    pub surrogate_s: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub observables: Vec<ObservableReport>,
    pub runtime: Vec<SpeedupRow>,
    pub rows: usize,
    pub surrogate_seconds: f64,
    pub provenance: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn r2(&self, observable: &str) -> Option<f64> {
        self.observables.iter().find(|o| o.name == observable).and_then(|o| o.r2)
    }
}

/// Per-observable scores for original-scale predictions and targets, both
/// `[row][observable]`.
pub fn score_predictions(names: &[&str], pred: &[Vec<f64>], actual: &[Vec<f64>]) -> Result<Vec<ObservableReport>, EvalError> {
    if pred.len() != actual.len() {
        return Err(EvalError::Length(pred.len(), actual.len()));
    }
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let p: Vec<f64> = pred.iter().map(|r| r[j]).collect();
            let a: Vec<f64> = actual.iter().map(|r| r[j]).collect();
            let r2 = match r_squared(&p, &a) {
                Ok(v) => Some(v),
                Err(EvalError::ConstantActual) => None,
                Err(e) => return Err(e),
            };
            Ok(ObservableReport {
                name: name.to_string(),
                r2,
                kde: kde_pair(&a, &p)?,
            })
        })
        .collect()
}

/// Runs the surrogate over `rows` (original-scale targets attached) and
/// scores every observable. Surrogate wall-clock covers scaling, windowing,
/// the forward passes and unscaling.
pub fn evaluate_model(surrogate: &Surrogate, rows: &[SampleRow]) -> Result<EvalReport> {
    let names = surrogate.schema.target_names();
    if let Some(r) = rows.iter().find(|r| r.targets.len() != names.len()) {
        return Err(EvalError::Schema(format!(
            "row {:?} has {} targets, checkpoint predicts {}",
            r.key(),
            r.targets.len(),
            names.len()
        ))
        .into());
    }
    if let Some(r) = rows.iter().find(|r| r.features.len() != surrogate.schema.feature_names().len()) {
        return Err(EvalError::Schema(format!(
            "row {:?} has {} features, checkpoint expects {}",
            r.key(),
            r.features.len(),
            surrogate.schema.feature_names().len()
        ))
        .into());
    }
    let t0 = Instant::now();
    let pred = surrogate.predict(rows)?;
    let seconds = t0.elapsed().as_secs_f64();
    let mut actual_by_key: BTreeMap<_, _> = rows.iter().map(|r| (r.key(), &r.targets)).collect();
    let mut p = Vec::with_capacity(pred.len());
    let mut a = Vec::with_capacity(pred.len());
    for (key, v) in pred {
        let t = actual_by_key
            .remove(&key)
            .ok_or_else(|| Error::Eval(EvalError::Schema(format!("prediction for unknown row {key:?}"))))?;
        p.push(v);
        a.push(t.clone());
    }
    Ok(EvalReport {
        observables: score_predictions(names, &p, &a)?,
        runtime: Vec::new(),
        rows: p.len(),
        surrogate_seconds: seconds,
        provenance: BTreeMap::new(),
    })
}

/// Simulator seconds over surrogate seconds for every surrogate timing.
pub fn speedup_report(simulator: &[BenchRow], surrogate: &[BenchRow]) -> Result<Vec<SpeedupRow>, EvalError> {
    if simulator.is_empty() || surrogate.is_empty() {
        return Err(EvalError::TooFew { needed: 1, got: 0 });
    }
    let sim: BTreeMap<(Scenario, usize), f64> = simulator.iter().map(|r| ((r.scenario, r.n_jobs), r.seconds)).collect();
    surrogate
        .iter()
        .map(|s| {
            let simulator_s = *sim
                .get(&(s.scenario, s.n_jobs))
                .ok_or(EvalError::KeyMismatch(s.scenario, s.n_jobs))?;
            Ok(SpeedupRow {
                scenario: s.scenario,
                n_jobs: s.n_jobs,
                simulator_s,
                surrogate_s: s.seconds,
                ratio: simulator_s / s.seconds,
            })
        })
        .collect()
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let io = |e: csv::Error| Error::io(format!("writing {}", path.display()), e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Writes `report.json`, `r2.csv`, `kde_<observable>.csv` and, when runtime
/// rows exist, `speedup.csv` into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let json_path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report).map_err(|source| Error::Json {
        path: json_path.clone(),
        source,
    })?;
    fs::write(&json_path, json).map_err(|e| Error::io(format!("writing {}", json_path.display()), e))?;
    write_csv(
        &dir.join("r2.csv"),
        &["observable", "r2"],
        report
            .observables
            .iter()
            .map(|o| vec![o.name.clone(), o.r2.map(|v| format!("{v:?}")).unwrap_or_default()]),
    )?;
    for o in &report.observables {
        write_csv(
            &dir.join(format!("kde_{}.csv", o.name)),
            &["x", "target_density", "predicted_density"],
            (0..o.kde.grid.len()).map(|i| {
                vec![
                    format!("{:?}", o.kde.grid[i]),
                    format!("{:?}", o.kde.target[i]),
                    format!("{:?}", o.kde.predicted[i]),
                ]
            }),
        )?;
    }
    if !report.runtime.is_empty() {
        write_speedup_csv(&dir.join("speedup.csv"), &report.runtime)?;
    }
    Ok(())
}

pub fn write_speedup_csv(path: &Path, rows: &[SpeedupRow]) -> Result<()> {
    write_csv(
        path,
        &["scenario", "n_jobs", "simulator_s", "surrogate_s", "ratio"],
        rows.iter().map(|r| {
            vec![
                r.scenario.to_string(),
                r.n_jobs.to_string(),
                format!("{:.9}", r.simulator_s),
                format!("{:.9}", r.surrogate_s),
                format!("{:?}", r.ratio),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trapezoid(grid: &[f64], f: &[f64]) -> f64 {
        grid.windows(2).zip(f.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
    }

    #[test]
    fn r2_examples() {
        let a = [0.0, 1.0, 2.0];
        assert_eq!(r_squared(&a, &a).unwrap(), 1.0);
        assert_eq!(r_squared(&[1.0; 3], &a).unwrap(), 0.0);
        assert_eq!(r_squared(&[2.0, 1.0, 0.0], &a).unwrap(), -3.0);
        assert_eq!(r_squared(&[1.0, 1.0], &[3.0, 3.0]), Err(EvalError::ConstantActual));
        assert!(r_squared(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.25), 1.75);
        assert_eq!(quantile_sorted(&s, 0.75), 3.25);
    }

    #[test]
    fn silverman_hand_value() {
        // std = 1.2909944, IQR / 1.34 = 1.1194030
        let h = silverman_bandwidth(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let expect = 0.9 * (1.5 / 1.34) * 4f64.powf(-0.2);
        assert!((h - expect).abs() < 1e-15);
        assert_eq!(silverman_bandwidth(&[5.0, 5.0, 5.0]).unwrap(), MIN_BANDWIDTH);
    }

    #[test]
    fn kde_integrates_to_one_and_is_symmetric() {
        let v = [-2.0, -0.5, 0.5, 2.0];
        let h = silverman_bandwidth(&v).unwrap();
        let grid = linspace(-2.0 - 6.0 * h, 2.0 + 6.0 * h, 2001);
        let d = kde(&v, &grid, None).unwrap();
        assert!((trapezoid(&grid, &d) - 1.0).abs() < 1e-3);
        for i in 0..d.len() {
            assert!((d[i] - d[d.len() - 1 - i]).abs() < 1e-9);
        }
    }

    #[test]
    fn kde_finds_two_modes() {
        let v: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { i as f64 * 0.01 } else { 10.0 + i as f64 * 0.01 }).collect();
        let grid = linspace(-3.0, 13.0, 801);
        let d = kde(&v, &grid, None).unwrap();
        let peaks = (1..d.len() - 1).filter(|&i| d[i] > d[i - 1] && d[i] > d[i + 1]).count();
        assert_eq!(peaks, 2);
    }

    #[test]
    fn kde_errors() {
        assert!(kde(&[], &[0.0], None).is_err());
        assert_eq!(kde(&[1.0, 2.0], &[0.0], Some(0.0)), Err(EvalError::Bandwidth(0.0)));
    }

    #[test]
    fn speedup_divides() {
        let sim = vec![BenchRow { scenario: Scenario::Heterogeneous, n_jobs: 100, seconds: 10.0 }];
        let sur = vec![BenchRow { scenario: Scenario::Heterogeneous, n_jobs: 100, seconds: 0.1 }];
        let r = speedup_report(&sim, &sur).unwrap();
        assert_eq!(r[0].ratio, 100.0);
        let missing = vec![BenchRow { scenario: Scenario::Homogeneous, n_jobs: 100, seconds: 0.1 }];
        assert!(matches!(speedup_report(&sim, &missing), Err(EvalError::KeyMismatch(..))));
    }

    #[test]
    fn oracle_predictions_score_one_with_identical_curves() {
        let actual: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i * i) as f64 % 7.0]).collect();
        let rep = score_predictions(&["a", "b"], &actual, &actual).unwrap();
        for o in rep {
            assert_eq!(o.r2, Some(1.0));
            assert_eq!(o.kde.target, o.kde.predicted);
        }
    }
}
