//! CSV persistence for workloads and traces, and the join that turns them
//! into model rows.
//!
//! Trace CSV columns follow [`TraceRecord`] field order; times are written
//! with 9 decimals and byte counts as integers. Workload CSV columns are
//! `simulation_id, job_index, submission_time, flops, input_files_size,
//! output_files_size, class_id, input_files` with floats in shortest
//! round-trip form and input file ids joined by `;`.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::TraceRecord;
use crate::workload::{DatasetSpec, JobSpec, Scenario};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{count} unmatched (simulation_id, job_index) keys, first: {first:?}")]
    Unmatched { count: usize, first: Vec<(u64, u64)> },
    #[error("duplicate row for simulation {0}, job {1}")]
    Duplicate(u64, u64),
}

pub const TRACE_COLUMNS: [&str; 11] = [
    "simulation_id",
    "job_index",
    "submission_time",
    "start_time",
    "end_time",
    "compute_time",
    "input_files_transfer_time",
    "output_files_transfer_time",
    "input_bytes",
    "output_bytes",
    "worker_id",
];

pub const WORKLOAD_COLUMNS: [&str; 8] = [
    "simulation_id",
    "job_index",
    "submission_time",
    "flops",
    "input_files_size",
    "output_files_size",
    "class_id",
    "input_files",
];

/// Rounds a time to the precision kept in trace files.
pub fn trace_precision(x: f64) -> f64 {
    format!("{x:.9}").parse().expect("formatted float parses")
}

pub fn write_trace_csv<W: Write>(records: &[TraceRecord], out: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for r in records {
        w.write_record([
            r.simulation_id.to_string(),
            r.job_index.to_string(),
            format!("{:.9}", r.submission_time),
            format!("{:.9}", r.start_time),
            format!("{:.9}", r.end_time),
            format!("{:.9}", r.compute_time),
            format!("{:.9}", r.input_files_transfer_time),
            format!("{:.9}", r.output_files_transfer_time),
            r.input_bytes.to_string(),
            r.output_bytes.to_string(),
            r.worker_id.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct WorkloadRow {
    simulation_id: u64,
    job_index: u64,
    submission_time: f64,
    flops: f64,
    input_files_size: u64,
    output_files_size: u64,
    class_id: u8,
    input_files: String,
}

pub fn write_workload_csv<W: Write>(jobs: &[JobSpec], out: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(WORKLOAD_COLUMNS)?;
    for j in jobs {
        w.write_record([
            j.simulation_id.to_string(),
            j.job_index.to_string(),
            format!("{:?}", j.submission_time),
            format!("{:?}", j.flops),
            j.input_files_size.to_string(),
            j.output_files_size.to_string(),
            j.class_id.to_string(),
            j.input_files.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_workload_csv<R: Read>(input: R) -> Result<Vec<JobSpec>, TraceError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in r.deserialize::<WorkloadRow>() {
        let row = row?;
        out.push(JobSpec {
            simulation_id: row.simulation_id,
            job_index: row.job_index,
            submission_time: row.submission_time,
            flops: row.flops,
            input_files: row
                .input_files
                .split(';')
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect(),
            input_files_size: row.input_files_size,
            output_files_size: row.output_files_size,
            class_id: row.class_id,
        });
    }
    Ok(out)
}

pub fn write_dataset_json<W: Write>(data: &DatasetSpec, out: W) -> Result<(), TraceError> {
    serde_json::to_writer_pretty(out, data)?;
    Ok(())
}

pub fn read_dataset_json<R: Read>(input: R) -> Result<DatasetSpec, TraceError> {
    Ok(serde_json::from_reader(input)?)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    read_trace_csv(File::open(path)?)
}

pub fn read_workload_file(path: &Path) -> Result<Vec<JobSpec>, TraceError> {
    read_workload_csv(File::open(path)?)
}

/// Which input features a scenario exposes to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub scenario: Scenario,
}

impl FeatureSchema {
    pub fn new(scenario: Scenario) -> Self {
        Self { scenario }
    }

    pub fn feature_names(&self) -> &'static [&'static str] {
        match self.scenario {
            Scenario::Homogeneous => &["job_index", "flops", "input_files_size", "output_files_size"],
            Scenario::Heterogeneous => &[
                "job_index",
                "flops",
                "input_files_size",
                "output_files_size",
                "submission_time",
            ],
        }
    }

    pub fn target_names(&self) -> &'static [&'static str] {
        &TARGET_NAMES
    }

    pub fn features(&self, job: &JobSpec) -> Vec<f64> {
        let mut f = vec![
            job.job_index as f64,
            job.flops,
            job.input_files_size as f64,
            job.output_files_size as f64,
        ];
        if self.scenario == Scenario::Heterogeneous {
            f.push(job.submission_time);
        }
        f
    }
}

pub const TARGET_NAMES: [&str; 5] = [
    "compute_time",
    "input_files_transfer_time",
    "output_files_transfer_time",
    "start_time",
    "end_time",
];

fn targets(t: &TraceRecord) -> Vec<f64> {
    vec![
        t.compute_time,
        t.input_files_transfer_time,
        t.output_files_transfer_time,
        t.start_time,
        t.end_time,
    ]
}

/// One job as the model sees it. `simulation_id` is carried along for
/// reassembly only; it is never a feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub simulation_id: u64,
    pub job_index: u64,
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
}

impl SampleRow {
    pub fn key(&self) -> (u64, u64) {
        (self.simulation_id, self.job_index)
    }
}

/// Rows with features only, for inference on workloads that were never
/// simulated.
pub fn feature_rows(schema: FeatureSchema, workloads: &[JobSpec]) -> Vec<SampleRow> {
    let mut rows: Vec<SampleRow> = workloads
        .iter()
        .map(|j| SampleRow {
            simulation_id: j.simulation_id,
            job_index: j.job_index,
            features: schema.features(j),
            targets: Vec::new(),
        })
        .collect();
    rows.sort_by_key(SampleRow::key);
    rows
}

/// Joins workload rows with trace rows on (simulation_id, job_index).
pub fn join_traces(
    schema: FeatureSchema,
    workloads: &[JobSpec],
    traces: &[TraceRecord],
) -> Result<Vec<SampleRow>, TraceError> {
    let mut jobs: HashMap<(u64, u64), &JobSpec> = HashMap::with_capacity(workloads.len());
    for j in workloads {
        if jobs.insert((j.simulation_id, j.job_index), j).is_some() {
            return Err(TraceError::Duplicate(j.simulation_id, j.job_index));
        }
    }
    let mut rows = BTreeMap::new();
    let mut unmatched = Vec::new();
    for t in traces {
        let key = (t.simulation_id, t.job_index);
        match jobs.get(&key) {
            Some(job) => {
                let row = SampleRow {
                    simulation_id: key.0,
                    job_index: key.1,
                    features: schema.features(job),
                    targets: targets(t),
                };
                if rows.insert(key, row).is_some() {
                    return Err(TraceError::Duplicate(key.0, key.1));
                }
            }
            None => unmatched.push(key),
        }
    }
    for key in jobs.keys() {
        if !rows.contains_key(key) {
            unmatched.push(*key);
        }
    }
    if !unmatched.is_empty() {
        unmatched.sort_unstable();
        return Err(TraceError::Unmatched {
            count: unmatched.len(),
            first: unmatched.into_iter().take(10).collect(),
        });
    }
    Ok(rows.into_values().collect())
}

pub fn write_rows_csv<W: Write>(schema: FeatureSchema, rows: &[SampleRow], out: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["simulation_id".to_owned(), "job_index".to_owned()];
    header.extend(schema.feature_names().iter().map(|s| s.to_string()));
    header.extend(schema.target_names().iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.simulation_id.to_string(), r.job_index.to_string()];
        rec.extend(r.features.iter().chain(&r.targets).map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(schema: FeatureSchema, input: R) -> Result<Vec<SampleRow>, TraceError> {
    let n_feat = schema.feature_names().len();
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse_err = |i: usize| {
            TraceError::Csv(csv::Error::from(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("bad number in column {i}"),
            )))
        };
        let mut nums = Vec::with_capacity(rec.len());
        for (i, field) in rec.iter().enumerate().skip(2) {
            nums.push(field.parse::<f64>().map_err(|_| parse_err(i))?);
        }
        let targets = nums.split_off(n_feat);
        out.push(SampleRow {
            simulation_id: rec[0].parse().map_err(|_| parse_err(0))?,
            job_index: rec[1].parse().map_err(|_| parse_err(1))?,
            features: nums,
            targets,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::platform::builtin_platform;
    use crate::sim::run_simulation;
    use crate::workload::generate_workload;

    fn simulate(scenario: Scenario, n: usize, sim: u64) -> (Vec<JobSpec>, Vec<TraceRecord>) {
        let (jobs, data) = generate_workload(scenario, n, sim, 7);
        let trace = run_simulation(&builtin_platform(scenario), &jobs, &data).unwrap();
        (jobs, trace)
    }

    #[test]
    fn join_single_simulation() {
        let (jobs, trace) = simulate(Scenario::Heterogeneous, 10, 0);
        let rows = join_traces(FeatureSchema::new(Scenario::Heterogeneous), &jobs, &trace).unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows.iter().map(|r| r.job_index).collect::<Vec<_>>(), (0..10).collect::<Vec<_>>());
        assert_eq!(rows[0].features.len(), 5);
        assert_eq!(rows[0].targets.len(), TARGET_NAMES.len());
        assert_eq!(rows[3].targets[0], trace[3].compute_time);
    }

    #[test]
    fn disjoint_files_fail_to_join() {
        let (jobs, _) = simulate(Scenario::Homogeneous, 12, 0);
        let (_, trace) = simulate(Scenario::Homogeneous, 12, 1);
        match join_traces(FeatureSchema::new(Scenario::Homogeneous), &jobs, &trace) {
            Err(TraceError::Unmatched { count, first }) => {
                assert_eq!(count, 24);
                assert_eq!(first.len(), 10);
                assert_eq!(first[0], (0, 0));
            }
            other => panic!("expected unmatched error, got {other:?}"),
        }
    }

    #[test]
    fn trace_csv_header_and_precision() {
        let (_, trace) = simulate(Scenario::Heterogeneous, 30, 4);
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&TRACE_COLUMNS.join(",")));
        let second = text.lines().nth(1).unwrap();
        let start = second.split(',').nth(3).unwrap();
        assert_eq!(start.split('.').nth(1).unwrap().len(), 9);
        let back = read_trace_csv(&buf[..]).unwrap();
        for (a, b) in trace.iter().zip(&back) {
            assert_eq!(b.start_time, trace_precision(a.start_time));
            assert_eq!(b.compute_time, trace_precision(a.compute_time));
            assert_eq!(b.input_bytes, a.input_bytes);
            assert_eq!(b.worker_id, a.worker_id);
        }
        let mut again = Vec::new();
        write_trace_csv(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn workload_csv_is_exact() {
        let (jobs, _) = generate_workload(Scenario::Heterogeneous, 40, 2, 3);
        let mut buf = Vec::new();
        write_workload_csv(&jobs, &mut buf).unwrap();
        assert_eq!(read_workload_csv(&buf[..]).unwrap(), jobs);
    }

    #[test]
    fn rows_round_trip_through_files() {
        let (jobs, trace) = simulate(Scenario::Heterogeneous, 25, 0);
        let schema = FeatureSchema::new(Scenario::Heterogeneous);
        let dir = tempfile::tempdir().unwrap();
        let (wp, tp) = (dir.path().join("workload.csv"), dir.path().join("trace.csv"));
        write_workload_csv(&jobs, File::create(&wp).unwrap()).unwrap();
        write_trace_csv(&trace, File::create(&tp).unwrap()).unwrap();
        let rows = join_traces(schema, &read_workload_file(&wp).unwrap(), &read_trace_file(&tp).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_rows_csv(schema, &rows, &mut buf).unwrap();
        assert_eq!(read_rows_csv(schema, &buf[..]).unwrap(), rows);
    }

    #[test]
    fn homogeneous_schema_drops_submission_time() {
        let schema = FeatureSchema::new(Scenario::Homogeneous);
        assert_eq!(schema.feature_names().len(), 4);
        assert!(!schema.feature_names().contains(&"submission_time"));
        assert!(!schema.feature_names().contains(&"simulation_id"));
    }
}
