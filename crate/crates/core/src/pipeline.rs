//! End-to-end building blocks shared by the CLI, the FFI layer and the
//! acceptance runner: simulate a suite, join and split rows, fit, score.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Surrogate;
use crate::error::Result;
use crate::platform::PlatformSpec;
use crate::preprocess::{make_windows, split_train_eval, RowScaler, SplitSpec};
use crate::sim::{run_simulation, BenchRow, TraceRecord};
use crate::trace_io::{feature_rows, join_traces, FeatureSchema, SampleRow};
use crate::train::{train_model, TrainConfig, TrainOutcome};
use crate::workload::{generate_workload_with, DatasetSpec, JobSpec, Scenario, SuiteEntry, SuiteRole, WorkloadConfig};

pub const TRAIN_FRACTION: f64 = 0.7;

/// One simulation to run. Ids are assigned from 1 in suite order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedSim {
    pub simulation_id: u64,
    pub n_jobs: usize,
    pub role: SuiteRole,
}

pub fn plan_suite(suite: &[SuiteEntry]) -> Vec<PlannedSim> {
    let mut next = 1;
    let mut plan = Vec::new();
    for entry in suite {
        for _ in 0..entry.n_simulations {
            plan.push(PlannedSim {
                simulation_id: next,
                n_jobs: entry.n_jobs,
                role: entry.role,
            });
            next += 1;
        }
    }
    plan
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub plan: PlannedSim,
    pub jobs: Vec<JobSpec>,
    pub dataset: DatasetSpec,
    pub trace: Vec<TraceRecord>,
}

pub fn simulate_one(
    platform: &PlatformSpec,
    config: &WorkloadConfig,
    scenario: Scenario,
    plan: PlannedSim,
    seed: u64,
) -> Result<SimOutput> {
    let (jobs, dataset) = generate_workload_with(config, scenario, plan.n_jobs, plan.simulation_id, seed);
    let trace = run_simulation(platform, &jobs, &dataset)?;
    Ok(SimOutput {
        plan,
        jobs,
        dataset,
        trace,
    })
}

/// Runs every planned simulation on the current rayon pool. Results come
/// back in plan order whatever the pool size.
pub fn simulate_all(
    platform: &PlatformSpec,
    config: &WorkloadConfig,
    scenario: Scenario,
    plan: &[PlannedSim],
    seed: u64,
) -> Result<Vec<SimOutput>> {
    plan.par_iter()
        .map(|&p| simulate_one(platform, config, scenario, p, seed))
        .collect()
}

pub fn sample_rows(schema: FeatureSchema, sims: &[SimOutput]) -> Result<Vec<SampleRow>> {
    let jobs: Vec<JobSpec> = sims.iter().flat_map(|s| s.jobs.iter().cloned()).collect();
    let trace: Vec<TraceRecord> = sims.iter().flat_map(|s| s.trace.iter().cloned()).collect();
    Ok(join_traces(schema, &jobs, &trace)?)
}

/// Rows split by simulation, with a scaler fitted on the training part only.
/// `train` and `eval` are already standardized; `eval_raw` keeps original
/// units for scoring.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub schema: FeatureSchema,
    pub split: SplitSpec,
    pub scaler: RowScaler,
    pub train: Vec<SampleRow>,
    pub eval: Vec<SampleRow>,
    pub eval_raw: Vec<SampleRow>,
}

pub fn prepare(schema: FeatureSchema, rows: &[SampleRow], seed: u64) -> Result<PreparedData> {
    let mut lengths: BTreeMap<u64, usize> = BTreeMap::new();
    for r in rows {
        *lengths.entry(r.simulation_id).or_default() += 1;
    }
    let sims: Vec<(u64, usize)> = lengths.into_iter().collect();
    let split = split_train_eval(&sims, TRAIN_FRACTION, seed)?;
    prepare_with_split(schema, rows, split)
}

pub fn prepare_with_split(schema: FeatureSchema, rows: &[SampleRow], split: SplitSpec) -> Result<PreparedData> {
    let train_ids = split.train_ids();
    let (train_raw, eval_raw): (Vec<SampleRow>, Vec<SampleRow>) = rows
        .iter()
        .cloned()
        .partition(|r| train_ids.binary_search(&r.simulation_id).is_ok());
    let scaler = RowScaler::fit(schema.feature_names(), schema.target_names(), &train_raw)?;
    Ok(PreparedData {
        schema,
        train: scaler.transform(&train_raw)?,
        eval: scaler.transform(&eval_raw)?,
        split,
        scaler,
        eval_raw,
    })
}

/// Windows the prepared rows with the config's window settings and trains.
pub fn fit(cfg: &TrainConfig, data: &PreparedData) -> Result<(Surrogate, TrainOutcome)> {
    let m = &cfg.model;
    let train = make_windows(&data.train, m.window_size, m.window_overlap)?;
    let eval = make_windows(&data.eval, m.window_size, m.window_overlap)?;
    let outcome = train_model(cfg, &train, &eval)?;
    let surrogate = Surrogate::new(outcome.model.clone(), data.scaler.clone(), data.schema)?;
    Ok((surrogate, outcome))
}

/// Times `Surrogate::predict` on a fresh workload per job count: median of
/// `repeats` runs, workload generation not timed. Mirrors
/// [`crate::sim::bench_simulation`] so the two tables line up.
pub fn bench_surrogate(
    surrogate: &Surrogate,
    config: &WorkloadConfig,
    scenario: Scenario,
    job_counts: &[usize],
    seed: u64,
    repeats: usize,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(job_counts.len());
    for &n_jobs in job_counts {
        let (jobs, _) = generate_workload_with(config, scenario, n_jobs, 0, seed);
        let input = feature_rows(surrogate.schema, &jobs);
        let mut samples = Vec::with_capacity(repeats.max(1));
        for _ in 0..repeats.max(1) {
            let t0 = Instant::now();
            let pred = surrogate.predict(&input)?;
            samples.push(t0.elapsed());
            std::hint::black_box(pred);
        }
        samples.sort();
        rows.push(BenchRow {
            scenario,
            n_jobs,
            seconds: samples[samples.len() / 2].as_secs_f64(),
        });
    }
    Ok(rows)
}
