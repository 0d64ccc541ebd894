//! Seeded workload generation for the two evaluation scenarios.
//!
//! Each job reads exactly one input file, placed on the scenario's storage
//! node before the simulation starts. Draws per heterogeneous job, in order:
//! class index, flops, input size, output size, interarrival gap (see
//! [`crate::rng`] for the sampling formulas). Sizes are rounded to whole
//! bytes and clamped to at least one byte.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Stream;

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid job-class config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Homogeneous,
    Heterogeneous,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::Homogeneous, Scenario::Heterogeneous];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Homogeneous => "homogeneous",
            Scenario::Heterogeneous => "heterogeneous",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "homogeneous" => Ok(Scenario::Homogeneous),
            "heterogeneous" => Ok(Scenario::Heterogeneous),
            other => Err(WorkloadError::Argument(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub simulation_id: u64,
    pub job_index: u64,
    pub submission_time: f64,
    pub flops: f64,
    pub input_files: Vec<String>,
    /// Sum of the sizes of `input_files`.
    pub input_files_size: u64,
    pub output_files_size: u64,
    pub class_id: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileSpec {
    pub file_id: String,
    pub size_bytes: u64,
    pub location: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub files: Vec<FileSpec>,
}

impl DatasetSpec {
    pub fn file(&self, id: &str) -> Option<&FileSpec> {
        self.files.iter().find(|f| f.file_id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogNormal {
    pub median: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobClassSpec {
    pub class_id: u8,
    pub flops: LogNormal,
    pub input_files_size_bytes: LogNormal,
    pub output_files_size_bytes: LogNormal,
    pub mean_interarrival_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogeneousDemands {
    pub flops: f64,
    pub input_files_size_bytes: u64,
    pub output_files_size_bytes: u64,
    pub storage_node: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeterogeneousClasses {
    pub storage_node: String,
    pub classes: Vec<JobClassSpec>,
}

/// Resource-demand parameters for both scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub homogeneous: HomogeneousDemands,
    pub heterogeneous: HeterogeneousClasses,
}

pub const JOB_CLASSES_PRESET: &str = include_str!("../presets/job_classes.json");

pub const NUM_JOB_CLASSES: usize = 5;

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self::from_json(JOB_CLASSES_PRESET).expect("shipped job-class config is valid")
    }
}

impl WorkloadConfig {
    pub fn from_json(text: &str) -> Result<Self, WorkloadError> {
        let cfg: WorkloadConfig =
            serde_json::from_str(text).map_err(|e| WorkloadError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: String| Err(WorkloadError::Config(m));
        let h = &self.homogeneous;
        if !(h.flops.is_finite() && h.flops > 0.0) {
            return bad("homogeneous flops must be positive".into());
        }
        if h.input_files_size_bytes == 0 {
            return bad("homogeneous input size must be positive".into());
        }
        let classes = &self.heterogeneous.classes;
        if classes.len() != NUM_JOB_CLASSES {
            return bad(format!("expected {NUM_JOB_CLASSES} job classes, got {}", classes.len()));
        }
        for (i, c) in classes.iter().enumerate() {
            if usize::from(c.class_id) != i {
                return bad(format!("class at position {i} has class_id {}", c.class_id));
            }
            for (name, d) in [
                ("flops", c.flops),
                ("input_files_size_bytes", c.input_files_size_bytes),
                ("output_files_size_bytes", c.output_files_size_bytes),
            ] {
                if !(d.median.is_finite() && d.median > 0.0 && d.sigma.is_finite() && d.sigma >= 0.0) {
                    return bad(format!("class {i}: {name} needs finite median > 0 and sigma >= 0"));
                }
            }
            if !(c.mean_interarrival_s.is_finite() && c.mean_interarrival_s > 0.0) {
                return bad(format!("class {i}: mean_interarrival_s must be positive"));
            }
        }
        Ok(())
    }
}

fn whole_bytes(x: f64) -> u64 {
    // saturating float->int cast; NaN cannot occur for finite positive inputs
    (x.round() as u64).max(1)
}

/// Generates one simulation's jobs and initial file placement with the
/// shipped demand parameters.
pub fn generate_workload(
    scenario: Scenario,
    n_jobs: usize,
    simulation_id: u64,
    seed: u64,
) -> (Vec<JobSpec>, DatasetSpec) {
    generate_workload_with(&WorkloadConfig::default(), scenario, n_jobs, simulation_id, seed)
}

pub fn generate_workload_with(
    config: &WorkloadConfig,
    scenario: Scenario,
    n_jobs: usize,
    simulation_id: u64,
    seed: u64,
) -> (Vec<JobSpec>, DatasetSpec) {
    let mut jobs = Vec::with_capacity(n_jobs);
    let mut files = Vec::with_capacity(n_jobs);
    match scenario {
        Scenario::Homogeneous => {
            let h = &config.homogeneous;
            for idx in 0..n_jobs as u64 {
                let file_id = file_name(simulation_id, idx);
                files.push(FileSpec {
                    file_id: file_id.clone(),
                    size_bytes: h.input_files_size_bytes,
                    location: h.storage_node.clone(),
                });
                jobs.push(JobSpec {
                    simulation_id,
                    job_index: idx,
                    submission_time: 0.0,
                    flops: h.flops,
                    input_files: vec![file_id],
                    input_files_size: h.input_files_size_bytes,
                    output_files_size: h.output_files_size_bytes,
                    class_id: 0,
                });
            }
        }
        Scenario::Heterogeneous => {
            let het = &config.heterogeneous;
            let mut rng = Stream::keyed(seed, simulation_id);
            let mut clock = 0.0_f64;
            for idx in 0..n_jobs as u64 {
                let class = &het.classes[rng.index(het.classes.len())];
                let flops = rng.lognormal(class.flops.median, class.flops.sigma).max(1.0);
                let input = whole_bytes(rng.lognormal(
                    class.input_files_size_bytes.median,
                    class.input_files_size_bytes.sigma,
                ));
                let output = whole_bytes(rng.lognormal(
                    class.output_files_size_bytes.median,
                    class.output_files_size_bytes.sigma,
                ));
                let gap = rng.exponential(class.mean_interarrival_s);
                let mut next = clock + gap;
                if next <= clock {
                    next = f64::from_bits(clock.to_bits() + 1);
                }
                clock = next;
                let file_id = file_name(simulation_id, idx);
                files.push(FileSpec {
                    file_id: file_id.clone(),
                    size_bytes: input,
                    location: het.storage_node.clone(),
                });
                jobs.push(JobSpec {
                    simulation_id,
                    job_index: idx,
                    submission_time: clock,
                    flops,
                    input_files: vec![file_id],
                    input_files_size: input,
                    output_files_size: output,
                    class_id: class.class_id,
                });
            }
        }
    }
    (jobs, DatasetSpec { files })
}

fn file_name(simulation_id: u64, job_index: u64) -> String {
    format!("sim{simulation_id}-input{job_index:06}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteRole {
    Train,
    Extrapolation,
}

impl fmt::Display for SuiteRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SuiteRole::Train => "train",
            SuiteRole::Extrapolation => "extrapolation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub n_jobs: usize,
    pub n_simulations: usize,
    pub role: SuiteRole,
}

/// Simulations per job-count batch of the full-scale suite.
pub const FULL_SIMS_PER_BATCH: usize = 1000;
pub const TRAIN_JOB_COUNTS: [usize; 10] = [1, 10, 20, 50, 100, 250, 500, 1000, 1500, 2000];
pub const EXTRAPOLATION_JOBS: usize = 10_000;
pub const EXTRAPOLATION_SIMS: usize = 10;

/// Training batches followed by the extrapolation set. Both scenarios share
/// the same suite layout.
pub fn scenario_suite(_scenario: Scenario, sims_per_batch: usize) -> Vec<SuiteEntry> {
    let mut suite: Vec<SuiteEntry> = TRAIN_JOB_COUNTS
        .iter()
        .map(|&n_jobs| SuiteEntry {
            n_jobs,
            n_simulations: sims_per_batch.max(1),
            role: SuiteRole::Train,
        })
        .collect();
    suite.push(SuiteEntry {
        n_jobs: EXTRAPOLATION_JOBS,
        n_simulations: EXTRAPOLATION_SIMS,
        role: SuiteRole::Extrapolation,
    });
    suite
}
