//! Deterministic discrete-event simulation of jobs on a platform.
//!
//! Job lifecycle: at its submission time a job joins a FIFO queue. Whenever a
//! core is free the head of the queue goes to the worker with the most free
//! cores (ties broken by node id) and holds one core while it
//!
//! 1. reads its input files from their storage locations,
//! 2. computes for `flops / core_speed` seconds,
//! 3. writes its output back to the storage node holding its first input.
//!
//! Transfers follow a flow-level model. A transfer first waits for the sum of
//! its route's link latencies, then joins bandwidth sharing: every link splits
//! its bandwidth equally among the active transfers crossing it, and a
//! transfer's rate is the minimum of its per-link shares and the non-zero disk
//! bandwidths at its two ends. Rates are recomputed whenever a transfer starts
//! or finishes. Zero-byte phases (no input files, empty output) take no time.
//!
//! Events at the same instant are handled in [`EventKind`] order, then by job
//! index.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::platform::{NodeRole, PlatformSpec};
use crate::workload::{DatasetSpec, JobSpec, Scenario, WorkloadConfig};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("job {job_index}: input file `{file}` is not in the dataset")]
    MissingInputFile { job_index: u64, file: String },
    #[error("no route between `{src}` and `{dst}`")]
    Unroutable { src: String, dst: String },
    #[error("file `{file}` is placed on unknown node `{node}`")]
    UnknownLocation { file: String, node: String },
    #[error("job {job_index}: {reason}")]
    InvalidJob { job_index: u64, reason: String },
    #[error("platform has no worker nodes")]
    NoWorkers,
    #[error("platform has no storage node to receive outputs")]
    NoStorage,
    #[error("audit violation at t={time}: {message}")]
    Audit { time: f64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    JobSubmitted,
    /// A transfer has waited out its latency and joins bandwidth sharing.
    TransferRateChange,
    TransferDone,
    ComputeDone,
    OutputDone,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventPayload {
    Job(usize),
    Transfer(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
    pub job_index: u64,
    pub payload: EventPayload,
    seq: u64,
}

impl SimEvent {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.cmp(&other.kind))
            .then(self.job_index.cmp(&other.job_index))
            .then(self.seq.cmp(&other.seq))
    }
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
pub struct WorkerState {
    pub node_id: String,
    pub cores: u32,
    pub free_cores: u32,
    pub core_speed: f64,
    pub running_jobs: BTreeSet<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Input,
    Output,
}

#[derive(Debug, Clone)]
pub struct TransferState {
    pub id: usize,
    pub route: Vec<usize>,
    pub size: f64,
    pub remaining: f64,
    pub current_rate: f64,
    job: usize,
    phase: Phase,
    disk_cap: f64,
    active: bool,
    delivered: f64,
}

/// One simulated job's observables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub simulation_id: u64,
    pub job_index: u64,
    pub submission_time: f64,
    pub start_time: f64,
    pub end_time: f64,
    pub compute_time: f64,
    pub input_files_transfer_time: f64,
    pub output_files_transfer_time: f64,
    pub input_bytes: u64,
    pub output_bytes: u64,
    pub worker_id: String,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Check core and byte conservation after every event batch.
    pub audit: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimStats {
    pub event_batches: u64,
    pub events: u64,
    pub max_active_transfers: usize,
    pub max_running_jobs: usize,
}

#[derive(Debug, Clone, Default)]
struct JobTimes {
    start: f64,
    input_done: f64,
    compute_done: f64,
    end: f64,
    pending_inputs: usize,
    worker: usize,
    input_bytes: u64,
}

struct Compiled {
    /// node index -> worker slot
    workers: Vec<WorkerState>,
    worker_nodes: Vec<usize>,
    node_read_bw: Vec<f64>,
    node_write_bw: Vec<f64>,
    link_bw: Vec<f64>,
    link_latency: Vec<f64>,
    routes: HashMap<(usize, usize), Vec<usize>>,
}

/// Executes `jobs` on `platform`, returning one record per job ordered by
/// job index.
pub fn run_simulation(
    platform: &PlatformSpec,
    jobs: &[JobSpec],
    datasets: &DatasetSpec,
) -> Result<Vec<TraceRecord>, SimError> {
    run_simulation_with(platform, jobs, datasets, SimOptions::default()).map(|(t, _)| t)
}

pub fn run_simulation_with(
    platform: &PlatformSpec,
    jobs: &[JobSpec],
    datasets: &DatasetSpec,
    options: SimOptions,
) -> Result<(Vec<TraceRecord>, SimStats), SimError> {
    if jobs.is_empty() {
        return Ok((Vec::new(), SimStats::default()));
    }
    Engine::new(platform, jobs, datasets, options)?.run()
}

struct PlannedTransfer {
    src: usize,
    bytes: u64,
}

struct Engine<'a> {
    jobs: Vec<&'a JobSpec>,
    net: Compiled,
    options: SimOptions,
    inputs: Vec<Vec<PlannedTransfer>>,
    output_target: Vec<usize>,
    times: Vec<JobTimes>,
    heap: BinaryHeap<SimEvent>,
    queue: std::collections::VecDeque<usize>,
    transfers: Vec<TransferState>,
    active: Vec<usize>,
    link_load: Vec<u32>,
    now: f64,
    seq: u64,
    stats: SimStats,
}

impl<'a> Engine<'a> {
    fn new(
        platform: &PlatformSpec,
        jobs: &'a [JobSpec],
        datasets: &DatasetSpec,
        options: SimOptions,
    ) -> Result<Self, SimError> {
        let mut jobs: Vec<&JobSpec> = jobs.iter().collect();
        jobs.sort_by_key(|j| j.job_index);
        let mut seen = HashSet::new();
        for j in &jobs {
            if !seen.insert(j.job_index) {
                return Err(SimError::InvalidJob {
                    job_index: j.job_index,
                    reason: "duplicate job index".into(),
                });
            }
            if !(j.flops.is_finite() && j.flops > 0.0) {
                return Err(SimError::InvalidJob {
                    job_index: j.job_index,
                    reason: "flops must be positive".into(),
                });
            }
            if !(j.submission_time.is_finite() && j.submission_time >= 0.0) {
                return Err(SimError::InvalidJob {
                    job_index: j.job_index,
                    reason: "submission time must be finite and non-negative".into(),
                });
            }
        }

        let node_index: HashMap<&str, usize> = platform
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect();
        let link_index: HashMap<&str, usize> = platform
            .links()
            .iter()
            .enumerate()
            .map(|(i, l)| (l.id.as_str(), i))
            .collect();

        let mut worker_nodes: Vec<usize> = platform
            .nodes()
            .iter()
            .enumerate()
            .filter(|(_, n)| n.role == NodeRole::Worker)
            .map(|(i, _)| i)
            .collect();
        if worker_nodes.is_empty() {
            return Err(SimError::NoWorkers);
        }
        worker_nodes.sort_by(|a, b| platform.nodes()[*a].id.cmp(&platform.nodes()[*b].id));
        let workers = worker_nodes
            .iter()
            .map(|&i| {
                let n = &platform.nodes()[i];
                WorkerState {
                    node_id: n.id.clone(),
                    cores: n.cores,
                    free_cores: n.cores,
                    core_speed: n.core_speed_flops,
                    running_jobs: BTreeSet::new(),
                }
            })
            .collect();
        let default_storage = platform
            .storage_nodes()
            .map(|n| n.id.as_str())
            .min()
            .map(|id| node_index[id]);

        let files: HashMap<&str, (usize, u64)> = {
            let mut m = HashMap::new();
            for f in &datasets.files {
                let node = *node_index.get(f.location.as_str()).ok_or_else(|| SimError::UnknownLocation {
                    file: f.file_id.clone(),
                    node: f.location.clone(),
                })?;
                m.insert(f.file_id.as_str(), (node, f.size_bytes));
            }
            m
        };

        let mut routes = HashMap::new();
        let mut resolve = |src: usize, dst: usize| -> Result<(), SimError> {
            if routes.contains_key(&(src, dst)) {
                return Ok(());
            }
            let (s, d) = (&platform.nodes()[src].id, &platform.nodes()[dst].id);
            let links = platform.route(s, d).ok_or_else(|| SimError::Unroutable {
                src: s.clone(),
                dst: d.clone(),
            })?;
            routes.insert((src, dst), links.iter().map(|l| link_index[l]).collect());
            Ok(())
        };

        let mut inputs = Vec::with_capacity(jobs.len());
        let mut output_target = Vec::with_capacity(jobs.len());
        for j in &jobs {
            let mut planned = Vec::with_capacity(j.input_files.len());
            for f in &j.input_files {
                let &(node, bytes) = files.get(f.as_str()).ok_or_else(|| SimError::MissingInputFile {
                    job_index: j.job_index,
                    file: f.clone(),
                })?;
                for &w in &worker_nodes {
                    resolve(node, w)?;
                }
                planned.push(PlannedTransfer { src: node, bytes });
            }
            let target = match planned.first() {
                Some(p) => p.src,
                None => default_storage.ok_or(SimError::NoStorage)?,
            };
            if j.output_files_size > 0 {
                for &w in &worker_nodes {
                    resolve(w, target)?;
                }
            }
            inputs.push(planned);
            output_target.push(target);
        }

        let net = Compiled {
            workers,
            worker_nodes,
            node_read_bw: platform.nodes().iter().map(|n| n.disk_read_bw_bps).collect(),
            node_write_bw: platform.nodes().iter().map(|n| n.disk_write_bw_bps).collect(),
            link_bw: platform.links().iter().map(|l| l.bandwidth_bps).collect(),
            link_latency: platform.links().iter().map(|l| l.latency_s).collect(),
            routes,
        };
        let n_links = net.link_bw.len();
        let n_jobs = jobs.len();
        Ok(Self {
            jobs,
            net,
            options,
            inputs,
            output_target,
            times: vec![JobTimes::default(); n_jobs],
            heap: BinaryHeap::new(),
            queue: Default::default(),
            transfers: Vec::new(),
            active: Vec::new(),
            link_load: vec![0; n_links],
            now: 0.0,
            seq: 0,
            stats: SimStats::default(),
        })
    }

    fn push(&mut self, time: f64, kind: EventKind, job: usize, payload: EventPayload) {
        self.seq += 1;
        self.heap.push(SimEvent {
            time,
            kind,
            job_index: self.jobs[job].job_index,
            payload,
            seq: self.seq,
        });
    }

    fn run(mut self) -> Result<(Vec<TraceRecord>, SimStats), SimError> {
        for j in 0..self.jobs.len() {
            let t = self.jobs[j].submission_time;
            self.push(t, EventKind::JobSubmitted, j, EventPayload::Job(j));
        }

        let mut batch: Vec<SimEvent> = Vec::new();
        let mut finished: Vec<(f64, usize)> = Vec::new();
        loop {
            // next instant: earliest queued event or earliest flow completion
            let mut next = self.heap.peek().map(|e| e.time);
            finished.clear();
            for &id in &self.active {
                let tr = &self.transfers[id];
                let done_at = if tr.remaining <= 0.0 {
                    self.now
                } else if tr.current_rate > 0.0 {
                    self.now + tr.remaining / tr.current_rate
                } else {
                    f64::INFINITY
                };
                finished.push((done_at, id));
                if next.is_none_or(|n| done_at < n) {
                    next = Some(done_at);
                }
            }
            let Some(t) = next else { break };
            if !t.is_finite() {
                return Err(SimError::Audit {
                    time: self.now,
                    message: "transfers stalled with zero rate".into(),
                });
            }

            // advance flows to t
            let dt = t - self.now;
            let mut completed = Vec::new();
            for &(done_at, id) in &finished {
                let tr = &mut self.transfers[id];
                if done_at <= t {
                    tr.delivered += tr.current_rate * (done_at - self.now);
                    tr.remaining = 0.0;
                    completed.push(id);
                } else {
                    let moved = tr.current_rate * dt;
                    tr.delivered += moved;
                    tr.remaining = (tr.remaining - moved).max(0.0);
                }
            }
            self.now = t;

            batch.clear();
            while self.heap.peek().is_some_and(|e| e.time <= t) {
                batch.push(self.heap.pop().expect("peeked"));
            }
            for id in completed {
                let tr = &self.transfers[id];
                let kind = match tr.phase {
                    Phase::Input => EventKind::TransferDone,
                    Phase::Output => EventKind::OutputDone,
                };
                self.seq += 1;
                batch.push(SimEvent {
                    time: t,
                    kind,
                    job_index: self.jobs[tr.job].job_index,
                    payload: EventPayload::Transfer(id),
                    seq: self.seq,
                });
            }
            batch.sort_by(|a, b| a.key_cmp(b));

            for ev in batch.iter().copied() {
                self.stats.events += 1;
                self.handle(ev)?;
            }
            self.stats.event_batches += 1;
            self.recompute_rates();
            if self.options.audit {
                self.audit()?;
            }
        }

        let records = self
            .jobs
            .iter()
            .zip(&self.times)
            .map(|(job, tm)| TraceRecord {
                simulation_id: job.simulation_id,
                job_index: job.job_index,
                submission_time: job.submission_time,
                start_time: tm.start,
                end_time: tm.end,
                compute_time: tm.compute_done - tm.input_done,
                input_files_transfer_time: tm.input_done - tm.start,
                output_files_transfer_time: tm.end - tm.compute_done,
                input_bytes: tm.input_bytes,
                output_bytes: job.output_files_size,
                worker_id: self.net.workers[tm.worker].node_id.clone(),
            })
            .collect();
        Ok((records, self.stats))
    }

    fn handle(&mut self, ev: SimEvent) -> Result<(), SimError> {
        match (ev.kind, ev.payload) {
            (EventKind::JobSubmitted, EventPayload::Job(j)) => {
                self.queue.push_back(j);
                self.dispatch();
            }
            (EventKind::TransferRateChange, EventPayload::Transfer(id)) => {
                let tr = &mut self.transfers[id];
                tr.active = true;
                for &l in &tr.route {
                    self.link_load[l] += 1;
                }
                self.active.push(id);
                self.stats.max_active_transfers = self.stats.max_active_transfers.max(self.active.len());
            }
            (EventKind::TransferDone | EventKind::OutputDone, EventPayload::Transfer(id)) => {
                self.retire_transfer(id)?;
                let (job, phase) = (self.transfers[id].job, self.transfers[id].phase);
                match phase {
                    Phase::Input => {
                        let tm = &mut self.times[job];
                        tm.pending_inputs -= 1;
                        if tm.pending_inputs == 0 {
                            self.start_compute(job);
                        }
                    }
                    Phase::Output => self.finish_job(job),
                }
            }
            (EventKind::ComputeDone, EventPayload::Job(j)) => {
                self.times[j].compute_done = self.now;
                let bytes = self.jobs[j].output_files_size;
                if bytes == 0 {
                    self.finish_job(j);
                } else {
                    let worker = self.net.worker_nodes[self.times[j].worker];
                    self.start_transfer(j, Phase::Output, worker, self.output_target[j], bytes);
                }
            }
            (kind, payload) => unreachable!("malformed event {kind:?} / {payload:?}"),
        }
        Ok(())
    }

    fn dispatch(&mut self) {
        while let Some(&job) = self.queue.front() {
            let mut best: Option<usize> = None;
            for (i, w) in self.net.workers.iter().enumerate() {
                if w.free_cores > 0 && best.is_none_or(|b| w.free_cores > self.net.workers[b].free_cores) {
                    best = Some(i);
                }
            }
            let Some(w) = best else { return };
            self.queue.pop_front();
            let worker = &mut self.net.workers[w];
            worker.free_cores -= 1;
            worker.running_jobs.insert(self.jobs[job].job_index);
            let running: usize = self.net.workers.iter().map(|w| w.running_jobs.len()).sum();
            self.stats.max_running_jobs = self.stats.max_running_jobs.max(running);

            let tm = &mut self.times[job];
            tm.start = self.now;
            tm.worker = w;
            tm.pending_inputs = self.inputs[job].len();
            tm.input_bytes = self.inputs[job].iter().map(|p| p.bytes).sum();
            if tm.pending_inputs == 0 {
                self.start_compute(job);
            } else {
                let dst = self.net.worker_nodes[w];
                let planned: Vec<(usize, u64)> = self.inputs[job].iter().map(|p| (p.src, p.bytes)).collect();
                for (src, bytes) in planned {
                    self.start_transfer(job, Phase::Input, src, dst, bytes);
                }
            }
        }
    }

    fn start_transfer(&mut self, job: usize, phase: Phase, src: usize, dst: usize, bytes: u64) {
        let route = self.net.routes[&(src, dst)].clone();
        let latency: f64 = route.iter().map(|&l| self.net.link_latency[l]).sum();
        let disk_cap = [self.net.node_read_bw[src], self.net.node_write_bw[dst]]
            .into_iter()
            .filter(|bw| *bw > 0.0)
            .fold(f64::INFINITY, f64::min);
        let id = self.transfers.len();
        self.transfers.push(TransferState {
            id,
            route,
            size: bytes as f64,
            remaining: bytes as f64,
            current_rate: 0.0,
            job,
            phase,
            disk_cap,
            active: false,
            delivered: 0.0,
        });
        self.push(self.now + latency, EventKind::TransferRateChange, job, EventPayload::Transfer(id));
    }

    fn retire_transfer(&mut self, id: usize) -> Result<(), SimError> {
        let pos = self
            .active
            .iter()
            .position(|&a| a == id)
            .expect("completed transfer is active");
        self.active.swap_remove(pos);
        let tr = &mut self.transfers[id];
        tr.active = false;
        for &l in &tr.route {
            self.link_load[l] -= 1;
        }
        if self.options.audit && tr.size > 0.0 {
            let err = (tr.delivered - tr.size).abs() / tr.size;
            if err > 1e-6 {
                return Err(SimError::Audit {
                    time: self.now,
                    message: format!(
                        "transfer {id} delivered {} of {} bytes (rel. error {err:e})",
                        tr.delivered, tr.size
                    ),
                });
            }
        }
        Ok(())
    }

    fn start_compute(&mut self, job: usize) {
        let tm = &mut self.times[job];
        tm.input_done = self.now;
        let speed = self.net.workers[tm.worker].core_speed;
        let done = self.now + self.jobs[job].flops / speed;
        self.push(done, EventKind::ComputeDone, job, EventPayload::Job(job));
    }

    fn finish_job(&mut self, job: usize) {
        let tm = &mut self.times[job];
        tm.end = self.now;
        let worker = &mut self.net.workers[tm.worker];
        worker.free_cores += 1;
        worker.running_jobs.remove(&self.jobs[job].job_index);
        self.dispatch();
    }

    fn recompute_rates(&mut self) {
        for &id in &self.active {
            let tr = &mut self.transfers[id];
            let mut rate = tr.disk_cap;
            for &l in &tr.route {
                rate = rate.min(self.net.link_bw[l] / f64::from(self.link_load[l]));
            }
            tr.current_rate = rate;
        }
    }

    fn audit(&self) -> Result<(), SimError> {
        let fail = |message: String| Err(SimError::Audit { time: self.now, message });
        for w in &self.net.workers {
            let running = w.running_jobs.len() as u64;
            if running > u64::from(w.cores) || running + u64::from(w.free_cores) != u64::from(w.cores) {
                return fail(format!(
                    "worker {} runs {running} jobs with {} free of {} cores",
                    w.node_id, w.free_cores, w.cores
                ));
            }
        }
        let mut load = vec![0u32; self.link_load.len()];
        for &id in &self.active {
            let tr = &self.transfers[id];
            if !tr.active || tr.remaining < 0.0 || tr.current_rate < 0.0 {
                return fail(format!("transfer {id} in inconsistent state"));
            }
            for &l in &tr.route {
                load[l] += 1;
            }
        }
        if load != self.link_load {
            return fail("link load bookkeeping diverged".into());
        }
        for (l, &n) in load.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let used: f64 = self
                .active
                .iter()
                .filter(|&&id| self.transfers[id].route.contains(&l))
                .map(|&id| self.transfers[id].current_rate)
                .sum();
            if used > self.net.link_bw[l] * (1.0 + 1e-9) {
                return fail(format!("link {l} oversubscribed: {used} > {}", self.net.link_bw[l]));
            }
        }
        Ok(())
    }
}

/// Wall-clock time of one simulation size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: Scenario,
    pub n_jobs: usize,
    pub seconds: f64,
}

/// Times the simulator once per job count: median of `repeats` runs over a
/// freshly generated workload (generation is not timed).
pub fn bench_simulation(
    platform: &PlatformSpec,
    config: &WorkloadConfig,
    scenario: Scenario,
    job_counts: &[usize],
    seed: u64,
    repeats: usize,
) -> Result<Vec<BenchRow>, SimError> {
    let mut rows = Vec::with_capacity(job_counts.len());
    for &n_jobs in job_counts {
        let (jobs, data) = crate::workload::generate_workload_with(config, scenario, n_jobs, 0, seed);
        let mut samples: Vec<Duration> = Vec::with_capacity(repeats.max(1));
        for _ in 0..repeats.max(1) {
            let t0 = Instant::now();
            let trace = run_simulation(platform, &jobs, &data)?;
            samples.push(t0.elapsed());
            std::hint::black_box(trace);
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

pub fn write_bench_csv<W: std::io::Write>(rows: &[BenchRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "n_jobs", "seconds"])?;
    for r in rows {
        w.write_record([r.scenario.to_string(), r.n_jobs.to_string(), format!("{:.9}", r.seconds)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bench_csv<R: std::io::Read>(input: R) -> csv::Result<Vec<BenchRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}
