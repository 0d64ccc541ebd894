//! The `gridsurrogate` command line.
//!
//! Every stage reads the files of earlier stages under `<out>/<scenario>/`
//! and writes its own subdirectory there:
//!
//! ```text
//! <out>/<scenario>/suite.csv, provenance.json      simulate
//! <out>/<scenario>/sim_<id>/{workload.csv, trace.csv, dataset.json}
//! <out>/<scenario>/preprocess/                     rows.csv, split.json, scaler.json
//! <out>/<scenario>/tune/                           audit.csv, best.json
//! <out>/<scenario>/train/                          model.json, history.csv
//! <out>/<scenario>/bench/                          simulator.csv, surrogate.csv, speedup.csv
//! <out>/<scenario>/evaluate/{eval,extrapolation}/  report.json, r2.csv, kde_*.csv
//! ```
//!
//! Each stage directory carries a `provenance.json` with the manifest hash
//! and seed. Settings come from built-in defaults, then the `--manifest`
//! file, then command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::Surrogate;
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, speedup_report, write_report, write_speedup_csv};
use crate::nn::{Architecture, ModelConfig};
use crate::pipeline::{bench_surrogate, plan_suite, prepare_with_split, simulate_all, PlannedSim, SimOutput, TRAIN_FRACTION};
use crate::platform::{builtin_platform, parse_platform, PlatformSpec};
use crate::preprocess::{split_train_eval, SplitSpec};
use crate::sim::{bench_simulation, read_bench_csv, write_bench_csv, BenchRow};
use crate::trace_io::{
    join_traces, read_rows_csv, read_trace_file, read_workload_file, write_dataset_json, write_rows_csv,
    write_trace_csv, write_workload_csv, FeatureSchema, SampleRow,
};
use crate::train::{read_audit_csv, replay_winner, tune_hyperparameters, write_audit_csv, RowData, SearchSpace, TrainConfig};
use crate::workload::{
    Scenario, SuiteEntry, SuiteRole, WorkloadConfig, EXTRAPOLATION_JOBS, EXTRAPOLATION_SIMS, TRAIN_JOB_COUNTS,
};

pub const DEFAULT_SIMS_PER_BATCH: usize = 20;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "gridsurrogate", version, about = "Simulate grid workloads and train surrogates on the traces")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; each one beats the manifest.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Experiment manifest (JSON).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// homogeneous or heterogeneous [default: homogeneous]
    #[arg(long, global = true)]
    pub scenario: Option<Scenario>,
    /// Simulations per training job-count batch.
    #[arg(long, global = true)]
    pub sims_per_batch: Option<usize>,
    /// Master seed for workloads, splits and model init [default: 42]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// bigru, bilstm or transformer [default: bigru]
    #[arg(long, global = true)]
    pub arch: Option<Architecture>,
    /// Attention heads (transformer only).
    #[arg(long, global = true)]
    pub num_heads: Option<usize>,
    /// Epoch cap for training [default: 200]
    #[arg(long, global = true)]
    pub max_epochs: Option<usize>,
    /// Output root [default: out]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for simulations and tuning trials. Outputs do not
    /// depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate workloads and run the simulator over the scenario suite.
    Simulate,
    /// Join workloads with traces and split training simulations 70:30.
    Preprocess,
    /// Two-stage hyperparameter search on the preprocessed rows.
    Tune,
    /// Train one surrogate.
    Train {
        /// Use the configuration chosen by `tune` instead of the manifest's.
        #[arg(long)]
        tuned: bool,
    },
    /// Time the simulator and the trained surrogate per job count.
    Bench {
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Score the trained surrogate on the eval split and the extrapolation set.
    Evaluate,
    /// simulate, preprocess, train and evaluate in one go.
    Run,
}

/// Model hyperparameters a manifest may pin. Unset fields keep defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    pub architecture: Option<Architecture>,
    pub hidden_size: Option<usize>,
    pub num_layers: Option<usize>,
    pub window_size: Option<usize>,
    pub window_overlap: Option<usize>,
    pub batch_size: Option<usize>,
    pub num_heads: Option<usize>,
    pub learning_rate: Option<f64>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub scenario: Option<Scenario>,
    pub sims_per_batch: Option<usize>,
    /// Replaces the training job counts of the suite.
    pub job_counts: Option<Vec<usize>>,
    pub extrapolation_jobs: Option<usize>,
    pub extrapolation_sims: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Platform file replacing the scenario preset.
    pub platform: Option<PathBuf>,
    /// Job-class parameter file replacing the shipped one.
    pub job_classes: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelOverrides,
    pub search_space: Option<SearchSpace>,
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct Settings {
    pub scenario: Scenario,
    pub suite: Vec<SuiteEntry>,
    pub seed: u64,
    pub out: PathBuf,
    pub platform: PlatformSpec,
    pub workload: WorkloadConfig,
    pub train: TrainConfig,
    pub search_space: SearchSpace,
    /// sha256 of the manifest bytes, or "none".
    pub manifest_sha256: String,
}

impl Settings {
    pub fn resolve(flags: &Overrides) -> Result<Self> {
        let (manifest, manifest_sha256, base_dir) = match &flags.manifest {
            Some(path) => {
                let bytes = fs::read(path).map_err(|e| Error::io(format!("reading manifest {}", path.display()), e))?;
                let m: ExperimentManifest = serde_json::from_slice(&bytes)
                    .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
                let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (m, hex(&Sha256::digest(&bytes)), dir)
            }
            None => (ExperimentManifest::default(), "none".to_owned(), PathBuf::new()),
        };
        let referenced = |p: &PathBuf| -> Result<String> {
            let full = base_dir.join(p);
            fs::read_to_string(&full)
                .map_err(|e| Error::Manifest(format!("referenced file {} is not readable: {e}", full.display())))
        };

        let scenario = flags.scenario.or(manifest.scenario).unwrap_or(Scenario::Homogeneous);
        let seed = flags.seed.or(manifest.seed).unwrap_or(DEFAULT_SEED);
        let sims_per_batch = flags.sims_per_batch.or(manifest.sims_per_batch).unwrap_or(DEFAULT_SIMS_PER_BATCH);
        if sims_per_batch == 0 {
            return Err(Error::Manifest("sims_per_batch must be at least 1".into()));
        }
        let job_counts = manifest.job_counts.clone().unwrap_or_else(|| TRAIN_JOB_COUNTS.to_vec());
        if job_counts.contains(&0) {
            return Err(Error::Manifest("job_counts entries must be at least 1".into()));
        }
        let mut suite: Vec<SuiteEntry> = job_counts
            .iter()
            .map(|&n_jobs| SuiteEntry {
                n_jobs,
                n_simulations: sims_per_batch,
                role: SuiteRole::Train,
            })
            .collect();
        let x_sims = manifest.extrapolation_sims.unwrap_or(EXTRAPOLATION_SIMS);
        if x_sims > 0 {
            suite.push(SuiteEntry {
                n_jobs: manifest.extrapolation_jobs.unwrap_or(EXTRAPOLATION_JOBS).max(1),
                n_simulations: x_sims,
                role: SuiteRole::Extrapolation,
            });
        }

        let platform = match &manifest.platform {
            Some(p) => parse_platform(&referenced(p)?)?,
            None => builtin_platform(scenario),
        };
        let workload = match &manifest.job_classes {
            Some(p) => WorkloadConfig::from_json(&referenced(p)?)?,
            None => WorkloadConfig::default(),
        };

        let m = &manifest.model;
        let schema = FeatureSchema::new(scenario);
        let model = ModelConfig {
            architecture: flags.arch.or(m.architecture).unwrap_or(Architecture::Bigru),
            hidden_size: m.hidden_size.unwrap_or(8),
            num_layers: m.num_layers.unwrap_or(1),
            window_size: m.window_size.unwrap_or(32),
            window_overlap: m.window_overlap.unwrap_or(0),
            batch_size: m.batch_size.unwrap_or(32),
            num_heads: flags.num_heads.or(m.num_heads).unwrap_or(2),
            input_dim: schema.feature_names().len(),
            output_dim: schema.target_names().len(),
            seed,
        };
        let mut train = TrainConfig::new(model);
        if let Some(lr) = m.learning_rate {
            train.learning_rate = lr;
        }
        if let Some(e) = flags.max_epochs.or(m.max_epochs) {
            train.max_epochs = e;
        }
        if let Some(p) = m.patience {
            train.patience = p;
        }
        train.validate().map_err(|e| Error::Manifest(e.to_string()))?;
        let search_space = manifest.search_space.clone().unwrap_or_default();

        Ok(Settings {
            scenario,
            suite,
            seed,
            out: flags.out.clone().or(manifest.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
            platform,
            workload,
            train,
            search_space,
            manifest_sha256,
        })
    }

    pub fn scenario_dir(&self) -> PathBuf {
        self.out.join(self.scenario.as_str())
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema::new(self.scenario)
    }

    fn provenance(&self, command: &str) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("command".to_owned(), command.to_owned()),
            ("manifest_sha256".to_owned(), self.manifest_sha256.clone()),
            ("scenario".to_owned(), self.scenario.to_string()),
            ("seed".to_owned(), self.seed.to_string()),
            ("version".to_owned(), env!("CARGO_PKG_VERSION").to_owned()),
        ])
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating output directory {}", dir.display()), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, artifact: &str, command: &'static str) -> Result<T> {
    let text = read_artifact(path, artifact, command)?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })
}

fn read_artifact(path: &Path, artifact: &str, command: &'static str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact {
            artifact: artifact.to_owned(),
            path: path.to_owned(),
            command,
        },
        _ => Error::io(format!("reading {}", path.display()), e),
    })
}

fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn write_provenance(dir: &Path, settings: &Settings, command: &str) -> Result<()> {
    write_json(&dir.join("provenance.json"), &settings.provenance(command))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SuiteRow {
    simulation_id: u64,
    n_jobs: usize,
    role: SuiteRole,
}

pub fn sim_dir(settings: &Settings, simulation_id: u64) -> PathBuf {
    settings.scenario_dir().join(format!("sim_{simulation_id}"))
}

pub fn cmd_simulate(settings: &Settings) -> Result<Vec<PlannedSim>> {
    let dir = settings.scenario_dir();
    create_dir(&dir)?;
    let plan = plan_suite(&settings.suite);
    // write in chunks so the 10k-job runs are not all held in memory at once
    for chunk in plan.chunks(64) {
        let sims = simulate_all(&settings.platform, &settings.workload, settings.scenario, chunk, settings.seed)?;
        for sim in &sims {
            write_simulation(settings, sim)?;
        }
    }
    let suite_path = dir.join("suite.csv");
    let mut w = csv::Writer::from_writer(create_file(&suite_path)?);
    let io = |e: csv::Error| Error::io(format!("writing {}", suite_path.display()), e.into());
    for p in &plan {
        w.serialize(SuiteRow {
            simulation_id: p.simulation_id,
            n_jobs: p.n_jobs,
            role: p.role,
        })
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", suite_path.display()), e))?;
    write_provenance(&dir, settings, "simulate")?;
    Ok(plan)
}

fn write_simulation(settings: &Settings, sim: &SimOutput) -> Result<()> {
    let dir = sim_dir(settings, sim.plan.simulation_id);
    create_dir(&dir)?;
    write_workload_csv(&sim.jobs, create_file(&dir.join("workload.csv"))?)?;
    write_trace_csv(&sim.trace, create_file(&dir.join("trace.csv"))?)?;
    write_dataset_json(&sim.dataset, create_file(&dir.join("dataset.json"))?)?;
    Ok(())
}

fn read_suite(settings: &Settings) -> Result<Vec<PlannedSim>> {
    let path = settings.scenario_dir().join("suite.csv");
    let text = read_artifact(&path, "simulation suite", "simulate")?;
    csv::Reader::from_reader(text.as_bytes())
        .deserialize::<SuiteRow>()
        .map(|r| {
            let r = r.map_err(|e| Error::Trace(e.into()))?;
            Ok(PlannedSim {
                simulation_id: r.simulation_id,
                n_jobs: r.n_jobs,
                role: r.role,
            })
        })
        .collect()
}

/// Joined rows (original units) of the simulations with the given role.
pub fn load_rows(settings: &Settings, role: SuiteRole) -> Result<Vec<SampleRow>> {
    let mut jobs = Vec::new();
    let mut trace = Vec::new();
    for p in read_suite(settings)?.into_iter().filter(|p| p.role == role) {
        let dir = sim_dir(settings, p.simulation_id);
        let missing = |name: &str| Error::MissingArtifact {
            artifact: format!("simulation {} {name}", p.simulation_id),
            path: dir.join(name),
            command: "simulate",
        };
        jobs.extend(read_workload_file(&dir.join("workload.csv")).map_err(|_| missing("workload.csv"))?);
        trace.extend(read_trace_file(&dir.join("trace.csv")).map_err(|_| missing("trace.csv"))?);
    }
    Ok(join_traces(settings.schema(), &jobs, &trace)?)
}

fn preprocess_dir(settings: &Settings) -> PathBuf {
    settings.scenario_dir().join("preprocess")
}

pub fn cmd_preprocess(settings: &Settings) -> Result<SplitSpec> {
    let rows = load_rows(settings, SuiteRole::Train)?;
    let mut lengths: BTreeMap<u64, usize> = BTreeMap::new();
    for r in &rows {
        *lengths.entry(r.simulation_id).or_default() += 1;
    }
    let sims: Vec<(u64, usize)> = lengths.into_iter().collect();
    let split = split_train_eval(&sims, TRAIN_FRACTION, settings.seed)?;
    let data = prepare_with_split(settings.schema(), &rows, split.clone())?;

    let dir = preprocess_dir(settings);
    create_dir(&dir)?;
    write_rows_csv(settings.schema(), &rows, create_file(&dir.join("rows.csv"))?)?;
    write_json(&dir.join("split.json"), &split)?;
    write_json(&dir.join("scaler.json"), &data.scaler)?;
    write_provenance(&dir, settings, "preprocess")?;
    Ok(split)
}

fn load_prepared(settings: &Settings) -> Result<crate::pipeline::PreparedData> {
    let dir = preprocess_dir(settings);
    let text = read_artifact(&dir.join("rows.csv"), "preprocessed rows", "preprocess")?;
    let rows = read_rows_csv(settings.schema(), text.as_bytes())?;
    let split: SplitSpec = read_json(&dir.join("split.json"), "train/eval split", "preprocess")?;
    prepare_with_split(settings.schema(), &rows, split)
}

fn tune_dir(settings: &Settings) -> PathBuf {
    settings.scenario_dir().join("tune")
}

pub fn cmd_tune(settings: &Settings) -> Result<TrainConfig> {
    let data = load_prepared(settings)?;
    let evaluator = RowData {
        train: &data.train,
        eval: &data.eval,
    };
    let outcome = tune_hyperparameters(&settings.search_space, &settings.train, &evaluator, settings.seed)?;
    let dir = tune_dir(settings);
    create_dir(&dir)?;
    write_audit_csv(&outcome.audit, create_file(&dir.join("audit.csv"))?)?;
    write_json(&dir.join("best.json"), &outcome.best)?;
    write_provenance(&dir, settings, "tune")?;
    Ok(outcome.best)
}

fn train_dir(settings: &Settings) -> PathBuf {
    settings.scenario_dir().join("train")
}

pub fn model_path(settings: &Settings) -> PathBuf {
    train_dir(settings).join("model.json")
}

pub fn cmd_train(settings: &Settings, tuned: bool) -> Result<Surrogate> {
    let cfg = if tuned {
        let audit_path = tune_dir(settings).join("audit.csv");
        let text = read_artifact(&audit_path, "tuning audit log", "tune")?;
        replay_winner(&read_audit_csv(text.as_bytes())?)?.1
    } else {
        settings.train.clone()
    };
    let data = load_prepared(settings)?;
    let (surrogate, outcome) = crate::pipeline::fit(&cfg, &data)?;

    let dir = train_dir(settings);
    create_dir(&dir)?;
    let mut prov = settings.provenance("train");
    prov.insert("best_epoch".into(), outcome.best_epoch.to_string());
    prov.insert("best_eval_loss".into(), format!("{:?}", outcome.best_eval_loss));
    prov.insert("tuned".into(), tuned.to_string());
    surrogate.save(&model_path(settings), prov)?;
    write_json(&dir.join("scaler.json"), &surrogate.scaler)?;
    let path = dir.join("history.csv");
    let mut w = csv::Writer::from_writer(create_file(&path)?);
    let io = |e: csv::Error| Error::io(format!("writing {}", path.display()), e.into());
    w.write_record(["epoch", "train_loss", "eval_loss", "steps"]).map_err(io)?;
    for h in &outcome.history {
        w.write_record([
            h.epoch.to_string(),
            format!("{:?}", h.train_loss),
            format!("{:?}", h.eval_loss),
            h.steps.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    write_provenance(&dir, settings, "train")?;
    Ok(surrogate)
}

fn load_model(settings: &Settings) -> Result<Surrogate> {
    let path = model_path(settings);
    if !path.exists() {
        return Err(Error::MissingArtifact {
            artifact: "model checkpoint".into(),
            path,
            command: "train",
        });
    }
    let s = Surrogate::load(&path)?;
    if s.schema != settings.schema() {
        return Err(Error::Checkpoint(format!(
            "{} was trained for the {} scenario, not {}",
            path.display(),
            s.schema.scenario,
            settings.scenario
        )));
    }
    Ok(s)
}

fn bench_dir(settings: &Settings) -> PathBuf {
    settings.scenario_dir().join("bench")
}

fn distinct_job_counts(settings: &Settings) -> Vec<usize> {
    let mut counts: Vec<usize> = settings.suite.iter().map(|e| e.n_jobs).collect();
    counts.sort_unstable();
    counts.dedup();
    counts
}

pub fn cmd_bench(settings: &Settings, repeats: usize) -> Result<Vec<crate::eval::SpeedupRow>> {
    let surrogate = load_model(settings)?;
    let counts = distinct_job_counts(settings);
    let sim = bench_simulation(&settings.platform, &settings.workload, settings.scenario, &counts, settings.seed, repeats)?;
    let sur = bench_surrogate(&surrogate, &settings.workload, settings.scenario, &counts, settings.seed, repeats)?;
    let speedup = speedup_report(&sim, &sur)?;
    let dir = bench_dir(settings);
    create_dir(&dir)?;
    for (name, rows) in [("simulator.csv", &sim), ("surrogate.csv", &sur)] {
        write_bench_csv(rows, create_file(&dir.join(name))?).map_err(|e| Error::Trace(e.into()))?;
    }
    write_speedup_csv(&dir.join("speedup.csv"), &speedup)?;
    write_provenance(&dir, settings, "bench")?;
    Ok(speedup)
}

fn read_bench(path: &Path) -> Result<Vec<BenchRow>> {
    let text = read_artifact(path, "benchmark timings", "bench")?;
    read_bench_csv(text.as_bytes()).map_err(|e| Error::Trace(e.into()))
}

/// Reports for the eval split and, when the suite has one, the
/// extrapolation set. Benchmark timings are attached when `bench` has run.
pub fn cmd_evaluate(settings: &Settings) -> Result<Vec<(String, crate::eval::EvalReport)>> {
    let surrogate = load_model(settings)?;
    let data = load_prepared(settings)?;
    let mut sets = vec![("eval".to_owned(), data.eval_raw)];
    let extrapolation = load_rows(settings, SuiteRole::Extrapolation)?;
    if !extrapolation.is_empty() {
        sets.push(("extrapolation".to_owned(), extrapolation));
    }
    let bench = bench_dir(settings);
    let runtime = if bench.join("surrogate.csv").exists() {
        speedup_report(&read_bench(&bench.join("simulator.csv"))?, &read_bench(&bench.join("surrogate.csv"))?)?
    } else {
        Vec::new()
    };
    let dir = settings.scenario_dir().join("evaluate");
    let mut reports = Vec::new();
    for (name, rows) in sets {
        let mut report = evaluate_model(&surrogate, &rows)?;
        report.provenance = settings.provenance("evaluate");
        report.runtime = runtime.clone();
        write_report(&dir.join(&name), &report)?;
        reports.push((name, report));
    }
    write_provenance(&dir, settings, "evaluate")?;
    Ok(reports)
}

pub fn run(cli: &Cli) -> Result<()> {
    let settings = Settings::resolve(&cli.overrides)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.overrides.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Manifest(format!("cannot start {} worker threads: {e}", cli.overrides.jobs.unwrap_or(0))))?;
    pool.install(|| dispatch(&settings, &cli.command))
}

fn dispatch(settings: &Settings, command: &Command) -> Result<()> {
    let dir = settings.scenario_dir();
    match command {
        Command::Simulate => {
            let plan = cmd_simulate(settings)?;
            println!("simulated {} runs into {}", plan.len(), dir.display());
        }
        Command::Preprocess => {
            let split = cmd_preprocess(settings)?;
            println!(
                "split {} train / {} eval simulations into {}",
                split.train_ids().len(),
                split.eval_ids().len(),
                preprocess_dir(settings).display()
            );
        }
        Command::Tune => {
            let best = cmd_tune(settings)?;
            println!("best configuration written to {}: {:?}", tune_dir(settings).display(), best.model);
        }
        Command::Train { tuned } => {
            cmd_train(settings, *tuned)?;
            println!("checkpoint written to {}", model_path(settings).display());
        }
        Command::Bench { repeats } => {
            for r in cmd_bench(settings, *repeats)? {
                println!("{} jobs: simulator {:.6}s surrogate {:.6}s ({:.1}x)", r.n_jobs, r.simulator_s, r.surrogate_s, r.ratio);
            }
        }
        Command::Evaluate => print_reports(&cmd_evaluate(settings)?),
        Command::Run => {
            cmd_simulate(settings)?;
            cmd_preprocess(settings)?;
            cmd_train(settings, false)?;
            print_reports(&cmd_evaluate(settings)?);
        }
    }
    Ok(())
}

fn print_reports(reports: &[(String, crate::eval::EvalReport)]) {
    for (name, report) in reports {
        for o in &report.observables {
            let r2 = o.r2.map_or_else(|| "n/a (constant target)".to_owned(), |v| format!("{v:.4}"));
            println!("{name} {}: R2 {r2}", o.name);
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
