//! Driver for data generation, federated training and evaluation runs.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fltp_core::format::{load_dataset, load_params, save_dataset, save_params, write_atomic};
use fltp_core::scenario::flatten;
use fltp_core::{
    evaluate, init_params, partition_clients, run_alfltp, run_fltp, run_local, validation_split,
    ClientDataset, EvalReport, ParamVector, RoundLog,
};
use thiserror::Error;

pub use config::{Mode, RunConfig};

pub const METRICS_CSV_HEADER: &str = "round,nll,min_ade,min_fde,mr";
pub const PARAMS_FILE: &str = "params.ftpw";
pub const METRICS_FILE: &str = "metrics.csv";
pub const ROUNDS_FILE: &str = "rounds.csv";
pub const EVAL_FILE: &str = "eval.csv";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] fltp_core::Error),
}

impl CliError {
    /// 2 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

/// One metrics CSV line, without the trailing newline.
pub fn metrics_row(round: usize, r: &EvalReport) -> String {
    format!("{round},{},{},{},{}", r.nll, r.min_ade, r.min_fde, r.mr)
}

pub fn metrics_csv(log: &[RoundLog]) -> String {
    let mut out = format!("{METRICS_CSV_HEADER}\n");
    for entry in log {
        if let Some(m) = &entry.metrics {
            writeln!(out, "{}", metrics_row(entry.round, m)).unwrap();
        }
    }
    out
}

pub fn rounds_csv(log: &[RoundLog]) -> String {
    let mut out = format!("{}\n", RoundLog::CSV_HEADER);
    for entry in log {
        writeln!(out, "{}", entry.csv_row()).unwrap();
    }
    out
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSummary {
    pub clients: usize,
    pub scenarios_per_client: usize,
    pub validation_scenarios: usize,
}

/// Generates the training partition and the held-out validation split.
pub fn gen_data(cfg: &RunConfig) -> Result<GenSummary, CliError> {
    let train = partition_clients(&cfg.generator)?;
    let val = validation_split(&cfg.generator, cfg.validation_per_regime)?;
    for p in [&cfg.dataset, &cfg.validation] {
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
    }
    save_dataset(&train, &cfg.dataset)?;
    save_dataset(&val, &cfg.validation)?;
    Ok(GenSummary {
        clients: train.len(),
        scenarios_per_client: cfg.generator.scenarios_per_client,
        validation_scenarios: val.iter().map(ClientDataset::len).sum(),
    })
}

fn load_checked(path: &Path, cfg: &RunConfig) -> Result<Vec<ClientDataset>, CliError> {
    if !path.exists() {
        return Err(CliError::Config(format!("dataset {} does not exist", path.display())));
    }
    let data = load_dataset(path)?;
    let s = &data[0].scenarios[0].agents[0];
    if s.observed.len() != cfg.dims.t_obs || s.future.len() != cfg.dims.t_pre {
        return Err(CliError::Config(format!(
            "{} holds tracks of {}+{} steps, config expects {}+{}",
            path.display(),
            s.observed.len(),
            s.future.len(),
            cfg.dims.t_obs,
            cfg.dims.t_pre
        )));
    }
    Ok(data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ParamVector,
    pub log: Vec<RoundLog>,
    pub params_path: PathBuf,
    pub metrics_path: PathBuf,
    pub rounds_path: PathBuf,
}

/// Runs the configured algorithm and writes parameters, metrics and round log.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome, CliError> {
    let data = load_checked(&cfg.dataset, cfg)?;
    let validation = flatten(&load_checked(&cfg.validation, cfg)?);
    let w0 = init_params(cfg.fl.seed, cfg.dims)?;

    let (params, log) = with_pool(cfg.workers, || -> Result<_, CliError> {
        let val = Some(validation.as_slice());
        Ok(match cfg.mode {
            Mode::Local => run_local(&data, cfg.local_client, &cfg.fl, w0, val)?,
            Mode::Fltp => run_fltp(&data, &cfg.fl, w0, val)?,
            Mode::AlfltpNll | Mode::AlfltpAu => run_alfltp(&data, &cfg.al_config()?, w0, val)?,
        })
    })??;

    fs::create_dir_all(&cfg.output_dir)?;
    let params_path = cfg.output_dir.join(PARAMS_FILE);
    let metrics_path = cfg.output_dir.join(METRICS_FILE);
    let rounds_path = cfg.output_dir.join(ROUNDS_FILE);
    save_params(&params, &params_path)?;
    write_atomic(&metrics_path, metrics_csv(&log).as_bytes())?;
    write_atomic(&rounds_path, rounds_csv(&log).as_bytes())?;
    Ok(TrainOutcome {
        params,
        log,
        params_path,
        metrics_path,
        rounds_path,
    })
}

/// Evaluates stored parameters on every scenario of a dataset file and writes
/// the report as a one-row metrics CSV.
pub fn eval(params_path: &Path, data_path: &Path, cfg: &RunConfig) -> Result<(EvalReport, PathBuf), CliError> {
    let params = load_params(params_path)?;
    if params.dims != cfg.dims {
        return Err(CliError::Config(format!(
            "parameter file dimensions {:?} differ from config {:?}",
            params.dims, cfg.dims
        )));
    }
    let scenarios = flatten(&load_checked(data_path, cfg)?);
    let report = with_pool(cfg.workers, || evaluate(&params, &scenarios))??;
    fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join(EVAL_FILE);
    let csv = format!("{METRICS_CSV_HEADER}\n{}\n", metrics_row(cfg.fl.rounds, &report));
    write_atomic(&path, csv.as_bytes())?;
    Ok((report, path))
}
