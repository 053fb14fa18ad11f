//! Command-line front end: `run`, `evaluate`, `replay` and the hidden
//! `controller` entry point used when the evaluator spawns this binary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::client::{fly, Connection};
use crate::config::Config;
use crate::evaluate::{evaluate, Controller, EvalError, EvaluateOptions, ADDR_ENV};
use crate::pilots;
use crate::race::RaceRecord;
use crate::runlog::{record_path_for, RecordFile, RunLog, RunLogWriter};
use crate::service::run_session;
use crate::sim::Simulator;

pub const LOG_ENV: &str = "RACEFORGE_LOG";

/// Exit status for a config or usage problem.
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_FAILURE: u8 = 1;

#[derive(Debug, Parser)]
#[command(name = "raceforge", version, about = "Headless multicopter racing simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Serve one episode to a client and write its log and record.
    Run(RunArgs),
    /// Fly every configured seed and report the aggregate score.
    Evaluate(EvaluateArgs),
    /// Re-score a run log and compare with its record file.
    Replay(ReplayArgs),
    /// Fly a bundled pilot against a running server.
    #[command(hide = true)]
    Controller(ControllerArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON config file; the built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted-path override such as `race.time_limit=30`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Step as fast as the CPU allows instead of tracking wall time.
    #[arg(long)]
    pub as_fast_as_possible: bool,
    /// Leave the timestamp line out of log headers.
    #[arg(long)]
    pub no_timestamp: bool,
    #[arg(long, default_value = "raceforge-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Episode seed; the config `seed` when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also fly a bundled pilot against the session.
    #[arg(long, value_name = "PILOT")]
    pub controller: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Bundled pilot to evaluate.
    #[arg(long, value_name = "PILOT", conflicts_with = "command")]
    pub controller: Option<String>,
    /// Controller program and arguments, after `--`.
    #[arg(last = true, value_name = "COMMAND")]
    pub command: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub log: PathBuf,
    /// Record to compare against; defaults to the file next to the log.
    #[arg(long)]
    pub record: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ControllerArgs {
    #[arg(value_name = "PILOT")]
    pub pilot: String,
    /// Server address; `RACEFORGE_ADDR` or the default port when omitted.
    #[arg(long)]
    pub addr: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] crate::error::ConfigError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_FAILURE,
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Config(c) => CliError::Config(c),
            EvalError::UnknownPilot(_) | EvalError::NoSeeds => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn load_config(args: &CommonArgs) -> Result<Config, CliError> {
    let mut cfg = match &args.config {
        Some(p) => Config::load(p, &args.overrides)?,
        None => Config::builtin_with(&args.overrides)?,
    };
    if args.as_fast_as_possible {
        cfg.service.as_fast_as_possible = true;
    }
    // surface a missing course file before any socket is opened
    cfg.load_course()?;
    Ok(cfg)
}

fn timestamp(args: &CommonArgs) -> Option<u64> {
    if args.no_timestamp {
        return None;
    }
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).ok().map(|d| d.as_secs())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_record(log_path: &Path, rec: &RecordFile) -> Result<PathBuf, CliError> {
    let path = record_path_for(log_path);
    let text = serde_json::to_string_pretty(rec).expect("record serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.common)?;
    if let Some(p) = &args.controller {
        if pilots::by_name(p).is_none() {
            return Err(CliError::Usage(format!("unknown pilot `{p}`; choose one of {}", pilots::PILOT_NAMES.join(", "))));
        }
    }
    let seed = args.seed.unwrap_or(cfg.seed);
    let mut sim = Simulator::from_config(&cfg, seed)?;
    let listener = TcpListener::bind((cfg.service.host.as_str(), cfg.service.port))
        .map_err(|e| runtime(format!("cannot listen on {}:{}: {e}", cfg.service.host, cfg.service.port)))?;
    let addr = listener.local_addr().map_err(runtime)?;
    log::info!("listening on {addr}");

    let out_dir = &args.common.out_dir;
    create_dir(out_dir)?;
    let log_path = out_dir.join(format!("run_{seed}.csv"));
    let file = File::create(&log_path).map_err(|e| runtime(format!("cannot write {}: {e}", log_path.display())))?;
    let mut log = RunLogWriter::new(BufWriter::new(file), &sim.log_header(timestamp(&args.common))).map_err(runtime)?;

    let pilot_thread = args.controller.clone().map(|name| {
        std::thread::spawn(move || -> Result<(), String> {
            let mut pilot = pilots::by_name(&name).expect("checked above");
            let mut conn = Connection::connect(addr, Duration::from_secs(5)).map_err(|e| e.to_string())?;
            fly(&mut conn, &mut pilot).map(|_| ()).map_err(|e| e.to_string())
        })
    });

    let session = run_session(&listener, &mut sim, Some(&mut log), None).map_err(runtime)?;
    log.finish().map_err(runtime)?;
    if let Some(h) = pilot_thread {
        match h.join() {
            Ok(Ok(())) => {}
            Ok(Err(e)) => log::warn!("pilot: {e}"),
            Err(_) => log::warn!("pilot thread panicked"),
        }
    }
    let rec = RecordFile { seed, outcome: session.outcome, record: session.record };
    let rec_path = write_record(&log_path, &rec)?;
    if let Some(n) = &session.note {
        log::warn!("{n}");
    }
    println!("{}", serde_json::to_string(&rec).expect("record serializes"));
    log::info!("wrote {} and {}", log_path.display(), rec_path.display());
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.common)?;
    let controller = match (&args.controller, args.command.split_first()) {
        (Some(name), _) => Controller::Builtin(name.clone()),
        (None, Some((program, rest))) => Controller::Process { program: program.clone(), args: rest.to_vec() },
        (None, None) => return Err(CliError::Usage("give --controller PILOT or a controller command after `--`".into())),
    };
    let opts = EvaluateOptions { out_dir: Some(args.common.out_dir.clone()), timestamp: timestamp(&args.common) };
    let result = evaluate(&cfg, &controller, &opts)?;
    print!("{}", result.to_json());
    Ok(())
}

/// Outcome of comparing a replay with the stored record.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayReport {
    pub replayed: RaceRecord,
    pub stored: RaceRecord,
}

impl ReplayReport {
    pub fn matches(&self) -> bool {
        self.replayed == self.stored
    }
}

pub fn replay_log(log_path: &Path, record_path: Option<&Path>) -> Result<ReplayReport, CliError> {
    let log = RunLog::read(log_path).map_err(|e| CliError::Usage(format!("{}: {e}", log_path.display())))?;
    let (replayed, _) = log.replay().map_err(|e| CliError::Usage(format!("{}: {e}", log_path.display())))?;
    let rec_path = record_path.map(Path::to_path_buf).unwrap_or_else(|| record_path_for(log_path));
    let text = std::fs::read_to_string(&rec_path)
        .map_err(|e| CliError::Usage(format!("cannot read record {}: {e}", rec_path.display())))?;
    let stored: RecordFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", rec_path.display())))?;
    Ok(ReplayReport { replayed, stored: stored.record })
}

pub fn cmd_replay(args: &ReplayArgs) -> Result<(), CliError> {
    let report = replay_log(&args.log, args.record.as_deref())?;
    println!("{}", serde_json::to_string(&report.replayed).expect("record serializes"));
    if report.matches() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "score mismatch: log replays to {:?}, record says {:?}",
            report.replayed, report.stored
        )))
    }
}

pub fn cmd_controller(args: &ControllerArgs) -> Result<(), CliError> {
    let mut pilot = pilots::by_name(&args.pilot).ok_or_else(|| {
        CliError::Usage(format!("unknown pilot `{}`; choose one of {}", args.pilot, pilots::PILOT_NAMES.join(", ")))
    })?;
    let addr = args
        .addr
        .clone()
        .or_else(|| std::env::var(ADDR_ENV).ok())
        .unwrap_or_else(|| format!("127.0.0.1:{}", crate::config::DEFAULT_PORT));
    let mut conn = Connection::connect(addr.as_str(), Duration::from_secs(5)).map_err(runtime)?;
    let summary = fly(&mut conn, &mut pilot).map_err(runtime)?;
    log::info!("{:?} score {}", summary.outcome, summary.record.score);
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Evaluate(a) => cmd_evaluate(a),
        Cmd::Replay(a) => cmd_replay(a),
        Cmd::Controller(a) => cmd_controller(a),
    }
}

/// Parses `std::env::args`, runs the command and maps errors to exit codes.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
