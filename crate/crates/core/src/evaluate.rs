//! Multi-course evaluation: one perturbed course per seed, one controller
//! session per course, final score from the best per-course scores.

use std::fs::File;
use std::io::BufWriter;
use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::client::{fly, Connection};
use crate::config::Config;
use crate::error::ConfigError;
use crate::pilots;
use crate::race::{top_k_mean, Outcome, RaceRecord, TOP_K};
use crate::runlog::{record_path_for, LogError, RecordFile, RunLogWriter};
use crate::scene::perturb_course;
use crate::service::{accept_client, serve_session, ServiceError};
use crate::sim::Simulator;

pub const ADDR_ENV: &str = "RACEFORGE_ADDR";
pub const SEED_ENV: &str = "RACEFORGE_SEED";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no seeds configured")]
    NoSeeds,
    #[error("unknown pilot `{0}`; choose one of {names}", names = pilots::PILOT_NAMES.join(", "))]
    UnknownPilot(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

/// Who flies each course.
#[derive(Clone, Debug, PartialEq)]
pub enum Controller {
    /// External program; it finds the server through `RACEFORGE_ADDR`.
    Process { program: String, args: Vec<String> },
    /// A bundled pilot run on a thread of this process.
    Builtin(String),
}

impl Controller {
    fn check(&self) -> Result<(), EvalError> {
        match self {
            Controller::Builtin(name) if pilots::by_name(name).is_none() => Err(EvalError::UnknownPilot(name.clone())),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CourseResult {
    pub index: usize,
    pub seed: u64,
    pub outcome: Outcome,
    pub score: f64,
    pub record: RaceRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub per_course_scores: Vec<f64>,
    pub final_score: f64,
    pub courses: Vec<CourseResult>,
}

impl EvaluationResult {
    pub fn from_courses(config_hash: String, courses: Vec<CourseResult>) -> Self {
        let per_course_scores: Vec<f64> = courses.iter().map(|c| c.score).collect();
        Self {
            config_hash,
            seeds: courses.iter().map(|c| c.seed).collect(),
            final_score: top_k_mean(&per_course_scores, TOP_K),
            per_course_scores,
            courses,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serializes");
        s.push('\n');
        s
    }
}

#[derive(Clone, Debug, Default)]
pub struct EvaluateOptions {
    /// Where per-course logs, record files and `evaluation.json` go.
    pub out_dir: Option<PathBuf>,
    pub timestamp: Option<u64>,
}

pub fn course_log_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("course_{index:02}.csv"))
}

/// The course flown for `seed`: the configured course perturbed with that seed.
pub fn course_simulator(config: &Config, seed: u64) -> Result<Simulator, ConfigError> {
    let nominal = config.load_course()?;
    let flown = perturb_course(&nominal, seed, config.course.translation_sigma, config.course.yaw_sigma);
    Simulator::new(config, flown, &nominal, seed)
}

enum Running {
    Child(Child),
    Thread(JoinHandle<Result<(), String>>),
}

impl Running {
    fn alive(&mut self) -> bool {
        match self {
            Running::Child(c) => matches!(c.try_wait(), Ok(None)),
            Running::Thread(h) => !h.is_finished(),
        }
    }

    /// Waits briefly for a clean exit, then kills. Returns a note on failure.
    fn finish(self, grace: Duration) -> Option<String> {
        match self {
            Running::Child(mut c) => {
                let start = Instant::now();
                loop {
                    match c.try_wait() {
                        Ok(Some(status)) if status.success() => return None,
                        Ok(Some(status)) => return Some(format!("controller exited with {status}")),
                        Ok(None) if start.elapsed() < grace => std::thread::sleep(Duration::from_millis(5)),
                        Ok(None) => {
                            let _ = c.kill();
                            let _ = c.wait();
                            return None;
                        }
                        Err(e) => return Some(format!("controller status unknown: {e}")),
                    }
                }
            }
            Running::Thread(h) => match h.join() {
                Ok(Ok(())) => None,
                Ok(Err(e)) => Some(e),
                Err(_) => Some("controller thread panicked".into()),
            },
        }
    }
}

fn launch(controller: &Controller, addr: SocketAddr, seed: u64) -> Result<Running, String> {
    match controller {
        Controller::Process { program, args } => Command::new(program)
            .args(args)
            .env(ADDR_ENV, addr.to_string())
            .env(SEED_ENV, seed.to_string())
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::inherit())
            .spawn()
            .map(Running::Child)
            .map_err(|e| format!("cannot start controller `{program}`: {e}")),
        Controller::Builtin(name) => {
            let mut pilot = pilots::by_name(name).ok_or_else(|| format!("unknown pilot `{name}`"))?;
            let h = std::thread::spawn(move || {
                let mut conn = Connection::connect(addr, Duration::from_secs(5)).map_err(|e| e.to_string())?;
                fly(&mut conn, &mut pilot).map(|_| ()).map_err(|e| e.to_string())
            });
            Ok(Running::Thread(h))
        }
    }
}

/// Runs course `index` with `seed`. Controller failures score zero and are
/// described in the note; only local I/O problems are errors.
pub fn run_course(
    config: &Config,
    controller: &Controller,
    index: usize,
    seed: u64,
    opts: &EvaluateOptions,
) -> Result<CourseResult, EvalError> {
    controller.check()?;
    let mut sim = course_simulator(config, seed)?;
    let host = &config.service.host;
    let listener = TcpListener::bind((host.as_str(), 0)).map_err(ServiceError::Io)?;
    let addr = listener.local_addr().map_err(ServiceError::Io)?;

    let fail = |note: String| CourseResult {
        index,
        seed,
        outcome: Outcome::Disconnected,
        score: 0.0,
        record: RaceRecord::default(),
        note: Some(note),
    };

    let mut running = match launch(controller, addr, seed) {
        Ok(r) => r,
        Err(note) => return Ok(fail(note)),
    };
    let timeout = Duration::from_secs_f64(config.service.accept_timeout);
    let stream = match accept_client(&listener, timeout, &mut || running.alive()) {
        Ok(s) => s,
        Err(ServiceError::AcceptTimeout(_)) => {
            let alive = running.alive();
            let note = running.finish(Duration::ZERO);
            let why = match (alive, note) {
                (true, _) => format!("controller did not connect within {timeout:?}"),
                (false, Some(n)) => format!("{n} before connecting"),
                (false, None) => "controller exited before connecting".to_string(),
            };
            return Ok(fail(why));
        }
        Err(e) => return Err(e.into()),
    };

    let session = match &opts.out_dir {
        Some(dir) => {
            let path = course_log_path(dir, index);
            let file = File::create(&path).map_err(|source| EvalError::Output { path: path.clone(), source })?;
            let mut log = RunLogWriter::new(BufWriter::new(file), &sim.log_header(opts.timestamp))?;
            let s = serve_session(stream, &mut sim, Some(&mut log), None)?;
            log.finish()?;
            s
        }
        None => serve_session::<std::io::Sink>(stream, &mut sim, None, None)?,
    };
    let exit_note = running.finish(Duration::from_secs(2));

    let note = match (session.outcome, session.note, exit_note) {
        (Outcome::Disconnected | Outcome::Error, n, Some(e)) => Some(n.map_or(e.clone(), |n| format!("{n}; {e}"))),
        (_, n, _) => n,
    };
    let result = CourseResult {
        index,
        seed,
        outcome: session.outcome,
        score: session.record.score,
        record: session.record,
        note,
    };
    if let Some(dir) = &opts.out_dir {
        let path = record_path_for(&course_log_path(dir, index));
        let rec = RecordFile { seed, outcome: result.outcome, record: result.record };
        let text = serde_json::to_string_pretty(&rec).expect("record serializes") + "\n";
        std::fs::write(&path, text).map_err(|source| EvalError::Output { path, source })?;
    }
    Ok(result)
}

/// Flies every configured seed in order and writes `evaluation.json` when
/// an output directory is given.
pub fn evaluate(config: &Config, controller: &Controller, opts: &EvaluateOptions) -> Result<EvaluationResult, EvalError> {
    controller.check()?;
    let seeds = &config.race.seeds;
    if seeds.is_empty() {
        return Err(EvalError::NoSeeds);
    }
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|source| EvalError::Output { path: dir.clone(), source })?;
    }
    let mut courses = Vec::with_capacity(seeds.len());
    for (i, &seed) in seeds.iter().enumerate() {
        let r = run_course(config, controller, i, seed, opts)?;
        log::info!("course {i:2} seed {seed}: {:?} score {:.3}", r.outcome, r.score);
        courses.push(r);
    }
    let result = EvaluationResult::from_courses(config.hash(), courses);
    if let Some(dir) = &opts.out_dir {
        let path = dir.join("evaluation.json");
        std::fs::write(&path, result.to_json()).map_err(|source| EvalError::Output { path, source })?;
    }
    Ok(result)
}
