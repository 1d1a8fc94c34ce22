//! Running an external PDR engine under wall-clock and parallelism limits,
//! and tallying the results against a baseline.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use log::{debug, warn};
use regex::Regex;
use serde::Deserialize;
use thiserror::Error;

use crate::params::PdrConfig;

pub const DEFAULT_SAFE_PATTERN: &str = "Property proved";
pub const DEFAULT_UNSAFE_PATTERN: &str = "was asserted";
pub const DEFAULT_WALL_LIMIT: f64 = 3600.0;
pub const KILL_GRACE: Duration = Duration::from_secs(2);
const POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("command template must contain {{aig}} and {{flags}}: `{0}`")]
    Template(String),
    #[error("wall limit must be positive, got {0}")]
    WallLimit(f64),
    #[error("max_parallel must be at least 1")]
    Parallelism,
    #[error("bad pattern: {0}")]
    Pattern(#[from] regex::Error),
    #[error("portfolio needs at least one configuration")]
    EmptyPortfolio,
    #[error("line {line}: {msg}")]
    Results { line: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RunOutcome {
    Safe,
    Unsafe,
    Timeout,
    Error,
    /// Stopped because a sibling in an early-cancel portfolio solved first.
    Cancelled,
}

impl RunOutcome {
    pub fn is_solved(self) -> bool {
        matches!(self, RunOutcome::Safe | RunOutcome::Unsafe)
    }
}

impl fmt::Display for RunOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunOutcome::Safe => "SAFE",
            RunOutcome::Unsafe => "UNSAFE",
            RunOutcome::Timeout => "TIMEOUT",
            RunOutcome::Error => "ERROR",
            RunOutcome::Cancelled => "CANCELLED",
        })
    }
}

impl FromStr for RunOutcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "SAFE" => RunOutcome::Safe,
            "UNSAFE" => RunOutcome::Unsafe,
            "TIMEOUT" => RunOutcome::Timeout,
            "ERROR" => RunOutcome::Error,
            "CANCELLED" => RunOutcome::Cancelled,
            other => return Err(format!("unknown outcome `{other}`")),
        })
    }
}

/// How to invoke the engine and judge its output.
#[derive(Debug, Clone)]
pub struct RunSpec {
    /// Shell command with `{aig}` and `{flags}` placeholders, e.g.
    /// `abc -c "read {aig}; pdr {flags}"`.
    pub template: String,
    pub wall_limit: f64,
    pub max_parallel: usize,
    pub safe_pattern: Regex,
    pub unsafe_pattern: Regex,
    /// Engine logs go to `<log_dir>/<circuit>/<bits>.log`.
    pub log_dir: PathBuf,
    /// Stop the rest of a portfolio once one member solves.
    pub early_cancel: bool,
}

impl RunSpec {
    pub fn new(template: &str, wall_limit: f64, max_parallel: usize, log_dir: impl Into<PathBuf>) -> Result<RunSpec, RunnerError> {
        RunSpec::with_patterns(template, wall_limit, max_parallel, log_dir, DEFAULT_SAFE_PATTERN, DEFAULT_UNSAFE_PATTERN)
    }

    pub fn with_patterns(
        template: &str,
        wall_limit: f64,
        max_parallel: usize,
        log_dir: impl Into<PathBuf>,
        safe: &str,
        unsafe_: &str,
    ) -> Result<RunSpec, RunnerError> {
        if !template.contains("{aig}") || !template.contains("{flags}") {
            return Err(RunnerError::Template(template.to_string()));
        }
        if !(wall_limit > 0.0 && wall_limit.is_finite()) {
            return Err(RunnerError::WallLimit(wall_limit));
        }
        if max_parallel == 0 {
            return Err(RunnerError::Parallelism);
        }
        Ok(RunSpec {
            template: template.to_string(),
            wall_limit,
            max_parallel,
            safe_pattern: Regex::new(safe)?,
            unsafe_pattern: Regex::new(unsafe_)?,
            log_dir: log_dir.into(),
            early_cancel: false,
        })
    }

    /// The command line for one run. `{flags}` receives the flag tokens
    /// without the leading `pdr`.
    pub fn command_line(&self, aig_path: &Path, config: &PdrConfig) -> String {
        let flags = config.to_string();
        let flags = flags.strip_prefix("pdr").unwrap_or(&flags).trim_start();
        self.template.replace("{aig}", &aig_path.display().to_string()).replace("{flags}", flags)
    }

    /// Pattern-based verdict; `None` when neither pattern matches, `Error`
    /// when both do.
    pub fn classify_output(&self, output: &str) -> Option<RunOutcome> {
        match (self.safe_pattern.is_match(output), self.unsafe_pattern.is_match(output)) {
            (true, true) => Some(RunOutcome::Error),
            (true, false) => Some(RunOutcome::Safe),
            (false, true) => Some(RunOutcome::Unsafe),
            (false, false) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub circuit: String,
    pub config: PdrConfig,
    pub outcome: RunOutcome,
    pub wall_seconds: f64,
    pub exit_code: Option<i32>,
    pub log_path: PathBuf,
    /// Process group of the engine, when it was started.
    pub process_group: Option<u32>,
    pub diagnostic: Option<String>,
}

/// Circuit id of an AIGER path: its file stem.
pub fn circuit_id(aig_path: &Path) -> String {
    aig_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Runs one configuration to completion, timeout or error. Never fails:
/// problems launching the engine become an `Error` outcome.
pub fn run_one(spec: &RunSpec, aig_path: &Path, config: &PdrConfig) -> RunResult {
    run_cancellable(spec, aig_path, config, &AtomicBool::new(false))
}

fn signal_group(pgid: u32, sig: libc::c_int) {
    // SAFETY: kill(2) with a negative pid only signals; errors such as ESRCH
    // for an already empty group are ignored.
    unsafe {
        libc::kill(-(pgid as libc::pid_t), sig);
    }
}

fn run_cancellable(spec: &RunSpec, aig_path: &Path, config: &PdrConfig, cancel: &AtomicBool) -> RunResult {
    let circuit = circuit_id(aig_path);
    let log_path = spec.log_dir.join(&circuit).join(format!("{}.log", config.to_bit_string().trim_start_matches("grncyfitk=")));
    let mut result = RunResult {
        circuit,
        config: *config,
        outcome: RunOutcome::Error,
        wall_seconds: 0.0,
        exit_code: None,
        log_path: log_path.clone(),
        process_group: None,
        diagnostic: None,
    };
    if let Err(e) = config.validate() {
        result.diagnostic = Some(e.to_string());
        return result;
    }
    let spawn = || -> std::io::Result<(std::process::Child, Instant)> {
        std::fs::create_dir_all(log_path.parent().expect("log path has a parent"))?;
        let log = File::create(&log_path)?;
        let cmd = spec.command_line(aig_path, config);
        debug!("spawn: {cmd}");
        let start = Instant::now();
        let child =
            Command::new("sh").arg("-c").arg(&cmd).stdin(Stdio::null()).stdout(log.try_clone()?).stderr(log).process_group(0).spawn()?;
        Ok((child, start))
    };
    let (mut child, start) = match spawn() {
        Ok(x) => x,
        Err(e) => {
            result.diagnostic = Some(format!("failed to launch engine: {e}"));
            return result;
        }
    };
    let pgid = child.id();
    result.process_group = Some(pgid);

    let limit = Duration::from_secs_f64(spec.wall_limit);
    let mut stopped: Option<RunOutcome> = None;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) => {}
            Err(e) => {
                result.diagnostic = Some(format!("wait failed: {e}"));
                break None;
            }
        }
        let why = if start.elapsed() >= limit {
            Some(RunOutcome::Timeout)
        } else if cancel.load(Ordering::SeqCst) {
            Some(RunOutcome::Cancelled)
        } else {
            None
        };
        if let Some(why) = why {
            stopped = Some(why);
            break terminate(&mut child, pgid);
        }
        std::thread::sleep(POLL);
    };
    let elapsed = start.elapsed().as_secs_f64();
    // Helpers left behind by the engine would skew later timings.
    signal_group(pgid, libc::SIGKILL);

    if let Some(status) = status {
        result.exit_code = status.code().or_else(|| status.signal().map(|s| 128 + s));
    }
    let mut output = String::new();
    if let Ok(mut f) = File::open(&log_path) {
        let mut bytes = Vec::new();
        if f.read_to_end(&mut bytes).is_ok() {
            output = String::from_utf8_lossy(&bytes).into_owned();
        }
    }
    result.wall_seconds = elapsed;
    result.outcome = match (spec.classify_output(&output), stopped) {
        (Some(RunOutcome::Error), _) => {
            result.diagnostic = Some("output matches both the safe and the unsafe pattern".into());
            RunOutcome::Error
        }
        (Some(verdict), _) => verdict,
        (None, Some(RunOutcome::Timeout)) => {
            result.wall_seconds = elapsed.max(spec.wall_limit);
            RunOutcome::Timeout
        }
        (None, Some(other)) => other,
        (None, None) => {
            if result.diagnostic.is_none() {
                result.diagnostic = Some(match result.exit_code {
                    Some(0) => "engine exited without a verdict".to_string(),
                    Some(c) => format!("engine exited with status {c} and no verdict"),
                    None => "engine status unknown".to_string(),
                });
            }
            RunOutcome::Error
        }
    };
    result
}

/// TERM to the whole group, then KILL after the grace period.
fn terminate(child: &mut std::process::Child, pgid: u32) -> Option<std::process::ExitStatus> {
    signal_group(pgid, libc::SIGTERM);
    let deadline = Instant::now() + KILL_GRACE;
    while Instant::now() < deadline {
        if let Ok(Some(status)) = child.try_wait() {
            return Some(status);
        }
        std::thread::sleep(POLL);
    }
    signal_group(pgid, libc::SIGKILL);
    child.wait().ok()
}

#[derive(Debug, Clone)]
pub struct Portfolio {
    pub best: RunResult,
    /// In the order the configurations were given.
    pub all: Vec<RunResult>,
}

/// The fastest solved result; else the first timeout; else the first
/// result (an error when nothing solved or timed out).
pub fn select_best(results: &[RunResult]) -> Option<&RunResult> {
    results
        .iter()
        .filter(|r| r.outcome.is_solved())
        .min_by(|a, b| a.wall_seconds.total_cmp(&b.wall_seconds))
        .or_else(|| results.iter().find(|r| r.outcome == RunOutcome::Timeout))
        .or_else(|| results.iter().find(|r| r.outcome == RunOutcome::Error))
        .or_else(|| results.first())
}

/// Runs the configurations with at most `spec.max_parallel` engines alive at
/// once. With `spec.early_cancel`, the first solve stops the others.
pub fn run_portfolio(spec: &RunSpec, aig_path: &Path, configs: &[PdrConfig]) -> Result<Portfolio, RunnerError> {
    if configs.is_empty() {
        return Err(RunnerError::EmptyPortfolio);
    }
    let next = AtomicUsize::new(0);
    let cancel = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, RunResult)>();
    let workers = spec.max_parallel.min(configs.len());
    let mut slots: Vec<Option<RunResult>> = vec![None; configs.len()];
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, cancel) = (&next, &cancel);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= configs.len() {
                    break;
                }
                let r = if cancel.load(Ordering::SeqCst) {
                    RunResult {
                        circuit: circuit_id(aig_path),
                        config: configs[i],
                        outcome: RunOutcome::Cancelled,
                        wall_seconds: 0.0,
                        exit_code: None,
                        log_path: PathBuf::new(),
                        process_group: None,
                        diagnostic: Some("not started".into()),
                    }
                } else {
                    run_cancellable(spec, aig_path, &configs[i], cancel)
                };
                if tx.send((i, r)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, r) in rx {
            if spec.early_cancel && r.outcome.is_solved() {
                cancel.store(true, Ordering::SeqCst);
            }
            slots[i] = Some(r);
        }
    });
    let all: Vec<RunResult> = slots.into_iter().map(|r| r.expect("every configuration reports")).collect();
    let best = select_best(&all).expect("non-empty").clone();
    Ok(Portfolio { best, all })
}

pub const RESULTS_HEADER: [&str; 6] = ["circuit", "config_flags", "outcome", "wall_seconds", "exit_code", "log_path"];

pub fn write_results(writer: impl Write, results: &[RunResult]) -> Result<(), RunnerError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULTS_HEADER)?;
    for r in results {
        w.write_record([
            r.circuit.clone(),
            r.config.to_string(),
            r.outcome.to_string(),
            format!("{}", r.wall_seconds),
            r.exit_code.map(|c| c.to_string()).unwrap_or_default(),
            r.log_path.display().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct RawResult {
    circuit: String,
    config_flags: String,
    outcome: String,
    wall_seconds: f64,
    exit_code: Option<i32>,
    log_path: String,
}

pub fn read_results(reader: impl Read) -> Result<Vec<RunResult>, RunnerError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (k, row) in rdr.deserialize::<RawResult>().enumerate() {
        let line = k + 2;
        let raw = row.map_err(|e| RunnerError::Results { line, msg: e.to_string() })?;
        let config = PdrConfig::from_flag_string(&raw.config_flags).map_err(|e| RunnerError::Results { line, msg: e.to_string() })?;
        let outcome = raw.outcome.parse().map_err(|msg| RunnerError::Results { line, msg })?;
        out.push(RunResult {
            circuit: raw.circuit,
            config,
            outcome,
            wall_seconds: raw.wall_seconds,
            exit_code: raw.exit_code,
            log_path: raw.log_path.into(),
            process_group: None,
            diagnostic: None,
        });
    }
    Ok(out)
}

/// Outcome counts of one method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MethodSummary {
    pub safe: usize,
    pub unsafe_: usize,
    pub timeout: usize,
    pub error: usize,
}

impl MethodSummary {
    pub fn solved(&self) -> usize {
        self.safe + self.unsafe_
    }

    fn add(&mut self, o: RunOutcome) {
        match o {
            RunOutcome::Safe => self.safe += 1,
            RunOutcome::Unsafe => self.unsafe_ += 1,
            RunOutcome::Timeout => self.timeout += 1,
            RunOutcome::Error | RunOutcome::Cancelled => self.error += 1,
        }
    }
}

/// `+72 (90.0%)`: change in solved count and its percentage of the
/// baseline, `n/a` when the baseline solved nothing.
pub fn format_improvement(baseline_solved: usize, method_solved: usize) -> String {
    let diff = method_solved as i64 - baseline_solved as i64;
    if baseline_solved == 0 {
        format!("{diff:+} (n/a)")
    } else {
        format!("{diff:+} ({:.1}%)", 100.0 * diff as f64 / baseline_solved as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub circuit: String,
    pub baseline_seconds: f64,
    pub method_seconds: f64,
    pub baseline_outcome: RunOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub baseline: MethodSummary,
    pub method: MethodSummary,
    pub improvement: String,
    pub scatter: Vec<ScatterPoint>,
    /// Circuits present in only one of the result sets.
    pub excluded: Vec<String>,
}

impl Evaluation {
    pub fn write_scatter(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "circuit,baseline_seconds,method_seconds,baseline_outcome")?;
        for p in &self.scatter {
            writeln!(out, "{},{},{},{}", p.circuit, p.baseline_seconds, p.method_seconds, p.baseline_outcome)?;
        }
        Ok(())
    }

    pub fn write_summary(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "method,safe,unsafe,timeout,error,solved,improvement")?;
        let b = &self.baseline;
        writeln!(out, "baseline,{},{},{},{},{},", b.safe, b.unsafe_, b.timeout, b.error, b.solved())?;
        let m = &self.method;
        writeln!(out, "method,{},{},{},{},{},{}", m.safe, m.unsafe_, m.timeout, m.error, m.solved(), self.improvement)
    }
}

/// Compares per-circuit results of a method against the baseline. Several
/// results for one circuit (portfolio members) reduce to the best one.
/// Unsolved runs are plotted at the wall limit.
pub fn evaluate(baseline: &[RunResult], method: &[RunResult], wall_limit: f64) -> Evaluation {
    fn by_circuit(results: &[RunResult]) -> BTreeMap<&str, RunResult> {
        let mut groups: BTreeMap<&str, Vec<RunResult>> = BTreeMap::new();
        for r in results {
            groups.entry(r.circuit.as_str()).or_default().push(r.clone());
        }
        groups.into_iter().map(|(k, v)| (k, select_best(&v).expect("non-empty group").clone())).collect()
    }
    let base = by_circuit(baseline);
    let meth = by_circuit(method);
    let mut eval = Evaluation {
        baseline: MethodSummary::default(),
        method: MethodSummary::default(),
        improvement: String::new(),
        scatter: Vec::new(),
        excluded: Vec::new(),
    };
    let plotted = |r: &RunResult| if r.outcome.is_solved() { r.wall_seconds.min(wall_limit) } else { wall_limit };
    for (c, b) in &base {
        match meth.get(c) {
            Some(m) => {
                eval.baseline.add(b.outcome);
                eval.method.add(m.outcome);
                eval.scatter.push(ScatterPoint {
                    circuit: c.to_string(),
                    baseline_seconds: plotted(b),
                    method_seconds: plotted(m),
                    baseline_outcome: b.outcome,
                });
            }
            None => eval.excluded.push(c.to_string()),
        }
    }
    eval.excluded.extend(meth.keys().filter(|c| !base.contains_key(*c)).map(|c| c.to_string()));
    eval.excluded.sort();
    for c in &eval.excluded {
        warn!("circuit `{c}` appears in only one result set; excluded");
    }
    eval.improvement = format_improvement(eval.baseline.solved(), eval.method.solved());
    eval
}
