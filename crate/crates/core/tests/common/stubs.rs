//! Stub engines for the runner: shell scripts that sleep, print a verdict
//! or misbehave, so that classification, timeouts and scheduling can be
//! checked without a model checker.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use pdrtune::params::PdrConfig;
use pdrtune::runner::{self, RunOutcome, RunSpec};
use tempfile::TempDir;

pub struct Stub {
    pub dir: TempDir,
    pub script: PathBuf,
    pub aig: PathBuf,
}

impl Stub {
    /// Writes `body` as a script; `$1` is the circuit path, the rest are
    /// the flag tokens.
    pub fn new(body: &str) -> Stub {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("engine.sh");
        std::fs::write(&script, format!("#!/bin/sh\n{body}\n")).unwrap();
        let aig = dir.path().join("circuit.aag");
        std::fs::write(&aig, "aag 0 0 0 1 0\n0\n").unwrap();
        Stub { dir, script, aig }
    }

    pub fn spec(&self, wall_limit: f64, max_parallel: usize) -> RunSpec {
        let template = format!("sh {} {{aig}} {{flags}}", self.script.display());
        RunSpec::new(&template, wall_limit, max_parallel, self.dir.path().join("logs")).unwrap()
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn cfg(flags: &str) -> PdrConfig {
    PdrConfig::from_flag_string(flags).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Members of process group `pgid` that are still running (zombies are
/// dead and only await reaping).
pub fn live_group_members(pgid: u32) -> Vec<u32> {
    let mut alive = Vec::new();
    let Ok(entries) = std::fs::read_dir("/proc") else { return alive };
    for e in entries.flatten() {
        let Ok(pid) = e.file_name().to_string_lossy().parse::<u32>() else { continue };
        let Ok(stat) = std::fs::read_to_string(e.path().join("stat")) else { continue };
        let Some(rest) = stat.rfind(')').map(|i| &stat[i + 2..]) else { continue };
        let fields: Vec<&str> = rest.split_whitespace().collect();
        if fields.len() > 2 && fields[2].parse::<u32>().ok() == Some(pgid) && fields[0] != "Z" {
            alive.push(pid);
        }
    }
    alive
}

fn wait_group_dead(pgid: u32, within: Duration) -> bool {
    let deadline = Instant::now() + within;
    loop {
        if live_group_members(pgid).is_empty() {
            return true;
        }
        if Instant::now() > deadline {
            return false;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
}

pub fn safe_after_delay() -> Result<(), String> {
    let stub = Stub::new("sleep 0.1\necho 'Property proved.'");
    let r = runner::run_one(&stub.spec(10.0, 1), &stub.aig, &PdrConfig::default());
    ensure(r.outcome == RunOutcome::Safe, || format!("expected SAFE, got {} ({:?})", r.outcome, r.diagnostic))?;
    ensure((0.1..0.6).contains(&r.wall_seconds), || format!("wall_seconds {}", r.wall_seconds))?;
    ensure(r.log_path.exists(), || "log file missing".into())
}

pub fn unsafe_verdict() -> Result<(), String> {
    let stub = Stub::new("echo 'Output 0 of miter was asserted in frame 3.'");
    let r = runner::run_one(&stub.spec(10.0, 1), &stub.aig, &PdrConfig::default());
    ensure(r.outcome == RunOutcome::Unsafe, || format!("expected UNSAFE, got {}", r.outcome))
}

/// Sleeps past a one-second limit while holding two helper processes.
pub fn timeout_kills_tree() -> Result<(), String> {
    let stub = Stub::new("sleep 30 &\nsleep 30 &\nwait");
    let t0 = Instant::now();
    let r = runner::run_one(&stub.spec(1.0, 1), &stub.aig, &PdrConfig::default());
    let took = t0.elapsed().as_secs_f64();
    ensure(r.outcome == RunOutcome::Timeout, || format!("expected TIMEOUT, got {}", r.outcome))?;
    ensure(r.wall_seconds >= 1.0, || format!("wall_seconds {}", r.wall_seconds))?;
    ensure(took < 1.0 + runner::KILL_GRACE.as_secs_f64(), || format!("returned after {took:.2}s"))?;
    let pgid = r.process_group.ok_or("no process group recorded")?;
    ensure(wait_group_dead(pgid, runner::KILL_GRACE), || format!("group {pgid} still has {:?}", live_group_members(pgid)))
}

/// An engine that ignores TERM is killed once the grace period expires.
pub fn timeout_escalates_to_kill() -> Result<(), String> {
    let stub = Stub::new("sleep 30 &\nwait");
    let template = format!("trap '' TERM; sh {} {{aig}} {{flags}}", stub.script.display());
    let spec = RunSpec::new(&template, 0.5, 1, stub.path("logs")).unwrap();
    let t0 = Instant::now();
    let r = runner::run_one(&spec, &stub.aig, &PdrConfig::default());
    let took = t0.elapsed().as_secs_f64();
    let grace = runner::KILL_GRACE.as_secs_f64();
    ensure(r.outcome == RunOutcome::Timeout, || format!("expected TIMEOUT, got {}", r.outcome))?;
    ensure(took >= 0.5 + grace - 0.05 && took < 0.5 + grace + 1.0, || format!("returned after {took:.2}s"))?;
    let pgid = r.process_group.ok_or("no process group recorded")?;
    ensure(wait_group_dead(pgid, Duration::from_millis(500)), || format!("group {pgid} survived SIGKILL"))
}

pub fn nonzero_exit_is_error() -> Result<(), String> {
    let stub = Stub::new("echo 'segfault in solver' >&2\nexit 3");
    let r = runner::run_one(&stub.spec(10.0, 1), &stub.aig, &PdrConfig::default());
    ensure(r.outcome == RunOutcome::Error, || format!("expected ERROR, got {}", r.outcome))?;
    ensure(r.exit_code == Some(3), || format!("exit code {:?}", r.exit_code))
}

pub fn both_patterns_is_error() -> Result<(), String> {
    let stub = Stub::new("echo 'Property proved'\necho 'Output 0 was asserted'");
    let r = runner::run_one(&stub.spec(10.0, 1), &stub.aig, &PdrConfig::default());
    ensure(r.outcome == RunOutcome::Error, || format!("expected ERROR, got {}", r.outcome))
}

pub fn missing_engine_is_error() -> Result<(), String> {
    let stub = Stub::new("");
    let spec = RunSpec::new("/nonexistent/engine {aig} {flags}", 5.0, 1, stub.dir.path().join("logs")).unwrap();
    let r = runner::run_one(&spec, &stub.aig, &PdrConfig::default());
    ensure(r.outcome == RunOutcome::Error && r.diagnostic.is_some(), || format!("got {} {:?}", r.outcome, r.diagnostic))
}

/// Flags reach the engine without the leading `pdr` token.
pub fn flags_are_substituted() -> Result<(), String> {
    let stub = Stub::new("shift\necho \"flags:$*\"\necho 'Property proved'");
    let r = runner::run_one(&stub.spec(10.0, 1), &stub.aig, &cfg("pdr -y -f"));
    let log = std::fs::read_to_string(&r.log_path).map_err(|e| e.to_string())?;
    ensure(log.contains("flags:-y -f"), || format!("log was {log:?}"))
}

fn max_overlap(events: &Path) -> Result<usize, String> {
    let text = std::fs::read_to_string(events).map_err(|e| e.to_string())?;
    let mut ev: Vec<(u128, i32)> = Vec::new();
    for line in text.lines() {
        let (kind, t) = line.split_once(' ').ok_or(format!("bad event line {line:?}"))?;
        let t: u128 = t.trim().parse().map_err(|_| format!("bad timestamp {t:?}"))?;
        ev.push((t, if kind == "start" { 1 } else { -1 }));
    }
    // Ends sort before starts at equal timestamps.
    ev.sort();
    let (mut live, mut peak) = (0i32, 0i32);
    for (_, d) in ev {
        live += d;
        peak = peak.max(live);
    }
    Ok(peak as usize)
}

/// Twelve configurations through a pool of three: the instrumented stubs
/// never overlap more than three at a time, and they do reach three.
pub fn max_parallel_respected() -> Result<(), String> {
    let stub = Stub::new("");
    let events = stub.path("events.txt");
    let body = format!(
        "echo \"start $(date +%s%N)\" >> {e}\nsleep 0.2\necho \"end $(date +%s%N)\" >> {e}\necho 'Property proved'",
        e = events.display()
    );
    std::fs::write(&stub.script, format!("#!/bin/sh\n{body}\n")).unwrap();
    let configs: Vec<PdrConfig> = pdrtune::params::ConfigSpace::enumerate_valid().configs()[..12].to_vec();
    let p = runner::run_portfolio(&stub.spec(10.0, 3), &stub.aig, &configs).map_err(|e| e.to_string())?;
    ensure(p.all.iter().all(|r| r.outcome == RunOutcome::Safe), || "a member did not solve".into())?;
    let peak = max_overlap(&events)?;
    ensure(peak <= 3, || format!("{peak} engines alive at once"))?;
    ensure(peak == 3, || format!("pool never filled: peak {peak}"))
}

const PORTFOLIO_BODY: &str = "shift
case \"$*\" in
  -g) sleep 0.5; echo 'Property proved' ;;
  -r) sleep 0.2; echo 'Property proved' ;;
  *) sleep 30 ;;
esac";

/// Members finishing at 0.5 s, 0.2 s and past the limit: the 0.2 s one wins.
pub fn portfolio_picks_min() -> Result<(), String> {
    let stub = Stub::new(PORTFOLIO_BODY);
    let configs = [cfg("pdr -g"), cfg("pdr -r"), cfg("pdr")];
    let p = runner::run_portfolio(&stub.spec(1.0, 3), &stub.aig, &configs).map_err(|e| e.to_string())?;
    let outcomes: Vec<RunOutcome> = p.all.iter().map(|r| r.outcome).collect();
    ensure(outcomes == [RunOutcome::Safe, RunOutcome::Safe, RunOutcome::Timeout], || format!("outcomes {outcomes:?}"))?;
    ensure(p.best.config == configs[1], || format!("best was {}", p.best.config))?;
    let min = p.all.iter().filter(|r| r.outcome.is_solved()).map(|r| r.wall_seconds).fold(f64::INFINITY, f64::min);
    ensure(p.best.wall_seconds == min, || "best time differs from the member minimum".into())?;
    ensure((0.2..0.5).contains(&p.best.wall_seconds), || format!("best took {}", p.best.wall_seconds))
}

pub fn single_member_portfolio() -> Result<(), String> {
    let stub = Stub::new("echo 'Property proved'");
    let p = runner::run_portfolio(&stub.spec(5.0, 4), &stub.aig, &[cfg("pdr -n")]).map_err(|e| e.to_string())?;
    ensure(p.all.len() == 1 && p.best == p.all[0], || "k=1 best differs from its only result".into())
}

/// With early cancel the slow members are stopped right after the first
/// solve, so the portfolio returns well before their 30 s sleep.
pub fn early_cancel_bounds_time() -> Result<(), String> {
    let stub = Stub::new(PORTFOLIO_BODY);
    let mut spec = stub.spec(60.0, 3);
    spec.early_cancel = true;
    let configs = [cfg("pdr"), cfg("pdr -r"), cfg("pdr -t")];
    let t0 = Instant::now();
    let p = runner::run_portfolio(&spec, &stub.aig, &configs).map_err(|e| e.to_string())?;
    let took = t0.elapsed().as_secs_f64();
    ensure(p.best.config == configs[1] && p.best.outcome == RunOutcome::Safe, || format!("best {} {}", p.best.config, p.best.outcome))?;
    let bound = p.best.wall_seconds + runner::KILL_GRACE.as_secs_f64();
    ensure(took <= bound, || format!("portfolio took {took:.2}s, bound {bound:.2}s"))?;
    ensure(p.all.iter().filter(|r| r.outcome == RunOutcome::Cancelled).count() == 2, || "siblings were not cancelled".into())
}

/// All checks, in a fixed order.
pub type StubCheck = fn() -> Result<(), String>;

pub const ALL: [(&str, StubCheck); 13] = [
    ("safe after delay", safe_after_delay),
    ("unsafe verdict", unsafe_verdict),
    ("timeout kills tree", timeout_kills_tree),
    ("timeout escalates to kill", timeout_escalates_to_kill),
    ("nonzero exit", nonzero_exit_is_error),
    ("both patterns", both_patterns_is_error),
    ("missing engine", missing_engine_is_error),
    ("flag substitution", flags_are_substituted),
    ("max parallel", max_parallel_respected),
    ("portfolio min", portfolio_picks_min),
    ("single member", single_member_portfolio),
    ("early cancel", early_cancel_bounds_time),
    ("improvement arithmetic", improvement_arithmetic),
];

fn result(circuit: usize, outcome: RunOutcome, secs: f64) -> runner::RunResult {
    runner::RunResult {
        circuit: format!("c{circuit:03}"),
        config: PdrConfig::default(),
        outcome,
        wall_seconds: secs,
        exit_code: Some(0),
        log_path: PathBuf::new(),
        process_group: None,
        diagnostic: None,
    }
}

/// 192 circuits; the baseline solves 80 and the method 152.
pub fn improvement_arithmetic() -> Result<(), String> {
    let base: Vec<_> =
        (0..192).map(|i| if i < 80 { result(i, RunOutcome::Safe, 10.0) } else { result(i, RunOutcome::Timeout, 3600.0) }).collect();
    let meth: Vec<_> = (0..192)
        .map(|i| match i {
            _ if i < 100 => result(i, RunOutcome::Safe, 5.0),
            _ if i < 152 => result(i, RunOutcome::Unsafe, 5.0),
            _ => result(i, RunOutcome::Timeout, 3600.0),
        })
        .collect();
    let e = runner::evaluate(&base, &meth, 3600.0);
    ensure(e.baseline.solved() == 80 && e.method.solved() == 152, || format!("{:?} {:?}", e.baseline, e.method))?;
    ensure(e.improvement == "+72 (90.0%)", || format!("improvement {:?}", e.improvement))?;
    let same = runner::evaluate(&base, &base, 3600.0);
    ensure(same.improvement == "+0 (0.0%)", || format!("identical sets gave {:?}", same.improvement))
}
