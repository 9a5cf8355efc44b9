//! Run candidate Python code against assertion tests in a throwaway
//! interpreter process.
//!
//! # Runner protocol
//!
//! The host writes one JSON object to the runner's stdin:
//!
//! ```json
//! {"source": "...", "tests": ["assert f(1) == 1"], "interface_name": "f", "instrument": false}
//! ```
//!
//! and reads exactly one JSON line back from stdout:
//!
//! ```json
//! {"ok": true}
//! {"error": "AssertionError", "test": 2, "message": "..."}
//! ```
//!
//! `test` is `-1` when the failure happened while loading the candidate.
//! With `instrument` set, the response also carries `lines`, the sorted
//! candidate line numbers that executed. The runner exits 0 whenever it
//! produced a record; `{"error": "ProtocolError"}` with a nonzero exit means
//! the job itself was unreadable. Before each test the runner writes
//! `__runner_test__ <index>` to stderr so a crash can be attributed.

use std::io::{BufRead, BufReader, Read, Write};
use std::os::unix::process::CommandExt;
use std::path::PathBuf;
use std::process::{Command, ExitStatus, Stdio};
use std::sync::{Condvar, Mutex, OnceLock};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::parser;

pub const RUNNER_SOURCE: &str = include_str!("../assets/runner.py");
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);
pub const DEFAULT_MEMORY_CAP: u64 = 512 * 1024 * 1024;
pub const DEFAULT_SLACK: Duration = Duration::from_secs(1);
const FILE_SIZE_CAP: u64 = 64 * 1024 * 1024;
const STDOUT_CAP: u64 = 16 * 1024 * 1024;
const EXCERPT_CHARS: usize = 2000;
const TEST_MARKER: &str = "__runner_test__ ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxJob {
    pub source: String,
    pub tests: Vec<String>,
    pub interface_name: String,
    pub timeout: Duration,
    pub memory_cap: u64,
    /// Record which candidate lines executed.
    pub instrument: bool,
}

impl SandboxJob {
    pub fn new(source: impl Into<String>, tests: Vec<String>, interface_name: impl Into<String>) -> Self {
        SandboxJob {
            source: source.into(),
            tests,
            interface_name: interface_name.into(),
            timeout: DEFAULT_TIMEOUT,
            memory_cap: DEFAULT_MEMORY_CAP,
            instrument: false,
        }
    }

    pub fn with_limits(mut self, timeout: Duration, memory_cap: u64) -> Self {
        self.timeout = timeout;
        self.memory_cap = memory_cap;
        self
    }

    pub fn instrumented(mut self) -> Self {
        self.instrument = true;
        self
    }

    fn validate(&self) -> Result<(), SandboxError> {
        if self.timeout.is_zero() {
            return Err(SandboxError::InvalidJob("timeout must be positive".into()));
        }
        if self.tests.is_empty() {
            return Err(SandboxError::InvalidJob("no tests".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Pass,
    AssertionFail,
    RuntimeError,
    Timeout,
    SyntaxError,
}

impl VerdictStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictStatus::Pass => "pass",
            VerdictStatus::AssertionFail => "assertion_fail",
            VerdictStatus::RuntimeError => "runtime_error",
            VerdictStatus::Timeout => "timeout",
            VerdictStatus::SyntaxError => "syntax_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxVerdict {
    pub status: VerdictStatus,
    pub failed_index: Option<usize>,
    /// Exception class reported by the runner, or the terminating signal.
    pub error_class: Option<String>,
    pub stderr_excerpt: String,
    #[serde(skip)]
    pub wall_time: Duration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executed_lines: Option<Vec<u32>>,
}

impl SandboxVerdict {
    pub fn passed(&self) -> bool {
        self.status == VerdictStatus::Pass
    }

    fn bare(status: VerdictStatus) -> Self {
        SandboxVerdict {
            status,
            failed_index: None,
            error_class: None,
            stderr_excerpt: String::new(),
            wall_time: Duration::ZERO,
            executed_lines: None,
        }
    }

    /// Verdict for source that does not parse.
    pub fn syntax_error(message: impl Into<String>) -> Self {
        SandboxVerdict {
            error_class: Some("SyntaxError".into()),
            stderr_excerpt: message.into(),
            ..Self::bare(VerdictStatus::SyntaxError)
        }
    }

    /// One-line summary used in repair and optimization prompts.
    pub fn describe(&self) -> String {
        let mut s = self.status.as_str().to_string();
        if let Some(i) = self.failed_index {
            s.push_str(&format!(" at test {i}"));
        }
        if let Some(class) = &self.error_class {
            s.push_str(&format!(" ({class})"));
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("could not start the interpreter: {0}")]
    Spawn(#[from] std::io::Error),
    #[error("runner protocol violation: {0}")]
    Protocol(String),
    #[error("invalid job: {0}")]
    InvalidJob(String),
}

#[derive(Debug, Deserialize)]
struct RunnerResponse {
    #[serde(default)]
    ok: Option<bool>,
    #[serde(default)]
    error: Option<String>,
    #[serde(default)]
    test: Option<i64>,
    #[serde(default)]
    message: Option<String>,
    #[serde(default)]
    lines: Option<Vec<u32>>,
}

/// Map one runner response record to a verdict. `wall_time` is left at zero.
pub fn classify_outcome(raw: &Value) -> Result<SandboxVerdict, SandboxError> {
    let resp: RunnerResponse =
        serde_json::from_value(raw.clone()).map_err(|e| SandboxError::Protocol(format!("malformed response: {e}")))?;
    let mut verdict = match (resp.ok, resp.error.as_deref()) {
        (Some(true), None) => SandboxVerdict::bare(VerdictStatus::Pass),
        (_, Some("ProtocolError")) => {
            return Err(SandboxError::Protocol(resp.message.unwrap_or_else(|| "runner rejected the job".into())));
        }
        (None | Some(false), Some(class)) => {
            let test = resp.test.ok_or_else(|| SandboxError::Protocol("error record without `test`".into()))?;
            let status = match class {
                "SyntaxError" | "IndentationError" | "TabError" if test < 0 => VerdictStatus::SyntaxError,
                "AssertionError" if test >= 0 => VerdictStatus::AssertionFail,
                _ => VerdictStatus::RuntimeError,
            };
            let failed_index = match status {
                VerdictStatus::SyntaxError => None,
                _ => Some(usize::try_from(test).unwrap_or(0)),
            };
            SandboxVerdict {
                failed_index,
                error_class: Some(class.to_string()),
                stderr_excerpt: resp.message.clone().unwrap_or_default(),
                ..SandboxVerdict::bare(status)
            }
        }
        _ => return Err(SandboxError::Protocol("response has neither `ok` nor `error`".into())),
    };
    verdict.executed_lines = resp.lines;
    Ok(verdict)
}

#[derive(Debug, Clone)]
pub struct SandboxConfig {
    pub python: PathBuf,
    pub workers: usize,
    pub slack: Duration,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            python: PathBuf::from("python3"),
            workers: thread::available_parallelism().map_or(1, |n| n.get()),
            slack: DEFAULT_SLACK,
        }
    }
}

struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// A bounded pool of interpreter subprocesses. Cheap to share across threads.
pub struct Sandbox {
    config: SandboxConfig,
    permits: Permits,
}

struct StderrSummary {
    last_test: Option<usize>,
    tail: String,
}

fn drain_stderr(stream: impl Read) -> StderrSummary {
    let mut reader = BufReader::new(stream);
    let mut summary = StderrSummary { last_test: None, tail: String::new() };
    let mut buf = Vec::new();
    loop {
        buf.clear();
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        let line = String::from_utf8_lossy(&buf);
        if let Some(index) = line.trim_end().strip_prefix(TEST_MARKER).and_then(|s| s.parse().ok()) {
            summary.last_test = Some(index);
            continue;
        }
        summary.tail.push_str(&line);
        if summary.tail.len() > 4 * EXCERPT_CHARS {
            let cut = summary.tail.len() - EXCERPT_CHARS;
            let cut = (cut..summary.tail.len()).find(|&i| summary.tail.is_char_boundary(i)).unwrap_or(cut);
            summary.tail.drain(..cut);
        }
    }
    summary
}

fn excerpt(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let start = chars.len().saturating_sub(EXCERPT_CHARS);
    chars[start..].iter().collect::<String>().trim().to_string()
}

#[cfg(unix)]
fn signal_name(status: &ExitStatus) -> Option<String> {
    use std::os::unix::process::ExitStatusExt;
    status.signal().map(|s| match s {
        libc::SIGKILL => "SIGKILL".to_string(),
        libc::SIGSEGV => "SIGSEGV".to_string(),
        libc::SIGABRT => "SIGABRT".to_string(),
        libc::SIGXCPU => "SIGXCPU".to_string(),
        libc::SIGXFSZ => "SIGXFSZ".to_string(),
        other => format!("signal {other}"),
    })
}

fn set_limit(resource: libc::__rlimit_resource_t, value: u64) -> std::io::Result<()> {
    let lim = libc::rlimit { rlim_cur: value as libc::rlim_t, rlim_max: value as libc::rlim_t };
    // SAFETY: setrlimit only reads the struct passed by pointer.
    if unsafe { libc::setrlimit(resource, &lim) } == 0 {
        Ok(())
    } else {
        Err(std::io::Error::last_os_error())
    }
}

impl Sandbox {
    pub fn new(config: SandboxConfig) -> Self {
        let workers = config.workers.max(1);
        Sandbox { config, permits: Permits { free: Mutex::new(workers), cv: Condvar::new() } }
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    /// Process-wide sandbox with default settings.
    pub fn shared() -> &'static Sandbox {
        static SHARED: OnceLock<Sandbox> = OnceLock::new();
        SHARED.get_or_init(|| Sandbox::new(SandboxConfig::default()))
    }

    pub fn run(&self, job: &SandboxJob) -> Result<SandboxVerdict, SandboxError> {
        job.validate()?;
        if let Err(e) = parser::parse_source(&job.source) {
            return Ok(SandboxVerdict::syntax_error(e.to_string()));
        }
        let _permit = self.permits.acquire();
        self.spawn_and_wait(job)
    }

    fn spawn_and_wait(&self, job: &SandboxJob) -> Result<SandboxVerdict, SandboxError> {
        let root = tempfile::Builder::new().prefix("maintainkit-sbx-").tempdir()?;
        let work = root.path().join("work");
        std::fs::create_dir(&work)?;
        let runner = root.path().join("runner.py");
        std::fs::write(&runner, RUNNER_SOURCE)?;

        let memory_cap = job.memory_cap;
        let cpu_secs = job.timeout.as_secs() + 2;
        let mut cmd = Command::new(&self.config.python);
        cmd.arg("-I")
            .arg("-S")
            .arg("-B")
            .arg(&runner)
            .current_dir(&work)
            .env_clear()
            .env("HOME", &work)
            .env("TMPDIR", &work)
            .env("LANG", "C.UTF-8")
            .env("PYTHONIOENCODING", "utf-8")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0);
        // SAFETY: only async-signal-safe setrlimit calls run between fork and exec.
        unsafe {
            cmd.pre_exec(move || {
                set_limit(libc::RLIMIT_AS, memory_cap)?;
                set_limit(libc::RLIMIT_CPU, cpu_secs)?;
                set_limit(libc::RLIMIT_FSIZE, FILE_SIZE_CAP)?;
                set_limit(libc::RLIMIT_CORE, 0)?;
                Ok(())
            });
        }

        let payload = serde_json::json!({
            "source": job.source,
            "tests": job.tests,
            "interface_name": job.interface_name,
            "instrument": job.instrument,
        })
        .to_string();

        let started = Instant::now();
        let mut child = cmd.spawn()?;
        let pgid = child.id() as libc::pid_t;
        let mut stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let stderr = child.stderr.take().expect("stderr piped");
        let writer = thread::spawn(move || {
            let _ = stdin.write_all(payload.as_bytes());
        });
        let out_reader = thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stdout.take(STDOUT_CAP).read_to_end(&mut buf);
            buf
        });
        let err_reader = thread::spawn(move || drain_stderr(stderr));

        let status = match child.wait_timeout(job.timeout)? {
            Some(status) => Some(status),
            None => {
                // SAFETY: signals the process group created for this child only.
                unsafe {
                    libc::killpg(pgid, libc::SIGKILL);
                }
                child.wait()?;
                None
            }
        };
        // Grandchildren may hold the pipes open; the group kill above and this one release them.
        // SAFETY: as above.
        unsafe {
            libc::killpg(pgid, libc::SIGKILL);
        }
        let wall_time = started.elapsed();
        let _ = writer.join();
        let stdout = out_reader.join().unwrap_or_default();
        let stderr = err_reader.join().unwrap_or(StderrSummary { last_test: None, tail: String::new() });

        let Some(status) = status else {
            return Ok(SandboxVerdict {
                stderr_excerpt: excerpt(&stderr.tail),
                wall_time,
                ..SandboxVerdict::bare(VerdictStatus::Timeout)
            });
        };

        let text = String::from_utf8_lossy(&stdout);
        let last_line = text.lines().rev().find(|l| !l.trim().is_empty());
        let mut verdict = match last_line {
            Some(line) => {
                let value: Value = serde_json::from_str(line)
                    .map_err(|e| SandboxError::Protocol(format!("unparsable runner output: {e}")))?;
                let mut v = classify_outcome(&value)?;
                if !v.stderr_excerpt.is_empty() && !stderr.tail.trim().is_empty() {
                    v.stderr_excerpt.push('\n');
                }
                v.stderr_excerpt.push_str(&stderr.tail);
                v.stderr_excerpt = excerpt(&v.stderr_excerpt);
                v
            }
            None => SandboxVerdict {
                failed_index: Some(stderr.last_test.unwrap_or(0)),
                error_class: signal_name(&status).or_else(|| status.code().map(|c| format!("exit {c}"))),
                stderr_excerpt: excerpt(&stderr.tail),
                ..SandboxVerdict::bare(VerdictStatus::RuntimeError)
            },
        };
        verdict.wall_time = wall_time;
        Ok(verdict)
    }
}

/// Run one job on the shared default sandbox.
pub fn run_candidate(job: &SandboxJob) -> Result<SandboxVerdict, SandboxError> {
    Sandbox::shared().run(job)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn tests(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_outcome(&json!({"ok": true})).unwrap().status, VerdictStatus::Pass);
        let v = classify_outcome(&json!({"error": "AssertionError", "test": 0})).unwrap();
        assert_eq!((v.status, v.failed_index), (VerdictStatus::AssertionFail, Some(0)));
        let v = classify_outcome(&json!({"error": "ZeroDivisionError", "test": 3, "message": "division by zero"})).unwrap();
        assert_eq!((v.status, v.failed_index), (VerdictStatus::RuntimeError, Some(3)));
        assert_eq!(v.error_class.as_deref(), Some("ZeroDivisionError"));
        let v = classify_outcome(&json!({"error": "SyntaxError", "test": -1})).unwrap();
        assert_eq!((v.status, v.failed_index), (VerdictStatus::SyntaxError, None));
        let v = classify_outcome(&json!({"error": "NameError", "test": -1})).unwrap();
        assert_eq!((v.status, v.failed_index), (VerdictStatus::RuntimeError, Some(0)));
    }

    #[test]
    fn classify_rejects_malformed() {
        assert!(matches!(classify_outcome(&json!({})), Err(SandboxError::Protocol(_))));
        assert!(matches!(classify_outcome(&json!({"error": "X"})), Err(SandboxError::Protocol(_))));
        assert!(matches!(classify_outcome(&json!([1])), Err(SandboxError::Protocol(_))));
        assert!(matches!(classify_outcome(&json!({"error": "ProtocolError", "test": -1})), Err(SandboxError::Protocol(_))));
    }

    #[test]
    fn passing_candidate() {
        let job = SandboxJob::new(
            "def f(x):\n    return x * 2\n",
            tests(&["assert f(1) == 2", "assert f(0) == 0", "assert f(-1) == -2", "assert f(5) == 10", "assert f(3) == 6"]),
            "f",
        );
        let v = run_candidate(&job).unwrap();
        assert_eq!(v.status, VerdictStatus::Pass, "{v:?}");
        assert_eq!(v.failed_index, None);
    }

    #[test]
    fn failing_assertion_index() {
        let job = SandboxJob::new("def f(x):\n    return x\n", tests(&["assert f(1) == 1", "assert f(2) == 2", "assert f(3) == 4"]), "f");
        let v = run_candidate(&job).unwrap();
        assert_eq!((v.status, v.failed_index), (VerdictStatus::AssertionFail, Some(2)));
    }

    #[test]
    fn runtime_error_and_missing_interface() {
        let job = SandboxJob::new("def f(x):\n    return 1 / x\n", tests(&["assert f(1) == 1", "assert f(0) == 0"]), "f");
        let v = run_candidate(&job).unwrap();
        assert_eq!((v.status, v.failed_index), (VerdictStatus::RuntimeError, Some(1)));
        assert_eq!(v.error_class.as_deref(), Some("ZeroDivisionError"));

        let job = SandboxJob::new("def g(x):\n    return x\n", tests(&["assert f(1) == 1"]), "f");
        let v = run_candidate(&job).unwrap();
        assert_eq!((v.status, v.error_class.as_deref()), (VerdictStatus::RuntimeError, Some("NameError")));
    }

    #[test]
    fn syntax_error_without_spawning() {
        let v = run_candidate(&SandboxJob::new("def f(:\n", tests(&["assert f()"]), "f")).unwrap();
        assert_eq!((v.status, v.failed_index), (VerdictStatus::SyntaxError, None));
    }

    #[test]
    fn stdout_noise_does_not_break_protocol() {
        let job = SandboxJob::new("print('hello')\ndef f():\n    print('{')\n    return 1\n", tests(&["assert f() == 1"]), "f");
        assert_eq!(run_candidate(&job).unwrap().status, VerdictStatus::Pass);
    }

    #[test]
    fn hard_exit_is_runtime_error_at_current_test() {
        let job = SandboxJob::new("import os\ndef f(x):\n    if x:\n        os._exit(7)\n    return 0\n", tests(&["assert f(0) == 0", "assert f(1) == 0"]), "f");
        let v = run_candidate(&job).unwrap();
        assert_eq!((v.status, v.failed_index), (VerdictStatus::RuntimeError, Some(1)));
    }

    #[test]
    fn network_is_refused() {
        let job = SandboxJob::new(
            "import socket\ndef f():\n    socket.socket()\n    return 1\n",
            tests(&["assert f() == 1"]),
            "f",
        );
        let v = run_candidate(&job).unwrap();
        assert_eq!(v.status, VerdictStatus::RuntimeError);
        assert_eq!(v.error_class.as_deref(), Some("PermissionError"));
    }

    #[test]
    fn instrumented_run_reports_lines() {
        let src = "def f(x):\n    try:\n        return 1 / x\n    except ZeroDivisionError:\n        return None\n";
        let job = SandboxJob::new(src, tests(&["assert f(0) is None"]), "f").instrumented();
        let v = run_candidate(&job).unwrap();
        assert_eq!(v.status, VerdictStatus::Pass);
        assert!(v.executed_lines.unwrap().contains(&5));
    }

    #[test]
    fn invalid_jobs() {
        let job = SandboxJob::new("x = 1", vec![], "f");
        assert!(matches!(run_candidate(&job), Err(SandboxError::InvalidJob(_))));
        let job = SandboxJob::new("x = 1", tests(&["assert x"]), "f").with_limits(Duration::ZERO, 1 << 20);
        assert!(matches!(run_candidate(&job), Err(SandboxError::InvalidJob(_))));
    }

    #[test]
    fn repeated_runs_share_no_state() {
        let src = "import builtins\nbuiltins.counter = getattr(builtins, 'counter', 0) + 1\ndef f():\n    return builtins.counter\n";
        for _ in 0..2 {
            let v = run_candidate(&SandboxJob::new(src, tests(&["assert f() == 1"]), "f")).unwrap();
            assert_eq!(v.status, VerdictStatus::Pass);
        }
    }
}
