//! Subprocess evaluator: the boundary where a real trainer attaches.
//!
//! The request is written as one JSON document to the child's stdin; the
//! child responds with one JSON document `{"accuracy", "status",
//! "message"?}` on stdout and exit code 0 on success. Slow children are
//! killed at the timeout.

use std::fmt;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::candidate::{canonical_encode, CandidateJson, WireError};
use crate::eval::{EvaluationRequest, EvaluationResult, Evaluator, FidelityDescriptor};

/// Environment variable naming the default external evaluator command.
pub const EVALUATOR_CMD_ENV: &str = "PROTOSEARCH_EVALUATOR_CMD";

/// Wire form of an [`EvaluationRequest`], written to the child's stdin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RequestJson {
    pub candidate: CandidateJson,
    pub fidelity: FidelityDescriptor,
    pub seed: u64,
}

impl RequestJson {
    pub fn from_request(request: &EvaluationRequest) -> Result<Self, WireError> {
        Ok(Self {
            candidate: CandidateJson::from_candidate(&request.candidate)?,
            fidelity: request.fidelity.clone(),
            seed: request.seed,
        })
    }
}

#[derive(Debug, Deserialize)]
struct ResponseJson {
    accuracy: Option<f64>,
    status: String,
    message: Option<String>,
}

/// Counting semaphore bounding concurrent child processes.
struct Limiter {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Limiter {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut permits = self.permits.lock().expect("limiter lock");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("limiter wait");
        }
        *permits -= 1;
        LimiterGuard { limiter: self }
    }
}

struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.limiter.permits.lock().expect("limiter lock");
        *permits += 1;
        self.limiter.available.notify_one();
    }
}

/// Errors constructing an external binding.
#[derive(Debug, Clone, PartialEq)]
pub enum ExternalError {
    EmptyCommand,
    ZeroConcurrency,
}

impl fmt::Display for ExternalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExternalError::EmptyCommand => write!(f, "external evaluator command is empty"),
            ExternalError::ZeroConcurrency => write!(f, "max concurrency must be at least 1"),
        }
    }
}

impl std::error::Error for ExternalError {}

/// Kill a child and everything in its process group.
fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    unsafe {
        libc::kill(-(child.id() as i32), libc::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

/// Spawns one child process per evaluation, with timeout and a global
/// concurrency cap.
pub struct ExternalEvaluator {
    command: Vec<String>,
    timeout: Option<Duration>,
    limiter: Limiter,
}

impl ExternalEvaluator {
    /// `command` is the executable path followed by its arguments.
    pub fn new(command: Vec<String>) -> Result<Self, ExternalError> {
        if command.is_empty() || command[0].is_empty() {
            return Err(ExternalError::EmptyCommand);
        }
        Ok(Self {
            command,
            timeout: None,
            limiter: Limiter::new(1),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }

    /// Cap on simultaneously running child processes (default 1).
    pub fn with_max_concurrency(mut self, jobs: usize) -> Result<Self, ExternalError> {
        if jobs == 0 {
            return Err(ExternalError::ZeroConcurrency);
        }
        self.limiter = Limiter::new(jobs);
        Ok(self)
    }

    fn run_child(&self, request_text: &str, started: Instant) -> EvaluationResult {
        let mut command = Command::new(&self.command[0]);
        command
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        // Own process group, so a timeout kill also reaps grandchildren
        // that inherited our pipes.
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            command.process_group(0);
        }
        let mut child = match command.spawn() {
            Ok(child) => child,
            Err(e) => {
                return EvaluationResult::error(
                    format!("failed to spawn {:?}: {e}", self.command[0]),
                    started.elapsed().as_secs_f64(),
                )
            }
        };

        // The request is far smaller than the pipe buffer, so a direct write
        // cannot deadlock against the child's own output.
        if let Some(mut stdin) = child.stdin.take() {
            let _ = stdin.write_all(request_text.as_bytes());
            let _ = stdin.write_all(b"\n");
        }

        let stdout_handle = child.stdout.take().map(|mut pipe| {
            std::thread::spawn(move || {
                let mut buf = Vec::new();
                let _ = pipe.read_to_end(&mut buf);
                buf
            })
        });
        let stderr_handle = child.stderr.take().map(|mut pipe| {
            std::thread::spawn(move || {
                let mut buf = Vec::new();
                let _ = pipe.read_to_end(&mut buf);
                buf
            })
        });

        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Ok(status),
                Ok(None) => {
                    if let Some(timeout) = self.timeout {
                        if started.elapsed() >= timeout {
                            kill_tree(&mut child);
                            break Err(timeout);
                        }
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(e) => {
                    kill_tree(&mut child);
                    return EvaluationResult::error(
                        format!("wait failed: {e}"),
                        started.elapsed().as_secs_f64(),
                    );
                }
            }
        };

        let stdout = stdout_handle
            .and_then(|h| h.join().ok())
            .unwrap_or_default();
        let stderr = stderr_handle
            .and_then(|h| h.join().ok())
            .unwrap_or_default();
        let elapsed = started.elapsed().as_secs_f64();

        let status = match status {
            Ok(status) => status,
            Err(timeout) => {
                return EvaluationResult::timeout(
                    format!("killed after {}s", timeout.as_secs_f64()),
                    elapsed,
                )
            }
        };

        if !status.success() {
            let tail = String::from_utf8_lossy(&stderr);
            return EvaluationResult::error(
                format!(
                    "child exited with {}: {}",
                    status
                        .code()
                        .map_or("signal".to_string(), |c| c.to_string()),
                    tail.trim().chars().take(200).collect::<String>()
                ),
                elapsed,
            );
        }

        let response: ResponseJson = match serde_json::from_slice(&stdout) {
            Ok(r) => r,
            Err(e) => {
                return EvaluationResult::error(format!("malformed response JSON: {e}"), elapsed)
            }
        };
        if response.status != "ok" {
            return EvaluationResult::error(
                format!(
                    "child reported status {:?}: {}",
                    response.status,
                    response.message.unwrap_or_default()
                ),
                elapsed,
            );
        }
        match response.accuracy {
            Some(acc) if acc.is_finite() && (0.0..=1.0).contains(&acc) => {
                EvaluationResult::ok(acc, elapsed)
            }
            Some(acc) => EvaluationResult::error(format!("accuracy {acc} outside [0, 1]"), elapsed),
            None => EvaluationResult::error("response lacks accuracy", elapsed),
        }
    }
}

impl Evaluator for ExternalEvaluator {
    fn evaluate(&self, request: &EvaluationRequest) -> EvaluationResult {
        let started = Instant::now();
        let wire = match RequestJson::from_request(request) {
            Ok(wire) => wire,
            Err(e) => {
                return EvaluationResult::error(
                    format!(
                        "candidate {} has no wire form: {e}",
                        canonical_encode(&request.candidate)
                    ),
                    0.0,
                )
            }
        };
        let text = serde_json::to_string(&wire).expect("request serializes");
        let _permit = self.limiter.acquire();
        self.run_child(&text, started)
    }

    fn describe(&self) -> String {
        format!("external({})", self.command.join(" "))
    }
}
