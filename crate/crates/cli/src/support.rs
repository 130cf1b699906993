//! Shared CLI plumbing: exit-code-carrying errors, evaluator resolution,
//! candidate and space loading, and the run manifest.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use protosearch_core::candidate::{
    baseline_protocol, searched_protocol, validate, CandidateJson, ProtocolCandidate,
};
use protosearch_core::engine::SearchConfig;
use protosearch_core::eval::external::{ExternalEvaluator, EVALUATOR_CMD_ENV};
use protosearch_core::eval::replay::ReplayEvaluator;
use protosearch_core::eval::surrogate::SurrogateEvaluator;
use protosearch_core::eval::{Evaluator, FidelityDescriptor};
use protosearch_core::space::{default_space, SearchSpace};

/// Errors mapped onto process exit codes: usage 1, evaluator failure 2,
/// data/format 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Evaluator(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Evaluator(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Evaluator(m) => write!(f, "evaluator failure: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn data_err<E: fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

/// Evaluator binding flags shared by every evaluating subcommand.
#[derive(Debug, Clone, Args)]
pub struct EvaluatorArgs {
    /// External trainer command, run via `sh -c CMD` with the request JSON
    /// on stdin
    #[arg(long, value_name = "CMD")]
    pub evaluator: Option<String>,

    /// Built-in deterministic surrogate; the value seeds the fitness
    /// landscape
    #[arg(long, value_name = "SEED", conflicts_with = "evaluator")]
    pub surrogate: Option<u64>,

    /// Replay table CSV with header key,fidelity,fitness
    #[arg(long, value_name = "FILE", conflicts_with_all = ["evaluator", "surrogate"])]
    pub replay: Option<PathBuf>,

    /// Maximum concurrent external evaluator processes
    #[arg(long, value_name = "N", default_value_t = 1)]
    pub jobs: usize,

    /// Kill external evaluations after this many seconds
    #[arg(long, value_name = "SECONDS")]
    pub timeout_seconds: Option<f64>,
}

/// Manifest-serializable description of the resolved binding.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EvaluatorSpec {
    Surrogate {
        seed: u64,
    },
    External {
        command: String,
        jobs: usize,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        timeout_seconds: Option<f64>,
    },
    Replay {
        table: PathBuf,
    },
}

impl EvaluatorSpec {
    pub fn build(&self) -> CliResult<Box<dyn Evaluator>> {
        match self {
            EvaluatorSpec::Surrogate { seed } => Ok(Box::new(SurrogateEvaluator::new(*seed))),
            EvaluatorSpec::External {
                command,
                jobs,
                timeout_seconds,
            } => {
                let mut binding = ExternalEvaluator::new(vec![
                    "sh".to_string(),
                    "-c".to_string(),
                    command.clone(),
                ])
                .map_err(|e| CliError::Usage(e.to_string()))?
                .with_max_concurrency((*jobs).max(1))
                .map_err(|e| CliError::Usage(e.to_string()))?;
                if let Some(seconds) = timeout_seconds {
                    binding = binding.with_timeout(std::time::Duration::from_secs_f64(*seconds));
                }
                Ok(Box::new(binding))
            }
            EvaluatorSpec::Replay { table } => Ok(Box::new(
                ReplayEvaluator::from_path(table).map_err(data_err)?,
            )),
        }
    }
}

impl EvaluatorArgs {
    fn explicit_spec(&self) -> Option<EvaluatorSpec> {
        if let Some(cmd) = &self.evaluator {
            Some(EvaluatorSpec::External {
                command: cmd.clone(),
                jobs: self.jobs,
                timeout_seconds: self.timeout_seconds,
            })
        } else if let Some(seed) = self.surrogate {
            Some(EvaluatorSpec::Surrogate { seed })
        } else {
            self.replay.as_ref().map(|table| EvaluatorSpec::Replay {
                table: table.clone(),
            })
        }
    }

    /// Explicit flag, then PROTOSEARCH_EVALUATOR_CMD, then an error — a
    /// search never falls back to the surrogate silently.
    pub fn resolve(&self) -> CliResult<EvaluatorSpec> {
        if let Some(spec) = self.explicit_spec() {
            return Ok(spec);
        }
        if let Ok(cmd) = std::env::var(EVALUATOR_CMD_ENV) {
            if !cmd.trim().is_empty() {
                return Ok(EvaluatorSpec::External {
                    command: cmd,
                    jobs: self.jobs,
                    timeout_seconds: self.timeout_seconds,
                });
            }
        }
        Err(CliError::Usage(format!(
            "no evaluator selected: pass --evaluator CMD, --surrogate SEED, or --replay FILE \
             (or set {EVALUATOR_CMD_ENV})"
        )))
    }

    /// Like `resolve`, but absent flags mean "do not evaluate" instead of an
    /// error; the environment fallback is not consulted.
    pub fn resolve_optional(&self) -> Option<EvaluatorSpec> {
        self.explicit_spec()
    }
}

pub fn parse_fidelity(token: &str) -> CliResult<FidelityDescriptor> {
    FidelityDescriptor::from_token(token)
        .ok_or_else(|| CliError::Usage(format!("unknown fidelity {token:?}; use proxy or full")))
}

pub fn load_space(path: Option<&Path>) -> CliResult<SearchSpace> {
    match path {
        None => Ok(default_space()),
        Some(path) => SearchSpace::load(path).map_err(data_err),
    }
}

/// Candidate sources accepted by --candidate/--base/--target: a JSON file
/// in the wire schema, or `builtin:baseline` / `builtin:searched`.
pub fn load_candidate(spec: &str, space: &SearchSpace) -> CliResult<ProtocolCandidate> {
    let candidate = match spec {
        "builtin:baseline" => baseline_protocol(),
        "builtin:searched" => searched_protocol(),
        _ if spec.starts_with("builtin:") => {
            return Err(CliError::Usage(format!(
                "unknown builtin {spec:?}; available: builtin:baseline, builtin:searched"
            )))
        }
        path => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("{path}: {e}")))?;
            let wire: CandidateJson =
                serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{path}: {e}")))?;
            wire.to_candidate(space)
        }
    };
    let violations = validate(&candidate, space);
    if !violations.is_empty() {
        let lines: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Data(format!(
            "candidate {spec} does not validate:\n  {}",
            lines.join("\n  ")
        )));
    }
    Ok(candidate)
}

/// Artifact paths inside a run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifacts {
    pub manifest: PathBuf,
    pub trace: PathBuf,
    pub report: PathBuf,
}

/// Resolved configuration of one run, written before any evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub command_line: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub space_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub search: Option<SearchConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub random: Option<RandomConfig>,
    pub evaluator: EvaluatorSpec,
    pub fidelity: String,
    pub started_at: String,
    #[serde(default)]
    pub finished_at: Option<String>,
    pub artifacts: Artifacts,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomConfig {
    pub n: usize,
    pub seed: u64,
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn paths(out: &Path) -> Artifacts {
        Artifacts {
            manifest: out.join("manifest.json"),
            trace: out.join("trace.jsonl"),
            report: out.join("report.json"),
        }
    }

    pub fn write(&self) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&self.artifacts.manifest, text + "\n")
            .map_err(|e| CliError::Data(format!("writing manifest: {e}")))
    }

    pub fn read(out: &Path) -> CliResult<Self> {
        let path = Self::paths(out).manifest;
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

/// Write `value` as pretty JSON into `path`.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
