//! Replay binding: exact-key fitness lookup from a CSV table.
//!
//! Used to rerun analyses (rank correlation, ablations) against previously
//! measured accuracies instead of a live trainer. Table format:
//! `key,fidelity,fitness` where `key` is the canonical candidate encoding.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use crate::candidate::canonical_encode;
use crate::eval::{EvaluationRequest, EvaluationResult, Evaluator};

#[derive(Debug, Clone, PartialEq)]
pub enum ReplayError {
    Io(String),
    BadHeader(String),
    BadRow { line: usize, detail: String },
}

impl fmt::Display for ReplayError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplayError::Io(e) => write!(f, "replay table io error: {e}"),
            ReplayError::BadHeader(h) => {
                write!(
                    f,
                    "replay table header must be key,fidelity,fitness, got {h:?}"
                )
            }
            ReplayError::BadRow { line, detail } => {
                write!(f, "replay table row {line}: {detail}")
            }
        }
    }
}

impl std::error::Error for ReplayError {}

/// Fitness table keyed by (canonical encoding, fidelity token).
pub struct ReplayEvaluator {
    entries: HashMap<(String, String), f64>,
    source: String,
}

impl ReplayEvaluator {
    pub fn from_reader<R: Read>(reader: R, source: &str) -> Result<Self, ReplayError> {
        let mut csv_reader = csv::Reader::from_reader(reader);
        let headers = csv_reader
            .headers()
            .map_err(|e| ReplayError::Io(e.to_string()))?
            .clone();
        let expected = ["key", "fidelity", "fitness"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(ReplayError::BadHeader(
                headers.iter().collect::<Vec<_>>().join(","),
            ));
        }
        let mut entries = HashMap::new();
        for (i, record) in csv_reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| ReplayError::BadRow {
                line,
                detail: e.to_string(),
            })?;
            if record.len() != 3 {
                return Err(ReplayError::BadRow {
                    line,
                    detail: format!("expected 3 columns, got {}", record.len()),
                });
            }
            let fitness: f64 = record[2].parse().map_err(|_| ReplayError::BadRow {
                line,
                detail: format!("fitness {:?} is not a number", &record[2]),
            })?;
            if !(0.0..=1.0).contains(&fitness) {
                return Err(ReplayError::BadRow {
                    line,
                    detail: format!("fitness {fitness} outside [0, 1]"),
                });
            }
            entries.insert((record[0].to_string(), record[1].to_string()), fitness);
        }
        Ok(Self {
            entries,
            source: source.to_string(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ReplayError> {
        let file = std::fs::File::open(path)
            .map_err(|e| ReplayError::Io(format!("{}: {e}", path.display())))?;
        Self::from_reader(file, &path.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Evaluator for ReplayEvaluator {
    fn evaluate(&self, request: &EvaluationRequest) -> EvaluationResult {
        let key = (
            canonical_encode(&request.candidate),
            request.fidelity.token(),
        );
        match self.entries.get(&key) {
            Some(&fitness) => EvaluationResult::ok(fitness, 0.0),
            None => {
                EvaluationResult::error(format!("no replay entry for ({}, {})", key.0, key.1), 0.0)
            }
        }
    }

    fn describe(&self) -> String {
        format!("replay({}, {} rows)", self.source, self.entries.len())
    }
}
