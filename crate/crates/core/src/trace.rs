//! Append-only JSONL search trace: one object per scored candidate.
//!
//! The trace doubles as the resume checkpoint. Rerunning with the same seed
//! and config replays already-logged evaluations from the file and proceeds
//! with fresh ones, so an interrupted run finishes with the same population
//! as an uninterrupted one.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::candidate::{CandidateJson, WireError};
use crate::engine::{Origin, ScoredCandidate};
use crate::space::SearchSpace;

/// One trace line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub generation: u32,
    pub origin: Origin,
    pub candidate: CandidateJson,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fitness: Option<f64>,
    pub eval_seconds: f64,
    pub cached: bool,
}

impl TraceRecord {
    pub fn from_scored(scored: &ScoredCandidate) -> Result<Self, WireError> {
        Ok(Self {
            generation: scored.generation,
            origin: scored.origin,
            candidate: CandidateJson::from_candidate(&scored.candidate)?,
            fitness: scored.fitness,
            eval_seconds: scored.eval_seconds,
            cached: scored.cached,
        })
    }

    pub fn to_scored(&self, space: &SearchSpace) -> ScoredCandidate {
        ScoredCandidate {
            candidate: self.candidate.to_candidate(space),
            fitness: self.fitness,
            origin: self.origin,
            generation: self.generation,
            eval_seconds: self.eval_seconds,
            cached: self.cached,
        }
    }
}

/// Serialize one record as a single JSONL line.
pub fn record_line(record: &TraceRecord) -> String {
    serde_json::to_string(record).expect("trace record serializes")
}

/// Append one record to a writer.
pub fn append_record<W: Write>(out: &mut W, record: &TraceRecord) -> io::Result<()> {
    writeln!(out, "{}", record_line(record))
}

/// Parse a trace, tolerating a truncated final line (a killed run may stop
/// mid-write). Returns the records and the byte length of the valid prefix.
pub fn read_trace<R: BufRead>(reader: R) -> (Vec<TraceRecord>, u64) {
    let mut records = Vec::new();
    let mut valid_bytes = 0u64;
    for line in reader.split(b'\n') {
        let Ok(line) = line else { break };
        match serde_json::from_slice::<TraceRecord>(&line) {
            Ok(record) => {
                records.push(record);
                valid_bytes += line.len() as u64 + 1;
            }
            Err(_) => break,
        }
    }
    (records, valid_bytes)
}

/// Read a trace file; a missing file is an empty trace.
pub fn read_trace_file(path: &Path) -> io::Result<(Vec<TraceRecord>, u64)> {
    match File::open(path) {
        Ok(file) => Ok(read_trace(BufReader::new(file))),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok((Vec::new(), 0)),
        Err(e) => Err(e),
    }
}

/// Open a trace file for appending after truncating any malformed tail.
pub fn open_for_append(path: &Path, valid_bytes: u64) -> io::Result<File> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    if file.metadata()?.len() > valid_bytes {
        file.set_len(valid_bytes)?;
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidate::searched_protocol;
    use crate::space::default_space;

    fn record() -> TraceRecord {
        TraceRecord {
            generation: 0,
            origin: Origin::Init,
            candidate: CandidateJson::from_candidate(&searched_protocol()).unwrap(),
            fitness: Some(0.875),
            eval_seconds: 0.0,
            cached: false,
        }
    }

    #[test]
    fn line_round_trips() {
        let rec = record();
        let line = record_line(&rec);
        let back: TraceRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, rec);
        let scored = back.to_scored(&default_space());
        assert_eq!(scored.candidate, searched_protocol());
    }

    #[test]
    fn failed_records_omit_fitness() {
        let mut rec = record();
        rec.fitness = None;
        let line = record_line(&rec);
        assert!(!line.contains("fitness"));
        let back: TraceRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back.fitness, None);
    }

    #[test]
    fn truncated_tail_is_dropped() {
        let rec = record();
        let full = record_line(&rec);
        let mut bytes = Vec::new();
        bytes.extend_from_slice(full.as_bytes());
        bytes.push(b'\n');
        bytes.extend_from_slice(&full.as_bytes()[..20]); // torn write
        let (records, valid) = read_trace(&bytes[..]);
        assert_eq!(records.len(), 1);
        assert_eq!(valid, full.len() as u64 + 1);
    }

    #[test]
    fn missing_file_reads_as_empty() {
        let dir = tempfile::tempdir().unwrap();
        let (records, valid) = read_trace_file(&dir.path().join("absent.jsonl")).unwrap();
        assert!(records.is_empty());
        assert_eq!(valid, 0);
    }
}
