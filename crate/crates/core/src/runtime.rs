//! Deterministic protocol semantics a trainer consumes: learning-rate
//! schedules, real/synthetic batch composition, character-set label
//! processing, and the evaluation-metric normalization.

use std::fmt;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Errors from runtime-semantics operations.
#[derive(Debug, Clone, PartialEq)]
pub enum RuntimeError {
    BadScheduleToken(String),
    BadMilestones(String),
    BadInitialLr(f64),
    ZeroIterations,
    IterationOutOfRange { iteration: u64, total: u64 },
    AlphaOutOfRange(f64),
    ZeroBatch,
    EmptyPool { pool: PoolTag, needed: u32 },
    BadCharsetToken(String),
    EmptyPairs,
}

impl fmt::Display for RuntimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuntimeError::BadScheduleToken(t) => write!(f, "unknown lr schedule token {t:?}"),
            RuntimeError::BadMilestones(d) => write!(f, "bad milestone fractions: {d}"),
            RuntimeError::BadInitialLr(v) => write!(f, "initial lr {v} must be positive"),
            RuntimeError::ZeroIterations => write!(f, "total_iterations must be positive"),
            RuntimeError::IterationOutOfRange { iteration, total } => {
                write!(f, "iteration {iteration} outside [0, {total})")
            }
            RuntimeError::AlphaOutOfRange(v) => write!(f, "alpha_real {v} outside [0, 1]"),
            RuntimeError::ZeroBatch => write!(f, "batch size must be positive"),
            RuntimeError::EmptyPool { pool, needed } => {
                write!(
                    f,
                    "{pool:?} pool is empty but {needed} samples are required"
                )
            }
            RuntimeError::BadCharsetToken(t) => write!(f, "unknown character set token {t:?}"),
            RuntimeError::EmptyPairs => write!(f, "accuracy over an empty pair list is undefined"),
        }
    }
}

impl std::error::Error for RuntimeError {}

/// Schedule shape: constant, or multi-step decay at fractional milestones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScheduleKind {
    Constant,
    MultiStep { milestone_fractions: Vec<f64> },
}

/// A fully resolved learning-rate schedule. The decay rate is fixed at 0.1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LRScheduleSpec {
    pub kind: ScheduleKind,
    pub initial_lr: f64,
    pub decay_rate: f64,
    pub total_iterations: u64,
}

impl LRScheduleSpec {
    pub fn new(
        kind: ScheduleKind,
        initial_lr: f64,
        total_iterations: u64,
    ) -> Result<Self, RuntimeError> {
        if !(initial_lr.is_finite() && initial_lr > 0.0) {
            return Err(RuntimeError::BadInitialLr(initial_lr));
        }
        if total_iterations == 0 {
            return Err(RuntimeError::ZeroIterations);
        }
        if let ScheduleKind::MultiStep {
            milestone_fractions,
        } = &kind
        {
            if milestone_fractions.is_empty() {
                return Err(RuntimeError::BadMilestones("no milestones".to_string()));
            }
            let mut prev = 0.0;
            for &frac in milestone_fractions {
                if !(frac > 0.0 && frac < 1.0) {
                    return Err(RuntimeError::BadMilestones(format!(
                        "fraction {frac} outside (0, 1)"
                    )));
                }
                if frac <= prev {
                    return Err(RuntimeError::BadMilestones(format!(
                        "fractions must be strictly increasing, got {frac} after {prev}"
                    )));
                }
                prev = frac;
            }
        }
        Ok(Self {
            kind,
            initial_lr,
            decay_rate: 0.1,
            total_iterations,
        })
    }

    /// Parse a schedule token: `constant` or `ms-<f1>[-<f2>...]`.
    pub fn from_token(
        token: &str,
        initial_lr: f64,
        total_iterations: u64,
    ) -> Result<Self, RuntimeError> {
        if token == "constant" {
            return Self::new(ScheduleKind::Constant, initial_lr, total_iterations);
        }
        let Some(rest) = token.strip_prefix("ms-") else {
            return Err(RuntimeError::BadScheduleToken(token.to_string()));
        };
        let fractions: Result<Vec<f64>, _> = rest.split('-').map(str::parse::<f64>).collect();
        let fractions = fractions.map_err(|_| RuntimeError::BadScheduleToken(token.to_string()))?;
        Self::new(
            ScheduleKind::MultiStep {
                milestone_fractions: fractions,
            },
            initial_lr,
            total_iterations,
        )
    }

    /// Milestone iterations, `floor(fraction * total)` with the fraction
    /// read at nine-decimal precision so decimal fractions land exactly.
    pub fn milestones(&self) -> Vec<u64> {
        match &self.kind {
            ScheduleKind::Constant => Vec::new(),
            ScheduleKind::MultiStep {
                milestone_fractions,
            } => milestone_fractions
                .iter()
                .map(|&frac| {
                    let scaled = (frac * 1e9).round() as u128;
                    (scaled * self.total_iterations as u128 / 1_000_000_000) as u64
                })
                .collect(),
        }
    }

    /// Learning rate at `iteration`: the initial rate decayed once per
    /// milestone already reached (boundary inclusive).
    ///
    /// Decays are applied in decimal space (shift the printed exponent and
    /// reparse) so emitted tables match hand-written values like `5e-5`.
    pub fn lr_at(&self, iteration: u64) -> Result<f64, RuntimeError> {
        if iteration >= self.total_iterations {
            return Err(RuntimeError::IterationOutOfRange {
                iteration,
                total: self.total_iterations,
            });
        }
        let decays = self
            .milestones()
            .iter()
            .filter(|&&m| m <= iteration)
            .count();
        Ok(decayed_lr(self.initial_lr, decays))
    }
}

fn decayed_lr(initial: f64, decays: usize) -> f64 {
    if decays == 0 {
        return initial;
    }
    format!("{initial}e-{decays}")
        .parse::<f64>()
        .expect("shifted decimal parses")
}

/// Write the full `iteration,lr` CSV for a schedule.
pub fn write_lr_table<W: Write>(spec: &LRScheduleSpec, out: &mut W) -> io::Result<()> {
    writeln!(out, "iteration,lr")?;
    for iteration in 0..spec.total_iterations {
        let lr = spec.lr_at(iteration).expect("iteration in range");
        writeln!(out, "{iteration},{lr}")?;
    }
    Ok(())
}

/// Per-batch sampling counts for mixing real and synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerPlan {
    pub alpha_real: f64,
    pub batch_size: u32,
    pub n_real_per_batch: u32,
    pub n_synth_per_batch: u32,
}

impl SamplerPlan {
    pub fn new(alpha_real: f64, batch_size: u32) -> Result<Self, RuntimeError> {
        let (n_real, n_synth) = batch_composition(alpha_real, batch_size)?;
        Ok(Self {
            alpha_real,
            batch_size,
            n_real_per_batch: n_real,
            n_synth_per_batch: n_synth,
        })
    }
}

/// Split a batch into (real, synthetic) counts; the real count is
/// `alpha_real * batch_size` rounded half to even.
pub fn batch_composition(alpha_real: f64, batch_size: u32) -> Result<(u32, u32), RuntimeError> {
    if !(0.0..=1.0).contains(&alpha_real) {
        return Err(RuntimeError::AlphaOutOfRange(alpha_real));
    }
    if batch_size == 0 {
        return Err(RuntimeError::ZeroBatch);
    }
    let n_real = (alpha_real * batch_size as f64).round_ties_even() as u32;
    Ok((n_real, batch_size - n_real))
}

/// Which pool a drawn sample index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolTag {
    Real,
    Synth,
}

/// Draw one batch of pool indices per the plan: uniform with replacement
/// within each pool, order shuffled within the batch.
pub fn draw_batch<R: Rng + ?Sized>(
    plan: &SamplerPlan,
    real_pool_size: usize,
    synth_pool_size: usize,
    rng: &mut R,
) -> Result<Vec<(PoolTag, usize)>, RuntimeError> {
    if plan.n_real_per_batch > 0 && real_pool_size == 0 {
        return Err(RuntimeError::EmptyPool {
            pool: PoolTag::Real,
            needed: plan.n_real_per_batch,
        });
    }
    if plan.n_synth_per_batch > 0 && synth_pool_size == 0 {
        return Err(RuntimeError::EmptyPool {
            pool: PoolTag::Synth,
            needed: plan.n_synth_per_batch,
        });
    }
    let mut batch = Vec::with_capacity(plan.batch_size as usize);
    for _ in 0..plan.n_real_per_batch {
        batch.push((PoolTag::Real, rng.random_range(0..real_pool_size)));
    }
    for _ in 0..plan.n_synth_per_batch {
        batch.push((PoolTag::Synth, rng.random_range(0..synth_pool_size)));
    }
    batch.shuffle(rng);
    Ok(batch)
}

/// Which character classes the decoder alphabet keeps. Digits and lowercase
/// letters are always in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterSetPolicy {
    pub uppercase: bool,
    pub punctuation: bool,
}

impl CharacterSetPolicy {
    pub fn from_token(token: &str) -> Result<Self, RuntimeError> {
        match token {
            "DL" => Ok(Self {
                uppercase: false,
                punctuation: false,
            }),
            "DLP" => Ok(Self {
                uppercase: false,
                punctuation: true,
            }),
            "DLU" => Ok(Self {
                uppercase: true,
                punctuation: false,
            }),
            "DLUP" => Ok(Self {
                uppercase: true,
                punctuation: true,
            }),
            _ => Err(RuntimeError::BadCharsetToken(token.to_string())),
        }
    }

    pub fn token(&self) -> &'static str {
        match (self.uppercase, self.punctuation) {
            (false, false) => "DL",
            (false, true) => "DLP",
            (true, false) => "DLU",
            (true, true) => "DLUP",
        }
    }
}

/// Rewrite a raw label for a decoder alphabet: uppercase folds to lowercase
/// unless kept, ASCII punctuation is dropped unless kept, and everything
/// outside digits/letters/punctuation (whitespace, non-ASCII) is dropped.
pub fn process_label(raw: &str, policy: CharacterSetPolicy) -> String {
    let mut out = String::with_capacity(raw.len());
    for ch in raw.chars() {
        if ch.is_ascii_digit() || ch.is_ascii_lowercase() {
            out.push(ch);
        } else if ch.is_ascii_uppercase() {
            out.push(if policy.uppercase {
                ch
            } else {
                ch.to_ascii_lowercase()
            });
        } else if ch.is_ascii_punctuation() && policy.punctuation {
            out.push(ch);
        }
    }
    out
}

/// Case-insensitive alphanumeric normalization: ASCII-lowercase, then strip
/// every character outside [0-9a-z].
pub fn normalize_for_eval(text: &str) -> String {
    text.chars()
        .map(|c| c.to_ascii_lowercase())
        .filter(|c| c.is_ascii_alphanumeric())
        .collect()
}

/// Lexicon-free exact-match accuracy over normalized (prediction, truth)
/// pairs.
pub fn exact_match_accuracy<S: AsRef<str>>(pairs: &[(S, S)]) -> Result<f64, RuntimeError> {
    if pairs.is_empty() {
        return Err(RuntimeError::EmptyPairs);
    }
    let matches = pairs
        .iter()
        .filter(|(pred, truth)| {
            normalize_for_eval(pred.as_ref()) == normalize_for_eval(truth.as_ref())
        })
        .count();
    Ok(matches as f64 / pairs.len() as f64)
}
