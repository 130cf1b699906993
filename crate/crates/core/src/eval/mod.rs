//! Candidate scoring: fidelity descriptors, evaluator bindings, and the
//! insert-once evaluation cache.
//!
//! Three bindings implement [`Evaluator`]: a subprocess boundary for real
//! trainers ([`external::ExternalEvaluator`]), a CSV replay table
//! ([`replay::ReplayEvaluator`]), and a deterministic hash-based surrogate
//! ([`surrogate::SurrogateEvaluator`]) that makes exhaustive-oracle testing
//! of the search loop possible without any trainer.

pub mod external;
pub mod replay;
pub mod surrogate;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::candidate::{canonical_encode, ProtocolCandidate};

/// Which training regime an evaluation runs at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityDescriptor {
    pub total_iterations: u64,
    pub data_fraction: f64,
    pub batch_size: u32,
    pub proxy_model: String,
}

impl FidelityDescriptor {
    /// Proxy regime: 50k iterations on a 20% data split with a small model.
    pub fn proxy() -> Self {
        Self {
            total_iterations: 50_000,
            data_fraction: 0.2,
            batch_size: 256,
            proxy_model: "crnn-proxy".to_string(),
        }
    }

    /// Full regime: 300k iterations on the whole training set.
    pub fn full() -> Self {
        Self {
            total_iterations: 300_000,
            data_fraction: 1.0,
            batch_size: 256,
            proxy_model: "target".to_string(),
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "proxy" => Some(Self::proxy()),
            "full" => Some(Self::full()),
            _ => None,
        }
    }

    /// Cache-key token: the preset name, or a full rendering for custom
    /// fidelities.
    pub fn token(&self) -> String {
        if *self == Self::proxy() {
            "proxy".to_string()
        } else if *self == Self::full() {
            "full".to_string()
        } else {
            format!(
                "iters{}-frac{}-batch{}-{}",
                self.total_iterations, self.data_fraction, self.batch_size, self.proxy_model
            )
        }
    }
}

/// One scoring job: a candidate at a fidelity, with the training seed.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRequest {
    pub candidate: ProtocolCandidate,
    pub fidelity: FidelityDescriptor,
    pub seed: u64,
}

impl EvaluationRequest {
    pub fn cache_key(&self) -> CacheKey {
        (
            canonical_encode(&self.candidate),
            self.fidelity.token(),
            self.seed,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalStatus {
    Ok,
    Error,
    Timeout,
}

/// Outcome of one scoring job. `fitness` is present exactly when the status
/// is ok, and is recognition accuracy in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fitness: Option<f64>,
    pub status: EvalStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
    pub eval_seconds: f64,
}

impl EvaluationResult {
    pub fn ok(fitness: f64, eval_seconds: f64) -> Self {
        Self {
            fitness: Some(fitness),
            status: EvalStatus::Ok,
            message: None,
            eval_seconds,
        }
    }

    pub fn error(message: impl Into<String>, eval_seconds: f64) -> Self {
        Self {
            fitness: None,
            status: EvalStatus::Error,
            message: Some(message.into()),
            eval_seconds,
        }
    }

    pub fn timeout(message: impl Into<String>, eval_seconds: f64) -> Self {
        Self {
            fitness: None,
            status: EvalStatus::Timeout,
            message: Some(message.into()),
            eval_seconds,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == EvalStatus::Ok
    }
}

/// A scoring binding. Implementations must be safe for concurrent callers.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, request: &EvaluationRequest) -> EvaluationResult;

    /// Short human-readable binding description for run manifests.
    fn describe(&self) -> String;
}

/// Cache key: canonical candidate encoding, fidelity token, seed.
pub type CacheKey = (String, String, u64);

/// A result plus whether it was served from the cache.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedEvaluation {
    pub result: EvaluationResult,
    pub cached: bool,
}

/// Insert-once evaluation cache. Concurrent duplicate requests coalesce:
/// one caller invokes the binding, the rest block and read its result.
/// Failures are cached too, so a deterministic crasher is not retried
/// within a run.
#[derive(Default)]
pub struct EvaluationCache {
    entries: Mutex<HashMap<CacheKey, Arc<OnceLock<EvaluationResult>>>>,
}

impl EvaluationCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn slot(&self, key: &CacheKey) -> Arc<OnceLock<EvaluationResult>> {
        let mut entries = self.entries.lock().expect("cache lock");
        entries.entry(key.clone()).or_default().clone()
    }

    /// Read-only lookup; never invokes a binding.
    pub fn peek(&self, key: &CacheKey) -> Option<EvaluationResult> {
        let entries = self.entries.lock().expect("cache lock");
        entries.get(key).and_then(|slot| slot.get().cloned())
    }

    /// Pre-seed a result (used when replaying a trace). The first insert for
    /// a key wins; later inserts are ignored.
    pub fn seed(&self, key: CacheKey, result: EvaluationResult) {
        let slot = self.slot(&key);
        let _ = slot.set(result);
    }

    /// Serve from the cache, or invoke the binding and store the result.
    pub fn evaluate(
        &self,
        binding: &dyn Evaluator,
        request: &EvaluationRequest,
    ) -> CachedEvaluation {
        let key = request.cache_key();
        let slot = self.slot(&key);
        let mut invoked = false;
        let result = slot
            .get_or_init(|| {
                invoked = true;
                binding.evaluate(request)
            })
            .clone();
        CachedEvaluation {
            result,
            cached: !invoked,
        }
    }
}

/// Score a batch of requests through the cache, preserving request order.
///
/// Duplicate keys within the batch are dispatched once: the first occurrence
/// evaluates, later occurrences are reported as cache hits. This keeps the
/// cached/spent split independent of scheduling, so traces replay
/// byte-identically at any parallelism.
pub fn evaluate_batch(
    binding: &dyn Evaluator,
    cache: &EvaluationCache,
    requests: &[EvaluationRequest],
) -> Vec<CachedEvaluation> {
    let mut first_occurrence = vec![true; requests.len()];
    {
        let mut seen: HashMap<CacheKey, usize> = HashMap::new();
        for (i, request) in requests.iter().enumerate() {
            let key = request.cache_key();
            if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(key) {
                e.insert(i);
            } else {
                first_occurrence[i] = false;
            }
        }
    }

    let firsts: Vec<usize> = (0..requests.len())
        .filter(|&i| first_occurrence[i])
        .collect();
    let first_outcomes = run_firsts(binding, cache, requests, &firsts);

    let mut out: Vec<Option<CachedEvaluation>> = vec![None; requests.len()];
    for (slot, outcome) in firsts.into_iter().zip(first_outcomes) {
        out[slot] = Some(outcome);
    }
    for (i, request) in requests.iter().enumerate() {
        if out[i].is_none() {
            let result = cache
                .peek(&request.cache_key())
                .expect("first occurrence already evaluated");
            out[i] = Some(CachedEvaluation {
                result,
                cached: true,
            });
        }
    }
    out.into_iter().map(|o| o.expect("filled")).collect()
}

#[cfg(feature = "parallel")]
fn run_firsts(
    binding: &dyn Evaluator,
    cache: &EvaluationCache,
    requests: &[EvaluationRequest],
    firsts: &[usize],
) -> Vec<CachedEvaluation> {
    use rayon::prelude::*;
    firsts
        .par_iter()
        .map(|&i| cache.evaluate(binding, &requests[i]))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_firsts(
    binding: &dyn Evaluator,
    cache: &EvaluationCache,
    requests: &[EvaluationRequest],
    firsts: &[usize],
) -> Vec<CachedEvaluation> {
    firsts
        .iter()
        .map(|&i| cache.evaluate(binding, &requests[i]))
        .collect()
}

/// Strictly sequential batch scoring, kept for benchmarking against the
/// parallel path.
pub fn evaluate_batch_sequential(
    binding: &dyn Evaluator,
    cache: &EvaluationCache,
    requests: &[EvaluationRequest],
) -> Vec<CachedEvaluation> {
    requests
        .iter()
        .map(|request| cache.evaluate(binding, request))
        .collect()
}
