//! Training-protocol search for scene text recognition.
//!
//! The crate covers the full loop: a conditional categorical search space
//! over eight training hyperparameters, an evolutionary optimizer with
//! proxy-fidelity evaluation and an insert-once evaluation cache, pluggable
//! evaluator bindings (external trainer process, replay table, deterministic
//! surrogate), deterministic protocol semantics for trainers (LR schedules,
//! batch mixing, label processing), and the analysis suite used to validate
//! search behavior (Kendall rank correlation, budget-matched random search,
//! sweeps, ablations).
//!
//! Batch evaluation and exhaustive scoring are data-parallel via rayon when
//! the default `parallel` feature is on; disabling it falls back to
//! sequential loops with identical results.

pub mod analysis;
pub mod candidate;
pub mod engine;
pub mod eval;
pub mod runtime;
pub mod space;
pub mod trace;

pub use candidate::{
    baseline_protocol, canonical_decode, canonical_encode, searched_protocol, validate,
    CandidateJson, ProtocolCandidate, StandardCandidateJson, Violation,
};
pub use engine::{
    crossover, mutate, select_topk, Origin, ScoredCandidate, Search, SearchConfig, SearchObserver,
    SearchOutcome, SearchState,
};
pub use eval::{
    external::ExternalEvaluator, replay::ReplayEvaluator, surrogate::SurrogateEvaluator,
    EvaluationCache, EvaluationRequest, EvaluationResult, Evaluator, FidelityDescriptor,
};
pub use space::{default_space, DomainKind, HyperParameterDomain, SearchSpace};
