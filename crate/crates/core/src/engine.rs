//! Evolutionary search over the protocol space: seeded random
//! initialization, then fixed-size generations of crossover and mutation
//! children bred from the top-k of the full scored history.
//!
//! Child construction draws from a single seeded RNG strictly in order, so a
//! trajectory is reproducible regardless of how child evaluations are
//! scheduled. Duplicate candidates are never re-evaluated: they occupy a
//! child slot but are served from the evaluation cache.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidate::{canonical_encode, repair_conditionals, validate, ProtocolCandidate};
use crate::eval::{
    evaluate_batch, EvaluationCache, EvaluationRequest, Evaluator, FidelityDescriptor,
};
use crate::space::SearchSpace;
use crate::trace::TraceRecord;

/// Evolution constants. Defaults are the paper-scale settings: 16 initial
/// candidates, 10 generations of 8 children bred from the top 4, mutating
/// each gene with probability 0.2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub m_init: usize,
    pub m: usize,
    pub t: usize,
    pub k: usize,
    pub mutation_prob: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            m_init: 16,
            m: 8,
            t: 10,
            k: 4,
            mutation_prob: 0.2,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.m_init == 0 {
            return Err(EngineError::InvalidConfig("m_init must be positive".into()));
        }
        if self.m == 0 || !self.m.is_multiple_of(2) {
            return Err(EngineError::InvalidConfig(format!(
                "m must be positive and even (children split between crossover and mutation), got {}",
                self.m
            )));
        }
        if self.k == 0 || self.k > self.m_init {
            return Err(EngineError::InvalidConfig(format!(
                "k must satisfy 1 <= k <= m_init, got k={} m_init={}",
                self.k, self.m_init
            )));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(EngineError::InvalidConfig(format!(
                "mutation_prob {} outside [0, 1]",
                self.mutation_prob
            )));
        }
        Ok(())
    }

    /// Upper bound on non-cached evaluator invocations: `m_init + t * m`.
    pub fn budget(&self) -> usize {
        self.m_init + self.t * self.m
    }
}

/// How a population member was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Init,
    Crossover,
    Mutation,
}

/// A scored population member. `fitness` is `None` when the evaluation
/// failed; such members stay in the history for budget accounting but are
/// excluded from parent selection.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub candidate: ProtocolCandidate,
    pub fitness: Option<f64>,
    pub origin: Origin,
    pub generation: u32,
    pub eval_seconds: f64,
    pub cached: bool,
}

/// Evolution bookkeeping: the append-only scored history plus budget
/// counters.
#[derive(Debug, Clone)]
pub struct SearchState {
    pub config: SearchConfig,
    pub population: Vec<ScoredCandidate>,
    pub generation: u32,
    pub evaluations_spent: usize,
    pub cache_hits: usize,
}

impl SearchState {
    fn new(config: SearchConfig) -> Self {
        Self {
            config,
            population: Vec::new(),
            generation: 0,
            evaluations_spent: 0,
            cache_hits: 0,
        }
    }

    /// Global best by fitness; ties keep the earliest inserted member.
    pub fn best(&self) -> Option<&ScoredCandidate> {
        let mut best: Option<&ScoredCandidate> = None;
        for member in &self.population {
            let Some(fitness) = member.fitness else {
                continue;
            };
            if best.is_none_or(|b| fitness > b.fitness.unwrap()) {
                best = Some(member);
            }
        }
        best
    }
}

/// Errors from the evolution engine.
#[derive(Debug, Clone, PartialEq)]
pub enum EngineError {
    InvalidConfig(String),
    InitializationFailed { candidate: String, message: String },
    NoValidParents,
    TraceDivergence { generation: u32, detail: String },
    BudgetExhausted,
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::InvalidConfig(d) => write!(f, "invalid search config: {d}"),
            EngineError::InitializationFailed { candidate, message } => write!(
                f,
                "initialization produced no valid score; last failure on {candidate}: {message}"
            ),
            EngineError::NoValidParents => {
                write!(f, "no valid-fitness members to select parents from")
            }
            EngineError::TraceDivergence { generation, detail } => write!(
                f,
                "trace does not match this seed/config at generation {generation}: {detail}"
            ),
            EngineError::BudgetExhausted => write!(f, "all evolution steps already taken"),
        }
    }
}

impl std::error::Error for EngineError {}

/// Indices of the `k` highest-fitness members over the whole history,
/// fitness descending, ties broken by earlier insertion (FIFO). Failed
/// members are skipped. Returns fewer than `k` when the history is short.
pub fn select_topk(population: &[ScoredCandidate], k: usize) -> Vec<usize> {
    let mut indices: Vec<usize> = population
        .iter()
        .enumerate()
        .filter(|(_, m)| m.fitness.is_some())
        .map(|(i, _)| i)
        .collect();
    // Stable sort keeps insertion order among equal fitnesses.
    indices.sort_by(|&a, &b| {
        population[b]
            .fitness
            .unwrap()
            .partial_cmp(&population[a].fitness.unwrap())
            .expect("fitness is finite")
    });
    indices.truncate(k);
    indices
}

/// Whether a gene was copied from parent a or parent b.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GeneSource {
    A,
    B,
}

fn crossover_impl<R: Rng + ?Sized>(
    parent_a: &ProtocolCandidate,
    parent_b: &ProtocolCandidate,
    space: &SearchSpace,
    rng: &mut R,
) -> (ProtocolCandidate, Vec<GeneSource>) {
    let mut fields = Vec::with_capacity(space.len());
    let mut sources = Vec::with_capacity(space.len());
    for domain in space.domains() {
        let from_a = rng.random_bool(0.5);
        let source = if from_a { parent_a } else { parent_b };
        let token = source
            .get(&domain.name)
            .expect("parent covers the space")
            .to_string();
        fields.push((domain.name.clone(), token));
        sources.push(if from_a { GeneSource::A } else { GeneSource::B });
    }
    let mut child = ProtocolCandidate::from_fields_unchecked(fields);
    repair_conditionals(&mut child, space, rng);
    (child, sources)
}

/// Uniform gene-wise crossover: each gene copied from either parent with
/// probability one half, then conditional choices repaired by a uniform
/// redraw from the branch selected by the inherited condition.
pub fn crossover<R: Rng + ?Sized>(
    parent_a: &ProtocolCandidate,
    parent_b: &ProtocolCandidate,
    space: &SearchSpace,
    rng: &mut R,
) -> ProtocolCandidate {
    crossover_impl(parent_a, parent_b, space, rng).0
}

fn mutate_impl<R: Rng + ?Sized>(
    parent: &ProtocolCandidate,
    space: &SearchSpace,
    prob: f64,
    rng: &mut R,
) -> (ProtocolCandidate, Vec<bool>) {
    let mut child = parent.clone();
    let mut redrawn = Vec::with_capacity(space.len());
    for (index, domain) in space.domains().iter().enumerate() {
        let fire = prob > 0.0 && rng.random_bool(prob);
        redrawn.push(fire);
        if !fire {
            continue;
        }
        // Conditions precede their dependents, so the branch resolves
        // against the possibly-already-mutated condition value.
        let condition_token = space.condition_index(index).map(|ci| {
            child
                .get(&space.domains()[ci].name)
                .expect("field present")
                .to_string()
        });
        let choices = space.choices_at(index, condition_token.as_deref());
        let pick = rng.random_range(0..choices.len());
        let token = choices[pick].clone();
        child.set(&domain.name, &token);
    }
    repair_conditionals(&mut child, space, rng);
    (child, redrawn)
}

/// Gene-wise mutation: each gene independently replaced, with probability
/// `prob`, by a uniform draw over its full domain (the redraw may reselect
/// the current value). Conditional choices invalidated by a mutated
/// condition are repaired by a uniform redraw from the new branch.
pub fn mutate<R: Rng + ?Sized>(
    parent: &ProtocolCandidate,
    space: &SearchSpace,
    prob: f64,
    rng: &mut R,
) -> ProtocolCandidate {
    mutate_impl(parent, space, prob, rng).0
}

/// Callbacks fired as the search progresses.
pub trait SearchObserver {
    /// A member was appended to the population. `replayed` marks entries
    /// restored from an existing trace rather than freshly evaluated.
    fn on_scored(&mut self, record: &ScoredCandidate, replayed: bool) {
        let _ = (record, replayed);
    }

    /// Every child of a generation failed to evaluate.
    fn on_degraded_step(&mut self, generation: u32) {
        let _ = generation;
    }
}

/// Observer that does nothing.
pub struct NoopObserver;

impl SearchObserver for NoopObserver {}

/// Final result of a search run.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: ScoredCandidate,
    pub state: SearchState,
}

/// Driver for one evolutionary run against a fixed binding and cache.
pub struct Search<'a> {
    space: &'a SearchSpace,
    binding: &'a dyn Evaluator,
    cache: &'a EvaluationCache,
    fidelity: FidelityDescriptor,
    rng: ChaCha8Rng,
    state: SearchState,
    replay: VecDeque<TraceRecord>,
}

impl<'a> Search<'a> {
    pub fn new(
        space: &'a SearchSpace,
        config: SearchConfig,
        binding: &'a dyn Evaluator,
        cache: &'a EvaluationCache,
        fidelity: FidelityDescriptor,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            space,
            binding,
            cache,
            fidelity,
            rng,
            state: SearchState::new(config),
            replay: VecDeque::new(),
        })
    }

    /// Feed an existing trace; matching evaluations replay from it instead
    /// of invoking the binding.
    pub fn with_replay(mut self, records: Vec<TraceRecord>) -> Self {
        self.replay = records.into();
        self
    }

    pub fn state(&self) -> &SearchState {
        &self.state
    }

    /// Current parent pool: top-k over the full history.
    pub fn parents(&self) -> Vec<ProtocolCandidate> {
        select_topk(&self.state.population, self.state.config.k)
            .into_iter()
            .map(|i| self.state.population[i].candidate.clone())
            .collect()
    }

    fn score_children(
        &mut self,
        children: Vec<(ProtocolCandidate, Origin)>,
        generation: u32,
        observer: &mut dyn SearchObserver,
    ) -> Result<(), EngineError> {
        debug_assert!(children
            .iter()
            .all(|(c, _)| validate(c, self.space).is_empty()));

        // Records already on disk must form a prefix of this generation's
        // children; consume them without invoking the binding.
        let mut replayed: Vec<ScoredCandidate> = Vec::new();
        let mut fresh: Vec<(ProtocolCandidate, Origin)> = Vec::new();
        for (candidate, origin) in children {
            if !fresh.is_empty() {
                fresh.push((candidate, origin));
                continue;
            }
            let Some(front) = self.replay.front() else {
                fresh.push((candidate, origin));
                continue;
            };
            let encoding = canonical_encode(&candidate);
            let restored = front.to_scored(self.space);
            if restored.generation != generation
                || restored.origin != origin
                || canonical_encode(&restored.candidate) != encoding
            {
                return Err(EngineError::TraceDivergence {
                    generation,
                    detail: format!(
                        "expected {:?} child {}, trace has {:?} generation {} {}",
                        origin,
                        encoding,
                        restored.origin,
                        restored.generation,
                        canonical_encode(&restored.candidate)
                    ),
                });
            }
            self.replay.pop_front();
            // Rebuild the cache as the original run saw it, so later
            // duplicates hit exactly as they did before.
            let key = (encoding, self.fidelity.token(), self.state.config.seed);
            let result = match restored.fitness {
                Some(fitness) => crate::eval::EvaluationResult::ok(fitness, restored.eval_seconds),
                None => crate::eval::EvaluationResult::error(
                    "failed in a previous run (replayed from trace)",
                    restored.eval_seconds,
                ),
            };
            self.cache.seed(key, result);
            replayed.push(restored);
        }

        let requests: Vec<EvaluationRequest> = fresh
            .iter()
            .map(|(candidate, _)| EvaluationRequest {
                candidate: candidate.clone(),
                fidelity: self.fidelity.clone(),
                seed: self.state.config.seed,
            })
            .collect();
        let outcomes = evaluate_batch(self.binding, self.cache, &requests);

        let mut all_failed = true;
        for member in replayed {
            if member.fitness.is_some() {
                all_failed = false;
            }
            if member.cached {
                self.state.cache_hits += 1;
            } else {
                self.state.evaluations_spent += 1;
            }
            observer.on_scored(&member, true);
            self.state.population.push(member);
        }
        for ((candidate, origin), outcome) in fresh.into_iter().zip(outcomes) {
            let member = ScoredCandidate {
                candidate,
                fitness: if outcome.result.is_ok() {
                    outcome.result.fitness
                } else {
                    None
                },
                origin,
                generation,
                eval_seconds: outcome.result.eval_seconds,
                cached: outcome.cached,
            };
            if member.fitness.is_some() {
                all_failed = false;
            }
            if member.cached {
                self.state.cache_hits += 1;
            } else {
                self.state.evaluations_spent += 1;
            }
            observer.on_scored(&member, false);
            self.state.population.push(member);
        }

        debug_assert_eq!(
            self.state.evaluations_spent + self.state.cache_hits,
            self.state.population.len()
        );
        debug_assert!(self.state.evaluations_spent <= self.state.config.budget());

        if all_failed && generation > 0 {
            observer.on_degraded_step(generation);
        }
        Ok(())
    }

    /// Sample and score the initial population.
    pub fn initialize(&mut self, observer: &mut dyn SearchObserver) -> Result<(), EngineError> {
        let children: Vec<(ProtocolCandidate, Origin)> = (0..self.state.config.m_init)
            .map(|_| (self.space.sample_uniform(&mut self.rng), Origin::Init))
            .collect();
        self.score_children(children, 0, observer)?;
        if self.state.population.iter().all(|m| m.fitness.is_none()) {
            let last = self.state.population.last().expect("m_init >= 1");
            return Err(EngineError::InitializationFailed {
                candidate: canonical_encode(&last.candidate),
                message: "every initial evaluation failed".to_string(),
            });
        }
        Ok(())
    }

    /// Breed and score one generation: m/2 crossover children from
    /// uniformly drawn parent pairs (distinct when more than one parent is
    /// available) followed by m/2 mutation children. Parents are the top-k
    /// of the history entering the step and stay fixed for the whole step.
    pub fn evolve_step(&mut self, observer: &mut dyn SearchObserver) -> Result<(), EngineError> {
        if (self.state.generation as usize) >= self.state.config.t {
            return Err(EngineError::BudgetExhausted);
        }
        let parents = self.parents();
        if parents.is_empty() {
            return Err(EngineError::NoValidParents);
        }
        let generation = self.state.generation + 1;
        let m = self.state.config.m;
        let prob = self.state.config.mutation_prob;

        // All RNG draws happen here, in a fixed order, before any
        // evaluation is dispatched.
        let mut children: Vec<(ProtocolCandidate, Origin)> = Vec::with_capacity(m);
        for _ in 0..m / 2 {
            let a = self.rng.random_range(0..parents.len());
            let b = if parents.len() == 1 {
                a
            } else {
                // Draw the second parent from the remaining k-1 slots so the
                // pair is distinct.
                let mut b = self.rng.random_range(0..parents.len() - 1);
                if b >= a {
                    b += 1;
                }
                b
            };
            let child = crossover(&parents[a], &parents[b], self.space, &mut self.rng);
            children.push((child, Origin::Crossover));
        }
        for _ in 0..m / 2 {
            let p = self.rng.random_range(0..parents.len());
            let child = mutate(&parents[p], self.space, prob, &mut self.rng);
            children.push((child, Origin::Mutation));
        }

        self.score_children(children, generation, observer)?;
        self.state.generation = generation;
        Ok(())
    }

    /// Initialize, evolve for t generations, and return the global best.
    pub fn run(mut self, observer: &mut dyn SearchObserver) -> Result<SearchOutcome, EngineError> {
        self.initialize(observer)?;
        for _ in 0..self.state.config.t {
            self.evolve_step(observer)?;
        }
        let best = self
            .state
            .best()
            .expect("initialization guarantees a valid member")
            .clone();
        Ok(SearchOutcome {
            best,
            state: self.state,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidate::{baseline_protocol, searched_protocol};
    use crate::eval::surrogate::SurrogateEvaluator;
    use crate::eval::{EvaluationResult, FidelityDescriptor};
    use crate::space::default_space;

    fn scored(fitness: Option<f64>) -> ScoredCandidate {
        ScoredCandidate {
            candidate: searched_protocol(),
            fitness,
            origin: Origin::Init,
            generation: 0,
            eval_seconds: 0.0,
            cached: false,
        }
    }

    #[test]
    fn topk_breaks_ties_by_insertion_order() {
        let population: Vec<ScoredCandidate> = [0.5, 0.9, 0.7, 0.9]
            .iter()
            .map(|&f| scored(Some(f)))
            .collect();
        assert_eq!(select_topk(&population, 2), vec![1, 3]);
        assert_eq!(select_topk(&population, 4), vec![1, 3, 2, 0]);
    }

    #[test]
    fn topk_skips_failed_members() {
        let population = vec![
            scored(None),
            scored(Some(0.4)),
            scored(None),
            scored(Some(0.6)),
        ];
        assert_eq!(select_topk(&population, 3), vec![3, 1]);
    }

    #[test]
    fn topk_matches_sort_oracle_after_a_run() {
        let space = default_space();
        let cache = EvaluationCache::new();
        let binding = SurrogateEvaluator::new(3);
        let config = SearchConfig {
            seed: 21,
            ..SearchConfig::default()
        };
        let outcome = Search::new(
            &space,
            config,
            &binding,
            &cache,
            FidelityDescriptor::proxy(),
        )
        .unwrap()
        .run(&mut NoopObserver)
        .unwrap();
        let got = select_topk(&outcome.state.population, 4);

        // Independent oracle: stable sort of (fitness desc, index asc).
        let mut oracle: Vec<(usize, f64)> = outcome
            .state
            .population
            .iter()
            .enumerate()
            .filter_map(|(i, m)| m.fitness.map(|f| (i, f)))
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let expected: Vec<usize> = oracle.into_iter().take(4).map(|(i, _)| i).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn crossover_of_identical_parents_is_the_parent() {
        let space = default_space();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let parent = searched_protocol();
        for _ in 0..100 {
            assert_eq!(crossover(&parent, &parent, &space, &mut rng), parent);
        }
    }

    #[test]
    fn crossover_repairs_learning_rate_into_the_inherited_branch() {
        let space = default_space();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = baseline_protocol(); // adadelta, lr "1"
        let b = searched_protocol(); // adam, lr "5e-4"
        for _ in 0..2000 {
            let child = crossover(&a, &b, &space, &mut rng);
            assert!(validate(&child, &space).is_empty());
        }
    }

    #[test]
    fn crossover_inherits_each_gene_fairly() {
        let space = default_space();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let all = space.enumerate();
        let a = all.first().unwrap();
        let b = all.last().unwrap();
        let n = 10_000;
        let mut from_a = vec![0usize; space.len()];
        for _ in 0..n {
            let (_, sources) = crossover_impl(a, b, &space, &mut rng);
            for (gene, source) in sources.iter().enumerate() {
                if *source == GeneSource::A {
                    from_a[gene] += 1;
                }
            }
        }
        for (gene, count) in from_a.iter().enumerate() {
            let freq = *count as f64 / n as f64;
            assert!(
                (0.47..=0.53).contains(&freq),
                "gene {gene} inherited from a with frequency {freq}"
            );
        }
    }

    #[test]
    fn mutation_with_zero_probability_is_identity() {
        let space = default_space();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let parent = searched_protocol();
        for _ in 0..100 {
            assert_eq!(mutate(&parent, &space, 0.0, &mut rng), parent);
        }
    }

    #[test]
    fn mutation_over_singleton_domains_is_identity() {
        let space = SearchSpace::new(vec![
            crate::space::HyperParameterDomain::categorical("x", &["only"]),
            crate::space::HyperParameterDomain::categorical("y", &["one"]),
        ])
        .unwrap();
        let parent = ProtocolCandidate::from_fields(vec![
            ("x".to_string(), "only".to_string()),
            ("y".to_string(), "one".to_string()),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            assert_eq!(mutate(&parent, &space, 1.0, &mut rng), parent);
        }
    }

    #[test]
    fn mutation_draw_frequency_tracks_the_probability() {
        let space = default_space();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let parent = searched_protocol();
        let n = 100_000;
        let mut fired = vec![0usize; space.len()];
        for _ in 0..n {
            let (child, redrawn) = mutate_impl(&parent, &space, 0.2, &mut rng);
            assert!(validate(&child, &space).is_empty());
            for (gene, fire) in redrawn.iter().enumerate() {
                if *fire {
                    fired[gene] += 1;
                }
            }
        }
        for (gene, count) in fired.iter().enumerate() {
            let freq = *count as f64 / n as f64;
            assert!(
                (0.19..=0.21).contains(&freq),
                "gene {gene} redrawn with frequency {freq}"
            );
        }
    }

    #[test]
    fn initialize_scores_m_init_members() {
        let space = default_space();
        let cache = EvaluationCache::new();
        let binding = SurrogateEvaluator::new(7);
        let mut search = Search::new(
            &space,
            SearchConfig::default(),
            &binding,
            &cache,
            FidelityDescriptor::proxy(),
        )
        .unwrap();
        search.initialize(&mut NoopObserver).unwrap();
        assert_eq!(search.state().population.len(), 16);
        assert_eq!(search.state().generation, 0);
        assert!(search
            .state()
            .population
            .iter()
            .all(|m| m.origin == Origin::Init));
    }

    #[test]
    fn m_init_one_has_a_single_incumbent() {
        let space = default_space();
        let cache = EvaluationCache::new();
        let binding = SurrogateEvaluator::new(7);
        let config = SearchConfig {
            m_init: 1,
            k: 1,
            ..SearchConfig::default()
        };
        let mut search = Search::new(
            &space,
            config,
            &binding,
            &cache,
            FidelityDescriptor::proxy(),
        )
        .unwrap();
        search.initialize(&mut NoopObserver).unwrap();
        assert_eq!(search.state().population.len(), 1);
        assert_eq!(
            search.state().best().unwrap().candidate,
            search.state().population[0].candidate
        );
    }

    #[test]
    fn one_step_adds_m_children() {
        let space = default_space();
        let cache = EvaluationCache::new();
        let binding = SurrogateEvaluator::new(7);
        let mut search = Search::new(
            &space,
            SearchConfig::default(),
            &binding,
            &cache,
            FidelityDescriptor::proxy(),
        )
        .unwrap();
        search.initialize(&mut NoopObserver).unwrap();
        search.evolve_step(&mut NoopObserver).unwrap();
        assert_eq!(search.state().population.len(), 24);
        assert_eq!(search.state().generation, 1);
        let crossed = search
            .state()
            .population
            .iter()
            .filter(|m| m.origin == Origin::Crossover)
            .count();
        assert_eq!(crossed, 4);
    }

    #[test]
    fn full_run_composition_and_budget() {
        let space = default_space();
        let cache = EvaluationCache::new();
        let binding = SurrogateEvaluator::new(9);
        let config = SearchConfig {
            seed: 5,
            ..SearchConfig::default()
        };
        let outcome = Search::new(
            &space,
            config,
            &binding,
            &cache,
            FidelityDescriptor::proxy(),
        )
        .unwrap()
        .run(&mut NoopObserver)
        .unwrap();
        let state = &outcome.state;
        assert_eq!(state.population.len(), 96);
        assert_eq!(state.evaluations_spent + state.cache_hits, 96);
        assert!(state.evaluations_spent <= 96);
        let by_origin = |o: Origin| state.population.iter().filter(|m| m.origin == o).count();
        assert_eq!(by_origin(Origin::Init), 16);
        assert_eq!(by_origin(Origin::Crossover), 40);
        assert_eq!(by_origin(Origin::Mutation), 40);
        assert!(state
            .population
            .iter()
            .all(|m| validate(&m.candidate, &space).is_empty()));
    }

    #[test]
    fn same_seed_reproduces_the_whole_trajectory() {
        let space = default_space();
        let config = SearchConfig {
            seed: 77,
            ..SearchConfig::default()
        };
        let run = || {
            let cache = EvaluationCache::new();
            let binding = SurrogateEvaluator::new(7);
            Search::new(
                &space,
                config.clone(),
                &binding,
                &cache,
                FidelityDescriptor::proxy(),
            )
            .unwrap()
            .run(&mut NoopObserver)
            .unwrap()
        };
        let first = run();
        let second = run();
        assert_eq!(first.state.population, second.state.population);
        assert_eq!(first.best, second.best);
    }

    #[test]
    fn incumbent_best_is_non_decreasing() {
        let space = default_space();
        let cache = EvaluationCache::new();
        let binding = SurrogateEvaluator::new(13);
        let mut search = Search::new(
            &space,
            SearchConfig {
                seed: 1,
                ..SearchConfig::default()
            },
            &binding,
            &cache,
            FidelityDescriptor::proxy(),
        )
        .unwrap();
        search.initialize(&mut NoopObserver).unwrap();
        let mut best = search.state().best().unwrap().fitness.unwrap();
        for _ in 0..10 {
            search.evolve_step(&mut NoopObserver).unwrap();
            let now = search.state().best().unwrap().fitness.unwrap();
            assert!(now >= best);
            best = now;
        }
        assert!(search.evolve_step(&mut NoopObserver).is_err());
    }

    #[test]
    fn t_zero_reduces_to_random_search_of_m_init() {
        let space = default_space();
        let cache = EvaluationCache::new();
        let binding = SurrogateEvaluator::new(7);
        let config = SearchConfig {
            t: 0,
            seed: 4,
            ..SearchConfig::default()
        };
        let outcome = Search::new(
            &space,
            config,
            &binding,
            &cache,
            FidelityDescriptor::proxy(),
        )
        .unwrap()
        .run(&mut NoopObserver)
        .unwrap();
        assert_eq!(outcome.state.population.len(), 16);
        let oracle = outcome
            .state
            .population
            .iter()
            .map(|m| m.fitness.unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(outcome.best.fitness.unwrap(), oracle);
    }

    #[test]
    fn k_one_crossover_children_equal_the_single_parent() {
        let space = default_space();
        let cache = EvaluationCache::new();
        let binding = SurrogateEvaluator::new(7);
        let config = SearchConfig {
            m_init: 1,
            k: 1,
            t: 1,
            seed: 9,
            ..SearchConfig::default()
        };
        let outcome = Search::new(
            &space,
            config,
            &binding,
            &cache,
            FidelityDescriptor::proxy(),
        )
        .unwrap()
        .run(&mut NoopObserver)
        .unwrap();
        let parent = outcome.state.population[0].candidate.clone();
        for member in outcome
            .state
            .population
            .iter()
            .filter(|m| m.origin == Origin::Crossover)
        {
            assert_eq!(member.candidate, parent);
        }
    }

    #[test]
    fn failing_binding_aborts_initialization() {
        struct AlwaysFails;
        impl Evaluator for AlwaysFails {
            fn evaluate(&self, _r: &EvaluationRequest) -> EvaluationResult {
                EvaluationResult::error("no trainer", 0.0)
            }
            fn describe(&self) -> String {
                "always-fails".to_string()
            }
        }
        let space = default_space();
        let cache = EvaluationCache::new();
        let outcome = Search::new(
            &space,
            SearchConfig::default(),
            &AlwaysFails,
            &cache,
            FidelityDescriptor::proxy(),
        )
        .unwrap()
        .run(&mut NoopObserver);
        assert!(matches!(
            outcome,
            Err(EngineError::InitializationFailed { .. })
        ));
    }

    #[test]
    fn all_failed_generations_are_reported_as_degraded() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        // Succeeds for the first 16 distinct candidates (the initial
        // population), then fails everything, so any generation whose
        // children are all fresh degrades.
        struct InitOnly(AtomicUsize);
        impl Evaluator for InitOnly {
            fn evaluate(&self, _r: &EvaluationRequest) -> EvaluationResult {
                if self.0.fetch_add(1, Ordering::SeqCst) < 16 {
                    EvaluationResult::ok(0.5, 0.0)
                } else {
                    EvaluationResult::error("trainer gone", 0.0)
                }
            }
            fn describe(&self) -> String {
                "init-only".to_string()
            }
        }
        struct DegradedLog(Vec<u32>);
        impl SearchObserver for DegradedLog {
            fn on_degraded_step(&mut self, generation: u32) {
                self.0.push(generation);
            }
        }
        let space = default_space();
        let cache = EvaluationCache::new();
        let binding = InitOnly(AtomicUsize::new(0));
        let config = SearchConfig {
            seed: 6,
            ..SearchConfig::default()
        };
        let mut log = DegradedLog(Vec::new());
        let outcome = Search::new(
            &space,
            config,
            &binding,
            &cache,
            FidelityDescriptor::proxy(),
        )
        .unwrap()
        .run(&mut log)
        .unwrap();
        assert!(!log.0.is_empty(), "no generation degraded");
        assert_eq!(outcome.state.population.len(), 96);
        // Failed members never become parents: the best is an init member.
        assert_eq!(outcome.best.origin, Origin::Init);
        assert!(
            outcome
                .state
                .population
                .iter()
                .filter(|m| m.fitness.is_none())
                .count()
                > 0
        );
    }

    #[test]
    fn duplicate_children_are_cache_hits_not_reevaluations() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        struct Counting(AtomicUsize);
        impl Evaluator for Counting {
            fn evaluate(&self, request: &EvaluationRequest) -> EvaluationResult {
                self.0.fetch_add(1, Ordering::SeqCst);
                EvaluationResult::ok(
                    crate::eval::surrogate::surrogate_score(&request.candidate, 7),
                    0.0,
                )
            }
            fn describe(&self) -> String {
                "counting-surrogate".to_string()
            }
        }
        let space = default_space();
        let cache = EvaluationCache::new();
        let binding = Counting(AtomicUsize::new(0));
        let config = SearchConfig {
            seed: 2,
            ..SearchConfig::default()
        };
        let outcome = Search::new(
            &space,
            config,
            &binding,
            &cache,
            FidelityDescriptor::proxy(),
        )
        .unwrap()
        .run(&mut NoopObserver)
        .unwrap();
        assert_eq!(
            binding.0.load(Ordering::SeqCst),
            outcome.state.evaluations_spent
        );
        assert_eq!(
            outcome.state.evaluations_spent + outcome.state.cache_hits,
            96
        );
        // Distinct encodings must equal the number of actual invocations.
        let mut encodings: Vec<String> = outcome
            .state
            .population
            .iter()
            .map(|m| canonical_encode(&m.candidate))
            .collect();
        encodings.sort();
        encodings.dedup();
        assert_eq!(encodings.len(), outcome.state.evaluations_spent);
    }
}
