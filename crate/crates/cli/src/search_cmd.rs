//! `search run`, `search resume`, `baseline random`, and `eval one`.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use protosearch_core::analysis::{random_search, write_curve_csv, AnalysisError};
use protosearch_core::candidate::{canonical_encode, CandidateJson};
use protosearch_core::engine::{
    EngineError, ScoredCandidate, Search, SearchConfig, SearchObserver, SearchOutcome,
};
use protosearch_core::eval::{EvaluationCache, EvaluationRequest, Evaluator, FidelityDescriptor};
use protosearch_core::space::SearchSpace;
use protosearch_core::trace::{append_record, open_for_append, read_trace_file, TraceRecord};

use crate::support::{
    data_err, load_candidate, load_space, now_rfc3339, parse_fidelity, write_json, CliError,
    CliResult, EvaluatorArgs, RandomConfig, RunManifest,
};

fn engine_err(e: EngineError) -> CliError {
    match e {
        EngineError::InvalidConfig(m) => CliError::Usage(m),
        EngineError::InitializationFailed { .. } | EngineError::NoValidParents => {
            CliError::Evaluator(e.to_string())
        }
        EngineError::TraceDivergence { .. } | EngineError::BudgetExhausted => {
            CliError::Data(e.to_string())
        }
    }
}

fn analysis_err(e: AnalysisError) -> CliError {
    match e {
        AnalysisError::UnknownHyperparameter(_) | AnalysisError::ZeroSamples => {
            CliError::Usage(e.to_string())
        }
        AnalysisError::AllFailed => CliError::Evaluator(e.to_string()),
        AnalysisError::InvalidCandidate(_) => CliError::Data(e.to_string()),
    }
}

/// Streams fresh population entries to the trace file.
struct TraceWriter {
    file: File,
    io_error: Option<io::Error>,
    appended: usize,
    replayed: usize,
}

impl TraceWriter {
    fn new(file: File) -> Self {
        Self {
            file,
            io_error: None,
            appended: 0,
            replayed: 0,
        }
    }

    fn check(&mut self) -> CliResult<()> {
        match self.io_error.take() {
            Some(e) => Err(CliError::Data(format!("trace write failed: {e}"))),
            None => Ok(()),
        }
    }
}

impl SearchObserver for TraceWriter {
    fn on_scored(&mut self, record: &ScoredCandidate, replayed: bool) {
        if replayed {
            self.replayed += 1;
            return;
        }
        self.appended += 1;
        if self.io_error.is_some() {
            return;
        }
        let record = TraceRecord::from_scored(record).expect("engine candidates are standard");
        if let Err(e) = append_record(&mut self.file, &record).and_then(|_| self.file.flush()) {
            self.io_error = Some(e);
        }
    }

    fn on_degraded_step(&mut self, generation: u32) {
        eprintln!("warning: every child of generation {generation} failed to evaluate");
    }
}

#[derive(Serialize)]
struct BestEntry {
    key: String,
    candidate: CandidateJson,
    fitness: f64,
    origin: protosearch_core::engine::Origin,
    generation: u32,
}

impl BestEntry {
    fn from_scored(best: &ScoredCandidate) -> Self {
        Self {
            key: canonical_encode(&best.candidate),
            candidate: CandidateJson::from_candidate(&best.candidate)
                .expect("engine candidates are standard"),
            fitness: best.fitness.expect("best has a fitness"),
            origin: best.origin,
            generation: best.generation,
        }
    }
}

#[derive(Serialize)]
struct SearchReport {
    best: BestEntry,
    generations: u32,
    population: usize,
    evaluations_spent: usize,
    cache_hits: usize,
    wall_seconds: f64,
}

pub struct RunParams {
    pub seed: u64,
    pub evaluator: EvaluatorArgs,
    pub fidelity: String,
    pub m_init: usize,
    pub m: usize,
    pub t: usize,
    pub k: usize,
    pub p: f64,
    pub space: Option<PathBuf>,
    pub out: PathBuf,
    pub manifest_only: bool,
}

fn prepare_out_dir(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))
}

fn drive_search(
    space: &SearchSpace,
    config: SearchConfig,
    binding: &dyn Evaluator,
    fidelity: FidelityDescriptor,
    replay: Vec<TraceRecord>,
    writer: &mut TraceWriter,
) -> CliResult<SearchOutcome> {
    let cache = EvaluationCache::new();
    let mut search = Search::new(space, config.clone(), binding, &cache, fidelity)
        .map_err(engine_err)?
        .with_replay(replay);
    search.initialize(writer).map_err(engine_err)?;
    writer.check()?;
    eprintln!(
        "generation 0: population {}, best {:.5}",
        search.state().population.len(),
        search
            .state()
            .best()
            .map(|b| b.fitness.unwrap())
            .unwrap_or(f64::NAN)
    );
    for _ in 0..config.t {
        search.evolve_step(writer).map_err(engine_err)?;
        writer.check()?;
        let state = search.state();
        eprintln!(
            "generation {}: population {}, best {:.5}, spent {}, cache hits {}",
            state.generation,
            state.population.len(),
            state.best().map(|b| b.fitness.unwrap()).unwrap_or(f64::NAN),
            state.evaluations_spent,
            state.cache_hits
        );
    }
    let state = search.state().clone();
    let best = state.best().expect("run keeps a valid best").clone();
    Ok(SearchOutcome { best, state })
}

fn finish_search_run(
    mut manifest: RunManifest,
    outcome: &SearchOutcome,
    started: Instant,
) -> CliResult<()> {
    let report = SearchReport {
        best: BestEntry::from_scored(&outcome.best),
        generations: outcome.state.generation,
        population: outcome.state.population.len(),
        evaluations_spent: outcome.state.evaluations_spent,
        cache_hits: outcome.state.cache_hits,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&manifest.artifacts.report, &report)?;
    manifest.finished_at = Some(now_rfc3339());
    manifest.write()?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(())
}

pub fn search_run(params: RunParams, command_line: Vec<String>) -> CliResult<()> {
    let started = Instant::now();
    let fidelity = parse_fidelity(&params.fidelity)?;
    let space = load_space(params.space.as_deref())?;
    let spec = params.evaluator.resolve()?;
    let binding = spec.build()?;
    let config = SearchConfig {
        m_init: params.m_init,
        m: params.m,
        t: params.t,
        k: params.k,
        mutation_prob: params.p,
        seed: params.seed,
    };
    config.validate().map_err(engine_err)?;

    prepare_out_dir(&params.out)?;
    let artifacts = RunManifest::paths(&params.out);
    if artifacts.trace.exists()
        && std::fs::metadata(&artifacts.trace)
            .map(|m| m.len())
            .unwrap_or(0)
            > 0
    {
        return Err(CliError::Data(format!(
            "{} already holds a trace; use `search resume --out DIR` to continue it",
            params.out.display()
        )));
    }

    let manifest = RunManifest {
        command: "search run".to_string(),
        command_line,
        space_file: params.space.clone(),
        search: Some(config.clone()),
        random: None,
        evaluator: spec,
        fidelity: fidelity.token(),
        started_at: now_rfc3339(),
        finished_at: None,
        artifacts: artifacts.clone(),
    };
    manifest.write()?;

    let trace_file = open_for_append(&artifacts.trace, 0).map_err(data_err)?;
    if params.manifest_only {
        write_json(
            &artifacts.report,
            &serde_json::json!({ "status": "manifest-only" }),
        )?;
        return Ok(());
    }

    let mut writer = TraceWriter::new(trace_file);
    let outcome = drive_search(
        &space,
        config,
        binding.as_ref(),
        fidelity,
        Vec::new(),
        &mut writer,
    )?;
    finish_search_run(manifest, &outcome, started)
}

pub fn search_resume(out: &Path) -> CliResult<()> {
    let started = Instant::now();
    let manifest = RunManifest::read(out)?;
    let Some(config) = manifest.search.clone() else {
        return Err(CliError::Data(format!(
            "{} was not produced by `search run`",
            out.display()
        )));
    };
    let fidelity = parse_fidelity(&manifest.fidelity)?;
    let space = load_space(manifest.space_file.as_deref())?;
    let binding = manifest.evaluator.build()?;

    let (records, valid_bytes) = read_trace_file(&manifest.artifacts.trace).map_err(data_err)?;
    let trace_file = open_for_append(&manifest.artifacts.trace, valid_bytes).map_err(data_err)?;
    eprintln!(
        "resuming {}: {} logged evaluations replay",
        out.display(),
        records.len()
    );

    let mut writer = TraceWriter::new(trace_file);
    let outcome = drive_search(
        &space,
        config,
        binding.as_ref(),
        fidelity,
        records,
        &mut writer,
    )?;
    finish_search_run(manifest, &outcome, started)
}

pub struct RandomParams {
    pub n: usize,
    pub seed: u64,
    pub evaluator: EvaluatorArgs,
    pub fidelity: String,
    pub space: Option<PathBuf>,
    pub out: PathBuf,
    pub manifest_only: bool,
}

#[derive(Serialize)]
struct RandomReport {
    best: BestEntry,
    n: usize,
    evaluations_spent: usize,
    cache_hits: usize,
    wall_seconds: f64,
}

pub fn baseline_random(params: RandomParams, command_line: Vec<String>) -> CliResult<()> {
    let started = Instant::now();
    let fidelity = parse_fidelity(&params.fidelity)?;
    let space = load_space(params.space.as_deref())?;
    let spec = params.evaluator.resolve()?;
    let binding = spec.build()?;

    prepare_out_dir(&params.out)?;
    let artifacts = RunManifest::paths(&params.out);
    let manifest = RunManifest {
        command: "baseline random".to_string(),
        command_line,
        space_file: params.space.clone(),
        search: None,
        random: Some(RandomConfig {
            n: params.n,
            seed: params.seed,
        }),
        evaluator: spec,
        fidelity: fidelity.token(),
        started_at: now_rfc3339(),
        finished_at: None,
        artifacts: artifacts.clone(),
    };
    manifest.write()?;
    let mut trace_file = open_for_append(&artifacts.trace, 0).map_err(data_err)?;
    if params.manifest_only {
        write_json(
            &artifacts.report,
            &serde_json::json!({ "status": "manifest-only" }),
        )?;
        return Ok(());
    }

    let cache = EvaluationCache::new();
    let outcome = random_search(
        &space,
        params.n,
        binding.as_ref(),
        &cache,
        &fidelity,
        params.seed,
    )
    .map_err(analysis_err)?;
    for member in &outcome.members {
        let record = TraceRecord::from_scored(member).expect("sampled candidates are standard");
        append_record(&mut trace_file, &record).map_err(data_err)?;
    }

    let curve_path = params.out.join("curve.csv");
    let mut curve_file = File::create(&curve_path).map_err(data_err)?;
    write_curve_csv(&outcome.curve, &mut curve_file).map_err(data_err)?;

    let report = RandomReport {
        best: BestEntry::from_scored(&outcome.best),
        n: params.n,
        evaluations_spent: outcome.evaluations_spent,
        cache_hits: outcome.cache_hits,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&artifacts.report, &report)?;
    let mut manifest = manifest;
    manifest.finished_at = Some(now_rfc3339());
    manifest.write()?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(())
}

pub struct EvalOneParams {
    pub candidate: String,
    pub evaluator: EvaluatorArgs,
    pub fidelity: String,
    pub seed: u64,
    pub space: Option<PathBuf>,
}

pub fn eval_one(params: EvalOneParams) -> CliResult<()> {
    let fidelity = parse_fidelity(&params.fidelity)?;
    let space = load_space(params.space.as_deref())?;
    let candidate = load_candidate(&params.candidate, &space)?;
    let spec = params.evaluator.resolve()?;
    let binding = spec.build()?;

    let cache = EvaluationCache::new();
    let request = EvaluationRequest {
        candidate,
        fidelity,
        seed: params.seed,
    };
    let outcome = cache.evaluate(binding.as_ref(), &request);
    println!(
        "{}",
        serde_json::to_string_pretty(&outcome.result).expect("result serializes")
    );
    if outcome.result.is_ok() {
        Ok(())
    } else {
        Err(CliError::Evaluator(
            outcome
                .result
                .message
                .unwrap_or_else(|| "evaluation failed".to_string()),
        ))
    }
}
