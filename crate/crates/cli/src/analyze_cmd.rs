//! `analyze tau|sweep|ablate`, `lr-table`, and `space enumerate`.

use std::io::Write;
use std::path::{Path, PathBuf};

use protosearch_core::analysis::{
    ablation_variants, kendall_tau_variant, sweep_hp, write_sweep_csv, AnalysisError,
    KendallVariant,
};
use protosearch_core::candidate::canonical_encode;
use protosearch_core::eval::{evaluate_batch, EvaluationCache, EvaluationRequest};
use protosearch_core::runtime::LRScheduleSpec;

use crate::support::{
    data_err, load_candidate, load_space, parse_fidelity, CliError, CliResult, EvaluatorArgs,
};

fn analysis_err(e: AnalysisError) -> CliError {
    match e {
        AnalysisError::UnknownHyperparameter(_) | AnalysisError::ZeroSamples => {
            CliError::Usage(e.to_string())
        }
        AnalysisError::AllFailed => CliError::Evaluator(e.to_string()),
        AnalysisError::InvalidCandidate(_) => CliError::Data(e.to_string()),
    }
}

/// Read one score per line; when both flags name the same file, read
/// `a,b` column pairs instead.
fn read_score_vectors(a_path: &Path, b_path: &Path) -> CliResult<(Vec<f64>, Vec<f64>)> {
    if a_path == b_path {
        let text = std::fs::read_to_string(a_path)
            .map_err(|e| CliError::Data(format!("{}: {e}", a_path.display())))?;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let Some((left, right)) = line.split_once(',') else {
                return Err(CliError::Data(format!(
                    "{} line {}: expected two comma-separated scores",
                    a_path.display(),
                    i + 1
                )));
            };
            a.push(parse_score(left, a_path, i)?);
            b.push(parse_score(right, a_path, i)?);
        }
        return Ok((a, b));
    }
    Ok((read_scores(a_path)?, read_scores(b_path)?))
}

fn parse_score(text: &str, path: &Path, line: usize) -> CliResult<f64> {
    text.trim().parse::<f64>().map_err(|_| {
        CliError::Data(format!(
            "{} line {}: {text:?} is not a number",
            path.display(),
            line + 1
        ))
    })
}

fn read_scores(path: &Path) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| parse_score(line, path, i))
        .collect()
}

pub fn analyze_tau(a: &Path, b: &Path, variant: &str) -> CliResult<()> {
    let variant = match variant {
        "b" => KendallVariant::B,
        "a" => KendallVariant::A,
        other => {
            return Err(CliError::Usage(format!(
                "unknown tau variant {other:?}; use b or a"
            )))
        }
    };
    let (scores_a, scores_b) = read_score_vectors(a, b)?;
    let report = kendall_tau_variant(&scores_a, &scores_b, variant).map_err(data_err)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(())
}

pub struct SweepParams {
    pub hp: String,
    pub base: String,
    pub evaluator: EvaluatorArgs,
    pub fidelity: String,
    pub seed: u64,
    pub space: Option<PathBuf>,
}

pub fn analyze_sweep(params: SweepParams) -> CliResult<()> {
    let fidelity = parse_fidelity(&params.fidelity)?;
    let space = load_space(params.space.as_deref())?;
    let base = load_candidate(&params.base, &space)?;
    let binding = params.evaluator.resolve()?.build()?;

    let cache = EvaluationCache::new();
    let rows = sweep_hp(
        &base,
        &params.hp,
        &space,
        binding.as_ref(),
        &cache,
        &fidelity,
        params.seed,
    )
    .map_err(analysis_err)?;
    let mut stdout = std::io::stdout().lock();
    write_sweep_csv(&rows, &mut stdout).map_err(data_err)?;
    Ok(())
}

pub struct AblateParams {
    pub base: String,
    pub target: String,
    pub groups: String,
    pub evaluator: EvaluatorArgs,
    pub fidelity: String,
    pub seed: u64,
    pub space: Option<PathBuf>,
}

/// Group spec: `;`-separated segments, each `base`, `full`, or a
/// comma-separated field list.
fn parse_groups(spec: &str, all_fields: &[String]) -> CliResult<Vec<(String, Vec<String>)>> {
    let mut groups = Vec::new();
    for segment in spec.split(';') {
        let segment = segment.trim();
        if segment.is_empty() {
            return Err(CliError::Usage(format!(
                "empty group in {spec:?}; use `base` for the no-change group"
            )));
        }
        let fields = match segment {
            "base" => Vec::new(),
            "full" => all_fields.to_vec(),
            list => list.split(',').map(|f| f.trim().to_string()).collect(),
        };
        groups.push((segment.to_string(), fields));
    }
    Ok(groups)
}

pub fn analyze_ablate(params: AblateParams) -> CliResult<()> {
    let space = load_space(params.space.as_deref())?;
    let base = load_candidate(&params.base, &space)?;
    let target = load_candidate(&params.target, &space)?;
    let field_names: Vec<String> = space.domains().iter().map(|d| d.name.clone()).collect();
    let labeled = parse_groups(&params.groups, &field_names)?;
    let groups: Vec<Vec<String>> = labeled.iter().map(|(_, fields)| fields.clone()).collect();
    let variants = ablation_variants(&base, &target, &groups, &space).map_err(analysis_err)?;

    // Scoring is optional: only explicit evaluator flags trigger it.
    let fitnesses: Vec<Option<f64>> = match params.evaluator.resolve_optional() {
        None => vec![None; variants.len()],
        Some(spec) => {
            let binding = spec.build()?;
            let fidelity = parse_fidelity(&params.fidelity)?;
            let cache = EvaluationCache::new();
            let requests: Vec<EvaluationRequest> = variants
                .iter()
                .map(|candidate| EvaluationRequest {
                    candidate: candidate.clone(),
                    fidelity: fidelity.clone(),
                    seed: params.seed,
                })
                .collect();
            evaluate_batch(binding.as_ref(), &cache, &requests)
                .into_iter()
                .map(|o| {
                    if o.result.is_ok() {
                        o.result.fitness
                    } else {
                        None
                    }
                })
                .collect()
        }
    };

    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "group,key,fitness").map_err(data_err)?;
    for ((label, _), (variant, fitness)) in labeled.iter().zip(variants.iter().zip(fitnesses)) {
        let fitness = fitness.map(|f| f.to_string()).unwrap_or_default();
        writeln!(
            stdout,
            "{},{},{}",
            label,
            canonical_encode(variant),
            fitness
        )
        .map_err(data_err)?;
    }
    Ok(())
}

pub fn lr_table(schedule: &str, lr: f64, total: u64) -> CliResult<()> {
    let spec = LRScheduleSpec::from_token(schedule, lr, total)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut stdout = std::io::stdout().lock();
    protosearch_core::runtime::write_lr_table(&spec, &mut stdout).map_err(data_err)?;
    Ok(())
}

pub fn space_enumerate(space_file: Option<&Path>, count_only: bool) -> CliResult<()> {
    let space = load_space(space_file)?;
    if count_only {
        println!("{}", space.cardinality());
        return Ok(());
    }
    let mut stdout = std::io::stdout().lock();
    for candidate in space.enumerate() {
        writeln!(stdout, "{}", canonical_encode(&candidate)).map_err(data_err)?;
    }
    Ok(())
}
