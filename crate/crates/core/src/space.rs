//! Hyperparameter domains and the training-protocol search space.
//!
//! A [`SearchSpace`] is an ordered list of named domains. Domains are
//! categorical token lists, stepped numeric ranges (tokenized at four
//! decimals), or conditional branch maps keyed by the value of an earlier
//! domain. The default space covers the eight training-protocol
//! hyperparameters and enumerates to exactly 9,216 candidates.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::candidate::ProtocolCandidate;

/// Inclusive numeric grid: `low`, `low + step`, ... up to `high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteppedRange {
    pub low: f64,
    pub high: f64,
    pub step: f64,
}

impl SteppedRange {
    /// Number of grid points, endpoints inclusive.
    pub fn len(&self) -> usize {
        ((self.high - self.low) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid values in ascending order.
    pub fn values(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.low + i as f64 * self.step)
            .collect()
    }

    /// True when `value` sits on the grid (within 1e-9).
    pub fn contains(&self, value: f64) -> bool {
        let k = ((value - self.low) / self.step).round();
        if k < 0.0 || k as usize >= self.len() {
            return false;
        }
        (value - (self.low + k * self.step)).abs() <= 1e-9
    }
}

/// The three domain shapes a hyperparameter can take.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DomainKind {
    /// Fixed ordered token list.
    Categorical { choices: Vec<String> },
    /// Numeric grid; tokens are the values rendered at four decimals.
    SteppedRange { range: SteppedRange },
    /// Choice list depends on the value of an earlier hyperparameter.
    Conditional {
        condition: String,
        branches: BTreeMap<String, Vec<String>>,
    },
}

/// One named hyperparameter and its domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParameterDomain {
    pub name: String,
    #[serde(flatten)]
    pub kind: DomainKind,
}

impl HyperParameterDomain {
    pub fn categorical(name: &str, choices: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: DomainKind::Categorical {
                choices: choices.iter().map(|c| c.to_string()).collect(),
            },
        }
    }

    pub fn stepped_range(name: &str, low: f64, high: f64, step: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: DomainKind::SteppedRange {
                range: SteppedRange { low, high, step },
            },
        }
    }

    pub fn conditional(name: &str, condition: &str, branches: &[(&str, &[&str])]) -> Self {
        Self {
            name: name.to_string(),
            kind: DomainKind::Conditional {
                condition: condition.to_string(),
                branches: branches
                    .iter()
                    .map(|(k, v)| (k.to_string(), v.iter().map(|c| c.to_string()).collect()))
                    .collect(),
            },
        }
    }
}

/// Errors raised while building or loading a search space.
#[derive(Debug, Clone, PartialEq)]
pub enum SpaceError {
    NoDomains,
    DuplicateName(String),
    EmptyDomain(String),
    DuplicateToken { domain: String, token: String },
    BadToken { domain: String, token: String },
    BadRange { domain: String, detail: String },
    UnknownCondition { domain: String, condition: String },
    ConditionNotBefore { domain: String, condition: String },
    ConditionConditional { domain: String, condition: String },
    BranchMismatch { domain: String, detail: String },
    Io(String),
    Parse(String),
}

impl fmt::Display for SpaceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceError::NoDomains => write!(f, "search space has no hyperparameters"),
            SpaceError::DuplicateName(n) => write!(f, "duplicate hyperparameter name {n:?}"),
            SpaceError::EmptyDomain(n) => write!(f, "hyperparameter {n:?} has no choices"),
            SpaceError::DuplicateToken { domain, token } => {
                write!(f, "hyperparameter {domain:?} repeats choice token {token:?}")
            }
            SpaceError::BadToken { domain, token } => write!(
                f,
                "hyperparameter {domain:?} has malformed token {token:?} (empty or contains ';', '=', or newline)"
            ),
            SpaceError::BadRange { domain, detail } => {
                write!(f, "hyperparameter {domain:?} has a bad range: {detail}")
            }
            SpaceError::UnknownCondition { domain, condition } => write!(
                f,
                "hyperparameter {domain:?} is conditioned on unknown hyperparameter {condition:?}"
            ),
            SpaceError::ConditionNotBefore { domain, condition } => write!(
                f,
                "condition {condition:?} must be declared before dependent hyperparameter {domain:?}"
            ),
            SpaceError::ConditionConditional { domain, condition } => write!(
                f,
                "hyperparameter {domain:?} is conditioned on {condition:?}, which is itself conditional"
            ),
            SpaceError::BranchMismatch { domain, detail } => {
                write!(f, "hyperparameter {domain:?} branch map mismatch: {detail}")
            }
            SpaceError::Io(e) => write!(f, "search space io error: {e}"),
            SpaceError::Parse(e) => write!(f, "search space parse error: {e}"),
        }
    }
}

impl std::error::Error for SpaceError {}

/// Resolved token lists, computed once at construction.
#[derive(Debug, Clone)]
enum TokenSet {
    Unconditional(Vec<String>),
    Conditional {
        condition_index: usize,
        branches: BTreeMap<String, Vec<String>>,
    },
}

/// JSON file schema: `{"hyperparameters": [...]}`.
#[derive(Serialize, Deserialize)]
struct SpaceFile {
    hyperparameters: Vec<HyperParameterDomain>,
}

/// An ordered, validated set of hyperparameter domains.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    domains: Vec<HyperParameterDomain>,
    tokens: Vec<TokenSet>,
}

fn token_ok(token: &str) -> bool {
    !token.is_empty() && !token.contains(';') && !token.contains('=') && !token.contains('\n')
}

fn check_choice_list(domain: &str, choices: &[String]) -> Result<(), SpaceError> {
    if choices.is_empty() {
        return Err(SpaceError::EmptyDomain(domain.to_string()));
    }
    let mut seen = HashSet::new();
    for token in choices {
        if !token_ok(token) {
            return Err(SpaceError::BadToken {
                domain: domain.to_string(),
                token: token.clone(),
            });
        }
        if !seen.insert(token.as_str()) {
            return Err(SpaceError::DuplicateToken {
                domain: domain.to_string(),
                token: token.clone(),
            });
        }
    }
    Ok(())
}

/// Render a grid value as its canonical four-decimal token.
pub fn range_token(value: f64) -> String {
    format!("{value:.4}")
}

impl SearchSpace {
    pub fn new(domains: Vec<HyperParameterDomain>) -> Result<Self, SpaceError> {
        if domains.is_empty() {
            return Err(SpaceError::NoDomains);
        }
        let mut names: HashSet<&str> = HashSet::new();
        for d in &domains {
            if !token_ok(&d.name) {
                return Err(SpaceError::BadToken {
                    domain: d.name.clone(),
                    token: d.name.clone(),
                });
            }
            if !names.insert(d.name.as_str()) {
                return Err(SpaceError::DuplicateName(d.name.clone()));
            }
        }

        let mut tokens = Vec::with_capacity(domains.len());
        for (idx, d) in domains.iter().enumerate() {
            let set = match &d.kind {
                DomainKind::Categorical { choices } => {
                    check_choice_list(&d.name, choices)?;
                    TokenSet::Unconditional(choices.clone())
                }
                DomainKind::SteppedRange { range } => {
                    if !range.low.is_finite() || !range.high.is_finite() || !range.step.is_finite()
                    {
                        return Err(SpaceError::BadRange {
                            domain: d.name.clone(),
                            detail: "non-finite bound".to_string(),
                        });
                    }
                    if range.step <= 0.0 {
                        return Err(SpaceError::BadRange {
                            domain: d.name.clone(),
                            detail: format!("step {} must be positive", range.step),
                        });
                    }
                    if range.high < range.low {
                        return Err(SpaceError::BadRange {
                            domain: d.name.clone(),
                            detail: format!("high {} below low {}", range.high, range.low),
                        });
                    }
                    let rendered: Vec<String> =
                        range.values().into_iter().map(range_token).collect();
                    check_choice_list(&d.name, &rendered)?;
                    TokenSet::Unconditional(rendered)
                }
                DomainKind::Conditional {
                    condition,
                    branches,
                } => {
                    let cond_idx = domains
                        .iter()
                        .position(|c| &c.name == condition)
                        .ok_or_else(|| SpaceError::UnknownCondition {
                            domain: d.name.clone(),
                            condition: condition.clone(),
                        })?;
                    if cond_idx >= idx {
                        return Err(SpaceError::ConditionNotBefore {
                            domain: d.name.clone(),
                            condition: condition.clone(),
                        });
                    }
                    let cond_tokens = match &tokens[cond_idx] {
                        TokenSet::Unconditional(t) => t.clone(),
                        TokenSet::Conditional { .. } => {
                            return Err(SpaceError::ConditionConditional {
                                domain: d.name.clone(),
                                condition: condition.clone(),
                            })
                        }
                    };
                    for t in &cond_tokens {
                        if !branches.contains_key(t) {
                            return Err(SpaceError::BranchMismatch {
                                domain: d.name.clone(),
                                detail: format!("missing branch for condition value {t:?}"),
                            });
                        }
                    }
                    for key in branches.keys() {
                        if !cond_tokens.iter().any(|t| t == key) {
                            return Err(SpaceError::BranchMismatch {
                                domain: d.name.clone(),
                                detail: format!("branch key {key:?} is not a condition value"),
                            });
                        }
                    }
                    for choices in branches.values() {
                        check_choice_list(&d.name, choices)?;
                    }
                    TokenSet::Conditional {
                        condition_index: cond_idx,
                        branches: branches.clone(),
                    }
                }
            };
            tokens.push(set);
        }

        Ok(Self { domains, tokens })
    }

    pub fn domains(&self) -> &[HyperParameterDomain] {
        &self.domains
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.domains.iter().position(|d| d.name == name)
    }

    pub fn domain(&self, name: &str) -> Option<&HyperParameterDomain> {
        self.domains.iter().find(|d| d.name == name)
    }

    /// Choice tokens for domain `index`; `condition_token` resolves a
    /// conditional branch and is ignored for unconditional domains.
    pub(crate) fn choices_at(&self, index: usize, condition_token: Option<&str>) -> &[String] {
        match &self.tokens[index] {
            TokenSet::Unconditional(t) => t,
            TokenSet::Conditional { branches, .. } => {
                let key = condition_token.expect("conditional domain needs a condition token");
                branches
                    .get(key)
                    .map(|v| v.as_slice())
                    .unwrap_or_else(|| panic!("no branch for condition value {key:?}"))
            }
        }
    }

    /// Index of the condition domain when `index` is conditional.
    pub(crate) fn condition_index(&self, index: usize) -> Option<usize> {
        match &self.tokens[index] {
            TokenSet::Unconditional(_) => None,
            TokenSet::Conditional {
                condition_index, ..
            } => Some(*condition_index),
        }
    }

    /// Unconditional choice tokens, or `None` for conditional domains.
    pub fn unconditional_choices(&self, name: &str) -> Option<&[String]> {
        let idx = self.position(name)?;
        match &self.tokens[idx] {
            TokenSet::Unconditional(t) => Some(t),
            TokenSet::Conditional { .. } => None,
        }
    }

    /// Branch map of a conditional domain.
    pub fn branches(&self, name: &str) -> Option<&BTreeMap<String, Vec<String>>> {
        let idx = self.position(name)?;
        match &self.tokens[idx] {
            TokenSet::Conditional { branches, .. } => Some(branches),
            TokenSet::Unconditional(_) => None,
        }
    }

    /// Total number of candidates in the space.
    pub fn cardinality(&self) -> u128 {
        fn count(space: &SearchSpace, index: usize, assigned: &mut Vec<Option<String>>) -> u128 {
            if index == space.domains.len() {
                return 1;
            }
            match &space.tokens[index] {
                TokenSet::Unconditional(tokens) => {
                    // Unconditional size does not depend on the partial
                    // assignment unless a later conditional reads it.
                    let depends = space.tokens.iter().any(|t| {
                        matches!(t, TokenSet::Conditional { condition_index, .. } if *condition_index == index)
                    });
                    if depends {
                        let mut total = 0u128;
                        for token in tokens {
                            assigned[index] = Some(token.clone());
                            total += count(space, index + 1, assigned);
                        }
                        assigned[index] = None;
                        total
                    } else {
                        tokens.len() as u128 * count(space, index + 1, assigned)
                    }
                }
                TokenSet::Conditional {
                    condition_index,
                    branches,
                } => {
                    let key = assigned[*condition_index]
                        .as_deref()
                        .expect("condition assigned before dependent");
                    branches[key].len() as u128 * count(space, index + 1, assigned)
                }
            }
        }
        let mut assigned = vec![None; self.domains.len()];
        count(self, 0, &mut assigned)
    }

    /// All candidates in lexicographic order over the domain order.
    pub fn enumerate(&self) -> Vec<ProtocolCandidate> {
        let mut out = Vec::new();
        let mut fields: Vec<(String, String)> = Vec::with_capacity(self.domains.len());
        self.enumerate_rec(0, &mut fields, &mut out);
        out
    }

    fn enumerate_rec(
        &self,
        index: usize,
        fields: &mut Vec<(String, String)>,
        out: &mut Vec<ProtocolCandidate>,
    ) {
        if index == self.domains.len() {
            out.push(ProtocolCandidate::from_fields_unchecked(fields.clone()));
            return;
        }
        let condition_token = self.condition_index(index).map(|ci| fields[ci].1.clone());
        let choices = self.choices_at(index, condition_token.as_deref()).to_vec();
        for token in choices {
            fields.push((self.domains[index].name.clone(), token));
            self.enumerate_rec(index + 1, fields, out);
            fields.pop();
        }
    }

    /// Draw one candidate, each domain uniform in declaration order;
    /// conditional branches resolve against the already-drawn condition.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> ProtocolCandidate {
        let mut fields: Vec<(String, String)> = Vec::with_capacity(self.domains.len());
        for index in 0..self.domains.len() {
            let condition_token = self.condition_index(index).map(|ci| fields[ci].1.clone());
            let choices = self.choices_at(index, condition_token.as_deref());
            let pick = rng.random_range(0..choices.len());
            fields.push((self.domains[index].name.clone(), choices[pick].clone()));
        }
        ProtocolCandidate::from_fields_unchecked(fields)
    }

    pub fn from_json(text: &str) -> Result<Self, SpaceError> {
        let file: SpaceFile =
            serde_json::from_str(text).map_err(|e| SpaceError::Parse(e.to_string()))?;
        Self::new(file.hyperparameters)
    }

    pub fn to_json(&self) -> String {
        let file = SpaceFile {
            hyperparameters: self.domains.clone(),
        };
        serde_json::to_string_pretty(&file).expect("space serializes")
    }

    pub fn load(path: &Path) -> Result<Self, SpaceError> {
        let text = fs::read_to_string(path)
            .map_err(|e| SpaceError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// The eight-hyperparameter default space (9,216 candidates).
pub fn default_space() -> SearchSpace {
    SearchSpace::new(vec![
        HyperParameterDomain::stepped_range("alpha_real", 0.0, 0.5, 0.0625),
        HyperParameterDomain::categorical("color_format", &["gray", "rgb"]),
        HyperParameterDomain::categorical("keep_aspect_ratio", &["true", "false"]),
        HyperParameterDomain::categorical("data_augmentation", &["true", "false"]),
        HyperParameterDomain::categorical("character_set", &["DL", "DLP", "DLU", "DLUP"]),
        HyperParameterDomain::categorical("optimizer", &["adadelta", "adam"]),
        HyperParameterDomain::conditional(
            "learning_rate",
            "optimizer",
            &[
                ("adadelta", &["2", "1.5", "1", "0.5"]),
                ("adam", &["1e-3", "5e-4", "2e-4", "1e-4"]),
            ],
        ),
        HyperParameterDomain::categorical(
            "lr_schedule",
            &["constant", "ms-0.6", "ms-0.6-0.9", "ms-0.3-0.6-0.9"],
        ),
    ])
    .expect("default space is valid")
}
