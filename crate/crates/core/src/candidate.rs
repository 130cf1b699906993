//! Protocol candidates: one choice token per hyperparameter, plus the
//! canonical string encoding, domain validation, and the JSON wire form
//! shared with external trainers.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::space::{DomainKind, SearchSpace};

/// The eight standard hyperparameter names, in fixed order.
pub const STANDARD_HP_NAMES: [&str; 8] = [
    "alpha_real",
    "color_format",
    "keep_aspect_ratio",
    "data_augmentation",
    "character_set",
    "optimizer",
    "learning_rate",
    "lr_schedule",
];

/// Abbreviated keys used by the canonical encoding, aligned with
/// [`STANDARD_HP_NAMES`].
const ENCODE_KEYS: [&str; 8] = [
    "alpha_real",
    "color",
    "keep_ar",
    "aug",
    "charset",
    "opt",
    "lr",
    "sched",
];

/// One point in the search space: an ordered list of (name, token) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolCandidate {
    fields: Vec<(String, String)>,
}

/// Errors from candidate construction and the canonical string codec.
#[derive(Debug, Clone, PartialEq)]
pub enum CandidateError {
    Empty,
    DuplicateField(String),
    BadToken { name: String, token: String },
    Malformed { text: String, detail: String },
}

impl fmt::Display for CandidateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CandidateError::Empty => write!(f, "candidate has no fields"),
            CandidateError::DuplicateField(n) => write!(f, "duplicate candidate field {n:?}"),
            CandidateError::BadToken { name, token } => {
                write!(f, "field {name:?} has malformed token {token:?}")
            }
            CandidateError::Malformed { text, detail } => {
                write!(f, "malformed candidate encoding {text:?}: {detail}")
            }
        }
    }
}

impl std::error::Error for CandidateError {}

fn part_ok(s: &str) -> bool {
    !s.is_empty() && !s.contains(';') && !s.contains('=') && !s.contains('\n')
}

impl ProtocolCandidate {
    pub fn from_fields(fields: Vec<(String, String)>) -> Result<Self, CandidateError> {
        if fields.is_empty() {
            return Err(CandidateError::Empty);
        }
        for (name, token) in &fields {
            if !part_ok(name) || !part_ok(token) {
                return Err(CandidateError::BadToken {
                    name: name.clone(),
                    token: token.clone(),
                });
            }
        }
        for (i, (name, _)) in fields.iter().enumerate() {
            if fields[..i].iter().any(|(n, _)| n == name) {
                return Err(CandidateError::DuplicateField(name.clone()));
            }
        }
        Ok(Self { fields })
    }

    /// Construction path for space internals, where fields are known good.
    pub(crate) fn from_fields_unchecked(fields: Vec<(String, String)>) -> Self {
        Self { fields }
    }

    /// Build a standard eight-field candidate from tokens.
    #[allow(clippy::too_many_arguments)]
    pub fn standard(
        alpha_real: &str,
        color_format: &str,
        keep_aspect_ratio: &str,
        data_augmentation: &str,
        character_set: &str,
        optimizer: &str,
        learning_rate: &str,
        lr_schedule: &str,
    ) -> Self {
        let tokens = [
            alpha_real,
            color_format,
            keep_aspect_ratio,
            data_augmentation,
            character_set,
            optimizer,
            learning_rate,
            lr_schedule,
        ];
        Self {
            fields: STANDARD_HP_NAMES
                .iter()
                .zip(tokens)
                .map(|(n, t)| (n.to_string(), t.to_string()))
                .collect(),
        }
    }

    pub fn fields(&self) -> &[(String, String)] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.as_str())
    }

    pub fn set(&mut self, name: &str, token: &str) -> bool {
        for (n, t) in &mut self.fields {
            if n == name {
                *t = token.to_string();
                return true;
            }
        }
        false
    }

    /// True when the field names are exactly the eight standard ones.
    pub fn is_standard(&self) -> bool {
        self.fields.len() == STANDARD_HP_NAMES.len()
            && STANDARD_HP_NAMES.iter().all(|n| self.get(n).is_some())
    }
}

/// Table-row baseline protocol: union-sampled data, grayscale, fixed aspect
/// ratio, no augmentation, digits+lowercase, Adadelta at lr 1, constant.
pub fn baseline_protocol() -> ProtocolCandidate {
    ProtocolCandidate::standard(
        "0.0000", "gray", "false", "false", "DL", "adadelta", "1", "constant",
    )
}

/// The searched protocol: 12.5% real data per batch, grayscale, fixed aspect
/// ratio, augmentation on, digits+lowercase, Adam at 5e-4 with one decay at
/// 60% of training.
pub fn searched_protocol() -> ProtocolCandidate {
    ProtocolCandidate::standard(
        "0.1250", "gray", "false", "true", "DL", "adam", "5e-4", "ms-0.6",
    )
}

/// Injective fixed-order string form, the cache and dedup key.
///
/// Standard candidates use abbreviated keys with `alpha_real` normalized to
/// four decimals; other shapes fall back to `name=token` pairs in field
/// order.
pub fn canonical_encode(candidate: &ProtocolCandidate) -> String {
    if candidate.is_standard() {
        let alpha = candidate.get("alpha_real").unwrap();
        if let Ok(v) = alpha.parse::<f64>() {
            let parts: Vec<String> = ENCODE_KEYS
                .iter()
                .zip(STANDARD_HP_NAMES.iter())
                .map(|(key, name)| {
                    let token = candidate.get(name).unwrap();
                    if *name == "alpha_real" {
                        format!("{key}={v:.4}")
                    } else {
                        format!("{key}={token}")
                    }
                })
                .collect();
            return parts.join(";");
        }
    }
    candidate
        .fields
        .iter()
        .map(|(n, t)| format!("{n}={t}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// Inverse of [`canonical_encode`].
pub fn canonical_decode(text: &str) -> Result<ProtocolCandidate, CandidateError> {
    let mut pairs = Vec::new();
    for part in text.split(';') {
        let Some((key, value)) = part.split_once('=') else {
            return Err(CandidateError::Malformed {
                text: text.to_string(),
                detail: format!("segment {part:?} is not key=value"),
            });
        };
        pairs.push((key.to_string(), value.to_string()));
    }
    let standard_order = pairs.len() == ENCODE_KEYS.len()
        && pairs
            .iter()
            .zip(ENCODE_KEYS.iter())
            .all(|((k, _), expect)| k == expect);
    let fields = if standard_order {
        STANDARD_HP_NAMES
            .iter()
            .zip(pairs)
            .map(|(name, (_, token))| (name.to_string(), token))
            .collect()
    } else {
        pairs
    };
    ProtocolCandidate::from_fields(fields)
}

/// A single domain-membership failure found by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    MissingField {
        name: String,
    },
    UnknownField {
        name: String,
    },
    NotInDomain {
        name: String,
        token: String,
        detail: String,
    },
    ConditionalMismatch {
        name: String,
        token: String,
        condition: String,
        condition_token: String,
        allowed: Vec<String>,
    },
    UnresolvedCondition {
        name: String,
        condition: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingField { name } => write!(f, "missing hyperparameter {name:?}"),
            Violation::UnknownField { name } => {
                write!(f, "field {name:?} is not in the search space")
            }
            Violation::NotInDomain {
                name,
                token,
                detail,
            } => {
                write!(f, "{name}={token} invalid: {detail}")
            }
            Violation::ConditionalMismatch {
                name,
                token,
                condition,
                condition_token,
                allowed,
            } => write!(
                f,
                "{name}={token} outside the {condition}={condition_token} branch {allowed:?}"
            ),
            Violation::UnresolvedCondition { name, condition } => write!(
                f,
                "cannot check {name}: condition {condition} is missing or invalid"
            ),
        }
    }
}

/// Check every field against its (possibly conditional) domain.
/// Returns ok as an empty list; never aborts.
pub fn validate(candidate: &ProtocolCandidate, space: &SearchSpace) -> Vec<Violation> {
    let mut violations = Vec::new();
    for (name, _) in candidate.fields() {
        if space.position(name).is_none() {
            violations.push(Violation::UnknownField { name: name.clone() });
        }
    }
    for (index, domain) in space.domains().iter().enumerate() {
        let name = &domain.name;
        let Some(token) = candidate.get(name) else {
            violations.push(Violation::MissingField { name: name.clone() });
            continue;
        };
        match &domain.kind {
            DomainKind::Categorical { choices } => {
                if !choices.iter().any(|c| c == token) {
                    violations.push(Violation::NotInDomain {
                        name: name.clone(),
                        token: token.to_string(),
                        detail: format!("not one of {choices:?}"),
                    });
                }
            }
            DomainKind::SteppedRange { range } => match token.parse::<f64>() {
                Ok(value) if range.contains(value) => {}
                Ok(_) => violations.push(Violation::NotInDomain {
                    name: name.clone(),
                    token: token.to_string(),
                    detail: format!(
                        "not on the {} grid over [{}, {}]",
                        range.step, range.low, range.high
                    ),
                }),
                Err(_) => violations.push(Violation::NotInDomain {
                    name: name.clone(),
                    token: token.to_string(),
                    detail: "not a number".to_string(),
                }),
            },
            DomainKind::Conditional { condition, .. } => {
                let cond_index = space.condition_index(index).expect("validated space");
                let cond_name = &space.domains()[cond_index].name;
                let branch = candidate.get(cond_name).and_then(|cond_token| {
                    space
                        .branches(name)
                        .and_then(|b| b.get(cond_token).map(|v| (cond_token, v)))
                });
                match branch {
                    Some((cond_token, allowed)) => {
                        if !allowed.iter().any(|c| c == token) {
                            violations.push(Violation::ConditionalMismatch {
                                name: name.clone(),
                                token: token.to_string(),
                                condition: condition.clone(),
                                condition_token: cond_token.to_string(),
                                allowed: allowed.clone(),
                            });
                        }
                    }
                    None => violations.push(Violation::UnresolvedCondition {
                        name: name.clone(),
                        condition: condition.clone(),
                    }),
                }
            }
        }
    }
    violations
}

/// Resample any conditional field whose token fell outside the branch picked
/// by its condition. Draws are uniform over the branch.
pub fn repair_conditionals<R: Rng + ?Sized>(
    candidate: &mut ProtocolCandidate,
    space: &SearchSpace,
    rng: &mut R,
) {
    for (index, domain) in space.domains().iter().enumerate() {
        let Some(cond_index) = space.condition_index(index) else {
            continue;
        };
        let cond_name = &space.domains()[cond_index].name;
        let cond_token = candidate
            .get(cond_name)
            .expect("condition field present")
            .to_string();
        let branch = space.choices_at(index, Some(&cond_token));
        let current = candidate.get(&domain.name).expect("field present");
        if !branch.iter().any(|c| c == current) {
            let pick = rng.random_range(0..branch.len());
            let token = branch[pick].clone();
            candidate.set(&domain.name, &token);
        }
    }
}

/// Deterministic variant of [`repair_conditionals`] for sweeps and ablations:
/// the invalid token is replaced by the same position in the new branch
/// (clamped), preserving the ordering of the old choice.
pub fn repair_conditionals_positional(candidate: &mut ProtocolCandidate, space: &SearchSpace) {
    for (index, domain) in space.domains().iter().enumerate() {
        let Some(cond_index) = space.condition_index(index) else {
            continue;
        };
        let cond_name = &space.domains()[cond_index].name;
        let cond_token = candidate
            .get(cond_name)
            .expect("condition field present")
            .to_string();
        let branch = space.choices_at(index, Some(&cond_token)).to_vec();
        let current = candidate
            .get(&domain.name)
            .expect("field present")
            .to_string();
        if branch.contains(&current) {
            continue;
        }
        let old_position = space
            .branches(&domain.name)
            .map(|branches| {
                branches
                    .values()
                    .find_map(|b| b.iter().position(|c| *c == current))
                    .unwrap_or(0)
            })
            .unwrap_or(0);
        let token = branch[old_position.min(branch.len() - 1)].clone();
        candidate.set(&domain.name, &token);
    }
}

/// JSON wire form of a standard candidate, shared with external trainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardCandidateJson {
    pub alpha_real: f64,
    pub color_format: String,
    pub keep_aspect_ratio: bool,
    pub data_augmentation: bool,
    pub character_set: String,
    pub optimizer: String,
    pub learning_rate: f64,
    pub lr_schedule: String,
}

/// Candidate wire form: the typed eight-field object for the standard
/// space, or a plain name-to-token map for override spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CandidateJson {
    Standard(StandardCandidateJson),
    Generic(std::collections::BTreeMap<String, String>),
}

/// Errors converting between candidates and the wire form.
#[derive(Debug, Clone, PartialEq)]
pub enum WireError {
    NotStandard { missing: String },
    BadNumber { name: String, token: String },
    BadBool { name: String, token: String },
}

impl fmt::Display for WireError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WireError::NotStandard { missing } => {
                write!(f, "candidate lacks standard field {missing:?}")
            }
            WireError::BadNumber { name, token } => {
                write!(f, "field {name} token {token:?} is not a number")
            }
            WireError::BadBool { name, token } => {
                write!(f, "field {name} token {token:?} is not true/false")
            }
        }
    }
}

impl std::error::Error for WireError {}

fn require<'a>(candidate: &'a ProtocolCandidate, name: &str) -> Result<&'a str, WireError> {
    candidate.get(name).ok_or_else(|| WireError::NotStandard {
        missing: name.to_string(),
    })
}

fn parse_bool(name: &str, token: &str) -> Result<bool, WireError> {
    match token {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(WireError::BadBool {
            name: name.to_string(),
            token: token.to_string(),
        }),
    }
}

fn parse_number(name: &str, token: &str) -> Result<f64, WireError> {
    token.parse::<f64>().map_err(|_| WireError::BadNumber {
        name: name.to_string(),
        token: token.to_string(),
    })
}

impl StandardCandidateJson {
    pub fn from_candidate(candidate: &ProtocolCandidate) -> Result<Self, WireError> {
        Ok(Self {
            alpha_real: parse_number("alpha_real", require(candidate, "alpha_real")?)?,
            color_format: require(candidate, "color_format")?.to_string(),
            keep_aspect_ratio: parse_bool(
                "keep_aspect_ratio",
                require(candidate, "keep_aspect_ratio")?,
            )?,
            data_augmentation: parse_bool(
                "data_augmentation",
                require(candidate, "data_augmentation")?,
            )?,
            character_set: require(candidate, "character_set")?.to_string(),
            optimizer: require(candidate, "optimizer")?.to_string(),
            learning_rate: parse_number("learning_rate", require(candidate, "learning_rate")?)?,
            lr_schedule: require(candidate, "lr_schedule")?.to_string(),
        })
    }

    /// Rebuild the token candidate. Numeric fields map back to the space's
    /// tokens when they match a domain value; off-domain numbers keep a
    /// literal rendering so [`validate`] can report them.
    pub fn to_candidate(&self, space: &SearchSpace) -> ProtocolCandidate {
        let alpha_token = space
            .unconditional_choices("alpha_real")
            .and_then(|choices| {
                choices
                    .iter()
                    .find(|t| {
                        t.parse::<f64>()
                            .map(|v| (v - self.alpha_real).abs() <= 1e-9)
                            .unwrap_or(false)
                    })
                    .cloned()
            })
            .unwrap_or_else(|| format!("{:.4}", self.alpha_real));
        let lr_token = space
            .branches("learning_rate")
            .and_then(|branches| branches.get(self.optimizer.as_str()))
            .and_then(|branch| {
                branch
                    .iter()
                    .find(|t| {
                        t.parse::<f64>()
                            .map(|v| {
                                let scale = v.abs().max(self.learning_rate.abs()).max(1e-12);
                                (v - self.learning_rate).abs() <= 1e-9 * scale
                            })
                            .unwrap_or(false)
                    })
                    .cloned()
            })
            .unwrap_or_else(|| format!("{}", self.learning_rate));
        ProtocolCandidate::standard(
            &alpha_token,
            &self.color_format,
            if self.keep_aspect_ratio {
                "true"
            } else {
                "false"
            },
            if self.data_augmentation {
                "true"
            } else {
                "false"
            },
            &self.character_set,
            &self.optimizer,
            &lr_token,
            &self.lr_schedule,
        )
    }
}

impl CandidateJson {
    pub fn from_candidate(candidate: &ProtocolCandidate) -> Result<Self, WireError> {
        if candidate.is_standard() {
            return Ok(CandidateJson::Standard(
                StandardCandidateJson::from_candidate(candidate)?,
            ));
        }
        Ok(CandidateJson::Generic(
            candidate
                .fields()
                .iter()
                .map(|(n, t)| (n.clone(), t.clone()))
                .collect(),
        ))
    }

    /// Rebuild the token candidate; generic maps come back ordered by the
    /// space's domain order, with unknown names appended for [`validate`]
    /// to flag.
    pub fn to_candidate(&self, space: &SearchSpace) -> ProtocolCandidate {
        match self {
            CandidateJson::Standard(wire) => wire.to_candidate(space),
            CandidateJson::Generic(map) => {
                let mut fields: Vec<(String, String)> = Vec::with_capacity(map.len());
                for domain in space.domains() {
                    if let Some(token) = map.get(&domain.name) {
                        fields.push((domain.name.clone(), token.clone()));
                    }
                }
                for (name, token) in map {
                    if space.position(name).is_none() {
                        fields.push((name.clone(), token.clone()));
                    }
                }
                ProtocolCandidate::from_fields_unchecked(fields)
            }
        }
    }
}
