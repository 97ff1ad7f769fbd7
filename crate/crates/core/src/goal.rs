//! Multi-objective goals: optimization targets plus hard constraints.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::domain::{legality_check, Candidate, Site};

/// Predictable device metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Pce,
    T80,
    Bandgap,
    Voc,
}

impl Target {
    pub fn as_str(&self) -> &'static str {
        match self {
            Target::Pce => "pce",
            Target::T80 => "t80",
            Target::Bandgap => "bandgap",
            Target::Voc => "voc",
        }
    }

    /// Plausible metric range used for min-max scaling and sanity checks.
    pub fn default_range(&self) -> (f64, f64) {
        match self {
            Target::Pce => (0.0, 30.0),
            Target::T80 => (0.0, 2000.0),
            Target::Bandgap => (0.5, 4.0),
            Target::Voc => (0.0, 2.0),
        }
    }
}

impl std::str::FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "pce" => Ok(Target::Pce),
            "t80" => Ok(Target::T80),
            "bandgap" => Ok(Target::Bandgap),
            "voc" => Ok(Target::Voc),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub metric: Target,
    pub direction: Direction,
    pub threshold: f64,
    #[serde(default = "default_weight")]
    pub weight: f64,
    /// Scaling range; metric default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<(f64, f64)>,
    /// Acceptance half-width for `direction: target`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

fn default_weight() -> f64 {
    1.0
}

impl ObjectiveSpec {
    pub fn new(metric: Target, direction: Direction, threshold: f64) -> Self {
        Self { metric, direction, threshold, weight: 1.0, range: None, tolerance: None }
    }

    pub fn scale_range(&self) -> (f64, f64) {
        self.range.unwrap_or_else(|| self.metric.default_range())
    }

    /// Whether a predicted value meets this objective.
    pub fn met_by(&self, y_hat: f64) -> bool {
        match self.direction {
            Direction::Maximize => y_hat >= self.threshold,
            Direction::Minimize => y_hat <= self.threshold,
            Direction::Target => {
                let (lo, hi) = self.scale_range();
                let tol = self.tolerance.unwrap_or(0.05 * (hi - lo));
                (y_hat - self.threshold).abs() <= tol
            }
        }
    }
}

/// Hard constraint evaluated against a candidate's structure/process; never
/// against predicted performance (that is the emulator's contract).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSpec {
    /// Fraction of `ion` on `site` must not exceed `max`.
    MaxFraction { site: Site, ion: String, max: f64 },
    /// `ion` may not appear on any site.
    BanIon { ion: String },
    /// Named process field must lie within [min, max].
    ProcessRange { field: ProcessField, min: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessField {
    AnnealC,
    AnnealMin,
    MaxRpm,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConstraintError {
    #[error("unknown predicate `{0}` (performance predicates belong to objectives)")]
    UnknownPredicate(String),
    #[error("malformed constraint: {0}")]
    Malformed(String),
}

impl ConstraintSpec {
    /// Parses a JSON constraint, naming unknown predicate kinds.
    pub fn from_value(value: &Value) -> Result<Self, ConstraintError> {
        match serde_json::from_value::<ConstraintSpec>(value.clone()) {
            Ok(c) => Ok(c),
            Err(e) => {
                let kind = value
                    .get("kind")
                    .and_then(Value::as_str)
                    .unwrap_or("<missing kind>")
                    .to_string();
                if matches!(kind.as_str(), "max_fraction" | "ban_ion" | "process_range") {
                    Err(ConstraintError::Malformed(e.to_string()))
                } else {
                    Err(ConstraintError::UnknownPredicate(kind))
                }
            }
        }
    }

    pub fn parse_list(values: &[Value]) -> Result<Vec<Self>, ConstraintError> {
        values.iter().map(Self::from_value).collect()
    }

    /// Stable identifier used as a rejection reason code.
    pub fn code(&self) -> String {
        match self {
            ConstraintSpec::MaxFraction { site, ion, max } => {
                format!("max_fraction:{site}:{ion}<={max}")
            }
            ConstraintSpec::BanIon { ion } => format!("ban_ion:{ion}"),
            ConstraintSpec::ProcessRange { field, min, max } => {
                format!("process_range:{field:?}:{min}..{max}")
            }
        }
    }

    pub fn satisfied_by(&self, candidate: &Candidate) -> bool {
        match self {
            ConstraintSpec::MaxFraction { site, ion, max } => {
                candidate.composition.fraction_of(*site, ion) <= max + 1e-9
            }
            ConstraintSpec::BanIon { ion } => {
                [Site::A, Site::B, Site::X]
                    .iter()
                    .all(|&s| candidate.composition.fraction_of(s, ion) == 0.0)
            }
            ConstraintSpec::ProcessRange { field, min, max } => {
                let value = match field {
                    ProcessField::AnnealC => Some(candidate.process.anneal.temperature_c),
                    ProcessField::AnnealMin => Some(candidate.process.anneal.minutes),
                    ProcessField::MaxRpm => candidate.process.max_rpm(),
                };
                value.map_or(true, |v| v >= *min && v <= *max)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub objectives: Vec<ObjectiveSpec>,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u32,
}

fn default_max_iterations() -> u32 {
    5
}

#[derive(Debug, Error, PartialEq)]
pub enum GoalError {
    #[error("goal needs at least one objective")]
    NoObjectives,
    #[error("objective weights must be positive")]
    BadWeight,
    #[error("max_iterations must be at least 1")]
    BadIterations,
}

impl Goal {
    pub fn validate(&self) -> Result<(), GoalError> {
        if self.objectives.is_empty() {
            return Err(GoalError::NoObjectives);
        }
        if self.objectives.iter().any(|o| !(o.weight > 0.0)) {
            return Err(GoalError::BadWeight);
        }
        if self.max_iterations < 1 {
            return Err(GoalError::BadIterations);
        }
        Ok(())
    }

    /// Join-key tags between meta-level hypotheses and mined knowledge.
    pub fn tags(&self) -> BTreeSet<String> {
        let mut tags = BTreeSet::new();
        for obj in &self.objectives {
            tags.insert(obj.metric.as_str().to_string());
        }
        for constraint in &self.constraints {
            match constraint {
                ConstraintSpec::MaxFraction { ion, .. } => {
                    tags.insert(format!("low-{}", ion.to_lowercase()));
                }
                ConstraintSpec::BanIon { ion } => {
                    tags.insert(format!("no-{}", ion.to_lowercase()));
                }
                ConstraintSpec::ProcessRange { field, .. } => {
                    tags.insert(format!("{field:?}").to_lowercase());
                }
            }
        }
        tags
    }

    /// All objectives met by the given prediction map and a passing legality
    /// check; used by goal alignment and verdict soundness.
    pub fn satisfied_by(
        &self,
        candidate: &Candidate,
        prediction: impl Fn(Target) -> Option<f64>,
    ) -> bool {
        self.objectives.iter().all(|o| prediction(o.metric).is_some_and(|y| o.met_by(y)))
            && legality_check(candidate).pass
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{parse_composition, IonTable};
    use serde_json::json;

    #[test]
    fn constraint_json_round_trip_and_codes() {
        let c = ConstraintSpec::from_value(
            &json!({"kind": "max_fraction", "site": "B", "ion": "Pb", "max": 0.5}),
        )
        .unwrap();
        assert_eq!(c.code(), "max_fraction:B:Pb<=0.5");
        let banned =
            ConstraintSpec::from_value(&json!({"kind": "ban_ion", "ion": "Pb"})).unwrap();
        assert_eq!(banned, ConstraintSpec::BanIon { ion: "Pb".into() });
    }

    #[test]
    fn performance_predicates_are_unknown_here() {
        let err = ConstraintSpec::from_value(&json!({"kind": "pce_pred_min", "min": 20.0}))
            .unwrap_err();
        assert_eq!(err, ConstraintError::UnknownPredicate("pce_pred_min".into()));
    }

    #[test]
    fn max_fraction_checks_the_named_site() {
        let table = IonTable::bundled();
        let c = parse_composition("(FASnI3)0.6(MAPbI3)0.4", table).unwrap();
        let cand = Candidate::from_composition("c", c);
        let ok = ConstraintSpec::MaxFraction { site: Site::B, ion: "Pb".into(), max: 0.5 };
        let too_tight = ConstraintSpec::MaxFraction { site: Site::B, ion: "Pb".into(), max: 0.3 };
        assert!(ok.satisfied_by(&cand));
        assert!(!too_tight.satisfied_by(&cand));
        assert!(!ConstraintSpec::BanIon { ion: "Pb".into() }.satisfied_by(&cand));
        assert!(ConstraintSpec::BanIon { ion: "Ge".into() }.satisfied_by(&cand));
    }

    #[test]
    fn goal_tags_are_lowercased_join_keys() {
        let goal = Goal {
            objectives: vec![
                ObjectiveSpec::new(Target::Pce, Direction::Maximize, 20.0),
                ObjectiveSpec::new(Target::T80, Direction::Maximize, 1000.0),
            ],
            constraints: vec![ConstraintSpec::MaxFraction {
                site: Site::B,
                ion: "Pb".into(),
                max: 0.5,
            }],
            max_iterations: 5,
        };
        let tags = goal.tags();
        assert!(tags.contains("pce"));
        assert!(tags.contains("t80"));
        assert!(tags.contains("low-pb"));
    }

    #[test]
    fn objective_direction_semantics() {
        let max = ObjectiveSpec::new(Target::Pce, Direction::Maximize, 20.0);
        assert!(max.met_by(20.0) && max.met_by(25.0) && !max.met_by(19.9));
        let min = ObjectiveSpec::new(Target::Bandgap, Direction::Minimize, 1.3);
        assert!(min.met_by(1.25) && !min.met_by(1.35));
        let mut tgt = ObjectiveSpec::new(Target::Bandgap, Direction::Target, 1.23);
        tgt.tolerance = Some(0.05);
        assert!(tgt.met_by(1.25) && !tgt.met_by(1.30));
    }
}
