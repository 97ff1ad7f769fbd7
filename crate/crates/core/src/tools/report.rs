//! Diagnostic report assembly: validity markers, key constraints from
//! attribution, and improvement strategies from a fixed rule table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::attribution::Attribution;
use super::knn::PredictionResult;
use crate::domain::{Candidate, ValidityMarker};
use crate::goal::{ObjectiveSpec, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMarker {
    pub candidate_id: String,
    pub marker: ValidityMarker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyConstraint {
    pub metric: Target,
    /// Top features by |contribution|, largest first.
    pub features: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSummary {
    pub candidate_id: String,
    pub utility: f64,
    pub predictions: BTreeMap<Target, PredictionResult>,
}

/// The feedback document one iteration hands back to the planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub iteration: u32,
    pub candidate_markers: Vec<CandidateMarker>,
    pub objectives_unmet: Vec<Target>,
    pub key_constraints: Vec<KeyConstraint>,
    pub strategies: Vec<String>,
    pub best: Option<BestSummary>,
    pub terminate_recommended: bool,
    pub infeasible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modal_rejection_reason: Option<String>,
}

/// Improvement strategy for one unmet objective given its dominant feature.
fn strategy_for(metric: Target, feature: &str, contribution: f64) -> String {
    match (metric, feature) {
        (Target::T80, "sn_frac") if contribution < 0.0 => {
            format!("add reductant additive to counter the negative sn_frac contribution ({contribution:.3})")
        }
        (Target::T80, _) => {
            format!("strengthen passivation additives; stability is dominated by {feature}")
        }
        (Target::Pce, "anneal_c") => {
            format!("retune anneal_c toward the high-performing window (contribution {contribution:.3})")
        }
        (Target::Pce, "i_frac") => "shift the halide ratio toward iodide".to_string(),
        (Target::Pce, _) => format!("tune {feature} toward high-performing neighbors"),
        (Target::Bandgap, _) => {
            format!("adjust the Sn:Pb ratio; bandgap is dominated by {feature}")
        }
        (Target::Voc, _) => format!("improve interface passivation; voc is dominated by {feature}"),
    }
}

pub struct ReportInputs<'a> {
    pub iteration: u32,
    pub objectives: &'a [ObjectiveSpec],
    pub kept: &'a [Candidate],
    pub rejected: &'a [(Candidate, Vec<String>)],
    /// (candidate id, prediction map, utility), already ranked best-first.
    pub evaluations: &'a [(String, BTreeMap<Target, PredictionResult>, f64)],
    pub attributions: &'a [Attribution],
}

/// Builds the diagnostic report for one iteration.
pub fn build_report(inputs: ReportInputs<'_>) -> DiagnosticReport {
    let mut candidate_markers: Vec<CandidateMarker> = inputs
        .kept
        .iter()
        .map(|c| CandidateMarker {
            candidate_id: c.id.clone(),
            marker: crate::domain::legality_check(c),
        })
        .collect();
    candidate_markers.extend(inputs.rejected.iter().map(|(c, reasons)| CandidateMarker {
        candidate_id: c.id.clone(),
        marker: ValidityMarker {
            pass: false,
            reasons: reasons.clone(),
            rule_set: crate::domain::RULE_SET_VERSION.into(),
        },
    }));

    let best = inputs.evaluations.first().map(|(id, predictions, utility)| BestSummary {
        candidate_id: id.clone(),
        utility: *utility,
        predictions: predictions.clone(),
    });

    let objectives_unmet: Vec<Target> = match &best {
        Some(summary) => inputs
            .objectives
            .iter()
            .filter(|o| {
                summary.predictions.get(&o.metric).map_or(true, |p| !o.met_by(p.y_hat))
            })
            .map(|o| o.metric)
            .collect(),
        None => inputs.objectives.iter().map(|o| o.metric).collect(),
    };

    let mut key_constraints = Vec::new();
    let mut strategies = Vec::new();
    for &metric in &objectives_unmet {
        let Some(attribution) = inputs.attributions.iter().find(|a| a.target == metric) else {
            continue;
        };
        let mut ranked = attribution.contributions.clone();
        ranked.sort_by(|a, b| {
            b.1.abs().partial_cmp(&a.1.abs()).unwrap_or(std::cmp::Ordering::Equal)
        });
        ranked.truncate(2);
        if let Some((feature, contribution)) = ranked.first() {
            strategies.push(strategy_for(metric, feature, *contribution));
        }
        key_constraints.push(KeyConstraint { metric, features: ranked });
    }

    let infeasible = inputs.kept.is_empty();
    let modal_rejection_reason = if infeasible {
        let mut counts: BTreeMap<&String, usize> = BTreeMap::new();
        for (_, reasons) in inputs.rejected {
            for reason in reasons {
                *counts.entry(reason).or_insert(0) += 1;
            }
        }
        counts.into_iter().max_by_key(|(_, n)| *n).map(|(reason, _)| reason.clone())
    } else {
        None
    };
    if infeasible {
        strategies.push("relax or reformulate the hard constraints".to_string());
    }

    DiagnosticReport {
        iteration: inputs.iteration,
        candidate_markers,
        objectives_unmet: objectives_unmet.clone(),
        key_constraints,
        strategies,
        best,
        terminate_recommended: objectives_unmet.is_empty() && !infeasible,
        infeasible,
        modal_rejection_reason,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{parse_composition, IonTable};
    use crate::goal::Direction;

    fn prediction(target: Target, y_hat: f64) -> (Target, PredictionResult) {
        (target, PredictionResult { target, y_hat, sigma: 0.5, neighbors_used: 5 })
    }

    fn kept_candidate() -> Candidate {
        let c = parse_composition("(FASnI3)0.6(MAPbI3)0.4", IonTable::bundled()).unwrap();
        Candidate::from_composition("c-001", c)
    }

    #[test]
    fn all_objectives_met_recommends_termination() {
        let objectives = vec![ObjectiveSpec::new(Target::Pce, Direction::Maximize, 15.0)];
        let kept = vec![kept_candidate()];
        let evaluations =
            vec![("c-001".to_string(), BTreeMap::from([prediction(Target::Pce, 18.0)]), 0.5)];
        let report = build_report(ReportInputs {
            iteration: 1,
            objectives: &objectives,
            kept: &kept,
            rejected: &[],
            evaluations: &evaluations,
            attributions: &[],
        });
        assert!(report.terminate_recommended);
        assert!(report.strategies.is_empty());
        assert!(report.objectives_unmet.is_empty());
    }

    #[test]
    fn dominant_feature_is_cited_in_the_strategy() {
        let objectives = vec![ObjectiveSpec::new(Target::Pce, Direction::Maximize, 25.0)];
        let kept = vec![kept_candidate()];
        let evaluations =
            vec![("c-001".to_string(), BTreeMap::from([prediction(Target::Pce, 18.0)]), 0.5)];
        let attributions = vec![Attribution {
            target: Target::Pce,
            baseline: 17.0,
            contributions: vec![
                ("anneal_c".to_string(), 2.5),
                ("sn_frac".to_string(), 0.2),
                ("i_frac".to_string(), -0.1),
            ],
        }];
        let report = build_report(ReportInputs {
            iteration: 1,
            objectives: &objectives,
            kept: &kept,
            rejected: &[],
            evaluations: &evaluations,
            attributions: &attributions,
        });
        assert_eq!(report.objectives_unmet, vec![Target::Pce]);
        assert!(report.strategies[0].contains("anneal_c"));
        assert_eq!(report.key_constraints[0].features.len(), 2);
        assert_eq!(report.key_constraints[0].features[0].0, "anneal_c");
    }

    #[test]
    fn zero_kept_flags_infeasibility_with_the_modal_reason() {
        let objectives = vec![ObjectiveSpec::new(Target::Pce, Direction::Maximize, 20.0)];
        let rejected = vec![
            (kept_candidate(), vec!["ban_ion:Pb".to_string()]),
            (kept_candidate(), vec!["ban_ion:Pb".to_string(), "anneal_out_of_range".to_string()]),
        ];
        let report = build_report(ReportInputs {
            iteration: 2,
            objectives: &objectives,
            kept: &[],
            rejected: &rejected,
            evaluations: &[],
            attributions: &[],
        });
        assert!(report.infeasible);
        assert!(!report.terminate_recommended);
        assert_eq!(report.modal_rejection_reason.as_deref(), Some("ban_ion:Pb"));
    }
}
