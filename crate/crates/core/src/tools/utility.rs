//! Utility scalarization for multi-objective ranking.
//!
//! U(x) = sum_j w'_j * s_j(y_hat_j) - lambda * sum_j sigma_j / scale_j, where
//! s_j min-max scales the prediction into [0,1] against the objective's range
//! (direction-aware), w'_j are the goal weights normalized to sum 1, and
//! scale_j is the objective's range width.

use std::collections::BTreeMap;

use thiserror::Error;

use super::knn::PredictionResult;
use crate::goal::{Direction, ObjectiveSpec, Target};

pub const DEFAULT_LAMBDA: f64 = 0.25;

#[derive(Debug, Error, PartialEq)]
pub enum UtilityError {
    #[error("candidate `{candidate}` missing prediction for `{objective}`")]
    MissingPrediction { candidate: String, objective: String },
    #[error("no objectives supplied")]
    NoObjectives,
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn satisfaction(objective: &ObjectiveSpec, y_hat: f64) -> f64 {
    let (lo, hi) = objective.scale_range();
    let width = (hi - lo).max(f64::MIN_POSITIVE);
    match objective.direction {
        Direction::Maximize => clamp01((y_hat - lo) / width),
        Direction::Minimize => 1.0 - clamp01((y_hat - lo) / width),
        Direction::Target => 1.0 - clamp01((y_hat - objective.threshold).abs() / width),
    }
}

/// Utility of one candidate's prediction map.
pub fn utility_score(
    candidate_id: &str,
    predictions: &BTreeMap<Target, PredictionResult>,
    objectives: &[ObjectiveSpec],
    lambda: f64,
) -> Result<f64, UtilityError> {
    if objectives.is_empty() {
        return Err(UtilityError::NoObjectives);
    }
    let weight_total: f64 = objectives.iter().map(|o| o.weight).sum();
    let mut value = 0.0;
    let mut penalty = 0.0;
    for objective in objectives {
        let prediction = predictions.get(&objective.metric).ok_or_else(|| {
            UtilityError::MissingPrediction {
                candidate: candidate_id.to_string(),
                objective: objective.metric.as_str().to_string(),
            }
        })?;
        let (lo, hi) = objective.scale_range();
        value += objective.weight / weight_total * satisfaction(objective, prediction.y_hat);
        penalty += prediction.sigma / (hi - lo).max(f64::MIN_POSITIVE);
    }
    Ok(value - lambda * penalty)
}

/// Scores and sorts candidates by utility descending, ties by id ascending.
pub fn rank_candidates(
    items: &[(String, BTreeMap<Target, PredictionResult>)],
    objectives: &[ObjectiveSpec],
    lambda: f64,
) -> Result<Vec<(String, f64)>, UtilityError> {
    let mut scored: Vec<(String, f64)> = items
        .iter()
        .map(|(id, predictions)| {
            utility_score(id, predictions, objectives, lambda).map(|u| (id.clone(), u))
        })
        .collect::<Result<_, _>>()?;
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.0.cmp(&b.0))
    });
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prediction(target: Target, y_hat: f64, sigma: f64) -> (Target, PredictionResult) {
        (target, PredictionResult { target, y_hat, sigma, neighbors_used: 5 })
    }

    fn objectives() -> Vec<ObjectiveSpec> {
        vec![
            ObjectiveSpec::new(Target::Pce, Direction::Maximize, 20.0),
            ObjectiveSpec::new(Target::T80, Direction::Maximize, 1000.0),
        ]
    }

    #[test]
    fn single_candidate_is_rank_one_regardless_of_values() {
        let items = vec![(
            "only".to_string(),
            BTreeMap::from([prediction(Target::Pce, 1.0, 9.0), prediction(Target::T80, 5.0, 9.0)]),
        )];
        let ranked = rank_candidates(&items, &objectives(), DEFAULT_LAMBDA).unwrap();
        assert_eq!(ranked.len(), 1);
        assert_eq!(ranked[0].0, "only");
    }

    #[test]
    fn lower_sigma_wins_on_identical_predictions() {
        let items = vec![
            (
                "b".to_string(),
                BTreeMap::from([
                    prediction(Target::Pce, 18.0, 2.0),
                    prediction(Target::T80, 600.0, 100.0),
                ]),
            ),
            (
                "a".to_string(),
                BTreeMap::from([
                    prediction(Target::Pce, 18.0, 0.5),
                    prediction(Target::T80, 600.0, 20.0),
                ]),
            ),
        ];
        let ranked = rank_candidates(&items, &objectives(), DEFAULT_LAMBDA).unwrap();
        assert_eq!(ranked[0].0, "a");
        assert!(ranked[0].1 > ranked[1].1);
    }

    #[test]
    fn missing_prediction_names_candidate_and_objective() {
        let items = vec![(
            "c9".to_string(),
            BTreeMap::from([prediction(Target::Pce, 18.0, 0.5)]),
        )];
        let err = rank_candidates(&items, &objectives(), DEFAULT_LAMBDA).unwrap_err();
        assert_eq!(
            err,
            UtilityError::MissingPrediction { candidate: "c9".into(), objective: "t80".into() }
        );
    }

    #[test]
    fn hand_computed_three_candidate_ordering() {
        // Ranges: pce [0,30] width 30; t80 [0,2000] width 2000.
        // Weights 1/2 each, lambda 0.25.
        let items = vec![
            (
                "c1".to_string(),
                BTreeMap::from([
                    prediction(Target::Pce, 18.0, 1.5),
                    prediction(Target::T80, 600.0, 100.0),
                ]),
            ),
            (
                "c2".to_string(),
                BTreeMap::from([
                    prediction(Target::Pce, 24.0, 3.0),
                    prediction(Target::T80, 400.0, 200.0),
                ]),
            ),
            (
                "c3".to_string(),
                BTreeMap::from([
                    prediction(Target::Pce, 12.0, 0.0),
                    prediction(Target::T80, 1500.0, 0.0),
                ]),
            ),
        ];
        // c1: 0.5*(18/30) + 0.5*(600/2000) - 0.25*(1.5/30 + 100/2000)
        //   = 0.3 + 0.15 - 0.25*0.1 = 0.425
        // c2: 0.5*0.8 + 0.5*0.2 - 0.25*(0.1 + 0.1) = 0.45
        // c3: 0.5*0.4 + 0.5*0.75 - 0 = 0.575
        let ranked = rank_candidates(&items, &objectives(), DEFAULT_LAMBDA).unwrap();
        let by_id: BTreeMap<&str, f64> =
            ranked.iter().map(|(id, u)| (id.as_str(), *u)).collect();
        assert!((by_id["c1"] - 0.425).abs() < 1e-12);
        assert!((by_id["c2"] - 0.45).abs() < 1e-12);
        assert!((by_id["c3"] - 0.575).abs() < 1e-12);
        assert_eq!(ranked.iter().map(|(id, _)| id.as_str()).collect::<Vec<_>>(), ["c3", "c2", "c1"]);
    }

    #[test]
    fn improving_an_objective_never_lowers_utility() {
        let objectives = objectives();
        let base = BTreeMap::from([
            prediction(Target::Pce, 15.0, 1.0),
            prediction(Target::T80, 500.0, 50.0),
        ]);
        let u0 = utility_score("c", &base, &objectives, DEFAULT_LAMBDA).unwrap();
        for bump in [0.5, 2.0, 10.0, 40.0] {
            let mut better = base.clone();
            better.get_mut(&Target::Pce).unwrap().y_hat = 15.0 + bump;
            let u1 = utility_score("c", &better, &objectives, DEFAULT_LAMBDA).unwrap();
            assert!(u1 >= u0, "bump {bump} lowered utility");
        }
    }
}
