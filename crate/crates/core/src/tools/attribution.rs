//! Exact Shapley feature attribution over coalition enumeration.
//!
//! The value of a coalition S is the prediction on the instance with features
//! outside S replaced by training-set means (numeric) or modes (categorical);
//! the baseline is the empty coalition. Exact mode only, capped at 12
//! features (4096 coalition evaluations).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::feature::FeatureVector;
use crate::goal::Target;

pub const MAX_EXACT_FEATURES: usize = 12;

/// One feature slot: numeric or categorical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatValue {
    Num(f64),
    Cat(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub target: Target,
    /// Prediction on the all-background instance.
    pub baseline: f64,
    /// Signed contribution per feature, in target units.
    pub contributions: Vec<(String, f64)>,
}

impl Attribution {
    pub fn total(&self) -> f64 {
        self.baseline + self.contributions.iter().map(|(_, v)| v).sum::<f64>()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AttributionError {
    #[error("{count} features exceed the exact-mode cap of {cap}")]
    TooManyFeatures { count: usize, cap: usize },
    #[error("instance and background lengths differ: {instance} vs {background}")]
    LengthMismatch { instance: usize, background: usize },
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

/// Exact Shapley values for `predict` around `instance` against `background`.
///
/// Every coalition value is memoized, so the predictor runs exactly 2^n times.
pub fn exact_shapley(
    predict: &dyn Fn(&[FeatValue]) -> f64,
    instance: &[FeatValue],
    background: &[FeatValue],
    names: &[&str],
) -> Result<(f64, Vec<(String, f64)>), AttributionError> {
    let n = instance.len();
    if n != background.len() {
        return Err(AttributionError::LengthMismatch {
            instance: n,
            background: background.len(),
        });
    }
    if n > MAX_EXACT_FEATURES {
        return Err(AttributionError::TooManyFeatures { count: n, cap: MAX_EXACT_FEATURES });
    }
    debug_assert_eq!(names.len(), n);

    let coalition_count = 1usize << n;
    let mut values = Vec::with_capacity(coalition_count);
    let mut scratch: Vec<FeatValue> = background.to_vec();
    for mask in 0..coalition_count {
        for i in 0..n {
            scratch[i] = if mask & (1 << i) != 0 {
                instance[i].clone()
            } else {
                background[i].clone()
            };
        }
        values.push(predict(&scratch));
    }

    let n_fact = factorial(n);
    let mut contributions = Vec::with_capacity(n);
    for i in 0..n {
        let mut phi = 0.0;
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        // Enumerate subsets S of the other features.
        for submask in 0..(1usize << others.len()) {
            let mut mask = 0usize;
            let mut size = 0usize;
            for (bit, &j) in others.iter().enumerate() {
                if submask & (1 << bit) != 0 {
                    mask |= 1 << j;
                    size += 1;
                }
            }
            let weight = factorial(size) * factorial(n - size - 1) / n_fact;
            phi += weight * (values[mask | (1 << i)] - values[mask]);
        }
        contributions.push((names[i].to_string(), phi));
    }
    Ok((values[0], contributions))
}

/// Shapley attribution over the standard 10-feature candidate representation.
pub fn attribute_candidate(
    predict: &dyn Fn(&FeatureVector) -> f64,
    instance: &FeatureVector,
    background: &FeatureVector,
    target: Target,
) -> Result<Attribution, AttributionError> {
    let to_slots = |f: &FeatureVector| -> Vec<FeatValue> {
        f.numeric
            .iter()
            .map(|&v| FeatValue::Num(v))
            .chain(f.categorical.iter().map(|c| FeatValue::Cat(c.clone())))
            .collect()
    };
    let from_slots = |slots: &[FeatValue]| -> FeatureVector {
        let mut numeric = [0.0; 8];
        for (i, slot) in slots[..8].iter().enumerate() {
            if let FeatValue::Num(v) = slot {
                numeric[i] = *v;
            }
        }
        let cat = |slot: &FeatValue| match slot {
            FeatValue::Cat(s) => s.clone(),
            FeatValue::Num(v) => v.to_string(),
        };
        FeatureVector { numeric, categorical: [cat(&slots[8]), cat(&slots[9])] }
    };

    let names = super::feature::feature_names();
    let predict_slots = |slots: &[FeatValue]| predict(&from_slots(slots));
    let (baseline, contributions) =
        exact_shapley(&predict_slots, &to_slots(instance), &to_slots(background), &names)?;
    Ok(Attribution { target, baseline, contributions })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nums(values: &[f64]) -> Vec<FeatValue> {
        values.iter().map(|&v| FeatValue::Num(v)).collect()
    }

    fn num(slot: &FeatValue) -> f64 {
        match slot {
            FeatValue::Num(v) => *v,
            FeatValue::Cat(_) => panic!("numeric slot expected"),
        }
    }

    #[test]
    fn constant_predictor_attributes_nothing() {
        let predict = |_: &[FeatValue]| 7.5;
        let (baseline, contributions) =
            exact_shapley(&predict, &nums(&[1.0, 2.0, 3.0]), &nums(&[0.0, 0.0, 0.0]), &["a", "b", "c"])
                .unwrap();
        assert_eq!(baseline, 7.5);
        for (_, phi) in contributions {
            assert_eq!(phi, 0.0);
        }
    }

    #[test]
    fn additive_predictor_recovers_each_terms_offset() {
        // f = 2*x0 + 3*x1; contribution_i = g_i(x_i) - g_i(background_i).
        let predict = |slots: &[FeatValue]| 2.0 * num(&slots[0]) + 3.0 * num(&slots[1]);
        let (baseline, contributions) =
            exact_shapley(&predict, &nums(&[5.0, 1.0]), &nums(&[1.0, 2.0]), &["x0", "x1"]).unwrap();
        assert_eq!(baseline, 2.0 + 6.0);
        assert!((contributions[0].1 - (10.0 - 2.0)).abs() < 1e-12);
        assert!((contributions[1].1 - (3.0 - 6.0)).abs() < 1e-12);
    }

    #[test]
    fn efficiency_holds_on_an_interacting_predictor() {
        let predict = |slots: &[FeatValue]| {
            num(&slots[0]) * num(&slots[1]) + 0.5 * num(&slots[2]).powi(2)
        };
        let instance = nums(&[2.0, 3.0, 1.0]);
        let background = nums(&[0.5, -1.0, 0.0]);
        let (baseline, contributions) =
            exact_shapley(&predict, &instance, &background, &["a", "b", "c"]).unwrap();
        let total: f64 = baseline + contributions.iter().map(|(_, v)| v).sum::<f64>();
        let full = predict(&instance);
        assert!((total - full).abs() <= 1e-6);
    }

    #[test]
    fn symmetric_features_get_equal_values() {
        let predict = |slots: &[FeatValue]| num(&slots[0]) + num(&slots[1]);
        let (_, contributions) =
            exact_shapley(&predict, &nums(&[4.0, 4.0]), &nums(&[1.0, 1.0]), &["a", "b"]).unwrap();
        assert!((contributions[0].1 - contributions[1].1).abs() < 1e-12);
    }

    #[test]
    fn null_feature_gets_zero() {
        let predict = |slots: &[FeatValue]| 3.0 * num(&slots[0]);
        let (_, contributions) =
            exact_shapley(&predict, &nums(&[2.0, 9.0]), &nums(&[1.0, -4.0]), &["live", "dead"])
                .unwrap();
        assert!((contributions[1].1).abs() < 1e-12);
        assert!((contributions[0].1 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn feature_cap_is_enforced() {
        let predict = |_: &[FeatValue]| 0.0;
        let thirteen = nums(&[0.0; 13]);
        let names: Vec<&str> = (0..13).map(|_| "f").collect();
        let err = exact_shapley(&predict, &thirteen, &thirteen, &names).unwrap_err();
        assert_eq!(err, AttributionError::TooManyFeatures { count: 13, cap: 12 });
    }
}
