//! Fixed candidate featurization and the Gower-style mixed distance.
//!
//! Numeric features are min-max scaled against the training set; categorical
//! features contribute 0/1 on mismatch; the distance is the mean over all
//! features. Scale-free by construction.

use serde::{Deserialize, Serialize};

use crate::domain::{Candidate, DatasetRecord, Site};

pub const NUMERIC_FEATURES: [&str; 8] = [
    "pb_frac",
    "sn_frac",
    "i_frac",
    "cs_frac",
    "anneal_c",
    "anneal_min",
    "max_rpm",
    "additive_count",
];
pub const CATEGORICAL_FEATURES: [&str; 2] = ["deposition_method", "architecture"];

pub fn feature_names() -> Vec<&'static str> {
    NUMERIC_FEATURES.iter().chain(CATEGORICAL_FEATURES.iter()).copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub numeric: [f64; 8],
    pub categorical: [String; 2],
}

pub fn featurize_candidate(candidate: &Candidate) -> FeatureVector {
    let c = &candidate.composition;
    FeatureVector {
        numeric: [
            c.fraction_of(Site::B, "Pb"),
            c.fraction_of(Site::B, "Sn"),
            c.fraction_of(Site::X, "I"),
            c.fraction_of(Site::A, "Cs"),
            candidate.process.anneal.temperature_c,
            candidate.process.anneal.minutes,
            candidate.process.max_rpm().unwrap_or(0.0),
            c.additives.len() as f64,
        ],
        categorical: [
            candidate.process.deposition_method.as_str().to_string(),
            candidate.structure.device_architecture.as_str().to_string(),
        ],
    }
}

pub fn featurize_record(record: &DatasetRecord) -> FeatureVector {
    featurize_candidate(&record.as_candidate("row"))
}

/// Per-feature min/max fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub min: [f64; 8],
    pub max: [f64; 8],
}

impl FeatureScale {
    pub fn fit(rows: &[FeatureVector]) -> Self {
        let mut min = [f64::INFINITY; 8];
        let mut max = [f64::NEG_INFINITY; 8];
        for row in rows {
            for i in 0..8 {
                min[i] = min[i].min(row.numeric[i]);
                max[i] = max[i].max(row.numeric[i]);
            }
        }
        if rows.is_empty() {
            min = [0.0; 8];
            max = [0.0; 8];
        }
        Self { min, max }
    }

    /// (v - min) / (max - min); a zero-width feature scales to 0.
    pub fn scale(&self, index: usize, value: f64) -> f64 {
        let range = self.max[index] - self.min[index];
        if range == 0.0 {
            0.0
        } else {
            (value - self.min[index]) / range
        }
    }
}

/// Mean over features of scaled absolute numeric differences and 0/1
/// categorical mismatches.
pub fn gower_distance(a: &FeatureVector, b: &FeatureVector, scale: &FeatureScale) -> f64 {
    let mut sum = 0.0;
    for i in 0..8 {
        sum += (scale.scale(i, a.numeric[i]) - scale.scale(i, b.numeric[i])).abs();
    }
    for i in 0..2 {
        if a.categorical[i] != b.categorical[i] {
            sum += 1.0;
        }
    }
    sum / 10.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{parse_composition, Candidate, IonTable};

    #[test]
    fn featurization_reads_the_expected_fields() {
        let table = IonTable::bundled();
        let c = parse_composition("(FASnI3)0.6(MAPbI3)0.4 + 10% SnF2 + 3% EDAI2", table).unwrap();
        let cand = Candidate::from_composition("c", c);
        let f = featurize_candidate(&cand);
        assert!((f.numeric[0] - 0.4).abs() < 1e-12); // pb_frac
        assert!((f.numeric[1] - 0.6).abs() < 1e-12); // sn_frac
        assert!((f.numeric[2] - 1.0).abs() < 1e-12); // i_frac
        assert_eq!(f.numeric[3], 0.0); // cs_frac
        assert_eq!(f.numeric[6], 4000.0); // max rpm of the default profile
        assert_eq!(f.numeric[7], 2.0); // additive count
        assert_eq!(f.categorical[0], "spin_coating");
        assert_eq!(f.categorical[1], "pin");
    }

    #[test]
    fn distance_is_zero_on_self_and_scale_free() {
        let a = FeatureVector {
            numeric: [0.4, 0.6, 1.0, 0.0, 70.0, 15.0, 4000.0, 2.0],
            categorical: ["spin_coating".into(), "pin".into()],
        };
        let mut b = a.clone();
        b.numeric[4] = 150.0;
        b.categorical[1] = "nip".into();
        let scale = FeatureScale::fit(&[a.clone(), b.clone()]);
        assert_eq!(gower_distance(&a, &a, &scale), 0.0);
        // anneal spans [70,150] so the scaled diff is 1; plus one mismatch.
        assert!((gower_distance(&a, &b, &scale) - 0.2).abs() < 1e-12);
    }
}
