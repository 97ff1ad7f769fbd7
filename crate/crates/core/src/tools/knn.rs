//! k-nearest-neighbor regression with an uncertainty estimate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::feature::{gower_distance, FeatureScale, FeatureVector};
use crate::goal::Target;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub target: Target,
    pub y_hat: f64,
    /// Population standard deviation of the neighbor targets.
    pub sigma: f64,
    pub neighbors_used: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum PredictError {
    #[error("only {available} training rows have `{target}`, need k={k}")]
    InsufficientRows { target: String, available: usize, k: usize },
    #[error("target `{0}` absent from every training row")]
    TargetAbsent(String),
    #[error("k must be at least 1")]
    BadK,
}

/// Mean and population std of the k nearest rows under the Gower distance.
/// Distance ties break by training row order.
pub fn knn_predict(
    rows: &[(FeatureVector, f64)],
    scale: &FeatureScale,
    query: &FeatureVector,
    k: usize,
    target: Target,
) -> Result<PredictionResult, PredictError> {
    if k == 0 {
        return Err(PredictError::BadK);
    }
    if rows.is_empty() {
        return Err(PredictError::TargetAbsent(target.as_str().to_string()));
    }
    if rows.len() < k {
        return Err(PredictError::InsufficientRows {
            target: target.as_str().to_string(),
            available: rows.len(),
            k,
        });
    }

    // Keep the best k as a sorted window over (distance, row index).
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (index, (features, _)) in rows.iter().enumerate() {
        let distance = gower_distance(query, features, scale);
        let pos = best
            .iter()
            .position(|&(d, i)| (distance, index) < (d, i))
            .unwrap_or(best.len());
        if pos < k {
            best.insert(pos, (distance, index));
            best.truncate(k);
        }
    }

    let mean = best.iter().map(|&(_, i)| rows[i].1).sum::<f64>() / k as f64;
    let variance = best.iter().map(|&(_, i)| (rows[i].1 - mean).powi(2)).sum::<f64>() / k as f64;
    Ok(PredictionResult { target, y_hat: mean, sigma: variance.sqrt(), neighbors_used: k })
}
