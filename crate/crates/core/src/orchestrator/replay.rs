//! Replay and audit: a deterministic run's memory log fully determines its
//! final report, and the soundness invariants are re-assertable from the log
//! alone.

use std::collections::BTreeSet;
use std::path::Path;

use thiserror::Error;

use crate::goal::Goal;
use crate::memory::{read_log, EntryKind, MemoryEntry, MemoryError};

use super::discovery::{EvaluatedCandidate, FinalReport};
use super::meta::{MetaDecision, Verdict};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("memory log error: {0}")]
    Memory(#[from] MemoryError),
    #[error("log has no decisions")]
    NoDecisions,
    #[error("log ends on a continue verdict; run did not terminate")]
    NotTerminated,
    #[error("bad payload in entry {id}: {reason}")]
    BadPayload { id: String, reason: String },
    #[error("soundness violation: {0}")]
    Unsound(String),
}

fn decisions_of(entries: &[MemoryEntry]) -> Result<Vec<MetaDecision>, ReplayError> {
    entries
        .iter()
        .filter(|e| e.kind == EntryKind::Decision)
        .map(|e| {
            serde_json::from_value(e.payload.clone()).map_err(|err| ReplayError::BadPayload {
                id: e.id.clone(),
                reason: err.to_string(),
            })
        })
        .collect()
}

fn evaluations_of(entries: &[MemoryEntry]) -> Result<Vec<EvaluatedCandidate>, ReplayError> {
    entries
        .iter()
        .filter(|e| e.kind == EntryKind::Evaluation)
        .map(|e| {
            serde_json::from_value(e.payload.clone()).map_err(|err| ReplayError::BadPayload {
                id: e.id.clone(),
                reason: err.to_string(),
            })
        })
        .collect()
}

/// Reconstructs the final report of a terminated run from its log.
pub fn replay_report(
    memory_path: impl AsRef<Path>,
    goal: &Goal,
    risk_adjusted: bool,
) -> Result<FinalReport, ReplayError> {
    let entries = read_log(memory_path.as_ref())?;
    let decisions = decisions_of(&entries)?;
    let last = decisions.last().ok_or(ReplayError::NoDecisions)?;
    if last.verdict == Verdict::Continue {
        return Err(ReplayError::NotTerminated);
    }
    let evaluations = evaluations_of(&entries)?;
    let iterations = decisions.iter().filter(|d| d.verdict == Verdict::Continue).count() as u32;
    let best_candidate =
        super::discovery::select_best(goal, &evaluations, last.verdict, risk_adjusted);
    Ok(FinalReport {
        verdict: last.verdict,
        best_candidate,
        iterations,
        memory_log_path: memory_path.as_ref().display().to_string(),
        decisions,
    })
}

/// Success verdicts must cite an evaluation that meets every objective and
/// passes legality, checkable from the log alone.
pub fn verify_verdict_soundness(
    memory_path: impl AsRef<Path>,
    goal: &Goal,
    risk_adjusted: bool,
) -> Result<(), ReplayError> {
    let entries = read_log(memory_path.as_ref())?;
    let decisions = decisions_of(&entries)?;
    let evaluations = evaluations_of(&entries)?;
    for decision in decisions.iter().filter(|d| d.verdict == Verdict::Success) {
        let cited = decision.success_candidate.as_deref().ok_or_else(|| {
            ReplayError::Unsound(format!(
                "decision {} is success without a cited candidate",
                decision.iteration
            ))
        })?;
        let eval = evaluations
            .iter()
            .find(|e| e.candidate.id == cited)
            .ok_or_else(|| ReplayError::Unsound(format!("cited `{cited}` never evaluated")))?;
        let satisfied = goal.satisfied_by(&eval.candidate, |metric| {
            eval.predictions.get(&metric).map(|p| {
                if risk_adjusted {
                    p.y_hat - p.sigma
                } else {
                    p.y_hat
                }
            })
        });
        if !satisfied {
            return Err(ReplayError::Unsound(format!(
                "cited `{cited}` does not satisfy every objective"
            )));
        }
    }
    Ok(())
}

/// The miner may be skipped only when knowledge coverage already met the
/// prune threshold at decision time (replayed in log order).
pub fn verify_pruning_soundness(
    memory_path: impl AsRef<Path>,
    goal: &Goal,
    prune_threshold: usize,
) -> Result<(), ReplayError> {
    let entries = read_log(memory_path.as_ref())?;
    let tags: BTreeSet<String> = goal.tags();
    let mut coverage = 0usize;
    for entry in &entries {
        match entry.kind {
            EntryKind::Knowledge => {
                if tags.iter().any(|t| entry.tags.contains(t)) {
                    coverage += 1;
                }
            }
            EntryKind::Decision => {
                let decision: MetaDecision = serde_json::from_value(entry.payload.clone())
                    .map_err(|err| ReplayError::BadPayload {
                        id: entry.id.clone(),
                        reason: err.to_string(),
                    })?;
                if decision.verdict == Verdict::Continue
                    && decision.instruction_set.miner.is_skip()
                    && coverage < prune_threshold
                {
                    return Err(ReplayError::Unsound(format!(
                        "iteration {} skipped the miner at coverage {coverage} < {prune_threshold}",
                        decision.iteration
                    )));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// No hypothesis may re-appear after being recorded as failed.
pub fn verify_no_repeat_hypotheses(memory_path: impl AsRef<Path>) -> Result<(), ReplayError> {
    let entries = read_log(memory_path.as_ref())?;
    let decisions = decisions_of(&entries)?;
    let mut failed: BTreeSet<String> = BTreeSet::new();
    for decision in &decisions {
        failed.extend(decision.failed_hypotheses.iter().cloned());
        for hypothesis in &decision.hypotheses {
            if failed.contains(hypothesis) {
                return Err(ReplayError::Unsound(format!(
                    "iteration {} re-emitted failed hypothesis `{hypothesis}`",
                    decision.iteration
                )));
            }
        }
    }
    Ok(())
}
