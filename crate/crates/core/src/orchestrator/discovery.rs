//! The closed discovery loop: meta step, then Miner -> Designer -> Emulator
//! -> Analyst in fixed dependency order (skipped stages omitted), feeding the
//! diagnostic report back until a terminal verdict.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use peromas_mcp::{serve_tcp, ToolClient};

use crate::domain::{Candidate, ValidityMarker};
use crate::gateway::ChatBackend;
use crate::goal::{Goal, GoalError, Target};
use crate::memory::{MemoryError, MemoryStore};
use crate::tools::{build_registry, DiagnosticReport, PredictionResult, ToolContext};

use super::agents::{run_agent_loop, AgentError, AgentRole, RoleOutput};
use super::meta::{meta_step, InstructionSlot, MetaConfig, MetaDecision, Verdict};

/// Candidate plus per-objective predictions, utility, and validity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedCandidate {
    pub candidate: Candidate,
    pub predictions: BTreeMap<Target, PredictionResult>,
    /// Present only when every goal metric was predicted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<f64>,
    pub validity: ValidityMarker,
}

/// Data flowing between stages within one iteration.
#[derive(Debug, Clone, Default)]
pub struct IterationContext {
    pub iteration: u32,
    pub entries: Vec<crate::knowledge::KnowledgeEntry>,
    pub candidates: Vec<Candidate>,
    pub rejected: Vec<(Candidate, Vec<String>)>,
    pub evaluations: Vec<EvaluatedCandidate>,
}

impl IterationContext {
    /// Compact view for LLM prompts.
    pub fn summary(&self) -> serde_json::Value {
        json!({
            "iteration": self.iteration,
            "knowledge_entries": self.entries.len(),
            "candidates": self.candidates.iter().map(|c| c.id.clone()).collect::<Vec<_>>(),
            "evaluations": self.evaluations.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    #[default]
    Deterministic,
    Llm,
}

#[derive(Debug, Clone)]
pub struct DiscoveryConfig {
    pub memory_path: PathBuf,
    pub mode: ExecMode,
    pub meta: MetaConfig,
    /// Connect to an external tool server instead of embedding one.
    pub remote_tools: Option<String>,
}

impl DiscoveryConfig {
    pub fn new(memory_path: impl Into<PathBuf>) -> Self {
        Self {
            memory_path: memory_path.into(),
            mode: ExecMode::Deterministic,
            meta: MetaConfig::default(),
            remote_tools: None,
        }
    }
}

/// Outcome of one discovery run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub verdict: Verdict,
    pub best_candidate: Option<EvaluatedCandidate>,
    /// Completed work iterations (continue-verdict cycles).
    pub iterations: u32,
    pub memory_log_path: String,
    pub decisions: Vec<MetaDecision>,
}

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("invalid goal: {0}")]
    Goal(#[from] GoalError),
    #[error("memory failure: {0}")]
    Memory(#[from] MemoryError),
    #[error("tool server failure: {0}")]
    Server(String),
    #[error("meta step failure: {0}")]
    Meta(#[from] super::meta::MetaError),
}

fn stage_role(stage: AgentRole) -> &'static str {
    match stage {
        AgentRole::Miner => "miner",
        AgentRole::Designer => "designer",
        AgentRole::Emulator => "emulator",
        AgentRole::Analyst => "analyst",
    }
}

/// Picks the reportable best: among goal-satisfying evaluations when the run
/// succeeded, otherwise among legality-passing ones, by utility then id.
pub(crate) fn select_best(
    goal: &Goal,
    evaluations: &[EvaluatedCandidate],
    verdict: Verdict,
    risk_adjusted: bool,
) -> Option<EvaluatedCandidate> {
    let eligible: Vec<&EvaluatedCandidate> = evaluations
        .iter()
        .filter(|e| {
            if verdict == Verdict::Success {
                goal.satisfied_by(&e.candidate, |metric| {
                    e.predictions.get(&metric).map(|p| {
                        if risk_adjusted {
                            p.y_hat - p.sigma
                        } else {
                            p.y_hat
                        }
                    })
                })
            } else {
                e.validity.pass
            }
        })
        .collect();
    eligible
        .into_iter()
        .max_by(|a, b| {
            let ua = a.utility.unwrap_or(f64::NEG_INFINITY);
            let ub = b.utility.unwrap_or(f64::NEG_INFINITY);
            ua.partial_cmp(&ub)
                .unwrap_or(std::cmp::Ordering::Equal)
                // Lexicographically smaller id wins ties.
                .then_with(|| b.candidate.id.cmp(&a.candidate.id))
        })
        .cloned()
}

fn terminal_decision(iteration: u32, verdict: Verdict, rationale: String) -> MetaDecision {
    MetaDecision {
        iteration,
        verdict,
        hypotheses: Vec::new(),
        failed_hypotheses: Vec::new(),
        instruction_set: super::meta::InstructionSet::all_skip(),
        rationale,
        success_candidate: None,
        degraded: false,
    }
}

/// Runs the closed loop to a terminal verdict.
pub fn run_discovery(
    goal: &Goal,
    ctx: Arc<ToolContext>,
    gateway: Option<Arc<dyn ChatBackend>>,
    config: &DiscoveryConfig,
) -> Result<FinalReport, DiscoveryError> {
    goal.validate()?;
    let memory = MemoryStore::create(&config.memory_path)?;

    // Embedded tool server unless a remote endpoint was configured.
    let (client, server) = match &config.remote_tools {
        Some(addr) => {
            let client =
                ToolClient::connect_tcp(addr).map_err(|e| DiscoveryError::Server(e.to_string()))?;
            (client, None)
        }
        None => {
            let registry = Arc::new(build_registry(ctx.clone()));
            let server = serve_tcp(registry, "127.0.0.1:0")
                .map_err(|e| DiscoveryError::Server(e.to_string()))?;
            let client = ToolClient::connect_tcp(server.local_addr())
                .map_err(|e| DiscoveryError::Server(e.to_string()))?;
            (client, Some(server))
        }
    };
    let gateway_ref: Option<&dyn ChatBackend> = match config.mode {
        ExecMode::Deterministic => None,
        ExecMode::Llm => gateway.as_deref(),
    };

    let mut decisions: Vec<MetaDecision> = Vec::new();
    let mut last_report: Option<DiagnosticReport> = None;
    let mut all_evaluations: Vec<EvaluatedCandidate> = Vec::new();
    let mut iterations_completed = 0u32;

    let final_verdict = loop {
        let decision =
            meta_step(goal, &memory, last_report.as_ref(), &config.meta, gateway_ref)?;
        let verdict = decision.verdict;
        decisions.push(decision.clone());
        if verdict != Verdict::Continue {
            break verdict;
        }

        let mut context = IterationContext {
            iteration: decision.iteration,
            ..Default::default()
        };
        let stages = [
            (AgentRole::Miner, &decision.instruction_set.miner),
            (AgentRole::Designer, &decision.instruction_set.designer),
            (AgentRole::Emulator, &decision.instruction_set.emulator),
            (AgentRole::Analyst, &decision.instruction_set.analyst),
        ];
        let mut stage_failure: Option<(AgentRole, AgentError)> = None;
        for (role, slot) in stages {
            let InstructionSlot::Run(instruction) = slot else { continue };
            match run_agent_loop(
                role,
                instruction,
                goal,
                &context,
                gateway_ref,
                &client,
                &memory,
                decision.iteration,
            ) {
                Ok(outcome) => match outcome.output {
                    RoleOutput::Knowledge(entries) => context.entries = entries,
                    RoleOutput::Candidates { kept, rejected } => {
                        context.candidates = kept;
                        context.rejected = rejected;
                    }
                    RoleOutput::Evaluations(evals) => {
                        context.evaluations = evals.clone();
                        all_evaluations.extend(evals);
                    }
                    RoleOutput::Report(report) => last_report = Some(report),
                },
                Err(err) => {
                    stage_failure = Some((role, err));
                    break;
                }
            }
        }
        iterations_completed += 1;

        if let Some((role, err)) = stage_failure {
            let rationale =
                format!("stage `{}` hard-failed: {err}", stage_role(role));
            let decision = terminal_decision(
                decisions.last().map(|d| d.iteration).unwrap_or(0),
                Verdict::Infeasible,
                rationale,
            );
            memory.append(crate::memory::EntryDraft::new(
                decision.iteration,
                crate::memory::EntryKind::Decision,
                serde_json::to_value(&decision).expect("decision serializes"),
            ))?;
            decisions.push(decision);
            break Verdict::Infeasible;
        }
    };

    if let Some(server) = server {
        let _ = client.send_shutdown();
        server.shutdown();
    }

    let best_candidate =
        select_best(goal, &all_evaluations, final_verdict, config.meta.risk_adjusted);
    Ok(FinalReport {
        verdict: final_verdict,
        best_candidate,
        iterations: iterations_completed,
        memory_log_path: config.memory_path.display().to_string(),
        decisions,
    })
}
