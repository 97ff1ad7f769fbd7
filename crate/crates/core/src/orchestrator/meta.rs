//! Meta-agent reasoning: goal alignment, reflection over memory, and
//! strategy formulation into a per-agent instruction set with adaptive
//! SKIP pruning.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::gateway::{ChatBackend, ChatExchange, ChatMessage, Role, SamplingProfile};
use crate::goal::Goal;
use crate::memory::{EntryDraft, EntryKind, MemoryError, MemoryFilter, MemoryStore};
use crate::tools::DiagnosticReport;

use super::discovery::EvaluatedCandidate;

pub const DEFAULT_PRUNE_THRESHOLD: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub directive: String,
    pub tags: BTreeSet<String>,
    pub parameters: Value,
}

/// Either a concrete instruction or SKIP (serialized as the string "SKIP").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstructionSlot {
    Skip(SkipMarker),
    Run(Instruction),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SkipMarker {
    #[serde(rename = "SKIP")]
    Skip,
}

impl InstructionSlot {
    pub fn skip() -> Self {
        InstructionSlot::Skip(SkipMarker::Skip)
    }

    pub fn is_skip(&self) -> bool {
        matches!(self, InstructionSlot::Skip(_))
    }

    pub fn instruction(&self) -> Option<&Instruction> {
        match self {
            InstructionSlot::Run(i) => Some(i),
            InstructionSlot::Skip(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionSet {
    pub miner: InstructionSlot,
    pub designer: InstructionSlot,
    pub emulator: InstructionSlot,
    pub analyst: InstructionSlot,
}

impl InstructionSet {
    pub fn all_skip() -> Self {
        Self {
            miner: InstructionSlot::skip(),
            designer: InstructionSlot::skip(),
            emulator: InstructionSlot::skip(),
            analyst: InstructionSlot::skip(),
        }
    }

    pub fn any_active(&self) -> bool {
        !(self.miner.is_skip()
            && self.designer.is_skip()
            && self.emulator.is_skip()
            && self.analyst.is_skip())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Continue,
    Success,
    BudgetExhausted,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaDecision {
    pub iteration: u32,
    pub verdict: Verdict,
    pub hypotheses: Vec<String>,
    /// Hypotheses from earlier iterations now known not to have worked;
    /// never re-emitted.
    pub failed_hypotheses: Vec<String>,
    pub instruction_set: InstructionSet,
    pub rationale: String,
    /// Candidate id satisfying every objective when verdict is success.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_candidate: Option<String>,
    /// Set when the gateway failed and the rule table took over.
    #[serde(default)]
    pub degraded: bool,
}

#[derive(Debug, Clone)]
pub struct MetaConfig {
    pub prune_threshold: usize,
    pub candidates_per_iteration: usize,
    pub knn_k: usize,
    pub seed: u64,
    /// Gate objectives on y_hat - sigma (maximize) instead of y_hat.
    pub risk_adjusted: bool,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            prune_threshold: DEFAULT_PRUNE_THRESHOLD,
            candidates_per_iteration: 6,
            knn_k: 5,
            seed: 42,
            risk_adjusted: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("memory store failure: {0}")]
    Memory(#[from] MemoryError),
}

fn adjusted_prediction(eval: &EvaluatedCandidate, metric: crate::goal::Target, risk_adjusted: bool) -> Option<f64> {
    eval.predictions.get(&metric).map(|p| {
        if risk_adjusted {
            p.y_hat - p.sigma
        } else {
            p.y_hat
        }
    })
}

/// Scans memory for an evaluation meeting every objective.
fn find_satisfying_evaluation(
    goal: &Goal,
    memory: &MemoryStore,
    risk_adjusted: bool,
) -> Option<EvaluatedCandidate> {
    let mut best: Option<EvaluatedCandidate> = None;
    for entry in memory.query(&MemoryFilter::kind(EntryKind::Evaluation)) {
        let Ok(eval) = serde_json::from_value::<EvaluatedCandidate>(entry.payload) else {
            continue;
        };
        let satisfied = goal.satisfied_by(&eval.candidate, |metric| {
            adjusted_prediction(&eval, metric, risk_adjusted)
        });
        if satisfied {
            let better = match &best {
                Some(current) => {
                    eval.utility.unwrap_or(f64::NEG_INFINITY)
                        > current.utility.unwrap_or(f64::NEG_INFINITY)
                }
                None => true,
            };
            if better {
                best = Some(eval);
            }
        }
    }
    best
}

fn prior_decisions(memory: &MemoryStore) -> Vec<MetaDecision> {
    memory
        .query(&MemoryFilter::kind(EntryKind::Decision))
        .into_iter()
        .filter_map(|e| serde_json::from_value(e.payload).ok())
        .collect()
}

/// Candidate hypothesis strings in priority order for this iteration.
fn hypothesis_pool(goal: &Goal, last_report: Option<&DiagnosticReport>, iteration: u32) -> Vec<String> {
    let mut pool = Vec::new();
    if let Some(report) = last_report {
        for strategy in &report.strategies {
            pool.push(format!("apply: {strategy}"));
        }
        for metric in &report.objectives_unmet {
            pool.push(format!("focus-{}", metric.as_str()));
        }
    }
    for tag in goal.tags() {
        pool.push(format!("respect-{tag}"));
    }
    // Indexed fallback so fresh hypotheses never run out.
    pool.push(format!("explore-region-{iteration}"));
    pool
}

fn llm_draft(
    gateway: &dyn ChatBackend,
    goal: &Goal,
    last_report: Option<&DiagnosticReport>,
    failed: &[String],
) -> Option<(Vec<String>, String)> {
    let mut exchange = ChatExchange::new(
        "You are the planning unit of a materials-discovery system. Respond with a fenced \
         ```action block containing {\"action\":\"final\",\"payload\":{\"hypotheses\":[...],\
         \"rationale\":\"...\"}}.",
        SamplingProfile::for_role(Role::Meta),
    );
    let context = json!({
        "goal": goal,
        "last_report": last_report,
        "failed_hypotheses": failed,
    });
    exchange.push(ChatMessage::user(format!(
        "Plan the next iteration. Context:\n{context}"
    )));
    let completion = gateway.complete(&exchange).ok()?;
    let parsed = crate::gateway::parse_agent_action(&completion.text).ok()?;
    match parsed.action {
        crate::gateway::AgentAction::Final { payload } => {
            let hypotheses: Vec<String> = payload
                .get("hypotheses")?
                .as_array()?
                .iter()
                .filter_map(|v| v.as_str().map(str::to_string))
                .collect();
            let rationale = payload.get("rationale")?.as_str()?.to_string();
            Some((hypotheses, rationale))
        }
        _ => None,
    }
}

/// One planning step: goal alignment, reflection, strategy formulation.
/// The resulting decision is appended to memory before returning.
pub fn meta_step(
    goal: &Goal,
    memory: &MemoryStore,
    last_report: Option<&DiagnosticReport>,
    config: &MetaConfig,
    gateway: Option<&dyn ChatBackend>,
) -> Result<MetaDecision, MetaError> {
    let previous = prior_decisions(memory);
    let iteration = previous.len() as u32 + 1;

    // Stage 1: goal alignment.
    let mut decision = if let Some(satisfying) =
        find_satisfying_evaluation(goal, memory, config.risk_adjusted)
    {
        MetaDecision {
            iteration,
            verdict: Verdict::Success,
            hypotheses: Vec::new(),
            failed_hypotheses: Vec::new(),
            instruction_set: InstructionSet::all_skip(),
            rationale: format!(
                "goal alignment: `{}` meets every objective threshold",
                satisfying.candidate.id
            ),
            success_candidate: Some(satisfying.candidate.id.clone()),
            degraded: false,
        }
    } else if last_report.is_some_and(|r| r.infeasible) {
        MetaDecision {
            iteration,
            verdict: Verdict::Infeasible,
            hypotheses: Vec::new(),
            failed_hypotheses: Vec::new(),
            instruction_set: InstructionSet::all_skip(),
            rationale: format!(
                "previous iteration kept zero candidates (modal rejection: {})",
                last_report
                    .and_then(|r| r.modal_rejection_reason.clone())
                    .unwrap_or_else(|| "unknown".into())
            ),
            success_candidate: None,
            degraded: false,
        }
    } else if iteration >= goal.max_iterations {
        MetaDecision {
            iteration,
            verdict: Verdict::BudgetExhausted,
            hypotheses: Vec::new(),
            failed_hypotheses: Vec::new(),
            instruction_set: InstructionSet::all_skip(),
            rationale: format!("iteration budget of {} spent", goal.max_iterations),
            success_candidate: None,
            degraded: false,
        }
    } else {
        // Stage 2: reflection. Everything hypothesized before this point did
        // not reach the goal, so it is recorded as failed and never re-used.
        let failed: Vec<String> = {
            let mut seen = BTreeSet::new();
            previous
                .iter()
                .flat_map(|d| d.hypotheses.iter().cloned())
                .filter(|h| seen.insert(h.clone()))
                .collect()
        };
        let mut degraded = false;
        let (mut hypotheses, rationale) = match gateway {
            Some(backend) => match llm_draft(backend, goal, last_report, &failed) {
                Some(draft) => draft,
                None => {
                    degraded = true;
                    (Vec::new(), String::new())
                }
            },
            None => (Vec::new(), String::new()),
        };
        hypotheses.retain(|h| !failed.contains(h));
        if hypotheses.is_empty() {
            hypotheses = hypothesis_pool(goal, last_report, iteration)
                .into_iter()
                .filter(|h| !failed.contains(h))
                .take(2)
                .collect();
        }
        let rationale = if rationale.is_empty() {
            format!("iteration {iteration}: pursuing {}", hypotheses.join("; "))
        } else {
            rationale
        };

        // Stage 3: strategy formulation with adaptive pruning.
        let tags = goal.tags();
        let coverage = memory.coverage(EntryKind::Knowledge, &tags);
        let miner = if coverage >= config.prune_threshold {
            InstructionSlot::skip()
        } else {
            InstructionSlot::Run(Instruction {
                directive: "retrieve prior results relevant to the goal and extract entries"
                    .into(),
                tags: tags.clone(),
                parameters: json!({
                    "query": tags.iter().cloned().collect::<Vec<_>>().join(" "),
                    "limit": 3,
                }),
            })
        };
        let designer = InstructionSlot::Run(Instruction {
            directive: "propose legal candidates around the best known designs".into(),
            tags: tags.clone(),
            parameters: json!({
                "count": config.candidates_per_iteration,
                "seed": config.seed.wrapping_add(iteration as u64),
                "id_prefix": format!("i{iteration}"),
                "constraints": goal.constraints,
            }),
        });
        let emulator = InstructionSlot::Run(Instruction {
            directive: "predict every goal metric with uncertainty and rank by utility".into(),
            tags: tags.clone(),
            parameters: json!({
                "metrics": goal.objectives.iter().map(|o| o.metric).collect::<Vec<_>>(),
                "k": config.knn_k,
            }),
        });
        let analyst = InstructionSlot::Run(Instruction {
            directive: "validate candidates, attribute unmet objectives, and report".into(),
            tags: tags.clone(),
            parameters: json!({}),
        });

        MetaDecision {
            iteration,
            verdict: Verdict::Continue,
            hypotheses,
            failed_hypotheses: failed,
            instruction_set: InstructionSet { miner, designer, emulator, analyst },
            rationale,
            success_candidate: None,
            degraded,
        }
    };

    if decision.verdict != Verdict::Continue {
        decision.instruction_set = InstructionSet::all_skip();
    }
    memory.append(
        EntryDraft::new(
            decision.iteration,
            EntryKind::Decision,
            serde_json::to_value(&decision).expect("decision serializes"),
        )
        .with_tags(goal.tags()),
    )?;
    Ok(decision)
}
