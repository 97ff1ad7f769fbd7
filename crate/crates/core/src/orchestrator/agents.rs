//! Functional agent loops: Miner, Designer, Emulator, Analyst.
//!
//! Deterministic mode executes each role's canonical tool sequence directly.
//! LLM mode runs an act loop over the gateway: parse an action block, call
//! the tool, feed the result back, hard-capped at eight tool calls, with one
//! re-prompt on malformed output.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use peromas_mcp::{CallError, ToolCallRecord, ToolClient};

use crate::domain::{legality_check, Candidate};
use crate::gateway::{
    parse_agent_action, ActionError, AgentAction, ChatBackend, ChatExchange, ChatMessage, Role,
    SamplingProfile,
};
use crate::goal::{Goal, Target};
use crate::knowledge::KnowledgeEntry;
use crate::memory::{EntryDraft, EntryKind, MemoryStore};
use crate::tools::{Attribution, DiagnosticReport, PredictionResult};

use super::discovery::{EvaluatedCandidate, IterationContext};
use super::meta::Instruction;

/// Hard cap on tool calls per agent step.
pub const TOOL_CALL_CAP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Miner,
    Designer,
    Emulator,
    Analyst,
}

impl AgentRole {
    pub fn gateway_role(&self) -> Role {
        match self {
            AgentRole::Miner => Role::Miner,
            AgentRole::Designer => Role::Designer,
            AgentRole::Emulator => Role::Analyst,
            AgentRole::Analyst => Role::Analyst,
        }
    }

    fn output_description(&self) -> &'static str {
        match self {
            AgentRole::Miner => "a JSON array of knowledge entries",
            AgentRole::Designer => "a JSON array of candidates",
            AgentRole::Emulator => "a JSON array of evaluated candidates without utility",
            AgentRole::Analyst => "a diagnostic report object",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RoleOutput {
    Knowledge(Vec<KnowledgeEntry>),
    Candidates { kept: Vec<Candidate>, rejected: Vec<(Candidate, Vec<String>)> },
    Evaluations(Vec<EvaluatedCandidate>),
    Report(DiagnosticReport),
}

#[derive(Debug, Clone)]
pub struct AgentRunOutcome {
    pub output: RoleOutput,
    /// Records appended to the client trace during this step.
    pub trace: Vec<ToolCallRecord>,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("tool `{tool}` failed: {message}")]
    Tool { tool: String, message: String },
    #[error("tool-call cap of {cap} exceeded")]
    CapExceeded { cap: usize },
    #[error("model output unusable after re-prompt: {0}")]
    Format(String),
    #[error("final payload failed schema validation after re-prompt: {0}")]
    BadFinal(String),
    #[error("gateway failure: {0}")]
    Gateway(String),
    #[error("memory failure: {0}")]
    Memory(#[from] crate::memory::MemoryError),
    #[error("payload shape error: {0}")]
    Payload(String),
}

fn call(client: &ToolClient, tool: &str, args: Value) -> Result<Value, AgentError> {
    client.call_tool(tool, args).map_err(|e| match e {
        CallError::Server(err) => AgentError::Tool { tool: tool.into(), message: err.message },
        other => AgentError::Tool { tool: tool.into(), message: other.to_string() },
    })
}

fn from_value<T: for<'de> Deserialize<'de>>(value: Value, what: &str) -> Result<T, AgentError> {
    serde_json::from_value(value).map_err(|e| AgentError::Payload(format!("{what}: {e}")))
}

fn log_trace(
    memory: &MemoryStore,
    iteration: u32,
    role: AgentRole,
    records: &[ToolCallRecord],
) -> Result<(), AgentError> {
    for record in records {
        memory.append(
            EntryDraft::new(
                iteration,
                EntryKind::ToolLog,
                json!({
                    "role": role,
                    "record": serde_json::to_value(record).expect("record serializes"),
                }),
            )
            .with_tags([format!("{role:?}").to_lowercase()]),
        )?;
    }
    Ok(())
}

/// Runs one functional agent under its instruction.
///
/// Deterministic mode (no gateway) follows the canonical sequence for the
/// role; with a gateway the model drives tool selection within the cap.
#[allow(clippy::too_many_arguments)]
pub fn run_agent_loop(
    role: AgentRole,
    instruction: &Instruction,
    goal: &Goal,
    context: &IterationContext,
    gateway: Option<&dyn ChatBackend>,
    client: &ToolClient,
    memory: &MemoryStore,
    iteration: u32,
) -> Result<AgentRunOutcome, AgentError> {
    let trace_start = client.trace_len();
    let result = match gateway {
        None => run_deterministic(role, instruction, goal, context, client),
        Some(backend) => run_llm(role, instruction, goal, context, backend, client),
    };
    let trace: Vec<ToolCallRecord> =
        client.trace().into_iter().skip(trace_start).collect();
    log_trace(memory, iteration, role, &trace)?;
    let output = result?;
    persist_output(memory, iteration, instruction, &output)?;
    Ok(AgentRunOutcome { output, trace })
}

fn persist_output(
    memory: &MemoryStore,
    iteration: u32,
    instruction: &Instruction,
    output: &RoleOutput,
) -> Result<(), AgentError> {
    let tags: Vec<String> = instruction.tags.iter().cloned().collect();
    match output {
        RoleOutput::Knowledge(entries) => {
            for entry in entries {
                let mut entry_tags = tags.clone();
                // B-site symbols join hypotheses to evidence.
                if let Ok(c) =
                    crate::domain::parse_composition(&entry.design.composition, crate::domain::IonTable::bundled())
                {
                    for sf in c.site(crate::domain::Site::B) {
                        entry_tags.push(sf.ion.symbol.to_lowercase());
                    }
                }
                memory.append(
                    EntryDraft::new(
                        iteration,
                        EntryKind::Knowledge,
                        serde_json::to_value(entry).expect("entry serializes"),
                    )
                    .with_tags(entry_tags),
                )?;
            }
        }
        RoleOutput::Candidates { kept, .. } => {
            for candidate in kept {
                memory.append(
                    EntryDraft::new(
                        iteration,
                        EntryKind::Candidate,
                        serde_json::to_value(candidate).expect("candidate serializes"),
                    )
                    .with_tags(tags.clone()),
                )?;
            }
        }
        RoleOutput::Evaluations(evals) => {
            for eval in evals {
                memory.append(
                    EntryDraft::new(
                        iteration,
                        EntryKind::Evaluation,
                        serde_json::to_value(eval).expect("evaluation serializes"),
                    )
                    .with_tags(tags.clone()),
                )?;
            }
        }
        RoleOutput::Report(report) => {
            memory.append(
                EntryDraft::new(
                    iteration,
                    EntryKind::Report,
                    serde_json::to_value(report).expect("report serializes"),
                )
                .with_tags(tags.clone()),
            )?;
        }
    }
    Ok(())
}

fn run_deterministic(
    role: AgentRole,
    instruction: &Instruction,
    goal: &Goal,
    context: &IterationContext,
    client: &ToolClient,
) -> Result<RoleOutput, AgentError> {
    match role {
        AgentRole::Miner => {
            let query = instruction
                .parameters
                .get("query")
                .and_then(Value::as_str)
                .unwrap_or("perovskite")
                .to_string();
            let limit = instruction
                .parameters
                .get("limit")
                .and_then(Value::as_u64)
                .unwrap_or(3);
            let hits = call(client, "search.corpus", json!({"query": query, "limit": limit}))?;
            let results = hits
                .get("results")
                .and_then(Value::as_array)
                .cloned()
                .unwrap_or_default();
            let mut entries: Vec<KnowledgeEntry> = Vec::new();
            for hit in results {
                let Some(doc_id) = hit.get("doc_id").and_then(Value::as_str) else { continue };
                let out = call(client, "extract.entries", json!({"doc_id": doc_id}))?;
                let batch: Vec<KnowledgeEntry> =
                    from_value(out.get("entries").cloned().unwrap_or(json!([])), "entries")?;
                entries.extend(batch);
            }
            Ok(RoleOutput::Knowledge(entries))
        }
        AgentRole::Designer => {
            let mut params = instruction.parameters.clone();
            if !context.entries.is_empty() {
                params["seed_entries"] =
                    serde_json::to_value(&context.entries).expect("entries serialize");
            }
            if params.get("count").is_none() {
                params["count"] = json!(5);
            }
            let generated = call(client, "design.generate", params.clone())?;
            let candidates = generated.get("candidates").cloned().unwrap_or(json!([]));
            let constraints = params.get("constraints").cloned().unwrap_or(json!([]));
            let filtered = call(
                client,
                "design.filter",
                json!({"candidates": candidates, "constraints": constraints}),
            )?;
            let kept: Vec<Candidate> =
                from_value(filtered.get("kept").cloned().unwrap_or(json!([])), "kept")?;
            #[derive(Deserialize)]
            struct RejectedItem {
                candidate: Candidate,
                reasons: Vec<String>,
            }
            let rejected: Vec<RejectedItem> =
                from_value(filtered.get("rejected").cloned().unwrap_or(json!([])), "rejected")?;
            Ok(RoleOutput::Candidates {
                kept,
                rejected: rejected.into_iter().map(|r| (r.candidate, r.reasons)).collect(),
            })
        }
        AgentRole::Emulator => {
            let metrics: Vec<Target> = instruction
                .parameters
                .get("metrics")
                .cloned()
                .map(|v| from_value(v, "metrics"))
                .transpose()?
                .unwrap_or_else(|| goal.objectives.iter().map(|o| o.metric).collect());
            let k = instruction.parameters.get("k").and_then(Value::as_u64).unwrap_or(5);
            let mut items: Vec<(String, BTreeMap<Target, PredictionResult>)> = Vec::new();
            for candidate in &context.candidates {
                let mut predictions = BTreeMap::new();
                for &metric in &metrics {
                    let out = call(
                        client,
                        "predict.property",
                        json!({
                            "candidate": serde_json::to_value(candidate).expect("candidate"),
                            "target": metric,
                            "k": k,
                        }),
                    )?;
                    let prediction: PredictionResult = from_value(out, "prediction")?;
                    predictions.insert(metric, prediction);
                }
                items.push((candidate.id.clone(), predictions));
            }
            let ranking_out = call(
                client,
                "predict.utility",
                json!({
                    "candidates": items
                        .iter()
                        .map(|(id, predictions)| json!({"id": id, "predictions": predictions}))
                        .collect::<Vec<_>>(),
                    "objectives": goal.objectives,
                }),
            )?;
            #[derive(Deserialize)]
            struct Ranked {
                id: String,
                utility: f64,
            }
            let ranking: Vec<Ranked> =
                from_value(ranking_out.get("ranking").cloned().unwrap_or(json!([])), "ranking")?;
            let mut evals = Vec::new();
            for ranked in ranking {
                let Some(candidate) =
                    context.candidates.iter().find(|c| c.id == ranked.id).cloned()
                else {
                    continue;
                };
                let predictions = items
                    .iter()
                    .find(|(id, _)| *id == ranked.id)
                    .map(|(_, p)| p.clone())
                    .unwrap_or_default();
                let validity = legality_check(&candidate);
                evals.push(EvaluatedCandidate {
                    candidate,
                    predictions,
                    utility: Some(ranked.utility),
                    validity,
                });
            }
            Ok(RoleOutput::Evaluations(evals))
        }
        AgentRole::Analyst => {
            let evals = &context.evaluations;
            let mut attributions: Vec<Attribution> = Vec::new();
            if let Some(best) = evals.first() {
                let unmet: Vec<Target> = goal
                    .objectives
                    .iter()
                    .filter(|o| {
                        best.predictions.get(&o.metric).map_or(true, |p| !o.met_by(p.y_hat))
                    })
                    .map(|o| o.metric)
                    .collect();
                let targets: Vec<Target> = if unmet.is_empty() {
                    goal.objectives.first().map(|o| o.metric).into_iter().collect()
                } else {
                    unmet
                };
                for metric in targets {
                    let out = call(
                        client,
                        "analyze.attribution",
                        json!({
                            "candidate": serde_json::to_value(&best.candidate).expect("candidate"),
                            "target": metric,
                        }),
                    )?;
                    attributions.push(from_value(out, "attribution")?);
                }
            }
            let report_out = call(
                client,
                "analyze.report",
                json!({
                    "iteration": context.iteration,
                    "objectives": goal.objectives,
                    "kept": context.candidates,
                    "rejected": context
                        .rejected
                        .iter()
                        .map(|(c, reasons)| json!({"candidate": c, "reasons": reasons}))
                        .collect::<Vec<_>>(),
                    "evaluations": evals
                        .iter()
                        .map(|e| json!({
                            "id": e.candidate.id,
                            "predictions": e.predictions,
                            "utility": e.utility.unwrap_or(0.0),
                        }))
                        .collect::<Vec<_>>(),
                    "attributions": attributions,
                }),
            )?;
            Ok(RoleOutput::Report(from_value(report_out, "report")?))
        }
    }
}

fn validate_final(role: AgentRole, payload: &Value) -> Result<RoleOutput, String> {
    match role {
        AgentRole::Miner => serde_json::from_value::<Vec<KnowledgeEntry>>(payload.clone())
            .map(RoleOutput::Knowledge)
            .map_err(|e| e.to_string()),
        AgentRole::Designer => serde_json::from_value::<Vec<Candidate>>(payload.clone())
            .map(|kept| RoleOutput::Candidates { kept, rejected: Vec::new() })
            .map_err(|e| e.to_string()),
        AgentRole::Emulator => {
            #[derive(Deserialize)]
            struct Sans {
                candidate: Candidate,
                predictions: BTreeMap<Target, PredictionResult>,
            }
            serde_json::from_value::<Vec<Sans>>(payload.clone())
                .map(|items| {
                    RoleOutput::Evaluations(
                        items
                            .into_iter()
                            .map(|s| {
                                let validity = legality_check(&s.candidate);
                                EvaluatedCandidate {
                                    candidate: s.candidate,
                                    predictions: s.predictions,
                                    utility: None,
                                    validity,
                                }
                            })
                            .collect(),
                    )
                })
                .map_err(|e| e.to_string())
        }
        AgentRole::Analyst => serde_json::from_value::<DiagnosticReport>(payload.clone())
            .map(RoleOutput::Report)
            .map_err(|e| e.to_string()),
    }
}

fn run_llm(
    role: AgentRole,
    instruction: &Instruction,
    goal: &Goal,
    context: &IterationContext,
    backend: &dyn ChatBackend,
    client: &ToolClient,
) -> Result<RoleOutput, AgentError> {
    let system = format!(
        "You are the {role:?} agent of a perovskite discovery system. Use the available tools \
         via fenced ```action blocks: {{\"action\":\"tool_call\",\"name\":...,\"arguments\":...}} \
         or finish with {{\"action\":\"final\",\"payload\":...}} where the payload is {out}.",
        role = role,
        out = role.output_description(),
    );
    let mut exchange =
        ChatExchange::new(system, SamplingProfile::for_role(role.gateway_role()));
    exchange.push(ChatMessage::user(format!(
        "Instruction: {}\nGoal: {}\nContext: {}",
        instruction.directive,
        serde_json::to_string(goal).expect("goal serializes"),
        serde_json::to_string(&context.summary()).expect("context serializes"),
    )));

    let mut tool_calls = 0usize;
    let mut reprompted_format = false;
    let mut reprompted_final = false;
    loop {
        let completion =
            backend.complete(&exchange).map_err(|e| AgentError::Gateway(e.to_string()))?;
        let parsed = match parse_agent_action(&completion.text) {
            Ok(parsed) => parsed,
            Err(err) => {
                if reprompted_format {
                    let raw = match err {
                        ActionError::NoBlock { raw }
                        | ActionError::BadJson { raw, .. }
                        | ActionError::BadShape { raw, .. } => raw,
                    };
                    return Err(AgentError::Format(raw));
                }
                reprompted_format = true;
                exchange.push(ChatMessage::assistant(completion.text));
                exchange.push(ChatMessage::user(
                    "Your last message had no valid action block. Respond with exactly one \
                     fenced ```action block."
                        .to_string(),
                ));
                continue;
            }
        };
        if parsed.extra_blocks > 0 {
            log::debug!("{role:?}: ignoring {} extra action blocks", parsed.extra_blocks);
        }
        exchange.push(ChatMessage::assistant(completion.text.clone()));
        match parsed.action {
            AgentAction::ToolCall { name, arguments } => {
                if tool_calls >= TOOL_CALL_CAP {
                    return Err(AgentError::CapExceeded { cap: TOOL_CALL_CAP });
                }
                tool_calls += 1;
                let result = client.call_tool(&name, arguments);
                let feedback = match result {
                    Ok(value) => json!({"tool": name, "ok": value}),
                    Err(e) => json!({"tool": name, "error": e.to_string()}),
                };
                exchange.push(ChatMessage::tool(feedback.to_string()));
            }
            AgentAction::Final { payload } => match validate_final(role, &payload) {
                Ok(output) => return Ok(output),
                Err(reason) => {
                    if reprompted_final {
                        return Err(AgentError::BadFinal(reason));
                    }
                    reprompted_final = true;
                    exchange.push(ChatMessage::user(format!(
                        "The final payload failed validation ({reason}). Respond again with a \
                         fenced ```action block whose payload is {}.",
                        role.output_description()
                    )));
                }
            },
        }
    }
}
