//! Meta-agent PDCA state machine and the four functional agent loops.

mod agents;
mod discovery;
mod meta;
mod replay;

pub use agents::{run_agent_loop, AgentError, AgentRole, AgentRunOutcome, RoleOutput, TOOL_CALL_CAP};
pub use discovery::{
    run_discovery, DiscoveryConfig, DiscoveryError, EvaluatedCandidate, ExecMode, FinalReport,
    IterationContext,
};
pub use meta::{
    meta_step, Instruction, InstructionSet, InstructionSlot, MetaConfig, MetaDecision, MetaError,
    Verdict, DEFAULT_PRUNE_THRESHOLD,
};
pub use replay::{replay_report, verify_pruning_soundness, verify_verdict_soundness, ReplayError};
