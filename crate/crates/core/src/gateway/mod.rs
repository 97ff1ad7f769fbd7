//! Pluggable text-generation backend with role-specific sampling profiles.

mod action;
mod http;
mod mock;

pub use action::{parse_agent_action, ActionError, AgentAction, ParsedAction};
pub use http::HttpBackend;
pub use mock::{MockBackend, MockScript};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Miner,
    Analyst,
    Designer,
    Meta,
    Judge,
}

/// Sampling parameters transmitted verbatim to the backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingProfile {
    pub role: Role,
    pub temperature: f64,
    pub top_p: f64,
}

impl SamplingProfile {
    /// Fixed per-role defaults: miner/analyst 0.1, designer 0.7 with
    /// top-p 0.9, meta 0.3, judge locked at 0.1.
    pub fn for_role(role: Role) -> Self {
        let (temperature, top_p) = match role {
            Role::Miner | Role::Analyst | Role::Judge => (0.1, 1.0),
            Role::Designer => (0.7, 0.9),
            Role::Meta => (0.3, 1.0),
        };
        Self { role, temperature, top_p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: ChatRole::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: ChatRole::Assistant, content: content.into() }
    }

    pub fn tool(content: impl Into<String>) -> Self {
        Self { role: ChatRole::Tool, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub system: String,
    pub messages: Vec<ChatMessage>,
    pub profile: SamplingProfile,
}

impl ChatExchange {
    pub fn new(system: impl Into<String>, profile: SamplingProfile) -> Self {
        Self { system: system.into(), messages: Vec::new(), profile }
    }

    pub fn push(&mut self, message: ChatMessage) -> &mut Self {
        self.messages.push(message);
        self
    }

    /// Everything the model sees, for substring-matching mock rules.
    pub fn full_text(&self) -> String {
        let mut text = self.system.clone();
        for m in &self.messages {
            text.push('\n');
            text.push_str(&m.content);
        }
        text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("empty exchange: at least one message required")]
    EmptyExchange,
    #[error("mock script exhausted after {consumed} answers")]
    ScriptUnderrun { consumed: usize },
    #[error("no mock rule matched the prompt")]
    NoRuleMatched,
    #[error("backend http error: {0}")]
    Http(String),
    #[error("backend response missing text at `{path}`")]
    ResponsePath { path: String },
}

/// A chat backend. Handles are shareable; concurrent `complete` calls are
/// allowed.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, exchange: &ChatExchange) -> Result<Completion, GatewayError>;
    fn backend_id(&self) -> &str;
}

pub(crate) fn elapsed_ms(start: std::time::Instant) -> u64 {
    Duration::as_millis(&start.elapsed()) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn role_profiles_match_the_fixed_defaults() {
        let cases = [
            (Role::Miner, 0.1, 1.0),
            (Role::Analyst, 0.1, 1.0),
            (Role::Designer, 0.7, 0.9),
            (Role::Meta, 0.3, 1.0),
            (Role::Judge, 0.1, 1.0),
        ];
        for (role, temperature, top_p) in cases {
            let p = SamplingProfile::for_role(role);
            assert_eq!(p.temperature, temperature, "{role:?}");
            assert_eq!(p.top_p, top_p, "{role:?}");
        }
    }
}
