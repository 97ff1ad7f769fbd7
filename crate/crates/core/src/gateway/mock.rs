//! Deterministic scripted backend for offline runs and golden tests.

use std::sync::Mutex;

use super::{ChatBackend, ChatExchange, Completion, GatewayError};

/// Sequential scripts answer in order; rule scripts answer by first matching
/// prompt substring.
#[derive(Debug, Clone)]
pub enum MockScript {
    Sequential(Vec<String>),
    Rules(Vec<(String, String)>),
}

struct MockState {
    script: MockScript,
    cursor: usize,
    captured: Vec<ChatExchange>,
}

pub struct MockBackend {
    id: String,
    state: Mutex<MockState>,
}

impl MockBackend {
    pub fn sequential<S: Into<String>>(answers: impl IntoIterator<Item = S>) -> Self {
        Self::new(MockScript::Sequential(answers.into_iter().map(Into::into).collect()))
    }

    pub fn rules<K: Into<String>, V: Into<String>>(
        rules: impl IntoIterator<Item = (K, V)>,
    ) -> Self {
        Self::new(MockScript::Rules(
            rules.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        ))
    }

    pub fn new(script: MockScript) -> Self {
        Self {
            id: "mock".to_string(),
            state: Mutex::new(MockState { script, cursor: 0, captured: Vec::new() }),
        }
    }

    /// Every exchange this backend has served, for prompt-capture assertions.
    pub fn captured(&self) -> Vec<ChatExchange> {
        self.state.lock().expect("mock lock").captured.clone()
    }

    pub fn calls(&self) -> usize {
        self.state.lock().expect("mock lock").captured.len()
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, exchange: &ChatExchange) -> Result<Completion, GatewayError> {
        if exchange.messages.is_empty() {
            return Err(GatewayError::EmptyExchange);
        }
        let mut state = self.state.lock().expect("mock lock");
        state.captured.push(exchange.clone());
        let text = match &state.script {
            MockScript::Sequential(answers) => {
                let consumed = state.cursor;
                let answer = answers
                    .get(consumed)
                    .cloned()
                    .ok_or(GatewayError::ScriptUnderrun { consumed })?;
                state.cursor += 1;
                answer
            }
            MockScript::Rules(rules) => {
                let haystack = exchange.full_text();
                rules
                    .iter()
                    .find(|(needle, _)| haystack.contains(needle.as_str()))
                    .map(|(_, answer)| answer.clone())
                    .ok_or(GatewayError::NoRuleMatched)?
            }
        };
        Ok(Completion {
            text,
            backend_id: self.id.clone(),
            latency_ms: 0,
            prompt_tokens: None,
            completion_tokens: None,
        })
    }

    fn backend_id(&self) -> &str {
        &self.id
    }
}
