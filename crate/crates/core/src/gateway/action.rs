//! Agent action grammar: a fenced code block tagged `action` containing one
//! JSON object with `"action": "tool_call" | "final"`.

use once_cell::sync::Lazy;
use regex::Regex;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum AgentAction {
    ToolCall { name: String, arguments: Value },
    Final { payload: Value },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedAction {
    pub action: AgentAction,
    /// Extra action blocks beyond the first; nonzero flags a diagnostics note.
    pub extra_blocks: usize,
}

#[derive(Debug, Error)]
pub enum ActionError {
    /// Carries the raw model text so the loop can re-prompt with it.
    #[error("no action block found in model output")]
    NoBlock { raw: String },
    #[error("action block is not valid JSON: {reason}")]
    BadJson { reason: String, raw: String },
    #[error("action block malformed: {reason}")]
    BadShape { reason: String, raw: String },
}

static ACTION_BLOCK: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?s)```action\s*(\{.*?\})\s*```").expect("static regex"));

/// Extracts the first well-formed action block from model text.
pub fn parse_agent_action(text: &str) -> Result<ParsedAction, ActionError> {
    let mut blocks = ACTION_BLOCK.captures_iter(text);
    let first = blocks
        .next()
        .ok_or_else(|| ActionError::NoBlock { raw: text.to_string() })?;
    let extra_blocks = blocks.count();
    let body = first.get(1).expect("capture group").as_str();
    let value: Value = serde_json::from_str(body).map_err(|e| ActionError::BadJson {
        reason: e.to_string(),
        raw: text.to_string(),
    })?;
    let bad = |reason: &str| ActionError::BadShape {
        reason: reason.to_string(),
        raw: text.to_string(),
    };
    let action = match value.get("action").and_then(Value::as_str) {
        Some("tool_call") => {
            let name = value
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| bad("tool_call requires a string `name`"))?
                .to_string();
            let arguments = value.get("arguments").cloned().unwrap_or_else(|| Value::Object(Default::default()));
            AgentAction::ToolCall { name, arguments }
        }
        Some("final") => {
            let payload = value
                .get("payload")
                .cloned()
                .ok_or_else(|| bad("final requires a `payload`"))?;
            AgentAction::Final { payload }
        }
        Some(other) => return Err(bad(&format!("unknown action `{other}`"))),
        None => return Err(bad("missing `action` key")),
    };
    Ok(ParsedAction { action, extra_blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn tool_call_block_is_extracted() {
        let text = "I will predict the efficiency.\n```action\n{\"action\":\"tool_call\",\"name\":\"predict.property\",\"arguments\":{\"target\":\"pce\"}}\n```\n";
        let parsed = parse_agent_action(text).unwrap();
        assert_eq!(
            parsed.action,
            AgentAction::ToolCall {
                name: "predict.property".into(),
                arguments: json!({"target": "pce"})
            }
        );
        assert_eq!(parsed.extra_blocks, 0);
    }

    #[test]
    fn prose_without_a_fence_is_a_format_error() {
        let err = parse_agent_action("just some thoughts, no action").unwrap_err();
        assert!(matches!(err, ActionError::NoBlock { raw } if raw.contains("thoughts")));
    }

    #[test]
    fn first_of_two_blocks_wins_and_the_second_is_flagged() {
        let text = "```action\n{\"action\":\"final\",\"payload\":{\"v\":1}}\n```\nmore\n```action\n{\"action\":\"final\",\"payload\":{\"v\":2}}\n```";
        let parsed = parse_agent_action(text).unwrap();
        assert_eq!(parsed.action, AgentAction::Final { payload: json!({"v": 1}) });
        assert_eq!(parsed.extra_blocks, 1);
    }

    #[test]
    fn malformed_json_and_shapes_are_rejected() {
        assert!(matches!(
            parse_agent_action("```action\n{broken\n```"),
            Err(ActionError::NoBlock { .. }) | Err(ActionError::BadJson { .. })
        ));
        assert!(matches!(
            parse_agent_action("```action\n{\"action\":\"dance\"}\n```"),
            Err(ActionError::BadShape { .. })
        ));
        assert!(matches!(
            parse_agent_action("```action\n{\"action\":\"tool_call\"}\n```"),
            Err(ActionError::BadShape { .. })
        ));
    }
}
