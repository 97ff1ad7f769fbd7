//! Tool registry: descriptors plus handlers, with argument validation.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::message::{RpcError, HANDLER_ERROR, INVALID_PARAMS, METHOD_NOT_FOUND};
use crate::schema::ObjectSchema;

/// Handler failures surface as application error code -1 with this message.
pub type ToolHandler = Arc<dyn Fn(&Value) -> Result<Value, String> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub description: String,
    pub input_schema: ObjectSchema,
    pub output_schema: ObjectSchema,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("duplicate tool name `{0}`")]
    Duplicate(String),
    #[error("invalid tool name `{0}`: lowercase dot-separated identifiers only")]
    BadName(String),
}

struct RegisteredTool {
    descriptor: ToolDescriptor,
    handler: ToolHandler,
}

/// Named tools with handlers; listing order is name order.
#[derive(Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, RegisteredTool>,
}

fn name_is_valid(name: &str) -> bool {
    !name.is_empty()
        && name.split('.').all(|part| {
            !part.is_empty()
                && part.chars().next().is_some_and(|c| c.is_ascii_lowercase())
                && part.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        })
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        descriptor: ToolDescriptor,
        handler: ToolHandler,
    ) -> Result<(), RegistryError> {
        if !name_is_valid(&descriptor.name) {
            return Err(RegistryError::BadName(descriptor.name.clone()));
        }
        if self.tools.contains_key(&descriptor.name) {
            return Err(RegistryError::Duplicate(descriptor.name.clone()));
        }
        self.tools.insert(descriptor.name.clone(), RegisteredTool { descriptor, handler });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn descriptors(&self) -> Vec<&ToolDescriptor> {
        self.tools.values().map(|t| &t.descriptor).collect()
    }

    /// Validates arguments then invokes the handler.
    ///
    /// Unknown name maps to -32601, schema violations to -32602 (the handler
    /// is never reached), handler failures to -1.
    pub fn dispatch(&self, name: &str, arguments: &Value) -> Result<Value, RpcError> {
        let tool = self
            .tools
            .get(name)
            .ok_or_else(|| RpcError::new(METHOD_NOT_FOUND, format!("unknown tool `{name}`")))?;
        tool.descriptor
            .input_schema
            .validate(arguments)
            .map_err(|e| RpcError::new(INVALID_PARAMS, e.to_string()))?;
        (tool.handler)(arguments).map_err(|msg| RpcError::new(HANDLER_ERROR, msg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::ParamSpec;
    use serde_json::json;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn echo_tool() -> (ToolDescriptor, ToolHandler) {
        let descriptor = ToolDescriptor {
            name: "test.echo".into(),
            description: "returns its arguments".into(),
            input_schema: ObjectSchema::new().field("value", ParamSpec::string(), true),
            output_schema: ObjectSchema::new().field("value", ParamSpec::string(), true),
        };
        (descriptor, Arc::new(|args: &Value| Ok(args.clone())))
    }

    #[test]
    fn dispatch_validates_then_invokes() {
        let mut reg = ToolRegistry::new();
        let (desc, handler) = echo_tool();
        reg.register(desc, handler).unwrap();
        let out = reg.dispatch("test.echo", &json!({"value": "hi"})).unwrap();
        assert_eq!(out, json!({"value": "hi"}));
    }

    #[test]
    fn unknown_tool_is_method_not_found() {
        let reg = ToolRegistry::new();
        let err = reg.dispatch("nosuch", &json!({})).unwrap_err();
        assert_eq!(err.code, METHOD_NOT_FOUND);
    }

    #[test]
    fn invalid_arguments_never_reach_the_handler() {
        let calls = Arc::new(AtomicUsize::new(0));
        let calls2 = calls.clone();
        let mut reg = ToolRegistry::new();
        let (desc, _) = echo_tool();
        reg.register(
            desc,
            Arc::new(move |args: &Value| {
                calls2.fetch_add(1, Ordering::SeqCst);
                Ok(args.clone())
            }),
        )
        .unwrap();
        let err = reg.dispatch("test.echo", &json!({})).unwrap_err();
        assert_eq!(err.code, INVALID_PARAMS);
        assert_eq!(calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn duplicate_and_bad_names_rejected() {
        let mut reg = ToolRegistry::new();
        let (desc, handler) = echo_tool();
        reg.register(desc.clone(), handler.clone()).unwrap();
        assert!(matches!(reg.register(desc.clone(), handler.clone()), Err(RegistryError::Duplicate(_))));
        let mut bad = desc;
        bad.name = "Bad.Name".into();
        assert!(matches!(reg.register(bad, handler), Err(RegistryError::BadName(_))));
    }

    #[test]
    fn handler_failure_maps_to_minus_one() {
        let mut reg = ToolRegistry::new();
        let (desc, _) = echo_tool();
        reg.register(desc, Arc::new(|_: &Value| Err("boom".into()))).unwrap();
        let err = reg.dispatch("test.echo", &json!({"value": "x"})).unwrap_err();
        assert_eq!(err.code, HANDLER_ERROR);
        assert_eq!(err.message, "boom");
    }
}
