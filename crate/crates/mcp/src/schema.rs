//! Minimal argument-schema language for tool inputs and outputs.
//!
//! Covers exactly what the registry needs: named parameters with a type,
//! required-ness, enum values, numeric min/max, and array item types.
//! Not JSON-Schema.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ParamType {
    String,
    Number,
    Integer,
    Boolean,
    Enum { values: Vec<String> },
    Array {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        items: Option<Box<ParamType>>,
    },
    Object,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    #[serde(flatten)]
    pub kind: ParamType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maximum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl ParamSpec {
    pub fn new(kind: ParamType) -> Self {
        Self { kind, minimum: None, maximum: None, description: None }
    }

    pub fn string() -> Self {
        Self::new(ParamType::String)
    }

    pub fn number() -> Self {
        Self::new(ParamType::Number)
    }

    pub fn integer() -> Self {
        Self::new(ParamType::Integer)
    }

    pub fn boolean() -> Self {
        Self::new(ParamType::Boolean)
    }

    pub fn object() -> Self {
        Self::new(ParamType::Object)
    }

    pub fn array() -> Self {
        Self::new(ParamType::Array { items: None })
    }

    pub fn array_of(item: ParamType) -> Self {
        Self::new(ParamType::Array { items: Some(Box::new(item)) })
    }

    pub fn enumeration<S: Into<String>>(values: impl IntoIterator<Item = S>) -> Self {
        Self::new(ParamType::Enum { values: values.into_iter().map(Into::into).collect() })
    }

    pub fn min(mut self, v: f64) -> Self {
        self.minimum = Some(v);
        self
    }

    pub fn max(mut self, v: f64) -> Self {
        self.maximum = Some(v);
        self
    }

    pub fn describe(mut self, text: impl Into<String>) -> Self {
        self.description = Some(text.into());
        self
    }
}

/// Schema for a tool's named parameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectSchema {
    pub properties: BTreeMap<String, ParamSpec>,
    #[serde(default)]
    pub required: BTreeSet<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("arguments must be a JSON object")]
    NotAnObject,
    #[error("missing required parameter `{0}`")]
    MissingRequired(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{name}`: {reason}")]
    BadValue { name: String, reason: String },
}

impl ObjectSchema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(mut self, name: impl Into<String>, spec: ParamSpec, required: bool) -> Self {
        let name = name.into();
        if required {
            self.required.insert(name.clone());
        }
        self.properties.insert(name, spec);
        self
    }

    /// Validates an argument object against this schema.
    pub fn validate(&self, args: &Value) -> Result<(), SchemaError> {
        let map = args.as_object().ok_or(SchemaError::NotAnObject)?;
        for name in &self.required {
            if !map.contains_key(name) {
                return Err(SchemaError::MissingRequired(name.clone()));
            }
        }
        for (name, value) in map {
            let spec = self
                .properties
                .get(name)
                .ok_or_else(|| SchemaError::UnknownParameter(name.clone()))?;
            check_value(name, &spec.kind, value)?;
            if let Some(n) = value.as_f64() {
                if let Some(min) = spec.minimum {
                    if n < min {
                        return Err(SchemaError::BadValue {
                            name: name.clone(),
                            reason: format!("{n} below minimum {min}"),
                        });
                    }
                }
                if let Some(max) = spec.maximum {
                    if n > max {
                        return Err(SchemaError::BadValue {
                            name: name.clone(),
                            reason: format!("{n} above maximum {max}"),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_value(name: &str, kind: &ParamType, value: &Value) -> Result<(), SchemaError> {
    let bad = |reason: String| SchemaError::BadValue { name: name.to_string(), reason };
    match kind {
        ParamType::String => value
            .is_string()
            .then_some(())
            .ok_or_else(|| bad(format!("expected string, got {value}"))),
        ParamType::Number => value
            .is_number()
            .then_some(())
            .ok_or_else(|| bad(format!("expected number, got {value}"))),
        ParamType::Integer => (value.is_i64() || value.is_u64())
            .then_some(())
            .ok_or_else(|| bad(format!("expected integer, got {value}"))),
        ParamType::Boolean => value
            .is_boolean()
            .then_some(())
            .ok_or_else(|| bad(format!("expected boolean, got {value}"))),
        ParamType::Object => value
            .is_object()
            .then_some(())
            .ok_or_else(|| bad(format!("expected object, got {value}"))),
        ParamType::Enum { values } => match value.as_str() {
            Some(s) if values.iter().any(|v| v == s) => Ok(()),
            Some(s) => Err(bad(format!("`{s}` not one of {values:?}"))),
            None => Err(bad(format!("expected enum string, got {value}"))),
        },
        ParamType::Array { items } => {
            let arr = value
                .as_array()
                .ok_or_else(|| bad(format!("expected array, got {value}")))?;
            if let Some(item_kind) = items {
                for (i, item) in arr.iter().enumerate() {
                    check_value(&format!("{name}[{i}]"), item_kind, item)?;
                }
            }
            Ok(())
        }
    }
}
