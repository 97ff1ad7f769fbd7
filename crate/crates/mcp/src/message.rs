//! JSON-RPC 2.0 message model with a byte-stable line codec.
//!
//! Every message is exactly one of request, notification, or response.
//! Encoding is canonical: compact JSON, keys in lexicographic order, one
//! trailing newline, no raw newline bytes inside the line.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const INTERNAL_ERROR: i64 = -32603;
/// Application-level tool handler failure.
pub const HANDLER_ERROR: i64 = -1;

/// Request/response correlation id: integer or string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RpcId {
    Num(i64),
    Str(String),
}

impl std::fmt::Display for RpcId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RpcId::Num(n) => write!(f, "{n}"),
            RpcId::Str(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcError {
    pub code: i64,
    pub message: String,
}

impl RpcError {
    pub fn new(code: i64, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

/// One JSON-RPC 2.0 message. `params` of `Value::Null` means "absent".
#[derive(Debug, Clone, PartialEq)]
pub enum RpcMessage {
    Request { id: RpcId, method: String, params: Value },
    Notification { method: String, params: Value },
    Response { id: RpcId, outcome: Result<Value, RpcError> },
}

impl RpcMessage {
    pub fn request(id: i64, method: impl Into<String>, params: Value) -> Self {
        RpcMessage::Request { id: RpcId::Num(id), method: method.into(), params }
    }

    pub fn notification(method: impl Into<String>, params: Value) -> Self {
        RpcMessage::Notification { method: method.into(), params }
    }

    pub fn result(id: RpcId, result: Value) -> Self {
        RpcMessage::Response { id, outcome: Ok(result) }
    }

    pub fn error(id: RpcId, code: i64, message: impl Into<String>) -> Self {
        RpcMessage::Response { id, outcome: Err(RpcError::new(code, message)) }
    }
}

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("invalid message shape: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    /// Malformed JSON; maps to -32700 server-side.
    #[error("parse error: {0}")]
    Parse(String),
    /// Well-formed JSON that is not a valid JSON-RPC 2.0 message; maps to -32600.
    #[error("invalid request: {0}")]
    Invalid(String),
}

/// Serializes a JSON value compactly with object keys in lexicographic order.
///
/// Independent of serde_json's map backing so the encoding stays byte-stable
/// regardless of enabled features.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("string serializes"));
                out.push(':');
                write_canonical(&map[*key], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        leaf => out.push_str(&serde_json::to_string(leaf).expect("leaf serializes")),
    }
}

fn validate_params(params: &Value) -> Result<(), EncodeError> {
    match params {
        Value::Null | Value::Object(_) | Value::Array(_) => Ok(()),
        other => Err(EncodeError::Invalid(format!(
            "params must be structured (object or array), got {other}"
        ))),
    }
}

/// Encodes a message as one canonical JSON line terminated by a single newline.
///
/// Fails before emitting any bytes when the message violates the shape
/// invariants (empty method, unstructured params).
pub fn encode_message(msg: &RpcMessage) -> Result<Vec<u8>, EncodeError> {
    let value = match msg {
        RpcMessage::Request { id, method, params } => {
            if method.is_empty() {
                return Err(EncodeError::Invalid("empty method".into()));
            }
            validate_params(params)?;
            let mut map = serde_json::Map::new();
            map.insert("jsonrpc".into(), Value::String("2.0".into()));
            map.insert("id".into(), serde_json::to_value(id).unwrap());
            map.insert("method".into(), Value::String(method.clone()));
            if !params.is_null() {
                map.insert("params".into(), params.clone());
            }
            Value::Object(map)
        }
        RpcMessage::Notification { method, params } => {
            if method.is_empty() {
                return Err(EncodeError::Invalid("empty method".into()));
            }
            validate_params(params)?;
            let mut map = serde_json::Map::new();
            map.insert("jsonrpc".into(), Value::String("2.0".into()));
            map.insert("method".into(), Value::String(method.clone()));
            if !params.is_null() {
                map.insert("params".into(), params.clone());
            }
            Value::Object(map)
        }
        RpcMessage::Response { id, outcome } => {
            let mut map = serde_json::Map::new();
            map.insert("jsonrpc".into(), Value::String("2.0".into()));
            map.insert("id".into(), serde_json::to_value(id).unwrap());
            match outcome {
                Ok(result) => {
                    map.insert("result".into(), result.clone());
                }
                Err(err) => {
                    map.insert("error".into(), serde_json::to_value(err).unwrap());
                }
            }
            Value::Object(map)
        }
    };
    let mut line = canonical_json(&value).into_bytes();
    debug_assert!(!line.contains(&b'\n'), "canonical line must not contain raw newlines");
    line.push(b'\n');
    Ok(line)
}

/// A raw parse-error line for inputs the server could not decode.
///
/// Such lines have no usable id; per JSON-RPC 2.0 they are answered with
/// `"id": null`, which is deliberately outside the [`RpcMessage`] model.
pub fn encode_detached_error(code: i64, message: &str) -> Vec<u8> {
    let value = serde_json::json!({
        "jsonrpc": "2.0",
        "id": Value::Null,
        "error": { "code": code, "message": message },
    });
    let mut line = canonical_json(&value).into_bytes();
    line.push(b'\n');
    line
}

fn decode_id(v: &Value) -> Result<RpcId, DecodeError> {
    match v {
        Value::Number(n) => n
            .as_i64()
            .map(RpcId::Num)
            .ok_or_else(|| DecodeError::Invalid(format!("id must be an integer, got {n}"))),
        Value::String(s) => Ok(RpcId::Str(s.clone())),
        other => Err(DecodeError::Invalid(format!("id must be integer or string, got {other}"))),
    }
}

/// Parses one transport line (trailing newline optional) and classifies it.
pub fn decode_message(line: &[u8]) -> Result<RpcMessage, DecodeError> {
    let value: Value =
        serde_json::from_slice(line).map_err(|e| DecodeError::Parse(e.to_string()))?;
    let map = match value {
        Value::Object(map) => map,
        other => return Err(DecodeError::Invalid(format!("message must be an object, got {other}"))),
    };
    match map.get("jsonrpc") {
        Some(Value::String(v)) if v == "2.0" => {}
        other => {
            return Err(DecodeError::Invalid(format!("jsonrpc version must be \"2.0\", got {other:?}")))
        }
    }

    let method = match map.get("method") {
        None => None,
        Some(Value::String(m)) => Some(m.clone()),
        Some(other) => {
            return Err(DecodeError::Invalid(format!("method must be a string, got {other}")))
        }
    };
    let id = map.get("id").map(decode_id).transpose()?;
    let has_result = map.contains_key("result");
    let has_error = map.contains_key("error");

    match (method, id, has_result, has_error) {
        (Some(method), Some(id), false, false) => {
            let params = map.get("params").cloned().unwrap_or(Value::Null);
            if !matches!(params, Value::Null | Value::Object(_) | Value::Array(_)) {
                return Err(DecodeError::Invalid("params must be structured".into()));
            }
            Ok(RpcMessage::Request { id, method, params })
        }
        (Some(method), None, false, false) => {
            let params = map.get("params").cloned().unwrap_or(Value::Null);
            if !matches!(params, Value::Null | Value::Object(_) | Value::Array(_)) {
                return Err(DecodeError::Invalid("params must be structured".into()));
            }
            Ok(RpcMessage::Notification { method, params })
        }
        (None, Some(id), true, false) => {
            Ok(RpcMessage::Response { id, outcome: Ok(map["result"].clone()) })
        }
        (None, Some(id), false, true) => {
            let err: RpcError = serde_json::from_value(map["error"].clone())
                .map_err(|e| DecodeError::Invalid(format!("malformed error object: {e}")))?;
            Ok(RpcMessage::Response { id, outcome: Err(err) })
        }
        (m, i, r, e) => Err(DecodeError::Invalid(format!(
            "not a request, notification, or response (method={}, id={}, result={r}, error={e})",
            m.is_some(),
            i.is_some(),
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn request_encodes_to_one_line() {
        let msg = RpcMessage::request(1, "tools/list", json!({}));
        let line = encode_message(&msg).unwrap();
        let text = std::str::from_utf8(&line).unwrap();
        assert!(text.ends_with('\n'));
        assert_eq!(text.matches('\n').count(), 1);
        assert!(text.contains("\"method\":\"tools/list\""));
    }

    #[test]
    fn encode_is_stable_under_round_trip() {
        let msg = RpcMessage::request(7, "tools/call", json!({"name": "x", "arguments": {"b": 2, "a": 1}}));
        let once = encode_message(&msg).unwrap();
        let again = encode_message(&decode_message(&once).unwrap()).unwrap();
        assert_eq!(once, again);
    }

    #[test]
    fn embedded_newline_is_escaped_into_a_single_transport_line() {
        let msg = RpcMessage::request(1, "tools/call", json!({"text": "line1\nline2"}));
        let line = encode_message(&msg).unwrap();
        let body = &line[..line.len() - 1];
        assert!(!body.contains(&b'\n'));
        assert!(std::str::from_utf8(body).unwrap().contains("line1\\nline2"));
        let splits: Vec<_> = line.split(|b| *b == b'\n').filter(|s| !s.is_empty()).collect();
        assert_eq!(splits.len(), 1);
    }

    #[test]
    fn keys_are_lexicographic() {
        let msg = RpcMessage::request(1, "m", json!({"zeta": 1, "alpha": 2}));
        let text = String::from_utf8(encode_message(&msg).unwrap()).unwrap();
        let id_pos = text.find("\"id\"").unwrap();
        let jsonrpc_pos = text.find("\"jsonrpc\"").unwrap();
        let method_pos = text.find("\"method\"").unwrap();
        assert!(id_pos < jsonrpc_pos && jsonrpc_pos < method_pos);
        assert!(text.find("\"alpha\"").unwrap() < text.find("\"zeta\"").unwrap());
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(decode_message(b"{"), Err(DecodeError::Parse(_))));
    }

    #[test]
    fn response_with_result_decodes() {
        let msg = decode_message(br#"{"jsonrpc":"2.0","id":3,"result":{"ok":true}}"#).unwrap();
        assert_eq!(msg, RpcMessage::result(RpcId::Num(3), json!({"ok": true})));
    }

    #[test]
    fn classification_table_over_presence_combinations() {
        // All 8 presence combinations of {method, result, error}, with id
        // present, plus the id-absent variants that matter.
        let cases: Vec<(Value, bool)> = vec![
            (json!({"jsonrpc":"2.0","id":1,"method":"m"}), true),              // request
            (json!({"jsonrpc":"2.0","method":"m"}), true),                     // notification
            (json!({"jsonrpc":"2.0","id":1,"result":1}), true),                // response/result
            (json!({"jsonrpc":"2.0","id":1,"error":{"code":-1,"message":"x"}}), true), // response/error
            (json!({"jsonrpc":"2.0","id":1,"result":1,"error":{"code":-1,"message":"x"}}), false),
            (json!({"jsonrpc":"2.0","id":1,"method":"m","result":1}), false),
            (json!({"jsonrpc":"2.0","id":1,"method":"m","error":{"code":-1,"message":"x"}}), false),
            (json!({"jsonrpc":"2.0","id":1,"method":"m","result":1,"error":{"code":-1,"message":"x"}}), false),
            (json!({"jsonrpc":"2.0","id":1}), false),                          // nothing at all
            (json!({"jsonrpc":"2.0","result":1}), false),                      // result without id
        ];
        for (value, ok) in cases {
            let line = serde_json::to_vec(&value).unwrap();
            let got = decode_message(&line);
            assert_eq!(got.is_ok(), ok, "case {value}: got {got:?}");
            if !ok {
                assert!(matches!(got, Err(DecodeError::Invalid(_))));
            }
        }
    }

    #[test]
    fn detached_parse_error_line_shape() {
        let line = encode_detached_error(PARSE_ERROR, "parse error");
        let v: Value = serde_json::from_slice(&line).unwrap();
        assert_eq!(v["id"], Value::Null);
        assert_eq!(v["error"]["code"], json!(-32700));
    }

    #[test]
    fn unstructured_params_rejected_before_any_bytes() {
        let msg = RpcMessage::request(1, "m", json!(42));
        assert!(encode_message(&msg).is_err());
    }
}
