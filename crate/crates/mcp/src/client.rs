//! Tool client with per-session invocation trace.
//!
//! A background reader thread matches responses to in-flight requests by id,
//! so calls may be issued concurrently from multiple threads. Every
//! `call_tool` appends exactly one [`ToolCallRecord`] to the session trace,
//! whatever the outcome.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::message::{decode_message, encode_message, RpcError, RpcId, RpcMessage};
use crate::registry::ToolDescriptor;

pub const DEFAULT_CALL_TIMEOUT: Duration = Duration::from_secs(30);

/// Outcome as recorded in the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallOutcome {
    Ok { value: Value },
    Error { code: Option<i64>, message: String },
}

/// One tool invocation, as consumed by trajectory scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRecord {
    /// Strictly increasing and gapless from 1 within the session.
    pub seq: u64,
    pub tool_name: String,
    pub arguments: Value,
    pub outcome: CallOutcome,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

#[derive(Debug, Error)]
pub enum CallError {
    #[error("server error {code}: {message}", code = .0.code, message = .0.message)]
    Server(RpcError),
    #[error("tool call timed out after {0:?}")]
    Timeout(Duration),
    #[error("connection closed")]
    Connection,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Call(#[from] CallError),
    #[error("malformed server payload: {0}")]
    Payload(String),
}

type PendingMap = Mutex<HashMap<i64, mpsc::SyncSender<Result<Value, RpcError>>>>;

struct Inner {
    writer: Mutex<Box<dyn Write + Send>>,
    pending: PendingMap,
    next_id: AtomicI64,
    trace: Mutex<Vec<ToolCallRecord>>,
    default_timeout: Duration,
}

/// Connected MCP tool client. Cheap to clone; clones share the session.
#[derive(Clone)]
pub struct ToolClient {
    inner: Arc<Inner>,
}

impl ToolClient {
    /// Connects to a TCP tool server.
    pub fn connect_tcp(addr: impl ToSocketAddrs) -> std::io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true).ok();
        let reader = stream.try_clone()?;
        Ok(Self::from_stream(reader, stream))
    }

    /// Builds a client over an arbitrary byte-stream pair (pipe mode).
    pub fn from_stream(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
    ) -> Self {
        let inner = Arc::new(Inner {
            writer: Mutex::new(Box::new(writer)),
            pending: Mutex::new(HashMap::new()),
            next_id: AtomicI64::new(1),
            trace: Mutex::new(Vec::new()),
            default_timeout: DEFAULT_CALL_TIMEOUT,
        });
        let inner2 = inner.clone();
        std::thread::spawn(move || reader_loop(inner2, BufReader::new(reader)));
        Self { inner }
    }

    pub fn with_default_timeout(self, timeout: Duration) -> Self {
        let mut inner = self.inner;
        // Sole owner right after construction; otherwise keep the shared value.
        if let Some(i) = Arc::get_mut(&mut inner) {
            i.default_timeout = timeout;
        }
        Self { inner }
    }

    fn send_request(&self, id: i64, method: &str, params: Value) -> Result<(), CallError> {
        let line = encode_message(&RpcMessage::request(id, method, params))
            .expect("requests built here are valid");
        let mut writer = self.inner.writer.lock().expect("writer lock");
        writer.write_all(&line).map_err(|_| CallError::Connection)?;
        writer.flush().map_err(|_| CallError::Connection)?;
        Ok(())
    }

    fn round_trip(&self, method: &str, params: Value, timeout: Duration) -> Result<Value, CallError> {
        let (tx, rx) = mpsc::sync_channel(1);
        // Allocate the id and register the waiter before any bytes go out, so
        // the reader thread can never see an unknown response id.
        let id = self.inner.next_id.fetch_add(1, Ordering::SeqCst);
        self.inner.pending.lock().expect("pending lock").insert(id, tx);
        if let Err(e) = self.send_request(id, method, params) {
            self.inner.pending.lock().expect("pending lock").remove(&id);
            return Err(e);
        }
        match rx.recv_timeout(timeout) {
            Ok(Ok(value)) => Ok(value),
            Ok(Err(err)) => Err(CallError::Server(err)),
            Err(mpsc::RecvTimeoutError::Timeout) => {
                self.inner.pending.lock().expect("pending lock").remove(&id);
                Err(CallError::Timeout(timeout))
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(CallError::Connection),
        }
    }

    /// Fetches the server's tool descriptors. Not a tool call; not traced.
    pub fn list_tools(&self) -> Result<Vec<ToolDescriptor>, ClientError> {
        let result = self.round_trip("tools/list", json!({}), self.inner.default_timeout)?;
        let tools = result
            .get("tools")
            .cloned()
            .ok_or_else(|| ClientError::Payload("missing `tools` in result".into()))?;
        serde_json::from_value(tools).map_err(|e| ClientError::Payload(e.to_string()))
    }

    /// Invokes a tool and appends a trace record regardless of outcome.
    pub fn call_tool(&self, name: &str, arguments: Value) -> Result<Value, CallError> {
        self.call_tool_with_timeout(name, arguments, self.inner.default_timeout)
    }

    pub fn call_tool_with_timeout(
        &self,
        name: &str,
        arguments: Value,
        timeout: Duration,
    ) -> Result<Value, CallError> {
        let started_at = Utc::now();
        let result = self.round_trip(
            "tools/call",
            json!({ "name": name, "arguments": arguments }),
            timeout,
        );
        let finished_at = Utc::now();
        let outcome = match &result {
            Ok(value) => CallOutcome::Ok { value: value.clone() },
            Err(CallError::Server(err)) => {
                CallOutcome::Error { code: Some(err.code), message: err.message.clone() }
            }
            Err(other) => CallOutcome::Error { code: None, message: other.to_string() },
        };
        {
            // Seq is assigned under the trace lock so records stay gapless.
            let mut trace = self.inner.trace.lock().expect("trace lock");
            let seq = trace.len() as u64 + 1;
            trace.push(ToolCallRecord {
                seq,
                tool_name: name.to_string(),
                arguments,
                outcome,
                started_at,
                finished_at,
            });
        }
        result
    }

    /// Snapshot of the session trace in append order.
    pub fn trace(&self) -> Vec<ToolCallRecord> {
        self.inner.trace.lock().expect("trace lock").clone()
    }

    pub fn trace_len(&self) -> usize {
        self.inner.trace.lock().expect("trace lock").len()
    }

    /// Sends the `shutdown` notification (stops the server).
    pub fn send_shutdown(&self) -> Result<(), CallError> {
        let line = encode_message(&RpcMessage::notification("shutdown", json!({})))
            .expect("notification is valid");
        let mut writer = self.inner.writer.lock().expect("writer lock");
        writer.write_all(&line).map_err(|_| CallError::Connection)?;
        writer.flush().map_err(|_| CallError::Connection)?;
        Ok(())
    }
}

fn reader_loop(inner: Arc<Inner>, reader: impl BufRead) {
    for line in reader.lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        match decode_message(line.as_bytes()) {
            Ok(RpcMessage::Response { id: RpcId::Num(id), outcome }) => {
                let sender = inner.pending.lock().expect("pending lock").remove(&id);
                if let Some(tx) = sender {
                    let _ = tx.send(outcome);
                }
                // A late response after timeout lands here with no waiter; dropped.
            }
            Ok(other) => log::warn!("client ignoring non-response line: {other:?}"),
            Err(e) => log::warn!("client failed to decode line: {e}"),
        }
    }
    // EOF: wake every waiter with a disconnect by dropping the senders.
    inner.pending.lock().expect("pending lock").clear();
}
