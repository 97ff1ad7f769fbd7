//! Tool server over newline-delimited JSON-RPC.
//!
//! `serve_connection` is transport-agnostic (any BufRead/Write pair); the TCP
//! listener and stdio mode are thin wrappers around it. Per-connection request
//! handling is serialized; independent connections run on their own threads.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};

use crate::message::{
    decode_message, encode_detached_error, encode_message, DecodeError, RpcError, RpcMessage,
    INVALID_PARAMS, INVALID_REQUEST, METHOD_NOT_FOUND, PARSE_ERROR,
};
use crate::registry::ToolRegistry;

/// Why a connection loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopExit {
    /// Peer closed the stream.
    Eof,
    /// A `shutdown` notification was received.
    Shutdown,
}

fn handle_request(registry: &ToolRegistry, method: &str, params: &Value) -> Result<Value, RpcError> {
    match method {
        "tools/list" => {
            let tools: Vec<Value> =
                registry.descriptors().iter().map(|d| serde_json::to_value(d).unwrap()).collect();
            Ok(json!({ "tools": tools }))
        }
        "tools/call" => {
            let obj = params
                .as_object()
                .ok_or_else(|| RpcError::new(INVALID_PARAMS, "params must be an object"))?;
            let name = obj
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| RpcError::new(INVALID_PARAMS, "missing string param `name`"))?;
            let arguments = obj.get("arguments").cloned().unwrap_or_else(|| json!({}));
            registry.dispatch(name, &arguments)
        }
        other => Err(RpcError::new(METHOD_NOT_FOUND, format!("unknown method `{other}`"))),
    }
}

/// Serves one connection until EOF or a `shutdown` notification.
///
/// Every request gets exactly one response; notifications get none. Lines
/// that fail to decode are answered with a detached parse/invalid-request
/// error line and the loop continues.
pub fn serve_connection<R: BufRead, W: Write>(
    registry: &ToolRegistry,
    reader: R,
    mut writer: W,
) -> io::Result<LoopExit> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match decode_message(line.as_bytes()) {
            Ok(RpcMessage::Request { id, method, params }) => {
                let outcome = handle_request(registry, &method, &params);
                let response = RpcMessage::Response { id, outcome };
                writer.write_all(&encode_message(&response).expect("valid response"))?;
                writer.flush()?;
            }
            Ok(RpcMessage::Notification { method, .. }) => {
                if method == "shutdown" {
                    return Ok(LoopExit::Shutdown);
                }
                // Unknown notifications are ignored: nothing to answer to.
            }
            Ok(RpcMessage::Response { .. }) => {
                // A server never awaits responses; ignore stray ones.
                log::warn!("ignoring unexpected response line on server connection");
            }
            Err(DecodeError::Parse(msg)) => {
                writer.write_all(&encode_detached_error(PARSE_ERROR, &msg))?;
                writer.flush()?;
            }
            Err(DecodeError::Invalid(msg)) => {
                writer.write_all(&encode_detached_error(INVALID_REQUEST, &msg))?;
                writer.flush()?;
            }
        }
    }
    Ok(LoopExit::Eof)
}

/// Serves the registry over stdin/stdout until EOF or shutdown.
pub fn serve_stdio(registry: &ToolRegistry) -> io::Result<LoopExit> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    serve_connection(registry, stdin.lock(), stdout.lock())
}

/// Handle to a running TCP tool server.
pub struct TcpServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
}

impl TcpServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections and joins the accept loop.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for TcpServerHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

/// Binds `addr` (e.g. "127.0.0.1:0") and serves the registry until shutdown.
///
/// A `shutdown` notification on any connection stops the whole server.
pub fn serve_tcp(registry: Arc<ToolRegistry>, addr: impl ToSocketAddrs) -> io::Result<TcpServerHandle> {
    if registry.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "empty tool registry"));
    }
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;
    let stop = Arc::new(AtomicBool::new(false));
    let stop2 = stop.clone();

    let accept_thread = std::thread::spawn(move || {
        let mut workers: Vec<JoinHandle<()>> = Vec::new();
        while !stop2.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let registry = registry.clone();
                    let stop3 = stop2.clone();
                    stream.set_nodelay(true).ok();
                    workers.push(std::thread::spawn(move || {
                        let reader = BufReader::new(stream.try_clone().expect("clone stream"));
                        match serve_connection(&registry, reader, stream) {
                            Ok(LoopExit::Shutdown) => stop3.store(true, Ordering::SeqCst),
                            Ok(LoopExit::Eof) => {}
                            Err(e) => log::debug!("connection ended: {e}"),
                        }
                    }));
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    break;
                }
            }
        }
        for w in workers {
            let _ = w.join();
        }
    });

    Ok(TcpServerHandle { addr, stop, accept_thread: Some(accept_thread) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{ObjectSchema, ParamSpec};
    use crate::registry::ToolDescriptor;
    use std::io::Cursor;

    fn registry_with_echo() -> ToolRegistry {
        let mut reg = ToolRegistry::new();
        reg.register(
            ToolDescriptor {
                name: "test.echo".into(),
                description: "echo".into(),
                input_schema: ObjectSchema::new().field("value", ParamSpec::string(), true),
                output_schema: ObjectSchema::new(),
            },
            Arc::new(|args: &Value| Ok(args.clone())),
        )
        .unwrap();
        reg
    }

    fn run_script(reg: &ToolRegistry, script: &str) -> (Vec<String>, LoopExit) {
        let mut out = Vec::new();
        let exit = serve_connection(reg, Cursor::new(script.as_bytes()), &mut out).unwrap();
        let lines = String::from_utf8(out).unwrap().lines().map(String::from).collect();
        (lines, exit)
    }

    #[test]
    fn list_then_call() {
        let reg = registry_with_echo();
        let script = "{\"jsonrpc\":\"2.0\",\"id\":1,\"method\":\"tools/list\",\"params\":{}}\n\
                      {\"jsonrpc\":\"2.0\",\"id\":2,\"method\":\"tools/call\",\"params\":{\"name\":\"test.echo\",\"arguments\":{\"value\":\"hi\"}}}\n";
        let (lines, exit) = run_script(&reg, script);
        assert_eq!(exit, LoopExit::Eof);
        assert_eq!(lines.len(), 2);
        let list: Value = serde_json::from_str(&lines[0]).unwrap();
        assert_eq!(list["result"]["tools"].as_array().unwrap().len(), 1);
        let call: Value = serde_json::from_str(&lines[1]).unwrap();
        assert_eq!(call["result"]["value"], "hi");
    }

    #[test]
    fn unknown_tool_and_bad_args_error_codes() {
        let reg = registry_with_echo();
        let script = "{\"jsonrpc\":\"2.0\",\"id\":1,\"method\":\"tools/call\",\"params\":{\"name\":\"nosuch\"}}\n\
                      {\"jsonrpc\":\"2.0\",\"id\":2,\"method\":\"tools/call\",\"params\":{\"name\":\"test.echo\",\"arguments\":{}}}\n";
        let (lines, _) = run_script(&reg, script);
        let a: Value = serde_json::from_str(&lines[0]).unwrap();
        let b: Value = serde_json::from_str(&lines[1]).unwrap();
        assert_eq!(a["error"]["code"], json!(METHOD_NOT_FOUND));
        assert_eq!(b["error"]["code"], json!(INVALID_PARAMS));
    }

    #[test]
    fn shutdown_notification_stops_the_loop() {
        let reg = registry_with_echo();
        let script = "{\"jsonrpc\":\"2.0\",\"method\":\"shutdown\",\"params\":{}}\n\
                      {\"jsonrpc\":\"2.0\",\"id\":9,\"method\":\"tools/list\",\"params\":{}}\n";
        let (lines, exit) = run_script(&reg, script);
        assert_eq!(exit, LoopExit::Shutdown);
        assert!(lines.is_empty(), "no request after shutdown may be answered");
    }

    #[test]
    fn notifications_are_never_answered() {
        let reg = registry_with_echo();
        let script = "{\"jsonrpc\":\"2.0\",\"method\":\"tools/list\",\"params\":{}}\n";
        let (lines, _) = run_script(&reg, script);
        assert!(lines.is_empty());
    }

    #[test]
    fn malformed_line_gets_detached_parse_error() {
        let reg = registry_with_echo();
        let (lines, _) = run_script(&reg, "{\n");
        let v: Value = serde_json::from_str(&lines[0]).unwrap();
        assert_eq!(v["error"]["code"], json!(PARSE_ERROR));
        assert_eq!(v["id"], Value::Null);
    }
}
