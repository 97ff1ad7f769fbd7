//! Self-contained Model-Context-Protocol layer.
//!
//! Newline-delimited JSON-RPC 2.0 over standard-stream pipes or TCP, a tool
//! registry with a minimal argument-schema language, and a thread-safe client
//! that records every tool invocation in a session trace.
//!
//! Only the tools sub-protocol is implemented: `tools/list`, `tools/call`,
//! and the `shutdown` notification. No streaming, no auth, no resources.

pub mod client;
pub mod message;
pub mod registry;
pub mod schema;
pub mod server;

pub use client::{CallError, CallOutcome, ClientError, ToolCallRecord, ToolClient};
pub use message::{
    decode_message, encode_message, DecodeError, EncodeError, RpcError, RpcId, RpcMessage,
    HANDLER_ERROR, INTERNAL_ERROR, INVALID_PARAMS, INVALID_REQUEST, METHOD_NOT_FOUND, PARSE_ERROR,
};
pub use registry::{RegistryError, ToolDescriptor, ToolHandler, ToolRegistry};
pub use schema::{ObjectSchema, ParamSpec, ParamType, SchemaError};
pub use server::{serve_connection, serve_stdio, serve_tcp, LoopExit, TcpServerHandle};
