//! Transport-level integration: pipe vs TCP equivalence and message
//! round-trip over generated traffic.

use std::io::{BufRead, BufReader, Cursor, Read, Write};
use std::net::TcpStream;
use std::sync::Arc;

use serde_json::{json, Value};

use peromas_mcp::{
    decode_message, encode_message, serve_connection, serve_tcp, ObjectSchema, ParamSpec,
    RpcError, RpcId, RpcMessage, ToolDescriptor, ToolRegistry,
};

fn demo_registry() -> ToolRegistry {
    let mut reg = ToolRegistry::new();
    reg.register(
        ToolDescriptor {
            name: "math.add".into(),
            description: "adds two numbers".into(),
            input_schema: ObjectSchema::new()
                .field("a", ParamSpec::number(), true)
                .field("b", ParamSpec::number(), true),
            output_schema: ObjectSchema::new().field("sum", ParamSpec::number(), true),
        },
        Arc::new(|args: &Value| {
            let a = args["a"].as_f64().unwrap();
            let b = args["b"].as_f64().unwrap();
            Ok(json!({ "sum": a + b }))
        }),
    )
    .unwrap();
    reg.register(
        ToolDescriptor {
            name: "text.upper".into(),
            description: "uppercases a string".into(),
            input_schema: ObjectSchema::new().field("s", ParamSpec::string(), true),
            output_schema: ObjectSchema::new().field("s", ParamSpec::string(), true),
        },
        Arc::new(|args: &Value| Ok(json!({ "s": args["s"].as_str().unwrap().to_uppercase() }))),
    )
    .unwrap();
    reg
}

/// A 20-request golden script covering list, calls, errors, and bad lines.
fn golden_script() -> String {
    let mut lines = Vec::new();
    lines.push(json!({"jsonrpc":"2.0","id":1,"method":"tools/list","params":{}}).to_string());
    for i in 0..8i64 {
        lines.push(
            json!({"jsonrpc":"2.0","id":2+i,"method":"tools/call",
                   "params":{"name":"math.add","arguments":{"a":i,"b":i*10}}})
            .to_string(),
        );
    }
    for i in 0..5i64 {
        lines.push(
            json!({"jsonrpc":"2.0","id":10+i,"method":"tools/call",
                   "params":{"name":"text.upper","arguments":{"s":format!("line-{i}")}}})
            .to_string(),
        );
    }
    lines.push(json!({"jsonrpc":"2.0","id":15,"method":"tools/call","params":{"name":"nosuch"}}).to_string());
    lines.push(
        json!({"jsonrpc":"2.0","id":16,"method":"tools/call","params":{"name":"math.add","arguments":{}}})
            .to_string(),
    );
    lines.push(json!({"jsonrpc":"2.0","id":17,"method":"unknown/method","params":{}}).to_string());
    lines.push("{not json".to_string());
    lines.push(json!({"jsonrpc":"2.0","id":18,"result":1,"error":{"code":-1,"message":"x"}}).to_string());
    lines.push(json!({"jsonrpc":"2.0","id":19,"method":"tools/list","params":{}}).to_string());
    assert_eq!(lines.len(), 20);
    lines.join("\n") + "\n"
}

fn run_over_pipe(script: &str) -> Vec<u8> {
    let reg = demo_registry();
    let mut out = Vec::new();
    serve_connection(&reg, Cursor::new(script.as_bytes()), &mut out).unwrap();
    out
}

fn run_over_tcp(script: &str) -> Vec<u8> {
    let server = serve_tcp(Arc::new(demo_registry()), "127.0.0.1:0").unwrap();
    let mut stream = TcpStream::connect(server.local_addr()).unwrap();
    stream.write_all(script.as_bytes()).unwrap();
    stream.shutdown(std::net::Shutdown::Write).unwrap();
    let mut out = Vec::new();
    stream.read_to_end(&mut out).unwrap();
    server.shutdown();
    out
}

#[test]
fn pipe_and_tcp_responses_are_byte_identical() {
    let script = golden_script();
    let pipe_bytes = run_over_pipe(&script);
    let tcp_bytes = run_over_tcp(&script);
    assert!(!pipe_bytes.is_empty());
    assert_eq!(pipe_bytes, tcp_bytes);
}

#[test]
fn every_request_gets_exactly_one_response() {
    let script = golden_script();
    let out = run_over_pipe(&script);
    let reader = BufReader::new(Cursor::new(out));
    let mut ids = Vec::new();
    for line in reader.lines() {
        let v: Value = serde_json::from_str(&line.unwrap()).unwrap();
        ids.push(v["id"].clone());
    }
    // 19 requests (one line is malformed and answered with id null).
    let expected: Vec<Value> = (1..=17).map(|i| json!(i)).chain([Value::Null, json!(18), json!(19)]).collect();
    // id 18 in the script is an invalid message (result+error) -> detached null.
    let nulls = ids.iter().filter(|v| v.is_null()).count();
    assert_eq!(nulls, 2, "one parse error and one invalid-request line");
    assert_eq!(ids.len(), expected.len());
}

fn arbitrary_message(rng_state: &mut u64) -> RpcMessage {
    let mut next = || {
        // xorshift64*; good enough to diversify generated shapes.
        *rng_state ^= *rng_state << 13;
        *rng_state ^= *rng_state >> 7;
        *rng_state ^= *rng_state << 17;
        *rng_state
    };
    let id = match next() % 3 {
        0 => RpcId::Num((next() % 100_000) as i64),
        1 => RpcId::Num(-((next() % 100) as i64)),
        _ => RpcId::Str(format!("req-{}", next() % 1000)),
    };
    let params = match next() % 4 {
        0 => json!({}),
        1 => json!({"text": format!("multi\nline-{}\tand \"quotes\"", next() % 10), "n": (next() % 7) as f64 / 2.0}),
        2 => json!([1, "two", {"three": 3}]),
        _ => json!({"nested": {"z": 1, "a": [true, false, null]}}),
    };
    match next() % 4 {
        0 => RpcMessage::Request { id, method: format!("tools/m{}", next() % 5), params },
        1 => RpcMessage::Notification { method: format!("note{}", next() % 5), params },
        2 => RpcMessage::Response { id, outcome: Ok(params) },
        _ => RpcMessage::Response {
            id,
            outcome: Err(RpcError::new(-((next() % 33000) as i64), format!("error {}", next() % 10))),
        },
    }
}

#[test]
fn thousand_generated_messages_round_trip() {
    let mut state = 0x9E3779B97F4A7C15u64;
    for i in 0..1000 {
        let msg = arbitrary_message(&mut state);
        let line = encode_message(&msg).unwrap_or_else(|e| panic!("case {i}: encode failed: {e}"));
        let back = decode_message(&line).unwrap_or_else(|e| panic!("case {i}: decode failed: {e}"));
        assert_eq!(back, msg, "case {i}");
        // Encoding is byte-stable.
        assert_eq!(encode_message(&back).unwrap(), line, "case {i}");
    }
}
