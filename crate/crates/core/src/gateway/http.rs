//! HTTP chat backend: POST {model, messages, temperature, top_p} with a
//! bearer token, assistant text read from a configurable response path.

use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{elapsed_ms, ChatBackend, ChatExchange, ChatRole, Completion, GatewayError};

const DEFAULT_RESPONSE_PATH: &str = "choices.0.message.content";
const RETRIES: u32 = 2;
const BACKOFF_BASE: Duration = Duration::from_millis(250);

pub struct HttpBackend {
    url: String,
    api_key: Option<String>,
    model: String,
    response_path: String,
    timeout: Duration,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            api_key: None,
            model: model.into(),
            response_path: DEFAULT_RESPONSE_PATH.to_string(),
            timeout: Duration::from_secs(60),
            agent: ureq::AgentBuilder::new().build(),
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn with_response_path(mut self, path: impl Into<String>) -> Self {
        self.response_path = path.into();
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn body(&self, exchange: &ChatExchange) -> Value {
        let mut messages = vec![json!({"role": "system", "content": exchange.system})];
        for m in &exchange.messages {
            let role = match m.role {
                ChatRole::User => "user",
                ChatRole::Assistant => "assistant",
                ChatRole::Tool => "tool",
            };
            messages.push(json!({"role": role, "content": m.content}));
        }
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": exchange.profile.temperature,
            "top_p": exchange.profile.top_p,
        })
    }

    fn post_once(&self, body: &Value) -> Result<Value, GatewayError> {
        let mut request = self
            .agent
            .post(&self.url)
            .timeout(self.timeout)
            .set("content-type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.set("authorization", &format!("Bearer {key}"));
        }
        let response = request
            .send_string(&body.to_string())
            .map_err(|e| GatewayError::Http(e.to_string()))?;
        let text = response.into_string().map_err(|e| GatewayError::Http(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| GatewayError::Http(format!("bad json: {e}")))
    }

    fn extract_text(&self, response: &Value) -> Result<String, GatewayError> {
        let mut cursor = response;
        for segment in self.response_path.split('.') {
            cursor = match segment.parse::<usize>() {
                Ok(index) => cursor.get(index),
                Err(_) => cursor.get(segment),
            }
            .ok_or_else(|| GatewayError::ResponsePath { path: self.response_path.clone() })?;
        }
        cursor
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GatewayError::ResponsePath { path: self.response_path.clone() })
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, exchange: &ChatExchange) -> Result<Completion, GatewayError> {
        if exchange.messages.is_empty() {
            return Err(GatewayError::EmptyExchange);
        }
        let body = self.body(exchange);
        let start = Instant::now();
        let mut last_err = GatewayError::Http("unreachable".into());
        for attempt in 0..=RETRIES {
            if attempt > 0 {
                std::thread::sleep(BACKOFF_BASE * 2u32.pow(attempt - 1));
            }
            match self.post_once(&body) {
                Ok(response) => {
                    let text = self.extract_text(&response)?;
                    let usage = response.get("usage");
                    let token = |k: &str| usage.and_then(|u| u.get(k)).and_then(Value::as_u64);
                    return Ok(Completion {
                        text,
                        backend_id: format!("http:{}", self.model),
                        latency_ms: elapsed_ms(start),
                        prompt_tokens: token("prompt_tokens"),
                        completion_tokens: token("completion_tokens"),
                    });
                }
                Err(e) => last_err = e,
            }
        }
        Err(last_err)
    }

    fn backend_id(&self) -> &str {
        "http"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatMessage, Role, SamplingProfile};
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// One-shot HTTP stub: answers every request with `body` and returns the
    /// request bodies it saw.
    fn stub_server(body: &'static str, hits: usize) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for _ in 0..hits {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = [0u8; 65536];
                let mut request = Vec::new();
                loop {
                    let n = stream.read(&mut buf).unwrap();
                    request.extend_from_slice(&buf[..n]);
                    let text = String::from_utf8_lossy(&request);
                    if let Some(header_end) = text.find("\r\n\r\n") {
                        let content_length = text
                            .lines()
                            .find_map(|l| l.to_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                            .unwrap_or(0);
                        if request.len() >= header_end + 4 + content_length {
                            seen.push(text[header_end + 4..].to_string());
                            break;
                        }
                    }
                }
                let response = format!(
                    "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                    body.len(),
                    body
                );
                stream.write_all(response.as_bytes()).unwrap();
            }
            seen
        });
        (format!("http://{addr}"), handle)
    }

    fn exchange(role: Role) -> ChatExchange {
        let mut ex = ChatExchange::new("be a scientist", SamplingProfile::for_role(role));
        ex.push(ChatMessage::user("design a cell"));
        ex
    }

    #[test]
    fn stub_body_is_returned_verbatim() {
        let (url, handle) =
            stub_server(r#"{"choices":[{"message":{"content":"fixed answer"}}]}"#, 1);
        let backend = HttpBackend::new(url, "demo-model");
        let completion = backend.complete(&exchange(Role::Designer)).unwrap();
        assert_eq!(completion.text, "fixed answer");
        handle.join().unwrap();
    }

    #[test]
    fn sampling_profile_is_transmitted_verbatim() {
        let (url, handle) = stub_server(r#"{"choices":[{"message":{"content":"ok"}}]}"#, 1);
        let backend = HttpBackend::new(url, "demo-model");
        backend.complete(&exchange(Role::Designer)).unwrap();
        let seen = handle.join().unwrap();
        let body: Value = serde_json::from_str(&seen[0]).unwrap();
        assert_eq!(body["temperature"], 0.7);
        assert_eq!(body["top_p"], 0.9);
        assert_eq!(body["model"], "demo-model");
        assert_eq!(body["messages"][0]["role"], "system");
    }

    #[test]
    fn custom_response_path_is_honored() {
        let (url, handle) = stub_server(r#"{"output":{"text":"custom"}}"#, 1);
        let backend = HttpBackend::new(url, "m").with_response_path("output.text");
        assert_eq!(backend.complete(&exchange(Role::Miner)).unwrap().text, "custom");
        handle.join().unwrap();
    }

    #[test]
    fn unreachable_server_surfaces_http_error() {
        let backend = HttpBackend::new("http://127.0.0.1:1", "m")
            .with_timeout(Duration::from_millis(50));
        let err = backend.complete(&exchange(Role::Miner)).unwrap_err();
        assert!(matches!(err, GatewayError::Http(_)));
    }
}
