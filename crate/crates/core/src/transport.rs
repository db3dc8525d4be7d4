//! Blocking chat-completions client with bounded retries and a per-client
//! concurrency cap.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Environment variable read for the bearer token unless configured otherwise.
pub const DEFAULT_API_KEY_ENV: &str = "DXSTREAM_API_KEY";

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("failed to build HTTP client: {0}")]
    Init(String),
    #[error("request failed after {attempts} attempt(s): {message}")]
    Exhausted { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unparseable response: {0}")]
    Decode(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChatClientConfig {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub max_concurrency: usize,
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub max_tokens: Option<u32>,
}

impl Default for ChatClientConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 120,
            max_retries: 3,
            backoff_ms: 500,
            max_backoff_ms: 8_000,
            max_concurrency: 4,
            temperature: None,
            top_p: None,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallFunction {
    pub name: String,
    /// Either a JSON-encoded string or an inline object, depending on the server.
    #[serde(default)]
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    #[serde(default)]
    pub id: String,
    #[serde(rename = "type", default = "function_type")]
    pub kind: String,
    pub function: ToolCallFunction,
}

fn function_type() -> String {
    "function".into()
}

impl ToolCall {
    /// Arguments as a JSON value, decoding string-encoded arguments.
    pub fn arguments(&self) -> Result<Value, String> {
        match &self.function.arguments {
            Value::String(s) if s.trim().is_empty() => Ok(Value::Object(Default::default())),
            Value::String(s) => serde_json::from_str(s).map_err(|e| format!("arguments are not JSON: {e}")),
            Value::Null => Ok(Value::Object(Default::default())),
            other => Ok(other.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    #[serde(default)]
    pub content: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    fn text(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: Some(content.into()),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::text("system", content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::text("user", content)
    }

    pub fn tool_result(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            tool_call_id: Some(call_id.into()),
            ..Self::text("tool", content)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub tools: Vec<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tool_choice: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Debug, Clone, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

/// Counting semaphore; std has none.
struct Permits {
    free: Mutex<usize>,
    released: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.released.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.released.notify_one();
    }
}

pub struct ChatClient {
    http: reqwest::blocking::Client,
    cfg: ChatClientConfig,
    token: Option<String>,
    permits: Permits,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient")
            .field("base_url", &self.cfg.base_url)
            .field("model", &self.cfg.model)
            .finish_non_exhaustive()
    }
}

impl ChatClient {
    pub fn new(cfg: ChatClientConfig) -> Result<Self, TransportError> {
        if cfg.base_url.trim().is_empty() {
            return Err(TransportError::Init("base_url is empty".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs.max(1)))
            .build()
            .map_err(|e| TransportError::Init(e.to_string()))?;
        let token = std::env::var(&cfg.api_key_env).ok().filter(|t| !t.is_empty());
        let permits = Permits::new(cfg.max_concurrency);
        Ok(Self {
            http,
            cfg,
            token,
            permits,
        })
    }

    pub fn config(&self) -> &ChatClientConfig {
        &self.cfg
    }

    /// A request pre-filled with the configured model and sampling settings.
    pub fn request(&self, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest {
            model: self.cfg.model.clone(),
            messages,
            tools: Vec::new(),
            tool_choice: None,
            temperature: self.cfg.temperature,
            top_p: self.cfg.top_p,
            max_tokens: self.cfg.max_tokens,
            seed: None,
        }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .cfg
            .backoff_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.cfg.max_backoff_ms);
        Duration::from_millis(ms)
    }

    /// Sends `request` and returns the first choice's message.
    ///
    /// Connection failures, timeouts, 429 and 5xx responses are retried up to
    /// `max_retries` times with exponential backoff; other statuses fail at once.
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatMessage, TransportError> {
        let _permit = self.permits.acquire();
        let url = self.endpoint();
        let mut attempt = 0u32;
        loop {
            let mut builder = self.http.post(&url).json(request);
            if let Some(token) = &self.token {
                builder = builder.bearer_auth(token);
            }
            let failure = match builder.send() {
                Ok(resp) => {
                    let status = resp.status();
                    let body = resp.text().map_err(|e| TransportError::Decode(e.to_string()))?;
                    if status.is_success() {
                        return decode(&body);
                    }
                    if status.as_u16() != 429 && !status.is_server_error() {
                        return Err(TransportError::Status {
                            status: status.as_u16(),
                            body,
                        });
                    }
                    format!("HTTP {status}")
                }
                Err(e) => e.to_string(),
            };
            if attempt >= self.cfg.max_retries {
                return Err(TransportError::Exhausted {
                    attempts: attempt + 1,
                    message: failure,
                });
            }
            log::warn!("chat request failed ({failure}); retry {} of {}", attempt + 1, self.cfg.max_retries);
            std::thread::sleep(self.backoff(attempt));
            attempt += 1;
        }
    }
}

fn decode(body: &str) -> Result<ChatMessage, TransportError> {
    let resp: ChatResponse = serde_json::from_str(body).map_err(|e| TransportError::Decode(e.to_string()))?;
    resp.choices
        .into_iter()
        .next()
        .map(|c| c.message)
        .ok_or_else(|| TransportError::Decode("response has no choices".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_tool_calls_with_string_arguments() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":null,
            "tool_calls":[{"id":"c1","type":"function","function":{"name":"memory","arguments":"{\"action\":\"list\"}"}}]}}]}"#;
        let msg = decode(body).unwrap();
        assert_eq!(msg.tool_calls.len(), 1);
        assert_eq!(msg.tool_calls[0].arguments().unwrap()["action"], "list");
    }

    #[test]
    fn decodes_inline_object_arguments() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"",
            "tool_calls":[{"function":{"name":"memory","arguments":{"action":"pop","indices":[0]}}}]}}]}"#;
        let msg = decode(body).unwrap();
        assert_eq!(msg.tool_calls[0].arguments().unwrap()["indices"][0], 0);
        assert_eq!(msg.tool_calls[0].kind, "function");
    }

    #[test]
    fn empty_choices_is_an_error() {
        assert!(matches!(decode(r#"{"choices":[]}"#), Err(TransportError::Decode(_))));
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let client = ChatClient::new(ChatClientConfig {
            backoff_ms: 100,
            max_backoff_ms: 350,
            ..ChatClientConfig::default()
        })
        .unwrap();
        assert_eq!(client.backoff(0), Duration::from_millis(100));
        assert_eq!(client.backoff(1), Duration::from_millis(200));
        assert_eq!(client.backoff(2), Duration::from_millis(350));
    }

    #[test]
    fn request_omits_unset_fields() {
        let client = ChatClient::new(ChatClientConfig::default()).unwrap();
        let req = client.request(vec![ChatMessage::user("hi")]);
        let v = serde_json::to_value(&req).unwrap();
        assert!(v.get("tools").is_none());
        assert!(v.get("temperature").is_none());
        assert_eq!(v["messages"][0]["role"], "user");
        assert!(v["messages"][0].get("tool_calls").is_none());
    }
}
