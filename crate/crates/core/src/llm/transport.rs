use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Chat-completions request body. Field order is fixed, so serialization
/// is a pure function of the values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    /// Text of the last user message.
    pub fn prompt(&self) -> &str {
        self.messages.iter().rev().find(|m| m.role == "user").map(|m| m.content.as_str()).unwrap_or("")
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Extracts the first choice's text from a response body.
pub fn first_choice_text(body: &str) -> Result<String, TransportFailure> {
    let resp: ChatResponse =
        serde_json::from_str(body).map_err(|e| TransportFailure::Malformed(format!("response body: {e}")))?;
    Ok(resp.choices.into_iter().next().and_then(|c| c.message.content).unwrap_or_default())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    Status { code: u16, body: String },
    Timeout,
    Connection(String),
    Malformed(String),
}

impl TransportFailure {
    /// 429, 5xx, timeouts and connection failures are retried; other
    /// statuses and unreadable bodies are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportFailure::Status { code, .. } => *code == 429 || (500..600).contains(code),
            TransportFailure::Timeout | TransportFailure::Connection(_) => true,
            TransportFailure::Malformed(_) => false,
        }
    }

    pub fn status(&self) -> Option<u16> {
        match self {
            TransportFailure::Status { code, .. } => Some(*code),
            _ => None,
        }
    }
}

impl fmt::Display for TransportFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransportFailure::Status { code, body } => {
                let snippet: String = body.chars().take(200).collect();
                write!(f, "HTTP {code}: {snippet}")
            }
            TransportFailure::Timeout => f.write_str("request timed out"),
            TransportFailure::Connection(m) => write!(f, "connection failed: {m}"),
            TransportFailure::Malformed(m) => write!(f, "malformed response: {m}"),
        }
    }
}

/// Sends one serialized request body and returns the first choice's text.
pub trait ChatTransport: Send + Sync {
    fn send(&self, body: &[u8]) -> Result<String, TransportFailure>;
}

/// `POST {base_url}/chat/completions`.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        let url = format!("{}/chat/completions", base_url.trim_end_matches('/'));
        Self { agent, url, api_key }
    }
}

impl ChatTransport for HttpTransport {
    fn send(&self, body: &[u8]) -> Result<String, TransportFailure> {
        log::debug!(
            "POST {} (authorization: {}) body={}",
            self.url,
            if self.api_key.is_some() { "Bearer ***" } else { "none" },
            String::from_utf8_lossy(body)
        );
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportFailure::Timeout,
            other => TransportFailure::Connection(other.to_string()),
        })?;
        let code = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| TransportFailure::Connection(e.to_string()))?;
        log::debug!("HTTP {code} response={text}");
        if !(200..300).contains(&code) {
            return Err(TransportFailure::Status { code, body: text });
        }
        first_choice_text(&text)
    }
}
