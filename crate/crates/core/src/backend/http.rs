use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{Backend, BackendError, GenerationRequest};

pub const DEFAULT_API_URL: &str = "https://api.openai.com/v1/chat/completions";

/// Retries after the first attempt; the n-th retry waits `base * 2^(n-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry.saturating_sub(1))
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            url: DEFAULT_API_URL.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }
}

impl HttpConfig {
    /// Reads `MARE_API_URL` and `MARE_API_KEY`.
    pub fn from_env() -> Self {
        let mut c = Self::default();
        if let Ok(url) = std::env::var("MARE_API_URL") {
            if !url.trim().is_empty() {
                c.url = url;
            }
        }
        c.api_key = std::env::var("MARE_API_KEY").ok().filter(|k| !k.trim().is_empty());
        c
    }
}

/// Client for an OpenAI-compatible chat-completions endpoint.
#[derive(Debug)]
pub struct HttpBackend {
    config: HttpConfig,
    client: Client,
}

enum Attempt {
    Retry(String),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Unavailable(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    /// Request body. `best_of` has no place in the chat protocol and is not sent.
    pub fn request_body(request: &GenerationRequest) -> Value {
        let p = &request.params;
        json!({
            "model": p.model_name,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": p.temperature,
            "max_tokens": p.max_tokens,
            "top_p": p.top_p,
            "frequency_penalty": p.frequency_penalty,
            "presence_penalty": p.presence_penalty,
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, Attempt> {
        let mut req = self.client.post(&self.config.url).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retry(format!("transport error: {e}")))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(format!("reading response: {e}")))?;
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(Attempt::Fatal(BackendError::Auth(format!("HTTP {}", status.as_u16()))));
        }
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP {}", status.as_u16())));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(BackendError::Rejected {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            }));
        }
        extract_content(&text).map_err(Attempt::Fatal)
    }
}

fn extract_content(text: &str) -> Result<String, BackendError> {
    let v: Value =
        serde_json::from_str(text).map_err(|e| BackendError::ResponseMalformed(format!("body is not JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::ResponseMalformed("no choices[0].message.content".into()))
}

impl Backend for HttpBackend {
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        request.params.validate()?;
        let body = Self::request_body(request);
        let mut last = String::new();
        for n in 0..=self.config.retry.retries {
            if n > 0 {
                std::thread::sleep(self.config.retry.delay(n));
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(reason)) => last = reason,
            }
        }
        Err(BackendError::Unavailable(format!(
            "giving up after {} attempts; last error: {last}",
            self.config.retry.retries + 1
        )))
    }
}
