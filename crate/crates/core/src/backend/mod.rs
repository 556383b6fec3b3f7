//! Text generation backends: a live chat-completions client, a scripted
//! backend answering from transcripts, and a recording wrapper.

mod http;
mod record;
mod scripted;
mod transcript;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpBackend, HttpConfig, RetryPolicy, DEFAULT_API_URL};
pub use record::RecordingBackend;
pub use scripted::ScriptedBackend;
pub use transcript::{Transcript, TranscriptEntry};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("malformed response: {0}")]
    ResponseMalformed(String),
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("request rejected with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("corrupt transcript (line {line}): {reason}")]
    CorruptTranscript { line: usize, reason: String },
    #[error("cannot write transcript sink {path}: {reason}")]
    SinkWrite { path: String, reason: String },
}

impl BackendError {
    /// True for a scripted backend asked something it has no answer for.
    pub fn is_unscripted(&self) -> bool {
        matches!(self, BackendError::Unavailable(d) if d.starts_with(UNSCRIPTED))
    }
}

pub(crate) const UNSCRIPTED: &str = "unscripted request";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationParams {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            model_name: "gpt-3.5-turbo".into(),
            temperature: 0.0,
            max_tokens: 3000,
            top_p: 1.0,
            frequency_penalty: 0.0,
            presence_penalty: 0.0,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: String| Err(BackendError::InvalidParams(m));
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive".into());
        }
        if !(self.frequency_penalty.is_finite() && self.presence_penalty.is_finite()) {
            return bad("penalties must be finite".into());
        }
        if self.model_name.trim().is_empty() {
            return bad("model name is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationRequest {
    pub system: String,
    pub user: String,
    pub params: GenerationParams,
}

impl GenerationRequest {
    pub fn new(system: impl Into<String>, user: impl Into<String>, params: GenerationParams) -> Self {
        Self {
            system: system.into(),
            user: user.into(),
            params,
        }
    }

    /// SHA-256 (hex) of the request's canonical JSON.
    pub fn digest(&self) -> String {
        digest_value(&serde_json::to_value(self).expect("request serializes"))
    }
}

/// Digest of any JSON value in canonical form (object keys sorted, no
/// insignificant whitespace), so field order does not matter.
pub fn digest_value(value: &Value) -> String {
    let mut text = String::new();
    write_canonical(value, &mut text);
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

pub trait Backend: Send + Sync {
    /// Returns the generated text for `request`.
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}
