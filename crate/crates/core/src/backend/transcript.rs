use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BackendError, GenerationRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptEntry {
    pub digest: String,
    pub request: GenerationRequest,
    pub response: String,
}

impl TranscriptEntry {
    pub fn new(request: GenerationRequest, response: impl Into<String>) -> Self {
        Self {
            digest: request.digest(),
            request,
            response: response.into(),
        }
    }
}

/// Recorded (request, response) pairs, one JSON object per line on disk.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a transcript, rejecting stale digests and duplicates.
    pub fn from_entries(entries: Vec<TranscriptEntry>) -> Result<Self, BackendError> {
        let mut seen = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            let line = i + 1;
            if e.digest != e.request.digest() {
                return Err(BackendError::CorruptTranscript {
                    line,
                    reason: "digest does not match the request".into(),
                });
            }
            if !seen.insert(e.digest.clone()) {
                return Err(BackendError::CorruptTranscript {
                    line,
                    reason: format!("duplicate digest {}", e.digest),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends unless the digest is already present. Returns whether it was added.
    pub fn push(&mut self, entry: TranscriptEntry) -> bool {
        if self.entries.iter().any(|e| e.digest == entry.digest) {
            return false;
        }
        self.entries.push(entry);
        true
    }

    pub fn from_jsonl(text: &str) -> Result<Self, BackendError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: TranscriptEntry = serde_json::from_str(line).map_err(|e| BackendError::CorruptTranscript {
                line: i + 1,
                reason: e.to_string(),
            })?;
            entries.push(e);
        }
        Self::from_entries(entries)
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entry serializes") + "\n")
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::CorruptTranscript {
            line: 0,
            reason: format!("{}: {e}", path.display()),
        })?;
        Self::from_jsonl(&text)
    }
}
