use std::collections::HashMap;
use std::sync::Mutex;

use super::{Backend, BackendError, GenerationRequest, Transcript, UNSCRIPTED};

/// Deterministic backend answering from a transcript, either by request
/// digest or strictly in order.
#[derive(Debug)]
pub struct ScriptedBackend {
    mode: Mode,
}

#[derive(Debug)]
enum Mode {
    Digest(HashMap<String, String>),
    Ordered { responses: Vec<String>, next: Mutex<usize> },
}

impl ScriptedBackend {
    pub fn from_transcript(transcript: &Transcript) -> Self {
        Self {
            mode: Mode::Digest(
                transcript
                    .entries()
                    .iter()
                    .map(|e| (e.digest.clone(), e.response.clone()))
                    .collect(),
            ),
        }
    }

    /// Answers calls with `responses` in order, ignoring the requests.
    pub fn ordered(responses: Vec<String>) -> Self {
        Self {
            mode: Mode::Ordered {
                responses,
                next: Mutex::new(0),
            },
        }
    }

    pub fn ordered_transcript(transcript: &Transcript) -> Self {
        Self::ordered(transcript.entries().iter().map(|e| e.response.clone()).collect())
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        match &self.mode {
            Mode::Digest(map) => {
                let digest = request.digest();
                map.get(&digest)
                    .cloned()
                    .ok_or_else(|| BackendError::Unavailable(format!("{UNSCRIPTED} {digest}")))
            }
            Mode::Ordered { responses, next } => {
                let mut next = next.lock().expect("cursor lock");
                let r = responses.get(*next).cloned().ok_or_else(|| {
                    BackendError::Unavailable(format!("{UNSCRIPTED}: transcript exhausted after {} calls", responses.len()))
                })?;
                *next += 1;
                Ok(r)
            }
        }
    }
}
