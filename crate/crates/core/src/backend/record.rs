use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{Backend, BackendError, GenerationRequest, TranscriptEntry};

/// Delegates to an inner backend and appends every exchange to a JSON-lines
/// transcript. A request already recorded is not written again, so the first
/// response for a digest wins.
pub struct RecordingBackend<B> {
    inner: B,
    path: PathBuf,
    sink: Mutex<Sink>,
}

struct Sink {
    file: File,
    seen: HashSet<String>,
}

impl<B: Backend> RecordingBackend<B> {
    /// Creates (truncating) the sink before any generation is issued.
    pub fn new(inner: B, sink: &Path) -> Result<Self, BackendError> {
        let file = File::create(sink).map_err(|e| BackendError::SinkWrite {
            path: sink.display().to_string(),
            reason: e.to_string(),
        })?;
        Ok(Self {
            inner,
            path: sink.to_path_buf(),
            sink: Mutex::new(Sink {
                file,
                seen: HashSet::new(),
            }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let response = self.inner.complete(request)?;
        let entry = TranscriptEntry::new(request.clone(), response.clone());
        let mut sink = self.sink.lock().expect("sink lock");
        if sink.seen.insert(entry.digest.clone()) {
            let line = serde_json::to_string(&entry).expect("entry serializes");
            writeln!(sink.file, "{line}")
                .and_then(|_| sink.file.flush())
                .map_err(|e| BackendError::SinkWrite {
                    path: self.path.display().to_string(),
                    reason: e.to_string(),
                })?;
        }
        Ok(response)
    }
}
