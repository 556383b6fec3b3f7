//! The shared workspace: an append-only store of artifact envelopes.
//!
//! Every artifact an agent produces is published here and every input an agent
//! needs is queried from here. Envelopes are immutable once stored; an improved
//! draft is a new envelope and consumers take the latest by kind.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::ActionKind;
use crate::agents::{Recipient, Role};

pub const SNAPSHOT_VERSION: u32 = 1;

/// One stored artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEnvelope {
    pub seq: u64,
    pub content: String,
    pub role: Role,
    pub caused_by: ActionKind,
    pub sent_from: Role,
    pub send_to: Recipient,
    pub created_at: DateTime<Utc>,
}

/// An envelope before publication; the workspace assigns `seq` and `created_at`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvelopeDraft {
    pub content: String,
    pub role: Role,
    pub caused_by: ActionKind,
    pub sent_from: Role,
    pub send_to: Recipient,
}

impl EnvelopeDraft {
    pub fn new(
        content: impl Into<String>,
        role: Role,
        caused_by: ActionKind,
        sent_from: Role,
        send_to: Recipient,
    ) -> Self {
        Self {
            content: content.into(),
            role,
            caused_by,
            sent_from,
            send_to,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkspaceError {
    #[error("invalid envelope: {0}")]
    InvalidEnvelope(String),
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

/// Conjunctive filter over envelopes. Unset fields match everything.
///
/// A `send_to` role filter also matches envelopes broadcast to `All`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ArtifactFilter {
    pub caused_by: Option<ActionKind>,
    pub role: Option<Role>,
    pub sent_from: Option<Role>,
    pub send_to: Option<Recipient>,
    pub since_seq: Option<u64>,
}

impl ArtifactFilter {
    /// The match-all filter.
    pub fn all() -> Self {
        Self::default()
    }

    pub fn caused_by(mut self, kind: ActionKind) -> Self {
        self.caused_by = Some(kind);
        self
    }

    pub fn role(mut self, role: Role) -> Self {
        self.role = Some(role);
        self
    }

    pub fn sent_from(mut self, role: Role) -> Self {
        self.sent_from = Some(role);
        self
    }

    pub fn send_to(mut self, to: impl Into<Recipient>) -> Self {
        self.send_to = Some(to.into());
        self
    }

    /// Only envelopes with `seq > since`.
    pub fn since_seq(mut self, since: u64) -> Self {
        self.since_seq = Some(since);
        self
    }

    pub fn matches(&self, e: &ArtifactEnvelope) -> bool {
        self.caused_by.is_none_or(|k| e.caused_by == k)
            && self.role.is_none_or(|r| e.role == r)
            && self.sent_from.is_none_or(|r| e.sent_from == r)
            && self.since_seq.is_none_or(|s| e.seq > s)
            && match self.send_to {
                None => true,
                Some(Recipient::All) => e.send_to == Recipient::All,
                Some(to) => e.send_to == to || e.send_to == Recipient::All,
            }
    }

    /// The filter matching exactly the envelopes both filters match, or `None`
    /// when no envelope can match both.
    pub fn and(&self, other: &ArtifactFilter) -> Option<ArtifactFilter> {
        fn both<T: PartialEq + Copy>(a: Option<T>, b: Option<T>) -> Result<Option<T>, ()> {
            match (a, b) {
                (Some(x), Some(y)) if x != y => Err(()),
                (x, y) => Ok(x.or(y)),
            }
        }
        // Two different role addressees only share broadcast envelopes.
        let send_to = match (self.send_to, other.send_to) {
            (Some(a), Some(b)) if a != b => Some(Recipient::All),
            (a, b) => a.or(b),
        };
        Some(ArtifactFilter {
            caused_by: both(self.caused_by, other.caused_by).ok()?,
            role: both(self.role, other.role).ok()?,
            sent_from: both(self.sent_from, other.sent_from).ok()?,
            send_to,
            since_seq: match (self.since_seq, other.since_seq) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            },
        })
    }
}

/// Source of `created_at` timestamps.
pub trait Clock: Send + Sync + std::fmt::Debug {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock: `epoch`, then one `step` later on every call.
///
/// Used for scripted and recorded runs so that replays reproduce snapshots
/// byte for byte.
#[derive(Debug)]
pub struct LogicalClock {
    epoch: DateTime<Utc>,
    step: Duration,
    ticks: AtomicU64,
}

impl LogicalClock {
    pub fn new(epoch: DateTime<Utc>, step: Duration) -> Self {
        Self {
            epoch,
            step,
            ticks: AtomicU64::new(0),
        }
    }
}

impl Default for LogicalClock {
    fn default() -> Self {
        Self::new(
            Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
            Duration::seconds(1),
        )
    }
}

impl Clock for LogicalClock {
    fn now(&self) -> DateTime<Utc> {
        let n = self.ticks.fetch_add(1, Ordering::SeqCst);
        self.epoch + self.step * (n as i32)
    }
}

/// Serialized form of a workspace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkspaceSnapshot {
    pub version: u32,
    pub envelopes: Vec<ArtifactEnvelope>,
}

impl WorkspaceSnapshot {
    /// Pretty JSON with a trailing newline; stable for equal snapshots.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("snapshot serializes");
        text.push('\n');
        text
    }
}

/// Append-only envelope store. Appends are serialized behind a write lock;
/// queries take a read lock and copy out a consistent prefix.
#[derive(Debug)]
pub struct Workspace {
    envelopes: RwLock<Vec<ArtifactEnvelope>>,
    clock: Arc<dyn Clock>,
}

impl Default for Workspace {
    fn default() -> Self {
        Self::new()
    }
}

impl Workspace {
    pub fn new() -> Self {
        Self::with_clock(Arc::new(SystemClock))
    }

    pub fn with_clock(clock: Arc<dyn Clock>) -> Self {
        Self {
            envelopes: RwLock::new(Vec::new()),
            clock,
        }
    }

    pub fn publish(&self, draft: EnvelopeDraft) -> Result<u64, WorkspaceError> {
        validate_draft(&draft)?;
        let mut guard = self.envelopes.write().expect("workspace lock poisoned");
        let seq = guard.last().map_or(1, |e| e.seq + 1);
        guard.push(ArtifactEnvelope {
            seq,
            content: draft.content,
            role: draft.role,
            caused_by: draft.caused_by,
            sent_from: draft.sent_from,
            send_to: draft.send_to,
            created_at: self.clock.now(),
        });
        Ok(seq)
    }

    /// Matching envelopes in ascending seq order.
    pub fn query(&self, filter: &ArtifactFilter) -> Vec<ArtifactEnvelope> {
        let guard = self.envelopes.read().expect("workspace lock poisoned");
        guard.iter().filter(|e| filter.matches(e)).cloned().collect()
    }

    pub fn latest(&self, filter: &ArtifactFilter) -> Option<ArtifactEnvelope> {
        let guard = self.envelopes.read().expect("workspace lock poisoned");
        guard.iter().rev().find(|e| filter.matches(e)).cloned()
    }

    pub fn get(&self, seq: u64) -> Option<ArtifactEnvelope> {
        let guard = self.envelopes.read().expect("workspace lock poisoned");
        seq.checked_sub(1)
            .and_then(|i| guard.get(i as usize))
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.envelopes.read().expect("workspace lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> WorkspaceSnapshot {
        WorkspaceSnapshot {
            version: SNAPSHOT_VERSION,
            envelopes: self.envelopes.read().expect("workspace lock poisoned").clone(),
        }
    }

    /// Pretty JSON snapshot; stable for equal workspaces.
    pub fn snapshot_json(&self) -> String {
        self.snapshot().to_json()
    }

    pub fn restore(snapshot: WorkspaceSnapshot) -> Result<Self, WorkspaceError> {
        Self::restore_with_clock(snapshot, Arc::new(SystemClock))
    }

    pub fn restore_with_clock(snapshot: WorkspaceSnapshot, clock: Arc<dyn Clock>) -> Result<Self, WorkspaceError> {
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(WorkspaceError::CorruptSnapshot(format!(
                "unsupported version {}",
                snapshot.version
            )));
        }
        for (i, e) in snapshot.envelopes.iter().enumerate() {
            let expected = i as u64 + 1;
            if e.seq != expected {
                return Err(WorkspaceError::CorruptSnapshot(format!(
                    "envelope at position {expected} has seq {} (duplicate, gap or disorder)",
                    e.seq
                )));
            }
            if e.content.trim().is_empty() {
                return Err(WorkspaceError::CorruptSnapshot(format!("envelope {} has empty content", e.seq)));
            }
        }
        Ok(Self {
            envelopes: RwLock::new(snapshot.envelopes),
            clock,
        })
    }

    pub fn restore_json(text: &str) -> Result<Self, WorkspaceError> {
        let snap: WorkspaceSnapshot =
            serde_json::from_str(text).map_err(|e| WorkspaceError::CorruptSnapshot(e.to_string()))?;
        Self::restore(snap)
    }
}

fn validate_draft(d: &EnvelopeDraft) -> Result<(), WorkspaceError> {
    if d.content.trim().is_empty() {
        return Err(WorkspaceError::InvalidEnvelope("content is empty".into()));
    }
    let human = d.caused_by == ActionKind::HumanInteraction;
    if human != (d.role == Role::Human) || d.role != d.sent_from {
        return Err(WorkspaceError::InvalidEnvelope(format!(
            "role `{}` / sent_from `{}` cannot produce `{}`",
            d.role, d.sent_from, d.caused_by
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ws() -> Workspace {
        Workspace::with_clock(Arc::new(LogicalClock::default()))
    }

    fn draft(kind: ActionKind, from: Role, to: impl Into<Recipient>, content: &str) -> EnvelopeDraft {
        EnvelopeDraft::new(content, from, kind, from, to.into())
    }

    /// seq 1..5: stories(S->C), question(C->S), stories(S->C), answer(S->C), srs(D->All)
    fn fixture() -> Workspace {
        let w = ws();
        use ActionKind::*;
        w.publish(draft(SpeakUserStories, Role::Stakeholders, Role::Collector, "story one")).unwrap();
        w.publish(draft(ProposeQuestion, Role::Collector, Role::Stakeholders, "question")).unwrap();
        w.publish(draft(SpeakUserStories, Role::Stakeholders, Role::Collector, "story two")).unwrap();
        w.publish(draft(AnswerQuestion, Role::Stakeholders, Role::Collector, "answer")).unwrap();
        w.publish(draft(WriteSrs, Role::Documenter, Recipient::All, "srs")).unwrap();
        w
    }

    fn seqs(v: &[ArtifactEnvelope]) -> Vec<u64> {
        v.iter().map(|e| e.seq).collect()
    }

    #[test]
    fn publish_user_story_gets_seq_one() {
        let w = ws();
        let seq = w
            .publish(draft(
                ActionKind::SpeakUserStories,
                Role::Stakeholders,
                Role::Collector,
                "As a homeowner, I want to be able to control the temperature in my home remotely, so that I can adjust it to my desired level before I arrive.",
            ))
            .unwrap();
        assert_eq!(seq, 1);
    }

    #[test]
    fn consecutive_seqs() {
        let w = ws();
        let got: Vec<u64> = (0..3)
            .map(|i| {
                w.publish(draft(ActionKind::ProposeQuestion, Role::Collector, Role::Stakeholders, &format!("q{i}")))
                    .unwrap()
            })
            .collect();
        assert_eq!(got, vec![1, 2, 3]);
    }

    #[test]
    fn invalid_envelopes() {
        let w = ws();
        let e = w.publish(draft(ActionKind::WriteSrs, Role::Documenter, Recipient::All, "  ")).unwrap_err();
        assert!(matches!(e, WorkspaceError::InvalidEnvelope(_)));
        let e = w.publish(draft(ActionKind::HumanInteraction, Role::Collector, Role::Stakeholders, "x"));
        assert!(e.is_err());
        let mut d = draft(ActionKind::WriteSrs, Role::Documenter, Recipient::All, "x");
        d.sent_from = Role::Checker;
        assert!(w.publish(d).is_err());
        assert!(w.is_empty());
    }

    #[test]
    fn query_by_caused_by() {
        let w = fixture();
        let got = w.query(&ArtifactFilter::all().caused_by(ActionKind::SpeakUserStories));
        assert_eq!(seqs(&got), vec![1, 3]);
        assert_eq!(got[0].content, "story one");
    }

    #[test]
    fn query_send_to_since() {
        let w = fixture();
        // Collector-addressed envelopes are 1, 3, 4 and the broadcast 5.
        let got = w.query(&ArtifactFilter::all().send_to(Role::Collector).since_seq(3));
        assert_eq!(seqs(&got), vec![4, 5]);
        let got = w.query(&ArtifactFilter::all().send_to(Recipient::All));
        assert_eq!(seqs(&got), vec![5]);
    }

    #[test]
    fn empty_query() {
        assert!(ws().query(&ArtifactFilter::all()).is_empty());
    }

    #[test]
    fn query_is_a_snapshot() {
        let w = fixture();
        let before = w.query(&ArtifactFilter::all());
        w.publish(draft(ActionKind::WriteSrs, Role::Documenter, Recipient::All, "srs v2")).unwrap();
        assert_eq!(before.len(), 5);
        assert_eq!(w.query(&ArtifactFilter::all()).len(), 6);
    }

    #[test]
    fn snapshot_round_trip() {
        let w = ws();
        let snap = w.snapshot();
        assert!(snap.envelopes.is_empty());
        assert!(Workspace::restore(snap).unwrap().is_empty());

        let w = fixture();
        let text = w.snapshot_json();
        let back = Workspace::restore_json(&text).unwrap();
        let (a, b) = (w.query(&ArtifactFilter::all()), back.query(&ArtifactFilter::all()));
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.seq, y.seq);
            assert_eq!(x.content, y.content);
            assert_eq!(x.role, y.role);
            assert_eq!(x.caused_by, y.caused_by);
            assert_eq!(x.sent_from, y.sent_from);
            assert_eq!(x.send_to, y.send_to);
            assert_eq!(x.created_at, y.created_at);
        }
        assert_eq!(back.snapshot_json(), text);
    }

    #[test]
    fn restore_rejects_duplicate_seq() {
        let mut snap = fixture().snapshot();
        snap.envelopes[2].seq = 2;
        assert!(matches!(Workspace::restore(snap), Err(WorkspaceError::CorruptSnapshot(_))));
        assert!(matches!(Workspace::restore_json("{nope"), Err(WorkspaceError::CorruptSnapshot(_))));
        let mut snap = fixture().snapshot();
        snap.version = 2;
        assert!(Workspace::restore(snap).is_err());
    }

    #[test]
    fn snapshot_document_shape() {
        let v: serde_json::Value = serde_json::from_str(&fixture().snapshot_json()).unwrap();
        assert_eq!(v["version"], 1);
        let first = &v["envelopes"][0];
        for key in ["seq", "content", "role", "caused_by", "sent_from", "send_to", "created_at"] {
            assert!(first.get(key).is_some(), "{key}");
        }
        assert_eq!(first["caused_by"], "SpeakUserStories");
        assert_eq!(v["envelopes"][4]["send_to"], "All");
    }

    #[test]
    fn concurrent_publishers_get_dense_seqs() {
        let w = Arc::new(ws());
        let handles: Vec<_> = (0..4)
            .map(|t| {
                let w = Arc::clone(&w);
                std::thread::spawn(move || {
                    for i in 0..25 {
                        w.publish(draft(
                            ActionKind::ProposeQuestion,
                            Role::Collector,
                            Role::Stakeholders,
                            &format!("{t}-{i}"),
                        ))
                        .unwrap();
                        let _ = w.query(&ArtifactFilter::all());
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(seqs(&w.query(&ArtifactFilter::all())), (1..=100).collect::<Vec<_>>());
    }
}
