//! Bundled offline cases: rough ideas, synthetic gold models and recorded
//! transcripts for a happy run and a run whose first quality check fails.
//!
//! The gold models are authored for this crate. They are not the annotations
//! of any published evaluation.

mod simulator;

use thiserror::Error;

use crate::backend::{BackendError, ScriptedBackend, Transcript};
use crate::evaluation::{EvalError, GoldCase};
use crate::metamodels::MetamodelKind;
use crate::orchestrator::PipelineConfig;

pub use simulator::{record_transcript, record_transcript_with, CaseSimulator, Scenario};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("unknown case `{0}`")]
    UnknownCase(String),
    #[error("case {case}: {source}")]
    Gold { case: String, source: EvalError },
    #[error("case {case}: {source}")]
    Transcript { case: String, source: BackendError },
}

struct Embedded {
    id: &'static str,
    idea: &'static str,
    gold: &'static str,
    happy: &'static str,
    fail_once: &'static str,
}

macro_rules! case {
    ($id:literal) => {
        Embedded {
            id: $id,
            idea: include_str!(concat!("../../fixtures/", $id, "/idea.txt")),
            gold: include_str!(concat!("../../fixtures/", $id, "/gold.json")),
            happy: include_str!(concat!("../../fixtures/", $id, "/happy.jsonl")),
            fail_once: include_str!(concat!("../../fixtures/", $id, "/fail_once.jsonl")),
        }
    };
}

const CASES: [Embedded; 10] = [
    case!("ATM"),
    case!("COS"),
    case!("TLS"),
    case!("TAS"),
    case!("TMS"),
    case!("TSHCS"),
    case!("TTCS"),
    case!("TACCS"),
    case!("THCS"),
    case!("GMD"),
];

pub fn list_cases() -> Vec<&'static str> {
    CASES.iter().map(|c| c.id).collect()
}

#[derive(Debug, Clone)]
pub struct CaseBundle {
    pub case_id: String,
    pub rough_idea: String,
    pub gold: GoldCase,
    pub happy: Transcript,
    pub fail_once: Transcript,
}

impl CaseBundle {
    pub fn metamodel(&self) -> MetamodelKind {
        self.gold.metamodel()
    }

    /// The configuration the transcripts were recorded with.
    pub fn config(&self) -> PipelineConfig {
        PipelineConfig::for_fixture(self.metamodel())
    }

    pub fn happy_backend(&self) -> Result<ScriptedBackend, BackendError> {
        Ok(ScriptedBackend::from_transcript(&self.happy))
    }

    pub fn fail_once_backend(&self) -> Result<ScriptedBackend, BackendError> {
        Ok(ScriptedBackend::from_transcript(&self.fail_once))
    }
}

/// Raw file contents of a bundled case, keyed by file name.
pub fn raw_files(case_id: &str) -> Option<[(&'static str, &'static str); 4]> {
    CASES.iter().find(|c| c.id == case_id).map(|c| {
        [
            ("idea.txt", c.idea),
            ("gold.json", c.gold),
            ("happy.jsonl", c.happy),
            ("fail_once.jsonl", c.fail_once),
        ]
    })
}

pub fn load_case(case_id: &str) -> Result<CaseBundle, FixtureError> {
    let c = CASES
        .iter()
        .find(|c| c.id == case_id)
        .ok_or_else(|| FixtureError::UnknownCase(case_id.to_string()))?;
    let gold = GoldCase::from_json(c.gold).map_err(|source| FixtureError::Gold {
        case: c.id.into(),
        source,
    })?;
    let transcript = |text| {
        Transcript::from_jsonl(text).map_err(|source| FixtureError::Transcript {
            case: c.id.into(),
            source,
        })
    };
    Ok(CaseBundle {
        case_id: c.id.to_string(),
        rough_idea: c.idea.trim().to_string(),
        gold,
        happy: transcript(c.happy)?,
        fail_once: transcript(c.fail_once)?,
    })
}
