use std::sync::Mutex;

use serde_json::{json, Value};

use crate::actions::{CheckVerdict, Smell, SmellCategory};
use crate::backend::{Backend, BackendError, GenerationRequest, Transcript, TranscriptEntry};
use crate::evaluation::GoldCase;
use crate::metamodels::{Entity, Relation};
use crate::orchestrator::{run_pipeline, PipelineConfig};

const REPORT_MARKER: &str = "Quality check report";
const REVISION_MARKER: &str = "Revision: every requirement now states a measurable condition.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Every check passes.
    Happy,
    /// A check fails until the draft has been revised after an error report.
    FailOnce,
    /// Every check fails.
    AlwaysFail,
}

/// Stand-in for a language model that plays every agent of one case. Its
/// structured answers restate the case's gold model, varying the output
/// format between cases the way real generations vary. It answers from the
/// request alone, so it is deterministic.
#[derive(Debug, Clone)]
pub struct CaseSimulator {
    gold: GoldCase,
    scenario: Scenario,
    style: usize,
}

impl CaseSimulator {
    pub fn new(gold: GoldCase, scenario: Scenario) -> Self {
        let style = gold.case_id.bytes().map(usize::from).sum::<usize>() % 3;
        Self { gold, scenario, style }
    }

    fn entities(&self) -> &[Entity] {
        &self.gold.gold_model.entities
    }

    fn relations(&self) -> &[Relation] {
        &self.gold.gold_model.relations
    }

    fn labels_of<'a>(&'a self, kinds: &'a [&str]) -> impl Iterator<Item = &'a str> + 'a {
        self.entities()
            .iter()
            .filter(move |e| kinds.contains(&e.kind.as_str()))
            .map(|e| e.label.as_str())
    }

    fn user_stories(&self) -> String {
        let who: Vec<&str> = self
            .labels_of(&["actor", "role", "agent", "physical_device", "machine_domain"])
            .collect();
        let what: Vec<&str> = self.labels_of(&["use_case", "action", "requirement_domain"]).collect();
        what.iter()
            .enumerate()
            .map(|(i, w)| {
                let actor = who.get(i % who.len().max(1)).copied().unwrap_or("user");
                format!("{}. As a {actor}, I want to {w} so that the system serves its purpose.", i + 1)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn draft(&self, revised: bool) -> String {
        let mut out = format!("## Introduction\n{}\n\n## Stakeholders and Users\n", self.gold.rough_idea);
        for e in self.entities() {
            if !matches!(e.kind.as_str(), "use_case" | "action" | "requirement_domain") {
                out.push_str(&format!("- {} ({})\n", e.label, e.kind.replace('_', " ")));
            }
        }
        out.push_str("\n## Functional Requirements\n");
        for (i, w) in self.labels_of(&["use_case", "action", "requirement_domain"]).enumerate() {
            out.push_str(&format!("{}. The system shall {w}.\n", i + 1));
        }
        out.push_str("\n## Non-functional Requirements\n1. The system shall respond to every request within two seconds.\n");
        out.push_str("\n## Constraints\nNone beyond the listed devices and users.\n");
        if revised {
            out.push('\n');
            out.push_str(REVISION_MARKER);
            out.push('\n');
        }
        out
    }

    fn entity_json(&self) -> String {
        let mut kinds: Vec<&str> = Vec::new();
        for e in self.entities() {
            if !kinds.contains(&e.kind.as_str()) {
                kinds.push(&e.kind);
            }
        }
        let title = |k: &str| {
            k.split('_')
                .map(|w| {
                    let mut c = w.chars();
                    c.next().map_or(String::new(), |f| f.to_uppercase().chain(c).collect())
                })
                .collect::<Vec<_>>()
                .join(" ")
        };
        match self.style {
            0 => {
                let mut map = serde_json::Map::new();
                for k in &kinds {
                    let labels: Vec<&str> = self.labels_of(std::slice::from_ref(k)).collect();
                    map.insert(format!("{k}s"), json!(labels));
                }
                Value::Object(map).to_string()
            }
            1 => {
                let mut map = serde_json::Map::new();
                for k in &kinds {
                    let labels: Vec<&str> = self.labels_of(std::slice::from_ref(k)).collect();
                    map.insert(title(k), json!(labels));
                }
                format!(
                    "Here are the modeling entities extracted from the draft.\n\n```json\n{}\n```",
                    serde_json::to_string_pretty(&Value::Object(map)).expect("json")
                )
            }
            _ => {
                let items: Vec<Value> = self
                    .entities()
                    .iter()
                    .map(|e| json!({"Name": e.label, "Type": title(&e.kind)}))
                    .collect();
                json!({ "Entities": items }).to_string()
            }
        }
    }

    fn relation_json(&self) -> String {
        match self.style {
            0 => {
                let items: Vec<Value> = self
                    .relations()
                    .iter()
                    .map(|r| json!({"source": r.source, "type": r.kind, "target": r.target}))
                    .collect();
                Value::Array(items).to_string()
            }
            1 => {
                let items: Vec<Value> = self
                    .relations()
                    .iter()
                    .map(|r| json!({"Source": r.source, "Relation": r.kind, "Target": r.target}))
                    .collect();
                format!(
                    "The relationships between the entities are:\n```\n{}\n```\nAll endpoints are listed entities.",
                    serde_json::to_string_pretty(&json!({ "Relationships": items })).expect("json")
                )
            }
            _ => {
                let items: Vec<Value> = self
                    .relations()
                    .iter()
                    .map(|r| json!([r.source, r.kind, r.target]))
                    .collect();
                Value::Array(items).to_string()
            }
        }
    }

    fn verdict(&self, user: &str) -> String {
        let fails = match self.scenario {
            Scenario::Happy => false,
            Scenario::FailOnce => !user.contains(REVISION_MARKER),
            Scenario::AlwaysFail => true,
        };
        if fails {
            CheckVerdict::fail(vec![Smell {
                category: SmellCategory::Ambiguity,
                location: "Non-functional Requirements".into(),
                description: "the response time requirement does not say under which load it holds".into(),
            }])
            .to_json()
        } else {
            CheckVerdict::pass().to_json()
        }
    }

    fn srs(&self) -> String {
        let mut out = format!("# Software Requirements Specification ({})\n\n", self.gold.case_id);
        out.push_str(&format!("## 1 Introduction\n{}\n\n", self.gold.rough_idea));
        out.push_str("## 3.1 Functional Requirements\n");
        for (i, w) in self.labels_of(&["use_case", "action", "requirement_domain"]).enumerate() {
            out.push_str(&format!("FR-{}: The system shall {w}.\n", i + 1));
        }
        out.push_str("\n## 4 Requirements Model Summary\n");
        for e in self.entities() {
            out.push_str(&format!("- {}: {}\n", e.kind, e.label));
        }
        for r in self.relations() {
            out.push_str(&format!("- {} {} {}\n", r.source, r.kind, r.target));
        }
        out
    }
}

fn current_action(system: &str) -> Option<&str> {
    system
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix("Current action: "))
        .map(|a| a.trim_end_matches('.'))
}

impl Backend for CaseSimulator {
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let action = current_action(&request.system)
            .ok_or_else(|| BackendError::Unavailable("simulator: no current action in system text".into()))?;
        let user = &request.user;
        Ok(match action {
            "SpeakUserStories" => self.user_stories(),
            "ProposeQuestion" => {
                "Which of these capabilities matters most, and are there users we have not mentioned?".to_string()
            }
            "AnswerQuestion" => {
                let who: Vec<&str> = self.labels_of(&["actor", "role", "agent", "physical_device"]).collect();
                format!("All listed capabilities are essential. The parties involved are: {}.", who.join(", "))
            }
            "WriteReqDraft" => self.draft(user.contains(REPORT_MARKER)),
            "ExtractEntity" => self.entity_json(),
            "ExtractRelation" => self.relation_json(),
            "CheckRequirement" => self.verdict(user),
            "WriteSRS" => self.srs(),
            "WriteCheckReport" => format!(
                "{REPORT_MARKER}\n\n1. Ambiguity in Non-functional Requirements: state the load under which the \
                 response time holds.\n"
            ),
            other => return Err(BackendError::Unavailable(format!("simulator: unexpected action {other}"))),
        })
    }
}

struct Recorder<'a> {
    inner: &'a dyn Backend,
    transcript: Mutex<Transcript>,
}

impl Backend for Recorder<'_> {
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let response = self.inner.complete(request)?;
        self.transcript
            .lock()
            .expect("transcript lock")
            .push(TranscriptEntry::new(request.clone(), response.clone()));
        Ok(response)
    }
}

/// Runs the simulator for `gold` through the pipeline with the fixture
/// configuration and returns what it was asked and answered.
pub fn record_transcript(gold: &GoldCase, scenario: Scenario) -> Transcript {
    record_transcript_with(gold, scenario, &PipelineConfig::for_fixture(gold.metamodel()))
}

pub fn record_transcript_with(gold: &GoldCase, scenario: Scenario, config: &PipelineConfig) -> Transcript {
    let sim = CaseSimulator::new(gold.clone(), scenario);
    let rec = Recorder {
        inner: &sim,
        transcript: Mutex::new(Transcript::new()),
    };
    run_pipeline(&gold.rough_idea, config, &rec).expect("config is valid");
    rec.transcript.into_inner().expect("transcript lock")
}
