#![allow(dead_code)]

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::Mutex;

use mare_core::actions::{ActionKind, CheckVerdict, Smell, SmellCategory};
use mare_core::backend::{Backend, BackendError, GenerationRequest};
use mare_core::evaluation::GoldCase;
use mare_core::orchestrator::PipelineConfig;
use serde_json::{json, Map, Value};

pub fn fixture(case: &str, file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(case).join(file)
}

pub fn current_action(system: &str) -> &str {
    system
        .rsplit("Current action: ")
        .next()
        .unwrap_or("")
        .trim()
        .trim_end_matches('.')
}

pub fn failing_verdict() -> String {
    CheckVerdict::fail(vec![Smell {
        category: SmellCategory::Incompleteness,
        location: "Functional Requirements".into(),
        description: "no error handling is described".into(),
    }])
    .to_json()
}

/// Answers every action from a gold model; check verdicts come from a queue
/// (true = pass) and default to pass once it runs dry.
pub struct VerdictScript {
    entities: String,
    relations: String,
    verdicts: Mutex<VecDeque<bool>>,
    consumed: Mutex<Vec<bool>>,
}

impl VerdictScript {
    pub fn new(gold: &GoldCase, verdicts: &[bool]) -> Self {
        let mut by_type = Map::new();
        for e in &gold.gold_model.entities {
            by_type
                .entry(e.kind.clone())
                .or_insert_with(|| json!([]))
                .as_array_mut()
                .unwrap()
                .push(json!(e.label));
        }
        let relations: Vec<Value> = gold
            .gold_model
            .relations
            .iter()
            .map(|r| json!({"source": r.source, "type": r.kind, "target": r.target}))
            .collect();
        Self {
            entities: Value::Object(by_type).to_string(),
            relations: Value::Array(relations).to_string(),
            verdicts: Mutex::new(verdicts.iter().copied().collect()),
            consumed: Mutex::new(Vec::new()),
        }
    }

    /// Verdicts handed out so far, in order.
    pub fn consumed(&self) -> Vec<bool> {
        self.consumed.lock().unwrap().clone()
    }
}

impl Backend for VerdictScript {
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        Ok(match current_action(&request.system) {
            "ExtractEntity" => self.entities.clone(),
            "ExtractRelation" => self.relations.clone(),
            "CheckRequirement" => {
                let pass = self.verdicts.lock().unwrap().pop_front().unwrap_or(true);
                self.consumed.lock().unwrap().push(pass);
                if pass {
                    CheckVerdict::pass().to_json()
                } else {
                    failing_verdict()
                }
            }
            other => format!("{other} output for the current run."),
        })
    }
}

/// The action sequence the transition table prescribes for `verdicts`,
/// starting with the rough idea.
pub fn expected_actions(config: &PipelineConfig, verdicts: &[bool]) -> Vec<ActionKind> {
    use ActionKind::*;
    let mut seq = vec![HumanInteraction];
    seq.extend(std::iter::repeat_n(SpeakUserStories, config.stakeholder_count as usize));
    for _ in 0..config.qa_rounds {
        seq.extend([ProposeQuestion, AnswerQuestion]);
    }
    seq.extend([WriteReqDraft, ExtractEntity, ExtractRelation, CheckRequirement]);
    for check in 0..config.max_check_iterations as usize {
        if verdicts.get(check).copied().unwrap_or(true) {
            seq.push(WriteSrs);
            return seq;
        }
        seq.push(WriteCheckReport);
        if check + 1 < config.max_check_iterations as usize {
            seq.extend([WriteReqDraft, ExtractEntity, ExtractRelation, CheckRequirement]);
        }
    }
    seq
}

/// Runs the CLI in-process. Returns (exit code, stdout, stderr).
pub fn mare(args: &[&str]) -> (i32, String, String) {
    mare_with_input(args, "")
}

pub fn mare_with_input(args: &[&str], input: &str) -> (i32, String, String) {
    let mut stdin = std::io::Cursor::new(input.as_bytes().to_vec());
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("mare").chain(args.iter().copied());
    let code = mare_core::cli::run_cli(argv, &mut stdin, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}
