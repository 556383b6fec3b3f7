//! The action state machine: drives a run from the rough idea to an SRS or an
//! error report, gating the SRS on a passing quality check.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{execute_action, ActionCatalog, ActionContext, ActionKind, CheckVerdict, Slot};
use crate::agents::{gather_inputs, Recipient, Role, RoleCatalog, StaticInputs};
use crate::backend::{Backend, GenerationParams};
use crate::metamodels::{Metamodel, MetamodelKind, RequirementsModel};
use crate::workspace::{ArtifactFilter, Clock, EnvelopeDraft, LogicalClock, Workspace, WorkspaceSnapshot};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub metamodel: MetamodelKind,
    pub stakeholder_count: u32,
    /// User stories each stakeholder writes.
    pub num_user_stories: u32,
    pub qa_rounds: u32,
    pub max_check_iterations: u32,
    pub interactive: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            metamodel: MetamodelKind::ProblemDiagram,
            stakeholder_count: 3,
            num_user_stories: 3,
            qa_rounds: 1,
            max_check_iterations: 3,
            interactive: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("the rough idea is empty")]
    EmptyIdea,
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
}

impl PipelineConfig {
    /// One stakeholder and one Q&A round, the shape of the bundled transcripts.
    pub fn for_fixture(metamodel: MetamodelKind) -> Self {
        Self {
            metamodel,
            stakeholder_count: 1,
            qa_rounds: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        for (name, v) in [
            ("stakeholder_count", self.stakeholder_count),
            ("num_user_stories", self.num_user_stories),
            ("max_check_iterations", self.max_check_iterations),
        ] {
            if v == 0 {
                return Err(PipelineError::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Longest possible run, counting the initial HumanInteraction step:
    /// every check fails, each failure costs a report plus a four-step redo.
    pub fn max_steps(&self) -> u64 {
        1 + self.stakeholder_count as u64 + 2 * self.qa_rounds as u64 + 5 * self.max_check_iterations as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Action(ActionKind),
    Done,
    Failed,
}

impl Stage {
    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Done | Stage::Failed)
    }
}

/// Where a run is: the action about to execute (or a terminal marker) and
/// the counters the transitions depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineState {
    pub stage: Stage,
    /// Completed quality checks.
    pub iteration: u32,
    /// Completed question/answer rounds.
    pub qa_round: u32,
    /// Stakeholders that have written their stories.
    pub stakeholder_index: u32,
}

impl PipelineState {
    pub fn initial() -> Self {
        Self {
            stage: Stage::Action(ActionKind::HumanInteraction),
            iteration: 0,
            qa_round: 0,
            stakeholder_index: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IllegalTransition {
    #[error("CheckRequirement finished without a verdict")]
    MissingVerdict,
    #[error("{0:?} is terminal")]
    Terminal(Stage),
}

/// Successor of `state` once its action has executed. `verdict` is the
/// outcome of that action when it was CheckRequirement.
pub fn next_action(
    state: &PipelineState,
    config: &PipelineConfig,
    verdict: Option<&CheckVerdict>,
) -> Result<PipelineState, IllegalTransition> {
    use ActionKind::*;
    let Stage::Action(current) = state.stage else {
        return Err(IllegalTransition::Terminal(state.stage));
    };
    let mut next = *state;
    let go = |kind| Stage::Action(kind);
    let after_stories = |qa_round: u32| {
        if qa_round < config.qa_rounds {
            go(ProposeQuestion)
        } else {
            go(WriteReqDraft)
        }
    };
    next.stage = match current {
        HumanInteraction => go(SpeakUserStories),
        SpeakUserStories => {
            next.stakeholder_index += 1;
            if next.stakeholder_index < config.stakeholder_count {
                go(SpeakUserStories)
            } else {
                after_stories(next.qa_round)
            }
        }
        ProposeQuestion => go(AnswerQuestion),
        AnswerQuestion => {
            next.qa_round += 1;
            after_stories(next.qa_round)
        }
        WriteReqDraft => go(ExtractEntity),
        ExtractEntity => go(ExtractRelation),
        ExtractRelation => go(CheckRequirement),
        CheckRequirement => {
            let verdict = verdict.ok_or(IllegalTransition::MissingVerdict)?;
            next.iteration += 1;
            if verdict.passed {
                go(WriteSrs)
            } else {
                go(WriteCheckReport)
            }
        }
        WriteCheckReport => {
            if state.iteration < config.max_check_iterations {
                go(WriteReqDraft)
            } else {
                Stage::Failed
            }
        }
        WriteSrs => Stage::Done,
    };
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    /// Ended with an SRS.
    Success,
    /// Ended with an error report after exhausting the check iterations.
    Failure,
    /// Stopped by an operational error (backend, unparsable output).
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: u64,
    pub action: ActionKind,
    pub seq: u64,
    pub duration_ms: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    /// The SRS, the error report, or (when aborted) the diagnostic.
    pub final_artifact: String,
    /// Seq of the final artifact; `None` when aborted.
    pub final_seq: Option<u64>,
    /// Latest requirements model produced, if any.
    pub model: Option<RequirementsModel>,
    pub workspace: WorkspaceSnapshot,
    pub step_log: Vec<StepRecord>,
    pub warnings: Vec<String>,
    pub diagnostic: Option<String>,
}

impl RunOutcome {
    pub fn actions(&self) -> Vec<ActionKind> {
        self.step_log.iter().map(|s| s.action).collect()
    }
}

/// Everything about a run that is not the rough idea or the config.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub roles: RoleCatalog,
    pub actions: ActionCatalog,
    pub params: GenerationParams,
    pub clock: Arc<dyn Clock>,
}

impl Default for RunOptions {
    /// Built-in catalogs, default parameters and a logical clock, so equal
    /// runs produce equal workspaces.
    fn default() -> Self {
        Self {
            roles: RoleCatalog::builtin(),
            actions: ActionCatalog::builtin(),
            params: GenerationParams::default(),
            clock: Arc::new(LogicalClock::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeedbackError {
    #[error("the run is not interactive")]
    NotInteractive,
    #[error("feedback is only accepted right after an error report")]
    NotAtBoundary,
    #[error("feedback is empty")]
    Empty,
}

/// A run in progress. Execute it with [`step`](Self::step) or
/// [`run_to_end`](Self::run_to_end).
pub struct PipelineRun<'b> {
    config: PipelineConfig,
    options: RunOptions,
    metamodel: Metamodel,
    statics: StaticInputs,
    backend: &'b dyn Backend,
    workspace: Workspace,
    state: PipelineState,
    step_log: Vec<StepRecord>,
    warnings: Vec<String>,
    last_verdict: Option<CheckVerdict>,
    diagnostic: Option<String>,
}

impl<'b> PipelineRun<'b> {
    /// Validates the inputs and publishes the rough idea as the first step.
    pub fn start(
        rough_idea: &str,
        config: &PipelineConfig,
        backend: &'b dyn Backend,
        options: RunOptions,
    ) -> Result<Self, PipelineError> {
        let idea = rough_idea.trim();
        if idea.is_empty() {
            return Err(PipelineError::EmptyIdea);
        }
        config.validate()?;
        let metamodel = Metamodel::builtin(config.metamodel);
        let statics = StaticInputs::new()
            .with(Slot::RoughIdea, idea)
            .with(Slot::NumUserStories, config.num_user_stories.to_string())
            .with(Slot::DraftTemplate, options.actions.draft_template.to_string())
            .with(Slot::SrsTemplate, options.actions.srs_template.to_string())
            .with(Slot::MetaModel, metamodel.describe());
        let workspace = Workspace::with_clock(options.clock.clone());
        let mut run = Self {
            config: config.clone(),
            options,
            metamodel,
            statics,
            backend,
            workspace,
            state: PipelineState::initial(),
            step_log: Vec::new(),
            warnings: Vec::new(),
            last_verdict: None,
            diagnostic: None,
        };
        let started = Instant::now();
        let seq = run
            .workspace
            .publish(EnvelopeDraft::new(
                idea,
                Role::Human,
                ActionKind::HumanInteraction,
                Role::Human,
                Recipient::Role(Role::Stakeholders),
            ))
            .expect("rough idea envelope is valid");
        run.record(ActionKind::HumanInteraction, seq, started);
        run.state = next_action(&run.state, &run.config, None).expect("initial transition");
        Ok(run)
    }

    pub fn state(&self) -> &PipelineState {
        &self.state
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    pub fn step_log(&self) -> &[StepRecord] {
        &self.step_log
    }

    pub fn is_finished(&self) -> bool {
        self.state.stage.is_terminal() || self.diagnostic.is_some()
    }

    /// True right after a failed check was reported and before the draft is
    /// rewritten: the point where human feedback is taken.
    pub fn at_boundary(&self) -> bool {
        self.diagnostic.is_none()
            && self.state.stage == Stage::Action(ActionKind::WriteReqDraft)
            && self.step_log.last().map(|s| s.action) == Some(ActionKind::WriteCheckReport)
    }

    /// Publishes feedback for the collector's next draft.
    pub fn inject_feedback(&mut self, feedback: &str) -> Result<u64, FeedbackError> {
        if !self.config.interactive {
            return Err(FeedbackError::NotInteractive);
        }
        if !self.at_boundary() {
            return Err(FeedbackError::NotAtBoundary);
        }
        if feedback.trim().is_empty() {
            return Err(FeedbackError::Empty);
        }
        Ok(self
            .workspace
            .publish(EnvelopeDraft::new(
                feedback.trim(),
                Role::Human,
                ActionKind::HumanInteraction,
                Role::Human,
                Recipient::Role(Role::Collector),
            ))
            .expect("feedback envelope is valid"))
    }

    fn record(&mut self, action: ActionKind, seq: u64, started: Instant) {
        self.step_log.push(StepRecord {
            index: self.step_log.len() as u64 + 1,
            action,
            seq,
            duration_ms: started.elapsed().as_millis() as u64,
        });
    }

    /// Executes the next action. Returns `None` once the run has finished;
    /// an operational error finishes the run as aborted.
    pub fn step(&mut self) -> Option<&StepRecord> {
        if self.is_finished() {
            return None;
        }
        let Stage::Action(kind) = self.state.stage else {
            return None;
        };
        match self.execute(kind) {
            Ok(()) => self.step_log.last(),
            Err(diagnostic) => {
                self.diagnostic = Some(diagnostic);
                None
            }
        }
    }

    fn execute(&mut self, kind: ActionKind) -> Result<(), String> {
        let started = Instant::now();
        let spec = self.options.actions.spec(kind);
        let bundle =
            gather_inputs(spec, &self.workspace, &self.statics).map_err(|e| format!("{kind}: {e}"))?;
        let persona = match kind {
            ActionKind::SpeakUserStories => Some(self.state.stakeholder_index),
            ActionKind::AnswerQuestion => Some(self.state.qa_round % self.config.stakeholder_count),
            _ => None,
        }
        .map(|i| (i as usize, self.config.stakeholder_count as usize));
        let ctx = ActionContext {
            roles: &self.options.roles,
            metamodel: &self.metamodel,
            params: &self.options.params,
            persona,
        };
        let output = execute_action(spec, &bundle, self.backend, &ctx).map_err(|e| format!("{kind}: {e}"))?;
        let verdict = if kind == ActionKind::CheckRequirement {
            Some(CheckVerdict::parse(&output.draft.content).map_err(|e| format!("{kind}: {e}"))?)
        } else {
            None
        };
        self.warnings
            .extend(output.warnings.iter().map(|w| format!("{kind}: {w}")));
        let seq = self
            .workspace
            .publish(output.draft)
            .map_err(|e| format!("{kind}: {e}"))?;
        self.record(kind, seq, started);
        self.state = next_action(&self.state, &self.config, verdict.as_ref()).map_err(|e| e.to_string())?;
        if verdict.is_some() {
            self.last_verdict = verdict;
        }
        Ok(())
    }

    /// Steps to completion, offering `feedback` a chance to inject text at
    /// each boundary of an interactive run.
    pub fn run_to_end(mut self, feedback: &mut dyn FnMut(&PipelineRun<'_>) -> Option<String>) -> RunOutcome {
        while self.step().is_some() {
            if self.config.interactive && self.at_boundary() {
                if let Some(text) = feedback(&self) {
                    if !text.trim().is_empty() {
                        self.inject_feedback(&text).expect("at an interactive boundary");
                    }
                }
            }
        }
        self.finish()
    }

    /// Consumes the run. An unfinished run is reported as aborted.
    pub fn finish(self) -> RunOutcome {
        let latest = |kind| self.workspace.latest(&ArtifactFilter::all().caused_by(kind));
        let model = latest(ActionKind::ExtractRelation)
            .or_else(|| latest(ActionKind::ExtractEntity))
            .and_then(|e| RequirementsModel::canonical_parse(&e.content).ok());
        let terminal = match (&self.diagnostic, self.state.stage) {
            (None, Stage::Done) => Some((RunStatus::Success, ActionKind::WriteSrs)),
            (None, Stage::Failed) => Some((RunStatus::Failure, ActionKind::WriteCheckReport)),
            _ => None,
        };
        let (status, final_artifact, final_seq, diagnostic) = match terminal {
            Some((status, kind)) => {
                let env = latest(kind).expect("terminal artifact was published");
                (status, env.content, Some(env.seq), None)
            }
            None => {
                let d = self
                    .diagnostic
                    .clone()
                    .unwrap_or_else(|| format!("run stopped before finishing (at {:?})", self.state.stage));
                (RunStatus::Aborted, diagnostic_report(&d, &self.step_log), None, Some(d))
            }
        };
        RunOutcome {
            status,
            final_artifact,
            final_seq,
            model,
            workspace: self.workspace.snapshot(),
            step_log: self.step_log,
            warnings: self.warnings,
            diagnostic,
        }
    }
}

fn diagnostic_report(diagnostic: &str, steps: &[StepRecord]) -> String {
    let mut out = format!("# Run aborted\n\n{diagnostic}\n\n## Completed steps\n\n");
    for s in steps {
        out.push_str(&format!("{}. {} (seq {})\n", s.index, s.action, s.seq));
    }
    out
}

/// Runs a whole pipeline with the built-in catalogs and a logical clock.
pub fn run_pipeline(
    rough_idea: &str,
    config: &PipelineConfig,
    backend: &dyn Backend,
) -> Result<RunOutcome, PipelineError> {
    run_pipeline_with(rough_idea, config, backend, RunOptions::default())
}

pub fn run_pipeline_with(
    rough_idea: &str,
    config: &PipelineConfig,
    backend: &dyn Backend,
    options: RunOptions,
) -> Result<RunOutcome, PipelineError> {
    let run = PipelineRun::start(rough_idea, config, backend, options)?;
    Ok(run.run_to_end(&mut |_| None))
}
