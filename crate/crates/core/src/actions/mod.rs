//! The action catalog: what each action reads, what it produces, who performs
//! it, and how its prompt is rendered and its generation turned into an
//! artifact.

mod prompts;
mod template;
mod verdict;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{InputBundle, Recipient, Role, RoleCatalog};
use crate::backend::{Backend, BackendError, GenerationParams, GenerationRequest};
use crate::metamodels::{self, Metamodel, ParseFailure, RequirementsModel};
use crate::workspace::EnvelopeDraft;

pub use template::{DocTemplate, Section, TemplateError};
pub use verdict::{CheckVerdict, Smell, SmellCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionKind {
    HumanInteraction,
    SpeakUserStories,
    ProposeQuestion,
    AnswerQuestion,
    WriteReqDraft,
    ExtractEntity,
    ExtractRelation,
    CheckRequirement,
    WriteSrs,
    WriteCheckReport,
}

impl ActionKind {
    pub const ALL: [ActionKind; 10] = [
        ActionKind::HumanInteraction,
        ActionKind::SpeakUserStories,
        ActionKind::ProposeQuestion,
        ActionKind::AnswerQuestion,
        ActionKind::WriteReqDraft,
        ActionKind::ExtractEntity,
        ActionKind::ExtractRelation,
        ActionKind::CheckRequirement,
        ActionKind::WriteSrs,
        ActionKind::WriteCheckReport,
    ];

    /// The nine actions performed by agents.
    pub const AGENT_ACTIONS: [ActionKind; 9] = [
        ActionKind::SpeakUserStories,
        ActionKind::ProposeQuestion,
        ActionKind::AnswerQuestion,
        ActionKind::WriteReqDraft,
        ActionKind::ExtractEntity,
        ActionKind::ExtractRelation,
        ActionKind::CheckRequirement,
        ActionKind::WriteSrs,
        ActionKind::WriteCheckReport,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::HumanInteraction => "HumanInteraction",
            ActionKind::SpeakUserStories => "SpeakUserStories",
            ActionKind::ProposeQuestion => "ProposeQuestion",
            ActionKind::AnswerQuestion => "AnswerQuestion",
            ActionKind::WriteReqDraft => "WriteReqDraft",
            ActionKind::ExtractEntity => "ExtractEntity",
            ActionKind::ExtractRelation => "ExtractRelation",
            ActionKind::CheckRequirement => "CheckRequirement",
            ActionKind::WriteSrs => "WriteSRS",
            ActionKind::WriteCheckReport => "WriteCheckReport",
        }
    }

    /// Whether the generation must parse into a structured value.
    pub fn is_structured(self) -> bool {
        matches!(
            self,
            ActionKind::ExtractEntity | ActionKind::ExtractRelation | ActionKind::CheckRequirement
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown action `{0}`")]
pub struct UnknownAction(pub String);

impl FromStr for ActionKind {
    type Err = UnknownAction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActionKind::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| UnknownAction(s.to_string()))
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for ActionKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ActionKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Named prompt inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    RoughIdea,
    NumUserStories,
    UserStories,
    RequirementQuestion,
    /// Produced as `stakeholders_answer`, consumed as `requirement_answer`.
    RequirementAnswer,
    DraftTemplate,
    RequirementDraft,
    MetaModel,
    ModelingEntities,
    ModelingRelationship,
    CheckingMessage,
    SrsTemplate,
    ErrorReport,
    HumanFeedback,
}

impl Slot {
    pub const ALL: [Slot; 14] = [
        Slot::RoughIdea,
        Slot::NumUserStories,
        Slot::UserStories,
        Slot::RequirementQuestion,
        Slot::RequirementAnswer,
        Slot::DraftTemplate,
        Slot::RequirementDraft,
        Slot::MetaModel,
        Slot::ModelingEntities,
        Slot::ModelingRelationship,
        Slot::CheckingMessage,
        Slot::SrsTemplate,
        Slot::ErrorReport,
        Slot::HumanFeedback,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Slot::RoughIdea => "rough_idea_of_requirements",
            Slot::NumUserStories => "num_user_stories",
            Slot::UserStories => "user_stories",
            Slot::RequirementQuestion => "requirement_question",
            Slot::RequirementAnswer => "requirement_answer",
            Slot::DraftTemplate => "draft_template",
            Slot::RequirementDraft => "requirement_draft",
            Slot::MetaModel => "requirement_meta_model",
            Slot::ModelingEntities => "modeling_entities",
            Slot::ModelingRelationship => "modeling_relationship",
            Slot::CheckingMessage => "checking_message",
            Slot::SrsTemplate => "SRS_template",
            Slot::ErrorReport => "error_report",
            Slot::HumanFeedback => "human_feedback",
        }
    }

    pub fn from_name(name: &str) -> Option<Slot> {
        match name {
            "stakeholders_answer" => Some(Slot::RequirementAnswer),
            _ => Slot::ALL.into_iter().find(|s| s.name() == name),
        }
    }

    /// Action whose artifacts fill this slot; `None` for static configuration.
    pub fn producer(self) -> Option<ActionKind> {
        use ActionKind::*;
        match self {
            Slot::UserStories => Some(SpeakUserStories),
            Slot::RequirementQuestion => Some(ProposeQuestion),
            Slot::RequirementAnswer => Some(AnswerQuestion),
            Slot::RequirementDraft => Some(WriteReqDraft),
            Slot::ModelingEntities => Some(ExtractEntity),
            Slot::ModelingRelationship => Some(ExtractRelation),
            Slot::CheckingMessage => Some(CheckRequirement),
            Slot::ErrorReport => Some(WriteCheckReport),
            Slot::HumanFeedback => Some(HumanInteraction),
            Slot::RoughIdea | Slot::NumUserStories | Slot::DraftTemplate | Slot::SrsTemplate | Slot::MetaModel => None,
        }
    }

    /// Extra addressee constraint for workspace lookups. Feedback and the
    /// rough idea are both `HumanInteraction` artifacts; only feedback goes to
    /// the collector.
    pub fn addressed_to(self) -> Option<Role> {
        match self {
            Slot::HumanFeedback => Some(Role::Collector),
            _ => None,
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How a workspace slot is resolved when several artifacts qualify.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Latest,
    All,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpec {
    pub kind: ActionKind,
    /// `None` for `HumanInteraction`.
    pub performer: Option<Role>,
    /// Required inputs, in table order.
    pub input_slots: Vec<Slot>,
    /// Inputs rendered when present and as "None." otherwise.
    pub optional_slots: Vec<Slot>,
    /// Slots that concatenate every qualifying artifact instead of the latest.
    pub collected_slots: Vec<Slot>,
    pub output_kind: &'static str,
    pub send_to: Recipient,
    pub prompt_template: String,
}

impl ActionSpec {
    pub fn resolution(&self, slot: Slot) -> Resolution {
        if self.collected_slots.contains(&slot) {
            Resolution::All
        } else {
            Resolution::Latest
        }
    }

    pub fn accepts(&self, slot: Slot) -> bool {
        self.input_slots.contains(&slot) || self.optional_slots.contains(&slot)
    }

    fn check_template(&self) -> Result<(), ActionError> {
        for name in placeholders(&self.prompt_template) {
            match Slot::from_name(name) {
                Some(slot) if self.accepts(slot) => {}
                _ => {
                    return Err(ActionError::UnknownPlaceholder {
                        action: self.kind,
                        name: name.to_string(),
                    })
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ActionError {
    #[error("missing slot `{0}`")]
    MissingSlot(String),
    #[error("prompt for {action} uses `{{{name}}}`, which is not one of its inputs")]
    UnknownPlaceholder { action: ActionKind, name: String },
    #[error("{0} has no prompt; it is provided by a human")]
    NotExecutable(ActionKind),
    #[error("{0} is not performed by any role in the catalog")]
    NoPerformer(ActionKind),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Parse(#[from] ParseFailure),
    #[error("{0} produced an empty generation")]
    EmptyGeneration(ActionKind),
    #[error("cannot load prompt overrides: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid template file {path}: {source}")]
    Template { path: String, source: TemplateError },
    #[error("bundle content for modeling_entities is not a model: {0}")]
    BadEntities(String),
}

/// Action specs plus the document templates the draft and SRS prompts embed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionCatalog {
    specs: Vec<ActionSpec>,
    pub draft_template: DocTemplate,
    pub srs_template: DocTemplate,
}

impl Default for ActionCatalog {
    fn default() -> Self {
        Self::builtin()
    }
}

impl ActionCatalog {
    pub fn builtin() -> Self {
        Self {
            specs: builtin_specs(),
            draft_template: DocTemplate::default_draft(),
            srs_template: DocTemplate::default_srs(),
        }
    }

    pub fn specs(&self) -> &[ActionSpec] {
        &self.specs
    }

    pub fn spec(&self, kind: ActionKind) -> &ActionSpec {
        self.specs
            .iter()
            .find(|s| s.kind == kind)
            .expect("catalog covers every action kind")
    }

    /// Applies overrides from `dir`: `<ActionKind>.prompt` replaces that
    /// action's prompt, `draft_template.tmpl` and `SRS_template.tmpl` replace
    /// the document templates. Missing files keep the compiled defaults.
    pub fn with_overrides(mut self, dir: &Path) -> Result<Self, ActionError> {
        for spec in &mut self.specs {
            if spec.kind == ActionKind::HumanInteraction {
                continue;
            }
            let path = dir.join(format!("{}.prompt", spec.kind));
            if path.is_file() {
                spec.prompt_template = std::fs::read_to_string(&path)?;
                spec.check_template()?;
            }
        }
        for (name, target) in [
            ("draft_template.tmpl", &mut self.draft_template),
            ("SRS_template.tmpl", &mut self.srs_template),
        ] {
            let path = dir.join(name);
            if path.is_file() {
                *target = DocTemplate::parse(&std::fs::read_to_string(&path)?).map_err(|source| {
                    ActionError::Template {
                        path: path.display().to_string(),
                        source,
                    }
                })?;
            }
        }
        Ok(self)
    }
}

fn builtin_specs() -> Vec<ActionSpec> {
    use ActionKind::*;
    use Slot::*;
    let spec = |kind,
                performer: Option<Role>,
                input_slots: &[Slot],
                optional_slots: &[Slot],
                collected_slots: &[Slot],
                output_kind,
                send_to: Recipient,
                prompt: &str| ActionSpec {
        kind,
        performer,
        input_slots: input_slots.to_vec(),
        optional_slots: optional_slots.to_vec(),
        collected_slots: collected_slots.to_vec(),
        output_kind,
        send_to,
        prompt_template: prompt.to_string(),
    };
    let to = Recipient::Role;
    vec![
        spec(HumanInteraction, None, &[], &[], &[], "rough_idea_of_requirements", to(Role::Stakeholders), ""),
        spec(
            SpeakUserStories,
            Some(Role::Stakeholders),
            &[RoughIdea, NumUserStories],
            &[],
            &[],
            "user_stories",
            to(Role::Collector),
            prompts::SPEAK_USER_STORIES,
        ),
        spec(
            ProposeQuestion,
            Some(Role::Collector),
            &[RoughIdea, UserStories],
            &[RequirementQuestion, RequirementAnswer],
            &[UserStories, RequirementQuestion, RequirementAnswer],
            "requirement_question",
            to(Role::Stakeholders),
            prompts::PROPOSE_QUESTION,
        ),
        spec(
            AnswerQuestion,
            Some(Role::Stakeholders),
            &[RoughIdea, RequirementQuestion],
            &[],
            &[],
            "stakeholders_answer",
            to(Role::Collector),
            prompts::ANSWER_QUESTION,
        ),
        spec(
            WriteReqDraft,
            Some(Role::Collector),
            &[RoughIdea, UserStories, DraftTemplate],
            // Absent when the run is configured without Q&A rounds.
            &[RequirementQuestion, RequirementAnswer, HumanFeedback, ErrorReport],
            &[UserStories, RequirementQuestion, RequirementAnswer, HumanFeedback],
            "requirement_draft",
            to(Role::Modeler),
            prompts::WRITE_REQ_DRAFT,
        ),
        spec(
            ExtractEntity,
            Some(Role::Modeler),
            &[MetaModel, RequirementDraft],
            &[],
            &[],
            "modeling_entities",
            to(Role::Modeler),
            prompts::EXTRACT_ENTITY,
        ),
        spec(
            ExtractRelation,
            Some(Role::Modeler),
            &[MetaModel, RequirementDraft, ModelingEntities],
            &[],
            &[],
            "modeling_relationship",
            to(Role::Checker),
            prompts::EXTRACT_RELATION,
        ),
        spec(
            CheckRequirement,
            Some(Role::Checker),
            &[ModelingEntities, ModelingRelationship, RequirementDraft],
            &[],
            &[],
            "checking_message",
            to(Role::Documenter),
            prompts::CHECK_REQUIREMENT,
        ),
        spec(
            WriteSrs,
            Some(Role::Documenter),
            &[ModelingEntities, ModelingRelationship, RequirementDraft, SrsTemplate],
            &[],
            &[],
            "software_requirement_specification",
            Recipient::All,
            prompts::WRITE_SRS,
        ),
        spec(
            WriteCheckReport,
            Some(Role::Documenter),
            &[CheckingMessage],
            &[],
            &[],
            "error_report",
            to(Role::Collector),
            prompts::WRITE_CHECK_REPORT,
        ),
    ]
}

/// `{name}` placeholders in a template; other braces are literal text.
fn placeholders(template: &str) -> impl Iterator<Item = &str> {
    scan(template).filter_map(|piece| match piece {
        Piece::Placeholder(n) => Some(n),
        Piece::Text(_) => None,
    })
}

enum Piece<'a> {
    Text(&'a str),
    Placeholder(&'a str),
}

fn scan(template: &str) -> impl Iterator<Item = Piece<'_>> {
    let mut rest = template;
    std::iter::from_fn(move || {
        if rest.is_empty() {
            return None;
        }
        let bytes = rest.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b'{' {
                if let Some(len) = placeholder_len(&rest[i + 1..]) {
                    if i > 0 {
                        let text = &rest[..i];
                        rest = &rest[i..];
                        return Some(Piece::Text(text));
                    }
                    let name = &rest[1..1 + len];
                    rest = &rest[len + 2..];
                    return Some(Piece::Placeholder(name));
                }
            }
            i += 1;
        }
        let text = rest;
        rest = "";
        Some(Piece::Text(text))
    })
}

/// Length of an identifier immediately followed by `}`.
fn placeholder_len(s: &str) -> Option<usize> {
    let mut chars = s.char_indices();
    match chars.next() {
        Some((_, c)) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return None,
    }
    for (i, c) in chars {
        if c == '}' {
            return Some(i);
        }
        if !(c.is_ascii_alphanumeric() || c == '_') {
            return None;
        }
    }
    None
}

/// Substitutes every `{slot}` placeholder in `template` from `bundle` in a
/// single pass; substituted content is never rescanned.
pub fn render_template(template: &str, bundle: &InputBundle) -> Result<String, ActionError> {
    let mut out = String::with_capacity(template.len() + 256);
    for piece in scan(template) {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Placeholder(name) => {
                let value = Slot::from_name(name)
                    .and_then(|s| bundle.get(s))
                    .ok_or_else(|| ActionError::MissingSlot(name.to_string()))?;
                out.push_str(value);
            }
        }
    }
    Ok(out)
}

pub fn render_prompt(spec: &ActionSpec, bundle: &InputBundle) -> Result<String, ActionError> {
    if let Some(missing) = spec.input_slots.iter().find(|s| bundle.get(**s).is_none()) {
        return Err(ActionError::MissingSlot(missing.name().to_string()));
    }
    render_template(&spec.prompt_template, bundle)
}

/// Everything an action needs beyond its inputs.
#[derive(Debug, Clone, Copy)]
pub struct ActionContext<'a> {
    pub roles: &'a RoleCatalog,
    pub metamodel: &'a Metamodel,
    pub params: &'a GenerationParams,
    /// `(index, count)` of the stakeholder persona speaking, 0-based.
    pub persona: Option<(usize, usize)>,
}

/// Result of one action execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionOutput {
    pub draft: EnvelopeDraft,
    /// Non-fatal notes, e.g. relations dropped for unresolvable endpoints.
    pub warnings: Vec<String>,
    /// Number of backend calls made (2 when a corrective re-prompt was needed).
    pub generations: usize,
}

pub fn system_text(ctx: &ActionContext<'_>, performer: Role, kind: ActionKind) -> String {
    let mut text = match ctx.roles.get(performer) {
        Some(def) => format!(
            "You are {}, {}. Your goal is to {}.",
            def.name,
            lowercase_first(&def.profile),
            def.goal
        ),
        None => format!("You are the {performer} agent."),
    };
    if let (Role::Stakeholders, Some((i, n))) = (performer, ctx.persona) {
        text.push_str(&format!(" You speak as stakeholder {} of {}.", i + 1, n));
    }
    text.push_str(&format!("\nCurrent action: {kind}."));
    text
}

fn lowercase_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_lowercase().chain(c).collect(),
        None => String::new(),
    }
}

const CORRECTION: &str = "\n\nYour previous response could not be parsed";

/// Renders the prompt, calls the backend and converts the generation into an
/// envelope draft.
///
/// Structured actions get one corrective re-prompt when the first generation
/// does not parse. Entity and relation extraction then fail with
/// [`ActionError::Parse`]; a verdict that still does not parse becomes a
/// failing verdict, so the quality gate fails closed.
pub fn execute_action(
    spec: &ActionSpec,
    bundle: &InputBundle,
    backend: &dyn Backend,
    ctx: &ActionContext<'_>,
) -> Result<ActionOutput, ActionError> {
    let performer = spec.performer.ok_or(ActionError::NotExecutable(spec.kind))?;
    let user = render_prompt(spec, bundle)?;
    let request = GenerationRequest::new(system_text(ctx, performer, spec.kind), user, ctx.params.clone());

    let mut generations = 1;
    let raw = generate(backend, &request, spec.kind)?;
    let (content, warnings) = match postprocess(spec.kind, &raw, bundle, ctx) {
        Ok(done) => done,
        Err(PostError::Fatal(e)) => return Err(e),
        Err(PostError::Unparsable(failure)) => {
            let retry = GenerationRequest::new(
                request.system.clone(),
                format!(
                    "{}{CORRECTION}: {}. Respond again with only the JSON described above.",
                    request.user, failure.reason
                ),
                request.params.clone(),
            );
            generations += 1;
            let raw = generate(backend, &retry, spec.kind)?;
            match postprocess(spec.kind, &raw, bundle, ctx) {
                Ok(done) => done,
                Err(PostError::Fatal(e)) => return Err(e),
                Err(PostError::Unparsable(failure)) if spec.kind == ActionKind::CheckRequirement => {
                    (CheckVerdict::unparsable(&failure.reason).to_json(), Vec::new())
                }
                Err(PostError::Unparsable(failure)) => return Err(failure.into()),
            }
        }
    };
    Ok(ActionOutput {
        draft: EnvelopeDraft::new(content, performer, spec.kind, performer, spec.send_to),
        warnings,
        generations,
    })
}

fn generate(backend: &dyn Backend, request: &GenerationRequest, kind: ActionKind) -> Result<String, ActionError> {
    let raw = backend.complete(request)?;
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(ActionError::EmptyGeneration(kind));
    }
    Ok(trimmed.to_string())
}

enum PostError {
    Unparsable(ParseFailure),
    Fatal(ActionError),
}

fn postprocess(
    kind: ActionKind,
    raw: &str,
    bundle: &InputBundle,
    ctx: &ActionContext<'_>,
) -> Result<(String, Vec<String>), PostError> {
    match kind {
        ActionKind::ExtractEntity => {
            let entities = metamodels::parse_model_entities(raw, ctx.metamodel).map_err(PostError::Unparsable)?;
            let model = RequirementsModel::new(ctx.metamodel.kind, entities, Vec::new());
            Ok((model.canonical_serialize(), Vec::new()))
        }
        ActionKind::ExtractRelation => {
            let entities_text = bundle
                .get(Slot::ModelingEntities)
                .ok_or_else(|| PostError::Fatal(ActionError::MissingSlot(Slot::ModelingEntities.name().into())))?;
            let entity_model = RequirementsModel::canonical_parse(entities_text)
                .map_err(|e| PostError::Fatal(ActionError::BadEntities(e.to_string())))?;
            let parsed = metamodels::parse_model_relations(raw, ctx.metamodel, &entity_model.entities)
                .map_err(PostError::Unparsable)?;
            let model = RequirementsModel::new(ctx.metamodel.kind, entity_model.entities, parsed.relations);
            Ok((
                model.canonical_serialize(),
                parsed.warnings.iter().map(ToString::to_string).collect(),
            ))
        }
        ActionKind::CheckRequirement => {
            let verdict = CheckVerdict::parse(raw).map_err(PostError::Unparsable)?;
            Ok((verdict.to_json(), Vec::new()))
        }
        _ => Ok((raw.to_string(), Vec::new())),
    }
}

/// Slot names referenced by a template, for diagnostics and tests.
pub fn template_slots(template: &str) -> BTreeSet<String> {
    placeholders(template).map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::metamodels::MetamodelKind;

    #[test]
    fn catalog_matches_table() {
        let cat = ActionCatalog::builtin();
        assert_eq!(cat.specs().len(), 10);
        assert_eq!(
            cat.spec(ActionKind::WriteSrs).input_slots,
            vec![Slot::ModelingEntities, Slot::ModelingRelationship, Slot::RequirementDraft, Slot::SrsTemplate]
        );
        assert_eq!(cat.spec(ActionKind::WriteCheckReport).input_slots, vec![Slot::CheckingMessage]);
        assert_eq!(
            cat.spec(ActionKind::SpeakUserStories).input_slots,
            vec![Slot::RoughIdea, Slot::NumUserStories]
        );
        assert_eq!(cat.spec(ActionKind::AnswerQuestion).output_kind, "stakeholders_answer");
        assert_eq!(cat.spec(ActionKind::HumanInteraction).performer, None);
    }

    #[test]
    fn templates_only_reference_declared_slots() {
        for spec in ActionCatalog::builtin().specs() {
            spec.check_template().unwrap();
            let used = template_slots(&spec.prompt_template);
            for slot in &spec.input_slots {
                assert!(used.contains(slot.name()), "{} never renders {}", spec.kind, slot);
            }
        }
    }

    #[test]
    fn performers_match_role_catalog() {
        let roles = RoleCatalog::builtin();
        for spec in ActionCatalog::builtin().specs() {
            assert_eq!(spec.performer, roles.owner_of(spec.kind), "{}", spec.kind);
        }
    }

    #[test]
    fn routing_follows_consumers() {
        let cat = ActionCatalog::builtin();
        let to = |k| cat.spec(k).send_to;
        assert_eq!(to(ActionKind::SpeakUserStories), Recipient::Role(Role::Collector));
        assert_eq!(to(ActionKind::ProposeQuestion), Recipient::Role(Role::Stakeholders));
        assert_eq!(to(ActionKind::AnswerQuestion), Recipient::Role(Role::Collector));
        assert_eq!(to(ActionKind::WriteReqDraft), Recipient::Role(Role::Modeler));
        assert_eq!(to(ActionKind::ExtractEntity), Recipient::Role(Role::Modeler));
        assert_eq!(to(ActionKind::ExtractRelation), Recipient::Role(Role::Checker));
        assert_eq!(to(ActionKind::CheckRequirement), Recipient::Role(Role::Documenter));
        assert_eq!(to(ActionKind::WriteCheckReport), Recipient::Role(Role::Collector));
        assert_eq!(to(ActionKind::WriteSrs), Recipient::All);
    }

    #[test]
    fn render_substitutes() {
        let bundle = InputBundle::new().with(Slot::UserStories, "story A");
        assert_eq!(
            render_template("Ask a question about: {user_stories}", &bundle).unwrap(),
            "Ask a question about: story A"
        );
        let err = render_template("Ask a question about: {user_stories}", &InputBundle::new()).unwrap_err();
        assert!(matches!(err, ActionError::MissingSlot(ref s) if s == "user_stories"));
    }

    #[test]
    fn render_leaves_json_braces_and_does_not_rescan() {
        let bundle = InputBundle::new().with(Slot::UserStories, "{rough_idea_of_requirements}");
        let out = render_template("{\"a\": 1} {user_stories} { x }", &bundle).unwrap();
        assert_eq!(out, "{\"a\": 1} {rough_idea_of_requirements} { x }");
    }

    #[test]
    fn rendered_draft_prompt_contains_all_inputs() {
        let cat = ActionCatalog::builtin();
        let template = cat.draft_template.to_string();
        let bundle = InputBundle::new()
            .with(Slot::RoughIdea, "an ATM system")
            .with(Slot::UserStories, "[1] story one\n\n[2] story two")
            .with(Slot::RequirementQuestion, "q one?")
            .with(Slot::RequirementAnswer, "a one.")
            .with(Slot::DraftTemplate, template.clone())
            .with(Slot::HumanFeedback, "None.")
            .with(Slot::ErrorReport, "None.");
        let out = render_prompt(cat.spec(ActionKind::WriteReqDraft), &bundle).unwrap();
        for needle in ["an ATM system", "story one", "story two", "q one?", "a one.", template.as_str()] {
            assert!(out.contains(needle), "{needle}");
        }
        for s in &cat.draft_template.sections {
            assert!(out.contains(&s.heading));
        }
    }

    fn ctx_parts() -> (RoleCatalog, Metamodel, GenerationParams) {
        (
            RoleCatalog::builtin(),
            Metamodel::builtin(MetamodelKind::UseCaseDiagram),
            GenerationParams::default(),
        )
    }

    #[test]
    fn speak_user_stories_envelope() {
        let (roles, mm, params) = ctx_parts();
        let ctx = ActionContext {
            roles: &roles,
            metamodel: &mm,
            params: &params,
            persona: Some((0, 1)),
        };
        let backend = ScriptedBackend::ordered(vec!["1. As a homeowner, I want ...".into()]);
        let bundle = InputBundle::new()
            .with(Slot::RoughIdea, "smart home control system")
            .with(Slot::NumUserStories, "3");
        let spec = ActionCatalog::builtin().spec(ActionKind::SpeakUserStories).clone();
        let out = execute_action(&spec, &bundle, &backend, &ctx).unwrap();
        assert_eq!(out.draft.caused_by, ActionKind::SpeakUserStories);
        assert_eq!(out.draft.sent_from, Role::Stakeholders);
        assert_eq!(out.draft.role, Role::Stakeholders);
        assert_eq!(out.draft.send_to, Recipient::Role(Role::Collector));
    }

    fn check_bundle() -> InputBundle {
        InputBundle::new()
            .with(Slot::ModelingEntities, "{}")
            .with(Slot::ModelingRelationship, "{}")
            .with(Slot::RequirementDraft, "draft")
    }

    #[test]
    fn clean_verdict_passes_through() {
        let (roles, mm, params) = ctx_parts();
        let ctx = ActionContext { roles: &roles, metamodel: &mm, params: &params, persona: None };
        let backend = ScriptedBackend::ordered(vec![r#"{"passed": true, "smells": []}"#.into()]);
        let spec = ActionCatalog::builtin().spec(ActionKind::CheckRequirement).clone();
        let out = execute_action(&spec, &check_bundle(), &backend, &ctx).unwrap();
        let v = CheckVerdict::parse(&out.draft.content).unwrap();
        assert!(v.passed);
        assert!(v.smells.is_empty());
        assert_eq!(out.generations, 1);
    }

    #[test]
    fn unparsable_verdict_fails_closed() {
        let (roles, mm, params) = ctx_parts();
        let ctx = ActionContext { roles: &roles, metamodel: &mm, params: &params, persona: None };
        let backend = ScriptedBackend::ordered(vec!["Looks fine to me.".into(), "Still fine!".into()]);
        let spec = ActionCatalog::builtin().spec(ActionKind::CheckRequirement).clone();
        let out = execute_action(&spec, &check_bundle(), &backend, &ctx).unwrap();
        let v = CheckVerdict::parse(&out.draft.content).unwrap();
        assert!(!v.passed);
        assert_eq!(out.generations, 2);
    }

    #[test]
    fn prose_entities_are_a_parse_failure() {
        let (roles, mm, params) = ctx_parts();
        let ctx = ActionContext { roles: &roles, metamodel: &mm, params: &params, persona: None };
        let backend = ScriptedBackend::ordered(vec![
            "The actors are the customer and the bank.".into(),
            "Sorry, the actors are the customer and the bank.".into(),
        ]);
        let bundle = InputBundle::new()
            .with(Slot::MetaModel, mm.describe())
            .with(Slot::RequirementDraft, "draft");
        let spec = ActionCatalog::builtin().spec(ActionKind::ExtractEntity).clone();
        let err = execute_action(&spec, &bundle, &backend, &ctx).unwrap_err();
        assert!(matches!(err, ActionError::Parse(_)), "{err}");
    }

    #[test]
    fn corrective_reprompt_recovers() {
        let (roles, mm, params) = ctx_parts();
        let ctx = ActionContext { roles: &roles, metamodel: &mm, params: &params, persona: None };
        let backend = ScriptedBackend::ordered(vec![
            "I found some actors.".into(),
            r#"{"actor": ["customer"], "use_case": ["withdraw cash"]}"#.into(),
        ]);
        let bundle = InputBundle::new()
            .with(Slot::MetaModel, mm.describe())
            .with(Slot::RequirementDraft, "draft");
        let spec = ActionCatalog::builtin().spec(ActionKind::ExtractEntity).clone();
        let out = execute_action(&spec, &bundle, &backend, &ctx).unwrap();
        assert_eq!(out.generations, 2);
        let model = RequirementsModel::canonical_parse(&out.draft.content).unwrap();
        assert_eq!(model.entities.len(), 2);
    }

    #[test]
    fn empty_generation() {
        let (roles, mm, params) = ctx_parts();
        let ctx = ActionContext { roles: &roles, metamodel: &mm, params: &params, persona: None };
        let backend = ScriptedBackend::ordered(vec!["   ".into()]);
        let bundle = InputBundle::new().with(Slot::CheckingMessage, "{}");
        let spec = ActionCatalog::builtin().spec(ActionKind::WriteCheckReport).clone();
        assert!(matches!(
            execute_action(&spec, &bundle, &backend, &ctx),
            Err(ActionError::EmptyGeneration(ActionKind::WriteCheckReport))
        ));
    }

    #[test]
    fn overrides_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("WriteCheckReport.prompt"), "Report on: {checking_message}").unwrap();
        std::fs::write(dir.path().join("draft_template.tmpl"), "## Only\nOne section.").unwrap();
        let cat = ActionCatalog::builtin().with_overrides(dir.path()).unwrap();
        assert_eq!(cat.spec(ActionKind::WriteCheckReport).prompt_template, "Report on: {checking_message}");
        assert_eq!(cat.draft_template.sections.len(), 1);

        std::fs::write(dir.path().join("WriteSRS.prompt"), "{user_stories}").unwrap();
        assert!(matches!(
            ActionCatalog::builtin().with_overrides(dir.path()),
            Err(ActionError::UnknownPlaceholder { .. })
        ));
    }
}
