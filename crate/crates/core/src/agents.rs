//! Agent roles and input gathering.
//!
//! A role owns a fixed set of actions; ownership partitions the nine agent
//! actions. Before an action runs, [`gather_inputs`] resolves each of its input
//! slots either from static configuration (rough idea, templates, metamodel) or
//! from the workspace artifacts produced by earlier actions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{ActionKind, ActionSpec, Resolution, Slot, UnknownAction};
use crate::workspace::{ArtifactFilter, Workspace};

/// Participants that may author workspace artifacts. `Human` is not an agent:
/// it is the source of the rough idea and of interactive feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Stakeholders,
    Collector,
    Modeler,
    Checker,
    Documenter,
    Human,
}

impl Role {
    pub const AGENTS: [Role; 5] = [
        Role::Stakeholders,
        Role::Collector,
        Role::Modeler,
        Role::Checker,
        Role::Documenter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Stakeholders => "Stakeholders",
            Role::Collector => "Collector",
            Role::Modeler => "Modeler",
            Role::Checker => "Checker",
            Role::Documenter => "Documenter",
            Role::Human => "Human",
        }
    }

    pub fn is_agent(self) -> bool {
        self != Role::Human
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown role `{0}`")]
pub struct UnknownRole(pub String);

impl FromStr for Role {
    type Err = UnknownRole;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Role::Stakeholders,
            Role::Collector,
            Role::Modeler,
            Role::Checker,
            Role::Documenter,
            Role::Human,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
        .ok_or_else(|| UnknownRole(s.to_string()))
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Role {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Role {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Addressee of an artifact: one role, or every participant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Recipient {
    Role(Role),
    All,
}

impl fmt::Display for Recipient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recipient::Role(r) => f.write_str(r.as_str()),
            Recipient::All => f.write_str("All"),
        }
    }
}

impl FromStr for Recipient {
    type Err = UnknownRole;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "All" {
            Ok(Recipient::All)
        } else {
            s.parse().map(Recipient::Role)
        }
    }
}

impl From<Role> for Recipient {
    fn from(r: Role) -> Self {
        Recipient::Role(r)
    }
}

impl Serialize for Recipient {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Recipient {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleDefinition {
    pub role_id: Role,
    pub name: String,
    pub profile: String,
    pub goal: String,
    pub actions: Vec<ActionKind>,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    UnknownRole(#[from] UnknownRole),
    #[error(transparent)]
    UnknownAction(#[from] UnknownAction),
    #[error("missing input `{0}`")]
    MissingInput(String),
    #[error("invalid role catalog: {0}")]
    InvalidCatalog(String),
    #[error("cannot read role catalog: {0}")]
    Io(#[from] std::io::Error),
}

/// The five agent definitions. Always a partition of the nine agent actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleCatalog {
    roles: Vec<RoleDefinition>,
}

impl Default for RoleCatalog {
    fn default() -> Self {
        Self::builtin()
    }
}

impl RoleCatalog {
    pub fn builtin() -> Self {
        Self { roles: builtin_roles() }
    }

    /// Validates that every agent role appears once and that action ownership
    /// is a partition of the agent actions.
    pub fn new(roles: Vec<RoleDefinition>) -> Result<Self, AgentError> {
        let mut seen_roles = BTreeSet::new();
        let mut owner: BTreeMap<ActionKind, Role> = BTreeMap::new();
        for def in &roles {
            if !def.role_id.is_agent() {
                return Err(AgentError::InvalidCatalog(format!(
                    "`{}` is not an agent role",
                    def.role_id
                )));
            }
            if !seen_roles.insert(def.role_id) {
                return Err(AgentError::InvalidCatalog(format!(
                    "role `{}` defined twice",
                    def.role_id
                )));
            }
            for &a in &def.actions {
                if a == ActionKind::HumanInteraction {
                    return Err(AgentError::InvalidCatalog(
                        "HumanInteraction cannot be owned by an agent".into(),
                    ));
                }
                if let Some(prev) = owner.insert(a, def.role_id) {
                    return Err(AgentError::InvalidCatalog(format!(
                        "action `{a}` owned by both `{prev}` and `{}`",
                        def.role_id
                    )));
                }
            }
        }
        if let Some(missing) = Role::AGENTS.iter().find(|r| !seen_roles.contains(r)) {
            return Err(AgentError::InvalidCatalog(format!("role `{missing}` is missing")));
        }
        if let Some(orphan) = ActionKind::AGENT_ACTIONS.iter().find(|a| !owner.contains_key(a)) {
            return Err(AgentError::InvalidCatalog(format!("action `{orphan}` has no owner")));
        }
        Ok(Self { roles })
    }

    /// Loads a JSON array of role definitions.
    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        let roles: Vec<RoleDefinition> =
            serde_json::from_str(text).map_err(|e| AgentError::InvalidCatalog(e.to_string()))?;
        Self::new(roles)
    }

    pub fn from_file(path: &Path) -> Result<Self, AgentError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn roles(&self) -> &[RoleDefinition] {
        &self.roles
    }

    pub fn get(&self, role: Role) -> Option<&RoleDefinition> {
        self.roles.iter().find(|d| d.role_id == role)
    }

    pub fn owner_of(&self, action: ActionKind) -> Option<Role> {
        self.roles
            .iter()
            .find(|d| d.actions.contains(&action))
            .map(|d| d.role_id)
    }

    pub fn can_perform(&self, role: Role, action: ActionKind) -> bool {
        self.get(role).is_some_and(|d| d.actions.contains(&action))
    }

    /// String-typed variant of [`can_perform`](Self::can_perform) for
    /// configuration and CLI input.
    pub fn can_perform_named(&self, role: &str, action: &str) -> Result<bool, AgentError> {
        let role: Role = role.parse()?;
        let action: ActionKind = action.parse()?;
        if self.get(role).is_none() {
            return Err(UnknownRole(role.to_string()).into());
        }
        Ok(self.can_perform(role, action))
    }
}

pub fn builtin_roles() -> Vec<RoleDefinition> {
    use ActionKind::*;
    let def = |role_id, name: &str, profile: &str, goal: &str, actions: Vec<ActionKind>| RoleDefinition {
        role_id,
        name: name.into(),
        profile: profile.into(),
        goal: goal.into(),
        actions,
    };
    vec![
        def(
            Role::Stakeholders,
            "Alice",
            "An experienced requirement stakeholder",
            "express the stakeholders' needs for the system to be developed",
            vec![SpeakUserStories, AnswerQuestion],
        ),
        def(
            Role::Collector,
            "Bob",
            "An experienced requirement collector",
            "interview the stakeholders to collect the stakeholders' needs",
            vec![ProposeQuestion, WriteReqDraft],
        ),
        def(
            Role::Modeler,
            "Carol",
            "An experienced requirement modeler",
            "extract the requirements model, including entities and relations",
            vec![ExtractEntity, ExtractRelation],
        ),
        def(
            Role::Checker,
            "Dave",
            "An experienced requirement checker",
            "check the requirement quality based on the requirements model",
            vec![CheckRequirement],
        ),
        def(
            Role::Documenter,
            "Eve",
            "An experienced requirement documenter",
            "write the requirements specification or the checking report",
            vec![WriteSrs, WriteCheckReport],
        ),
    ]
}

/// Resolved prompt inputs for one action, keyed by slot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InputBundle {
    slots: BTreeMap<Slot, String>,
}

impl InputBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, slot: Slot, content: impl Into<String>) -> Self {
        self.insert(slot, content);
        self
    }

    pub fn insert(&mut self, slot: Slot, content: impl Into<String>) {
        self.slots.insert(slot, content.into());
    }

    pub fn get(&self, slot: Slot) -> Option<&str> {
        self.slots.get(&slot).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> impl Iterator<Item = (Slot, &str)> {
        self.slots.iter().map(|(k, v)| (*k, v.as_str()))
    }
}

/// Inputs that come from configuration rather than from the workspace.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StaticInputs {
    values: BTreeMap<Slot, String>,
}

impl StaticInputs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, slot: Slot, value: impl Into<String>) -> Self {
        self.values.insert(slot, value.into());
        self
    }

    pub fn get(&self, slot: Slot) -> Option<&str> {
        self.values.get(&slot).map(String::as_str)
    }
}

/// Text used for an optional slot with nothing to resolve.
pub const ABSENT: &str = "None.";

/// Resolves every input slot of `spec`.
///
/// Static slots come from `statics`. Workspace slots take the artifact with the
/// highest seq from the slot's producing action, except slots `spec` marks as
/// collected, which concatenate every matching artifact in publish order.
/// Optional slots with no artifact resolve to [`ABSENT`].
pub fn gather_inputs(
    spec: &ActionSpec,
    workspace: &Workspace,
    statics: &StaticInputs,
) -> Result<InputBundle, AgentError> {
    let mut bundle = InputBundle::new();
    for &slot in &spec.input_slots {
        match resolve(spec, slot, workspace, statics) {
            Some(text) => bundle.insert(slot, text),
            None => return Err(AgentError::MissingInput(slot.name().to_string())),
        }
    }
    for &slot in &spec.optional_slots {
        let text = resolve(spec, slot, workspace, statics).unwrap_or_else(|| ABSENT.to_string());
        bundle.insert(slot, text);
    }
    Ok(bundle)
}

fn resolve(spec: &ActionSpec, slot: Slot, workspace: &Workspace, statics: &StaticInputs) -> Option<String> {
    let Some(producer) = slot.producer() else {
        return statics
            .get(slot)
            .filter(|v| !v.trim().is_empty())
            .map(str::to_string);
    };
    let mut filter = ArtifactFilter::all().caused_by(producer);
    if let Some(to) = slot.addressed_to() {
        filter = filter.send_to(to);
    }
    let found = workspace.query(&filter);
    let contents: Vec<&str> = found
        .iter()
        .map(|e| e.content.as_str())
        .filter(|c| !c.trim().is_empty())
        .collect();
    match spec.resolution(slot) {
        Resolution::Latest => contents.last().map(|c| c.to_string()),
        Resolution::All if contents.is_empty() => None,
        Resolution::All if contents.len() == 1 => Some(contents[0].to_string()),
        Resolution::All => Some(
            contents
                .iter()
                .enumerate()
                .map(|(i, c)| format!("[{}] {}", i + 1, c.trim()))
                .collect::<Vec<_>>()
                .join("\n\n"),
        ),
    }
}
