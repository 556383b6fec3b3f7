//! Requirements metamodels and the models that conform to them.
//!
//! Three metamodels are built in: problem diagrams, use case diagrams and goal
//! models. This module validates models against them, serializes models
//! canonically (the workspace encoding and the gold file format) and parses
//! entity/relation generations through a bounded repair pipeline.

pub mod repair;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::evaluation::normalize_label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetamodelKind {
    ProblemDiagram,
    UseCaseDiagram,
    GoalModel,
}

impl MetamodelKind {
    pub const ALL: [MetamodelKind; 3] = [
        MetamodelKind::ProblemDiagram,
        MetamodelKind::UseCaseDiagram,
        MetamodelKind::GoalModel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetamodelKind::ProblemDiagram => "problem_diagram",
            MetamodelKind::UseCaseDiagram => "use_case_diagram",
            MetamodelKind::GoalModel => "goal_model",
        }
    }
}

impl fmt::Display for MetamodelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetamodelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetamodelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown metamodel `{s}` (expected problem_diagram, use_case_diagram or goal_model)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityType {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationType {
    pub name: String,
    pub sources: Vec<String>,
    pub targets: Vec<String>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metamodel {
    pub kind: MetamodelKind,
    pub entity_types: Vec<EntityType>,
    pub relation_types: Vec<RelationType>,
    /// Alternative spellings of type names, keyed by singularized snake_case.
    pub aliases: BTreeMap<String, String>,
}

pub fn metamodel_catalog() -> Vec<Metamodel> {
    MetamodelKind::ALL.into_iter().map(Metamodel::builtin).collect()
}

impl Metamodel {
    pub fn builtin(kind: MetamodelKind) -> Self {
        let et = |name: &str, description: &str| EntityType {
            name: name.into(),
            description: description.into(),
        };
        let rt = |name: &str, sources: &[&str], targets: &[&str], description: &str| RelationType {
            name: name.into(),
            sources: sources.iter().map(|s| s.to_string()).collect(),
            targets: targets.iter().map(|s| s.to_string()).collect(),
            description: description.into(),
        };
        let aliases = |pairs: &[(&str, &str)]| -> BTreeMap<String, String> {
            pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
        };
        match kind {
            MetamodelKind::ProblemDiagram => Metamodel {
                kind,
                entity_types: vec![
                    et("machine_domain", "the software-to-be that controls the problem world"),
                    et("requirement_domain", "a requirement the machine must bring about in the problem world"),
                    et("physical_device", "a device, person or given domain in the problem world"),
                ],
                relation_types: vec![
                    rt(
                        "shared_phenomenon",
                        &["machine_domain", "physical_device"],
                        &["machine_domain", "physical_device"],
                        "an event, state or value shared at the interface between two domains",
                    ),
                    rt(
                        "requirements_reference",
                        &["requirement_domain"],
                        &["physical_device"],
                        "a requirement refers to or constrains a phenomenon of a problem domain",
                    ),
                ],
                aliases: aliases(&[
                    ("machine", "machine_domain"),
                    ("requirement", "requirement_domain"),
                    ("given_domain", "physical_device"),
                    ("problem_domain", "physical_device"),
                    ("device", "physical_device"),
                    ("sharing_phenomenon", "shared_phenomenon"),
                    ("phenomenon", "shared_phenomenon"),
                    ("interface", "shared_phenomenon"),
                    ("requirement_reference", "requirements_reference"),
                    ("reference", "requirements_reference"),
                ]),
            },
            MetamodelKind::UseCaseDiagram => Metamodel {
                kind,
                entity_types: vec![
                    et("actor", "a person, role or external system that interacts with the system"),
                    et("use_case", "a goal an actor achieves with the system, named as a verb phrase"),
                ],
                relation_types: vec![
                    rt("association", &["actor"], &["use_case"], "the actor takes part in the use case"),
                    rt("include", &["use_case"], &["use_case"], "the source use case always includes the target"),
                    rt("extend", &["use_case"], &["use_case"], "the source use case optionally extends the target"),
                ],
                aliases: aliases(&[("usecase", "use_case"), ("associate", "association")]),
            },
            MetamodelKind::GoalModel => Metamodel {
                kind,
                entity_types: vec![
                    et("role", "an abstract stakeholder role with intentions"),
                    et("agent", "a concrete actor, person or system that plays roles"),
                    et("action", "a task or goal that a role or agent performs"),
                ],
                relation_types: vec![
                    rt("performs", &["role", "agent"], &["action"], "the role or agent carries out the action"),
                    rt("refines", &["action"], &["action"], "the source action is a refinement of the target"),
                ],
                aliases: aliases(&[("task", "action"), ("goal", "action"), ("actor", "agent")]),
            },
        }
    }

    pub fn entity_type_names(&self) -> impl Iterator<Item = &str> {
        self.entity_types.iter().map(|t| t.name.as_str())
    }

    pub fn has_entity_type(&self, name: &str) -> bool {
        self.entity_types.iter().any(|t| t.name == name)
    }

    pub fn relation_type(&self, name: &str) -> Option<&RelationType> {
        self.relation_types.iter().find(|r| r.name == name)
    }

    /// Maps a generated type key (any case, plural, alias) to an entity type.
    pub fn coerce_entity_type(&self, key: &str) -> Option<&str> {
        coerce(key, self.entity_type_names(), &self.aliases)
    }

    pub fn coerce_relation_type(&self, key: &str) -> Option<&str> {
        coerce(key, self.relation_types.iter().map(|r| r.name.as_str()), &self.aliases)
    }

    /// Plain-text description used as the `requirement_meta_model` input.
    pub fn describe(&self) -> String {
        let mut out = format!("Metamodel: {}\n\nEntity types:\n", self.kind);
        for t in &self.entity_types {
            out.push_str(&format!("- {}: {}\n", t.name, t.description));
        }
        out.push_str("\nRelation types:\n");
        for r in &self.relation_types {
            out.push_str(&format!(
                "- {} ({} -> {}): {}\n",
                r.name,
                r.sources.join(" | "),
                r.targets.join(" | "),
                r.description
            ));
        }
        out
    }
}

fn coerce<'a>(key: &str, names: impl Iterator<Item = &'a str>, aliases: &BTreeMap<String, String>) -> Option<&'a str> {
    let wanted = repair::singular_key(key);
    if wanted.is_empty() {
        return None;
    }
    let names: Vec<&'a str> = names.collect();
    let direct = names.iter().copied().find(|n| repair::singular_key(n) == wanted);
    direct.or_else(|| {
        let target = aliases.get(&wanted)?;
        names.iter().copied().find(|n| *n == target)
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entity {
    pub label: String,
    #[serde(rename = "type")]
    pub kind: String,
}

impl Entity {
    pub fn new(label: impl Into<String>, kind: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            kind: kind.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Relation {
    pub source: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub target: String,
}

impl Relation {
    pub fn new(source: impl Into<String>, kind: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            kind: kind.into(),
            target: target.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequirementsModel {
    pub metamodel: MetamodelKind,
    pub entities: Vec<Entity>,
    #[serde(default)]
    pub relations: Vec<Relation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("corrupt model: {0}")]
pub struct CorruptModel(pub String);

impl RequirementsModel {
    pub fn new(metamodel: MetamodelKind, entities: Vec<Entity>, relations: Vec<Relation>) -> Self {
        Self {
            metamodel,
            entities,
            relations,
        }
    }

    /// Same model in canonical order: entities by (type, normalized label),
    /// relations by (normalized source, type, normalized target).
    pub fn canonical(&self) -> Self {
        let mut m = self.clone();
        m.entities
            .sort_by_cached_key(|e| (e.kind.clone(), normalize_label(&e.label), e.label.clone()));
        m.relations.sort_by_cached_key(|r| {
            (
                normalize_label(&r.source),
                r.kind.clone(),
                normalize_label(&r.target),
                r.source.clone(),
                r.target.clone(),
            )
        });
        m
    }

    pub fn canonical_serialize(&self) -> String {
        serde_json::to_string_pretty(&self.canonical()).expect("model serializes")
    }

    pub fn canonical_parse(text: &str) -> Result<Self, CorruptModel> {
        let m: RequirementsModel = serde_json::from_str(text).map_err(|e| CorruptModel(e.to_string()))?;
        Ok(m.canonical())
    }

    /// Finds the entity a relation endpoint names, preferring one whose type
    /// the relation admits at that end.
    pub fn resolve<'a>(&'a self, label: &str, admitted: &[String]) -> Option<&'a Entity> {
        resolve_endpoint(&self.entities, label, admitted).ok()
    }
}

fn resolve_endpoint<'a>(entities: &'a [Entity], label: &str, admitted: &[String]) -> Result<&'a Entity, EndpointError> {
    let key = normalize_label(label);
    let mut same_label = entities.iter().filter(|e| normalize_label(&e.label) == key).peekable();
    if same_label.peek().is_none() {
        return Err(EndpointError::Unknown);
    }
    let candidates: Vec<&Entity> = same_label.collect();
    candidates
        .iter()
        .copied()
        .find(|e| admitted.contains(&e.kind))
        .ok_or_else(|| EndpointError::WrongType(candidates[0].kind.clone()))
}

enum EndpointError {
    Unknown,
    WrongType(String),
}

/// A way in which a model breaks its metamodel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MetamodelMismatch { expected: MetamodelKind, found: MetamodelKind },
    UnknownEntityType { label: String, kind: String },
    EmptyLabel { kind: String },
    DuplicateEntity { label: String, kind: String },
    UnknownRelationType { kind: String },
    UnresolvedEndpoint { relation: String, endpoint: String },
    EndpointTypeNotAllowed { relation: String, endpoint: String, kind: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MetamodelMismatch { expected, found } => {
                write!(f, "model is a {found}, expected a {expected}")
            }
            Violation::UnknownEntityType { label, kind } => write!(f, "entity `{label}` has unknown type `{kind}`"),
            Violation::EmptyLabel { kind } => write!(f, "a `{kind}` entity has an empty label"),
            Violation::DuplicateEntity { label, kind } => write!(f, "duplicate {kind} `{label}`"),
            Violation::UnknownRelationType { kind } => write!(f, "unknown relation type `{kind}`"),
            Violation::UnresolvedEndpoint { relation, endpoint } => {
                write!(f, "relation {relation}: endpoint `{endpoint}` is not an entity")
            }
            Violation::EndpointTypeNotAllowed { relation, endpoint, kind } => {
                write!(f, "relation {relation}: endpoint `{endpoint}` is a {kind}, which the relation does not admit")
            }
        }
    }
}

pub fn validate_model(model: &RequirementsModel, metamodel: &Metamodel) -> Vec<Violation> {
    let mut out = Vec::new();
    if model.metamodel != metamodel.kind {
        out.push(Violation::MetamodelMismatch {
            expected: metamodel.kind,
            found: model.metamodel,
        });
    }
    let mut seen = BTreeSet::new();
    for e in &model.entities {
        if !metamodel.has_entity_type(&e.kind) {
            out.push(Violation::UnknownEntityType {
                label: e.label.clone(),
                kind: e.kind.clone(),
            });
        }
        let key = normalize_label(&e.label);
        if key.is_empty() {
            out.push(Violation::EmptyLabel { kind: e.kind.clone() });
        } else if !seen.insert((e.kind.clone(), key)) {
            out.push(Violation::DuplicateEntity {
                label: e.label.clone(),
                kind: e.kind.clone(),
            });
        }
    }
    for r in &model.relations {
        let Some(rt) = metamodel.relation_type(&r.kind) else {
            out.push(Violation::UnknownRelationType { kind: r.kind.clone() });
            continue;
        };
        let name = format!("{} -{}-> {}", r.source, r.kind, r.target);
        for (endpoint, admitted) in [(&r.source, &rt.sources), (&r.target, &rt.targets)] {
            match resolve_endpoint(&model.entities, endpoint, admitted) {
                Ok(_) => {}
                Err(EndpointError::Unknown) => out.push(Violation::UnresolvedEndpoint {
                    relation: name.clone(),
                    endpoint: endpoint.clone(),
                }),
                Err(EndpointError::WrongType(kind)) => out.push(Violation::EndpointTypeNotAllowed {
                    relation: name.clone(),
                    endpoint: endpoint.clone(),
                    kind,
                }),
            }
        }
    }
    out
}

/// A generation that could not be turned into the expected structure.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse generation: {reason}")]
pub struct ParseFailure {
    pub reason: String,
    pub raw: String,
}

impl ParseFailure {
    pub fn new(reason: impl Into<String>, raw: &str) -> Self {
        Self {
            reason: reason.into(),
            raw: raw.to_string(),
        }
    }
}

/// Why a generated relation was dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RelationWarning {
    UnknownType { kind: String },
    UnknownEndpoint { endpoint: String },
    EndpointTypeNotAllowed { endpoint: String, kind: String, relation: String },
    Duplicate { source: String, kind: String, target: String },
}

impl fmt::Display for RelationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelationWarning::UnknownType { kind } => write!(f, "dropped relation of unknown type `{kind}`"),
            RelationWarning::UnknownEndpoint { endpoint } => {
                write!(f, "dropped relation naming unknown entity `{endpoint}`")
            }
            RelationWarning::EndpointTypeNotAllowed { endpoint, kind, relation } => {
                write!(f, "dropped {relation} relation: `{endpoint}` is a {kind}")
            }
            RelationWarning::Duplicate { source, kind, target } => {
                write!(f, "dropped duplicate relation {source} -{kind}-> {target}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedRelations {
    pub relations: Vec<Relation>,
    pub warnings: Vec<RelationWarning>,
}

const ENTITY_WRAPPERS: &[&str] = &["entities", "entity", "modeling_entities", "elements"];
const RELATION_WRAPPERS: &[&str] = &["relations", "relation", "relationships", "relationship", "modeling_relationship"];
const LABEL_KEYS: &[&str] = &["label", "name", "entity", "text", "value"];
const TYPE_KEYS: &[&str] = &["type", "kind", "entity_type", "category", "relation_type"];
const SOURCE_KEYS: &[&str] = &["source", "from", "src", "subject", "head"];
const TARGET_KEYS: &[&str] = &["target", "to", "dst", "object", "tail"];
const RELATION_KIND_KEYS: &[&str] = &["type", "relation", "relationship", "kind", "relation_type", "label"];

/// Parses generated entities. Unknown entity types are an error rather than
/// being dropped, so a parse never silently loses or mis-types an entity.
pub fn parse_model_entities(raw: &str, metamodel: &Metamodel) -> Result<Vec<Entity>, ParseFailure> {
    let fail = |reason: String| ParseFailure::new(reason, raw);
    let value = repair::normalize_keys(repair::extract_json(raw).map_err(fail)?);
    let mut out = Vec::new();
    collect_entities(&value, metamodel, &mut out).map_err(fail)?;
    if out.is_empty() {
        return Err(fail("no entities found".into()));
    }
    let mut seen = BTreeSet::new();
    out.retain(|e| seen.insert((e.kind.clone(), normalize_label(&e.label))));
    Ok(out)
}

fn collect_entities(value: &Value, mm: &Metamodel, out: &mut Vec<Entity>) -> Result<(), String> {
    match value {
        Value::Object(map) => {
            if let Some(inner) = ENTITY_WRAPPERS.iter().find_map(|k| map.get(*k)) {
                return collect_entities(inner, mm, out);
            }
            for (key, items) in map {
                let kind = mm
                    .coerce_entity_type(key)
                    .ok_or_else(|| format!("`{key}` is not an entity type of the {}", mm.kind))?;
                let Value::Array(items) = items else {
                    return Err(format!("value of `{key}` is not an array"));
                };
                for item in items {
                    let label = match item {
                        Value::String(s) => s.clone(),
                        Value::Object(o) => first_str(o, LABEL_KEYS)
                            .ok_or_else(|| format!("entity under `{key}` has no name"))?,
                        other => return Err(format!("entity under `{key}` is not a string: {other}")),
                    };
                    out.push(Entity::new(clean_label(&label)?, kind));
                }
            }
            Ok(())
        }
        Value::Array(items) => {
            for item in items {
                let Value::Object(o) = item else {
                    return Err(format!("untyped entity {item}"));
                };
                let label = first_str(o, LABEL_KEYS).ok_or("entity object has no label")?;
                let kind_key = first_str(o, TYPE_KEYS).ok_or_else(|| format!("entity `{label}` has no type"))?;
                let kind = mm
                    .coerce_entity_type(&kind_key)
                    .ok_or_else(|| format!("`{kind_key}` is not an entity type of the {}", mm.kind))?;
                out.push(Entity::new(clean_label(&label)?, kind));
            }
            Ok(())
        }
        other => Err(format!("expected an object or array of entities, got {other}")),
    }
}

fn first_str(map: &serde_json::Map<String, Value>, keys: &[&str]) -> Option<String> {
    keys.iter()
        .find_map(|k| map.get(*k).and_then(Value::as_str))
        .map(str::to_string)
}

fn clean_label(label: &str) -> Result<String, String> {
    let l = label.split_whitespace().collect::<Vec<_>>().join(" ");
    if normalize_label(&l).is_empty() {
        Err(format!("empty entity label `{label}`"))
    } else {
        Ok(l)
    }
}

/// Parses generated relations and resolves their endpoints against
/// `entities`. Relations of unknown type or with unresolvable endpoints are
/// dropped and reported in `warnings`; structurally broken output fails.
pub fn parse_model_relations(
    raw: &str,
    metamodel: &Metamodel,
    entities: &[Entity],
) -> Result<ParsedRelations, ParseFailure> {
    let fail = |reason: String| ParseFailure::new(reason, raw);
    let value = repair::normalize_keys(repair::extract_json(raw).map_err(fail)?);
    let mut triples = Vec::new();
    collect_relations(&value, &mut triples).map_err(fail)?;

    let mut relations = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = BTreeSet::new();
    for (source, kind_key, target) in triples {
        let Some(kind) = metamodel.coerce_relation_type(&kind_key) else {
            warnings.push(RelationWarning::UnknownType { kind: kind_key });
            continue;
        };
        let rt = metamodel.relation_type(kind).expect("coerced to a known relation type");
        let mut resolved = Vec::with_capacity(2);
        for (endpoint, admitted) in [(&source, &rt.sources), (&target, &rt.targets)] {
            match resolve_endpoint(entities, endpoint, admitted) {
                Ok(e) => resolved.push(e.label.clone()),
                Err(EndpointError::Unknown) => warnings.push(RelationWarning::UnknownEndpoint {
                    endpoint: endpoint.clone(),
                }),
                Err(EndpointError::WrongType(k)) => warnings.push(RelationWarning::EndpointTypeNotAllowed {
                    endpoint: endpoint.clone(),
                    kind: k,
                    relation: kind.to_string(),
                }),
            }
        }
        let [s, t] = resolved.as_slice() else { continue };
        if !seen.insert((normalize_label(s), kind.to_string(), normalize_label(t))) {
            warnings.push(RelationWarning::Duplicate {
                source: s.clone(),
                kind: kind.to_string(),
                target: t.clone(),
            });
            continue;
        }
        relations.push(Relation::new(s.clone(), kind, t.clone()));
    }
    Ok(ParsedRelations { relations, warnings })
}

fn collect_relations(value: &Value, out: &mut Vec<(String, String, String)>) -> Result<(), String> {
    match value {
        Value::Array(items) => {
            for item in items {
                out.push(relation_item(item, None)?);
            }
            Ok(())
        }
        Value::Object(map) => {
            if let Some(inner) = RELATION_WRAPPERS.iter().find_map(|k| map.get(*k)) {
                return collect_relations(inner, out);
            }
            // {"association": [{"source": .., "target": ..}, ...], ...}
            for (kind, items) in map {
                let Value::Array(items) = items else {
                    return Err(format!("value of `{kind}` is not an array of relations"));
                };
                for item in items {
                    out.push(relation_item(item, Some(kind))?);
                }
            }
            Ok(())
        }
        other => Err(format!("expected an array of relations, got {other}")),
    }
}

fn relation_item(item: &Value, kind: Option<&str>) -> Result<(String, String, String), String> {
    match (item, kind) {
        (Value::Object(o), _) => {
            let source = first_str(o, SOURCE_KEYS).ok_or_else(|| format!("relation without source: {item}"))?;
            let target = first_str(o, TARGET_KEYS).ok_or_else(|| format!("relation without target: {item}"))?;
            let kind = match kind {
                Some(k) => k.to_string(),
                None => first_str(o, RELATION_KIND_KEYS).ok_or_else(|| format!("relation without type: {item}"))?,
            };
            Ok((source, kind, target))
        }
        (Value::Array(parts), None) if parts.len() == 3 => match (&parts[0], &parts[1], &parts[2]) {
            (Value::String(s), Value::String(k), Value::String(t)) => Ok((s.clone(), k.clone(), t.clone())),
            _ => Err(format!("relation triple must hold three strings: {item}")),
        },
        (Value::Array(parts), Some(k)) if parts.len() == 2 => match (&parts[0], &parts[1]) {
            (Value::String(s), Value::String(t)) => Ok((s.clone(), k.to_string(), t.clone())),
            _ => Err(format!("relation pair must hold two strings: {item}")),
        },
        _ => Err(format!("unrecognised relation {item}")),
    }
}
