//! Precision/recall/F1 scoring of generated models against gold annotations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metamodels::{validate_model, Entity, Metamodel, MetamodelKind, Relation, RequirementsModel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("negative count: tp={tp}, fp={fp}, fn={fn_}")]
    NegativeCount { tp: i64, fp: i64, fn_: i64 },
    #[error("metamodel mismatch: predicted {predicted}, gold {gold}")]
    MetamodelMismatch { predicted: MetamodelKind, gold: MetamodelKind },
    #[error("nothing to aggregate")]
    EmptyInput,
    #[error("invalid gold case: {0}")]
    InvalidGold(String),
    #[error("fuzzy threshold must be in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercases, collapses whitespace, strips surrounding punctuation and drops
/// a leading article.
pub fn normalize_label(s: &str) -> String {
    let lower = s.to_lowercase();
    let words: Vec<&str> = lower.split_whitespace().collect();
    let joined = words.join(" ");
    let stripped = joined.trim_matches(|c: char| !c.is_alphanumeric());
    let mut words: Vec<&str> = stripped.split(' ').filter(|w| !w.is_empty()).collect();
    if words.len() > 1 && ARTICLES.contains(&words[0]) {
        words.remove(0);
    }
    words.join(" ")
}

/// [`normalize_label`] followed by an alias lookup. Alias keys and values are
/// compared in normalized form.
pub fn normalize_label_with(s: &str, aliases: &BTreeMap<String, String>) -> String {
    let n = normalize_label(s);
    aliases
        .iter()
        .find(|(k, _)| normalize_label(k) == n)
        .map_or(n, |(_, v)| normalize_label(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: i64,
    pub fp: i64,
    #[serde(rename = "fn")]
    pub fn_: i64,
}

impl Counts {
    pub fn new(tp: i64, fp: i64, fn_: i64) -> Self {
        Self { tp, fp, fn_ }
    }

    pub fn prf(self) -> Result<Prf, EvalError> {
        prf(self.tp, self.fp, self.fn_)
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64, f1: f64) -> Self {
        Self { precision, recall, f1 }
    }

    /// Values as percentages rounded to one decimal.
    pub fn percent_1dp(&self) -> [f64; 3] {
        [self.precision, self.recall, self.f1].map(|v| round_1dp(v * 100.0))
    }
}

/// Empty-vs-empty (all zero) scores 1 on every metric; otherwise a zero
/// denominator makes that metric 0.
pub fn prf(tp: i64, fp: i64, fn_: i64) -> Result<Prf, EvalError> {
    if tp < 0 || fp < 0 || fn_ < 0 {
        return Err(EvalError::NegativeCount { tp, fp, fn_ });
    }
    if tp == 0 && fp == 0 && fn_ == 0 {
        return Ok(Prf::new(1.0, 1.0, 1.0));
    }
    let ratio = |num: i64, den: i64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    Ok(Prf::new(p, r, f1))
}

/// Half-up rounding to one decimal; the epsilon absorbs binary representation
/// error (87.55 is stored as 87.5499...).
pub fn round_1dp(x: f64) -> f64 {
    ((x * 10.0) + 0.5 + 1e-9).floor() / 10.0
}

/// How predicted and gold elements are matched.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Matching {
    /// Equality after normalization.
    #[default]
    Exact,
    /// Same type and token-set Jaccard of every label at least the threshold.
    Fuzzy(f64),
}

impl Matching {
    pub fn fuzzy(threshold: f64) -> Result<Self, EvalError> {
        if threshold > 0.0 && threshold <= 1.0 {
            Ok(Matching::Fuzzy(threshold))
        } else {
            Err(EvalError::BadThreshold(threshold))
        }
    }
}

/// A normalized element: its type and its label(s). Entities have one label,
/// relations two (source, target).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MatchKey {
    pub kind: String,
    pub labels: Vec<String>,
}

impl MatchKey {
    /// Untyped key for a bare label.
    pub fn label(s: &str) -> Self {
        Self {
            kind: String::new(),
            labels: vec![normalize_label(s)],
        }
    }

    pub fn entity(e: &Entity, aliases: &BTreeMap<String, String>) -> Self {
        Self {
            kind: e.kind.clone(),
            labels: vec![normalize_label_with(&e.label, aliases)],
        }
    }

    pub fn relation(r: &Relation, aliases: &BTreeMap<String, String>) -> Self {
        Self {
            kind: r.kind.clone(),
            labels: vec![normalize_label_with(&r.source, aliases), normalize_label_with(&r.target, aliases)],
        }
    }
}

fn jaccard(a: &str, b: &str) -> f64 {
    let ta: BTreeSet<&str> = a.split_whitespace().collect();
    let tb: BTreeSet<&str> = b.split_whitespace().collect();
    let union = ta.union(&tb).count();
    if union == 0 {
        return 1.0;
    }
    ta.intersection(&tb).count() as f64 / union as f64
}

fn similarity(p: &MatchKey, g: &MatchKey) -> Option<f64> {
    if p.kind != g.kind || p.labels.len() != g.labels.len() {
        return None;
    }
    p.labels
        .iter()
        .zip(&g.labels)
        .map(|(a, b)| jaccard(a, b))
        .reduce(f64::min)
}

/// Counts matches between two element sets (duplicates collapse). Fuzzy mode
/// pairs greedily, each predicted element taking its best unused gold match.
pub fn match_sets(predicted: &[MatchKey], gold: &[MatchKey], matching: Matching) -> Counts {
    let pred: BTreeSet<&MatchKey> = predicted.iter().collect();
    let gold: BTreeSet<&MatchKey> = gold.iter().collect();
    let tp = match matching {
        Matching::Exact => pred.intersection(&gold).count(),
        Matching::Fuzzy(threshold) => {
            let mut used = vec![false; gold.len()];
            let gold: Vec<&MatchKey> = gold.iter().copied().collect();
            let mut tp = 0;
            for p in &pred {
                let best = gold
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !used[*i])
                    .filter_map(|(i, g)| similarity(p, g).map(|s| (i, s)))
                    .filter(|(_, s)| *s >= threshold)
                    .fold(None::<(usize, f64)>, |best, cur| match best {
                        Some(b) if b.1 >= cur.1 => Some(b),
                        _ => Some(cur),
                    });
                if let Some((i, _)) = best {
                    used[i] = true;
                    tp += 1;
                }
            }
            tp
        }
    };
    let tp = tp as i64;
    Counts::new(tp, pred.len() as i64 - tp, gold.len() as i64 - tp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindMetrics {
    #[serde(flatten)]
    pub counts: Counts,
    #[serde(flatten)]
    pub scores: Prf,
}

impl KindMetrics {
    pub fn from_counts(counts: Counts) -> Result<Self, EvalError> {
        Ok(Self {
            counts,
            scores: counts.prf()?,
        })
    }
}

/// Which metrics the headline score of a case uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Headline {
    Combined,
    EntityOnly,
}

impl Headline {
    /// Problem diagrams are scored on entities and relations, the others on
    /// entities only.
    pub fn for_metamodel(kind: MetamodelKind) -> Self {
        match kind {
            MetamodelKind::ProblemDiagram => Headline::Combined,
            MetamodelKind::UseCaseDiagram | MetamodelKind::GoalModel => Headline::EntityOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub case_id: String,
    pub metamodel: MetamodelKind,
    pub entity: KindMetrics,
    pub relation: KindMetrics,
    /// tp/fp/fn pooled over entities and relations.
    pub combined: KindMetrics,
    pub headline_basis: Headline,
    pub headline: KindMetrics,
}

/// On-disk gold case: the canonical model fields plus case metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoldFile {
    case_id: String,
    metamodel: MetamodelKind,
    rough_idea: String,
    #[serde(default)]
    aliases: BTreeMap<String, String>,
    entities: Vec<Entity>,
    #[serde(default)]
    relations: Vec<Relation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldCase {
    pub case_id: String,
    pub rough_idea: String,
    pub gold_model: RequirementsModel,
    /// Label aliases applied to both sides before matching.
    pub aliases: BTreeMap<String, String>,
}

impl GoldCase {
    pub fn new(case_id: impl Into<String>, rough_idea: impl Into<String>, gold_model: RequirementsModel) -> Self {
        Self {
            case_id: case_id.into(),
            rough_idea: rough_idea.into(),
            gold_model,
            aliases: BTreeMap::new(),
        }
    }

    pub fn metamodel(&self) -> MetamodelKind {
        self.gold_model.metamodel
    }

    /// Parses a gold file. Entity and relation type names go through the
    /// metamodel's aliases (`given_domain` becomes `physical_device`) and the
    /// result must validate.
    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let file: GoldFile = serde_json::from_str(text).map_err(|e| EvalError::InvalidGold(e.to_string()))?;
        let mm = Metamodel::builtin(file.metamodel);
        let mut entities = file.entities;
        for e in &mut entities {
            e.kind = mm
                .coerce_entity_type(&e.kind)
                .ok_or_else(|| EvalError::InvalidGold(format!("unknown entity type `{}`", e.kind)))?
                .to_string();
        }
        let mut relations = file.relations;
        for r in &mut relations {
            r.kind = mm
                .coerce_relation_type(&r.kind)
                .ok_or_else(|| EvalError::InvalidGold(format!("unknown relation type `{}`", r.kind)))?
                .to_string();
        }
        let model = RequirementsModel::new(file.metamodel, entities, relations).canonical();
        let violations = validate_model(&model, &mm);
        if let Some(v) = violations.first() {
            return Err(EvalError::InvalidGold(format!("{}: {v}", file.case_id)));
        }
        Ok(Self {
            case_id: file.case_id,
            rough_idea: file.rough_idea,
            gold_model: model,
            aliases: file.aliases,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, EvalError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let m = self.gold_model.canonical();
        let file = GoldFile {
            case_id: self.case_id.clone(),
            metamodel: m.metamodel,
            rough_idea: self.rough_idea.clone(),
            aliases: self.aliases.clone(),
            entities: m.entities,
            relations: m.relations,
        };
        serde_json::to_string_pretty(&file).expect("gold case serializes") + "\n"
    }
}

pub fn evaluate_case(predicted: &RequirementsModel, gold: &GoldCase) -> Result<CaseMetrics, EvalError> {
    evaluate_case_with(predicted, gold, Matching::Exact)
}

pub fn evaluate_case_with(
    predicted: &RequirementsModel,
    gold: &GoldCase,
    matching: Matching,
) -> Result<CaseMetrics, EvalError> {
    if predicted.metamodel != gold.metamodel() {
        return Err(EvalError::MetamodelMismatch {
            predicted: predicted.metamodel,
            gold: gold.metamodel(),
        });
    }
    let a = &gold.aliases;
    let ents = |m: &RequirementsModel| m.entities.iter().map(|e| MatchKey::entity(e, a)).collect::<Vec<_>>();
    let rels = |m: &RequirementsModel| m.relations.iter().map(|r| MatchKey::relation(r, a)).collect::<Vec<_>>();
    let ec = match_sets(&ents(predicted), &ents(&gold.gold_model), matching);
    let rc = match_sets(&rels(predicted), &rels(&gold.gold_model), matching);
    let entity = KindMetrics::from_counts(ec)?;
    let relation = KindMetrics::from_counts(rc)?;
    let combined = KindMetrics::from_counts(ec + rc)?;
    let basis = Headline::for_metamodel(gold.metamodel());
    Ok(CaseMetrics {
        case_id: gold.case_id.clone(),
        metamodel: gold.metamodel(),
        entity,
        relation,
        combined,
        headline_basis: basis,
        headline: match basis {
            Headline::Combined => combined,
            Headline::EntityOnly => entity,
        },
    })
}

/// Unweighted mean of each metric.
pub fn macro_average(rows: &[Prf]) -> Result<Prf, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&Prf) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Ok(Prf::new(mean(|r| r.precision), mean(|r| r.recall), mean(|r| r.f1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    Macro,
    /// Pool counts across cases, then score once.
    Micro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub entity: Prf,
    pub relation: Prf,
    pub combined: Prf,
    pub headline: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub averaging: Averaging,
    pub cases: Vec<CaseMetrics>,
    pub average: AverageRow,
}

pub fn aggregate(cases: &[CaseMetrics], averaging: Averaging) -> Result<EvalReport, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let avg = |pick: fn(&CaseMetrics) -> &KindMetrics| -> Result<Prf, EvalError> {
        match averaging {
            Averaging::Macro => macro_average(&cases.iter().map(|c| pick(c).scores).collect::<Vec<_>>()),
            Averaging::Micro => cases
                .iter()
                .map(|c| pick(c).counts)
                .fold(Counts::default(), |a, b| a + b)
                .prf(),
        }
    };
    Ok(EvalReport {
        averaging,
        cases: cases.to_vec(),
        average: AverageRow {
            entity: avg(|c| &c.entity)?,
            relation: avg(|c| &c.relation)?,
            combined: avg(|c| &c.combined)?,
            headline: avg(|c| &c.headline)?,
        },
    })
}

/// Cases x P/R/F1 table in percent with an Average row.
pub fn format_table(rows: &[(String, Prf)], average: &Prf) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("Average".len());
    let mut out = String::new();
    let line = |out: &mut String, name: &str, p: &Prf| {
        let [a, b, c] = p.percent_1dp();
        let _ = writeln!(out, "{name:<width$}  {a:>6.1}  {b:>6.1}  {c:>6.1}");
    };
    let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>6}", "Case", "P(%)", "R(%)", "F1(%)");
    for (name, p) in rows {
        line(&mut out, name, p);
    }
    line(&mut out, "Average", average);
    out
}

pub fn render_table(report: &EvalReport) -> String {
    let rows: Vec<(String, Prf)> = report
        .cases
        .iter()
        .map(|c| (c.case_id.clone(), c.headline.scores))
        .collect();
    format_table(&rows, &report.average.headline)
}
