use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::metamodels::repair;
use crate::metamodels::ParseFailure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmellCategory {
    Incompleteness,
    Incorrectness,
    Inconsistency,
    Ambiguity,
}

impl SmellCategory {
    pub const ALL: [SmellCategory; 4] = [
        SmellCategory::Incompleteness,
        SmellCategory::Incorrectness,
        SmellCategory::Inconsistency,
        SmellCategory::Ambiguity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SmellCategory::Incompleteness => "incompleteness",
            SmellCategory::Incorrectness => "incorrectness",
            SmellCategory::Inconsistency => "inconsistency",
            SmellCategory::Ambiguity => "ambiguity",
        }
    }
}

impl FromStr for SmellCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_lowercase();
        // adjectives are common in generations: "incomplete", "ambiguous"
        let canon = match s.as_str() {
            "incomplete" => "incompleteness",
            "incorrect" => "incorrectness",
            "inconsistent" => "inconsistency",
            "ambiguous" => "ambiguity",
            other => other,
        };
        SmellCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == canon)
            .ok_or_else(|| format!("unknown smell category `{s}`"))
    }
}

impl fmt::Display for SmellCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Smell {
    pub category: SmellCategory,
    pub location: String,
    pub description: String,
}

/// Outcome of a quality check. `passed` implies no smells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckVerdict {
    pub passed: bool,
    pub smells: Vec<Smell>,
}

impl CheckVerdict {
    pub fn pass() -> Self {
        Self {
            passed: true,
            smells: Vec::new(),
        }
    }

    pub fn fail(smells: Vec<Smell>) -> Self {
        Self { passed: false, smells }
    }

    /// Failing verdict standing in for a checker output that could not be read.
    pub fn unparsable(reason: &str) -> Self {
        Self::fail(vec![Smell {
            category: SmellCategory::Incorrectness,
            location: "checker output".into(),
            description: format!("the quality check result could not be parsed ({reason})"),
        }])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serializes")
    }

    /// Parses a generated verdict through the repair pipeline. A verdict
    /// claiming to pass while listing smells is read as failing.
    pub fn parse(raw: &str) -> Result<Self, ParseFailure> {
        let fail = |reason: String| ParseFailure::new(reason, raw);
        let value = repair::extract_json(raw).map_err(fail)?;
        let Value::Object(map) = repair::normalize_keys(value) else {
            return Err(fail("verdict is not a JSON object".into()));
        };
        let passed = ["passed", "pass", "passes"]
            .iter()
            .find_map(|k| map.get(*k))
            .ok_or_else(|| fail("verdict has no `passed` field".into()))?;
        let passed = match passed {
            Value::Bool(b) => *b,
            Value::String(s) if s.eq_ignore_ascii_case("true") => true,
            Value::String(s) if s.eq_ignore_ascii_case("false") => false,
            other => return Err(fail(format!("`passed` is not a boolean: {other}"))),
        };
        let smells = match ["smells", "smell", "issues"].iter().find_map(|k| map.get(*k)) {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(items)) => items
                .iter()
                .map(|item| parse_smell(item).map_err(fail))
                .collect::<Result<Vec<_>, _>>()?,
            Some(other) => return Err(fail(format!("`smells` is not an array: {other}"))),
        };
        Ok(Self {
            passed: passed && smells.is_empty(),
            smells,
        })
    }
}

fn parse_smell(item: &Value) -> Result<Smell, String> {
    let Value::Object(map) = item else {
        return Err(format!("smell is not an object: {item}"));
    };
    let text = |keys: &[&str]| -> String {
        keys.iter()
            .find_map(|k| map.get(*k).and_then(Value::as_str))
            .unwrap_or("")
            .trim()
            .to_string()
    };
    let category: SmellCategory = text(&["category", "type", "kind"]).parse()?;
    Ok(Smell {
        category,
        location: text(&["location", "where"]),
        description: text(&["description", "detail", "message"]),
    })
}
