use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A document template: ordered sections, each a heading with a one-line
/// instruction. Rendered into the draft and SRS prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocTemplate {
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template has no sections")]
    Empty,
    #[error("duplicate section heading `{0}`")]
    DuplicateHeading(String),
    #[error("text before the first `## ` heading: `{0}`")]
    StrayText(String),
}

impl DocTemplate {
    pub fn new(sections: Vec<Section>) -> Result<Self, TemplateError> {
        if sections.is_empty() {
            return Err(TemplateError::Empty);
        }
        let mut seen = HashSet::new();
        for s in &sections {
            if !seen.insert(s.heading.to_lowercase()) {
                return Err(TemplateError::DuplicateHeading(s.heading.clone()));
            }
        }
        Ok(Self { sections })
    }

    fn from_pairs(pairs: &[(&str, &str)]) -> Self {
        Self::new(
            pairs
                .iter()
                .map(|(h, i)| Section {
                    heading: h.to_string(),
                    instruction: i.to_string(),
                })
                .collect(),
        )
        .expect("builtin template is valid")
    }

    pub fn default_draft() -> Self {
        Self::from_pairs(&[
            ("Introduction", "State the purpose and scope of the system in a few sentences."),
            ("Stakeholders and Users", "List every kind of stakeholder and user and what each needs."),
            ("Functional Requirements", "Numbered list; one requirement per item, each starting with \"The system shall\"."),
            ("Non-functional Requirements", "Numbered list of quality requirements (performance, security, usability, reliability)."),
            ("Constraints", "Devices, external systems, regulations and other constraints the system must respect."),
        ])
    }

    pub fn default_srs() -> Self {
        Self::from_pairs(&[
            ("1 Introduction", "Purpose of the document and scope of the system."),
            ("1.1 Purpose", "Why the system is built and who reads this specification."),
            ("1.2 Scope", "What the system does and does not do."),
            ("2 Overall Description", "Product perspective, users and operating environment."),
            ("3 Specific Requirements", "Detailed requirements, each uniquely numbered and testable."),
            ("3.1 Functional Requirements", "One \"The system shall\" statement per requirement."),
            ("3.2 Non-functional Requirements", "Measurable quality requirements."),
            ("4 Requirements Model Summary", "Every entity and relation of the requirements model with a one-line explanation."),
            ("5 Acceptance Criteria", "How each functional requirement will be verified."),
        ])
    }

    /// Parses the text form produced by `Display`: `## Heading` lines, each
    /// followed by instruction lines.
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut sections: Vec<Section> = Vec::new();
        for line in text.lines() {
            let line = line.trim_end();
            if let Some(h) = line.strip_prefix("## ") {
                sections.push(Section {
                    heading: h.trim().to_string(),
                    instruction: String::new(),
                });
            } else if line.trim().is_empty() {
                continue;
            } else if let Some(last) = sections.last_mut() {
                if !last.instruction.is_empty() {
                    last.instruction.push(' ');
                }
                last.instruction.push_str(line.trim());
            } else {
                return Err(TemplateError::StrayText(line.to_string()));
            }
        }
        Self::new(sections)
    }
}

impl fmt::Display for DocTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.sections.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            writeln!(f, "## {}", s.heading)?;
            writeln!(f, "{}", s.instruction)?;
        }
        Ok(())
    }
}
