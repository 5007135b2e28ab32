//! Sectioned prompt templates with `{{placeholder}}` markers.
//!
//! File format: lines starting with `## ` open a named section; lines
//! starting with `#!` before the first section are metadata (`#! version N`).
//! `{{name}}` is a required binding, `{{name?}}` renders empty when unbound.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::GatewayError;

pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub version: String,
    pub sections: Vec<Section>,
    /// Required binding names in first-appearance order.
    pub placeholders: Vec<String>,
    pub optional_placeholders: Vec<String>,
}

enum Piece<'a> {
    Text(&'a str),
    Slot { name: &'a str, optional: bool },
}

fn pieces(text: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        let Some(close) = rest[open + 2..].find("}}") else {
            break;
        };
        let inner = rest[open + 2..open + 2 + close].trim();
        let (name, optional) = match inner.strip_suffix('?') {
            Some(n) => (n.trim(), true),
            None => (inner, false),
        };
        let valid = !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.');
        if valid {
            out.push(Piece::Text(&rest[..open]));
            out.push(Piece::Slot { name, optional });
        } else {
            out.push(Piece::Text(&rest[..open + 2 + close + 2]));
        }
        rest = &rest[open + 2 + close + 2..];
    }
    out.push(Piece::Text(rest));
    out
}

impl PromptTemplate {
    pub fn new(template_id: &str, version: &str, sections: Vec<Section>) -> Self {
        let mut placeholders = Vec::new();
        let mut optional_placeholders = Vec::new();
        for section in &sections {
            for piece in pieces(&section.text) {
                if let Piece::Slot { name, optional } = piece {
                    let list = if optional {
                        &mut optional_placeholders
                    } else {
                        &mut placeholders
                    };
                    if !list.iter().any(|p| p == name) {
                        list.push(name.to_string());
                    }
                }
            }
        }
        optional_placeholders.retain(|p| !placeholders.contains(p));
        PromptTemplate {
            template_id: template_id.to_string(),
            version: version.to_string(),
            sections,
            placeholders,
            optional_placeholders,
        }
    }

    pub fn parse(template_id: &str, source: &str) -> Result<Self, GatewayError> {
        let mut version = "1".to_string();
        let mut sections: Vec<Section> = Vec::new();
        for line in source.lines() {
            if let Some(name) = line.strip_prefix("## ") {
                sections.push(Section {
                    name: name.trim().to_string(),
                    text: String::new(),
                });
            } else if let Some(current) = sections.last_mut() {
                current.text.push_str(line);
                current.text.push('\n');
            } else if let Some(meta) = line.strip_prefix("#!") {
                if let Some(v) = meta.trim().strip_prefix("version") {
                    version = v.trim().to_string();
                }
            } else if !line.trim().is_empty() {
                return Err(GatewayError::InvalidTemplate {
                    template_id: template_id.to_string(),
                    reason: "text before the first section".into(),
                });
            }
        }
        if sections.is_empty() {
            return Err(GatewayError::InvalidTemplate {
                template_id: template_id.to_string(),
                reason: "no sections".into(),
            });
        }
        for section in &mut sections {
            let trimmed = section.text.trim_matches('\n').to_string();
            section.text = trimmed;
        }
        Ok(Self::new(template_id, &version, sections))
    }

    /// Renders every section as `## Name\n<text>\n`, sections separated by a
    /// blank line. Pure in `(self, bindings)`.
    pub fn render(&self, bindings: &Bindings) -> Result<String, GatewayError> {
        if let Some(missing) = self.placeholders.iter().find(|p| !bindings.contains_key(*p)) {
            return Err(GatewayError::MissingBinding(missing.clone()));
        }
        let mut out = String::new();
        for (idx, section) in self.sections.iter().enumerate() {
            if idx > 0 {
                out.push('\n');
            }
            out.push_str("## ");
            out.push_str(&section.name);
            out.push('\n');
            for piece in pieces(&section.text) {
                match piece {
                    Piece::Text(t) => out.push_str(t),
                    Piece::Slot { name, .. } => {
                        out.push_str(bindings.get(name).map(String::as_str).unwrap_or(""))
                    }
                }
            }
            out.push('\n');
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&str, &str)]) -> Bindings {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn zero_placeholders_render_verbatim() {
        let t = PromptTemplate::parse("plain", "## Role\nBe terse.\n## Task\nSay hi.\n").unwrap();
        assert!(t.placeholders.is_empty());
        assert_eq!(
            t.render(&Bindings::new()).unwrap(),
            "## Role\nBe terse.\n\n## Task\nSay hi.\n"
        );
    }

    #[test]
    fn missing_binding_is_named() {
        let t = PromptTemplate::parse("p", "## Task\nWrite for {{persona_name}}.").unwrap();
        assert_eq!(t.placeholders, vec!["persona_name"]);
        match t.render(&Bindings::new()) {
            Err(GatewayError::MissingBinding(name)) => assert_eq!(name, "persona_name"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn optional_slots_may_be_unbound() {
        let t = PromptTemplate::parse("p", "## A\n[{{x}}|{{y?}}]").unwrap();
        assert_eq!(t.placeholders, vec!["x"]);
        assert_eq!(t.optional_placeholders, vec!["y"]);
        assert_eq!(t.render(&bind(&[("x", "1")])).unwrap(), "## A\n[1|]\n");
        assert_eq!(
            t.render(&bind(&[("x", "1"), ("y", "2")])).unwrap(),
            "## A\n[1|2]\n"
        );
    }

    #[test]
    fn binding_values_are_not_rescanned() {
        let t = PromptTemplate::parse("p", "## A\n{{x}}").unwrap();
        assert_eq!(
            t.render(&bind(&[("x", "{{y}}")])).unwrap(),
            "## A\n{{y}}\n"
        );
    }

    #[test]
    fn metadata_sets_version() {
        let t = PromptTemplate::parse("p", "#! version 3\n\n## A\nx").unwrap();
        assert_eq!(t.version, "3");
        assert!(PromptTemplate::parse("p", "stray\n## A\nx").is_err());
        assert!(PromptTemplate::parse("p", "#! version 1\n").is_err());
    }

    #[test]
    fn full_bindings_leave_no_markers() {
        let t = PromptTemplate::parse("p", "## A\n{{a}} and {{ b }}\n## B\n{{a}}{{c?}}").unwrap();
        let out = t
            .render(&bind(&[("a", "x"), ("b", "y"), ("c", "z")]))
            .unwrap();
        assert!(!out.contains("{{"));
    }
}
