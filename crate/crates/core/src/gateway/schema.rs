//! Flat structured-output schemas and tolerant validation of LLM replies.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    String,
    StringList,
    Number,
}

impl FieldKind {
    fn parse(raw: &str) -> Option<Self> {
        match raw {
            "string" => Some(FieldKind::String),
            "string_list" => Some(FieldKind::StringList),
            "number" => Some(FieldKind::Number),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            FieldKind::String => "string",
            FieldKind::StringList => "string_list",
            FieldKind::Number => "number",
        }
    }

    fn accepts(self, value: &Value) -> bool {
        match self {
            FieldKind::String => value.is_string(),
            FieldKind::Number => value.is_number(),
            FieldKind::StringList => value
                .as_array()
                .is_some_and(|items| items.iter().all(Value::is_string)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaField {
    pub name: String,
    pub kind: FieldKind,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredSchema {
    pub schema_id: String,
    pub fields: Vec<SchemaField>,
}

impl StructuredSchema {
    pub fn new(schema_id: &str, fields: Vec<SchemaField>) -> Result<Self, GatewayError> {
        for (i, f) in fields.iter().enumerate() {
            if fields[..i].iter().any(|g| g.name == f.name) {
                return Err(GatewayError::InvalidSchema {
                    schema_id: schema_id.to_string(),
                    reason: format!("duplicate field {}", f.name),
                });
            }
        }
        Ok(StructuredSchema {
            schema_id: schema_id.to_string(),
            fields,
        })
    }

    /// Parses `name: kind` lines; a `?` after the name marks it optional.
    pub fn parse(schema_id: &str, source: &str) -> Result<Self, GatewayError> {
        let mut fields = Vec::new();
        for line in source.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| GatewayError::InvalidSchema {
                schema_id: schema_id.to_string(),
                reason,
            };
            let (name, kind) = line
                .split_once(':')
                .ok_or_else(|| bad(format!("expected `name: kind`, got {line:?}")))?;
            let name = name.trim();
            let (name, required) = match name.strip_suffix('?') {
                Some(n) => (n.trim(), false),
                None => (name, true),
            };
            let kind = FieldKind::parse(kind.trim())
                .ok_or_else(|| bad(format!("unknown kind {:?}", kind.trim())))?;
            fields.push(SchemaField {
                name: name.to_string(),
                kind,
                required,
            });
        }
        Self::new(schema_id, fields)
    }

    /// One-line description used in prompts and corrective instructions.
    pub fn describe(&self) -> String {
        let fields: Vec<String> = self
            .fields
            .iter()
            .map(|f| {
                format!(
                    "\"{}\": {}{}",
                    f.name,
                    f.kind.name(),
                    if f.required { "" } else { " (optional)" }
                )
            })
            .collect();
        format!("{{{}}}", fields.join(", "))
    }
}

/// Finds the first JSON object embedded in `raw`, tolerating surrounding prose
/// and markdown fences.
pub fn extract_first_object(raw: &str) -> Option<Map<String, Value>> {
    for (idx, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[idx..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            return Some(map);
        }
    }
    None
}

/// Extracts and checks a reply against `schema`. Never panics; every problem
/// is reported as a human-readable entry.
pub fn validate_output(
    raw_text: &str,
    schema: &StructuredSchema,
) -> Result<Map<String, Value>, Vec<String>> {
    let Some(map) = extract_first_object(raw_text) else {
        return Err(vec!["no object found".to_string()]);
    };
    let mut errors = Vec::new();
    for field in &schema.fields {
        match map.get(&field.name) {
            None | Some(Value::Null) => {
                if field.required {
                    errors.push(format!("missing: {}", field.name));
                }
            }
            Some(value) if !field.kind.accepts(value) => {
                errors.push(format!(
                    "wrong kind: {} (expected {})",
                    field.name,
                    field.kind.name()
                ));
            }
            Some(_) => {}
        }
    }
    if errors.is_empty() {
        Ok(map)
    } else {
        Err(errors)
    }
}
