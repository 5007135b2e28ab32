//! Deterministic offline provider.
//!
//! Lookup order per call: scripted queue, then canned fixture keyed on the
//! prompt hash, then a synthesized reply built from the request bindings.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde_json::{json, Map, Value};

use super::{ChatProvider, FieldKind, GatewayError, ProviderRequest};
use crate::util::{normalize_whitespace, short_hash};

const ECHO_CHARS: usize = 160;

#[derive(Debug, Default)]
pub struct MockProvider {
    fixtures: BTreeMap<String, String>,
    script: Mutex<VecDeque<String>>,
    unavailable: bool,
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    /// Always fails with `ProviderUnavailable`.
    pub fn unavailable() -> Self {
        MockProvider {
            unavailable: true,
            ..Self::default()
        }
    }

    pub fn with_fixture(mut self, key: &str, response: &str) -> Self {
        self.fixtures.insert(key.to_string(), response.to_string());
        self
    }

    /// Replies consumed in order before any fixture lookup.
    pub fn scripted<I, S>(self, replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.script
            .lock()
            .expect("mock script lock")
            .extend(replies.into_iter().map(Into::into));
        self
    }

    /// Loads every `<key>.txt` or `<key>.json` file in `dir` as a fixture.
    pub fn from_fixtures_dir(dir: &Path) -> Result<Self, GatewayError> {
        let mut mock = Self::new();
        let entries = fs::read_dir(dir).map_err(|e| GatewayError::Io(format!("{}: {e}", dir.display())))?;
        for entry in entries.flatten() {
            let path = entry.path();
            let ext = path.extension().and_then(|e| e.to_str());
            if !matches!(ext, Some("txt" | "json")) {
                continue;
            }
            if let Some(key) = path.file_stem().and_then(|s| s.to_str()) {
                let body = fs::read_to_string(&path)
                    .map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
                mock.fixtures.insert(key.to_string(), body);
            }
        }
        Ok(mock)
    }

    fn synthesize(request: &ProviderRequest<'_>) -> String {
        let echo = echo_bindings(request);
        let Some(schema) = request.schema else {
            return format!("Mock reply for {}: {echo}", request.template_id);
        };
        let mut obj = Map::new();
        for field in &schema.fields {
            let text = format!("{}: {echo}", field.name.replace('_', " "));
            let value = match field.kind {
                FieldKind::String => json!(text),
                FieldKind::StringList => json!([text]),
                FieldKind::Number => {
                    let h = short_hash(format!("{}{}", request.key, field.name).as_bytes(), 8);
                    json!(u64::from_str_radix(&h, 16).unwrap_or(0) % 1000)
                }
            };
            obj.insert(field.name.clone(), value);
        }
        Value::Object(obj).to_string()
    }
}

/// Binding values in key order, flattened into one sentence-free line.
fn echo_bindings(request: &ProviderRequest<'_>) -> String {
    let joined = request
        .bindings
        .values()
        .filter(|v| !v.trim().is_empty())
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join(" | ");
    let cleaned: String = joined
        .chars()
        .map(|c| if matches!(c, '.' | '!' | '?' | '{' | '}') { ' ' } else { c })
        .collect();
    let cleaned = normalize_whitespace(&cleaned);
    match cleaned.char_indices().nth(ECHO_CHARS) {
        Some((cut, _)) => cleaned[..cut].trim_end().to_string(),
        None => cleaned,
    }
}

impl ChatProvider for MockProvider {
    fn id(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &ProviderRequest<'_>) -> Result<String, GatewayError> {
        if self.unavailable {
            return Err(GatewayError::ProviderUnavailable("mock provider marked unavailable".into()));
        }
        if let Some(reply) = self.script.lock().expect("mock script lock").pop_front() {
            return Ok(reply);
        }
        if let Some(reply) = self.fixtures.get(request.key) {
            return Ok(reply.clone());
        }
        Ok(Self::synthesize(request))
    }
}
