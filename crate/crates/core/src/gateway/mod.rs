//! Provider-agnostic access to chat-completion models.
//!
//! The gateway owns the template and schema registries, renders prompts,
//! calls a [`ChatProvider`] and validates structured replies, retrying with a
//! corrective instruction when a reply does not validate.

mod http;
mod mock;
mod schema;
mod template;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use http::{HttpEmbedder, HttpProvider, TokenBucket};
pub use mock::MockProvider;
pub use schema::{extract_first_object, validate_output, FieldKind, SchemaField, StructuredSchema};
pub use template::{Bindings, PromptTemplate, Section};

use crate::util::short_hash;

pub const DEFAULT_MAX_RETRIES: u32 = 2;
pub const CORRECTIVE_INSTRUCTION: &str = "Return only the structured object.";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("unknown template: {0}")]
    UnknownTemplate(String),
    #[error("unknown schema: {0}")]
    UnknownSchema(String),
    #[error("missing binding: {0}")]
    MissingBinding(String),
    #[error("invalid template {template_id}: {reason}")]
    InvalidTemplate { template_id: String, reason: String },
    #[error("invalid schema {schema_id}: {reason}")]
    InvalidSchema { schema_id: String, reason: String },
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("provider timed out after {0}s")]
    Timeout(u64),
    #[error("io error: {0}")]
    Io(String),
}

/// A creative attached to a multimodal request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePayload {
    pub creative_id: String,
    pub media_type: String,
    pub width: u32,
    pub height: u32,
    pub data_base64: String,
}

impl ImagePayload {
    pub fn data_url(&self) -> String {
        format!("data:{};base64,{}", self.media_type, self.data_base64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub template_id: String,
    pub bindings: Bindings,
    pub schema_id: Option<String>,
    #[serde(default)]
    pub images: Vec<ImagePayload>,
}

impl CompletionRequest {
    pub fn new(template_id: &str, schema_id: &str, bindings: Bindings) -> Self {
        CompletionRequest {
            template_id: template_id.to_string(),
            bindings,
            schema_id: Some(schema_id.to_string()),
            images: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub raw_text: String,
    pub parsed: Option<Map<String, Value>>,
    pub provider_id: String,
    pub attempt_count: u32,
    pub validation_failed: bool,
    /// Problems with the last attempt; empty on success.
    pub errors: Vec<String>,
}

/// Everything a provider sees for one attempt.
#[derive(Debug)]
pub struct ProviderRequest<'a> {
    pub template_id: &'a str,
    pub bindings: &'a Bindings,
    pub schema: Option<&'a StructuredSchema>,
    /// Rendered prompt without any corrective suffix.
    pub prompt: &'a str,
    /// Stable hash of `prompt`.
    pub key: &'a str,
    /// Text actually sent: `prompt` plus corrections on retries.
    pub message: &'a str,
    pub attempt: u32,
    pub images: &'a [ImagePayload],
}

pub trait ChatProvider: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &ProviderRequest<'_>) -> Result<String, GatewayError>;
}

/// Stable key for a rendered prompt; mock fixtures are keyed on it.
pub fn prompt_key(prompt: &str) -> String {
    short_hash(prompt.as_bytes(), 16)
}

macro_rules! builtin {
    ($($id:literal),* $(,)?) => {
        &[$(($id, include_str!(concat!("../../templates/", $id)))),*]
    };
}

const BUILTIN_TEMPLATES: &[(&str, &str)] = builtin!(
    "pillar_extraction.tmpl",
    "persona_label.tmpl",
    "challenge_label.tmpl",
    "brief_story.tmpl",
    "insight_distill.tmpl",
    "campaign_idea.tmpl",
    "campaign_analysis.tmpl",
);

const BUILTIN_SCHEMAS: &[(&str, &str)] = builtin!(
    "content_pillars.schema",
    "archetype_label.schema",
    "brief_story.schema",
    "campaign_insight.schema",
    "campaign_idea.schema",
);

fn split_asset_name(name: &str) -> (&str, &str) {
    name.rsplit_once('.').unwrap_or((name, ""))
}

/// Parses a template shipped with the crate.
pub fn builtin_template(template_id: &str) -> Option<PromptTemplate> {
    BUILTIN_TEMPLATES
        .iter()
        .find(|(name, _)| split_asset_name(name).0 == template_id)
        .map(|(_, src)| PromptTemplate::parse(template_id, src).expect("builtin templates parse"))
}

pub struct Gateway {
    templates: BTreeMap<String, PromptTemplate>,
    schemas: BTreeMap<String, StructuredSchema>,
    provider: Arc<dyn ChatProvider>,
    max_retries: u32,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("provider", &self.provider.id())
            .field("templates", &self.templates.keys().collect::<Vec<_>>())
            .field("max_retries", &self.max_retries)
            .finish()
    }
}

impl Gateway {
    /// Gateway with the built-in templates and schemas registered.
    pub fn new(provider: Arc<dyn ChatProvider>) -> Self {
        let mut gateway = Gateway {
            templates: BTreeMap::new(),
            schemas: BTreeMap::new(),
            provider,
            max_retries: DEFAULT_MAX_RETRIES,
        };
        for (name, src) in BUILTIN_TEMPLATES {
            let id = split_asset_name(name).0;
            gateway.register_template(PromptTemplate::parse(id, src).expect("builtin templates parse"));
        }
        for (name, src) in BUILTIN_SCHEMAS {
            let id = split_asset_name(name).0;
            gateway.register_schema(StructuredSchema::parse(id, src).expect("builtin schemas parse"));
        }
        gateway
    }

    pub fn with_max_retries(mut self, max_retries: u32) -> Self {
        self.max_retries = max_retries;
        self
    }

    pub fn max_retries(&self) -> u32 {
        self.max_retries
    }

    pub fn provider_id(&self) -> &str {
        self.provider.id()
    }

    pub fn register_template(&mut self, template: PromptTemplate) {
        self.templates.insert(template.template_id.clone(), template);
    }

    pub fn register_schema(&mut self, schema: StructuredSchema) {
        self.schemas.insert(schema.schema_id.clone(), schema);
    }

    /// Loads `*.tmpl` and `*.schema` files from `dir`, replacing built-ins
    /// with the same id.
    pub fn load_dir(&mut self, dir: &Path) -> Result<(), GatewayError> {
        let entries = fs::read_dir(dir).map_err(|e| GatewayError::Io(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for path in paths {
            let (Some(stem), Some(ext)) = (
                path.file_stem().and_then(|s| s.to_str()),
                path.extension().and_then(|s| s.to_str()),
            ) else {
                continue;
            };
            let read = || {
                fs::read_to_string(&path).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))
            };
            match ext {
                "tmpl" => self.register_template(PromptTemplate::parse(stem, &read()?)?),
                "schema" => self.register_schema(StructuredSchema::parse(stem, &read()?)?),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn template(&self, template_id: &str) -> Result<&PromptTemplate, GatewayError> {
        self.templates
            .get(template_id)
            .ok_or_else(|| GatewayError::UnknownTemplate(template_id.to_string()))
    }

    pub fn schema(&self, schema_id: &str) -> Result<&StructuredSchema, GatewayError> {
        self.schemas
            .get(schema_id)
            .ok_or_else(|| GatewayError::UnknownSchema(schema_id.to_string()))
    }

    pub fn render_prompt(&self, template_id: &str, bindings: &Bindings) -> Result<String, GatewayError> {
        self.template(template_id)?.render(bindings)
    }

    /// The exact prompt text `request` sends, schema description included.
    pub fn render_request(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        Ok(self.prepare(request)?.1)
    }

    /// Resolves the schema and renders the base prompt. The schema's field
    /// list is bound as `output_schema` unless the caller supplied one.
    fn prepare(
        &self,
        request: &CompletionRequest,
    ) -> Result<(Option<&StructuredSchema>, String), GatewayError> {
        let template = self.template(&request.template_id)?;
        let schema = request
            .schema_id
            .as_deref()
            .map(|id| self.schema(id))
            .transpose()?;
        let mut bindings = request.bindings.clone();
        if let Some(schema) = schema {
            bindings
                .entry("output_schema".to_string())
                .or_insert_with(|| schema.describe());
        }
        Ok((schema, template.render(&bindings)?))
    }

    /// Fixture key the mock provider will look up for `request`.
    pub fn request_key(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        Ok(prompt_key(&self.prepare(request)?.1))
    }

    pub fn complete_structured(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        self.complete_checked(request, |_| Ok(()))
    }

    /// Like [`Gateway::complete_structured`] with an extra domain check run
    /// on schema-valid replies. A failed check counts as a validation
    /// failure; its message becomes the corrective instruction.
    pub fn complete_checked(
        &self,
        request: &CompletionRequest,
        check: impl Fn(&Map<String, Value>) -> Result<(), String>,
    ) -> Result<CompletionResult, GatewayError> {
        let (schema, prompt) = self.prepare(request)?;
        let key = prompt_key(&prompt);

        let mut message = prompt.clone();
        let mut attempt = 0;
        loop {
            attempt += 1;
            let raw_text = self.provider.complete(&ProviderRequest {
                template_id: &request.template_id,
                bindings: &request.bindings,
                schema,
                prompt: &prompt,
                key: &key,
                message: &message,
                attempt,
                images: &request.images,
            })?;

            let outcome = match schema {
                None => Ok(Map::new()),
                Some(schema) => validate_output(&raw_text, schema),
            }
            .and_then(|map| check(&map).map(|_| map).map_err(|e| vec![e]));

            match outcome {
                Ok(map) => {
                    return Ok(CompletionResult {
                        raw_text,
                        parsed: schema.map(|_| map),
                        provider_id: self.provider.id().to_string(),
                        attempt_count: attempt,
                        validation_failed: false,
                        errors: Vec::new(),
                    })
                }
                Err(errors) if attempt > self.max_retries => {
                    log::warn!(
                        "{}: reply failed validation after {attempt} attempts: {}",
                        request.template_id,
                        errors.join("; ")
                    );
                    return Ok(CompletionResult {
                        raw_text,
                        parsed: None,
                        provider_id: self.provider.id().to_string(),
                        attempt_count: attempt,
                        validation_failed: true,
                        errors,
                    });
                }
                Err(errors) => {
                    log::debug!("{}: attempt {attempt} rejected: {}", request.template_id, errors.join("; "));
                    message = format!(
                        "{prompt}\n## Correction\nYour previous reply was rejected ({}). {CORRECTIVE_INSTRUCTION}\n",
                        errors.join("; ")
                    );
                }
            }
        }
    }
}

/// Reads a string field of a parsed reply, trimmed; absent or blank → `None`.
pub fn field_str(map: &Map<String, Value>, name: &str) -> Option<String> {
    map.get(name)
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bindings(pairs: &[(&str, &str)]) -> Bindings {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn pillar_request() -> CompletionRequest {
        CompletionRequest::new(
            "pillar_extraction",
            "content_pillars",
            bindings(&[("brand", "Gojek"), ("headline", ""), ("body_text", "Corporate rides, one invoice")]),
        )
    }

    const VALID: &str = r#"{"audience":"finance decision-makers","insight":"expense chaos"}"#;

    #[test]
    fn builtins_are_registered() {
        let gw = Gateway::new(Arc::new(MockProvider::new()));
        for id in ["pillar_extraction", "persona_label", "brief_story", "campaign_analysis"] {
            gw.template(id).unwrap();
        }
        assert!(matches!(gw.template("nope"), Err(GatewayError::UnknownTemplate(_))));
    }

    #[test]
    fn canned_fixture_succeeds_first_try() {
        let probe = Gateway::new(Arc::new(MockProvider::new()));
        let req = pillar_request();
        let key = probe.request_key(&req).unwrap();

        let gw = Gateway::new(Arc::new(MockProvider::new().with_fixture(&key, VALID)));
        let result = gw.complete_structured(&req).unwrap();
        assert_eq!(result.attempt_count, 1);
        assert_eq!(result.parsed.unwrap()["audience"], "finance decision-makers");
        assert_eq!(result.provider_id, "mock");
    }

    #[test]
    fn malformed_twice_then_valid_takes_three_attempts() {
        let mock = MockProvider::new().scripted(["nonsense", "{\"audience\": 3}", VALID]);
        let gw = Gateway::new(Arc::new(mock));
        let result = gw.complete_structured(&pillar_request()).unwrap();
        assert_eq!(result.attempt_count, 3);
        assert!(!result.validation_failed);
        assert!(result.parsed.is_some());
    }

    #[test]
    fn exhausted_retries_flag_validation_failure() {
        let mock = MockProvider::new().scripted(["bad", "bad", "bad", VALID]);
        let gw = Gateway::new(Arc::new(mock)).with_max_retries(2);
        let result = gw.complete_structured(&pillar_request()).unwrap();
        assert_eq!(result.attempt_count, 3);
        assert!(result.validation_failed);
        assert!(result.parsed.is_none());
        assert_eq!(result.raw_text, "bad");
        assert_eq!(result.errors, vec!["no object found"]);
    }

    #[test]
    fn retries_carry_the_corrective_instruction() {
        struct Recorder(std::sync::Mutex<Vec<String>>);
        impl ChatProvider for Recorder {
            fn id(&self) -> &str {
                "rec"
            }
            fn complete(&self, r: &ProviderRequest<'_>) -> Result<String, GatewayError> {
                self.0.lock().unwrap().push(r.message.to_string());
                Ok("nope".into())
            }
        }
        let rec = Arc::new(Recorder(Default::default()));
        let gw = Gateway::new(rec.clone());
        gw.complete_structured(&pillar_request()).unwrap();
        let seen = rec.0.lock().unwrap();
        assert_eq!(seen.len(), 3);
        assert!(!seen[0].contains(CORRECTIVE_INSTRUCTION));
        assert!(seen[1].ends_with(&format!("{CORRECTIVE_INSTRUCTION}\n")));
        assert!(seen[1].starts_with(&seen[0]));
    }

    #[test]
    fn provider_errors_are_not_retried() {
        let gw = Gateway::new(Arc::new(MockProvider::unavailable()));
        assert!(matches!(
            gw.complete_structured(&pillar_request()),
            Err(GatewayError::ProviderUnavailable(_))
        ));
    }

    #[test]
    fn domain_check_failures_retry_then_flag() {
        let mock = MockProvider::new().scripted([VALID, VALID, VALID]);
        let gw = Gateway::new(Arc::new(mock));
        let result = gw
            .complete_checked(&pillar_request(), |_| Err("always wrong".into()))
            .unwrap();
        assert!(result.validation_failed);
        assert_eq!(result.errors, vec!["always wrong"]);
    }

    #[test]
    fn synthesized_mock_reply_validates_and_is_stable() {
        let gw = Gateway::new(Arc::new(MockProvider::new()));
        let a = gw.complete_structured(&pillar_request()).unwrap();
        let b = gw.complete_structured(&pillar_request()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.attempt_count, 1);
        let parsed = a.parsed.unwrap();
        assert!(parsed["audience"].as_str().unwrap().contains("Corporate rides"));
    }

    #[test]
    fn load_dir_overrides_builtins() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("brief_story.tmpl"), "#! version 9\n## Task\nTell {{x}}").unwrap();
        fs::write(dir.path().join("extra.schema"), "a: number").unwrap();
        let mut gw = Gateway::new(Arc::new(MockProvider::new()));
        gw.load_dir(dir.path()).unwrap();
        assert_eq!(gw.template("brief_story").unwrap().version, "9");
        assert_eq!(gw.schema("extra").unwrap().fields[0].kind, FieldKind::Number);
    }
}
