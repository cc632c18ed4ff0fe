//! Language-model and embedding backends.
//!
//! [`LanguageModel`] returns raw text for an [`ExtractionRequest`];
//! [`extract_structured`] owns parsing, schema validation and retries so every
//! backend gets the same behavior. [`Embedder`] turns texts into unit vectors.

mod mock;
mod remote;
mod vector;

pub use mock::{FixtureModel, HashEmbedder, LookupEmbedder};
pub use remote::{RemoteBackend, RemoteConfig, API_KEY_ENV};
pub use vector::{cosine, EmbeddingVector, VectorError, UNIT_NORM_TOLERANCE};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Default number of attempts before a malformed response is given up on.
pub const DEFAULT_MAX_RETRIES: u32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("extraction failed after {attempts} attempt(s): {reason}")]
    ExtractionFailed {
        raw: String,
        attempts: u32,
        reason: String,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("embedding dimension drifted from {expected} to {found}")]
    DimensionDrift { expected: usize, found: usize },
    #[error("no embedding available for `{0}`")]
    UnknownText(String),
    #[error("invalid backend data: {0}")]
    InvalidData(String),
}

/// Expected shape of one output value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Text,
    TextList,
    RecordList,
}

impl FieldKind {
    fn describe(self) -> &'static str {
        match self {
            Self::Text => "string",
            Self::TextList => "array of strings",
            Self::RecordList => "array of objects",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub kind: FieldKind,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub required: bool,
}

/// Which pipeline step issued a request. Fixture players route on this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Distill,
    Entities,
    LocalRelations,
    GlobalRelations,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Distill => "distill",
            Self::Entities => "entities",
            Self::LocalRelations => "relations",
            Self::GlobalRelations => "relations_global",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionRequest {
    pub task: Task,
    /// Document or block the request is about.
    pub document_id: String,
    pub instruction: String,
    pub context: String,
    pub output_schema: IndexMap<String, FieldSpec>,
}

impl ExtractionRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.output_schema.is_empty() {
            return Err(BackendError::InvalidRequest(
                "output schema is empty".into(),
            ));
        }
        if self.output_schema.keys().any(|k| k.trim().is_empty()) {
            return Err(BackendError::InvalidRequest(
                "output schema has an empty key".into(),
            ));
        }
        Ok(())
    }

    /// System prompt: the instruction followed by the JSON shape to return.
    pub fn render_system_prompt(&self) -> String {
        let mut out = self.instruction.trim_end().to_string();
        out.push_str("\n\nRespond with a single JSON object using only these keys. ");
        out.push_str("Omit any key whose information is not present in the input.\n");
        for (key, spec) in &self.output_schema {
            out.push_str(&format!("- \"{key}\" ({})", spec.kind.describe()));
            if !spec.description.is_empty() {
                out.push_str(": ");
                out.push_str(&spec.description);
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionResult {
    /// Validated values, in schema key order.
    pub values: IndexMap<String, Value>,
    pub raw: String,
    pub attempts: u32,
}

/// A model that answers extraction requests with raw text.
pub trait LanguageModel: Send + Sync {
    /// Transport failures must be reported as [`BackendError::Unreachable`].
    fn complete(&self, request: &ExtractionRequest) -> Result<String, BackendError>;
}

/// A text embedding model with a fixed output dimension.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError>;
}

/// Runs `request` against `model`, retrying malformed output up to
/// `max_attempts` times in total.
pub fn extract_structured(
    model: &dyn LanguageModel,
    request: &ExtractionRequest,
    max_attempts: u32,
) -> Result<ExtractionResult, BackendError> {
    request.validate()?;
    let max_attempts = max_attempts.max(1);
    let mut last = (String::new(), String::new());
    for attempt in 1..=max_attempts {
        let raw = model.complete(request)?;
        match parse_values(&raw, &request.output_schema) {
            Ok(values) => {
                return Ok(ExtractionResult {
                    values,
                    raw,
                    attempts: attempt,
                })
            }
            Err(reason) => {
                log::debug!(
                    "{} request for {}: attempt {attempt} unparseable: {reason}",
                    request.task.as_str(),
                    request.document_id
                );
                last = (raw, reason);
            }
        }
    }
    Err(BackendError::ExtractionFailed {
        raw: last.0,
        attempts: max_attempts,
        reason: last.1,
    })
}

/// Embeds `texts`, checking the batch contract: one unit vector of the
/// embedder's dimension per input, in input order.
pub fn embed_batch(
    embedder: &dyn Embedder,
    texts: &[String],
) -> Result<Vec<EmbeddingVector>, BackendError> {
    if texts.is_empty() {
        return Err(BackendError::InvalidRequest("nothing to embed".into()));
    }
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(BackendError::InvalidRequest(format!("text #{i} is blank")));
    }
    let vectors = embedder.embed(texts)?;
    if vectors.len() != texts.len() {
        return Err(BackendError::InvalidData(format!(
            "expected {} embeddings, got {}",
            texts.len(),
            vectors.len()
        )));
    }
    let expected = embedder.dimension();
    if let Some(v) = vectors.iter().find(|v| v.dim() != expected) {
        return Err(BackendError::DimensionDrift {
            expected,
            found: v.dim(),
        });
    }
    Ok(vectors)
}

fn strip_code_fence(raw: &str) -> &str {
    let trimmed = raw.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

/// Parses a model response and validates it against `schema`. Keys outside
/// the schema are ignored; null or empty values are treated as absent.
pub(crate) fn parse_values(
    raw: &str,
    schema: &IndexMap<String, FieldSpec>,
) -> Result<IndexMap<String, Value>, String> {
    let parsed: Value = serde_json::from_str(strip_code_fence(raw)).map_err(|e| e.to_string())?;
    let Value::Object(object) = parsed else {
        return Err("response is not a JSON object".into());
    };
    let mut values = IndexMap::new();
    for (key, spec) in schema {
        let Some(value) = object.get(key) else {
            continue;
        };
        if let Some(v) = coerce(value, spec.kind).map_err(|e| format!("key `{key}`: {e}"))? {
            values.insert(key.clone(), v);
        }
    }
    Ok(values)
}

fn scalar_text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn coerce(value: &Value, kind: FieldKind) -> Result<Option<Value>, String> {
    if value.is_null() {
        return Ok(None);
    }
    match kind {
        FieldKind::Text => {
            let text = scalar_text(value).ok_or("expected a string")?;
            Ok((!text.is_empty()).then_some(Value::String(text)))
        }
        FieldKind::TextList => {
            let items: Vec<Value> = match value {
                Value::Array(items) => items
                    .iter()
                    .filter(|v| !v.is_null())
                    .map(|v| scalar_text(v).ok_or("expected an array of strings"))
                    .collect::<Result<Vec<_>, _>>()?
                    .into_iter()
                    .filter(|s| !s.is_empty())
                    .map(Value::String)
                    .collect(),
                other => {
                    let text = scalar_text(other).ok_or("expected an array of strings")?;
                    if text.is_empty() {
                        vec![]
                    } else {
                        vec![Value::String(text)]
                    }
                }
            };
            Ok((!items.is_empty()).then_some(Value::Array(items)))
        }
        FieldKind::RecordList => {
            let Value::Array(items) = value else {
                return Err("expected an array of objects".into());
            };
            let records = items
                .iter()
                .map(|v| match v {
                    Value::Object(m) => Ok(Value::Object(m.clone())),
                    _ => Err("expected an array of objects"),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((!records.is_empty()).then_some(Value::Array(records)))
        }
    }
}

/// Reads a string field of a record, trimmed; empty strings count as absent.
pub(crate) fn record_str<'a>(record: &'a Map<String, Value>, field: &str) -> Option<&'a str> {
    record
        .get(field)
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
}
