//! Offline backends: a fixture player for extraction and two deterministic
//! embedders.

use std::collections::HashMap;
use std::path::Path;

use serde_json::{Map, Value};

use super::{BackendError, Embedder, EmbeddingVector, ExtractionRequest, LanguageModel, Task};
use crate::model::canonicalize;

/// Replays canned model responses keyed by document id and task.
///
/// The fixture file is a JSON object mapping a document (or block) id to an
/// object with optional `distill`, `entities`, `relations` and
/// `relations_global` entries. An object entry is returned as the response, an
/// array entry is wrapped under the request's single schema key, and a string
/// entry is returned verbatim (which is how malformed output is simulated).
/// Missing entries answer `{}`. `relations_global` falls back to `relations`.
#[derive(Debug, Clone, Default)]
pub struct FixtureModel {
    documents: HashMap<String, Map<String, Value>>,
}

impl FixtureModel {
    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        let root: Map<String, Value> = serde_json::from_str(text)
            .map_err(|e| BackendError::InvalidData(format!("fixture file: {e}")))?;
        let mut documents = HashMap::new();
        for (id, entry) in root {
            let Value::Object(tasks) = entry else {
                return Err(BackendError::InvalidData(format!(
                    "fixture for `{id}` is not an object"
                )));
            };
            documents.insert(id, tasks);
        }
        Ok(Self { documents })
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::InvalidData(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn entry(&self, document_id: &str, task: Task) -> Option<&Value> {
        let tasks = self.documents.get(document_id)?;
        tasks.get(task.as_str()).or_else(|| match task {
            Task::GlobalRelations => tasks.get(Task::LocalRelations.as_str()),
            _ => None,
        })
    }
}

impl LanguageModel for FixtureModel {
    fn complete(&self, request: &ExtractionRequest) -> Result<String, BackendError> {
        let reply = match self.entry(&request.document_id, request.task) {
            None => "{}".to_string(),
            Some(Value::String(raw)) => raw.clone(),
            Some(Value::Array(items)) => {
                let mut keys = request.output_schema.keys();
                match (keys.next(), keys.next()) {
                    (Some(key), None) => {
                        let mut wrapped = Map::new();
                        wrapped.insert(key.clone(), Value::Array(items.clone()));
                        Value::Object(wrapped).to_string()
                    }
                    _ => Value::Array(items.clone()).to_string(),
                }
            }
            Some(other) => other.to_string(),
        };
        Ok(reply)
    }
}

/// Embeds texts by looking them up in a table keyed by canonical text.
pub struct LookupEmbedder {
    table: HashMap<String, EmbeddingVector>,
    dimension: usize,
    fallback: Option<Box<dyn Embedder>>,
}

impl std::fmt::Debug for LookupEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LookupEmbedder")
            .field("entries", &self.table.len())
            .field("dimension", &self.dimension)
            .field("fallback", &self.fallback.is_some())
            .finish()
    }
}

impl LookupEmbedder {
    /// Builds the table from `(text, components)` pairs. Vectors are normalized;
    /// the first entry wins when two texts share a canonical form.
    pub fn new(
        entries: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self, BackendError> {
        let mut table = HashMap::new();
        let mut dimension = None;
        for (text, components) in entries {
            let vector = EmbeddingVector::normalized(components)
                .map_err(|e| BackendError::InvalidData(format!("vector for `{text}`: {e}")))?;
            match dimension {
                None => dimension = Some(vector.dim()),
                Some(d) if d != vector.dim() => {
                    return Err(BackendError::InvalidData(format!(
                        "vector for `{text}` has dimension {}, expected {d}",
                        vector.dim()
                    )))
                }
                Some(_) => {}
            }
            table.entry(canonicalize(&text)).or_insert(vector);
        }
        let dimension =
            dimension.ok_or_else(|| BackendError::InvalidData("lookup table is empty".into()))?;
        Ok(Self {
            table,
            dimension,
            fallback: None,
        })
    }

    /// Parses a JSON object mapping text to an array of numbers.
    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        let root: indexmap::IndexMap<String, Vec<f64>> = serde_json::from_str(text)
            .map_err(|e| BackendError::InvalidData(format!("lookup table: {e}")))?;
        Self::new(root)
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::InvalidData(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Embeds texts missing from the table with `fallback` instead of failing.
    pub fn with_fallback(mut self, fallback: Box<dyn Embedder>) -> Result<Self, BackendError> {
        if fallback.dimension() != self.dimension {
            return Err(BackendError::DimensionDrift {
                expected: self.dimension,
                found: fallback.dimension(),
            });
        }
        self.fallback = Some(fallback);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Embedder for LookupEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        texts
            .iter()
            .map(|text| match self.table.get(&canonicalize(text)) {
                Some(v) => Ok(v.clone()),
                None => match &self.fallback {
                    Some(fallback) => fallback
                        .embed(std::slice::from_ref(text))
                        .map(|mut v| v.remove(0)),
                    None => Err(BackendError::UnknownText(text.clone())),
                },
            })
            .collect()
    }
}

/// Seeded feature-hashing embedder.
///
/// The canonical text is split into words and padded character trigrams; each
/// feature adds +1 or -1 to a hashed component. Texts sharing many trigrams get
/// high cosine similarity, and the output depends only on (text, seed, dimension).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dimension: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Result<Self, BackendError> {
        if dimension == 0 {
            return Err(BackendError::InvalidData(
                "dimension must be positive".into(),
            ));
        }
        Ok(Self { dimension, seed })
    }

    fn hash(&self, feature: &str) -> u64 {
        // FNV-1a over the feature bytes, seeded, then a splitmix64 finalizer.
        let mut h = 0xcbf2_9ce4_8422_2325u64 ^ self.seed;
        for b in feature.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^ (h >> 31)
    }

    fn vector(&self, text: &str) -> EmbeddingVector {
        let canonical = canonicalize(text);
        let mut components = vec![0.0f64; self.dimension];
        let mut add = |feature: &str| {
            let h = self.hash(feature);
            let index = (h % self.dimension as u64) as usize;
            components[index] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        };
        for word in canonical.split(' ') {
            add(&format!("w:{word}"));
        }
        let padded: Vec<char> = format!(" {canonical} ").chars().collect();
        for gram in padded.windows(3) {
            add(&gram.iter().collect::<String>());
        }
        EmbeddingVector::normalized(components.clone()).unwrap_or_else(|_| {
            // every feature cancelled out
            components[(self.hash(&canonical) % self.dimension as u64) as usize] = 1.0;
            EmbeddingVector::normalized(components).expect("one non-zero component")
        })
    }
}

impl Embedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}
