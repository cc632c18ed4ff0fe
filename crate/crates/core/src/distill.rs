//! Blueprint-guided distillation of documents into semantic blocks.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backends::{
    extract_structured, BackendError, ExtractionRequest, FieldKind, FieldSpec, LanguageModel, Task,
};
use crate::model::Document;
use crate::prompts::Prompts;

/// Label given to the synthesized entity standing for a whole document.
pub const DOCUMENT_LABEL: &str = "Document";

#[derive(Debug, thiserror::Error)]
pub enum DistillError {
    #[error("invalid blueprint: {0}")]
    InvalidBlueprint(String),
    #[error("cannot read blueprint {path}: {reason}")]
    BlueprintFile { path: String, reason: String },
    #[error("document ordinals must be contiguous from 0 (found {found} at position {position})")]
    NonContiguousOrdinals { position: usize, found: usize },
    #[error("duplicate document id `{0}`")]
    DuplicateDocument(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Value kinds a blueprint key may request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlueprintKind {
    Text,
    TextList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlueprintField {
    pub kind: BlueprintKind,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub required: bool,
    /// Concept keys also emit a `HAS_<KEY>` relation from the document.
    #[serde(default)]
    pub concept: bool,
}

/// The extraction schema a distillation run follows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blueprint {
    pub name: String,
    pub keys: IndexMap<String, BlueprintField>,
}

impl Blueprint {
    pub fn from_json(text: &str) -> Result<Self, DistillError> {
        let blueprint: Self = serde_json::from_str(text)
            .map_err(|e| DistillError::InvalidBlueprint(e.to_string()))?;
        blueprint.validate()?;
        Ok(blueprint)
    }

    pub fn from_file(path: &Path) -> Result<Self, DistillError> {
        let text = std::fs::read_to_string(path).map_err(|e| DistillError::BlueprintFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), DistillError> {
        if self.keys.is_empty() {
            return Err(DistillError::InvalidBlueprint(
                "blueprint has no keys".into(),
            ));
        }
        if let Some(key) = self
            .keys
            .keys()
            .find(|k| k.trim().is_empty() || k.trim() != k.as_str())
        {
            return Err(DistillError::InvalidBlueprint(format!(
                "bad key name {key:?}"
            )));
        }
        Ok(())
    }

    fn output_schema(&self) -> IndexMap<String, FieldSpec> {
        self.keys
            .iter()
            .map(|(key, field)| {
                let kind = match field.kind {
                    BlueprintKind::Text => FieldKind::Text,
                    BlueprintKind::TextList => FieldKind::TextList,
                };
                let spec = FieldSpec {
                    kind,
                    description: field.description.clone(),
                    required: field.required,
                };
                (key.clone(), spec)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub key: String,
    pub values: Vec<String>,
}

/// The schema-shaped rewrite of one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticBlock {
    /// Unique per block; equals `document_id` unless blocks were split per key.
    pub block_id: String,
    pub document_id: String,
    pub ordinal: usize,
    pub sections: Vec<Section>,
}

impl SemanticBlock {
    /// One `key: value` line per value, in section order.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for section in &self.sections {
            for value in &section.values {
                out.push_str(&section.key);
                out.push_str(": ");
                out.push_str(value);
                out.push('\n');
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillReport {
    pub processed: usize,
    pub skipped: Vec<Skipped>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillOptions {
    /// Emit one block per filled key instead of one per document.
    pub split_keys: bool,
    pub max_attempts: u32,
    /// Upper bound on concurrent model calls.
    pub concurrency: usize,
}

impl Default for DistillOptions {
    fn default() -> Self {
        Self {
            split_keys: false,
            max_attempts: crate::backends::DEFAULT_MAX_RETRIES,
            concurrency: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Distillation {
    pub blocks: Vec<SemanticBlock>,
    pub report: DistillReport,
}

/// A seed relation derived from a concept key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedTriple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

pub(crate) fn check_documents(documents: &[Document]) -> Result<(), DistillError> {
    let mut seen = std::collections::HashSet::new();
    for (position, doc) in documents.iter().enumerate() {
        if doc.ordinal != position {
            return Err(DistillError::NonContiguousOrdinals {
                position,
                found: doc.ordinal,
            });
        }
        if !seen.insert(doc.id.as_str()) {
            return Err(DistillError::DuplicateDocument(doc.id.clone()));
        }
    }
    Ok(())
}

/// Runs `f` over `items` on at most `workers` threads, returning results in
/// item order.
pub(crate) fn map_bounded<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<R>>> =
        items.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                *slots[i].lock().expect("slot poisoned") = Some(f(item));
            });
        }
    });
    slots
        .into_iter()
        .map(|s| {
            s.into_inner()
                .expect("slot poisoned")
                .expect("every slot filled")
        })
        .collect()
}

fn value_items(value: &Value) -> Vec<String> {
    match value {
        Value::String(s) => vec![s.clone()],
        Value::Array(items) => items
            .iter()
            .filter_map(|v| v.as_str().map(str::to_string))
            .collect(),
        _ => vec![],
    }
}

/// Rewrites `documents` into semantic blocks following `blueprint`.
///
/// Chunks sharing a source id (`doc#c0`, `doc#c1`, ...) are aggregated into
/// one block with their values concatenated per key in chunk order. A
/// document whose extraction fails, or which fills no key, yields no block and
/// is listed in the report. Only an unreachable backend aborts the run.
pub fn distill(
    documents: &[Document],
    blueprint: &Blueprint,
    model: &dyn LanguageModel,
    prompts: &Prompts,
    options: &DistillOptions,
) -> Result<Distillation, DistillError> {
    blueprint.validate()?;
    check_documents(documents)?;
    let schema = blueprint.output_schema();

    let results = map_bounded(documents, options.concurrency, |doc| {
        let request = ExtractionRequest {
            task: Task::Distill,
            document_id: doc.id.clone(),
            instruction: prompts.distill.clone(),
            context: doc.text.clone(),
            output_schema: schema.clone(),
        };
        extract_structured(model, &request, options.max_attempts)
    });

    // group chunks by source id, in first-appearance order
    let mut groups: IndexMap<&str, Vec<(&Document, Result<_, BackendError>)>> = IndexMap::new();
    for (doc, result) in documents.iter().zip(results) {
        if let Err(BackendError::Unreachable(reason)) = &result {
            return Err(BackendError::Unreachable(reason.clone()).into());
        }
        groups
            .entry(doc.source_id())
            .or_default()
            .push((doc, result));
    }

    let mut out = Distillation::default();
    for (ordinal, (source_id, chunks)) in groups.into_iter().enumerate() {
        out.report.processed += 1;
        let mut merged: IndexMap<String, Vec<String>> = IndexMap::new();
        let mut any_success = false;
        for (doc, result) in chunks {
            match result {
                Ok(extraction) => {
                    any_success = true;
                    for (key, value) in &extraction.values {
                        merged
                            .entry(key.clone())
                            .or_default()
                            .extend(value_items(value));
                    }
                }
                Err(e) => out.report.skipped.push(Skipped {
                    id: doc.id.clone(),
                    reason: e.to_string(),
                }),
            }
        }
        let sections: Vec<Section> = blueprint
            .keys
            .keys()
            .filter_map(|key| {
                let values = merged.swap_remove(key.as_str())?;
                (!values.is_empty()).then(|| Section {
                    key: key.clone(),
                    values,
                })
            })
            .collect();
        if sections.is_empty() {
            if any_success {
                out.report.skipped.push(Skipped {
                    id: source_id.to_string(),
                    reason: "no blueprint information found".into(),
                });
            }
            continue;
        }
        for (key, field) in &blueprint.keys {
            if field.required && !sections.iter().any(|s| &s.key == key) {
                out.report
                    .warnings
                    .push(format!("{source_id}: required key `{key}` not found"));
            }
        }
        if options.split_keys {
            for section in sections {
                out.blocks.push(SemanticBlock {
                    block_id: format!("{source_id}#{}", section.key),
                    document_id: source_id.to_string(),
                    ordinal,
                    sections: vec![section],
                });
            }
        } else {
            out.blocks.push(SemanticBlock {
                block_id: source_id.to_string(),
                document_id: source_id.to_string(),
                ordinal,
                sections,
            });
        }
    }
    Ok(out)
}

/// `HAS_<KEY>` with the key uppercased and non-alphanumerics replaced by `_`.
pub fn concept_predicate(key: &str) -> String {
    let upper: String = key
        .chars()
        .flat_map(char::to_uppercase)
        .map(|c| if c.is_alphanumeric() { c } else { '_' })
        .collect();
    format!("HAS_{upper}")
}

/// One `(document, HAS_<KEY>, value)` seed per value of each concept key.
pub fn render_concept_relations(block: &SemanticBlock, blueprint: &Blueprint) -> Vec<SeedTriple> {
    block
        .sections
        .iter()
        .filter(|s| blueprint.keys.get(&s.key).is_some_and(|f| f.concept))
        .flat_map(|s| {
            let predicate = concept_predicate(&s.key);
            s.values.iter().map(move |value| SeedTriple {
                subject: block.document_id.clone(),
                predicate: predicate.clone(),
                object: value.clone(),
            })
        })
        .collect()
}

/// Entities implied by concept seeds: the document itself, then each concept
/// value labeled with its key. Empty when no concept key is filled.
pub fn concept_entities(block: &SemanticBlock, blueprint: &Blueprint) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for section in &block.sections {
        if !blueprint.keys.get(&section.key).is_some_and(|f| f.concept) {
            continue;
        }
        if out.is_empty() {
            out.push((block.document_id.clone(), DOCUMENT_LABEL.to_string()));
        }
        out.extend(
            section
                .values
                .iter()
                .map(|v| (v.clone(), section.key.clone())),
        );
    }
    out
}
