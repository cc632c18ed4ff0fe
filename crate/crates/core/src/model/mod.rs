//! Graph data model: entities, relations, documents and the global graph.
//!
//! The graph enforces two uniqueness invariants at every mutation: no two
//! entities share a canonical key, and no two relations share a
//! `(subject, predicate, object)` key triple. Every relation endpoint must
//! reference an entity already in the graph.

mod canonical;
mod document;
mod graph;

pub use canonical::canonicalize;
pub use document::{chunk_documents, Document};
pub use graph::{EntityInsert, KnowledgeGraph, RelationInsert};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::backends::EmbeddingVector;

/// Errors raised while building or mutating model values.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("name is empty after trimming")]
    EmptyName,
    #[error("relation component `{0}` is empty")]
    EmptyRelationComponent(&'static str),
    #[error("embedding dimension {found} does not match graph dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding dimension must be positive")]
    ZeroDimension,
    #[error("relation endpoint `{0}` is not an entity in the graph")]
    DanglingEndpoint(String),
    #[error("duplicate entity key `{0}`")]
    DuplicateEntity(String),
    #[error("duplicate relation ({0}, {1}, {2})")]
    DuplicateRelation(String, String, String),
    #[error("key `{key}` does not match canonical form of `{name}`")]
    NonCanonicalKey { name: String, key: String },
}

/// A named node of the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    name: String,
    key: String,
    label: Option<String>,
    embedding: Option<EmbeddingVector>,
    provenance: BTreeSet<String>,
    aliases: BTreeSet<String>,
}

impl Entity {
    pub fn new(name: impl Into<String>, label: Option<String>) -> Result<Self, ModelError> {
        let name = name.into().trim().to_string();
        let key = canonicalize(&name);
        if key.is_empty() {
            return Err(ModelError::EmptyName);
        }
        let label = label
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty());
        Ok(Self {
            name,
            key,
            label,
            embedding: None,
            provenance: BTreeSet::new(),
            aliases: BTreeSet::new(),
        })
    }

    pub fn with_embedding(mut self, embedding: EmbeddingVector) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn with_provenance(mut self, document_id: impl Into<String>) -> Self {
        self.provenance.insert(document_id.into());
        self
    }

    pub(crate) fn with_aliases(mut self, aliases: impl IntoIterator<Item = String>) -> Self {
        self.aliases.extend(aliases);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Canonical key, see [`canonicalize`].
    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn embedding(&self) -> Option<&EmbeddingVector> {
        self.embedding.as_ref()
    }

    pub fn provenance(&self) -> &BTreeSet<String> {
        &self.provenance
    }

    /// Canonical keys of local names that were resolved to this entity.
    pub fn aliases(&self) -> &BTreeSet<String> {
        &self.aliases
    }
}

/// Identity of a relation: the canonical key triple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationKey {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl RelationKey {
    pub fn new(
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Self {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        }
    }
}

impl std::fmt::Display for RelationKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.predicate, self.object)
    }
}

/// A directed, typed edge between two entities.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    subject_key: String,
    predicate: String,
    predicate_key: String,
    object_key: String,
    embedding: Option<EmbeddingVector>,
    provenance: BTreeSet<String>,
    aliases: BTreeSet<String>,
}

impl Relation {
    /// Endpoints are canonicalized, so display names may be passed as well.
    pub fn new(subject: &str, predicate: &str, object: &str) -> Result<Self, ModelError> {
        let subject_key = canonicalize(subject);
        let predicate_key = canonicalize(predicate);
        let object_key = canonicalize(object);
        if subject_key.is_empty() {
            return Err(ModelError::EmptyRelationComponent("subject"));
        }
        if predicate_key.is_empty() {
            return Err(ModelError::EmptyRelationComponent("predicate"));
        }
        if object_key.is_empty() {
            return Err(ModelError::EmptyRelationComponent("object"));
        }
        Ok(Self {
            subject_key,
            predicate: predicate.trim().to_string(),
            predicate_key,
            object_key,
            embedding: None,
            provenance: BTreeSet::new(),
            aliases: BTreeSet::new(),
        })
    }

    pub fn with_embedding(mut self, embedding: EmbeddingVector) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn with_provenance(mut self, document_id: impl Into<String>) -> Self {
        self.provenance.insert(document_id.into());
        self
    }

    pub(crate) fn with_aliases(mut self, aliases: impl IntoIterator<Item = String>) -> Self {
        self.aliases.extend(aliases);
        self
    }

    pub fn subject_key(&self) -> &str {
        &self.subject_key
    }

    pub fn predicate(&self) -> &str {
        &self.predicate
    }

    pub fn predicate_key(&self) -> &str {
        &self.predicate_key
    }

    pub fn object_key(&self) -> &str {
        &self.object_key
    }

    pub fn key(&self) -> RelationKey {
        RelationKey::new(&self.subject_key, &self.predicate_key, &self.object_key)
    }

    pub fn embedding(&self) -> Option<&EmbeddingVector> {
        self.embedding.as_ref()
    }

    pub fn provenance(&self) -> &BTreeSet<String> {
        &self.provenance
    }

    /// Canonical predicate keys merged into this relation.
    pub fn aliases(&self) -> &BTreeSet<String> {
        &self.aliases
    }
}

/// How a local item was resolved against the global set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Exact,
    Merged,
    Inserted,
}

/// Audit record of one entity resolution step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchDecision {
    pub document_id: String,
    pub local_name: String,
    pub outcome: Outcome,
    pub target_key: String,
    /// Best similarity against the global set. Absent for exact hits and for
    /// insertions into a set that had no comparable entity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}
