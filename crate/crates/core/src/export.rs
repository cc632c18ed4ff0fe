//! Graph serialization: Cypher statement files and canonical graph JSON.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::backends::EmbeddingVector;
use crate::model::{Entity, KnowledgeGraph, ModelError, Relation};

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("invalid export options: {0}")]
    InvalidOptions(String),
    #[error("malformed graph file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Cypher,
    #[default]
    GraphJson,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "cypher" => Ok(Self::Cypher),
            "graph_json" | "json" => Ok(Self::GraphJson),
            other => Err(format!("unknown export format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExportOptions {
    pub format: ExportFormat,
    pub include_embeddings: bool,
    pub include_provenance: bool,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self {
            format: ExportFormat::GraphJson,
            include_embeddings: false,
            include_provenance: true,
        }
    }
}

impl ExportOptions {
    pub fn validate(&self) -> Result<(), ExportError> {
        if self.include_embeddings && self.format != ExportFormat::GraphJson {
            return Err(ExportError::InvalidOptions(
                "embeddings can only be included in graph JSON".into(),
            ));
        }
        Ok(())
    }
}

/// Quotes `value` as a Cypher string literal.
pub fn cypher_string(value: &str) -> String {
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Relationship type for a predicate: uppercased, every non-alphanumeric
/// replaced by `_`. Types that are not plain ASCII identifiers are
/// backtick-quoted.
pub fn relationship_type(predicate: &str) -> String {
    let ty: String = predicate
        .to_uppercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { '_' })
        .collect();
    let plain = ty.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_')
        && ty.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if plain {
        ty
    } else {
        format!("`{ty}`")
    }
}

fn cypher_list(items: &BTreeSet<String>) -> String {
    let items: Vec<String> = items.iter().map(|s| cypher_string(s)).collect();
    format!("[{}]", items.join(", "))
}

/// One statement per line: nodes sorted by key, then relationships sorted by
/// key triple. Provenance is written as a list property when
/// `include_provenance` is set.
pub fn emit_cypher(graph: &KnowledgeGraph, include_provenance: bool) -> String {
    let mut entities: Vec<&Entity> = graph.entities().iter().collect();
    entities.sort_by(|a, b| a.key().cmp(b.key()));
    let mut relations: Vec<&Relation> = graph.relations().iter().collect();
    relations.sort_by_key(|r| r.key());

    let mut out = String::new();
    for e in entities {
        write!(
            out,
            "MERGE (n:Entity {{name: {}}})",
            cypher_string(e.name())
        )
        .unwrap();
        if let Some(label) = e.label() {
            write!(out, " SET n.category = {}", cypher_string(label)).unwrap();
        }
        if include_provenance {
            write!(out, " SET n.provenance = {}", cypher_list(e.provenance())).unwrap();
        }
        out.push_str(";\n");
    }
    for r in relations {
        let name = |key: &str| cypher_string(graph.entity(key).map_or(key, Entity::name));
        write!(
            out,
            "MATCH (a:Entity {{name: {}}}), (b:Entity {{name: {}}}) MERGE (a)-[r:{} {{predicate: {}}}]->(b)",
            name(r.subject_key()),
            name(r.object_key()),
            relationship_type(r.predicate()),
            cypher_string(r.predicate()),
        )
        .unwrap();
        if include_provenance {
            write!(out, " SET r.provenance = {}", cypher_list(r.provenance())).unwrap();
        }
        out.push_str(";\n");
    }
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityRecord {
    name: String,
    key: String,
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    aliases: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<EmbeddingVector>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RelationRecord {
    subject_key: String,
    predicate: String,
    predicate_key: String,
    object_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    aliases: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<EmbeddingVector>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    dimension: usize,
    entities: Vec<EntityRecord>,
    relations: Vec<RelationRecord>,
}

/// Pretty-printed graph JSON in insertion order, with a trailing newline.
pub fn emit_graph_json(graph: &KnowledgeGraph, options: &ExportOptions) -> String {
    let provenance = |p: &BTreeSet<String>| options.include_provenance.then(|| p.clone());
    let embedding = |e: Option<&EmbeddingVector>| {
        if options.include_embeddings {
            e.cloned()
        } else {
            None
        }
    };
    let record = GraphRecord {
        dimension: graph.dimension(),
        entities: graph
            .entities()
            .iter()
            .map(|e| EntityRecord {
                name: e.name().to_string(),
                key: e.key().to_string(),
                label: e.label().map(str::to_string),
                provenance: provenance(e.provenance()),
                aliases: e.aliases().clone(),
                embedding: embedding(e.embedding()),
            })
            .collect(),
        relations: graph
            .relations()
            .iter()
            .map(|r| RelationRecord {
                subject_key: r.subject_key().to_string(),
                predicate: r.predicate().to_string(),
                predicate_key: r.predicate_key().to_string(),
                object_key: r.object_key().to_string(),
                provenance: provenance(r.provenance()),
                aliases: r.aliases().clone(),
                embedding: embedding(r.embedding()),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&record).expect("graph records serialize");
    text.push('\n');
    text
}

/// Rebuilds a graph from [`emit_graph_json`] output and checks every invariant.
pub fn parse_graph_json(text: &str) -> Result<KnowledgeGraph, ExportError> {
    let record: GraphRecord =
        serde_json::from_str(text).map_err(|e| ExportError::Malformed(e.to_string()))?;
    let mut graph = KnowledgeGraph::new(record.dimension)?;
    for e in record.entities {
        let mut entity = Entity::new(&e.name, e.label)?.with_aliases(e.aliases);
        if entity.key() != e.key || e.name.trim() != e.name {
            return Err(ModelError::NonCanonicalKey {
                name: e.name,
                key: e.key,
            }
            .into());
        }
        for p in e.provenance.into_iter().flatten() {
            entity = entity.with_provenance(p);
        }
        if let Some(v) = e.embedding {
            entity = entity.with_embedding(v);
        }
        if let crate::model::EntityInsert::Unified(_) = graph.insert_entity(entity)? {
            return Err(ModelError::DuplicateEntity(e.key).into());
        }
    }
    for r in record.relations {
        let mut relation =
            Relation::new(&r.subject_key, &r.predicate, &r.object_key)?.with_aliases(r.aliases);
        let stored = (
            r.subject_key.as_str(),
            r.predicate_key.as_str(),
            r.object_key.as_str(),
        );
        if (
            relation.subject_key(),
            relation.predicate_key(),
            relation.object_key(),
        ) != stored
            || r.predicate.trim() != r.predicate
        {
            return Err(ExportError::Malformed(format!(
                "relation ({}, {}, {}) is not in canonical form",
                r.subject_key, r.predicate_key, r.object_key
            )));
        }
        if graph
            .entity_position(&r.subject_key)
            .map(|i| graph.entities()[i].key())
            != Some(r.subject_key.as_str())
            || graph
                .entity_position(&r.object_key)
                .map(|i| graph.entities()[i].key())
                != Some(r.object_key.as_str())
        {
            return Err(ModelError::DanglingEndpoint(format!(
                "{} or {}",
                r.subject_key, r.object_key
            ))
            .into());
        }
        for p in r.provenance.into_iter().flatten() {
            relation = relation.with_provenance(p);
        }
        if let Some(v) = r.embedding {
            relation = relation.with_embedding(v);
        }
        if let crate::model::RelationInsert::Unified(_) = graph.insert_relation(relation)? {
            return Err(ModelError::DuplicateRelation(
                r.subject_key,
                r.predicate_key,
                r.object_key,
            )
            .into());
        }
    }
    graph.validate()?;
    Ok(graph)
}
