//! Relation extraction and incremental relation resolution.
//!
//! Extraction differs between modes only in the entity context handed to the
//! model: the whole global set (`global`) or the block's matched entities
//! (`local`). Resolution is the same in both modes. Endpoints are resolved to
//! global entities first; then a triple is either an exact key hit, merged into
//! the most similar relation between the same two entities, or inserted.

use std::collections::{BTreeSet, HashMap};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backends::{
    cosine, embed_batch, extract_structured, record_str, BackendError, Embedder, EmbeddingVector,
    ExtractionRequest, FieldKind, FieldSpec, LanguageModel, Task,
};
use crate::distill::{render_concept_relations, Blueprint, SemanticBlock, Skipped};
use crate::entities::{best_match, BlockEntities, MatchError, MatcherConfig};
use crate::model::{canonicalize, Entity, KnowledgeGraph, Relation, RelationKey};
use crate::prompts::Prompts;

/// Which entities are given to the model as relation endpoints.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationMode {
    Global,
    #[default]
    Local,
}

impl std::str::FromStr for RelationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "global" => Ok(Self::Global),
            "local" => Ok(Self::Local),
            other => Err(format!("unknown relation mode `{other}`")),
        }
    }
}

/// What to do with a triple endpoint that is not a key of the global set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointPolicy {
    Drop,
    #[default]
    MatchThenDrop,
    MatchThenInsert,
}

impl std::str::FromStr for EndpointPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "drop" => Ok(Self::Drop),
            "match_then_drop" => Ok(Self::MatchThenDrop),
            "match_then_insert" => Ok(Self::MatchThenInsert),
            other => Err(format!("unknown endpoint policy `{other}`")),
        }
    }
}

/// A triple as emitted by the model, before resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTriple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl RawTriple {
    pub fn new(subject: &str, predicate: &str, object: &str) -> Self {
        Self {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointResolution {
    Exact,
    Matched,
    Inserted,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointDecision {
    pub resolution: EndpointResolution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationOutcome {
    Exact,
    Merged,
    Inserted,
    Dropped,
}

/// Audit record of one relation resolution step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationDecision {
    pub document_id: String,
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub subject_endpoint: EndpointDecision,
    pub object_endpoint: EndpointDecision,
    pub outcome: RelationOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<RelationKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

fn relation_schema() -> IndexMap<String, FieldSpec> {
    let mut schema = IndexMap::new();
    schema.insert(
        "relations".to_string(),
        FieldSpec {
            kind: FieldKind::RecordList,
            description: "objects with \"subject\", \"predicate\" and \"object\"".into(),
            required: true,
        },
    );
    schema
}

fn render_context(block: &SemanticBlock, entities: &[Entity]) -> String {
    let mut out = block.text();
    out.push_str("\nEntities:\n");
    for entity in entities {
        match entity.label() {
            Some(label) => out.push_str(&format!("- {} ({label})\n", entity.name())),
            None => out.push_str(&format!("- {}\n", entity.name())),
        }
    }
    out
}

/// Asks the model for the relations of one block. Records missing a
/// component are discarded. The model is told to use only `context_entities`
/// as endpoints; [`resolve_relations`] enforces it.
pub fn extract_block_relations(
    block: &SemanticBlock,
    context_entities: &[Entity],
    model: &dyn LanguageModel,
    mode: RelationMode,
    prompts: &Prompts,
    max_attempts: u32,
) -> Result<Vec<RawTriple>, BackendError> {
    if block.is_empty() {
        return Ok(vec![]);
    }
    let (task, instruction) = match mode {
        RelationMode::Global => (Task::GlobalRelations, &prompts.global_relations),
        RelationMode::Local => (Task::LocalRelations, &prompts.local_relations),
    };
    let request = ExtractionRequest {
        task,
        document_id: block.block_id.clone(),
        instruction: instruction.clone(),
        context: render_context(block, context_entities),
        output_schema: relation_schema(),
    };
    let result = extract_structured(model, &request, max_attempts)?;
    let records = result.values.get("relations").and_then(Value::as_array);
    Ok(records
        .into_iter()
        .flatten()
        .filter_map(Value::as_object)
        .filter_map(|r| {
            Some(RawTriple::new(
                record_str(r, "subject")?,
                record_str(r, "predicate")?,
                record_str(r, "object")?,
            ))
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelationResolution {
    /// Keys of the global relations each accepted triple resolved to.
    pub accepted: Vec<RelationKey>,
    pub decisions: Vec<RelationDecision>,
}

fn resolve_endpoint(
    name: &str,
    graph: &mut KnowledgeGraph,
    config: &MatcherConfig,
    policy: EndpointPolicy,
    vectors: &HashMap<String, EmbeddingVector>,
    document_id: &str,
) -> Result<EndpointDecision, MatchError> {
    let key = canonicalize(name);
    if let Some(entity) = graph.entity(&key) {
        return Ok(EndpointDecision {
            resolution: EndpointResolution::Exact,
            key: Some(entity.key().to_string()),
            similarity: None,
        });
    }
    let unresolved = |similarity| EndpointDecision {
        resolution: EndpointResolution::Unresolved,
        key: None,
        similarity,
    };
    if policy == EndpointPolicy::Drop || key.is_empty() {
        return Ok(unresolved(None));
    }
    let embedding = &vectors[name.trim()];
    let best = best_match(graph, embedding)?;
    if let Some((position, similarity)) = best {
        if similarity >= config.threshold {
            return Ok(EndpointDecision {
                resolution: EndpointResolution::Matched,
                key: Some(graph.entities()[position].key().to_string()),
                similarity: Some(similarity),
            });
        }
    }
    if policy == EndpointPolicy::MatchThenDrop {
        return Ok(unresolved(best.map(|(_, s)| s)));
    }
    let entity = Entity::new(name, None)?
        .with_embedding(embedding.clone())
        .with_provenance(document_id);
    let position = graph.insert_entity(entity)?.position();
    Ok(EndpointDecision {
        resolution: EndpointResolution::Inserted,
        key: Some(graph.entities()[position].key().to_string()),
        similarity: best.map(|(_, s)| s),
    })
}

/// Resolves `raw` triples against the global graph in order.
pub fn resolve_relations(
    raw: &[RawTriple],
    graph: &mut KnowledgeGraph,
    config: &MatcherConfig,
    policy: EndpointPolicy,
    embedder: &dyn Embedder,
    document_id: &str,
) -> Result<RelationResolution, MatchError> {
    let mut out = RelationResolution::default();
    let triples: Vec<&RawTriple> = raw
        .iter()
        .filter(|t| {
            [&t.subject, &t.predicate, &t.object]
                .iter()
                .all(|s| !canonicalize(s).is_empty())
        })
        .collect();
    if triples.is_empty() {
        return Ok(out);
    }

    // one embedding call for every text this block may need
    let mut texts: BTreeSet<String> = BTreeSet::new();
    for t in &triples {
        texts.insert(t.predicate.trim().to_string());
        if policy != EndpointPolicy::Drop {
            for endpoint in [&t.subject, &t.object] {
                if graph.entity(&canonicalize(endpoint)).is_none() {
                    texts.insert(endpoint.trim().to_string());
                }
            }
        }
    }
    let texts: Vec<String> = texts.into_iter().collect();
    let vectors: HashMap<String, EmbeddingVector> = texts
        .iter()
        .cloned()
        .zip(embed_batch(embedder, &texts)?)
        .collect();

    let provenance = BTreeSet::from([document_id.to_string()]);
    for t in triples {
        let subject = resolve_endpoint(&t.subject, graph, config, policy, &vectors, document_id)?;
        let object = resolve_endpoint(&t.object, graph, config, policy, &vectors, document_id)?;
        let mut decision = RelationDecision {
            document_id: document_id.to_string(),
            subject: t.subject.clone(),
            predicate: t.predicate.clone(),
            object: t.object.clone(),
            subject_endpoint: subject.clone(),
            object_endpoint: object.clone(),
            outcome: RelationOutcome::Dropped,
            target: None,
            similarity: None,
        };
        let (Some(subject_key), Some(object_key)) = (subject.key, object.key) else {
            out.decisions.push(decision);
            continue;
        };
        let predicate_key = canonicalize(&t.predicate);
        let key = RelationKey::new(&subject_key, &predicate_key, &object_key);
        let position = if let Some(position) = graph.relation_position(&key) {
            graph.unify_relation(position, &predicate_key, &provenance);
            decision.outcome = RelationOutcome::Exact;
            position
        } else {
            let embedding = &vectors[t.predicate.trim()];
            let mut best: Option<(usize, f64)> = None;
            for (position, candidate) in graph.relations_between(&subject_key, &object_key) {
                let Some(other) = candidate.embedding() else {
                    continue;
                };
                let similarity = cosine(embedding, other).map_err(|_| {
                    crate::model::ModelError::DimensionMismatch {
                        expected: graph.dimension(),
                        found: embedding.dim(),
                    }
                })?;
                if best.is_none_or(|(_, s)| similarity > s) {
                    best = Some((position, similarity));
                }
            }
            decision.similarity = best.map(|(_, s)| s);
            match best {
                Some((position, similarity)) if similarity >= config.threshold => {
                    graph.unify_relation(position, &predicate_key, &provenance);
                    decision.outcome = RelationOutcome::Merged;
                    position
                }
                _ => {
                    let relation = Relation::new(&subject_key, &t.predicate, &object_key)?
                        .with_embedding(embedding.clone())
                        .with_provenance(document_id);
                    decision.outcome = RelationOutcome::Inserted;
                    graph.insert_relation(relation)?.position()
                }
            }
        };
        let target = graph.relations()[position].key();
        decision.target = Some(target.clone());
        out.accepted.push(target);
        out.decisions.push(decision);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RelationStageOptions<'a> {
    pub mode: RelationMode,
    pub policy: EndpointPolicy,
    pub prompts: &'a Prompts,
    pub max_attempts: u32,
    /// When set, concept seed triples are resolved ahead of each block's
    /// extracted triples.
    pub blueprint: Option<&'a Blueprint>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelationStage {
    pub decisions: Vec<RelationDecision>,
    pub skipped: Vec<Skipped>,
    /// Raw triples handed to resolution, seeds included.
    pub raw_count: usize,
}

/// Runs relation extraction and resolution over `blocks` in order.
///
/// `matched` holds the entity-stage result per block, used as context in
/// local mode. A block whose extraction fails still contributes its seeds.
pub fn build_global_relations(
    blocks: &[SemanticBlock],
    matched: &[BlockEntities],
    graph: &mut KnowledgeGraph,
    model: &dyn LanguageModel,
    embedder: &dyn Embedder,
    config: &MatcherConfig,
    options: &RelationStageOptions<'_>,
) -> Result<RelationStage, MatchError> {
    let by_block: HashMap<&str, &BlockEntities> =
        matched.iter().map(|m| (m.block_id.as_str(), m)).collect();
    let mut stage = RelationStage::default();
    for block in blocks {
        let context: Vec<Entity> = match options.mode {
            RelationMode::Global => graph.entities().to_vec(),
            RelationMode::Local => {
                let mut seen = BTreeSet::new();
                by_block
                    .get(block.block_id.as_str())
                    .map(|m| m.matched_keys.as_slice())
                    .unwrap_or_default()
                    .iter()
                    .filter(|k| seen.insert(k.as_str()))
                    .filter_map(|k| graph.entity(k).cloned())
                    .collect()
            }
        };
        let mut raw: Vec<RawTriple> = options
            .blueprint
            .map(|b| {
                render_concept_relations(block, b)
                    .into_iter()
                    .map(|s| RawTriple::new(&s.subject, &s.predicate, &s.object))
                    .collect()
            })
            .unwrap_or_default();
        match extract_block_relations(
            block,
            &context,
            model,
            options.mode,
            options.prompts,
            options.max_attempts,
        ) {
            Ok(triples) => raw.extend(triples),
            Err(BackendError::ExtractionFailed {
                attempts, reason, ..
            }) => {
                stage.skipped.push(Skipped {
                    id: block.block_id.clone(),
                    reason: format!(
                        "relation extraction failed after {attempts} attempt(s): {reason}"
                    ),
                });
            }
            Err(e) => return Err(e.into()),
        }
        stage.raw_count += raw.len();
        let resolution = resolve_relations(
            &raw,
            graph,
            config,
            options.policy,
            embedder,
            &block.document_id,
        )?;
        stage.decisions.extend(resolution.decisions);
    }
    Ok(stage)
}
