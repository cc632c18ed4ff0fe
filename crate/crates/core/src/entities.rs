//! Incremental entity resolution.
//!
//! Each block's local entities are matched against the global set in order:
//! an exact canonical-key (or alias) hit reuses the global entity; otherwise
//! the most similar global entity by cosine is taken when its similarity
//! reaches the threshold, and the local entity is appended when it does not.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backends::{
    cosine, embed_batch, extract_structured, record_str, BackendError, Embedder, ExtractionRequest,
    FieldKind, FieldSpec, LanguageModel, Task,
};
use crate::distill::{concept_entities, Blueprint, SemanticBlock, Skipped};
use crate::model::{Entity, KnowledgeGraph, MatchDecision, ModelError, Outcome};
use crate::prompts::Prompts;

pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Debug, thiserror::Error)]
pub enum MatchError {
    #[error("threshold {0} is outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("entity `{0}` has no embedding")]
    MissingEmbedding(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Text embedded for an entity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityText {
    #[default]
    Name,
    /// `name (label)`, or the name alone when there is no label.
    NameWithLabel,
}

impl EntityText {
    pub fn render(self, name: &str, label: Option<&str>) -> String {
        match (self, label) {
            (Self::NameWithLabel, Some(label)) => format!("{name} ({label})"),
            _ => name.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherConfig {
    /// Similarity at or above which a local item merges into its best match.
    pub threshold: f64,
    /// Resolve the first block against itself instead of trusting it to be
    /// free of near-duplicates.
    pub strict_first_block: bool,
    pub embed_entity_as: EntityText,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            strict_first_block: true,
            embed_entity_as: EntityText::Name,
        }
    }
}

impl MatcherConfig {
    pub fn with_threshold(threshold: f64) -> Self {
        Self {
            threshold,
            ..Self::default()
        }
    }

    /// Production runs require a threshold in (0, 1]. The matching functions
    /// themselves accept any finite threshold.
    pub fn validate(&self) -> Result<(), MatchError> {
        if self.threshold > 0.0 && self.threshold <= 1.0 {
            Ok(())
        } else {
            Err(MatchError::InvalidThreshold(self.threshold))
        }
    }
}

/// Output of [`match_entities`].
#[derive(Debug, Clone, PartialEq)]
pub struct EntityMatch {
    /// Global representative of each local entity, in local order.
    pub matched: Vec<Entity>,
    pub decisions: Vec<MatchDecision>,
}

/// Position and similarity of the most similar embedded entity. Ties keep
/// the earliest position.
pub(crate) fn best_match(
    graph: &KnowledgeGraph,
    embedding: &crate::backends::EmbeddingVector,
) -> Result<Option<(usize, f64)>, MatchError> {
    let mut best: Option<(usize, f64)> = None;
    for (position, entity) in graph.entities().iter().enumerate() {
        let Some(other) = entity.embedding() else {
            continue;
        };
        let similarity = cosine(embedding, other).map_err(|_| ModelError::DimensionMismatch {
            expected: graph.dimension(),
            found: embedding.dim(),
        })?;
        if best.is_none_or(|(_, s)| similarity > s) {
            best = Some((position, similarity));
        }
    }
    Ok(best)
}

/// Resolves `local` entities against the global set, updating `graph`.
pub fn match_entities(
    local: &[Entity],
    graph: &mut KnowledgeGraph,
    config: &MatcherConfig,
    document_id: &str,
) -> Result<EntityMatch, MatchError> {
    let mut matched_positions = Vec::with_capacity(local.len());
    let mut decisions = Vec::with_capacity(local.len());
    for entity in local {
        if let Some(position) = graph.entity_position(entity.key()) {
            graph.unify_entity(position, entity.key(), entity.provenance());
            decisions.push(MatchDecision {
                document_id: document_id.to_string(),
                local_name: entity.name().to_string(),
                outcome: Outcome::Exact,
                target_key: graph.entities()[position].key().to_string(),
                similarity: None,
            });
            matched_positions.push(position);
            continue;
        }
        let embedding = entity
            .embedding()
            .ok_or_else(|| MatchError::MissingEmbedding(entity.name().to_string()))?;
        if embedding.dim() != graph.dimension() {
            return Err(ModelError::DimensionMismatch {
                expected: graph.dimension(),
                found: embedding.dim(),
            }
            .into());
        }
        let best = best_match(graph, embedding)?;
        let (position, outcome) = match best {
            Some((position, similarity)) if similarity >= config.threshold => {
                graph.unify_entity(position, entity.key(), entity.provenance());
                (position, Outcome::Merged)
            }
            _ => (
                graph.insert_entity(entity.clone())?.position(),
                Outcome::Inserted,
            ),
        };
        decisions.push(MatchDecision {
            document_id: document_id.to_string(),
            local_name: entity.name().to_string(),
            outcome,
            target_key: graph.entities()[position].key().to_string(),
            similarity: best.map(|(_, s)| s),
        });
        matched_positions.push(position);
    }
    let matched = matched_positions
        .into_iter()
        .map(|p| graph.entities()[p].clone())
        .collect();
    Ok(EntityMatch { matched, decisions })
}

fn entity_schema() -> IndexMap<String, FieldSpec> {
    let mut schema = IndexMap::new();
    schema.insert(
        "entities".to_string(),
        FieldSpec {
            kind: FieldKind::RecordList,
            description: "objects with \"name\" (the entity) and \"label\" (its category)".into(),
            required: true,
        },
    );
    schema
}

/// Local entities of one block after canonical collapse, with embeddings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocalEntities {
    pub entities: Vec<Entity>,
    pub warnings: Vec<String>,
}

fn build_local(
    candidates: Vec<(String, Option<String>)>,
    block: &SemanticBlock,
    embedder: &dyn Embedder,
    config: &MatcherConfig,
    mut warnings: Vec<String>,
) -> Result<LocalEntities, BackendError> {
    let mut unique: IndexMap<String, Entity> = IndexMap::new();
    for (name, label) in candidates {
        match Entity::new(name, label) {
            Ok(entity) => {
                unique
                    .entry(entity.key().to_string())
                    .or_insert_with(|| entity.with_provenance(&block.document_id));
            }
            Err(_) => warnings.push(format!(
                "{}: entity with empty name skipped",
                block.block_id
            )),
        }
    }
    if unique.is_empty() {
        return Ok(LocalEntities {
            entities: vec![],
            warnings,
        });
    }
    let texts: Vec<String> = unique
        .values()
        .map(|e| config.embed_entity_as.render(e.name(), e.label()))
        .collect();
    let vectors = embed_batch(embedder, &texts)?;
    let entities = unique
        .into_values()
        .zip(vectors)
        .map(|(e, v)| e.with_embedding(v))
        .collect();
    Ok(LocalEntities { entities, warnings })
}

type Candidate = (String, Option<String>);

fn request_entities(
    block: &SemanticBlock,
    model: &dyn LanguageModel,
    prompts: &Prompts,
    max_attempts: u32,
) -> Result<(Vec<Candidate>, Vec<String>), BackendError> {
    let request = ExtractionRequest {
        task: Task::Entities,
        document_id: block.block_id.clone(),
        instruction: prompts.entities.clone(),
        context: block.text(),
        output_schema: entity_schema(),
    };
    let result = extract_structured(model, &request, max_attempts)?;
    let mut candidates = Vec::new();
    let mut warnings = Vec::new();
    let records = result.values.get("entities").and_then(Value::as_array);
    for record in records.into_iter().flatten().filter_map(Value::as_object) {
        match record_str(record, "name") {
            Some(name) => {
                let label = ["label", "type", "category"]
                    .iter()
                    .find_map(|f| record_str(record, f))
                    .map(str::to_string);
                candidates.push((name.to_string(), label));
            }
            None => warnings.push(format!(
                "{}: entity with empty name skipped",
                block.block_id
            )),
        }
    }
    Ok((candidates, warnings))
}

/// Extracts and embeds the entities of one block. Names are canonicalized and
/// exact-key duplicates collapsed, keeping the first occurrence.
pub fn extract_local_entities(
    block: &SemanticBlock,
    model: &dyn LanguageModel,
    embedder: &dyn Embedder,
    config: &MatcherConfig,
    prompts: &Prompts,
    max_attempts: u32,
) -> Result<LocalEntities, BackendError> {
    if block.is_empty() {
        return Ok(LocalEntities::default());
    }
    let (candidates, warnings) = request_entities(block, model, prompts, max_attempts)?;
    build_local(candidates, block, embedder, config, warnings)
}

#[derive(Debug, Clone)]
pub struct EntityStageOptions<'a> {
    pub prompts: &'a Prompts,
    pub max_attempts: u32,
    /// When set, concept values and the document itself are added to each
    /// block's local entities.
    pub blueprint: Option<&'a Blueprint>,
}

/// The entities each block resolved to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockEntities {
    pub block_id: String,
    pub document_id: String,
    /// Keys of the global representatives, one per local entity.
    pub matched_keys: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityStage {
    pub blocks: Vec<BlockEntities>,
    pub decisions: Vec<MatchDecision>,
    pub skipped: Vec<Skipped>,
    pub warnings: Vec<String>,
    /// Total local entities across processed blocks.
    pub local_count: usize,
}

/// Runs entity resolution over `blocks` in order, growing `graph`.
///
/// When the graph starts empty and `strict_first_block` is off, the first
/// processed block is inserted as-is; otherwise every block goes through
/// [`match_entities`]. A block whose extraction fails is skipped.
pub fn build_global_entities(
    blocks: &[SemanticBlock],
    model: &dyn LanguageModel,
    embedder: &dyn Embedder,
    config: &MatcherConfig,
    graph: &mut KnowledgeGraph,
    options: &EntityStageOptions<'_>,
) -> Result<EntityStage, MatchError> {
    let mut stage = EntityStage::default();
    let mut seeding = graph.entities().is_empty() && !config.strict_first_block;
    for block in blocks {
        let (mut candidates, warnings) = if block.is_empty() {
            (vec![], vec![])
        } else {
            match request_entities(block, model, options.prompts, options.max_attempts) {
                Ok(found) => found,
                Err(BackendError::ExtractionFailed {
                    attempts, reason, ..
                }) => {
                    stage.skipped.push(Skipped {
                        id: block.block_id.clone(),
                        reason: format!(
                            "entity extraction failed after {attempts} attempt(s): {reason}"
                        ),
                    });
                    continue;
                }
                Err(e) => return Err(e.into()),
            }
        };
        if let Some(blueprint) = options.blueprint {
            candidates.extend(
                concept_entities(block, blueprint)
                    .into_iter()
                    .map(|(name, label)| (name, Some(label))),
            );
        }
        let local = build_local(candidates, block, embedder, config, warnings)?;
        stage.warnings.extend(local.warnings);
        stage.local_count += local.entities.len();

        let matched_keys = if seeding && !local.entities.is_empty() {
            seeding = false;
            let mut keys = Vec::new();
            for entity in local.entities {
                let name = entity.name().to_string();
                let outcome = graph.insert_entity(entity)?;
                let key = graph.entities()[outcome.position()].key().to_string();
                stage.decisions.push(MatchDecision {
                    document_id: block.document_id.clone(),
                    local_name: name,
                    outcome: match outcome {
                        crate::model::EntityInsert::Inserted(_) => Outcome::Inserted,
                        crate::model::EntityInsert::Unified(_) => Outcome::Exact,
                    },
                    target_key: key.clone(),
                    similarity: None,
                });
                keys.push(key);
            }
            keys
        } else {
            let result = match_entities(&local.entities, graph, config, &block.document_id)?;
            stage.decisions.extend(result.decisions);
            result.matched.iter().map(|e| e.key().to_string()).collect()
        };
        stage.blocks.push(BlockEntities {
            block_id: block.block_id.clone(),
            document_id: block.document_id.clone(),
            matched_keys,
        });
    }
    Ok(stage)
}
