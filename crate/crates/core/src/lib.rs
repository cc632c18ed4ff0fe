//! Incremental knowledge graph construction from documents: blueprint-guided
//! distillation, embedding-based entity and relation resolution, and graph
//! export.

pub mod backends;
pub mod distill;
pub mod entities;
pub mod export;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod prompts;
pub mod relations;

pub use backends::{
    BackendError, Embedder, EmbeddingVector, FixtureModel, HashEmbedder, LanguageModel,
    LookupEmbedder, RemoteBackend, RemoteConfig,
};
pub use distill::{Blueprint, SemanticBlock};
pub use entities::{match_entities, MatcherConfig};
pub use export::{emit_cypher, emit_graph_json, parse_graph_json, ExportFormat, ExportOptions};
pub use model::{
    canonicalize, Document, Entity, KnowledgeGraph, MatchDecision, ModelError, Outcome, Relation,
    RelationKey,
};
pub use pipeline::{run_pipeline, BackendConfig, Backends, PipelineConfig, PipelineRun, RunReport};
pub use relations::{EndpointPolicy, RelationMode};
