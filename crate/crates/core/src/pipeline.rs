//! End-to-end orchestration: distill, resolve entities, resolve relations,
//! export. Also owns configuration files, document loading and resume.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::backends::{
    BackendError, Embedder, FixtureModel, HashEmbedder, LanguageModel, LookupEmbedder,
    RemoteBackend, RemoteConfig, DEFAULT_MAX_RETRIES,
};
use crate::distill::{distill, Blueprint, DistillError, DistillOptions, Skipped};
use crate::entities::{build_global_entities, EntityStageOptions, MatchError, MatcherConfig};
use crate::export::{emit_cypher, emit_graph_json, parse_graph_json, ExportError, ExportOptions};
use crate::model::{chunk_documents, Document, KnowledgeGraph, MatchDecision, ModelError, Outcome};
use crate::prompts::Prompts;
use crate::relations::{
    build_global_relations, EndpointPolicy, EndpointResolution, RelationDecision, RelationMode,
    RelationOutcome, RelationStageOptions,
};

pub const GRAPH_JSON: &str = "graph.json";
pub const GRAPH_CYPHER: &str = "graph.cypher";
pub const REPORT_JSON: &str = "report.json";
pub const ENTITY_DECISIONS: &str = "entity_decisions.jsonl";
pub const RELATION_DECISIONS: &str = "relation_decisions.jsonl";
pub const OUTPUT_FILES: [&str; 5] = [
    GRAPH_JSON,
    GRAPH_CYPHER,
    REPORT_JSON,
    ENTITY_DECISIONS,
    RELATION_DECISIONS,
];

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("graph dimension {graph} does not match embedder dimension {embedder}")]
    DimensionMismatch { graph: usize, embedder: usize },
    #[error("graph file has no stored embeddings for {0}; it cannot be resumed")]
    MissingEmbeddings(String),
    #[error("run aborted during {stage}: {source}")]
    Aborted {
        stage: &'static str,
        source: BackendError,
        report: Box<RunReport>,
    },
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

/// Which language model and embedder a run uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BackendConfig {
    Remote(RemoteConfig),
    /// Fixture player plus a text-to-vector table.
    MockLookup {
        #[serde(default)]
        fixtures: Option<PathBuf>,
        lookup_table: PathBuf,
        /// Seed of a hash embedder used for texts missing from the table.
        #[serde(default)]
        fallback_seed: Option<u64>,
    },
    /// Fixture player plus seeded feature hashing.
    MockHash {
        #[serde(default)]
        fixtures: Option<PathBuf>,
        dimension: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl BackendConfig {
    fn files(&self) -> Vec<&Path> {
        match self {
            Self::Remote(_) => vec![],
            Self::MockLookup {
                fixtures,
                lookup_table,
                ..
            } => fixtures
                .iter()
                .map(PathBuf::as_path)
                .chain([lookup_table.as_path()])
                .collect(),
            Self::MockHash { fixtures, .. } => fixtures.iter().map(PathBuf::as_path).collect(),
        }
    }

    fn rebase(&mut self, base: &Path) {
        match self {
            Self::Remote(_) => {}
            Self::MockLookup {
                fixtures,
                lookup_table,
                ..
            } => {
                rebase(fixtures.as_mut(), base);
                rebase(Some(lookup_table), base);
            }
            Self::MockHash { fixtures, .. } => rebase(fixtures.as_mut(), base),
        }
    }

    pub fn is_mock(&self) -> bool {
        !matches!(self, Self::Remote(_))
    }
}

fn rebase(path: Option<&mut PathBuf>, base: &Path) {
    if let Some(path) = path {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

/// The model and embedder of a run.
#[derive(Clone)]
pub struct Backends {
    pub model: Arc<dyn LanguageModel>,
    pub embedder: Arc<dyn Embedder>,
}

impl std::fmt::Debug for Backends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backends")
            .field("dimension", &self.embedder.dimension())
            .finish_non_exhaustive()
    }
}

fn fixture_model(fixtures: &Option<PathBuf>) -> Result<Arc<dyn LanguageModel>, BackendError> {
    Ok(match fixtures {
        Some(path) => Arc::new(FixtureModel::from_file(path)?),
        None => Arc::new(FixtureModel::default()),
    })
}

impl Backends {
    pub fn from_config(config: &BackendConfig) -> Result<Self, BackendError> {
        match config {
            BackendConfig::Remote(remote) => {
                let backend = Arc::new(RemoteBackend::from_env(remote.clone()));
                Ok(Self {
                    model: backend.clone(),
                    embedder: backend,
                })
            }
            BackendConfig::MockLookup {
                fixtures,
                lookup_table,
                fallback_seed,
            } => {
                let mut table = LookupEmbedder::from_file(lookup_table)?;
                if let Some(seed) = fallback_seed {
                    let hash = HashEmbedder::new(table.dimension(), *seed)?;
                    table = table.with_fallback(Box::new(hash))?;
                }
                Ok(Self {
                    model: fixture_model(fixtures)?,
                    embedder: Arc::new(table),
                })
            }
            BackendConfig::MockHash {
                fixtures,
                dimension,
                seed,
            } => Ok(Self {
                model: fixture_model(fixtures)?,
                embedder: Arc::new(HashEmbedder::new(*dimension, *seed)?),
            }),
        }
    }
}

fn default_max_attempts() -> u32 {
    DEFAULT_MAX_RETRIES
}

fn default_concurrency() -> usize {
    4
}

fn default_true() -> bool {
    true
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Settings of a pipeline run. Relative paths in a config file are resolved
/// against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub blueprint: PathBuf,
    pub backend: BackendConfig,
    #[serde(default)]
    pub matcher: MatcherConfig,
    #[serde(default)]
    pub relation_mode: RelationMode,
    #[serde(default)]
    pub endpoint_policy: EndpointPolicy,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Split documents into chunks of at most this many characters.
    #[serde(default)]
    pub chunk_chars: Option<usize>,
    #[serde(default)]
    pub split_keys: bool,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    /// Upper bound on concurrent distillation calls.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_true")]
    pub include_provenance: bool,
    /// Remove entities without relations before export.
    #[serde(default)]
    pub prune_isolated: bool,
    #[serde(default)]
    pub prompts: Prompts,
}

impl PipelineConfig {
    pub fn new(blueprint: impl Into<PathBuf>, backend: BackendConfig) -> Self {
        Self {
            blueprint: blueprint.into(),
            backend,
            matcher: MatcherConfig::default(),
            relation_mode: RelationMode::default(),
            endpoint_policy: EndpointPolicy::default(),
            output_dir: default_output_dir(),
            chunk_chars: None,
            split_keys: false,
            max_attempts: DEFAULT_MAX_RETRIES,
            concurrency: default_concurrency(),
            include_provenance: true,
            prune_isolated: false,
            prompts: Prompts::default(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        if !path.is_file() {
            return Err(PipelineError::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let mut config: Self = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        rebase(Some(&mut config.blueprint), base);
        rebase(Some(&mut config.output_dir), base);
        config.backend.rebase(base);
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        for path in std::iter::once(self.blueprint.as_path()).chain(self.backend.files()) {
            if !path.is_file() {
                return Err(PipelineError::MissingFile(path.to_path_buf()));
            }
        }
        self.matcher
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.chunk_chars == Some(0) {
            return Err(PipelineError::Config("chunk size must be positive".into()));
        }
        if self.max_attempts == 0 || self.concurrency == 0 {
            return Err(PipelineError::Config(
                "max_attempts and concurrency must be positive".into(),
            ));
        }
        if let BackendConfig::MockHash { dimension: 0, .. } = self.backend {
            return Err(PipelineError::Config(
                "embedding dimension must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn load_blueprint(&self) -> Result<Blueprint, PipelineError> {
        Ok(Blueprint::from_file(&self.blueprint)?)
    }
}

/// Reads `*.txt` files from `dir`, in file-name order or in the order listed
/// by `manifest` (one file name per line; blank lines and `#` comments are
/// skipped). Document ids are file stems.
pub fn load_documents(dir: &Path, manifest: Option<&Path>) -> Result<Vec<Document>, PipelineError> {
    if !dir.is_dir() {
        return Err(PipelineError::MissingFile(dir.to_path_buf()));
    }
    let files: Vec<PathBuf> = match manifest {
        Some(manifest) => {
            let text = std::fs::read_to_string(manifest).map_err(|e| io_error(manifest, e))?;
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| dir.join(l))
                .collect()
        }
        None => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| io_error(dir, e))?
                .filter_map(Result::ok)
                .map(|entry| entry.path())
                .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
                .collect();
            files.sort();
            files
        }
    };
    files
        .iter()
        .enumerate()
        .map(|(ordinal, path)| {
            let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| {
                    PipelineError::Config(format!("bad document path {}", path.display()))
                })?;
            Ok(Document::new(id, text, ordinal))
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BlockCounts {
    pub block_id: String,
    pub local_entities: usize,
    pub exact: usize,
    pub merged: usize,
    pub inserted: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EntityCounts {
    /// Global entities before the run.
    pub before: usize,
    /// Local entities extracted across blocks, before merging.
    pub local: usize,
    pub exact: usize,
    pub merged: usize,
    pub inserted: usize,
    /// Relation endpoints added as entities.
    pub endpoint_inserted: usize,
    pub pruned: usize,
    pub after: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RelationCounts {
    pub before: usize,
    /// Triples handed to resolution, concept seeds included.
    pub raw: usize,
    pub exact: usize,
    pub merged: usize,
    pub inserted: usize,
    pub dropped: usize,
    pub after: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageTiming {
    pub stage: &'static str,
    pub elapsed: Duration,
}

/// Summary of a run. Timings are kept out of the serialized report so that
/// report files are reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub documents: usize,
    pub chunks: usize,
    pub blocks: usize,
    pub entities: EntityCounts,
    pub relations: RelationCounts,
    pub per_block: Vec<BlockCounts>,
    pub skipped: Vec<Skipped>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub timings: Vec<StageTiming>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

/// Final state of a run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub graph: KnowledgeGraph,
    pub report: RunReport,
    pub entity_decisions: Vec<MatchDecision>,
    pub relation_decisions: Vec<RelationDecision>,
}

fn abort(stage: &'static str, e: PipelineError, report: &RunReport) -> PipelineError {
    match e {
        PipelineError::Backend(source @ BackendError::Unreachable(_))
        | PipelineError::Distill(DistillError::Backend(source @ BackendError::Unreachable(_)))
        | PipelineError::Match(MatchError::Backend(source @ BackendError::Unreachable(_))) => {
            PipelineError::Aborted {
                stage,
                source,
                report: Box::new(report.clone()),
            }
        }
        e => e,
    }
}

fn count<T>(items: &[T], f: impl Fn(&T) -> bool) -> usize {
    items.iter().filter(|i| f(i)).count()
}

/// Processes `documents` against `graph` (or a fresh graph). An unreachable
/// backend aborts with the report gathered so far; per-block failures are
/// recorded and skipped.
pub fn run_pipeline(
    documents: &[Document],
    config: &PipelineConfig,
    backends: &Backends,
    graph: Option<KnowledgeGraph>,
) -> Result<PipelineRun, PipelineError> {
    config.validate()?;
    let blueprint = config.load_blueprint()?;
    let mut graph = match graph {
        Some(g) => g,
        None => KnowledgeGraph::new(backends.embedder.dimension())?,
    };
    if graph.dimension() != backends.embedder.dimension() {
        return Err(PipelineError::DimensionMismatch {
            graph: graph.dimension(),
            embedder: backends.embedder.dimension(),
        });
    }
    let mut report = RunReport {
        documents: documents.len(),
        ..RunReport::default()
    };
    report.entities.before = graph.entities().len();
    report.relations.before = graph.relations().len();

    let started = Instant::now();
    let chunks = match config.chunk_chars {
        Some(n) => chunk_documents(documents, n),
        None => documents.to_vec(),
    };
    report.chunks = chunks.len();
    let options = DistillOptions {
        split_keys: config.split_keys,
        max_attempts: config.max_attempts,
        concurrency: config.concurrency,
    };
    let distilled = distill(
        &chunks,
        &blueprint,
        &*backends.model,
        &config.prompts,
        &options,
    )
    .map_err(|e| abort("distill", e.into(), &report))?;
    report.blocks = distilled.blocks.len();
    report.skipped.extend(distilled.report.skipped);
    report.warnings.extend(distilled.report.warnings);
    report.timings.push(StageTiming {
        stage: "distill",
        elapsed: started.elapsed(),
    });

    let started = Instant::now();
    let entity_options = EntityStageOptions {
        prompts: &config.prompts,
        max_attempts: config.max_attempts,
        blueprint: Some(&blueprint),
    };
    let entities = build_global_entities(
        &distilled.blocks,
        &*backends.model,
        &*backends.embedder,
        &config.matcher,
        &mut graph,
        &entity_options,
    )
    .map_err(|e| abort("entities", e.into(), &report))?;
    report.skipped.extend(entities.skipped.iter().cloned());
    report.warnings.extend(entities.warnings.iter().cloned());
    let decisions = &entities.decisions;
    report.entities.local = entities.local_count;
    report.entities.exact = count(decisions, |d| d.outcome == Outcome::Exact);
    report.entities.merged = count(decisions, |d| d.outcome == Outcome::Merged);
    report.entities.inserted = count(decisions, |d| d.outcome == Outcome::Inserted);
    let mut offset = 0;
    for block in &entities.blocks {
        let slice = &decisions[offset..offset + block.matched_keys.len()];
        offset += slice.len();
        report.per_block.push(BlockCounts {
            block_id: block.block_id.clone(),
            local_entities: block.matched_keys.len(),
            exact: count(slice, |d| d.outcome == Outcome::Exact),
            merged: count(slice, |d| d.outcome == Outcome::Merged),
            inserted: count(slice, |d| d.outcome == Outcome::Inserted),
        });
    }
    report.timings.push(StageTiming {
        stage: "entities",
        elapsed: started.elapsed(),
    });

    let started = Instant::now();
    let relation_options = RelationStageOptions {
        mode: config.relation_mode,
        policy: config.endpoint_policy,
        prompts: &config.prompts,
        max_attempts: config.max_attempts,
        blueprint: Some(&blueprint),
    };
    let relations = build_global_relations(
        &distilled.blocks,
        &entities.blocks,
        &mut graph,
        &*backends.model,
        &*backends.embedder,
        &config.matcher,
        &relation_options,
    )
    .map_err(|e| abort("relations", e.into(), &report))?;
    report.skipped.extend(relations.skipped.iter().cloned());
    let rd = &relations.decisions;
    report.relations.raw = relations.raw_count;
    report.relations.exact = count(rd, |d| d.outcome == RelationOutcome::Exact);
    report.relations.merged = count(rd, |d| d.outcome == RelationOutcome::Merged);
    report.relations.inserted = count(rd, |d| d.outcome == RelationOutcome::Inserted);
    report.relations.dropped = count(rd, |d| d.outcome == RelationOutcome::Dropped);
    report.entities.endpoint_inserted = rd
        .iter()
        .flat_map(|d| [&d.subject_endpoint, &d.object_endpoint])
        .filter(|e| e.resolution == EndpointResolution::Inserted)
        .count();
    report.timings.push(StageTiming {
        stage: "relations",
        elapsed: started.elapsed(),
    });

    if config.prune_isolated {
        report.entities.pruned = graph.prune_isolated();
    }
    report.entities.after = graph.entities().len();
    report.relations.after = graph.relations().len();
    graph.validate()?;
    Ok(PipelineRun {
        graph,
        report,
        entity_decisions: entities.decisions,
        relation_decisions: relations.decisions,
    })
}

/// Loads a graph written by [`write_outputs`] for further processing.
pub fn load_resumable_graph(
    path: &Path,
    embedder_dimension: usize,
) -> Result<KnowledgeGraph, PipelineError> {
    if !path.is_file() {
        return Err(PipelineError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let graph = parse_graph_json(&text)?;
    if graph.dimension() != embedder_dimension {
        return Err(PipelineError::DimensionMismatch {
            graph: graph.dimension(),
            embedder: embedder_dimension,
        });
    }
    if let Some(e) = graph.entities().iter().find(|e| e.embedding().is_none()) {
        return Err(PipelineError::MissingEmbeddings(format!(
            "entity `{}`",
            e.key()
        )));
    }
    if let Some(r) = graph.relations().iter().find(|r| r.embedding().is_none()) {
        return Err(PipelineError::MissingEmbeddings(format!(
            "relation {}",
            r.key()
        )));
    }
    Ok(graph)
}

/// Continues from a saved graph as if the earlier run had not stopped.
pub fn resume(
    graph_path: &Path,
    documents: &[Document],
    config: &PipelineConfig,
    backends: &Backends,
) -> Result<PipelineRun, PipelineError> {
    let graph = load_resumable_graph(graph_path, backends.embedder.dimension())?;
    run_pipeline(documents, config, backends, Some(graph))
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("decision serializes") + "\n")
        .collect()
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), PipelineError> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| io_error(&path, e))
}

/// Writes the five run artifacts into `dir`. The graph JSON always carries
/// embeddings so the run can be resumed.
pub fn write_outputs(
    run: &PipelineRun,
    dir: &Path,
    include_provenance: bool,
) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let options = ExportOptions {
        include_embeddings: true,
        include_provenance,
        ..ExportOptions::default()
    };
    write(dir, GRAPH_JSON, &emit_graph_json(&run.graph, &options))?;
    write(
        dir,
        GRAPH_CYPHER,
        &emit_cypher(&run.graph, include_provenance),
    )?;
    write(dir, REPORT_JSON, &run.report.to_json())?;
    write(dir, ENTITY_DECISIONS, &jsonl(&run.entity_decisions))?;
    write(dir, RELATION_DECISIONS, &jsonl(&run.relation_decisions))?;
    Ok(())
}

/// Writes only the report, for runs that aborted.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    write(dir, REPORT_JSON, &report.to_json())
}
