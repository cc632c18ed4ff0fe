#![allow(dead_code)]

use std::path::PathBuf;

use kgforge::pipeline::{load_documents, PipelineError};
use kgforge::{
    run_pipeline, Backends, Document, KnowledgeGraph, PipelineConfig, PipelineRun, RelationMode,
};
use serde::Deserialize;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn corpus() -> PathBuf {
    fixtures().join("corpus")
}

pub fn config(mode: RelationMode) -> PipelineConfig {
    let mut config = PipelineConfig::from_file(&corpus().join("config.json")).unwrap();
    config.relation_mode = mode;
    config
}

pub fn backends(config: &PipelineConfig) -> Backends {
    Backends::from_config(&config.backend).unwrap()
}

pub fn documents() -> Vec<Document> {
    load_documents(&corpus().join("docs"), None).unwrap()
}

/// Re-numbers a slice of documents so it can be run on its own.
pub fn renumber(docs: &[Document]) -> Vec<Document> {
    docs.iter()
        .enumerate()
        .map(|(i, d)| Document::new(d.id.clone(), d.text.clone(), i))
        .collect()
}

pub fn run(
    mode: RelationMode,
    docs: &[Document],
    graph: Option<KnowledgeGraph>,
) -> Result<PipelineRun, PipelineError> {
    let config = config(mode);
    run_pipeline(docs, &config, &backends(&config), graph)
}

pub fn entity_keys(graph: &KnowledgeGraph) -> Vec<String> {
    graph
        .entities()
        .iter()
        .map(|e| e.key().to_string())
        .collect()
}

pub fn relation_keys(graph: &KnowledgeGraph) -> Vec<[String; 3]> {
    graph
        .relations()
        .iter()
        .map(|r| {
            let k = r.key();
            [k.subject, k.predicate, k.object]
        })
        .collect()
}

#[derive(Debug, Deserialize)]
pub struct ExpectedEntityDecision {
    pub document_id: String,
    pub local_name: String,
    pub outcome: String,
    pub target_key: String,
    pub similarity: Option<f64>,
}

#[derive(Debug, Deserialize)]
pub struct ExpectedRelationDecision {
    pub document_id: String,
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub subject_resolution: String,
    pub object_resolution: String,
    pub outcome: String,
    pub target: Option<[String; 3]>,
}

/// Output of the reference resolver in `fixtures/generate.py`.
#[derive(Debug, Deserialize)]
pub struct Expected {
    pub entities: Vec<String>,
    pub relations: Vec<[String; 3]>,
    pub entity_decisions: Vec<ExpectedEntityDecision>,
    pub relation_outcomes: Vec<ExpectedRelationDecision>,
}

pub fn expected(mode: RelationMode) -> Expected {
    let name = match mode {
        RelationMode::Local => "expected_local.json",
        RelationMode::Global => "expected_global.json",
    };
    serde_json::from_str(&std::fs::read_to_string(corpus().join(name)).unwrap()).unwrap()
}

pub fn to_json<T: serde::Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).unwrap()
}

/// Compares a run against the reference output. Similarities must agree
/// within `tolerance`; everything else exactly.
pub fn check_against_reference(
    run: &PipelineRun,
    expected: &Expected,
    tolerance: f64,
) -> Result<(), String> {
    if entity_keys(&run.graph) != expected.entities {
        return Err(format!("entity keys differ: {:?}", entity_keys(&run.graph)));
    }
    if relation_keys(&run.graph) != expected.relations {
        return Err(format!(
            "relation keys differ: {:?}",
            relation_keys(&run.graph)
        ));
    }
    if run.entity_decisions.len() != expected.entity_decisions.len() {
        return Err("entity decision counts differ".into());
    }
    for (got, want) in run.entity_decisions.iter().zip(&expected.entity_decisions) {
        let g = to_json(got);
        let same = g["document_id"] == want.document_id.as_str()
            && g["local_name"] == want.local_name.as_str()
            && g["outcome"] == want.outcome.as_str()
            && g["target_key"] == want.target_key.as_str()
            && match (got.similarity, want.similarity) {
                (None, None) => true,
                (Some(a), Some(b)) => (a - b).abs() <= tolerance,
                _ => false,
            };
        if !same {
            return Err(format!("entity decision {g} differs from {want:?}"));
        }
    }
    if run.relation_decisions.len() != expected.relation_outcomes.len() {
        return Err("relation decision counts differ".into());
    }
    for (got, want) in run
        .relation_decisions
        .iter()
        .zip(&expected.relation_outcomes)
    {
        let g = to_json(got);
        let target = got
            .target
            .as_ref()
            .map(|k| [k.subject.clone(), k.predicate.clone(), k.object.clone()]);
        let same = got.document_id == want.document_id
            && got.subject == want.subject
            && got.predicate == want.predicate
            && got.object == want.object
            && g["subject_endpoint"]["resolution"] == want.subject_resolution.as_str()
            && g["object_endpoint"]["resolution"] == want.object_resolution.as_str()
            && g["outcome"] == want.outcome.as_str()
            && target == want.target;
        if !same {
            return Err(format!("relation decision {g} differs from {want:?}"));
        }
    }
    Ok(())
}
