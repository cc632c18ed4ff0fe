mod common;

use std::collections::BTreeSet;

use common::*;
use kgforge::metrics::MetricsInput;
use kgforge::pipeline::{load_resumable_graph, resume, write_outputs, PipelineError, GRAPH_JSON};
use kgforge::{emit_graph_json, ExportOptions, RelationMode};

#[test]
fn local_mode_matches_reference() {
    let run = run(RelationMode::Local, &documents(), None).unwrap();
    check_against_reference(&run, &expected(RelationMode::Local), 1e-12).unwrap();
}

#[test]
fn global_mode_matches_reference() {
    let run = run(RelationMode::Global, &documents(), None).unwrap();
    check_against_reference(&run, &expected(RelationMode::Global), 1e-12).unwrap();
}

#[test]
fn local_relations_are_contained_in_global() {
    let local = run(RelationMode::Local, &documents(), None).unwrap();
    let global = run(RelationMode::Global, &documents(), None).unwrap();
    let l: BTreeSet<_> = relation_keys(&local.graph).into_iter().collect();
    let g: BTreeSet<_> = relation_keys(&global.graph).into_iter().collect();
    assert!(l.is_subset(&g));
    assert!(g.len() > l.len());
}

#[test]
fn report_counts_add_up() {
    let run = run(RelationMode::Local, &documents(), None).unwrap();
    let r = &run.report;
    assert_eq!((r.documents, r.blocks), (5, 5));
    for block in &r.per_block {
        assert_eq!(
            block.exact + block.merged + block.inserted,
            block.local_entities
        );
    }
    assert_eq!(
        r.entities.exact + r.entities.merged + r.entities.inserted,
        r.entities.local
    );
    assert!(
        r.entities.after <= r.entities.before + r.entities.local + r.entities.endpoint_inserted
    );
    assert_eq!(
        r.relations.exact + r.relations.merged + r.relations.inserted + r.relations.dropped,
        r.relations.raw
    );
    assert_eq!(r.relations.dropped, 1);
    assert!(r.skipped.is_empty() && r.warnings.is_empty());
}

#[test]
fn fixture_resolution_fdr_is_zero() {
    let input = MetricsInput::from_file(&corpus().join("metrics.json")).unwrap();
    let labels = input.labels.unwrap();
    for mode in [RelationMode::Local, RelationMode::Global] {
        let run = run(mode, &documents(), None).unwrap();
        assert_eq!(labels.entity_fdr(&run.graph).fdr, Some(0.0));
        assert_eq!(labels.relation_fdr(&run.graph).fdr, Some(0.0));
    }
}

#[test]
fn rerun_adds_nothing() {
    let first = run(RelationMode::Global, &documents(), None).unwrap();
    let before = first.graph.clone();
    let second = run(RelationMode::Global, &documents(), Some(first.graph)).unwrap();
    assert_eq!(entity_keys(&second.graph), entity_keys(&before));
    assert_eq!(relation_keys(&second.graph), relation_keys(&before));
    assert!(second
        .entity_decisions
        .iter()
        .all(|d| d.outcome == kgforge::Outcome::Exact));
    assert_eq!(
        second.report.entities.inserted + second.report.relations.inserted,
        0
    );
}

#[test]
fn split_resume_equals_single_run() {
    let docs = documents();
    let dir = tempfile::tempdir().unwrap();
    for mode in [RelationMode::Local, RelationMode::Global] {
        let single = run(mode, &docs, None).unwrap();
        let head = run(mode, &docs[..3], None).unwrap();
        write_outputs(&head, dir.path(), true).unwrap();
        let config = config(mode);
        let tail = resume(
            &dir.path().join(GRAPH_JSON),
            &renumber(&docs[3..]),
            &config,
            &backends(&config),
        )
        .unwrap();
        assert_eq!(entity_keys(&tail.graph), entity_keys(&single.graph));
        assert_eq!(relation_keys(&tail.graph), relation_keys(&single.graph));
        let options = ExportOptions {
            include_embeddings: true,
            ..ExportOptions::default()
        };
        assert_eq!(
            emit_graph_json(&tail.graph, &options),
            emit_graph_json(&single.graph, &options)
        );
    }
}

#[test]
fn empty_resume_leaves_graph_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let first = run(RelationMode::Local, &documents(), None).unwrap();
    write_outputs(&first, dir.path(), true).unwrap();
    let path = dir.path().join(GRAPH_JSON);
    let before = std::fs::read(&path).unwrap();
    let config = config(RelationMode::Local);
    let again = resume(&path, &[], &config, &backends(&config)).unwrap();
    write_outputs(&again, dir.path(), true).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), before);
}

#[test]
fn resume_rejects_wrong_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let first = run(RelationMode::Local, &documents()[..1], None).unwrap();
    write_outputs(&first, dir.path(), true).unwrap();
    let mut config = config(RelationMode::Local);
    config.backend = kgforge::BackendConfig::MockHash {
        fixtures: None,
        dimension: 32,
        seed: 1,
    };
    let err = resume(
        &dir.path().join(GRAPH_JSON),
        &[],
        &config,
        &backends(&config),
    )
    .unwrap_err();
    assert!(matches!(
        err,
        PipelineError::DimensionMismatch {
            graph: 64,
            embedder: 32
        }
    ));
}

#[test]
fn resume_requires_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let first = run(RelationMode::Local, &documents()[..1], None).unwrap();
    let path = dir.path().join("plain.json");
    std::fs::write(
        &path,
        emit_graph_json(&first.graph, &ExportOptions::default()),
    )
    .unwrap();
    assert!(matches!(
        load_resumable_graph(&path, 64),
        Err(PipelineError::MissingEmbeddings(_))
    ));
    std::fs::write(&path, "{\"dimension\": 64").unwrap();
    assert!(load_resumable_graph(&path, 64).is_err());
}

#[test]
fn zero_documents_give_empty_graph() {
    let run = run(RelationMode::Local, &[], None).unwrap();
    assert!(run.graph.is_empty());
    assert_eq!(run.report.documents, 0);
    assert_eq!(run.report.entities.after + run.report.relations.after, 0);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let run = run(RelationMode::Global, &documents(), None).unwrap();
        write_outputs(&run, dir.path(), true).unwrap();
    }
    for name in kgforge::pipeline::OUTPUT_FILES {
        let x = std::fs::read(a.path().join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(name)).unwrap(), "{name}");
        assert!(!x.contains(&b'\r'));
    }
}

#[test]
fn split_blocks_without_fixtures_keep_concept_seeds() {
    // per-key block ids have no fixture entries, so only concept seeds remain
    let mut config = config(RelationMode::Local);
    config.split_keys = true;
    let run = kgforge::run_pipeline(&documents(), &config, &backends(&config), None).unwrap();
    run.graph.validate().unwrap();
    assert_eq!(run.report.per_block.len(), run.report.blocks);
    assert!(run.report.blocks > 5);
    // five documents, five names, three distinct job titles
    assert_eq!(run.graph.entities().len(), 13);
    assert_eq!(run.graph.relations().len(), 10);
}

#[test]
fn chunked_run_equals_whole_document_run() {
    // answer distillation on the first chunk of each document only
    let mut fixtures: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(corpus().join("llm_fixtures.json")).unwrap())
            .unwrap();
    let ids: Vec<String> = fixtures.keys().cloned().collect();
    for id in ids {
        let distill = fixtures[&id]["distill"].clone();
        fixtures.insert(
            format!("{id}#c0"),
            serde_json::json!({ "distill": distill }),
        );
        fixtures[&id].as_object_mut().unwrap().remove("distill");
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixtures.json");
    std::fs::write(&path, serde_json::to_string(&fixtures).unwrap()).unwrap();

    let mut config = config(RelationMode::Local);
    config.chunk_chars = Some(40);
    if let kgforge::BackendConfig::MockLookup { fixtures, .. } = &mut config.backend {
        *fixtures = Some(path);
    }
    let chunked = kgforge::run_pipeline(&documents(), &config, &backends(&config), None).unwrap();
    let whole = run(RelationMode::Local, &documents(), None).unwrap();
    assert!(chunked.report.chunks > 10);
    assert_eq!(chunked.report.blocks, 5);
    assert_eq!(entity_keys(&chunked.graph), entity_keys(&whole.graph));
    assert_eq!(relation_keys(&chunked.graph), relation_keys(&whole.graph));
}
