//! Synthetic workloads for the matching benchmarks.

use kgforge::{Embedder, Entity, HashEmbedder, KnowledgeGraph};

pub const DIMENSION: usize = 256;

/// `count` distinct embedded entities named `prefix 0`, `prefix 1`, ...
pub fn entities(prefix: &str, count: usize, embedder: &HashEmbedder) -> Vec<Entity> {
    let names: Vec<String> = (0..count).map(|i| format!("{prefix} {i}")).collect();
    let vectors = embedder.embed(&names).expect("hash embedder is infallible");
    names
        .into_iter()
        .zip(vectors)
        .map(|(name, v)| {
            Entity::new(name, Some("Thing".into()))
                .expect("non-empty name")
                .with_embedding(v)
                .with_provenance("bench")
        })
        .collect()
}

/// A graph already holding `size` entities.
pub fn seeded_graph(size: usize, embedder: &HashEmbedder) -> KnowledgeGraph {
    let mut graph = KnowledgeGraph::new(DIMENSION).expect("positive dimension");
    for entity in entities("stored entity", size, embedder) {
        graph.insert_entity(entity).expect("distinct keys");
    }
    graph
}

pub fn embedder() -> HashEmbedder {
    HashEmbedder::new(DIMENSION, 7).expect("positive dimension")
}
