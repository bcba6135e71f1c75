//! Vector indexes over a frozen graph and on-disk persistence.

mod persist;
mod vector;

pub use persist::{load_graph, load_store, save_graph, save_store, StoreError, StoreMeta, VectorsMeta, SCHEMA_VERSION};
pub use vector::{cosine, IndexError, VectorIndex};

use crate::client::EmbedClient;
use crate::model::{ChunkId, KnowledgeGraph, PropId, QuadId};
use crate::scalar::Scalar;

/// Embeds every proposition of `graph` (raw proposition text).
pub fn build_vector_index<T: Scalar, E: EmbedClient + ?Sized>(
    graph: &KnowledgeGraph,
    embedder: &E,
) -> Result<VectorIndex<PropId, T>, IndexError> {
    let mut index = VectorIndex::new(embedder.dim());
    refresh_proposition_index(&mut index, graph, embedder)?;
    Ok(index)
}

/// Embeds only propositions missing from `index`; returns the number embedded.
pub fn refresh_proposition_index<T: Scalar, E: EmbedClient + ?Sized>(
    index: &mut VectorIndex<PropId, T>,
    graph: &KnowledgeGraph,
    embedder: &E,
) -> Result<usize, IndexError> {
    index.sync(graph.propositions().map(|p| (p.prop_id.clone(), p.text.as_str())), embedder)
}

/// Embeds every chunk's original text.
pub fn build_chunk_index<T: Scalar, E: EmbedClient + ?Sized>(
    graph: &KnowledgeGraph,
    embedder: &E,
) -> Result<VectorIndex<ChunkId, T>, IndexError> {
    let mut index = VectorIndex::new(embedder.dim());
    index.sync(graph.chunks().map(|c| (c.chunk_id.clone(), c.text.as_str())), embedder)?;
    Ok(index)
}

/// Embeds every quadruplet in its canonical `head | predicate | tail` form.
pub fn build_triplet_index<T: Scalar, E: EmbedClient + ?Sized>(
    graph: &KnowledgeGraph,
    embedder: &E,
) -> Result<VectorIndex<QuadId, T>, IndexError> {
    let texts: Vec<(QuadId, String)> =
        graph.quadruplets().iter().map(|q| (q.quad_id.clone(), graph.triplet_text(q))).collect();
    let mut index = VectorIndex::new(embedder.dim());
    index.sync(texts.iter().map(|(k, t)| (k.clone(), t.as_str())), embedder)?;
    Ok(index)
}

/// Proposition and chunk indexes built together at store-build time.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphIndexes<T = f64> {
    pub propositions: VectorIndex<PropId, T>,
    pub chunks: VectorIndex<ChunkId, T>,
}

impl<T: Scalar> GraphIndexes<T> {
    pub fn build<E: EmbedClient + ?Sized>(graph: &KnowledgeGraph, embedder: &E) -> Result<Self, IndexError> {
        Ok(Self { propositions: build_vector_index(graph, embedder)?, chunks: build_chunk_index(graph, embedder)? })
    }

    pub fn dim(&self) -> usize {
        self.propositions.dim().max(self.chunks.dim())
    }
}
