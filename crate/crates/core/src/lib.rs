//! Ontology-free knowledge-graph synthesis, proposition-entity graph
//! retrieval and coverage/retrieval evaluation.
//!
//! All language-model and embedding calls go through [`ChatClient`] and
//! [`EmbedClient`]; [`client::mock`] provides deterministic offline doubles.
//!
//! Vector code is generic over the scalar type (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod chunker;
pub mod client;
pub mod eval;
pub mod extraction;
pub mod model;
pub mod prompts;
pub mod retriever;
pub mod scalar;
pub mod store;
pub mod text;

pub use client::{ChatClient, ChatRequest, ClientError, EmbedClient, EmbeddingVector};
pub use eval::{CoverageReport, GroundTruthTriplet};
pub use extraction::{FactRecord, SynthesisConfig, SynthesisMode};
pub use model::{
    Chunk, ChunkId, DocId, Document, EntityId, EntityNode, GraphBuilder, KnowledgeGraph, ModelError, NodeRef, PropId,
    Proposition, QuadId, Quadruplet,
};
pub use retriever::{GraphRetrieverConfig, RetrievalMode, RetrievalResult};
pub use scalar::Scalar;
pub use store::{GraphIndexes, VectorIndex};

pub type Embedding = EmbeddingVector<f64>;
pub type Embedding32 = EmbeddingVector<f32>;
pub type PropositionIndex = VectorIndex<PropId, f64>;
pub type PropositionIndex32 = VectorIndex<PropId, f32>;
pub type ChunkIndex = VectorIndex<ChunkId, f64>;
pub type ChunkIndex32 = VectorIndex<ChunkId, f32>;
pub type TripletIndex = VectorIndex<QuadId, f64>;
pub type TripletIndex32 = VectorIndex<QuadId, f32>;
