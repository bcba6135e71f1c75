//! Domain types and the in-memory proposition-entity knowledge graph.
//!
//! A graph is assembled through [`GraphBuilder`] by a single writer and then
//! frozen into an immutable [`KnowledgeGraph`], which validates referential
//! integrity and derives the entity/proposition adjacency once.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text::normalize_name;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_type!(/// Corpus-unique document identifier.
    DocId);
id_type!(/// Chunk identifier, a content hash of (doc_id, index).
    ChunkId);
id_type!(/// Entity identifier, a content hash of the normalized name.
    EntityId);
id_type!(/// Proposition identifier, a content hash of (chunk_id, ordinal).
    PropId);
id_type!(/// Quadruplet identifier, a content hash of (chunk_id, ordinal).
    QuadId);

fn content_hash(prefix: &str, parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update([0x1f]);
        }
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    format!("{prefix}{hex}")
}

impl ChunkId {
    pub fn derive(doc_id: &DocId, index: usize) -> Self {
        Self(content_hash("c", &[doc_id.as_str(), &index.to_string()]))
    }
}

impl EntityId {
    pub fn derive(normalized_name: &str) -> Self {
        Self(content_hash("e", &[normalized_name]))
    }
}

impl PropId {
    pub fn derive(chunk_id: &ChunkId, ordinal: usize) -> Self {
        Self(content_hash("p", &[chunk_id.as_str(), &ordinal.to_string()]))
    }
}

impl QuadId {
    pub fn derive(chunk_id: &ChunkId, ordinal: usize) -> Self {
        Self(content_hash("q", &[chunk_id.as_str(), &ordinal.to_string()]))
    }
}

/// Renders a triplet in the canonical `head | predicate | tail` form used for
/// embedding and token comparison.
pub fn canonical_triplet(head: &str, predicate: &str, tail: &str) -> String {
    format!("{head} | {predicate} | {tail}")
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid entity: {0}")]
    InvalidEntity(String),
    #[error("invalid document {doc_id:?}: {reason}")]
    InvalidDocument { doc_id: String, reason: String },
    #[error("{kind} {id} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("{record} references missing {field} {id}")]
    DanglingReference { record: String, field: &'static str, id: String },
    #[error("duplicate {kind} {id}")]
    Duplicate { kind: &'static str, id: String },
    #[error("invalid record {record}: {reason}")]
    InvalidRecord { record: String, reason: String },
}

impl ModelError {
    /// Identifier of the record that violated an invariant, when known.
    pub fn record(&self) -> Option<&str> {
        match self {
            ModelError::DanglingReference { record, .. } | ModelError::InvalidRecord { record, .. } => Some(record),
            ModelError::Duplicate { id, .. } | ModelError::NotFound { id, .. } => Some(id),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: DocId,
    pub text: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Document {
    pub fn new(doc_id: impl Into<DocId>, text: impl Into<String>) -> Self {
        Self { doc_id: doc_id.into(), text: text.into(), metadata: BTreeMap::new() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.doc_id.0.trim().is_empty() {
            return Err(ModelError::InvalidDocument { doc_id: self.doc_id.0.clone(), reason: "empty doc_id".into() });
        }
        if self.text.trim().is_empty() {
            return Err(ModelError::InvalidDocument { doc_id: self.doc_id.0.clone(), reason: "empty text".into() });
        }
        Ok(())
    }
}

/// A contiguous, non-overlapping slice of a document.
///
/// `rouge_f1` is recorded for every chunk that went through
/// decontextualization; `decontextualized_text` is kept only when the rewrite
/// passed the drift threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: ChunkId,
    pub doc_id: DocId,
    pub index: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decontextualized_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rouge_f1: Option<f64>,
    #[serde(default)]
    pub drift_rejected: bool,
    pub token_count: usize,
}

impl Chunk {
    /// Text used downstream: the accepted rewrite if any, else the original.
    pub fn effective_text(&self) -> &str {
        self.decontextualized_text.as_deref().unwrap_or(&self.text)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let bad =
            |reason: &str| ModelError::InvalidRecord { record: self.chunk_id.0.clone(), reason: reason.to_string() };
        if self.text.is_empty() {
            return Err(bad("empty text"));
        }
        if self.index == 0 && (self.decontextualized_text.is_some() || self.rouge_f1.is_some()) {
            return Err(bad("first chunk carries a rewrite"));
        }
        if let Some(score) = self.rouge_f1 {
            if !(0.0..=1.0).contains(&score) {
                return Err(bad("rouge_f1 outside [0, 1]"));
            }
        } else if self.decontextualized_text.is_some() || self.drift_rejected {
            return Err(bad("rewrite state without rouge_f1"));
        }
        if self.drift_rejected && self.decontextualized_text.is_some() {
            return Err(bad("drift-rejected chunk keeps its rewrite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityNode {
    pub entity_id: EntityId,
    pub name: String,
    pub type_label: String,
    pub normalized_name: String,
}

/// Type label given to entities that only appear as triplet endpoints.
pub const UNKNOWN_TYPE: &str = "unknown";

impl EntityNode {
    pub fn new(name: &str, type_label: &str) -> Result<Self, ModelError> {
        let normalized_name = normalize_name(name);
        if normalized_name.is_empty() {
            return Err(ModelError::InvalidEntity("empty name".into()));
        }
        let type_label = type_label.trim();
        Ok(Self {
            entity_id: EntityId::derive(&normalized_name),
            name: name.split_whitespace().collect::<Vec<_>>().join(" "),
            type_label: if type_label.is_empty() { UNKNOWN_TYPE.into() } else { type_label.into() },
            normalized_name,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposition {
    pub prop_id: PropId,
    pub text: String,
    pub chunk_id: ChunkId,
    /// Position among the propositions of the same chunk.
    pub ordinal: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quadruplet {
    pub quad_id: QuadId,
    pub source: EntityId,
    pub predicate: String,
    pub target: EntityId,
    pub prop_id: PropId,
    pub chunk_id: ChunkId,
    /// Position among the quadruplets of the same chunk.
    pub ordinal: usize,
}

/// A node of the bipartite entity/proposition graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum NodeRef {
    Entity(EntityId),
    Proposition(PropId),
}

/// Mutable graph under assembly.
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    entities: BTreeMap<EntityId, EntityNode>,
    propositions: BTreeMap<PropId, Proposition>,
    quadruplets: Vec<Quadruplet>,
    quad_ids: BTreeSet<QuadId>,
    chunks: BTreeMap<ChunkId, Chunk>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `candidate` or unifies it with the existing node sharing its
    /// normalized name, returning the surviving id.
    ///
    /// On a match the longer surface name is kept, and an `unknown` type is
    /// upgraded to the candidate's type.
    pub fn merge_entity(&mut self, candidate: EntityNode) -> Result<EntityId, ModelError> {
        if candidate.name.trim().is_empty() || candidate.normalized_name.is_empty() {
            return Err(ModelError::InvalidEntity("empty name".into()));
        }
        let id = EntityId::derive(&candidate.normalized_name);
        match self.entities.get_mut(&id) {
            Some(existing) => {
                if candidate.name.chars().count() > existing.name.chars().count() {
                    existing.name = candidate.name;
                }
                if existing.type_label == UNKNOWN_TYPE && candidate.type_label != UNKNOWN_TYPE {
                    existing.type_label = candidate.type_label;
                }
            }
            None => {
                let node = EntityNode { entity_id: id.clone(), ..candidate };
                self.entities.insert(id.clone(), node);
            }
        }
        Ok(id)
    }

    pub fn add_chunk(&mut self, chunk: Chunk) -> Result<(), ModelError> {
        chunk.validate()?;
        if self.chunks.contains_key(&chunk.chunk_id) {
            return Err(ModelError::Duplicate { kind: "chunk", id: chunk.chunk_id.0 });
        }
        self.chunks.insert(chunk.chunk_id.clone(), chunk);
        Ok(())
    }

    pub fn add_proposition(&mut self, prop: Proposition) -> Result<(), ModelError> {
        if prop.text.trim().is_empty() {
            return Err(ModelError::InvalidRecord { record: prop.prop_id.0, reason: "empty text".into() });
        }
        if !self.chunks.contains_key(&prop.chunk_id) {
            return Err(ModelError::DanglingReference {
                record: prop.prop_id.0,
                field: "chunk_id",
                id: prop.chunk_id.0,
            });
        }
        if self.propositions.contains_key(&prop.prop_id) {
            return Err(ModelError::Duplicate { kind: "proposition", id: prop.prop_id.0 });
        }
        self.propositions.insert(prop.prop_id.clone(), prop);
        Ok(())
    }

    pub fn add_quadruplet(&mut self, quad: Quadruplet) -> Result<(), ModelError> {
        check_quadruplet(&quad, &self.entities, &self.propositions, &self.chunks)?;
        if !self.quad_ids.insert(quad.quad_id.clone()) {
            return Err(ModelError::Duplicate { kind: "quadruplet", id: quad.quad_id.0 });
        }
        self.quadruplets.push(quad);
        Ok(())
    }

    /// Removes a proposition that ended up without quadruplets.
    pub fn remove_proposition(&mut self, prop_id: &PropId) -> Option<Proposition> {
        if self.quadruplets.iter().any(|q| &q.prop_id == prop_id) {
            return None;
        }
        self.propositions.remove(prop_id)
    }

    pub fn entity(&self, id: &EntityId) -> Option<&EntityNode> {
        self.entities.get(id)
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    /// Merges a frozen graph into this builder. Entities unify by normalized
    /// name; chunk, proposition and quadruplet ids must not collide.
    pub fn absorb(&mut self, other: &KnowledgeGraph) -> Result<(), ModelError> {
        for chunk in other.chunks.values() {
            self.add_chunk(chunk.clone())?;
        }
        for entity in other.entities.values() {
            self.merge_entity(entity.clone())?;
        }
        for prop in other.propositions.values() {
            self.add_proposition(prop.clone())?;
        }
        for quad in &other.quadruplets {
            self.add_quadruplet(quad.clone())?;
        }
        Ok(())
    }

    /// Validates invariants and derives adjacency, producing an immutable graph.
    pub fn freeze(self) -> Result<KnowledgeGraph, ModelError> {
        KnowledgeGraph::from_parts(
            self.entities.into_values().collect(),
            self.propositions.into_values().collect(),
            self.quadruplets,
            self.chunks.into_values().collect(),
        )
    }
}

fn check_quadruplet(
    quad: &Quadruplet,
    entities: &BTreeMap<EntityId, EntityNode>,
    propositions: &BTreeMap<PropId, Proposition>,
    chunks: &BTreeMap<ChunkId, Chunk>,
) -> Result<(), ModelError> {
    let dangling = |field: &'static str, id: &str| ModelError::DanglingReference {
        record: quad.quad_id.0.clone(),
        field,
        id: id.to_string(),
    };
    if quad.predicate.trim().is_empty() {
        return Err(ModelError::InvalidRecord { record: quad.quad_id.0.clone(), reason: "empty predicate".into() });
    }
    if !entities.contains_key(&quad.source) {
        return Err(dangling("source", &quad.source.0));
    }
    if !entities.contains_key(&quad.target) {
        return Err(dangling("target", &quad.target.0));
    }
    if !propositions.contains_key(&quad.prop_id) {
        return Err(dangling("prop_id", &quad.prop_id.0));
    }
    if !chunks.contains_key(&quad.chunk_id) {
        return Err(dangling("chunk_id", &quad.chunk_id.0));
    }
    Ok(())
}

/// Frozen, validated knowledge graph. Safe for concurrent reads.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeGraph {
    entities: BTreeMap<EntityId, EntityNode>,
    propositions: BTreeMap<PropId, Proposition>,
    quadruplets: Vec<Quadruplet>,
    chunks: BTreeMap<ChunkId, Chunk>,
    entity_props: BTreeMap<EntityId, BTreeSet<PropId>>,
    prop_entities: BTreeMap<PropId, BTreeSet<EntityId>>,
    prop_quads: BTreeMap<PropId, Vec<usize>>,
    quad_index: BTreeMap<QuadId, usize>,
}

impl KnowledgeGraph {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a graph from raw records, checking every invariant. The first
    /// violation is reported with the id of the offending record.
    pub fn from_parts(
        entities: Vec<EntityNode>,
        propositions: Vec<Proposition>,
        quadruplets: Vec<Quadruplet>,
        chunks: Vec<Chunk>,
    ) -> Result<Self, ModelError> {
        let mut chunk_map = BTreeMap::new();
        for chunk in chunks {
            chunk.validate()?;
            let id = chunk.chunk_id.clone();
            if chunk_map.insert(id.clone(), chunk).is_some() {
                return Err(ModelError::Duplicate { kind: "chunk", id: id.0 });
            }
        }

        let mut entity_map = BTreeMap::new();
        let mut seen_names = BTreeMap::new();
        for entity in entities {
            let id = entity.entity_id.clone();
            if entity.name.trim().is_empty() || entity.normalized_name != normalize_name(&entity.name) {
                return Err(ModelError::InvalidRecord {
                    record: id.0,
                    reason: "name and normalized_name disagree".into(),
                });
            }
            if let Some(other) = seen_names.insert(entity.normalized_name.clone(), id.clone()) {
                return Err(ModelError::Duplicate {
                    kind: "normalized entity name",
                    id: format!("{} ({})", id.0, other.0),
                });
            }
            if entity_map.insert(id.clone(), entity).is_some() {
                return Err(ModelError::Duplicate { kind: "entity", id: id.0 });
            }
        }

        let mut prop_map = BTreeMap::new();
        for prop in propositions {
            let id = prop.prop_id.clone();
            if prop.text.trim().is_empty() {
                return Err(ModelError::InvalidRecord { record: id.0, reason: "empty text".into() });
            }
            if !chunk_map.contains_key(&prop.chunk_id) {
                return Err(ModelError::DanglingReference { record: id.0, field: "chunk_id", id: prop.chunk_id.0 });
            }
            if prop_map.insert(id.clone(), prop).is_some() {
                return Err(ModelError::Duplicate { kind: "proposition", id: id.0 });
            }
        }

        let mut entity_props: BTreeMap<EntityId, BTreeSet<PropId>> =
            entity_map.keys().map(|id| (id.clone(), BTreeSet::new())).collect();
        let mut prop_entities: BTreeMap<PropId, BTreeSet<EntityId>> = BTreeMap::new();
        let mut prop_quads: BTreeMap<PropId, Vec<usize>> = BTreeMap::new();
        let mut quad_index = BTreeMap::new();
        // Canonical order, so that equal record sets give equal graphs.
        let mut quadruplets = quadruplets;
        quadruplets.sort_by(|a, b| a.quad_id.cmp(&b.quad_id));
        for (i, quad) in quadruplets.iter().enumerate() {
            check_quadruplet(quad, &entity_map, &prop_map, &chunk_map)?;
            if quad_index.insert(quad.quad_id.clone(), i).is_some() {
                return Err(ModelError::Duplicate { kind: "quadruplet", id: quad.quad_id.0.clone() });
            }
            for end in [&quad.source, &quad.target] {
                entity_props.get_mut(end).expect("checked above").insert(quad.prop_id.clone());
                prop_entities.entry(quad.prop_id.clone()).or_default().insert(end.clone());
            }
            prop_quads.entry(quad.prop_id.clone()).or_default().push(i);
        }
        if let Some(orphan) = prop_map.keys().find(|p| !prop_quads.contains_key(*p)) {
            return Err(ModelError::InvalidRecord {
                record: orphan.0.clone(),
                reason: "proposition has no quadruplet".into(),
            });
        }

        Ok(Self {
            entities: entity_map,
            propositions: prop_map,
            quadruplets,
            chunks: chunk_map,
            entity_props,
            prop_entities,
            prop_quads,
            quad_index,
        })
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityNode> {
        self.entities.values()
    }

    pub fn propositions(&self) -> impl Iterator<Item = &Proposition> {
        self.propositions.values()
    }

    pub fn quadruplets(&self) -> &[Quadruplet] {
        &self.quadruplets
    }

    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.chunks.values()
    }

    pub fn entity(&self, id: &EntityId) -> Option<&EntityNode> {
        self.entities.get(id)
    }

    pub fn entity_by_name(&self, name: &str) -> Option<&EntityNode> {
        self.entities.get(&EntityId::derive(&normalize_name(name)))
    }

    pub fn proposition(&self, id: &PropId) -> Option<&Proposition> {
        self.propositions.get(id)
    }

    pub fn quadruplet(&self, id: &QuadId) -> Option<&Quadruplet> {
        self.quad_index.get(id).map(|&i| &self.quadruplets[i])
    }

    pub fn chunk(&self, id: &ChunkId) -> Option<&Chunk> {
        self.chunks.get(id)
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn proposition_count(&self) -> usize {
        self.propositions.len()
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty() && self.entities.is_empty()
    }

    /// Propositions linked to an entity (as source or target of a quadruplet).
    pub fn entity_neighbors(&self, id: &EntityId) -> Result<&BTreeSet<PropId>, ModelError> {
        self.entity_props.get(id).ok_or_else(|| ModelError::NotFound { kind: "entity", id: id.0.clone() })
    }

    /// Entities appearing in the quadruplets of a proposition.
    pub fn proposition_neighbors(&self, id: &PropId) -> Result<&BTreeSet<EntityId>, ModelError> {
        self.prop_entities.get(id).ok_or_else(|| ModelError::NotFound { kind: "proposition", id: id.0.clone() })
    }

    /// Adjacent nodes across the bipartite edge.
    pub fn neighbors(&self, node: &NodeRef) -> Result<BTreeSet<NodeRef>, ModelError> {
        Ok(match node {
            NodeRef::Entity(id) => self.entity_neighbors(id)?.iter().cloned().map(NodeRef::Proposition).collect(),
            NodeRef::Proposition(id) => self.proposition_neighbors(id)?.iter().cloned().map(NodeRef::Entity).collect(),
        })
    }

    /// Quadruplets owned by a proposition, in id order.
    pub fn quadruplets_of(&self, prop: &PropId) -> impl Iterator<Item = &Quadruplet> {
        self.prop_quads.get(prop).into_iter().flatten().map(|&i| &self.quadruplets[i])
    }

    /// Canonical `head | predicate | tail` text of a quadruplet using entity
    /// surface names.
    pub fn triplet_text(&self, quad: &Quadruplet) -> String {
        let name = |id: &EntityId| self.entities.get(id).map(|e| e.name.as_str()).unwrap_or("");
        canonical_triplet(name(&quad.source), &quad.predicate, name(&quad.target))
    }

    /// The part of the graph extracted from one document: its chunks,
    /// propositions and quadruplets, and the entities those touch.
    pub fn document_subgraph(&self, doc_id: &DocId) -> KnowledgeGraph {
        let chunks: Vec<Chunk> = self.chunks.values().filter(|c| &c.doc_id == doc_id).cloned().collect();
        let ids: BTreeSet<&ChunkId> = chunks.iter().map(|c| &c.chunk_id).collect();
        let props: Vec<Proposition> =
            self.propositions.values().filter(|p| ids.contains(&p.chunk_id)).cloned().collect();
        let quads: Vec<Quadruplet> = self.quadruplets.iter().filter(|q| ids.contains(&q.chunk_id)).cloned().collect();
        let touched: BTreeSet<&EntityId> = quads.iter().flat_map(|q| [&q.source, &q.target]).collect();
        let entities = touched.into_iter().filter_map(|e| self.entities.get(e)).cloned().collect();
        KnowledgeGraph::from_parts(entities, props, quads, chunks).expect("subgraph of a valid graph is valid")
    }

    /// Quadruplets with duplicate (source, predicate, target) collapsed,
    /// keeping the lowest id. Predicates compare by normalized text.
    pub fn distinct_triplets(&self) -> Vec<&Quadruplet> {
        let mut seen = BTreeSet::new();
        self.quadruplets
            .iter()
            .filter(|q| seen.insert((q.source.clone(), normalize_name(&q.predicate), q.target.clone())))
            .collect()
    }
}
