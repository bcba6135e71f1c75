//! Dense chunk retrieval, the proposition-entity graph retriever, LLM
//! reranking on top of it, Chain-of-Triplet retrieval and answering.

mod chain;
mod graph;

pub use chain::{
    decompose_to_triplet_chain, is_placeholder, parse_triplet_chain, run_chain, ChainRetrieval, ChainStep,
    ScoredTriplet, TripletQuery, DEFAULT_PER_QUERY,
};
pub use graph::{within_hops, Reached};

use std::collections::BTreeSet;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ChatClient, ChatRequest, ClientError, EmbedClient, EmbeddingVector};
use crate::model::{ChunkId, EntityId, KnowledgeGraph, ModelError, NodeRef, PropId, QuadId};
use crate::prompts;
use crate::scalar::Scalar;
use crate::store::{GraphIndexes, IndexError, VectorIndex};
use crate::text::normalize_name;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no triplet could be parsed from the decomposition reply")]
    Decomposition { raw_output: String },
    #[error("empty answer context")]
    EmptyContext,
    #[error("{0} retrieval needs {1}")]
    Missing(RetrievalMode, &'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    Dense,
    Graph,
    GraphLlm,
    ChainOfTriplet,
}

impl RetrievalMode {
    pub const ALL: [RetrievalMode; 4] = [Self::Dense, Self::Graph, Self::GraphLlm, Self::ChainOfTriplet];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Dense => "dense",
            Self::Graph => "graph",
            Self::GraphLlm => "graph_llm",
            Self::ChainOfTriplet => "chain_of_triplet",
        }
    }
}

impl std::fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RetrievalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL.into_iter().find(|m| m.as_str() == key).ok_or_else(|| {
            format!("unknown retrieval mode {s:?} (expected dense, graph, graph-llm or chain-of-triplet)")
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk_id: ChunkId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query_id: String,
    pub mode: RetrievalMode,
    pub ranked_chunks: Vec<ScoredChunk>,
    pub selected_props: Vec<PropId>,
    pub hop_paths: Vec<Vec<NodeRef>>,
}

impl RetrievalResult {
    fn empty(query_id: &str, mode: RetrievalMode) -> Self {
        Self {
            query_id: query_id.to_string(),
            mode,
            ranked_chunks: Vec::new(),
            selected_props: Vec::new(),
            hop_paths: Vec::new(),
        }
    }

    pub fn chunk_ids(&self) -> Vec<&ChunkId> {
        self.ranked_chunks.iter().map(|c| &c.chunk_id).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredProp {
    pub prop_id: PropId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeptProp {
    pub prop_id: PropId,
    /// Bipartite distance from the nearest question entity; absent when no
    /// question entity was found and all candidates were kept.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance: Option<usize>,
}

/// Per-query debugging record.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RetrievalTrace {
    pub query_id: String,
    pub mode: Option<RetrievalMode>,
    pub question_entities: Vec<EntityId>,
    pub candidates: Vec<ScoredProp>,
    pub kept: Vec<KeptProp>,
    pub fallback: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rerank: Option<Vec<PropId>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainRetrieval>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphRetrieverConfig {
    /// Propositions taken by embedding similarity before traversal.
    pub m: usize,
    /// Bipartite edges allowed from a question entity.
    pub n_hops: usize,
    /// Chunks returned.
    pub k: usize,
    /// Proposition hops of the entity paths offered as answer context.
    pub path_hops: usize,
    /// Triplets retrieved per Chain-of-Triplet sub-query.
    pub per_query: usize,
}

impl Default for GraphRetrieverConfig {
    fn default() -> Self {
        Self { m: 200, n_hops: 5, k: 10, path_hops: 2, per_query: DEFAULT_PER_QUERY }
    }
}

impl GraphRetrieverConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        for (name, v) in [("m", self.m), ("n_hops", self.n_hops), ("k", self.k), ("per_query", self.per_query)] {
            if v == 0 {
                return Err(RetrievalError::InvalidInput(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

pub(crate) fn embed_query<T: Scalar, E: EmbedClient + ?Sized>(
    text: &str,
    embedder: &E,
) -> Result<EmbeddingVector<T>, RetrievalError> {
    let mut v = embedder.embed(&[text])?;
    if v.len() != 1 {
        return Err(ClientError::Decode(format!("expected 1 embedding, got {}", v.len())).into());
    }
    Ok(v.remove(0).cast())
}

fn scored_chunks<T: Scalar>(ranked: Vec<(ChunkId, T)>) -> Vec<ScoredChunk> {
    ranked.into_iter().map(|(chunk_id, s)| ScoredChunk { chunk_id, score: s.as_f64() }).collect()
}

/// Top-`k` chunks by cosine similarity to the query.
pub fn dense_retrieve<T: Scalar, E: EmbedClient + ?Sized>(
    query_id: &str,
    query: &str,
    chunks: &VectorIndex<ChunkId, T>,
    embedder: &E,
    k: usize,
) -> Result<RetrievalResult, RetrievalError> {
    if k == 0 {
        return Err(IndexError::ZeroM.into());
    }
    let mut result = RetrievalResult::empty(query_id, RetrievalMode::Dense);
    if chunks.is_empty() {
        return Ok(result);
    }
    let q = embed_query::<T, E>(query, embedder)?;
    result.ranked_chunks = scored_chunks(chunks.top_m(&q, k)?);
    Ok(result)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Entities whose normalized name occurs in the normalized query at word
/// boundaries. Longer matches claim their span first; shorter matches
/// overlapping a claimed span are dropped. Returned in query order.
pub fn extract_question_entities(query: &str, graph: &KnowledgeGraph) -> Vec<EntityId> {
    let q = normalize_name(query);
    let mut matches: Vec<(usize, usize, &EntityId)> = Vec::new();
    for entity in graph.entities() {
        let name = &entity.normalized_name;
        let mut from = 0;
        while let Some(off) = q[from..].find(name.as_str()) {
            let start = from + off;
            let end = start + name.len();
            let before_ok = q[..start].chars().next_back().is_none_or(|c| !is_word_char(c))
                || !name.chars().next().is_some_and(is_word_char);
            let after_ok = q[end..].chars().next().is_none_or(|c| !is_word_char(c))
                || !name.chars().next_back().is_some_and(is_word_char);
            if before_ok && after_ok {
                matches.push((start, end, &entity.entity_id));
            }
            from = start + q[start..].chars().next().map_or(1, char::len_utf8);
        }
    }
    matches.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)).then(a.2.cmp(b.2)));
    let mut claimed: Vec<(usize, usize, &EntityId)> = Vec::new();
    for m in matches {
        if claimed.iter().all(|c| m.1 <= c.0 || m.0 >= c.1) {
            claimed.push(m);
        }
    }
    claimed.sort_by_key(|c| c.0);
    let mut seen = BTreeSet::new();
    claimed.into_iter().filter(|c| seen.insert(c.2)).map(|c| c.2.clone()).collect()
}

/// Graph retrieval output: the result plus the trace and query embedding
/// for callers that post-process (reranking).
#[derive(Debug, Clone)]
pub struct GraphRetrieval<T = f64> {
    pub result: RetrievalResult,
    pub trace: RetrievalTrace,
    pub query: Option<EmbeddingVector<T>>,
}

/// Proposition-entity graph retrieval.
///
/// 1. take the top `m` propositions by similarity to the query;
/// 2. induce the bipartite subgraph of those propositions and their entities;
/// 3. keep propositions within `n_hops` edges of a question entity;
/// 4. rank the kept propositions' chunks by similarity, keeping `k`.
///
/// With no question entity in the query, all `m` candidates are kept.
pub fn graph_retrieve<T: Scalar, E: EmbedClient + ?Sized>(
    query_id: &str,
    query: &str,
    graph: &KnowledgeGraph,
    indexes: &GraphIndexes<T>,
    embedder: &E,
    config: &GraphRetrieverConfig,
) -> Result<GraphRetrieval<T>, RetrievalError> {
    config.validate()?;
    let mut result = RetrievalResult::empty(query_id, RetrievalMode::Graph);
    let mut trace =
        RetrievalTrace { query_id: query_id.to_string(), mode: Some(RetrievalMode::Graph), ..Default::default() };
    if indexes.propositions.is_empty() {
        return Ok(GraphRetrieval { result, trace, query: None });
    }
    let q = embed_query::<T, E>(query, embedder)?;
    let candidates = indexes.propositions.top_m(&q, config.m)?;
    trace.candidates = candidates.iter().map(|(p, s)| ScoredProp { prop_id: p.clone(), score: s.as_f64() }).collect();
    trace.question_entities = extract_question_entities(query, graph);

    // kept propositions in candidate (similarity) order
    let kept: Vec<(PropId, Option<Reached>)> = if trace.question_entities.is_empty() {
        trace.fallback = true;
        candidates.iter().map(|(p, _)| (p.clone(), None)).collect()
    } else {
        let set: BTreeSet<PropId> = candidates.iter().map(|(p, _)| p.clone()).collect();
        let mut reached: std::collections::BTreeMap<PropId, Reached> =
            within_hops(graph, &set, &trace.question_entities, config.n_hops)
                .into_iter()
                .map(|r| (r.prop_id.clone(), r))
                .collect();
        candidates.iter().filter_map(|(p, _)| reached.remove(p).map(|r| (p.clone(), Some(r)))).collect()
    };

    trace.kept =
        kept.iter().map(|(p, r)| KeptProp { prop_id: p.clone(), distance: r.as_ref().map(|r| r.distance) }).collect();
    result.selected_props = kept.iter().map(|(p, _)| p.clone()).collect();
    result.hop_paths = kept.iter().filter_map(|(_, r)| r.as_ref().map(|r| r.path.clone())).collect();

    let chunk_ids: BTreeSet<ChunkId> =
        kept.iter().filter_map(|(p, _)| graph.proposition(p).map(|p| p.chunk_id.clone())).collect();
    let mut ranked = indexes.chunks.rank_subset(chunk_ids.iter(), &q);
    ranked.truncate(config.k);
    result.ranked_chunks = scored_chunks(ranked);
    Ok(GraphRetrieval { result, trace, query: Some(q) })
}

/// Outcome of asking the model which candidate propositions are needed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RerankOutcome {
    pub selected: Vec<PropId>,
    pub warning: Option<String>,
}

/// Parses 1-based indices from a rerank reply, preserving their order,
/// dropping duplicates and out-of-range values.
pub fn parse_rerank_reply(reply: &str, n: usize) -> Option<Vec<usize>> {
    let numbers: Vec<usize> =
        reply.split(|c: char| !c.is_ascii_digit()).filter(|s| !s.is_empty()).filter_map(|s| s.parse().ok()).collect();
    if numbers.is_empty() {
        return None;
    }
    let mut seen = BTreeSet::new();
    Some(numbers.into_iter().filter(|&i| i >= 1 && i <= n && seen.insert(i)).map(|i| i - 1).collect())
}

pub fn llm_rerank<C: ChatClient + ?Sized>(
    query: &str,
    candidates: &[PropId],
    graph: &KnowledgeGraph,
    chat: &C,
) -> Result<RerankOutcome, RetrievalError> {
    if candidates.is_empty() {
        return Err(RetrievalError::InvalidInput("no candidate propositions to rerank".into()));
    }
    let numbered: Vec<String> = candidates
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let text = graph.proposition(p).map(|p| p.text.as_str()).unwrap_or("");
            format!("{}. {text}", i + 1)
        })
        .collect();
    let reply = chat.chat(&ChatRequest::user(prompts::rerank(query, &numbered.join("\n"))))?;
    Ok(match parse_rerank_reply(&reply, candidates.len()) {
        Some(idx) => {
            RerankOutcome { selected: idx.into_iter().map(|i| candidates[i].clone()).collect(), warning: None }
        }
        None => {
            let w = "rerank reply contained no proposition numbers".to_string();
            warn!("{w}");
            RerankOutcome { selected: Vec::new(), warning: Some(w) }
        }
    })
}

/// Graph retrieval followed by LLM selection: chunks of the selected
/// propositions come first (selection order, no duplicates), then the
/// remaining graph-ranked chunks, up to `k`. A failed or empty rerank leaves
/// the graph ranking unchanged.
pub fn graph_llm_retrieve<T: Scalar, E: EmbedClient + ?Sized, C: ChatClient + ?Sized>(
    query_id: &str,
    query: &str,
    graph: &KnowledgeGraph,
    indexes: &GraphIndexes<T>,
    embedder: &E,
    chat: &C,
    config: &GraphRetrieverConfig,
) -> Result<(RetrievalResult, RetrievalTrace), RetrievalError> {
    let GraphRetrieval { mut result, mut trace, query: q } =
        graph_retrieve(query_id, query, graph, indexes, embedder, config)?;
    result.mode = RetrievalMode::GraphLlm;
    trace.mode = Some(RetrievalMode::GraphLlm);
    let Some(q) = q.filter(|_| !result.selected_props.is_empty()) else {
        return Ok((result, trace));
    };
    let outcome = match llm_rerank(query, &result.selected_props, graph, chat) {
        Ok(o) => o,
        Err(e) => {
            let w = format!("rerank failed, keeping graph ranking: {e}");
            warn!("{w}");
            trace.warnings.push(w);
            return Ok((result, trace));
        }
    };
    trace.warnings.extend(outcome.warning);
    trace.rerank = Some(outcome.selected.clone());
    if outcome.selected.is_empty() {
        return Ok((result, trace));
    }

    let mut chunks: Vec<ScoredChunk> = Vec::new();
    let mut seen = BTreeSet::new();
    for p in &outcome.selected {
        let Some(chunk_id) = graph.proposition(p).map(|p| p.chunk_id.clone()) else { continue };
        if seen.insert(chunk_id.clone()) {
            let score = indexes.chunks.score(&chunk_id, &q).map_or(0.0, |s| s.as_f64());
            chunks.push(ScoredChunk { chunk_id, score });
        }
    }
    for c in &result.ranked_chunks {
        if seen.insert(c.chunk_id.clone()) {
            chunks.push(c.clone());
        }
    }
    chunks.truncate(config.k);
    result.ranked_chunks = chunks;

    // selected propositions first, then the rest in graph order; paths follow
    let chosen: BTreeSet<&PropId> = outcome.selected.iter().collect();
    let mut order = outcome.selected.clone();
    order.extend(result.selected_props.iter().filter(|p| !chosen.contains(p)).cloned());
    let path_of = |p: &PropId| {
        result.hop_paths.iter().find(|path| path.last() == Some(&NodeRef::Proposition(p.clone()))).cloned()
    };
    result.hop_paths = order.iter().filter_map(path_of).collect();
    result.selected_props = order;
    Ok((result, trace))
}

/// Chain-of-Triplet retrieval: decomposition, then [`run_chain`]. The result
/// ranks the chunks of retrieved triplets by first appearance.
pub fn chain_of_triplet_retrieve<T: Scalar, E: EmbedClient + ?Sized, C: ChatClient + ?Sized>(
    query_id: &str,
    question: &str,
    graph: &KnowledgeGraph,
    triplet_index: &VectorIndex<QuadId, T>,
    embedder: &E,
    chat: &C,
    config: &GraphRetrieverConfig,
) -> Result<(RetrievalResult, ChainRetrieval), RetrievalError> {
    config.validate()?;
    let chain = decompose_to_triplet_chain(question, chat)?;
    let run = run_chain(&chain, graph, triplet_index, embedder, config.per_query)?;
    let mut result = RetrievalResult::empty(query_id, RetrievalMode::ChainOfTriplet);
    let mut chunks_seen = BTreeSet::new();
    let mut props_seen = BTreeSet::new();
    for t in run.triplets() {
        let Some(quad) = graph.quadruplet(&t.quad_id) else { continue };
        if props_seen.insert(quad.prop_id.clone()) {
            result.selected_props.push(quad.prop_id.clone());
        }
        if chunks_seen.insert(quad.chunk_id.clone()) && result.ranked_chunks.len() < config.k {
            result.ranked_chunks.push(ScoredChunk { chunk_id: quad.chunk_id.clone(), score: t.score });
        }
    }
    Ok((result, run))
}

/// Entity paths of a graph result covering at most `path_hops` propositions,
/// rendered as `entity -> fact -> entity -> fact` lines.
pub fn context_paths(graph: &KnowledgeGraph, result: &RetrievalResult, path_hops: usize) -> Vec<String> {
    result
        .hop_paths
        .iter()
        .filter(|p| p.len() / 2 <= path_hops)
        .map(|path| {
            path.iter()
                .map(|n| match n {
                    NodeRef::Entity(e) => graph.entity(e).map(|e| e.name.clone()).unwrap_or_default(),
                    NodeRef::Proposition(p) => graph.proposition(p).map(|p| p.text.clone()).unwrap_or_default(),
                })
                .collect::<Vec<_>>()
                .join(" -> ")
        })
        .collect()
}

/// Context handed to the answering model.
#[derive(Debug, Clone, PartialEq)]
pub enum AnswerContext {
    /// Retrieved passages, best first.
    Chunks(Vec<String>),
    /// Chain-of-Triplet context.
    Triplets { chain: String, triplets: Vec<String>, facts: Vec<String> },
}

impl AnswerContext {
    pub fn is_empty(&self) -> bool {
        match self {
            AnswerContext::Chunks(c) => c.is_empty(),
            AnswerContext::Triplets { triplets, facts, .. } => triplets.is_empty() && facts.is_empty(),
        }
    }

    /// Passages of the ranked chunks (original text), plus rendered paths.
    pub fn from_result(graph: &KnowledgeGraph, result: &RetrievalResult, paths: &[String]) -> Self {
        let mut texts: Vec<String> =
            result.ranked_chunks.iter().filter_map(|c| graph.chunk(&c.chunk_id).map(|c| c.text.clone())).collect();
        texts.extend(paths.iter().cloned());
        AnswerContext::Chunks(texts)
    }

    pub fn from_chain(graph: &KnowledgeGraph, chain: &ChainRetrieval) -> Self {
        let triplets: Vec<&ScoredTriplet> = chain.triplets();
        let mut seen = BTreeSet::new();
        let facts = triplets
            .iter()
            .filter_map(|t| graph.quadruplet(&t.quad_id))
            .filter(|q| seen.insert(q.prop_id.clone()))
            .filter_map(|q| graph.proposition(&q.prop_id).map(|p| p.text.clone()))
            .collect();
        AnswerContext::Triplets {
            chain: chain.resolved_chain(),
            triplets: triplets.iter().map(|t| t.text.clone()).collect(),
            facts,
        }
    }
}

/// Asks the model for a short answer over the given context; the reply is
/// returned trimmed.
pub fn answer_with_context<C: ChatClient + ?Sized>(
    question: &str,
    context: &AnswerContext,
    chat: &C,
    allow_empty: bool,
) -> Result<String, RetrievalError> {
    if context.is_empty() && !allow_empty {
        return Err(RetrievalError::EmptyContext);
    }
    let request = match context {
        AnswerContext::Chunks(texts) => ChatRequest::user(prompts::chunk_answer(question, &texts.join("\n\n")))
            .with_system(prompts::CHUNK_ANSWER_SYSTEM),
        AnswerContext::Triplets { chain, triplets, facts } => {
            ChatRequest::user(prompts::triplet_answer(question, chain, &triplets.join("\n"), &facts.join("\n")))
        }
    };
    Ok(chat.chat(&request)?.trim().to_string())
}

/// Everything a retrieval run reads, bundled for mode dispatch.
pub struct Retriever<'a, T: Scalar, E: ?Sized, C: ?Sized> {
    pub graph: &'a KnowledgeGraph,
    pub indexes: &'a GraphIndexes<T>,
    pub triplets: Option<&'a VectorIndex<QuadId, T>>,
    pub embedder: &'a E,
    pub chat: Option<&'a C>,
    pub config: GraphRetrieverConfig,
}

/// A retrieval plus what an answering step needs.
#[derive(Debug, Clone)]
pub struct RetrievalRun {
    pub result: RetrievalResult,
    pub trace: RetrievalTrace,
    pub context: AnswerContext,
}

impl<T: Scalar, E: EmbedClient + ?Sized, C: ChatClient + ?Sized> Retriever<'_, T, E, C> {
    pub fn retrieve(
        &self,
        query_id: &str,
        question: &str,
        mode: RetrievalMode,
    ) -> Result<RetrievalRun, RetrievalError> {
        let graph = self.graph;
        match mode {
            RetrievalMode::Dense => {
                let result = dense_retrieve(query_id, question, &self.indexes.chunks, self.embedder, self.config.k)?;
                let context = AnswerContext::from_result(graph, &result, &[]);
                let trace = RetrievalTrace { query_id: query_id.into(), mode: Some(mode), ..Default::default() };
                Ok(RetrievalRun { result, trace, context })
            }
            RetrievalMode::Graph => {
                let g = graph_retrieve(query_id, question, graph, self.indexes, self.embedder, &self.config)?;
                let context = AnswerContext::from_result(graph, &g.result, &[]);
                Ok(RetrievalRun { result: g.result, trace: g.trace, context })
            }
            RetrievalMode::GraphLlm => {
                let chat = self.chat.ok_or(RetrievalError::Missing(mode, "a chat client"))?;
                let (result, trace) =
                    graph_llm_retrieve(query_id, question, graph, self.indexes, self.embedder, chat, &self.config)?;
                let paths = context_paths(graph, &result, self.config.path_hops);
                let context = AnswerContext::from_result(graph, &result, &paths);
                Ok(RetrievalRun { result, trace, context })
            }
            RetrievalMode::ChainOfTriplet => {
                let chat = self.chat.ok_or(RetrievalError::Missing(mode, "a chat client"))?;
                let triplets = self.triplets.ok_or(RetrievalError::Missing(mode, "a triplet index"))?;
                let (result, chain) =
                    chain_of_triplet_retrieve(query_id, question, graph, triplets, self.embedder, chat, &self.config)?;
                let context = AnswerContext::from_chain(graph, &chain);
                let trace = RetrievalTrace {
                    query_id: query_id.into(),
                    mode: Some(mode),
                    chain: Some(chain),
                    ..Default::default()
                };
                Ok(RetrievalRun { result, trace, context })
            }
        }
    }
}
