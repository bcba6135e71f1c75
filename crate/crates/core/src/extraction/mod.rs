//! Entity, relation and proposition extraction and knowledge-graph assembly.
//!
//! Multi-step synthesis runs, per chunk, decontextualization (from the second
//! chunk on), entity extraction and fact extraction, then assembles the
//! chunks in index order. Single-step synthesis asks for every fact of the
//! document in one call and reuses the same assembly path.

mod density;
pub mod parse;

pub use density::{triplet_density, DensityRow, DensityTable};

use std::collections::{BTreeSet, HashMap};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunker::{self, ChunkError, DEFAULT_DRIFT_THRESHOLD, DEFAULT_MAX_TOKENS};
use crate::client::{ChatClient, ChatRequest, ClientError};
use crate::model::{
    Chunk, ChunkId, DocId, Document, EntityNode, GraphBuilder, KnowledgeGraph, ModelError, PropId, Proposition, QuadId,
    Quadruplet, UNKNOWN_TYPE,
};
use crate::prompts;
use crate::text::{bag, clipped_overlap, normalize_name, words};

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("could not parse model output: {message}")]
    Parse { raw_output: String, message: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("document {doc_id}: all {} chunk(s) failed", failures.len())]
    DocumentFailed { doc_id: String, failures: Vec<ExtractionFailure> },
}

impl ExtractionError {
    fn parse(raw: &str, message: String) -> Self {
        ExtractionError::Parse { raw_output: raw.to_string(), message }
    }

    pub fn raw_output(&self) -> Option<&str> {
        match self {
            ExtractionError::Parse { raw_output, .. } => Some(raw_output),
            _ => None,
        }
    }
}

/// One fact sentence with its (head, predicate, tail) triplets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactRecord {
    pub fact_text: String,
    pub triplets: Vec<[String; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Chunking,
    Decontextualize,
    Entities,
    Relations,
    SingleStep,
}

/// A recorded per-chunk (or per-document) failure; one line of the
/// extraction error log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionFailure {
    pub doc_id: DocId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chunk_id: Option<ChunkId>,
    pub stage: Stage,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
    pub message: String,
}

impl ExtractionFailure {
    fn new(doc_id: &DocId, chunk_id: Option<&ChunkId>, stage: Stage, err: &ExtractionError) -> Self {
        Self {
            doc_id: doc_id.clone(),
            chunk_id: chunk_id.cloned(),
            stage,
            raw_output: err.raw_output().map(str::to_string),
            message: err.to_string(),
        }
    }
}

/// Counters collected while extracting; summed across chunks and documents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionStats {
    pub chunks: usize,
    pub drift_rejected: usize,
    pub skipped_entities: usize,
    pub skipped_facts: usize,
    pub malformed_triplets: usize,
    pub rejected_triplets: usize,
    pub dropped_facts: usize,
    pub failed_chunks: usize,
}

impl ExtractionStats {
    pub fn add(&mut self, other: &ExtractionStats) {
        self.chunks += other.chunks;
        self.drift_rejected += other.drift_rejected;
        self.skipped_entities += other.skipped_entities;
        self.skipped_facts += other.skipped_facts;
        self.malformed_triplets += other.malformed_triplets;
        self.rejected_triplets += other.rejected_triplets;
        self.dropped_facts += other.dropped_facts;
        self.failed_chunks += other.failed_chunks;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub max_tokens: usize,
    pub drift_threshold: f64,
    pub decontextualize: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self { max_tokens: DEFAULT_MAX_TOKENS, drift_threshold: DEFAULT_DRIFT_THRESHOLD, decontextualize: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisMode {
    MultiStep,
    SingleStep,
}

fn ask<C: ChatClient + ?Sized>(chat: &C, prompt: String) -> Result<String, ExtractionError> {
    Ok(chat.chat(&ChatRequest::user(prompt))?)
}

/// Entities parsed from an entity-prompt reply, in reply order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityOutput {
    pub entities: Vec<EntityNode>,
    /// Entries lacking a usable name or type.
    pub skipped: usize,
}

/// Parses `{"n1": {"name", "type"}, ...}`, deduplicating by normalized name
/// (first occurrence wins, longer surface name kept).
pub fn parse_entities(raw: &str) -> Result<EntityOutput, ExtractionError> {
    let map = parse::parse_object(raw).map_err(|m| ExtractionError::parse(raw, m))?;
    let mut out = EntityOutput::default();
    let mut position: HashMap<String, usize> = HashMap::new();
    for value in map.values() {
        let name = value.get("name").and_then(parse::text_of);
        let type_label = value.get("type").and_then(|t| match t {
            serde_json::Value::String(s) => Some(s.clone()),
            _ => None,
        });
        let (Some(name), Some(type_label)) = (name, type_label) else {
            out.skipped += 1;
            continue;
        };
        let Ok(node) = EntityNode::new(&name, &type_label) else {
            out.skipped += 1;
            continue;
        };
        match position.get(&node.normalized_name) {
            Some(&i) => {
                let kept = &mut out.entities[i];
                if node.name.chars().count() > kept.name.chars().count() {
                    kept.name = node.name;
                }
            }
            None => {
                position.insert(node.normalized_name.clone(), out.entities.len());
                out.entities.push(node);
            }
        }
    }
    if out.skipped > 0 {
        warn!("skipped {} incomplete entity entries", out.skipped);
    }
    Ok(out)
}

pub fn extract_entities<C: ChatClient + ?Sized>(chunk_text: &str, chat: &C) -> Result<EntityOutput, ExtractionError> {
    if chunk_text.trim().is_empty() {
        return Err(ExtractionError::InvalidInput("empty chunk text".into()));
    }
    parse_entities(&ask(chat, prompts::entities(chunk_text))?)
}

/// Facts parsed from a relation-style reply.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactOutput {
    pub facts: Vec<FactRecord>,
    /// Entries without a fact sentence or triplet list.
    pub skipped_facts: usize,
    /// Triplets that were not three non-empty strings.
    pub malformed_triplets: usize,
    /// Well-formed triplets failing the entity validity rule.
    pub rejected_triplets: usize,
    /// Facts dropped because none of their triplets survived.
    pub dropped_facts: usize,
}

/// Parses `{"f1": {"fact", "triplets"}, ...}` keeping every well-formed
/// triplet. Facts without any well-formed triplet are dropped.
pub fn parse_facts(raw: &str) -> Result<FactOutput, ExtractionError> {
    let map = parse::parse_object(raw).map_err(|m| ExtractionError::parse(raw, m))?;
    let mut out = FactOutput::default();
    for value in map.values() {
        let fact = value.get("fact").and_then(parse::text_of);
        let triplets = value.get("triplets").and_then(|t| t.as_array());
        let (Some(fact_text), Some(triplets)) = (fact, triplets) else {
            out.skipped_facts += 1;
            continue;
        };
        let mut kept = Vec::new();
        for t in triplets {
            let parts: Option<Vec<String>> =
                t.as_array().filter(|a| a.len() == 3).and_then(|a| a.iter().map(parse::text_of).collect());
            match parts {
                Some(p) => kept.push([p[0].clone(), p[1].clone(), p[2].clone()]),
                None => out.malformed_triplets += 1,
            }
        }
        if kept.is_empty() {
            out.dropped_facts += 1;
        } else {
            out.facts.push(FactRecord { fact_text, triplets: kept });
        }
    }
    Ok(out)
}

/// Applies the validity rule: a triplet survives only if its head or tail
/// matches (by normalized name) one of `entities`.
pub fn filter_by_entities(mut parsed: FactOutput, entities: &[EntityNode]) -> FactOutput {
    let known: BTreeSet<&str> = entities.iter().map(|e| e.normalized_name.as_str()).collect();
    let facts = std::mem::take(&mut parsed.facts);
    for mut fact in facts {
        let before = fact.triplets.len();
        fact.triplets.retain(|[h, _, t]| {
            known.contains(normalize_name(h).as_str()) || known.contains(normalize_name(t).as_str())
        });
        parsed.rejected_triplets += before - fact.triplets.len();
        if fact.triplets.is_empty() {
            parsed.dropped_facts += 1;
        } else {
            parsed.facts.push(fact);
        }
    }
    if parsed.rejected_triplets > 0 {
        warn!("rejected {} triplets with no endpoint in the entity list", parsed.rejected_triplets);
    }
    parsed
}

pub fn extract_relations<C: ChatClient + ?Sized>(
    chunk_text: &str,
    entities: &[EntityNode],
    chat: &C,
) -> Result<FactOutput, ExtractionError> {
    if chunk_text.trim().is_empty() {
        return Err(ExtractionError::InvalidInput("empty chunk text".into()));
    }
    let names: Vec<&str> = entities.iter().map(|e| e.name.as_str()).collect();
    let raw = ask(chat, prompts::relations(chunk_text, &names))?;
    Ok(filter_by_entities(parse_facts(&raw)?, entities))
}

/// Extraction result of one chunk, ready for assembly.
#[derive(Debug, Clone)]
struct ChunkExtraction {
    chunk: Chunk,
    entities: Vec<EntityNode>,
    facts: Vec<FactRecord>,
    stats: ExtractionStats,
    failure: Option<ExtractionFailure>,
}

fn extract_chunk<C: ChatClient + ?Sized>(
    chunk: &Chunk,
    previous: Option<&Chunk>,
    chat: &C,
    config: &SynthesisConfig,
) -> ChunkExtraction {
    let mut stats = ExtractionStats { chunks: 1, ..Default::default() };
    let fail = |chunk: Chunk, stage, err: ExtractionError, mut stats: ExtractionStats| {
        stats.failed_chunks += 1;
        warn!("chunk {} failed at {:?}: {err}", chunk.chunk_id, stage);
        let failure = ExtractionFailure::new(&chunk.doc_id, Some(&chunk.chunk_id), stage, &err);
        ChunkExtraction { chunk, entities: Vec::new(), facts: Vec::new(), stats, failure: Some(failure) }
    };

    let chunk = match previous {
        Some(prev) if config.decontextualize => {
            match chunker::decontextualize(chunk, prev, chat, config.drift_threshold) {
                Ok(c) => c,
                Err(e) => return fail(chunk.clone(), Stage::Decontextualize, e.into(), stats),
            }
        }
        _ => chunk.clone(),
    };
    if chunk.drift_rejected {
        stats.drift_rejected += 1;
    }
    let text = chunk.effective_text().to_string();

    let entities = match extract_entities(&text, chat) {
        Ok(e) => e,
        Err(e) => return fail(chunk, Stage::Entities, e, stats),
    };
    stats.skipped_entities += entities.skipped;
    let facts = match extract_relations(&text, &entities.entities, chat) {
        Ok(f) => f,
        Err(e) => return fail(chunk, Stage::Relations, e, stats),
    };
    stats.skipped_facts += facts.skipped_facts;
    stats.malformed_triplets += facts.malformed_triplets;
    stats.rejected_triplets += facts.rejected_triplets;
    stats.dropped_facts += facts.dropped_facts;
    ChunkExtraction { chunk, entities: entities.entities, facts: facts.facts, stats, failure: None }
}

/// Adds the facts of one chunk to the builder. Propositions and quadruplets
/// get consecutive ordinals within the chunk, continuing from the counts
/// passed in. Triplet endpoints not among `entities` become `unknown`-typed
/// nodes.
fn assemble_facts(
    builder: &mut GraphBuilder,
    chunk_id: &ChunkId,
    entities: &[EntityNode],
    facts: &[FactRecord],
    prop_ordinal: &mut usize,
    quad_ordinal: &mut usize,
) -> Result<(), ModelError> {
    let typed: HashMap<&str, &EntityNode> = entities.iter().map(|e| (e.normalized_name.as_str(), e)).collect();
    for entity in entities {
        builder.merge_entity(entity.clone())?;
    }
    for fact in facts {
        let prop_id = PropId::derive(chunk_id, *prop_ordinal);
        builder.add_proposition(Proposition {
            prop_id: prop_id.clone(),
            text: fact.fact_text.clone(),
            chunk_id: chunk_id.clone(),
            ordinal: *prop_ordinal,
        })?;
        *prop_ordinal += 1;
        for [head, predicate, tail] in &fact.triplets {
            let mut endpoint = |name: &str| {
                let node = EntityNode::new(name, UNKNOWN_TYPE)?;
                let node = match typed.get(node.normalized_name.as_str()) {
                    Some(known) => EntityNode { name: node.name, ..(*known).clone() },
                    None => node,
                };
                builder.merge_entity(node)
            };
            let source = endpoint(head)?;
            let target = endpoint(tail)?;
            builder.add_quadruplet(Quadruplet {
                quad_id: QuadId::derive(chunk_id, *quad_ordinal),
                source,
                predicate: predicate.trim().to_string(),
                target,
                prop_id: prop_id.clone(),
                chunk_id: chunk_id.clone(),
                ordinal: *quad_ordinal,
            })?;
            *quad_ordinal += 1;
        }
    }
    Ok(())
}

/// Output of synthesizing one document.
#[derive(Debug, Clone)]
pub struct DocumentSynthesis {
    pub graph: KnowledgeGraph,
    pub failures: Vec<ExtractionFailure>,
    pub stats: ExtractionStats,
    pub warnings: Vec<String>,
}

fn checked_chunks(doc: &Document, config: &SynthesisConfig) -> Result<Vec<Chunk>, ExtractionError> {
    doc.validate()?;
    Ok(chunker::split_document(doc, config.max_tokens)?)
}

/// Multi-step synthesis of one document. Chunks are processed in parallel
/// and assembled in index order; a failing chunk is kept in the chunk store
/// (original text) without facts and its failure recorded. If every chunk
/// fails the document fails.
pub fn synthesize_multi_step<C: ChatClient + ?Sized>(
    doc: &Document,
    chat: &C,
    config: &SynthesisConfig,
) -> Result<DocumentSynthesis, ExtractionError> {
    let chunks = checked_chunks(doc, config)?;
    let results: Vec<ChunkExtraction> = (0..chunks.len())
        .into_par_iter()
        .map(|i| extract_chunk(&chunks[i], i.checked_sub(1).map(|p| &chunks[p]), chat, config))
        .collect();

    let mut failures = Vec::new();
    if results.iter().all(|r| r.failure.is_some()) {
        failures.extend(results.into_iter().filter_map(|r| r.failure));
        return Err(ExtractionError::DocumentFailed { doc_id: doc.doc_id.0.clone(), failures });
    }

    let mut builder = GraphBuilder::new();
    let mut stats = ExtractionStats::default();
    for r in results {
        stats.add(&r.stats);
        let chunk_id = r.chunk.chunk_id.clone();
        builder.add_chunk(r.chunk)?;
        let (mut props, mut quads) = (0, 0);
        assemble_facts(&mut builder, &chunk_id, &r.entities, &r.facts, &mut props, &mut quads)?;
        failures.extend(r.failure);
    }
    let graph = builder.freeze()?;
    let mut warnings = Vec::new();
    if graph.quadruplets().is_empty() {
        warnings.push(format!("document {}: empty knowledge graph", doc.doc_id));
    }
    Ok(DocumentSynthesis { graph, failures, stats, warnings })
}

/// Index of the chunk sharing the most words with `fact`; ties go to the
/// earliest chunk.
fn best_chunk(fact: &str, chunk_bags: &[HashMap<String, usize>]) -> usize {
    let fact_bag = bag(words(fact));
    let mut best = (0usize, 0usize);
    for (i, chunk_bag) in chunk_bags.iter().enumerate() {
        let overlap = clipped_overlap(&fact_bag, chunk_bag);
        if overlap > best.1 {
            best = (i, overlap);
        }
    }
    best.0
}

/// Single-call synthesis: the whole document goes to the model in one
/// request and the document-level facts are assembled like multi-step
/// output. Chunks are still stored; each fact is attributed to the chunk it
/// shares the most words with. With no entity list, every well-formed
/// triplet is accepted.
pub fn synthesize_single_step<C: ChatClient + ?Sized>(
    doc: &Document,
    chat: &C,
    config: &SynthesisConfig,
) -> Result<DocumentSynthesis, ExtractionError> {
    let chunks = checked_chunks(doc, config)?;
    let raw = ask(chat, prompts::single_step(&doc.text))?;
    let parsed = parse_facts(&raw)?;
    let stats = ExtractionStats {
        chunks: chunks.len(),
        skipped_facts: parsed.skipped_facts,
        malformed_triplets: parsed.malformed_triplets,
        dropped_facts: parsed.dropped_facts,
        ..Default::default()
    };

    let bags: Vec<_> = chunks.iter().map(|c| bag(words(&c.text))).collect();
    let mut per_chunk: Vec<Vec<FactRecord>> = vec![Vec::new(); chunks.len()];
    for fact in parsed.facts {
        per_chunk[best_chunk(&fact.fact_text, &bags)].push(fact);
    }

    let mut builder = GraphBuilder::new();
    for (chunk, facts) in chunks.into_iter().zip(per_chunk) {
        let chunk_id = chunk.chunk_id.clone();
        builder.add_chunk(chunk)?;
        let (mut props, mut quads) = (0, 0);
        assemble_facts(&mut builder, &chunk_id, &[], &facts, &mut props, &mut quads)?;
    }
    let graph = builder.freeze()?;
    let mut warnings = Vec::new();
    if graph.quadruplets().is_empty() {
        let msg = format!("document {}: empty knowledge graph", doc.doc_id);
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(DocumentSynthesis { graph, failures: Vec::new(), stats, warnings })
}

pub fn synthesize<C: ChatClient + ?Sized>(
    doc: &Document,
    chat: &C,
    config: &SynthesisConfig,
    mode: SynthesisMode,
) -> Result<DocumentSynthesis, ExtractionError> {
    match mode {
        SynthesisMode::MultiStep => synthesize_multi_step(doc, chat, config),
        SynthesisMode::SingleStep => synthesize_single_step(doc, chat, config),
    }
}

/// Per-document outcome within a corpus run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentReport {
    pub doc_id: DocId,
    pub ok: bool,
    pub propositions: usize,
    pub quadruplets: usize,
    pub error: Option<String>,
}

/// Corpus-level synthesis output.
#[derive(Debug, Clone)]
pub struct CorpusSynthesis {
    pub graph: KnowledgeGraph,
    /// Per-document graphs aligned with the input documents; failed
    /// documents get an empty graph.
    pub document_graphs: Vec<KnowledgeGraph>,
    pub documents: Vec<DocumentReport>,
    pub failures: Vec<ExtractionFailure>,
    pub stats: ExtractionStats,
    pub warnings: Vec<String>,
}

impl CorpusSynthesis {
    pub fn failed_documents(&self) -> usize {
        self.documents.iter().filter(|d| !d.ok).count()
    }
}

/// Synthesizes every document (in parallel) and merges the per-document
/// graphs in input order. Document failures are recorded, not fatal;
/// duplicate document ids are.
pub fn synthesize_corpus<C: ChatClient + ?Sized>(
    docs: &[Document],
    chat: &C,
    config: &SynthesisConfig,
    mode: SynthesisMode,
) -> Result<CorpusSynthesis, ExtractionError> {
    let mut seen = BTreeSet::new();
    if let Some(dup) = docs.iter().find(|d| !seen.insert(&d.doc_id)) {
        return Err(ExtractionError::InvalidInput(format!("duplicate doc_id {}", dup.doc_id)));
    }
    let results: Vec<Result<DocumentSynthesis, ExtractionError>> =
        docs.par_iter().map(|d| synthesize(d, chat, config, mode)).collect();

    let mut out = CorpusSynthesis {
        graph: KnowledgeGraph::empty(),
        document_graphs: Vec::with_capacity(docs.len()),
        documents: Vec::with_capacity(docs.len()),
        failures: Vec::new(),
        stats: ExtractionStats::default(),
        warnings: Vec::new(),
    };
    let mut builder = GraphBuilder::new();
    for (doc, result) in docs.iter().zip(results) {
        match result {
            Ok(s) => {
                builder.absorb(&s.graph)?;
                out.documents.push(DocumentReport {
                    doc_id: doc.doc_id.clone(),
                    ok: true,
                    propositions: s.graph.proposition_count(),
                    quadruplets: s.graph.quadruplets().len(),
                    error: None,
                });
                out.stats.add(&s.stats);
                out.failures.extend(s.failures);
                out.warnings.extend(s.warnings);
                out.document_graphs.push(s.graph);
            }
            Err(e) => {
                warn!("document {} failed: {e}", doc.doc_id);
                let message = e.to_string();
                match e {
                    ExtractionError::DocumentFailed { failures, .. } => out.failures.extend(failures),
                    other => {
                        let stage = match mode {
                            SynthesisMode::SingleStep if !matches!(other, ExtractionError::Chunk(_)) => {
                                Stage::SingleStep
                            }
                            SynthesisMode::MultiStep if !matches!(other, ExtractionError::Chunk(_)) => Stage::Entities,
                            _ => Stage::Chunking,
                        };
                        out.failures.push(ExtractionFailure::new(&doc.doc_id, None, stage, &other));
                    }
                }
                out.documents.push(DocumentReport {
                    doc_id: doc.doc_id.clone(),
                    ok: false,
                    propositions: 0,
                    quadruplets: 0,
                    error: Some(message),
                });
                out.document_graphs.push(KnowledgeGraph::empty());
            }
        }
    }
    out.graph = builder.freeze()?;
    Ok(out)
}

/// Rebuilds the fact/triplet JSON of one document from a graph, in chunk
/// and ordinal order. Used to export (document, target) training pairs.
pub fn facts_json(graph: &KnowledgeGraph, doc_id: &DocId) -> serde_json::Value {
    let mut props: Vec<(&Chunk, &Proposition)> = graph
        .propositions()
        .filter_map(|p| graph.chunk(&p.chunk_id).filter(|c| &c.doc_id == doc_id).map(|c| (c, p)))
        .collect();
    props.sort_by_key(|(c, p)| (c.index, p.ordinal));
    let name = |id| graph.entity(id).map(|e| e.name.clone()).unwrap_or_default();
    let mut map = serde_json::Map::new();
    for (i, (_, p)) in props.iter().enumerate() {
        let mut quads: Vec<&Quadruplet> = graph.quadruplets_of(&p.prop_id).collect();
        quads.sort_by_key(|q| q.ordinal);
        let triplets: Vec<[String; 3]> =
            quads.iter().map(|q| [name(&q.source), q.predicate.clone(), name(&q.target)]).collect();
        map.insert(format!("f{}", i + 1), serde_json::json!({ "fact": p.text, "triplets": triplets }));
    }
    serde_json::Value::Object(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::mock::{canned, FnChat, ScriptRule, ScriptedChat};

    const LILLY_ENTITIES: &str = r#"{
        "n1": {"name": "Eli Lilly", "type": "Organization"},
        "n2": {"name": "Synergy-NASH", "type": "Clinical Trial"},
        "n4": {"name": "tirzepatide", "type": "Drug"},
        "n5": {"name": "nonalcoholic steatohepatitis", "type": "Disease"},
        "n6": {"name": "metabolic dysfunction-associated steatohepatitis", "type": "Disease"},
        "n7": {"name": "year-end earnings report", "type": "Document"}
    }"#;

    #[test]
    fn entity_example_parses_in_order() {
        let out =
            extract_entities("Tucked into Eli Lilly's year-end earnings report...", &canned(LILLY_ENTITIES)).unwrap();
        assert_eq!(out.entities.len(), 6);
        assert_eq!(out.entities[0].name, "Eli Lilly");
        assert_eq!(out.entities[0].type_label, "Organization");
        assert!(out.entities.iter().any(|e| e.name == "tirzepatide" && e.type_label == "Drug"));
    }

    #[test]
    fn empty_and_duplicate_entities() {
        assert!(extract_entities("x", &canned("{}")).unwrap().entities.is_empty());
        let out = parse_entities(r#"{"n1":{"name":"john doe","type":"Person"},"n2":{"name":"John  Doe","type":"Person"},"n3":{},"n4":{"name":"X"}}"#).unwrap();
        assert_eq!(out.entities.len(), 1);
        assert_eq!(out.skipped, 2);
    }

    #[test]
    fn unparseable_reply_carries_raw_output() {
        match extract_entities("x", &canned("no json here")) {
            Err(ExtractionError::Parse { raw_output, .. }) => assert_eq!(raw_output, "no json here"),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn entities(names: &[&str]) -> Vec<EntityNode> {
        names.iter().map(|n| EntityNode::new(n, "T").unwrap()).collect()
    }

    #[test]
    fn validity_rule() {
        let reply = r#"{"f1": {"fact": "F.", "triplets": [["X","r","Y"], ["A","r","Y"], ["Y","r","a "], ["A","r"]]},
                        "f2": {"fact": "G.", "triplets": [["X","r","Y"]]}}"#;
        let out = extract_relations("text", &entities(&["A"]), &canned(reply)).unwrap();
        assert_eq!(out.facts.len(), 1);
        assert_eq!(
            out.facts[0].triplets,
            vec![["A".to_string(), "r".into(), "Y".into()], ["Y".to_string(), "r".into(), "a".into()]]
        );
        assert_eq!(out.rejected_triplets, 2);
        assert_eq!(out.malformed_triplets, 1);
        assert_eq!(out.dropped_facts, 1);
    }

    #[test]
    fn relation_prompt_lists_entity_names() {
        let chat = FnChat::new(|p: &str| {
            assert!(p.ends_with("Entities: Eli Lilly, Mounjaro\nOutput:\n"), "{p}");
            Ok("{}".to_string())
        });
        extract_relations("text", &entities(&["Eli Lilly", "Mounjaro"]), &chat).unwrap();
    }

    fn two_chunk_doc() -> Document {
        Document::new("doc", "Alpha met Beta in Paris. Gamma visited Paris with Alpha.")
    }

    fn script() -> ScriptedChat {
        ScriptedChat::from_rules(vec![
            ScriptRule::contains(
                &["Rewrite the below paragraph", "Paragraph: Gamma visited"],
                "Gamma visited Paris with Alpha.",
            ),
            ScriptRule::contains(
                &["Extract all named entities", "Paragraph: Alpha met"],
                r#"{"n1":{"name":"Alpha","type":"Person"},"n2":{"name":"Beta","type":"Person"},"n3":{"name":"Paris","type":"City"}}"#,
            ),
            ScriptRule::contains(
                &["Extract all named entities", "Paragraph: Gamma visited"],
                r#"{"n1":{"name":"Gamma","type":"Person"},"n2":{"name":"paris","type":"City"},"n3":{"name":"ALPHA","type":"Person"}}"#,
            ),
            ScriptRule::contains(
                &["Extract all facts", "Paragraph: Alpha met"],
                r#"{"f1":{"fact":"Alpha met Beta.","triplets":[["Alpha","met","Beta"],["Beta","met","Alpha"]]},
                    "f2":{"fact":"Alpha was in Paris.","triplets":[["Alpha","was in","Paris"],["Beta","was in","Paris"]]}}"#,
            ),
            ScriptRule::contains(
                &["Extract all facts", "Paragraph: Gamma visited"],
                r#"{"f1":{"fact":"Gamma visited Paris.","triplets":[["Gamma","visited","Paris"],["Gamma","visited with","Alpha"]]},
                    "f2":{"fact":"Gamma travelled with Alpha.","triplets":[["Gamma","travelled with","Alpha"],["Alpha","travelled to","Paris"]]}}"#,
            ),
        ])
    }

    #[test]
    fn two_chunks_two_facts_two_triplets() {
        let config = SynthesisConfig { max_tokens: 7, ..Default::default() };
        let out = synthesize_multi_step(&two_chunk_doc(), &script(), &config).unwrap();
        let g = &out.graph;
        assert_eq!(g.chunk_count(), 2);
        assert_eq!(g.proposition_count(), 4);
        assert_eq!(g.quadruplets().len(), 8);
        // Alpha and Paris recur across chunks as a single node each
        assert_eq!(g.entity_count(), 4);
        assert_eq!(g.entity_by_name("alpha").unwrap().name, "Alpha");
        assert!(out.failures.is_empty());
    }

    #[test]
    fn failing_chunk_is_skipped_and_recorded() {
        let config = SynthesisConfig { max_tokens: 7, ..Default::default() };
        let chat = ScriptedChat::from_rules(script_rules_without_second_relations());
        let out = synthesize_multi_step(&two_chunk_doc(), &chat, &config).unwrap();
        assert_eq!(out.graph.chunk_count(), 2);
        assert_eq!(out.graph.proposition_count(), 2);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].stage, Stage::Relations);

        let dead = FnChat::new(|_: &str| Ok("not json".to_string()));
        assert!(matches!(
            synthesize_multi_step(&two_chunk_doc(), &dead, &config),
            Err(ExtractionError::DocumentFailed { .. })
        ));
    }

    fn script_rules_without_second_relations() -> Vec<ScriptRule> {
        let mut rules = script().script().rules.clone();
        rules.retain(|r| {
            !r.contains.iter().any(|c| c == "Paragraph: Gamma visited")
                || !r.contains.iter().any(|c| c == "Extract all facts")
        });
        rules
    }

    #[test]
    fn single_step_matches_multi_step_on_one_chunk() {
        let doc = Document::new("d", "Alpha met Beta in Paris.");
        let facts = r#"{"f1":{"fact":"Alpha met Beta.","triplets":[["Alpha","met","Beta"]]},"f2":{"fact":"Alpha was in Paris.","triplets":[["Alpha","was in","Paris"]]}}"#;
        let ents = r#"{"n1":{"name":"Alpha","type":"Person"},"n2":{"name":"Beta","type":"Person"},"n3":{"name":"Paris","type":"City"}}"#;
        let multi = ScriptedChat::from_rules(vec![
            ScriptRule::contains(&["Extract all named entities"], ents),
            ScriptRule::contains(&["Extract all facts"], facts),
        ]);
        let m = synthesize_multi_step(&doc, &multi, &SynthesisConfig::default()).unwrap().graph;
        let s = synthesize_single_step(&doc, &canned(facts), &SynthesisConfig::default()).unwrap().graph;
        let texts = |g: &KnowledgeGraph| g.quadruplets().iter().map(|q| g.triplet_text(q)).collect::<Vec<_>>();
        assert_eq!(texts(&m), texts(&s));
        let props = |g: &KnowledgeGraph| g.propositions().map(|p| p.text.clone()).collect::<Vec<_>>();
        assert_eq!(props(&m), props(&s));
    }

    #[test]
    fn single_step_with_no_facts_warns() {
        let out = synthesize_single_step(
            &two_chunk_doc(),
            &canned("{}"),
            &SynthesisConfig { max_tokens: 7, ..Default::default() },
        )
        .unwrap();
        assert_eq!(out.graph.chunk_count(), 2);
        assert!(out.graph.quadruplets().is_empty());
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn single_step_attributes_facts_to_best_chunk() {
        let facts = r#"{"f1":{"fact":"Gamma visited Paris.","triplets":[["Gamma","visited","Paris"]]},"f2":{"fact":"Alpha met Beta.","triplets":[["Alpha","met","Beta"]]}}"#;
        let out = synthesize_single_step(
            &two_chunk_doc(),
            &canned(facts),
            &SynthesisConfig { max_tokens: 7, ..Default::default() },
        )
        .unwrap();
        let g = out.graph;
        let chunk_of =
            |text: &str| g.chunk(&g.propositions().find(|p| p.text == text).unwrap().chunk_id).unwrap().index;
        assert_eq!(chunk_of("Gamma visited Paris."), 1);
        assert_eq!(chunk_of("Alpha met Beta."), 0);
    }

    #[test]
    fn empty_corpus_gives_empty_graph() {
        let out = synthesize_corpus(&[], &canned("{}"), &SynthesisConfig::default(), SynthesisMode::MultiStep).unwrap();
        assert!(out.graph.is_empty());
    }

    #[test]
    fn facts_json_round_trips_through_parser() {
        let config = SynthesisConfig { max_tokens: 7, ..Default::default() };
        let out = synthesize_multi_step(&two_chunk_doc(), &script(), &config).unwrap();
        let json = facts_json(&out.graph, &DocId::from("doc"));
        let parsed = parse_facts(&json.to_string()).unwrap();
        assert_eq!(parsed.facts.len(), 4);
        assert_eq!(parsed.facts[0].fact_text, "Alpha met Beta.");
        assert_eq!(parsed.facts[3].triplets[1], ["Alpha".to_string(), "travelled to".into(), "Paris".into()]);
    }
}
