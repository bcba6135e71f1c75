//! Line-delimited JSON store layout:
//!
//! ```text
//! kg.meta.json        version, counts, config fingerprint, vector layout
//! entities.jsonl      one record per entity, sorted by id
//! propositions.jsonl  one record per proposition, sorted by id
//! quadruplets.jsonl   one record per quadruplet, sorted by id
//! chunks.jsonl        one record per chunk, sorted by id
//! vectors.bin         u32 dim, u32 count, then count x dim little-endian f32
//!                     rows: propositions by id, then chunks by id
//! ```
//!
//! Every JSON record carries `schema_version`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::vector::VectorIndex;
use super::GraphIndexes;
use crate::client::EmbeddingVector;
use crate::model::{Chunk, EntityNode, KnowledgeGraph, ModelError, Proposition, Quadruplet};
use crate::scalar::Scalar;

pub const SCHEMA_VERSION: u32 = 1;

const META: &str = "kg.meta.json";
const ENTITIES: &str = "entities.jsonl";
const PROPOSITIONS: &str = "propositions.jsonl";
const QUADRUPLETS: &str = "quadruplets.jsonl";
const CHUNKS: &str = "chunks.jsonl";
const VECTORS: &str = "vectors.bin";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: schema version {found}, expected {SCHEMA_VERSION}")]
    VersionMismatch { file: String, found: u32 },
    #[error("corrupt store: {file} record {record}: {reason}")]
    Corrupt { file: String, record: String, reason: String },
    #[error("index does not cover the graph: {0}")]
    IncompleteIndex(String),
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io { path: path.to_path_buf(), source }
    }

    /// The offending record of a corrupt-store error.
    pub fn record(&self) -> Option<&str> {
        match self {
            StoreError::Corrupt { record, .. } => Some(record),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorsMeta {
    pub dim: usize,
    pub propositions: usize,
    pub chunks: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub schema_version: u32,
    pub entity_count: usize,
    pub proposition_count: usize,
    pub quadruplet_count: usize,
    pub chunk_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vectors: Option<VectorsMeta>,
}

#[derive(Serialize)]
struct RecordOut<'a, T> {
    schema_version: u32,
    #[serde(flatten)]
    record: &'a T,
}

#[derive(Deserialize)]
struct RecordIn<T> {
    schema_version: u32,
    #[serde(flatten)]
    record: T,
}

fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, records: impl IntoIterator<Item = &'a T>) -> Result<(), StoreError> {
    let mut buf = Vec::new();
    for record in records {
        serde_json::to_writer(&mut buf, &RecordOut { schema_version: SCHEMA_VERSION, record })
            .expect("in-memory serialization");
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| StoreError::io(path, e))
}

fn read_jsonl<T: DeserializeOwned>(dir: &Path, file: &str) -> Result<Vec<T>, StoreError> {
    let path = dir.join(file);
    let reader = BufReader::new(fs::File::open(&path).map_err(|e| StoreError::io(&path, e))?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| StoreError::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |reason: String| {
            let record = serde_json::from_str::<serde_json::Value>(&line)
                .ok()
                .and_then(|v| {
                    ["entity_id", "prop_id", "quad_id", "chunk_id"]
                        .iter()
                        .find_map(|k| v.get(*k).and_then(|x| x.as_str()).map(str::to_string))
                })
                .unwrap_or_else(|| format!("line {}", n + 1));
            StoreError::Corrupt { file: file.to_string(), record, reason }
        };
        let version = serde_json::from_str::<serde_json::Value>(&line)
            .map_err(|e| corrupt(e.to_string()))?
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| corrupt("missing schema_version".into()))?;
        if version != u64::from(SCHEMA_VERSION) {
            return Err(StoreError::VersionMismatch { file: file.to_string(), found: version as u32 });
        }
        let record: RecordIn<T> = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        debug_assert_eq!(record.schema_version, SCHEMA_VERSION);
        out.push(record.record);
    }
    Ok(out)
}

fn write_meta(dir: &Path, meta: &StoreMeta) -> Result<(), StoreError> {
    let path = dir.join(META);
    let mut text = serde_json::to_string_pretty(meta).expect("in-memory serialization");
    text.push('\n');
    fs::write(&path, text).map_err(|e| StoreError::io(&path, e))
}

fn read_meta(dir: &Path) -> Result<StoreMeta, StoreError> {
    let path = dir.join(META);
    let text = fs::read_to_string(&path).map_err(|e| StoreError::io(&path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
        file: META.into(),
        record: META.into(),
        reason: e.to_string(),
    })?;
    let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != SCHEMA_VERSION {
        return Err(StoreError::VersionMismatch { file: META.into(), found });
    }
    serde_json::from_value(value).map_err(|e| StoreError::Corrupt {
        file: META.into(),
        record: META.into(),
        reason: e.to_string(),
    })
}

fn meta_for(graph: &KnowledgeGraph, fingerprint: Option<&str>, vectors: Option<VectorsMeta>) -> StoreMeta {
    StoreMeta {
        schema_version: SCHEMA_VERSION,
        entity_count: graph.entity_count(),
        proposition_count: graph.proposition_count(),
        quadruplet_count: graph.quadruplets().len(),
        chunk_count: graph.chunk_count(),
        config_fingerprint: fingerprint.map(str::to_string),
        vectors,
    }
}

fn write_records(dir: &Path, graph: &KnowledgeGraph) -> Result<(), StoreError> {
    fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
    write_jsonl(&dir.join(ENTITIES), graph.entities())?;
    write_jsonl(&dir.join(PROPOSITIONS), graph.propositions())?;
    let mut quads: Vec<&Quadruplet> = graph.quadruplets().iter().collect();
    quads.sort_by(|a, b| a.quad_id.cmp(&b.quad_id));
    write_jsonl(&dir.join(QUADRUPLETS), quads)?;
    write_jsonl(&dir.join(CHUNKS), graph.chunks())?;
    Ok(())
}

/// Writes the graph records and metadata (no vectors).
pub fn save_graph(graph: &KnowledgeGraph, dir: &Path) -> Result<(), StoreError> {
    write_records(dir, graph)?;
    let stale = dir.join(VECTORS);
    if stale.exists() {
        fs::remove_file(&stale).map_err(|e| StoreError::io(&stale, e))?;
    }
    write_meta(dir, &meta_for(graph, None, None))
}

/// Writes the graph, optional vector indexes and metadata.
///
/// Indexes must cover every proposition and chunk of the graph. Vectors are
/// stored as `f32`.
pub fn save_store<T: Scalar>(
    dir: &Path,
    graph: &KnowledgeGraph,
    indexes: Option<&GraphIndexes<T>>,
    config_fingerprint: Option<&str>,
) -> Result<(), StoreError> {
    write_records(dir, graph)?;
    let vectors_path = dir.join(VECTORS);
    let vectors = match indexes {
        Some(ix) => {
            if let Some(p) = graph.propositions().find(|p| !ix.propositions.contains(&p.prop_id)) {
                return Err(StoreError::IncompleteIndex(format!("proposition {}", p.prop_id)));
            }
            if let Some(c) = graph.chunks().find(|c| !ix.chunks.contains(&c.chunk_id)) {
                return Err(StoreError::IncompleteIndex(format!("chunk {}", c.chunk_id)));
            }
            let dim = ix.dim();
            let rows: Vec<&EmbeddingVector<T>> = graph
                .propositions()
                .map(|p| ix.propositions.get(&p.prop_id).expect("checked"))
                .chain(graph.chunks().map(|c| ix.chunks.get(&c.chunk_id).expect("checked")))
                .collect();
            let mut buf = Vec::with_capacity(8 + rows.len() * dim * 4);
            buf.extend_from_slice(&(dim as u32).to_le_bytes());
            buf.extend_from_slice(&(rows.len() as u32).to_le_bytes());
            for row in rows {
                for &v in row.values() {
                    buf.extend_from_slice(&v.as_f32().to_le_bytes());
                }
            }
            let mut file = fs::File::create(&vectors_path).map_err(|e| StoreError::io(&vectors_path, e))?;
            file.write_all(&buf).map_err(|e| StoreError::io(&vectors_path, e))?;
            Some(VectorsMeta { dim, propositions: graph.proposition_count(), chunks: graph.chunk_count() })
        }
        None => {
            if vectors_path.exists() {
                fs::remove_file(&vectors_path).map_err(|e| StoreError::io(&vectors_path, e))?;
            }
            None
        }
    };
    write_meta(dir, &meta_for(graph, config_fingerprint, vectors))
}

fn corrupt_from_model(err: ModelError) -> StoreError {
    let file = match &err {
        ModelError::DanglingReference { field, .. } if *field == "chunk_id" => {
            "propositions.jsonl or quadruplets.jsonl"
        }
        ModelError::DanglingReference { .. } => QUADRUPLETS,
        _ => "store",
    };
    StoreError::Corrupt {
        file: file.to_string(),
        record: err.record().unwrap_or("?").to_string(),
        reason: err.to_string(),
    }
}

/// Loads and validates a graph written by [`save_graph`] or [`save_store`].
pub fn load_graph(dir: &Path) -> Result<KnowledgeGraph, StoreError> {
    let meta = read_meta(dir)?;
    let entities: Vec<EntityNode> = read_jsonl(dir, ENTITIES)?;
    let propositions: Vec<Proposition> = read_jsonl(dir, PROPOSITIONS)?;
    let quadruplets: Vec<Quadruplet> = read_jsonl(dir, QUADRUPLETS)?;
    let chunks: Vec<Chunk> = read_jsonl(dir, CHUNKS)?;
    let graph = KnowledgeGraph::from_parts(entities, propositions, quadruplets, chunks).map_err(corrupt_from_model)?;
    let counts = (graph.entity_count(), graph.proposition_count(), graph.quadruplets().len(), graph.chunk_count());
    if counts != (meta.entity_count, meta.proposition_count, meta.quadruplet_count, meta.chunk_count) {
        return Err(StoreError::Corrupt {
            file: META.into(),
            record: META.into(),
            reason: format!("record counts {counts:?} disagree with metadata"),
        });
    }
    Ok(graph)
}

/// Loads the graph, metadata and (if present) vector indexes.
pub fn load_store<T: Scalar>(dir: &Path) -> Result<(KnowledgeGraph, Option<GraphIndexes<T>>, StoreMeta), StoreError> {
    let graph = load_graph(dir)?;
    let meta = read_meta(dir)?;
    let Some(vmeta) = meta.vectors.clone() else {
        return Ok((graph, None, meta));
    };
    let path = dir.join(VECTORS);
    let bytes = fs::read(&path).map_err(|e| StoreError::io(&path, e))?;
    let corrupt = |reason: String| StoreError::Corrupt { file: VECTORS.into(), record: VECTORS.into(), reason };
    if bytes.len() < 8 {
        return Err(corrupt("truncated header".into()));
    }
    let dim = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    let count = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    if dim != vmeta.dim || count != vmeta.propositions + vmeta.chunks {
        return Err(corrupt(format!("header dim={dim} count={count} disagrees with metadata")));
    }
    if count != graph.proposition_count() + graph.chunk_count() || bytes.len() != 8 + count * dim * 4 {
        return Err(corrupt("row count or length does not match the graph".into()));
    }
    let mut rows = bytes[8..].chunks_exact(dim * 4).map(|row| {
        row.chunks_exact(4)
            .map(|b| T::from_f64_lossy(f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes")))))
            .collect::<Vec<T>>()
    });
    let mut propositions = VectorIndex::new(dim);
    for p in graph.propositions() {
        let v = EmbeddingVector::new(rows.next().expect("length checked")).map_err(|e| corrupt(e.to_string()))?;
        propositions.insert(p.prop_id.clone(), v).map_err(|e| corrupt(e.to_string()))?;
    }
    let mut chunks = VectorIndex::new(dim);
    for c in graph.chunks() {
        let v = EmbeddingVector::new(rows.next().expect("length checked")).map_err(|e| corrupt(e.to_string()))?;
        chunks.insert(c.chunk_id.clone(), v).map_err(|e| corrupt(e.to_string()))?;
    }
    Ok((graph, Some(GraphIndexes { propositions, chunks }), meta))
}
