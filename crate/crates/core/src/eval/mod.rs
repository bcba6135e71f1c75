//! KG coverage evaluation against proxy ground-truth triplets, plus
//! retrieval and QA metrics.

mod metrics;

pub use metrics::{
    average_precision, evaluate_qa, hits_at_k, normalize_answer, qa_em_f1, reciprocal_rank, retrieval_metrics,
    QaReport, QaRow, QueryMetrics, RetrievalReport,
};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ChatClient, ChatRequest, ClientError, EmbedClient};
use crate::model::{canonical_triplet, KnowledgeGraph, QuadId, Quadruplet};
use crate::prompts;
use crate::retriever::RetrievalError;
use crate::scalar::Scalar;
use crate::store::{IndexError, VectorIndex};
use crate::text::{bag, clipped_overlap, overlap_f1, strip_punctuation};

pub const DEFAULT_COVERAGE_THRESHOLD: f64 = 0.88;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("ids without a counterpart: {}", .0.join(", "))]
    MissingIds(Vec<String>),
    #[error("no proxy triplet could be generated for question {0}")]
    NoTriplets(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerRole {
    Head,
    Relation,
    Tail,
}

/// Proxy fact derived from a QA pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthTriplet {
    pub question_id: String,
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub answer_role: AnswerRole,
}

/// Whether `answer` occurs in `part` after lowercasing and punctuation removal.
fn mentions(part: &str, answer: &str) -> bool {
    let a = strip_punctuation(answer);
    !a.is_empty() && format!(" {} ", strip_punctuation(part)).contains(&format!(" {a} "))
}

impl GroundTruthTriplet {
    /// Builds a triplet, locating `answer` in the head, then tail, then
    /// relation.
    pub fn with_answer(
        question_id: &str,
        head: &str,
        relation: &str,
        tail: &str,
        answer: &str,
    ) -> Result<Self, EvalError> {
        let (head, relation, tail) = (head.trim(), relation.trim(), tail.trim());
        if head.is_empty() || relation.is_empty() || tail.is_empty() {
            return Err(EvalError::InvalidInput("triplet has an empty part".into()));
        }
        let answer_role = if mentions(head, answer) {
            AnswerRole::Head
        } else if mentions(tail, answer) {
            AnswerRole::Tail
        } else if mentions(relation, answer) {
            AnswerRole::Relation
        } else {
            return Err(EvalError::InvalidInput(format!("answer {answer:?} not found in triplet")));
        };
        Ok(Self {
            question_id: question_id.to_string(),
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
            answer_role,
        })
    }

    pub fn canonical(&self) -> String {
        canonical_triplet(&self.head, &self.relation, &self.tail)
    }
}

/// Parses `question? answer` lines from a decomposition reply.
pub fn parse_decomposition(raw: &str) -> Vec<(String, String)> {
    raw.lines()
        .filter_map(|line| {
            let line = line.trim();
            let q_end = line.rfind('?')?;
            let (q, a) = (line[..=q_end].trim(), line[q_end + 1..].trim());
            (!q.is_empty() && !a.is_empty()).then(|| (q.to_string(), a.to_string()))
        })
        .collect()
}

/// First `head || relation || tail` line of a reply.
pub fn parse_proxy_triplet(raw: &str) -> Option<[String; 3]> {
    raw.lines().find_map(|line| {
        let line = line.trim().trim_matches('`').trim();
        let parts: Vec<&str> = line.split("||").map(str::trim).collect();
        (parts.len() == 3 && parts.iter().all(|p| !p.is_empty()))
            .then(|| [parts[0].to_string(), parts[1].to_string(), parts[2].to_string()])
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProxyOutput {
    pub triplets: Vec<GroundTruthTriplet>,
    pub warnings: Vec<String>,
}

/// Proxy triplets for one QA pair.
///
/// With sub-question/answer pairs, one triplet is requested per pair.
/// Otherwise the question is first decomposed (using `facts` when given); an
/// unparseable decomposition falls back to the original pair. A triplet
/// must carry its pair's answer as head or tail, or it is rejected.
pub fn generate_proxy_triplets<C: ChatClient + ?Sized>(
    question_id: &str,
    question: &str,
    answer: &str,
    sub_qas: Option<&[(String, String)]>,
    facts: &[String],
    chat: &C,
) -> Result<ProxyOutput, EvalError> {
    if question.trim().is_empty() || answer.trim().is_empty() {
        return Err(EvalError::InvalidInput("question and answer must be non-empty".into()));
    }
    let mut out = ProxyOutput::default();
    let pairs: Vec<(String, String)> = match sub_qas {
        Some(p) if !p.is_empty() => p.to_vec(),
        _ => {
            let raw = chat.chat(&ChatRequest::user(prompts::decompose(question, facts, answer)))?;
            let parsed = parse_decomposition(&raw);
            if parsed.is_empty() {
                let w = format!("{question_id}: decomposition unparseable, using the question itself");
                warn!("{w}");
                out.warnings.push(w);
                vec![(question.to_string(), answer.to_string())]
            } else {
                parsed
            }
        }
    };
    for (q, a) in &pairs {
        let raw = chat.chat(&ChatRequest::user(prompts::proxy_triplet(q, a)))?;
        let Some([h, r, t]) = parse_proxy_triplet(&raw) else {
            let w = format!("{question_id}: no triplet parsed for {q:?}");
            warn!("{w}");
            out.warnings.push(w);
            continue;
        };
        if !mentions(&h, a) && !mentions(&t, a) {
            let w = format!("{question_id}: triplet {h} || {r} || {t} lacks answer {a:?} as head or tail");
            warn!("{w}");
            out.warnings.push(w);
            continue;
        }
        out.triplets.push(GroundTruthTriplet::with_answer(question_id, &h, &r, &t, a)?);
    }
    if out.triplets.is_empty() {
        return Err(EvalError::NoTriplets(question_id.to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticMatch {
    pub score: f64,
    pub quad_id: Option<QuadId>,
}

/// Highest cosine between the triplet's canonical text and any quadruplet
/// in the index; ties go to the lowest quad id. An empty index scores 0.
pub fn semantic_score<T: Scalar, E: EmbedClient + ?Sized>(
    gt: &GroundTruthTriplet,
    triplet_index: &VectorIndex<QuadId, T>,
    embedder: &E,
) -> Result<SemanticMatch, EvalError> {
    if triplet_index.is_empty() {
        return Ok(SemanticMatch { score: 0.0, quad_id: None });
    }
    let q = embedder
        .embed(&[&gt.canonical()])?
        .pop()
        .ok_or_else(|| ClientError::Decode("no embedding returned".into()))?
        .cast::<T>();
    let best = triplet_index.top_m(&q, 1)?.pop();
    Ok(match best {
        Some((quad_id, s)) => SemanticMatch { score: s.as_f64(), quad_id: Some(quad_id) },
        None => SemanticMatch { score: 0.0, quad_id: None },
    })
}

/// Token F1 between two texts after lowercasing, punctuation removal and
/// whitespace collapsing, with clipped counts.
pub fn token_f1(candidate: &str, reference: &str) -> f64 {
    let c = strip_punctuation(candidate);
    let r = strip_punctuation(reference);
    let c: Vec<&str> = c.split_whitespace().collect();
    let r: Vec<&str> = r.split_whitespace().collect();
    overlap_f1(clipped_overlap(&bag(c.iter()), &bag(r.iter())), c.len(), r.len())
}

/// Whole-string token F1 between the ground truth and a matched
/// quadruplet, both in canonical form.
pub fn triplet_token_f1(gt: &GroundTruthTriplet, graph: &KnowledgeGraph, quad: &Quadruplet) -> f64 {
    token_f1(&graph.triplet_text(quad), &gt.canonical())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub question_id: String,
    pub triplet: GroundTruthTriplet,
    pub best_match: Option<QuadId>,
    pub semantic_score: f64,
    pub covered: bool,
    pub token_f1: f64,
}

/// Percentage of rows whose semantic score reaches `threshold`.
pub fn coverage(rows: &[CoverageRow], threshold: f64) -> Result<f64, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::InvalidInput("no coverage rows".into()));
    }
    Ok(100.0 * rows.iter().filter(|r| r.semantic_score >= threshold).count() as f64 / rows.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageAggregates {
    pub threshold: f64,
    pub mean_semantic_score: f64,
    /// Percentage.
    pub coverage: f64,
    pub mean_token_f1: f64,
    pub triplets: usize,
    pub distinct_triplets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    pub aggregates: CoverageAggregates,
}

impl CoverageReport {
    pub fn render(&self, label: &str) -> String {
        let a = &self.aggregates;
        format!(
            "{:<20}{:>10}{:>10}{:>17}{:>18}{:>9}\n{label:<20}{:>10}{:>10}{:>17.2}{:>18.2}{:>9.2}\n",
            "method",
            "Triplets",
            "Distinct",
            "Semantic Score",
            "Triplet Coverage",
            "F1",
            a.triplets,
            a.distinct_triplets,
            100.0 * a.mean_semantic_score,
            a.coverage,
            100.0 * a.mean_token_f1
        )
    }
}

/// Scores every ground-truth triplet against the graph.
pub fn evaluate_coverage<T: Scalar, E: EmbedClient + ?Sized>(
    gts: &[GroundTruthTriplet],
    graph: &KnowledgeGraph,
    triplet_index: &VectorIndex<QuadId, T>,
    embedder: &E,
    threshold: f64,
) -> Result<CoverageReport, EvalError> {
    if gts.is_empty() {
        return Err(EvalError::InvalidInput("no ground-truth triplets".into()));
    }
    let mut rows = Vec::with_capacity(gts.len());
    for gt in gts {
        let m = semantic_score(gt, triplet_index, embedder)?;
        let token_f1 =
            m.quad_id.as_ref().and_then(|id| graph.quadruplet(id)).map_or(0.0, |q| triplet_token_f1(gt, graph, q));
        rows.push(CoverageRow {
            question_id: gt.question_id.clone(),
            triplet: gt.clone(),
            best_match: m.quad_id,
            semantic_score: m.score,
            covered: m.score >= threshold,
            token_f1,
        });
    }
    let n = rows.len() as f64;
    let aggregates = CoverageAggregates {
        threshold,
        mean_semantic_score: rows.iter().map(|r| r.semantic_score).sum::<f64>() / n,
        coverage: coverage(&rows, threshold)?,
        mean_token_f1: rows.iter().map(|r| r.token_f1).sum::<f64>() / n,
        triplets: graph.quadruplets().len(),
        distinct_triplets: graph.distinct_triplets().len(),
    };
    Ok(CoverageReport { rows, aggregates })
}
