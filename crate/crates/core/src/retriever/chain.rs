//! Chain-of-Triplet retrieval: decompose a question into triplet queries with
//! `#k` placeholders, retrieve triplets per query and bind placeholders from
//! the best hit as the chain proceeds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{embed_query, RetrievalError};
use crate::client::{ChatClient, ChatRequest, EmbedClient};
use crate::model::{canonical_triplet, KnowledgeGraph, QuadId};
use crate::prompts;
use crate::scalar::Scalar;
use crate::store::VectorIndex;
use crate::text::normalize_name;

pub const DEFAULT_PER_QUERY: usize = 20;

/// `#` followed by one or more ASCII digits, nothing else.
pub fn is_placeholder(part: &str) -> bool {
    part.len() > 1 && part.starts_with('#') && part[1..].chars().all(|c| c.is_ascii_digit())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletQuery {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub position: usize,
}

impl TripletQuery {
    pub fn parts(&self) -> [&str; 3] {
        [&self.head, &self.relation, &self.tail]
    }

    /// Parses `head || relation || tail`. Parts mentioning `#` must be
    /// well-formed placeholders, and at least one part must not be one.
    pub fn parse(line: &str, position: usize) -> Option<Self> {
        let parts: Vec<&str> = line.split("||").map(str::trim).collect();
        if parts.len() != 3 || parts.iter().any(|p| p.is_empty()) {
            return None;
        }
        if parts.iter().any(|p| p.contains('#') && !is_placeholder(p)) {
            return None;
        }
        if parts.iter().all(|p| is_placeholder(p)) {
            return None;
        }
        Some(Self { head: parts[0].to_string(), relation: parts[1].to_string(), tail: parts[2].to_string(), position })
    }

    pub fn render(&self) -> String {
        format!("{} || {} || {}", self.head, self.relation, self.tail)
    }
}

/// Strips list decorations such as `1.`, `-` or `*` before a triplet line.
fn strip_bullet(line: &str) -> &str {
    let t = line.trim().trim_start_matches(['-', '*', '•']).trim_start();
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 && t[digits..].starts_with(['.', ')']) {
        t[digits + 1..].trim_start()
    } else {
        t
    }
}

/// Parses every `head || relation || tail` line of a reply, in order.
pub fn parse_triplet_chain(raw: &str) -> Vec<TripletQuery> {
    raw.lines()
        .map(strip_bullet)
        .filter(|l| l.contains("||"))
        .filter_map(|l| TripletQuery::parse(l, 0))
        .enumerate()
        .map(|(i, q)| TripletQuery { position: i, ..q })
        .collect()
}

pub fn decompose_to_triplet_chain<C: ChatClient + ?Sized>(
    question: &str,
    chat: &C,
) -> Result<Vec<TripletQuery>, RetrievalError> {
    if question.trim().is_empty() {
        return Err(RetrievalError::InvalidInput("empty question".into()));
    }
    let raw = chat.chat(&ChatRequest::user(prompts::triplet_chain(question)))?;
    let chain = parse_triplet_chain(&raw);
    if chain.is_empty() {
        return Err(RetrievalError::Decomposition { raw_output: raw });
    }
    Ok(chain)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTriplet {
    pub quad_id: QuadId,
    pub text: String,
    pub score: f64,
}

/// One executed step of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStep {
    pub query: TripletQuery,
    /// The query after substituting earlier bindings.
    pub resolved: TripletQuery,
    /// Text embedded for the search; unbound placeholders render empty.
    pub query_text: String,
    pub triplets: Vec<ScoredTriplet>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChainRetrieval {
    pub steps: Vec<ChainStep>,
    pub bindings: BTreeMap<String, String>,
    /// Placeholders still unbound at the end of the chain.
    pub unresolved: Vec<String>,
}

impl ChainRetrieval {
    /// Retrieved triplets across all steps, first occurrence kept, in
    /// step-then-rank order.
    pub fn triplets(&self) -> Vec<&ScoredTriplet> {
        let mut seen = std::collections::BTreeSet::new();
        self.steps.iter().flat_map(|s| &s.triplets).filter(|t| seen.insert(&t.quad_id)).collect()
    }

    pub fn resolved_chain(&self) -> String {
        self.steps.iter().map(|s| s.resolved.render()).collect::<Vec<_>>().join("\n")
    }
}

/// Runs a triplet chain against the triplet index.
///
/// For each query in order: earlier bindings are substituted, the query is
/// embedded as `head | relation | tail` (unbound placeholders empty) and the
/// top `per_query` triplets are taken. Each still-unbound placeholder is then
/// bound from the top-1 triplet: relation placeholders take its predicate;
/// head/tail placeholders take an endpoint name not already present in the
/// query, preferring the endpoint in the same position.
pub fn run_chain<T: Scalar, E: EmbedClient + ?Sized>(
    chain: &[TripletQuery],
    graph: &KnowledgeGraph,
    triplet_index: &VectorIndex<QuadId, T>,
    embedder: &E,
    per_query: usize,
) -> Result<ChainRetrieval, RetrievalError> {
    if per_query == 0 {
        return Err(RetrievalError::InvalidInput("per_query must be at least 1".into()));
    }
    let mut out = ChainRetrieval::default();
    for query in chain {
        let sub = |p: &str| -> String {
            if is_placeholder(p) {
                out.bindings.get(p).cloned().unwrap_or_else(|| p.to_string())
            } else {
                p.to_string()
            }
        };
        let resolved = TripletQuery {
            head: sub(&query.head),
            relation: sub(&query.relation),
            tail: sub(&query.tail),
            position: query.position,
        };
        let shown = |p: &str| if is_placeholder(p) { String::new() } else { p.to_string() };
        let query_text = canonical_triplet(&shown(&resolved.head), &shown(&resolved.relation), &shown(&resolved.tail));
        let q = embed_query::<T, E>(&query_text, embedder)?;
        let top = if triplet_index.is_empty() { Vec::new() } else { triplet_index.top_m(&q, per_query)? };
        let triplets: Vec<ScoredTriplet> = top
            .into_iter()
            .filter_map(|(quad_id, score)| {
                graph.quadruplet(&quad_id).map(|quad| ScoredTriplet {
                    text: graph.triplet_text(quad),
                    quad_id,
                    score: score.as_f64(),
                })
            })
            .collect();

        if let Some(best) = triplets.first().and_then(|t| graph.quadruplet(&t.quad_id)) {
            let name = |id| graph.entity(id).map(|e| e.name.clone()).unwrap_or_default();
            let (source, target) = (name(&best.source), name(&best.target));
            let present: Vec<String> =
                resolved.parts().iter().filter(|p| !is_placeholder(p)).map(|p| normalize_name(p)).collect();
            let mut used: Vec<String> = Vec::new();
            let slots = [(&resolved.head, [&source, &target]), (&resolved.tail, [&target, &source])];
            if is_placeholder(&resolved.relation) && !out.bindings.contains_key(&resolved.relation) {
                out.bindings.insert(resolved.relation.clone(), best.predicate.clone());
            }
            for (slot, prefs) in slots {
                if !is_placeholder(slot) || out.bindings.contains_key(slot.as_str()) {
                    continue;
                }
                let pick = prefs.into_iter().find(|cand| {
                    let n = normalize_name(cand);
                    !n.is_empty() && !present.contains(&n) && !used.contains(&n)
                });
                if let Some(value) = pick {
                    used.push(normalize_name(value));
                    out.bindings.insert(slot.clone(), value.clone());
                }
            }
        }
        out.steps.push(ChainStep { query: query.clone(), resolved, query_text, triplets });
    }
    let mut unresolved: Vec<String> = chain
        .iter()
        .flat_map(|q| [q.head.clone(), q.relation.clone(), q.tail.clone()])
        .filter(|p| is_placeholder(p) && !out.bindings.contains_key(p))
        .collect();
    unresolved.sort();
    unresolved.dedup();
    out.unresolved = unresolved;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::mock::canned;

    #[test]
    fn placeholder_syntax() {
        assert!(is_placeholder("#1"));
        assert!(is_placeholder("#12"));
        assert!(!is_placeholder("#"));
        assert!(!is_placeholder("#a"));
        assert!(!is_placeholder("1"));
    }

    #[test]
    fn prompt_examples_parse() {
        let chat = canned("Hampton Del Ruth || was born on || #1\nTed Kotcheff || was born on || #2\n");
        let chain = decompose_to_triplet_chain("Who is older, Hampton Del Ruth or Ted Kotcheff?", &chat).unwrap();
        assert_eq!(chain.len(), 2);
        assert_eq!(chain[0].parts(), ["Hampton Del Ruth", "was born on", "#1"]);
        assert_eq!(chain[1].parts(), ["Ted Kotcheff", "was born on", "#2"]);
        assert_eq!(chain[1].position, 1);

        let chain = parse_triplet_chain(
            "Decompose Triplets:\n\n1. Suffolk Traction Company || served || #1\n2. #1 || is located in || #2",
        );
        assert_eq!(chain[0].parts(), ["Suffolk Traction Company", "served", "#1"]);
        assert_eq!(chain[1].parts(), ["#1", "is located in", "#2"]);
    }

    #[test]
    fn malformed_replies() {
        assert!(matches!(
            decompose_to_triplet_chain("q?", &canned("I don't know.")),
            Err(RetrievalError::Decomposition { .. })
        ));
        assert!(parse_triplet_chain("#1 || #2 || #3\nA || r || #x\nA || r").is_empty());
    }
}
