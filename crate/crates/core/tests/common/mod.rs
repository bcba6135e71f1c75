#![allow(dead_code)]

use propgraph::model::{
    Chunk, ChunkId, DocId, EntityNode, GraphBuilder, KnowledgeGraph, PropId, Proposition, QuadId, Quadruplet,
};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

pub const VOCAB: &[&str] = &[
    "river", "stone", "market", "signal", "harbor", "engine", "forest", "ledger", "canyon", "orbit", "velvet",
    "copper", "lantern", "meadow", "pilot", "quartz", "summit", "timber", "violet", "whistle",
];

pub fn sentence(rng: &mut StdRng, n: usize) -> String {
    (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn chunk(doc: &DocId, index: usize, text: &str) -> Chunk {
    Chunk {
        chunk_id: ChunkId::derive(doc, index),
        doc_id: doc.clone(),
        index,
        text: text.to_string(),
        decontextualized_text: None,
        rouge_f1: None,
        drift_rejected: false,
        token_count: propgraph::text::token_count(text),
    }
}

/// Random graph with entities named `E0..`, propositions spread over up to
/// five chunks, and one to three quadruplets per proposition.
pub fn random_graph(rng: &mut StdRng, n_entities: usize, n_props: usize) -> KnowledgeGraph {
    let doc = DocId::from(format!("doc{}", rng.gen::<u32>()));
    let n_chunks = rng.gen_range(1..=5);
    let mut b = GraphBuilder::new();
    let mut chunks = Vec::new();
    for i in 0..n_chunks {
        let mut c = chunk(&doc, i, &format!("Chunk {i} {}.", sentence(rng, 6)));
        if i > 0 && rng.gen_bool(0.5) {
            let score: f64 = rng.gen_range(0.0..=1.0);
            c.rouge_f1 = Some(score);
            if score < 0.7 {
                c.drift_rejected = true;
            } else {
                c.decontextualized_text = Some(format!("Rewritten {}", c.text));
            }
        }
        chunks.push(c.chunk_id.clone());
        b.add_chunk(c).unwrap();
    }
    let entities: Vec<_> = (0..n_entities)
        .map(|i| {
            let t = ["Person", "Place", "Thing"][i % 3];
            b.merge_entity(EntityNode::new(&format!("E{i}"), t).unwrap()).unwrap()
        })
        .collect();
    let mut prop_ord = vec![0usize; n_chunks];
    let mut quad_ord = vec![0usize; n_chunks];
    for _ in 0..n_props {
        let ci = rng.gen_range(0..n_chunks);
        let chunk_id = chunks[ci].clone();
        let prop_id = PropId::derive(&chunk_id, prop_ord[ci]);
        b.add_proposition(Proposition {
            prop_id: prop_id.clone(),
            text: sentence(rng, 5),
            chunk_id: chunk_id.clone(),
            ordinal: prop_ord[ci],
        })
        .unwrap();
        prop_ord[ci] += 1;
        for _ in 0..rng.gen_range(1..=3) {
            b.add_quadruplet(Quadruplet {
                quad_id: QuadId::derive(&chunk_id, quad_ord[ci]),
                source: entities.choose(rng).unwrap().clone(),
                predicate: VOCAB.choose(rng).unwrap().to_string(),
                target: entities.choose(rng).unwrap().clone(),
                prop_id: prop_id.clone(),
                chunk_id: chunk_id.clone(),
                ordinal: quad_ord[ci],
            })
            .unwrap();
            quad_ord[ci] += 1;
        }
    }
    b.freeze().unwrap()
}

/// A proposition for [`hand_graph`]: chunk index, text, and its triplets.
pub type HandProp<'a> = (usize, &'a str, &'a [(&'a str, &'a str, &'a str)]);

/// Small graph from literal chunk texts and propositions. Entities are
/// created on first mention with type `Thing`.
pub fn hand_graph(chunks: &[&str], props: &[HandProp]) -> KnowledgeGraph {
    let doc = DocId::from("d");
    let mut b = GraphBuilder::new();
    for (i, text) in chunks.iter().enumerate() {
        b.add_chunk(chunk(&doc, i, text)).unwrap();
    }
    let mut prop_ord = vec![0usize; chunks.len()];
    let mut quad_ord = vec![0usize; chunks.len()];
    for (ci, text, triplets) in props {
        let chunk_id = ChunkId::derive(&doc, *ci);
        let prop_id = PropId::derive(&chunk_id, prop_ord[*ci]);
        b.add_proposition(Proposition {
            prop_id: prop_id.clone(),
            text: text.to_string(),
            chunk_id: chunk_id.clone(),
            ordinal: prop_ord[*ci],
        })
        .unwrap();
        prop_ord[*ci] += 1;
        for (h, r, t) in triplets.iter() {
            let source = b.merge_entity(EntityNode::new(h, "Thing").unwrap()).unwrap();
            let target = b.merge_entity(EntityNode::new(t, "Thing").unwrap()).unwrap();
            b.add_quadruplet(Quadruplet {
                quad_id: QuadId::derive(&chunk_id, quad_ord[*ci]),
                source,
                predicate: r.to_string(),
                target,
                prop_id: prop_id.clone(),
                chunk_id: chunk_id.clone(),
                ordinal: quad_ord[*ci],
            })
            .unwrap();
            quad_ord[*ci] += 1;
        }
    }
    b.freeze().unwrap()
}
