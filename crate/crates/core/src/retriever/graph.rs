//! Bounded multi-source BFS over the proposition-induced bipartite subgraph.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::model::{EntityId, KnowledgeGraph, NodeRef, PropId};

/// A proposition reached from the question entities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reached {
    pub prop_id: PropId,
    /// Bipartite edge count from the nearest question entity (always odd).
    pub distance: usize,
    /// Shortest path from a question entity, alternating entity/proposition.
    pub path: Vec<NodeRef>,
}

/// Propositions of `candidates` within `n_hops` bipartite edges of any seed.
///
/// The subgraph holds the candidate propositions and every entity linked to
/// them; edges to propositions outside the candidate set are ignored. Seeds
/// outside the subgraph reach nothing. Traversal order is deterministic
/// (seeds and neighbors by ascending id), so paths are reproducible.
pub fn within_hops(
    graph: &KnowledgeGraph,
    candidates: &BTreeSet<PropId>,
    seeds: &[EntityId],
    n_hops: usize,
) -> Vec<Reached> {
    let sub_entities: BTreeSet<&EntityId> =
        candidates.iter().filter_map(|p| graph.proposition_neighbors(p).ok()).flatten().collect();
    let seeds: BTreeSet<&EntityId> = seeds.iter().filter(|e| sub_entities.contains(e)).collect();

    let mut dist: BTreeMap<NodeRef, usize> = BTreeMap::new();
    let mut parent: BTreeMap<NodeRef, NodeRef> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for &seed in &seeds {
        let node = NodeRef::Entity(seed.clone());
        dist.insert(node.clone(), 0);
        queue.push_back(node);
    }
    while let Some(node) = queue.pop_front() {
        let d = dist[&node];
        if d >= n_hops {
            continue;
        }
        let next: Vec<NodeRef> = match &node {
            NodeRef::Entity(e) => graph
                .entity_neighbors(e)
                .map(|ps| ps.iter().filter(|p| candidates.contains(*p)).cloned().map(NodeRef::Proposition).collect())
                .unwrap_or_default(),
            NodeRef::Proposition(p) => graph
                .proposition_neighbors(p)
                .map(|es| es.iter().cloned().map(NodeRef::Entity).collect())
                .unwrap_or_default(),
        };
        for n in next {
            if !dist.contains_key(&n) {
                dist.insert(n.clone(), d + 1);
                parent.insert(n.clone(), node.clone());
                queue.push_back(n);
            }
        }
    }

    dist.iter()
        .filter_map(|(node, &d)| match node {
            NodeRef::Proposition(p) => {
                let mut path = vec![node.clone()];
                let mut cur = node;
                while let Some(prev) = parent.get(cur) {
                    path.push(prev.clone());
                    cur = prev;
                }
                path.reverse();
                Some(Reached { prop_id: p.clone(), distance: d, path })
            }
            NodeRef::Entity(_) => None,
        })
        .collect()
}
