mod common;

use std::fs;

use propgraph::client::mock::HashEmbedder;
use propgraph::model::NodeRef;
use propgraph::store::{
    build_triplet_index, build_vector_index, load_graph, load_store, refresh_proposition_index, save_graph, save_store,
    StoreError,
};
use propgraph::{EmbeddingVector, GraphIndexes, PropId, VectorIndex};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[test]
fn round_trip_preserves_random_graphs() {
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..50 {
        let n_e = rng.gen_range(1..=50);
        let n_p = rng.gen_range(0..=100);
        let g = common::random_graph(&mut rng, n_e, n_p);
        let dir = tempfile::tempdir().unwrap();
        save_graph(&g, dir.path()).unwrap();
        let back = load_graph(dir.path()).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.quadruplets().len(), g.quadruplets().len());
        for e in g.entities() {
            let node = NodeRef::Entity(e.entity_id.clone());
            assert_eq!(back.neighbors(&node).unwrap(), g.neighbors(&node).unwrap());
        }
    }
}

#[test]
fn saves_are_byte_stable() {
    let mut rng = StdRng::seed_from_u64(11);
    let g = common::random_graph(&mut rng, 20, 40);
    let embedder = HashEmbedder::default();
    let indexes: GraphIndexes<f32> = GraphIndexes::build(&g, &embedder).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    save_store(a.path(), &g, Some(&indexes), Some("fp")).unwrap();
    save_store(b.path(), &g, Some(&indexes), Some("fp")).unwrap();
    for name in
        ["kg.meta.json", "entities.jsonl", "propositions.jsonl", "quadruplets.jsonl", "chunks.jsonl", "vectors.bin"]
    {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let entities = fs::read_to_string(a.path().join("entities.jsonl")).unwrap();
    let ids: Vec<String> = entities
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["entity_id"].as_str().unwrap().to_string())
        .collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    assert!(entities.lines().all(|l| l.starts_with("{\"schema_version\":1,")));
}

#[test]
fn vectors_round_trip_as_f32() {
    let mut rng = StdRng::seed_from_u64(3);
    let g = common::random_graph(&mut rng, 10, 25);
    let embedder = HashEmbedder::new(64);
    let indexes: GraphIndexes<f32> = GraphIndexes::build(&g, &embedder).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_store(dir.path(), &g, Some(&indexes), None).unwrap();
    let (back, loaded, meta) = load_store::<f32>(dir.path()).unwrap();
    assert_eq!(back, g);
    assert_eq!(loaded.unwrap(), indexes);
    let v = meta.vectors.unwrap();
    assert_eq!((v.dim, v.propositions, v.chunks), (64, g.proposition_count(), g.chunk_count()));
    let bytes = fs::read(dir.path().join("vectors.bin")).unwrap();
    assert_eq!(bytes.len(), 8 + (v.propositions + v.chunks) * 64 * 4);
    assert_eq!(u32::from_le_bytes(bytes[0..4].try_into().unwrap()), 64);
}

fn saved(seed: u64) -> (tempfile::TempDir, propgraph::KnowledgeGraph) {
    let mut rng = StdRng::seed_from_u64(seed);
    let g = common::random_graph(&mut rng, 8, 12);
    let dir = tempfile::tempdir().unwrap();
    save_graph(&g, dir.path()).unwrap();
    (dir, g)
}

#[test]
fn dangling_prop_id_names_the_quadruplet() {
    let (dir, g) = saved(5);
    let path = dir.path().join("quadruplets.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    let victim = g.quadruplets()[0].clone();
    let edited = text.replacen(&format!("\"prop_id\":\"{}\"", victim.prop_id), "\"prop_id\":\"p-missing\"", 1);
    assert_ne!(edited, text);
    fs::write(&path, edited).unwrap();
    match load_graph(dir.path()) {
        Err(e @ StoreError::Corrupt { .. }) => assert_eq!(e.record(), Some(victim.quad_id.as_str())),
        other => panic!("expected corrupt store, got {other:?}"),
    }
}

#[test]
fn malformed_line_and_version_mismatch() {
    let (dir, g) = saved(6);
    let path = dir.path().join("propositions.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    let first = g.propositions().next().unwrap().prop_id.clone();
    fs::write(&path, text.replacen("\"text\":", "\"txet\":", 1)).unwrap();
    let err = load_graph(dir.path()).unwrap_err();
    assert_eq!(err.record(), Some(first.as_str()), "{err}");

    let (dir, _) = saved(6);
    let path = dir.path().join("chunks.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replacen("\"schema_version\":1", "\"schema_version\":2", 1)).unwrap();
    assert!(matches!(load_graph(dir.path()), Err(StoreError::VersionMismatch { found: 2, .. })));
}

#[test]
fn index_build_is_cached_and_complete() {
    let empty = propgraph::KnowledgeGraph::empty();
    let embedder = HashEmbedder::default().with_max_batch(7);
    assert!(build_vector_index::<f64, _>(&empty, &embedder).unwrap().is_empty());

    let mut rng = StdRng::seed_from_u64(9);
    let g = common::random_graph(&mut rng, 10, 50);
    let mut index = build_vector_index::<f64, _>(&g, &embedder).unwrap();
    assert_eq!(index.len(), 50);
    assert!(index.iter().all(|(_, v)| v.dim() == 256));
    let calls = embedder.calls();
    assert_eq!(calls, 50usize.div_ceil(7));
    assert_eq!(refresh_proposition_index(&mut index, &g, &embedder).unwrap(), 0);
    assert_eq!(embedder.calls(), calls);

    let triplets = build_triplet_index::<f64, _>(&g, &embedder).unwrap();
    assert_eq!(triplets.len(), g.quadruplets().len());
}

fn oracle_top(entries: &[(PropId, Vec<f64>)], q: &[f64], m: usize) -> Vec<(PropId, f64)> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut all: Vec<(PropId, f64)> = entries
        .iter()
        .map(|(k, v)| {
            let d = dot(v, v).sqrt() * dot(q, q).sqrt();
            (k.clone(), if d == 0.0 { 0.0 } else { dot(v, q) / d })
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(m);
    all
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn top_m_is_a_prefix_of_the_exhaustive_ranking(
        rows in prop::collection::vec(prop::collection::vec(-3i8..=3, 4), 1..60),
        q in prop::collection::vec(-3i8..=3, 4),
        m in 1usize..80,
    ) {
        let entries: Vec<(PropId, Vec<f64>)> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| (PropId::from(format!("p{i:03}")), r.iter().map(|&x| f64::from(x)).collect()))
            .collect();
        let mut index: VectorIndex<PropId> = VectorIndex::new(4);
        for (k, v) in &entries {
            index.insert(k.clone(), EmbeddingVector::new(v.clone()).unwrap()).unwrap();
        }
        let q: Vec<f64> = q.iter().map(|&x| f64::from(x)).collect();
        let got = index.top_m(&EmbeddingVector::new(q.clone()).unwrap(), m).unwrap();
        let want = oracle_top(&entries, &q, m);
        prop_assert_eq!(got.len(), want.len());
        for ((gk, gs), (wk, ws)) in got.iter().zip(&want) {
            prop_assert_eq!(gk, wk);
            prop_assert!((gs - ws).abs() < 1e-12);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(gs));
        }
    }

    #[test]
    fn self_similarity_is_one(v in prop::collection::vec(-100.0f64..100.0, 1..32)) {
        prop_assume!(v.iter().any(|x| *x != 0.0));
        prop_assert!((propgraph::store::cosine(&v, &v) - 1.0).abs() < 1e-9);
    }
}
