mod common;

use std::collections::BTreeMap;

use propgraph::chunker::{decontextualize, rouge1_f1, split_document};
use propgraph::client::mock::{Counted, FnChat};
use propgraph::client::ClientError;
use propgraph::extraction::{synthesize_corpus, synthesize_multi_step, SynthesisConfig, SynthesisMode};
use propgraph::model::{Document, UNKNOWN_TYPE};
use propgraph::text::{split_sentences, token_count};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::json;

fn capitalized(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

/// Sentence of `n` vocabulary words (n + 1 tokens with the full stop).
fn random_sentence(rng: &mut StdRng, n: usize) -> String {
    let body = common::sentence(rng, n);
    format!("{}.", capitalized(&body))
}

fn paragraph_of(transcript: &str) -> &str {
    let start = transcript.rfind("\nParagraph: ").map_or(0, |i| i + "\nParagraph: ".len());
    let rest = &transcript[start..];
    &rest[..rest.find('\n').unwrap_or(rest.len())]
}

/// Deterministic extractor: capitalized words are entities, each sentence
/// is a fact linking its first two entities. Rewrites echo the paragraph.
fn echo_reply(transcript: &str) -> Result<String, ClientError> {
    let para = paragraph_of(transcript);
    let caps = |s: &str| -> Vec<String> {
        s.split(|c: char| !c.is_alphanumeric())
            .filter(|w| w.chars().next().is_some_and(char::is_uppercase))
            .map(str::to_string)
            .collect()
    };
    if transcript.contains("Rewrite the below paragraph") {
        return Ok(para.to_string());
    }
    if transcript.contains("\nEntities: ") {
        let mut facts = serde_json::Map::new();
        for (i, s) in split_sentences(para).iter().enumerate() {
            let c = caps(s);
            let tail = c.get(1).cloned().unwrap_or_else(|| "Nothing".into());
            facts.insert(format!("f{i}"), json!({"fact": s, "triplets": [[c[0], "precedes", tail]]}));
        }
        return Ok(serde_json::Value::Object(facts).to_string());
    }
    if transcript.contains("Extract all named entities") {
        let mut ents = serde_json::Map::new();
        for (i, w) in caps(para).into_iter().enumerate() {
            ents.insert(format!("n{i}"), json!({"name": w, "type": "Word"}));
        }
        return Ok(serde_json::Value::Object(ents).to_string());
    }
    Err(ClientError::Mock("unexpected prompt".into()))
}

fn echo() -> FnChat<fn(&str) -> Result<String, ClientError>> {
    FnChat::new(echo_reply as fn(&str) -> Result<String, ClientError>)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chunks_partition_the_sentences(
        seed in any::<u64>(),
        lens in prop::collection::vec(1usize..40, 1..25),
        max_tokens in 1usize..120,
    ) {
        let mut rng = StdRng::seed_from_u64(seed);
        let sentences: Vec<String> = lens.iter().map(|&n| random_sentence(&mut rng, n)).collect();
        let doc = Document::new("d", sentences.join("  "));
        let chunks = split_document(&doc, max_tokens).unwrap();

        let joined: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
        prop_assert_eq!(joined.join(" "), sentences.join(" "));
        let mut next = 0usize;
        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(c.index, i);
            prop_assert_eq!(c.token_count, token_count(&c.text));
            let own = split_sentences(&c.text);
            prop_assert!(c.token_count <= max_tokens || own.len() == 1);
            next += own.len();
            if let Some(following) = sentences.get(next) {
                // greedy: the next sentence would not have fit
                prop_assert!(c.token_count + token_count(following) > max_tokens);
            }
        }
        prop_assert_eq!(next, sentences.len());
    }

    #[test]
    fn rouge_matches_counting_oracle(a in "[a-d ]{0,30}", b in "[a-d ]{0,30}") {
        let count = |s: &str| {
            let mut m: BTreeMap<String, usize> = BTreeMap::new();
            for w in s.split_whitespace() {
                *m.entry(w.to_string()).or_default() += 1;
            }
            m
        };
        let (ca, cb) = (count(&a), count(&b));
        let overlap: usize = ca.iter().map(|(w, n)| (*n).min(cb.get(w).copied().unwrap_or(0))).sum();
        let (la, lb) = (ca.values().sum::<usize>(), cb.values().sum::<usize>());
        let want = if overlap == 0 { 0.0 } else {
            let p = overlap as f64 / lb as f64;
            let r = overlap as f64 / la as f64;
            2.0 * p * r / (p + r)
        };
        let got = rouge1_f1(&a, &b);
        prop_assert!((got - want).abs() < 1e-12);
        prop_assert!((got - rouge1_f1(&b, &a)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&got));
        if la > 0 {
            prop_assert!((rouge1_f1(&a, &a) - 1.0).abs() < 1e-12);
        }
    }
}

fn hundred_token_sentence(rng: &mut StdRng) -> String {
    let s = random_sentence(rng, 99);
    assert_eq!(token_count(&s), 100);
    s
}

#[test]
fn four_hundred_token_sentences() {
    let mut rng = StdRng::seed_from_u64(1);
    let text: Vec<String> = (0..4).map(|_| hundred_token_sentence(&mut rng)).collect();
    let doc = Document::new("d", text.join(" "));
    let sizes = |max| split_document(&doc, max).unwrap().iter().map(|c| c.token_count).collect::<Vec<_>>();
    assert_eq!(sizes(256), [200, 200]);
    assert_eq!(sizes(300), [300, 100]);
    assert_eq!(sizes(400), [400]);
    assert_eq!(sizes(100), [100; 4]);
    assert_eq!(sizes(50), [100; 4]);
}

#[test]
fn drift_gate_and_previous_original_text() {
    let doc = Document::new("d", "Ada wrote programs. She liked engines.");
    let chunks = split_document(&doc, 4).unwrap();
    assert_eq!(chunks.len(), 2);
    let mut prev = chunks[0].clone();
    prev.decontextualized_text = None;

    let seen = std::sync::Mutex::new(String::new());
    let chat = FnChat::new(|t: &str| {
        *seen.lock().unwrap() = t.to_string();
        Ok("Ada liked engines.".to_string())
    });
    // rouge("She liked engines.", "Ada liked engines.") = 2/3
    let out = decontextualize(&chunks[1], &prev, &chat, 0.70).unwrap();
    assert!((out.rouge_f1.unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert!(out.drift_rejected);
    assert_eq!(out.effective_text(), "She liked engines.");
    assert!(seen.lock().unwrap().contains("Previous paragraph from Document: Ada wrote programs."));

    let out = decontextualize(&chunks[1], &prev, &chat, 2.0 / 3.0).unwrap();
    assert!(!out.drift_rejected);
    assert_eq!(out.effective_text(), "Ada liked engines.");
    assert!(decontextualize(&chunks[0], &prev, &chat, 0.7).is_err());
}

#[test]
fn multi_step_call_count() {
    let mut rng = StdRng::seed_from_u64(2);
    for n in 1..6usize {
        let text: Vec<String> = (0..n).map(|_| random_sentence(&mut rng, 9)).collect();
        let doc = Document::new("d", text.join(" "));
        let chat = Counted::new(echo());
        let config = SynthesisConfig { max_tokens: 10, ..Default::default() };
        let out = synthesize_multi_step(&doc, &chat, &config).unwrap();
        assert_eq!(out.graph.chunk_count(), n);
        assert_eq!(chat.calls(), 3 * n - 1);

        let chat = Counted::new(echo());
        let config = SynthesisConfig { max_tokens: 10, decontextualize: false, ..Default::default() };
        synthesize_multi_step(&doc, &chat, &config).unwrap();
        assert_eq!(chat.calls(), 2 * n);
    }
}

#[test]
fn triplet_validity_and_unknown_endpoints() {
    let reply = |t: &str| -> Result<String, ClientError> {
        if t.contains("\nEntities: ") {
            Ok(json!({
                "f1": {"fact": "Ada met Babbage in London.", "triplets": [["Ada", "met", "Babbage"], ["Babbage", "visited", "London"], ["Lovelace", "is", "Countess"]]}
            })
            .to_string())
        } else {
            Ok(json!({"n1": {"name": "Ada", "type": "Person"}}).to_string())
        }
    };
    let doc = Document::new("d", "Ada met Babbage in London.");
    let out = synthesize_multi_step(&doc, &FnChat::new(reply), &SynthesisConfig::default()).unwrap();
    let g = &out.graph;
    let texts: Vec<String> = g.quadruplets().iter().map(|q| g.triplet_text(q)).collect();
    assert_eq!(texts, ["Ada | met | Babbage"]);
    assert_eq!(out.stats.rejected_triplets, 2);
    assert_eq!(g.entity_by_name("Babbage").unwrap().type_label, UNKNOWN_TYPE);
    assert_eq!(g.entity_by_name("Ada").unwrap().type_label, "Person");
}

#[test]
fn corpus_synthesis_is_deterministic() {
    let mut rng = StdRng::seed_from_u64(3);
    let docs: Vec<Document> = (0..8)
        .map(|i| {
            let n = rng.gen_range(1..6);
            let text: Vec<String> = (0..n).map(|_| random_sentence(&mut rng, 7)).collect();
            Document::new(format!("doc{i}"), text.join(" "))
        })
        .collect();
    let config = SynthesisConfig { max_tokens: 16, ..Default::default() };
    let a = synthesize_corpus(&docs, &echo(), &config, SynthesisMode::MultiStep).unwrap();
    let b = synthesize_corpus(&docs, &echo(), &config, SynthesisMode::MultiStep).unwrap();
    assert_eq!(a.graph, b.graph);
    assert_eq!(a.failed_documents(), 0);
    assert_eq!(a.document_graphs.len(), docs.len());
    let sum: usize = a.document_graphs.iter().map(|g| g.proposition_count()).sum();
    assert_eq!(sum, a.graph.proposition_count());

    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    propgraph::store::save_graph(&a.graph, da.path()).unwrap();
    propgraph::store::save_graph(&b.graph, db.path()).unwrap();
    for name in ["entities.jsonl", "propositions.jsonl", "quadruplets.jsonl", "chunks.jsonl"] {
        assert_eq!(std::fs::read(da.path().join(name)).unwrap(), std::fs::read(db.path().join(name)).unwrap());
    }

    let dup = vec![docs[0].clone(), docs[0].clone()];
    assert!(synthesize_corpus(&dup, &echo(), &config, SynthesisMode::MultiStep).is_err());
}
