//! Sentence-boundary chunking, chunk decontextualization and ROUGE-1 drift
//! gating.

use thiserror::Error;

use crate::client::{ChatClient, ChatRequest, ClientError};
use crate::model::{Chunk, ChunkId, Document};
use crate::prompts;
use crate::text::{bag, clipped_overlap, overlap_f1, split_sentences, token_count, words};

pub const DEFAULT_MAX_TOKENS: usize = 256;
pub const DEFAULT_DRIFT_THRESHOLD: f64 = 0.70;

#[derive(Debug, Error)]
pub enum ChunkError {
    #[error("document {0} has no text")]
    EmptyInput(String),
    #[error("max_tokens must be at least 1")]
    InvalidLimit,
    #[error("chunk {chunk_id}: {reason}")]
    Precondition { chunk_id: String, reason: String },
    #[error("chunk {chunk_id}: decontextualization failed: {source}")]
    Client {
        chunk_id: String,
        #[source]
        source: ClientError,
    },
}

/// Splits a document into chunks of whole sentences, greedily packing
/// sentences while the chunk stays within `max_tokens`. A sentence longer
/// than the limit becomes a chunk on its own. Chunk text is its sentences
/// joined by single spaces.
pub fn split_document(doc: &Document, max_tokens: usize) -> Result<Vec<Chunk>, ChunkError> {
    if max_tokens == 0 {
        return Err(ChunkError::InvalidLimit);
    }
    let sentences = split_sentences(&doc.text);
    if sentences.is_empty() {
        return Err(ChunkError::EmptyInput(doc.doc_id.0.clone()));
    }

    let mut groups: Vec<(Vec<String>, usize)> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut current_tokens = 0usize;
    for sentence in sentences {
        let n = token_count(&sentence);
        if !current.is_empty() && current_tokens + n > max_tokens {
            groups.push((std::mem::take(&mut current), current_tokens));
            current_tokens = 0;
        }
        current.push(sentence);
        current_tokens += n;
    }
    if !current.is_empty() {
        groups.push((current, current_tokens));
    }

    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(index, (sentences, tokens))| Chunk {
            chunk_id: ChunkId::derive(&doc.doc_id, index),
            doc_id: doc.doc_id.clone(),
            index,
            text: sentences.join(" "),
            decontextualized_text: None,
            rouge_f1: None,
            drift_rejected: false,
            token_count: tokens,
        })
        .collect())
}

/// ROUGE-1 F1 between two texts over case-folded words with clipped counts.
pub fn rouge1_f1(reference: &str, candidate: &str) -> f64 {
    let r = words(reference);
    let c = words(candidate);
    let overlap = clipped_overlap(&bag(r.iter()), &bag(c.iter()));
    overlap_f1(overlap, c.len(), r.len())
}

/// Rewrites `chunk` with entity mentions resolved against the original text
/// of `previous`, then gates the rewrite on ROUGE-1 F1 against the original.
///
/// The score is always recorded. Below `threshold` the rewrite is discarded
/// and the chunk is marked `drift_rejected`, so downstream steps fall back to
/// the original text.
pub fn decontextualize<C: ChatClient + ?Sized>(
    chunk: &Chunk,
    previous: &Chunk,
    chat: &C,
    threshold: f64,
) -> Result<Chunk, ChunkError> {
    let precondition =
        |reason: &str| ChunkError::Precondition { chunk_id: chunk.chunk_id.0.clone(), reason: reason.to_string() };
    if chunk.index == 0 {
        return Err(precondition("the first chunk is never decontextualized"));
    }
    if previous.doc_id != chunk.doc_id || previous.index + 1 != chunk.index {
        return Err(precondition("previous chunk must immediately precede it in the same document"));
    }

    let request = ChatRequest::user(prompts::decontextualize(&previous.text, &chunk.text));
    let rewrite =
        chat.chat(&request).map_err(|source| ChunkError::Client { chunk_id: chunk.chunk_id.0.clone(), source })?;
    let rewrite = rewrite.trim().to_string();
    let score = rouge1_f1(&chunk.text, &rewrite);

    let mut out = chunk.clone();
    out.rouge_f1 = Some(score);
    if score < threshold || rewrite.is_empty() {
        out.decontextualized_text = None;
        out.drift_rejected = true;
    } else {
        out.decontextualized_text = Some(rewrite);
        out.drift_rejected = false;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::mock::{canned, FnChat};

    fn doc(text: &str) -> Document {
        Document::new("d1", text)
    }

    #[test]
    fn one_sentence_one_chunk() {
        let chunks = split_document(&doc("One two three four five six seven eight nine ten."), 256).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].index, 0);
        assert_eq!(chunks[0].token_count, 11);
    }

    #[test]
    fn empty_document_is_an_error() {
        assert!(matches!(split_document(&doc("   \n "), 256), Err(ChunkError::EmptyInput(_))));
        assert!(matches!(split_document(&doc("x."), 0), Err(ChunkError::InvalidLimit)));
    }

    #[test]
    fn oversized_sentence_stands_alone() {
        let long = format!("Many {}.", vec!["words"; 30].join(" "));
        let text = format!("Short one. {long} Tail end.");
        let chunks = split_document(&doc(&text), 10).unwrap();
        let texts: Vec<_> = chunks.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, vec!["Short one.", long.as_str(), "Tail end."]);
    }

    #[test]
    fn rouge_hand_cases() {
        assert_eq!(rouge1_f1("a b c", "a b c"), 1.0);
        assert_eq!(rouge1_f1("a b c", "x y z"), 0.0);
        assert!((rouge1_f1("a b c", "a b d") - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rouge1_f1("", "a"), 0.0);
        assert_eq!(rouge1_f1("A, B!", "a b"), 1.0);
    }

    fn two_chunks() -> (Chunk, Chunk) {
        let text = "Erica Kestenbaum works for Men's Journal. She said isolation played a factor.";
        let chunks = split_document(&doc(text), 8).unwrap();
        assert_eq!(chunks.len(), 2);
        (chunks[0].clone(), chunks[1].clone())
    }

    #[test]
    fn identical_rewrite_is_accepted() {
        let (first, second) = two_chunks();
        let chat = canned(second.text.clone());
        let out = decontextualize(&second, &first, &chat, DEFAULT_DRIFT_THRESHOLD).unwrap();
        assert_eq!(out.rouge_f1, Some(1.0));
        assert!(!out.drift_rejected);
        assert_eq!(out.effective_text(), second.text);
    }

    #[test]
    fn coreference_rewrite_is_accepted() {
        let (first, second) = two_chunks();
        let chat = canned("Erica Kestenbaum said isolation played a factor.");
        let out = decontextualize(&second, &first, &chat, DEFAULT_DRIFT_THRESHOLD).unwrap();
        // 5 of 6 original words kept, 7 rewrite words: P=5/7, R=5/6
        let expected = 2.0 * (5.0 / 7.0) * (5.0 / 6.0) / (5.0 / 7.0 + 5.0 / 6.0);
        assert!((out.rouge_f1.unwrap() - expected).abs() < 1e-12);
        assert_eq!(out.effective_text(), "Erica Kestenbaum said isolation played a factor.");
    }

    #[test]
    fn unrelated_rewrite_is_rejected() {
        let (first, second) = two_chunks();
        let chat = canned("Completely different words appear here instead.");
        let out = decontextualize(&second, &first, &chat, DEFAULT_DRIFT_THRESHOLD).unwrap();
        assert!(out.rouge_f1.unwrap() < DEFAULT_DRIFT_THRESHOLD);
        assert!(out.drift_rejected);
        assert_eq!(out.effective_text(), second.text);
    }

    #[test]
    fn prompt_carries_previous_original_text() {
        let (first, second) = two_chunks();
        let expected_prev = first.text.clone();
        let chat = FnChat::new(move |prompt: &str| {
            assert!(prompt.contains(&format!("Previous paragraph from Document: {expected_prev}")));
            Ok("She said isolation played a factor.".to_string())
        });
        decontextualize(&second, &first, &chat, DEFAULT_DRIFT_THRESHOLD).unwrap();
    }

    #[test]
    fn first_chunk_is_refused_and_errors_carry_chunk_id() {
        let (first, second) = two_chunks();
        assert!(matches!(decontextualize(&first, &first, &canned("x"), 0.7), Err(ChunkError::Precondition { .. })));
        let failing = FnChat::new(|_: &str| Err(ClientError::Transport { attempts: 1, message: "down".into() }));
        match decontextualize(&second, &first, &failing, 0.7) {
            Err(ChunkError::Client { chunk_id, .. }) => assert_eq!(chunk_id, second.chunk_id.0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
