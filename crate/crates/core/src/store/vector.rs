//! Exact (flat) cosine-similarity index.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::client::{ClientError, EmbedClient, EmbeddingVector};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("query has dimension {got}, index expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("m must be at least 1")]
    ZeroM,
    #[error("duplicate key {0}")]
    DuplicateKey(String),
    #[error("embedding failed near key {key}: {source}")]
    Embed {
        key: String,
        #[source]
        source: ClientError,
    },
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let (dot, na, nb) = a
        .iter()
        .zip(b)
        .fold((T::zero(), T::zero(), T::zero()), |(d, x, y), (&p, &q)| (d + p * q, x + p * p, y + q * q));
    let denom = na.sqrt() * nb.sqrt();
    if denom == T::zero() {
        T::zero()
    } else {
        // Rounding can push a self-similarity just past 1.
        (dot / denom).max(-T::one()).min(T::one())
    }
}

/// Descending score, then ascending key.
fn rank_order<K: Ord, T: Scalar>(a: &(K, T), b: &(K, T)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0))
}

/// Flat index of keyed embeddings sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex<K, T = f64> {
    dim: usize,
    keys: Vec<K>,
    vectors: Vec<EmbeddingVector<T>>,
    positions: BTreeMap<K, usize>,
}

impl<K: Ord + Clone + std::fmt::Display, T: Scalar> VectorIndex<K, T> {
    pub fn new(dim: usize) -> Self {
        Self { dim, keys: Vec::new(), vectors: Vec::new(), positions: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, key: &K) -> bool {
        self.positions.contains_key(key)
    }

    pub fn get(&self, key: &K) -> Option<&EmbeddingVector<T>> {
        self.positions.get(key).map(|&i| &self.vectors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &EmbeddingVector<T>)> {
        self.keys.iter().zip(&self.vectors)
    }

    /// Entries in ascending key order.
    pub fn sorted(&self) -> impl Iterator<Item = (&K, &EmbeddingVector<T>)> {
        self.positions.iter().map(|(k, &i)| (k, &self.vectors[i]))
    }

    pub fn insert(&mut self, key: K, vector: EmbeddingVector<T>) -> Result<(), IndexError> {
        if self.is_empty() && self.dim == 0 {
            self.dim = vector.dim();
        }
        if vector.dim() != self.dim {
            return Err(IndexError::DimensionMismatch { expected: self.dim, got: vector.dim() });
        }
        if self.positions.contains_key(&key) {
            return Err(IndexError::DuplicateKey(key.to_string()));
        }
        self.positions.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        self.vectors.push(vector);
        Ok(())
    }

    /// Embeds every item whose key is not yet indexed. Returns how many
    /// texts were sent to the embedder.
    pub fn sync<'a, E, I>(&mut self, items: I, embedder: &E) -> Result<usize, IndexError>
    where
        E: EmbedClient + ?Sized,
        I: IntoIterator<Item = (K, &'a str)>,
    {
        let missing: Vec<(K, &str)> = items.into_iter().filter(|(k, _)| !self.contains(k)).collect();
        if missing.is_empty() {
            return Ok(0);
        }
        let batch = embedder.max_batch().max(1);
        for slice in missing.chunks(batch) {
            let texts: Vec<&str> = slice.iter().map(|(_, t)| *t).collect();
            let vectors = embedder.embed(&texts).map_err(|source| {
                let key = match &source {
                    ClientError::InvalidInput { index, .. } => slice.get(*index).unwrap_or(&slice[0]).0.to_string(),
                    _ => slice[0].0.to_string(),
                };
                IndexError::Embed { key, source }
            })?;
            for ((key, _), vector) in slice.iter().zip(vectors) {
                self.insert(key.clone(), vector.cast())?;
            }
        }
        Ok(missing.len())
    }

    /// Scores every entry against `query`.
    pub fn score_all(&self, query: &EmbeddingVector<T>) -> Result<Vec<(K, T)>, IndexError> {
        if !self.is_empty() && query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch { expected: self.dim, got: query.dim() });
        }
        Ok(self.keys.iter().zip(&self.vectors).map(|(k, v)| (k.clone(), cosine(query.values(), v.values()))).collect())
    }

    /// Cosine score of a single entry, if indexed.
    pub fn score(&self, key: &K, query: &EmbeddingVector<T>) -> Option<T> {
        self.get(key).map(|v| cosine(query.values(), v.values()))
    }

    /// Exact top-`m` entries by cosine similarity, descending, ties by
    /// ascending key. Returns `min(m, len)` entries.
    pub fn top_m(&self, query: &EmbeddingVector<T>, m: usize) -> Result<Vec<(K, T)>, IndexError> {
        if m == 0 {
            return Err(IndexError::ZeroM);
        }
        let mut scored = self.score_all(query)?;
        if m < scored.len() {
            scored.select_nth_unstable_by(m - 1, rank_order);
            scored.truncate(m);
        }
        scored.sort_unstable_by(rank_order);
        Ok(scored)
    }

    /// Ranks a subset of keys by similarity to `query`; keys missing from the
    /// index are skipped.
    pub fn rank_subset<'a, I>(&self, keys: I, query: &EmbeddingVector<T>) -> Vec<(K, T)>
    where
        I: IntoIterator<Item = &'a K>,
        K: 'a,
    {
        let mut scored: Vec<(K, T)> =
            keys.into_iter().filter_map(|k| self.score(k, query).map(|s| (k.clone(), s))).collect();
        scored.sort_unstable_by(rank_order);
        scored
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(v: &[f64]) -> EmbeddingVector<f64> {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cosine_basics() {
        assert!((cosine(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]) - 1.0f64).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0f64);
        assert_eq!(cosine(&[0.0, 0.0], &[0.0, 1.0]), 0.0f64);
        assert!((cosine(&[1.0f32, 0.0], &[-1.0, 0.0]) + 1.0).abs() < 1e-6);
    }

    #[test]
    fn stored_vector_ranks_first() {
        let mut idx: VectorIndex<String> = VectorIndex::new(3);
        idx.insert("a".into(), ev(&[1.0, 0.0, 0.0])).unwrap();
        idx.insert("b".into(), ev(&[0.5, 0.5, 0.0])).unwrap();
        idx.insert("c".into(), ev(&[0.0, 0.0, 1.0])).unwrap();
        let top = idx.top_m(&ev(&[0.5, 0.5, 0.0]), 1).unwrap();
        assert_eq!(top[0].0, "b");
        assert!((top[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(idx.top_m(&ev(&[1.0, 1.0, 1.0]), 10).unwrap().len(), 3);
    }

    #[test]
    fn ties_break_by_key() {
        let mut idx: VectorIndex<String> = VectorIndex::new(2);
        for k in ["z", "m", "a"] {
            idx.insert(k.into(), ev(&[1.0, 0.0])).unwrap();
        }
        let keys: Vec<_> = idx.top_m(&ev(&[1.0, 0.0]), 2).unwrap().into_iter().map(|(k, _)| k).collect();
        assert_eq!(keys, vec!["a", "m"]);
    }

    #[test]
    fn dimension_and_m_errors() {
        let mut idx: VectorIndex<String> = VectorIndex::new(2);
        idx.insert("a".into(), ev(&[1.0, 0.0])).unwrap();
        assert!(matches!(idx.top_m(&ev(&[1.0]), 1), Err(IndexError::DimensionMismatch { .. })));
        assert_eq!(idx.top_m(&ev(&[1.0, 0.0]), 0), Err(IndexError::ZeroM));
        assert!(matches!(idx.insert("b".into(), ev(&[1.0])), Err(IndexError::DimensionMismatch { .. })));
        assert!(matches!(idx.insert("a".into(), ev(&[1.0, 0.0])), Err(IndexError::DuplicateKey(_))));
    }
}
