//! Triplet density (quadruplets per 100 words) by document length.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use super::ExtractionError;
use crate::model::{DocId, Document, KnowledgeGraph};
use crate::text::word_count;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    /// Bucket covers word counts in `(upper - width, upper]`.
    pub bucket_upper: usize,
    pub documents: usize,
    pub mean_density: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    pub bucket_width: usize,
    pub rows: Vec<DensityRow>,
    /// Documents with no words, left out of every bucket.
    pub excluded: Vec<DocId>,
}

impl DensityTable {
    pub fn render(&self) -> String {
        let mut out = format!("{:>12}  {:>5}  {:>18}\n", "words", "docs", "triplets/100 words");
        for r in &self.rows {
            let lo = r.bucket_upper.saturating_sub(self.bucket_width) + 1;
            out.push_str(&format!(
                "{:>12}  {:>5}  {:>18.2}\n",
                format!("{lo}-{}", r.bucket_upper),
                r.documents,
                r.mean_density
            ));
        }
        out
    }
}

/// Density of each document is `100 * quadruplets / words`; the table holds
/// the mean per length bucket. `graphs[i]` must be the graph of `docs[i]`.
pub fn triplet_density(
    graphs: &[KnowledgeGraph],
    docs: &[Document],
    bucket_width: usize,
) -> Result<DensityTable, ExtractionError> {
    if graphs.len() != docs.len() {
        return Err(ExtractionError::InvalidInput(format!("{} graphs for {} documents", graphs.len(), docs.len())));
    }
    if bucket_width == 0 {
        return Err(ExtractionError::InvalidInput("bucket width must be at least 1".into()));
    }
    let mut buckets: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    let mut excluded = Vec::new();
    for (graph, doc) in graphs.iter().zip(docs) {
        let n = word_count(&doc.text);
        if n == 0 {
            warn!("document {} has no words; excluded from density", doc.doc_id);
            excluded.push(doc.doc_id.clone());
            continue;
        }
        let density = 100.0 * graph.quadruplets().len() as f64 / n as f64;
        let entry = buckets.entry(n.div_ceil(bucket_width)).or_default();
        entry.0 += 1;
        entry.1 += density;
    }
    Ok(DensityTable {
        bucket_width,
        rows: buckets
            .into_iter()
            .map(|(b, (count, sum))| DensityRow {
                bucket_upper: b * bucket_width,
                documents: count,
                mean_density: sum / count as f64,
            })
            .collect(),
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Chunk, ChunkId, EntityNode, GraphBuilder, PropId, Proposition, QuadId, Quadruplet};

    fn doc_with(words: usize, quads: usize, id: &str) -> (KnowledgeGraph, Document) {
        let doc = Document::new(id, vec!["w"; words].join(" "));
        let mut b = GraphBuilder::new();
        let chunk_id = ChunkId::derive(&doc.doc_id, 0);
        b.add_chunk(Chunk {
            chunk_id: chunk_id.clone(),
            doc_id: doc.doc_id.clone(),
            index: 0,
            text: doc.text.clone(),
            decontextualized_text: None,
            rouge_f1: None,
            drift_rejected: false,
            token_count: words,
        })
        .unwrap();
        let a = b.merge_entity(EntityNode::new("A", "T").unwrap()).unwrap();
        for i in 0..quads {
            let prop_id = PropId::derive(&chunk_id, i);
            b.add_proposition(Proposition {
                prop_id: prop_id.clone(),
                text: "A r A.".into(),
                chunk_id: chunk_id.clone(),
                ordinal: i,
            })
            .unwrap();
            b.add_quadruplet(Quadruplet {
                quad_id: QuadId::derive(&chunk_id, i),
                source: a.clone(),
                predicate: "r".into(),
                target: a.clone(),
                prop_id,
                chunk_id: chunk_id.clone(),
                ordinal: i,
            })
            .unwrap();
        }
        (b.freeze().unwrap(), doc)
    }

    #[test]
    fn definition_and_hand_cases() {
        let (g, d) = doc_with(100, 5, "a");
        let t = triplet_density(&[g], &[d], 100).unwrap();
        assert_eq!(t.rows, vec![DensityRow { bucket_upper: 100, documents: 1, mean_density: 5.0 }]);

        let (g1, d1) = doc_with(100, 4, "a");
        let (g2, d2) = doc_with(300, 12, "b");
        let t = triplet_density(&[g1, g2], &[d1, d2], 100).unwrap();
        let got: Vec<_> = t.rows.iter().map(|r| (r.bucket_upper, r.mean_density)).collect();
        assert_eq!(got, vec![(100, 4.0), (300, 4.0)]);

        assert!(triplet_density(&[], &[], 100).unwrap().rows.is_empty());
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        let (g, _) = doc_with(10, 1, "a");
        assert!(triplet_density(&[g], &[], 100).is_err());
    }
}
