//! Retrieval (Hits@k, MRR, MAP) and QA (EM, F1) metrics.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::ChunkId;
use crate::retriever::RetrievalResult;
use crate::text::{bag, clipped_overlap, overlap_f1};

/// Per-query retrieval scores, as fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    /// `(k, |gold ∩ top-k| / |gold|)` for each requested k.
    pub hits: Vec<(usize, f64)>,
    pub reciprocal_rank: f64,
    pub average_precision: f64,
}

/// Gold recall within the top `k`.
pub fn hits_at_k(ranked: &[&ChunkId], gold: &BTreeSet<ChunkId>, k: usize) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let found = ranked.iter().take(k).collect::<BTreeSet<_>>().into_iter().filter(|c| gold.contains(**c)).count();
    found as f64 / gold.len() as f64
}

/// Reciprocal rank of the first gold chunk, 0 if none is retrieved.
pub fn reciprocal_rank(ranked: &[&ChunkId], gold: &BTreeSet<ChunkId>) -> f64 {
    ranked.iter().position(|c| gold.contains(*c)).map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Sum of precision at each relevant rank, over the gold size.
///
/// The sum is kept as an exact fraction while it fits, so the result is the
/// correctly rounded value (AP of `[g, x, g']` is exactly `5.0 / 6.0`).
pub fn average_precision(ranked: &[&ChunkId], gold: &BTreeSet<ChunkId>) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let terms: Vec<(u64, u64)> = {
        let mut seen = BTreeSet::new();
        let mut relevant = 0u64;
        ranked
            .iter()
            .enumerate()
            .filter(|(_, c)| gold.contains(**c) && seen.insert(**c))
            .map(|(i, _)| {
                relevant += 1;
                (relevant, i as u64 + 1)
            })
            .collect()
    };
    match exact_sum(&terms, gold.len() as u64) {
        Some((num, den)) => num as f64 / den as f64,
        None => terms.iter().map(|&(n, d)| n as f64 / d as f64).sum::<f64>() / gold.len() as f64,
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `sum(n / d) / divisor` as a reduced fraction whose parts are exact in an
/// f64, or `None` if it does not fit.
fn exact_sum(terms: &[(u64, u64)], divisor: u64) -> Option<(u128, u128)> {
    const EXACT: u128 = 1 << 53;
    let (mut num, mut den) = (0u128, 1u128);
    for &(n, d) in terms {
        let (n, d) = (u128::from(n), u128::from(d));
        num = num.checked_mul(d)?.checked_add(n.checked_mul(den)?)?;
        den = den.checked_mul(d)?;
        let g = gcd(num, den);
        (num, den) = (num / g, den / g);
    }
    den = den.checked_mul(u128::from(divisor))?;
    let g = gcd(num, den);
    (num, den) = (num / g, den / g);
    (num <= EXACT && den <= EXACT).then_some((num, den))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub queries: usize,
    pub ks: Vec<usize>,
    /// Mean Hits@k per requested k, as fractions.
    pub hits: Vec<f64>,
    pub mrr: f64,
    pub map: f64,
    pub per_query: Vec<QueryMetrics>,
    /// Queries left out because their gold set is empty.
    pub excluded: Vec<String>,
}

impl RetrievalReport {
    /// Aligned table, values as percentages.
    pub fn render(&self, label: &str) -> String {
        let mut head = format!("{:<20}", "method");
        let mut row = format!("{label:<20}");
        for k in &self.ks {
            head.push_str(&format!("{:>9}", format!("Hits@{k}")));
        }
        for h in &self.hits {
            row.push_str(&format!("{:>9.2}", 100.0 * h));
        }
        head.push_str(&format!("{:>9}{:>9}", "MRR", "MAP"));
        row.push_str(&format!("{:>9.2}{:>9.2}", 100.0 * self.mrr, 100.0 * self.map));
        format!("{head}\n{row}\n")
    }
}

/// Scores ranked chunk lists against gold supporting chunks.
///
/// Every result must have a gold entry; queries with an empty gold set are
/// excluded. Means are taken over the remaining queries.
pub fn retrieval_metrics(
    results: &[RetrievalResult],
    gold: &BTreeMap<String, BTreeSet<ChunkId>>,
    ks: &[usize],
) -> Result<RetrievalReport, EvalError> {
    if ks.contains(&0) {
        return Err(EvalError::InvalidInput("k must be at least 1".into()));
    }
    let missing: Vec<String> =
        results.iter().filter(|r| !gold.contains_key(&r.query_id)).map(|r| r.query_id.clone()).collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingIds(missing));
    }
    let mut ids = BTreeSet::new();
    if let Some(dup) = results.iter().find(|r| !ids.insert(&r.query_id)) {
        return Err(EvalError::InvalidInput(format!("duplicate query_id {}", dup.query_id)));
    }

    let mut per_query = Vec::new();
    let mut excluded = Vec::new();
    for r in results {
        let g = &gold[&r.query_id];
        if g.is_empty() {
            warn!("query {} has no gold chunks; excluded", r.query_id);
            excluded.push(r.query_id.clone());
            continue;
        }
        let ranked = r.chunk_ids();
        per_query.push(QueryMetrics {
            query_id: r.query_id.clone(),
            hits: ks.iter().map(|&k| (k, hits_at_k(&ranked, g, k))).collect(),
            reciprocal_rank: reciprocal_rank(&ranked, g),
            average_precision: average_precision(&ranked, g),
        });
    }
    let n = per_query.len();
    let mean = |f: &dyn Fn(&QueryMetrics) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_query.iter().map(f).sum::<f64>() / n as f64
        }
    };
    Ok(RetrievalReport {
        queries: n,
        ks: ks.to_vec(),
        hits: (0..ks.len()).map(|i| mean(&|q| q.hits[i].1)).collect(),
        mrr: mean(&|q| q.reciprocal_rank),
        map: mean(&|q| q.average_precision),
        per_query,
        excluded,
    })
}

/// Reading-comprehension normalization: lowercase, drop punctuation, drop
/// the articles a/an/the, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    no_punct.split_whitespace().filter(|w| !matches!(*w, "a" | "an" | "the")).collect::<Vec<_>>().join(" ")
}

fn answer_f1(prediction: &str, gold: &str) -> f64 {
    let p: Vec<&str> = prediction.split_whitespace().collect();
    let g: Vec<&str> = gold.split_whitespace().collect();
    overlap_f1(clipped_overlap(&bag(p.iter()), &bag(g.iter())), p.len(), g.len())
}

/// Exact match (0 or 1) and best token F1 against any gold answer.
pub fn qa_em_f1(prediction: &str, gold_answers: &[String]) -> Result<(u8, f64), EvalError> {
    if gold_answers.is_empty() {
        return Err(EvalError::InvalidInput("no gold answers".into()));
    }
    let pred = normalize_answer(prediction);
    let mut em = 0u8;
    let mut f1 = 0.0f64;
    for g in gold_answers {
        let g = normalize_answer(g);
        if pred == g {
            em = 1;
        }
        f1 = f1.max(answer_f1(&pred, &g));
    }
    Ok((em, f1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRow {
    pub question_id: String,
    pub prediction: String,
    pub em: u8,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    pub questions: usize,
    /// Mean exact match, as a fraction.
    pub em: f64,
    /// Mean F1, as a fraction.
    pub f1: f64,
    pub rows: Vec<QaRow>,
}

impl QaReport {
    pub fn render(&self, label: &str) -> String {
        format!("{:<20}{:>9}{:>9}\n{label:<20}{:>9.2}{:>9.2}\n", "method", "EM", "F1", 100.0 * self.em, 100.0 * self.f1)
    }
}

/// Scores predictions against gold answers. Every gold question needs a
/// prediction and vice versa.
pub fn evaluate_qa(
    predictions: &BTreeMap<String, String>,
    gold: &BTreeMap<String, Vec<String>>,
) -> Result<QaReport, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::InvalidInput("no predictions".into()));
    }
    let mut missing: Vec<String> = gold.keys().filter(|k| !predictions.contains_key(*k)).cloned().collect();
    missing.extend(predictions.keys().filter(|k| !gold.contains_key(*k)).cloned());
    if !missing.is_empty() {
        return Err(EvalError::MissingIds(missing));
    }
    let mut rows = Vec::new();
    for (qid, pred) in predictions {
        let (em, f1) = qa_em_f1(pred, &gold[qid])?;
        rows.push(QaRow { question_id: qid.clone(), prediction: pred.clone(), em, f1 });
    }
    let n = rows.len() as f64;
    Ok(QaReport {
        questions: rows.len(),
        em: rows.iter().map(|r| f64::from(r.em)).sum::<f64>() / n,
        f1: rows.iter().map(|r| r.f1).sum::<f64>() / n,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retriever::{RetrievalMode, ScoredChunk};

    fn result(qid: &str, ranked: &[&str]) -> RetrievalResult {
        RetrievalResult {
            query_id: qid.into(),
            mode: RetrievalMode::Dense,
            ranked_chunks: ranked.iter().map(|c| ScoredChunk { chunk_id: ChunkId::from(*c), score: 0.0 }).collect(),
            selected_props: vec![],
            hop_paths: vec![],
        }
    }

    #[test]
    fn average_precision_is_correctly_rounded() {
        let ids: Vec<ChunkId> = ["g", "x", "g2"].iter().map(|s| ChunkId::from(*s)).collect();
        let ranked: Vec<&ChunkId> = ids.iter().collect();
        let g: BTreeSet<ChunkId> = [ids[0].clone(), ids[2].clone()].into();
        assert_eq!(average_precision(&ranked, &g), 5.0 / 6.0);

        // long rankings overflow the exact fraction and fall back to floats
        let many: Vec<ChunkId> = (0..400).map(|i| ChunkId::from(format!("c{i}").as_str())).collect();
        let ranked: Vec<&ChunkId> = many.iter().collect();
        let g: BTreeSet<ChunkId> = many.iter().step_by(7).cloned().collect();
        assert!(exact_sum(&[(1, 1), (2, 8), (3, 15)], 3).is_some());
        let approx: f64 =
            many.iter().step_by(7).enumerate().map(|(j, _)| (j + 1) as f64 / (7 * j + 1) as f64).sum::<f64>()
                / g.len() as f64;
        assert!((average_precision(&ranked, &g) - approx).abs() < 1e-12);
    }

    fn gold(entries: &[(&str, &[&str])]) -> BTreeMap<String, BTreeSet<ChunkId>> {
        entries.iter().map(|(q, g)| (q.to_string(), g.iter().map(|c| ChunkId::from(*c)).collect())).collect()
    }

    #[test]
    fn hand_fixture() {
        let r =
            retrieval_metrics(&[result("q", &["g", "x", "g2"])], &gold(&[("q", &["g", "g2"])]), &[1, 2, 3]).unwrap();
        assert_eq!(r.hits, vec![0.5, 0.5, 1.0]);
        assert_eq!(r.mrr, 1.0);
        assert_eq!(r.map, 5.0 / 6.0);
    }

    #[test]
    fn perfect_and_empty_rankings() {
        let r = retrieval_metrics(
            &[result("a", &["1", "2"]), result("b", &["3"])],
            &gold(&[("a", &["1"]), ("b", &["3"])]),
            &[1],
        )
        .unwrap();
        assert_eq!((r.hits[0], r.mrr, r.map), (1.0, 1.0, 1.0));
        let r = retrieval_metrics(&[result("a", &["x", "y"])], &gold(&[("a", &["1"])]), &[2]).unwrap();
        assert_eq!((r.hits[0], r.mrr, r.map), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_gold_excluded_missing_gold_rejected() {
        let r =
            retrieval_metrics(&[result("a", &["1"]), result("b", &["1"])], &gold(&[("a", &["1"]), ("b", &[])]), &[1])
                .unwrap();
        assert_eq!(r.queries, 1);
        assert_eq!(r.excluded, vec!["b"]);
        assert!(matches!(retrieval_metrics(&[result("z", &[])], &gold(&[]), &[1]), Err(EvalError::MissingIds(_))));
    }

    #[test]
    fn qa_cases() {
        assert_eq!(qa_em_f1("The Bay of Fundy", &["Bay of Fundy".into()]).unwrap(), (1, 1.0));
        assert_eq!(qa_em_f1("", &["Maradona".into()]).unwrap(), (0, 0.0));
        let (em, f1) = qa_em_f1("Diego Maradona", &["Maradona".into()]).unwrap();
        assert_eq!(em, 0);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!(qa_em_f1("x", &[]).is_err());
    }

    #[test]
    fn qa_report_requires_alignment() {
        let preds: BTreeMap<_, _> = [("q1".to_string(), "Paris".to_string())].into();
        let gold: BTreeMap<_, _> =
            [("q1".to_string(), vec!["paris".to_string()]), ("q2".to_string(), vec!["x".to_string()])].into();
        assert!(matches!(evaluate_qa(&preds, &gold), Err(EvalError::MissingIds(ids)) if ids == vec!["q2"]));
        assert!(evaluate_qa(&BTreeMap::new(), &gold).is_err());
    }
}
