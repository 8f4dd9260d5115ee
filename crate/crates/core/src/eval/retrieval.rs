use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::emb1::EmbeddingRecord;
use crate::error::{Error, Result};
use crate::index::{Index, SearchMode};
use crate::vector::{Metric, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub recall_at_k: BTreeMap<usize, f64>,
    pub precision_at_k: BTreeMap<usize, f64>,
    /// Queries that had at least one relevant item in the index.
    pub n_queries: usize,
    pub k_values: Vec<usize>,
}

impl fmt::Display for RetrievalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "queries: {}", self.n_queries)?;
        for k in &self.k_values {
            writeln!(
                f,
                "k={k:<4} recall={:.4} precision={:.4}",
                self.recall_at_k[k], self.precision_at_k[k]
            )?;
        }
        Ok(())
    }
}

/// Exact cosine search; see [`recall_precision_at_k_with`].
pub fn recall_precision_at_k(
    index: &Index,
    queries: &[EmbeddingRecord],
    k_values: &[usize],
) -> Result<RetrievalReport> {
    recall_precision_at_k_with(index, queries, k_values, SearchMode::Exact, Metric::Cosine)
}

/// Leave-one-out retrieval quality with label equality as relevance.
///
/// A query whose id is stored in the index never sees itself. Recall@k divides by
/// `min(k, relevant)` where `relevant` counts same-label entries other than the query;
/// queries with nothing relevant are left out of the averages.
pub fn recall_precision_at_k_with(
    index: &Index,
    queries: &[EmbeddingRecord],
    k_values: &[usize],
    mode: SearchMode,
    metric: Metric,
) -> Result<RetrievalReport> {
    if k_values.is_empty() {
        return Err(Error::InvalidConfig("no k values".into()));
    }
    if k_values.contains(&0) {
        return Err(Error::InvalidK);
    }
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let mut k_values = k_values.to_vec();
    k_values.sort_unstable();
    k_values.dedup();
    let k_max = *k_values.last().expect("non-empty");

    let entries = index.entries();
    let mut class_sizes: HashMap<i32, usize> = HashMap::new();
    for e in &entries {
        *class_sizes.entry(e.label.ok_or(Error::UnlabeledData)?).or_default() += 1;
    }

    let mut recall_sum = vec![0.0; k_values.len()];
    let mut precision_sum = vec![0.0; k_values.len()];
    let mut n_queries = 0;
    for q in queries {
        let label = q.label.ok_or(Error::UnlabeledData)?;
        let self_counted = index.get(q.id).is_some_and(|e| e.label == Some(label));
        let relevant = class_sizes.get(&label).copied().unwrap_or(0) - usize::from(self_counted);
        if relevant == 0 {
            continue;
        }
        let vector = Vector::from_f32(&q.vec)?;
        let hits = index.search(&vector, k_max, mode, metric, Some(q.id))?;
        let matches: Vec<bool> = hits.iter().map(|h| h.label == Some(label)).collect();
        for (slot, &k) in k_values.iter().enumerate() {
            let found = matches.iter().take(k).filter(|&&m| m).count() as f64;
            recall_sum[slot] += found / k.min(relevant) as f64;
            precision_sum[slot] += found / k as f64;
        }
        n_queries += 1;
    }
    if n_queries == 0 {
        return Err(Error::InsufficientData(
            "no query has a relevant item in the index".into(),
        ));
    }
    let n = n_queries as f64;
    Ok(RetrievalReport {
        recall_at_k: k_values.iter().zip(&recall_sum).map(|(&k, s)| (k, s / n)).collect(),
        precision_at_k: k_values.iter().zip(&precision_sum).map(|(&k, s)| (k, s / n)).collect(),
        n_queries,
        k_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::NewEntry;

    fn record(id: u64, label: Option<i32>, vec: &[f32]) -> EmbeddingRecord {
        EmbeddingRecord { id, label, ts: Some(0), vec: vec.to_vec() }
    }

    fn index_of(records: &[EmbeddingRecord]) -> Index {
        Index::build(records.iter().map(|r| NewEntry {
            id: r.id,
            vector: Vector::from_f32(&r.vec).unwrap(),
            label: r.label,
            timestamp: 0,
        }))
        .unwrap()
    }

    #[test]
    fn single_query_with_matching_neighbor() {
        let stored = [record(1, Some(0), &[1.0, 0.0]), record(2, Some(1), &[0.0, 1.0])];
        let index = index_of(&stored);
        let q = record(9, Some(0), &[0.9, 0.1]);
        let report = recall_precision_at_k(&index, &[q], &[1]).unwrap();
        assert_eq!(report.recall_at_k[&1], 1.0);
        assert_eq!(report.precision_at_k[&1], 1.0);
        assert_eq!(report.n_queries, 1);
    }

    #[test]
    fn separated_classes_leave_one_out() {
        let mut stored = Vec::new();
        for i in 0..6u64 {
            let j = i as f32 * 0.01;
            stored.push(record(i, Some(0), &[1.0, j, 0.0]));
            stored.push(record(100 + i, Some(1), &[0.0, j, 1.0]));
        }
        let index = index_of(&stored);
        let report = recall_precision_at_k(&index, &stored, &[1, 3, 5]).unwrap();
        for k in [1, 3, 5] {
            assert_eq!(report.recall_at_k[&k], 1.0);
            assert_eq!(report.precision_at_k[&k], 1.0);
        }
        assert_eq!(report.n_queries, 12);
    }

    #[test]
    fn recall_denominator_is_capped() {
        // Class 0 has two items, so each query has one relevant neighbor.
        let stored = [
            record(1, Some(0), &[1.0, 0.0]),
            record(2, Some(0), &[0.99, 0.1]),
            record(3, Some(1), &[0.0, 1.0]),
            record(4, Some(1), &[0.1, 0.99]),
        ];
        let report = recall_precision_at_k(&index_of(&stored), &stored, &[1, 3]).unwrap();
        assert_eq!(report.recall_at_k[&3], 1.0);
        assert!((report.precision_at_k[&3] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let stored = [record(1, Some(0), &[1.0, 0.0]), record(2, None, &[0.0, 1.0])];
        let index = index_of(&stored);
        let q = record(5, Some(0), &[1.0, 0.0]);
        assert!(matches!(
            recall_precision_at_k(&index, std::slice::from_ref(&q), &[1]),
            Err(Error::UnlabeledData)
        ));
        let index = index_of(&stored[..1]);
        assert!(matches!(
            recall_precision_at_k(&index, &[record(5, None, &[1.0, 0.0])], &[1]),
            Err(Error::UnlabeledData)
        ));
        assert!(matches!(recall_precision_at_k(&index, std::slice::from_ref(&q), &[0]), Err(Error::InvalidK)));
        assert!(matches!(
            recall_precision_at_k(&Index::new(), &[q], &[1]),
            Err(Error::EmptyIndex)
        ));
    }
}
