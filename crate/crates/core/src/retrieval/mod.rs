//! Exact dot-product search over fused item vectors and the evaluation metrics.

mod index;
mod metrics;

pub use index::{build_index, search, top_k_indices, DenseIndex, SearchResult};
pub use metrics::{
    accuracy_at_3, ndcg_at_k, recall_at_k, AccuracyRule, GainMap, MetricsReport, SUMMARY_ID,
};

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::Grade;
use crate::error::Result;

/// Retrieval metrics for encoded queries against an index.
///
/// Recall uses E-graded items as positives and skips queries without any;
/// NDCG averages over queries with at least one judgment.
pub fn evaluate_retrieval(
    index: &DenseIndex,
    queries: &[(String, Vec<f64>)],
    judgments: &BTreeMap<String, BTreeMap<String, Grade>>,
    recall_ks: &[usize],
    ndcg_ks: &[usize],
    gains: &GainMap,
) -> Result<MetricsReport> {
    let depth = recall_ks.iter().chain(ndcg_ks).copied().max().unwrap_or(1).max(1);
    let mut recall: Vec<Vec<(String, f64)>> = vec![Vec::new(); recall_ks.len()];
    let mut ndcg: Vec<Vec<(String, f64)>> = vec![Vec::new(); ndcg_ks.len()];
    let empty = BTreeMap::new();
    for (qid, vector) in queries {
        let judged = judgments.get(qid).unwrap_or(&empty);
        if judged.is_empty() {
            continue;
        }
        let result = search(index, vector, depth)?;
        let positives: BTreeSet<String> = judged
            .iter()
            .filter(|(_, &g)| g == Grade::E)
            .map(|(id, _)| id.clone())
            .collect();
        for (slot, &k) in recall_ks.iter().enumerate() {
            if let Some(r) = recall_at_k(&result, &positives, k) {
                recall[slot].push((qid.clone(), r));
            }
        }
        for (slot, &k) in ndcg_ks.iter().enumerate() {
            ndcg[slot].push((qid.clone(), ndcg_at_k(&result, judged, k, gains)));
        }
    }
    let mut report = MetricsReport::default();
    for (k, values) in recall_ks.iter().zip(recall) {
        report.add_metric(&format!("recall@{k}"), values);
    }
    for (k, values) in ndcg_ks.iter().zip(ndcg) {
        report.add_metric(&format!("ndcg@{k}"), values);
    }
    Ok(report)
}
