use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::index::{top_k_indices, SearchResult};
use crate::corpus::Grade;
use crate::error::{Error, Result};
use crate::tensor::{dot, Matrix};

/// `|top-k ∩ positives| / |positives|`, or `None` when there are no positives.
pub fn recall_at_k(result: &SearchResult, positives: &BTreeSet<String>, k: usize) -> Option<f64> {
    if positives.is_empty() {
        return None;
    }
    let hit = result.ids().take(k).filter(|id| positives.contains(*id)).count();
    Some(hit as f64 / positives.len() as f64)
}

/// Gain per relevance grade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainMap {
    pub exact: f64,
    pub substitute: f64,
    pub complement: f64,
    pub irrelevant: f64,
}

impl Default for GainMap {
    fn default() -> Self {
        Self {
            exact: Grade::E.gain(),
            substitute: Grade::S.gain(),
            complement: Grade::C.gain(),
            irrelevant: Grade::I.gain(),
        }
    }
}

impl GainMap {
    pub fn gain(&self, g: Grade) -> f64 {
        match g {
            Grade::E => self.exact,
            Grade::S => self.substitute,
            Grade::C => self.complement,
            Grade::I => self.irrelevant,
        }
    }
}

fn dcg(gains: impl Iterator<Item = f64>) -> f64 {
    gains
        .enumerate()
        .map(|(i, g)| g / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k with `log₂(i+1)` discount; the ideal ordering ranges over all judged items.
pub fn ndcg_at_k(result: &SearchResult, judgments: &BTreeMap<String, Grade>, k: usize, gains: &GainMap) -> f64 {
    let actual = dcg(result.ids().take(k).map(|id| judgments.get(id).map_or(0.0, |&g| gains.gain(g))));
    let mut ideal: Vec<f64> = judgments.values().map(|&g| gains.gain(g)).collect();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(ideal.into_iter().take(k));
    if idcg > 0.0 {
        actual / idcg
    } else {
        0.0
    }
}

/// How a top-3 value list is scored against a multi-value annotation set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyRule {
    /// 1 if any annotated value is among the top 3.
    #[default]
    AnyHit,
    /// Fraction of `min(|𝒜|, 3)` annotated values found in the top 3.
    Coverage,
}

impl std::str::FromStr for AccuracyRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "any_hit" => Ok(Self::AnyHit),
            "coverage" => Ok(Self::Coverage),
            _ => Err(Error::invalid("accuracy rule", format!("`{s}` (expected any_hit or coverage)"))),
        }
    }
}

/// Top-3 accuracy of one guiding vector against its value table;
/// `None` when the document has no annotation at this level.
pub fn accuracy_at_3(h: &[f64], values: &Matrix, annotations: &[usize], rule: AccuracyRule) -> Option<f64> {
    if annotations.is_empty() {
        return None;
    }
    let scores: Vec<f64> = (0..values.rows()).map(|v| dot(h, values.row(v))).collect();
    let top = top_k_indices(&scores, 3);
    let hits = top.iter().filter(|v| annotations.contains(v)).count();
    Some(match rule {
        AccuracyRule::AnyHit => f64::from(u8::from(hits > 0)),
        AccuracyRule::Coverage => hits as f64 / annotations.len().min(3) as f64,
    })
}

/// Per-query metric values and their means.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    /// `(query id, metric, value)`
    pub rows: Vec<(String, String, f64)>,
    /// Mean of each metric over the queries it applies to.
    pub summary: BTreeMap<String, f64>,
}

/// Id used for summary rows in the TSV form.
pub const SUMMARY_ID: &str = "__mean__";

impl MetricsReport {
    /// Records per-query values of one metric and their mean.
    pub fn add_metric(&mut self, metric: &str, values: Vec<(String, f64)>) {
        if values.is_empty() {
            return;
        }
        let mean = values.iter().map(|(_, v)| v).sum::<f64>() / values.len() as f64;
        for (q, v) in values {
            self.rows.push((q, metric.to_string(), v));
        }
        self.summary.insert(metric.to_string(), mean);
    }

    pub fn add_summary(&mut self, metric: &str, value: f64) {
        self.summary.insert(metric.to_string(), value);
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.summary.get(metric).copied()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("query_id\tmetric\tvalue\n");
        for (q, m, v) in &self.rows {
            let _ = writeln!(out, "{q}\t{m}\t{v}");
        }
        for (m, v) in &self.summary {
            let _ = writeln!(out, "{SUMMARY_ID}\t{m}\t{v}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut report = Self::default();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.is_empty() {
                continue;
            }
            let parse_err = |m: &str| Error::Parse {
                path: "metrics.tsv".into(),
                line: n + 1,
                message: m.to_string(),
            };
            let mut parts = line.split('\t');
            let (Some(q), Some(m), Some(v), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(parse_err("expected three tab-separated fields"));
            };
            let v: f64 = v.parse().map_err(|_| parse_err("value is not a number"))?;
            if q == SUMMARY_ID {
                report.summary.insert(m.to_string(), v);
            } else {
                report.rows.push((q.to_string(), m.to_string(), v));
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(ids: &[&str]) -> SearchResult {
        SearchResult {
            hits: ids.iter().enumerate().map(|(i, id)| (id.to_string(), -(i as f64))).collect(),
        }
    }

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn recall_cases() {
        let r = result(&["a", "b", "c", "d"]);
        assert_eq!(recall_at_k(&r, &set(&["a", "b"]), 2), Some(1.0));
        assert_eq!(recall_at_k(&r, &set(&["x"]), 4), Some(0.0));
        assert_eq!(recall_at_k(&r, &set(&["a", "c", "x"]), 4), Some(2.0 / 3.0));
        assert_eq!(recall_at_k(&r, &set(&[]), 4), None);
    }

    #[test]
    fn ndcg_cases() {
        let g = GainMap::default();
        let j: BTreeMap<String, Grade> = [("e".to_string(), Grade::E)].into();
        let v = ndcg_at_k(&result(&["x", "e"]), &j, 5, &g);
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert!((v - 0.6309).abs() < 1e-4);
        let j2: BTreeMap<String, Grade> = [("e".to_string(), Grade::E), ("s".to_string(), Grade::S)].into();
        let ideal = ndcg_at_k(&result(&["e", "s"]), &j2, 2, &g);
        let swapped = ndcg_at_k(&result(&["s", "e"]), &j2, 2, &g);
        assert_eq!(ideal, 1.0);
        assert!(ideal > swapped);
        assert_eq!(ndcg_at_k(&result(&["e"]), &BTreeMap::new(), 2, &g), 0.0);
    }

    #[test]
    fn accuracy_cases() {
        let table = Matrix::from_rows(&[vec![4.0], vec![3.0], vec![2.0], vec![1.0]]);
        assert_eq!(accuracy_at_3(&[1.0], &table, &[3], AccuracyRule::AnyHit), Some(0.0));
        assert_eq!(accuracy_at_3(&[1.0], &table, &[2, 3], AccuracyRule::AnyHit), Some(1.0));
        assert_eq!(accuracy_at_3(&[1.0], &table, &[], AccuracyRule::AnyHit), None);
        let small = table.slice_rows(0, 3);
        assert_eq!(accuracy_at_3(&[-1.0], &small, &[0], AccuracyRule::AnyHit), Some(1.0));
        assert_eq!(accuracy_at_3(&[1.0], &table, &[0, 3], AccuracyRule::Coverage), Some(0.5));
    }

    #[test]
    fn report_tsv_round_trip() {
        let mut r = MetricsReport::default();
        r.add_metric("recall@10", vec![("q1".into(), 0.5), ("q2".into(), 1.0)]);
        r.add_summary("acc@3", 0.25);
        let back = MetricsReport::from_tsv(&r.to_tsv()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.get("recall@10"), Some(0.75));
        assert!(MetricsReport::from_tsv("h\nq\tm\n").is_err());
    }
}
