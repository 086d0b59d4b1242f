use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::PathBuf;

use super::pipeline::METRICS_FILE;
use crate::error::{Error, Result};
use crate::retrieval::MetricsReport;

/// A run directory to include in a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportInput {
    pub name: String,
    pub config_name: String,
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub config_name: String,
    /// Median over the seeds of one configuration.
    pub is_median: bool,
    pub values: Vec<Option<f64>>,
    /// Difference to the baseline configuration, per column.
    pub diffs: Vec<Option<f64>>,
}

/// Runs as rows, metrics as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    pub baseline: Option<String>,
    pub rows: Vec<ReportRow>,
}

fn metric_order(name: &str) -> (u8, usize, String) {
    let group = if name.starts_with("recall@") {
        0
    } else if name.starts_with("ndcg@") {
        1
    } else if name.starts_with("acc@3") {
        2
    } else if name.starts_with("pretrain/") {
        3
    } else {
        4
    };
    let k = name
        .split('@')
        .nth(1)
        .and_then(|s| s.split('/').next())
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    (group, k, name.to_string())
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Reads each run's metrics, appends a median row per configuration with
/// several runs, and fills differences against `baseline` when given.
pub fn emit_report(runs: &[ReportInput], baseline: Option<&str>) -> Result<ComparisonTable> {
    let mut reports = Vec::with_capacity(runs.len());
    for r in runs {
        let path = r.dir.join(METRICS_FILE);
        let text = std::fs::read_to_string(&path).map_err(|_| Error::MissingMetrics(path.clone()))?;
        reports.push(MetricsReport::from_tsv(&text)?);
    }
    let mut columns: Vec<String> = reports.iter().flat_map(|r| r.summary.keys().cloned()).collect();
    columns.sort_by_key(|c| metric_order(c));
    columns.dedup();

    let mut rows: Vec<ReportRow> = Vec::new();
    let mut configs: Vec<&str> = Vec::new();
    for (r, rep) in runs.iter().zip(&reports) {
        rows.push(ReportRow {
            name: r.name.clone(),
            config_name: r.config_name.clone(),
            is_median: false,
            values: columns.iter().map(|c| rep.get(c)).collect(),
            diffs: vec![None; columns.len()],
        });
        if !configs.contains(&r.config_name.as_str()) {
            configs.push(&r.config_name);
        }
    }
    let mut config_values: Vec<(String, Vec<Option<f64>>)> = Vec::new();
    for cfg in configs {
        let members: Vec<&ReportRow> = rows.iter().filter(|r| r.config_name == cfg).collect();
        let values: Vec<Option<f64>> = (0..columns.len())
            .map(|c| median(&mut members.iter().filter_map(|r| r.values[c]).collect::<Vec<_>>()))
            .collect();
        if members.len() > 1 {
            config_values.push((cfg.to_string(), values.clone()));
        } else {
            config_values.push((cfg.to_string(), members[0].values.clone()));
        }
    }
    let mut out_rows = Vec::new();
    for (cfg, values) in &config_values {
        let members: Vec<ReportRow> = rows.iter().filter(|r| &r.config_name == cfg).cloned().collect();
        let n = members.len();
        out_rows.extend(members);
        if n > 1 {
            out_rows.push(ReportRow {
                name: format!("{cfg} [median]"),
                config_name: cfg.clone(),
                is_median: true,
                values: values.clone(),
                diffs: vec![None; columns.len()],
            });
        }
    }
    if let Some(b) = baseline {
        let Some((_, base)) = config_values.iter().find(|(c, _)| c == b) else {
            return Err(Error::invalid("baseline", format!("`{b}` names no run")));
        };
        for row in &mut out_rows {
            row.diffs = row
                .values
                .iter()
                .zip(base)
                .map(|(v, b)| match (v, b) {
                    (Some(v), Some(b)) => Some(v - b),
                    _ => None,
                })
                .collect();
        }
    }
    Ok(ComparisonTable {
        columns,
        baseline: baseline.map(str::to_string),
        rows: out_rows,
    })
}

fn sign(d: f64) -> char {
    match d.partial_cmp(&0.0) {
        Some(Ordering::Greater) => '+',
        Some(Ordering::Less) => '-',
        _ => '=',
    }
}

impl ComparisonTable {
    pub fn row(&self, name: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn column(&self, metric: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == metric)
    }

    /// Tab-separated table; with a baseline, each metric gets a
    /// `vs <baseline>` column holding the signed difference.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("run");
        for c in &self.columns {
            let _ = write!(out, "\t{c}");
            if let Some(b) = &self.baseline {
                let _ = write!(out, "\t{c} vs {b}");
            }
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.name);
            for (v, d) in r.values.iter().zip(&r.diffs) {
                match v {
                    Some(v) => {
                        let _ = write!(out, "\t{v:.4}");
                    }
                    None => out.push_str("\t-"),
                }
                if self.baseline.is_some() {
                    match d {
                        Some(d) => {
                            let _ = write!(out, "\t{}{:.4}", sign(*d), d.abs());
                        }
                        None => out.push_str("\t-"),
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_oracle() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn column_order() {
        let mut c = vec!["recall@100", "acc@3/item/category/phrase", "ndcg@10", "recall@10", "recall@50"];
        c.sort_by_key(|c| metric_order(c));
        assert_eq!(c, vec!["recall@10", "recall@50", "recall@100", "ndcg@10", "acc@3/item/category/phrase"]);
    }
}
