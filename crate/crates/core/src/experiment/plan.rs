use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::config::RunConfig;
use super::pipeline::{run_to_dir, Dataset};
use super::report::{emit_report, ComparisonTable, ReportInput};
use crate::error::{Error, Result};

/// A named set of runs: explicit variants of a base config, crossed with an
/// optional value matrix and a list of seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub baseline: Option<String>,
    pub runs: Vec<PlannedRun>,
}

/// One fully resolved run of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedRun {
    /// Unique run name, including the seed when the plan lists seeds.
    pub name: String,
    /// Name shared by all seeds of the same configuration.
    pub config_name: String,
    pub config: RunConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    baseline: Option<String>,
    #[serde(default)]
    seeds: Vec<u64>,
    #[serde(default)]
    base: toml::Table,
    #[serde(default)]
    runs: Vec<toml::Table>,
    #[serde(default)]
    matrix: toml::Table,
}

fn plan_error(origin: &str, message: impl Into<String>) -> Error {
    Error::Config {
        origin: origin.to_string(),
        message: message.into(),
    }
}

fn render(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl ExperimentPlan {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let file: PlanFile = toml::from_str(text).map_err(|e| plan_error(origin, e.to_string()))?;

        let mut variants: Vec<(String, toml::Table)> = Vec::new();
        if file.runs.is_empty() {
            variants.push(("base".to_string(), toml::Table::new()));
        }
        for (i, mut r) in file.runs.into_iter().enumerate() {
            let name = match r.remove("name") {
                Some(toml::Value::String(s)) if !s.is_empty() => s,
                _ => return Err(plan_error(origin, format!("runs[{i}] needs a non-empty string `name`"))),
            };
            variants.push((name, r));
        }

        let mut axes: Vec<(String, Vec<toml::Value>)> = Vec::new();
        for (key, values) in file.matrix {
            match values {
                toml::Value::Array(vs) if !vs.is_empty() => axes.push((key, vs)),
                _ => return Err(plan_error(origin, format!("matrix.{key} must be a non-empty array"))),
            }
        }
        let mut combos: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
        for (key, values) in &axes {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push((key.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }

        let mut runs = Vec::new();
        for (vname, overrides) in &variants {
            for combo in &combos {
                let mut config_name = vname.clone();
                if !combo.is_empty() {
                    let label: Vec<String> = combo.iter().map(|(k, v)| format!("{k}={}", render(v))).collect();
                    config_name = format!("{config_name}/{}", label.join(","));
                }
                let mut table = file.base.clone();
                table.extend(overrides.clone());
                table.extend(combo.iter().cloned());
                let seeds: Vec<Option<u64>> = if file.seeds.is_empty() {
                    vec![None]
                } else {
                    file.seeds.iter().map(|&s| Some(s)).collect()
                };
                for seed in seeds {
                    let mut t = table.clone();
                    let name = match seed {
                        Some(s) => {
                            t.insert("seed".into(), toml::Value::Integer(s as i64));
                            format!("{config_name}/seed={s}")
                        }
                        None => config_name.clone(),
                    };
                    let config = RunConfig::from_table(t, &format!("{origin} [{name}]"))?;
                    runs.push(PlannedRun {
                        name,
                        config_name: config_name.clone(),
                        config,
                    });
                }
            }
        }
        let mut names = std::collections::HashSet::new();
        if let Some(dup) = runs.iter().find(|r| !names.insert(r.name.clone())) {
            return Err(plan_error(origin, format!("run name `{}` is not unique", dup.name)));
        }
        if let Some(b) = &file.baseline {
            if !runs.iter().any(|r| &r.config_name == b) {
                return Err(plan_error(origin, format!("baseline `{b}` names no run")));
            }
        }
        Ok(Self {
            baseline: file.baseline,
            runs,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }
}

/// File-system friendly form of a run name.
pub fn dir_name(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

pub const COMPARISON_FILE: &str = "comparison.tsv";

/// Executes every run of `plan` under `out` and writes the merged comparison table.
pub fn run_plan<F>(plan: &ExperimentPlan, out: &Path, mut progress: F) -> Result<(Vec<PathBuf>, ComparisonTable)>
where
    F: FnMut(&PlannedRun, &Path),
{
    std::fs::create_dir_all(out)?;
    let mut dirs = Vec::new();
    let mut inputs = Vec::new();
    for run in &plan.runs {
        let data = Dataset::from_config(&run.config)?;
        let (dir, _) = run_to_dir(&run.config, &data, out, &dir_name(&run.name))?;
        progress(run, &dir);
        inputs.push(ReportInput {
            name: run.name.clone(),
            config_name: run.config_name.clone(),
            dir: dir.clone(),
        });
        dirs.push(dir);
    }
    let table = emit_report(&inputs, plan.baseline.as_deref())?;
    std::fs::write(out.join(COMPARISON_FILE), table.to_tsv())?;
    Ok((dirs, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_product_and_seeds() {
        let plan = ExperimentPlan::from_toml_str(
            r#"
            seeds = [1, 2]
            [base]
            pretrain_steps = 3
            [matrix]
            scheme = ["single", "granularity", "aspect"]
            value_mode = ["shared", "unshared"]
            "#,
            "plan",
        )
        .unwrap();
        assert_eq!(plan.runs.len(), 12);
        assert!(plan.runs.iter().all(|r| r.config.pretrain_steps == 3));
        assert_eq!(plan.runs[0].config_name, "base/scheme=single,value_mode=shared");
        assert_eq!(plan.runs[1].name, "base/scheme=single,value_mode=shared/seed=2");
        assert_eq!(plan.runs[1].config.seed, 2);
    }

    #[test]
    fn named_runs_and_errors() {
        let plan = ExperimentPlan::from_toml_str(
            r#"
            baseline = "mlm"
            [[runs]]
            name = "guided"
            [[runs]]
            name = "mlm"
            scheme = "none"
            fusion = "cls_only_baseline"
            "#,
            "plan",
        )
        .unwrap();
        assert_eq!(plan.runs.len(), 2);
        assert_eq!(plan.baseline.as_deref(), Some("mlm"));
        let bad = ExperimentPlan::from_toml_str("[[runs]]\nname = \"a\"\nhidden = 7", "plan").unwrap_err();
        assert!(bad.to_string().contains("[a]"), "{bad}");
        assert!(ExperimentPlan::from_toml_str("[[runs]]\nname = \"a\"\n[[runs]]\nname = \"a\"", "p").is_err());
        assert!(ExperimentPlan::from_toml_str("baseline = \"zzz\"", "p").is_err());
    }

    #[test]
    fn dir_names_are_flat() {
        assert_eq!(dir_name("a/scheme=single,x=1/seed=2"), "a_scheme_single_x_1_seed_2");
    }
}
