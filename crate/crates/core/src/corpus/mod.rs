//! Structured queries and items, graded judgments, and their JSON Lines encoding.

mod synth;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synth::{generate_synthetic, SyntheticCorpus, SyntheticGenConfig};

/// One aspect of the schema and whether queries are annotated with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectDef {
    pub name: String,
    #[serde(default)]
    pub on_queries: bool,
}

/// Ordered aspect names. The position of an aspect is its index everywhere else.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectSchema {
    aspects: Vec<AspectDef>,
}

impl AspectSchema {
    pub fn new(aspects: Vec<AspectDef>) -> Result<Self> {
        let mut seen = HashSet::new();
        for a in &aspects {
            if a.name.trim().is_empty() {
                return Err(Error::invalid("aspect schema", "empty aspect name"));
            }
            if !seen.insert(a.name.as_str()) {
                return Err(Error::invalid(
                    "aspect schema",
                    format!("aspect `{}` listed twice", a.name),
                ));
            }
        }
        Ok(Self { aspects })
    }

    /// Convenience constructor from `(name, on_queries)` pairs.
    pub fn from_names<'a>(names: impl IntoIterator<Item = (&'a str, bool)>) -> Result<Self> {
        Self::new(
            names
                .into_iter()
                .map(|(n, q)| AspectDef {
                    name: n.to_string(),
                    on_queries: q,
                })
                .collect(),
        )
    }

    /// brand, color and category; queries carry brand and category.
    pub fn product_default() -> Self {
        Self::from_names([("brand", true), ("color", false), ("category", true)])
            .expect("static schema")
    }

    pub fn len(&self) -> usize {
        self.aspects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aspects.is_empty()
    }

    pub fn aspects(&self) -> &[AspectDef] {
        &self.aspects
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.aspects.iter().map(|a| a.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.aspects.iter().position(|a| a.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocKind {
    Query,
    Item,
}

/// A query or an item: content text plus phrase-level aspect annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub id: String,
    pub kind: DocKind,
    pub text: String,
    pub annotations: BTreeMap<String, BTreeSet<String>>,
}

impl Document {
    pub fn new(id: impl Into<String>, kind: DocKind, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind,
            text: text.into(),
            annotations: BTreeMap::new(),
        }
    }

    pub fn with_annotation<I, S>(mut self, aspect: &str, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.annotations
            .entry(aspect.to_string())
            .or_default()
            .extend(values.into_iter().map(Into::into));
        self
    }

    /// The phrase set for `aspect`, empty when absent.
    pub fn phrases(&self, aspect: &str) -> impl Iterator<Item = &str> {
        self.annotations
            .get(aspect)
            .into_iter()
            .flat_map(|s| s.iter().map(String::as_str))
    }

    pub fn validate(&self, schema: &AspectSchema) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("document", "empty id"));
        }
        if self.text.trim().is_empty() {
            return Err(Error::invalid("document", format!("`{}` has empty text", self.id)));
        }
        for aspect in self.annotations.keys() {
            if schema.index_of(aspect).is_none() {
                return Err(Error::UnknownAspect {
                    doc: self.id.clone(),
                    aspect: aspect.clone(),
                });
            }
        }
        Ok(())
    }
}

/// ESCI relevance grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grade {
    E,
    S,
    C,
    I,
}

impl Grade {
    pub const ALL: [Grade; 4] = [Grade::E, Grade::S, Grade::C, Grade::I];

    pub fn gain(self) -> f64 {
        match self {
            Grade::E => 1.0,
            Grade::S => 0.1,
            Grade::C => 0.01,
            Grade::I => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelevanceJudgment {
    pub query_id: String,
    pub item_id: String,
    pub grade: Grade,
}

impl RelevanceJudgment {
    pub fn new(query_id: impl Into<String>, item_id: impl Into<String>, grade: Grade) -> Self {
        Self {
            query_id: query_id.into(),
            item_id: item_id.into(),
            grade,
        }
    }

    pub fn gain(&self) -> f64 {
        self.grade.gain()
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, values: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in values {
        serde_json::to_writer(&mut w, v)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a JSON Lines corpus, validating every document against `schema`.
pub fn load_corpus(path: &Path, schema: &AspectSchema) -> Result<Vec<Document>> {
    let docs: Vec<Document> = read_jsonl(path)?;
    validate_documents(&docs, schema)?;
    Ok(docs)
}

pub fn validate_documents(docs: &[Document], schema: &AspectSchema) -> Result<()> {
    let mut ids = HashSet::new();
    for d in docs {
        d.validate(schema)?;
        if !ids.insert(d.id.as_str()) {
            return Err(Error::DuplicateId(d.id.clone()));
        }
    }
    Ok(())
}

pub fn save_corpus(path: &Path, docs: &[Document]) -> Result<()> {
    write_jsonl(path, docs)
}

pub fn load_judgments(path: &Path) -> Result<Vec<RelevanceJudgment>> {
    let js: Vec<RelevanceJudgment> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    for j in &js {
        if !seen.insert((j.query_id.as_str(), j.item_id.as_str())) {
            return Err(Error::invalid(
                "judgments",
                format!("pair ({}, {}) judged twice", j.query_id, j.item_id),
            ));
        }
    }
    Ok(js)
}

pub fn save_judgments(path: &Path, judgments: &[RelevanceJudgment]) -> Result<()> {
    write_jsonl(path, judgments)
}

/// Items graded `E` per query. Every judged query gets an entry, possibly empty.
pub fn binary_positives(judgments: &[RelevanceJudgment]) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for j in judgments {
        let entry = out.entry(j.query_id.clone()).or_default();
        if j.grade == Grade::E {
            entry.insert(j.item_id.clone());
        }
    }
    out
}

/// Graded judgments keyed by query then item.
pub fn judgment_map(judgments: &[RelevanceJudgment]) -> BTreeMap<String, BTreeMap<String, Grade>> {
    let mut out: BTreeMap<String, BTreeMap<String, Grade>> = BTreeMap::new();
    for j in judgments {
        out.entry(j.query_id.clone())
            .or_default()
            .insert(j.item_id.clone(), j.grade);
    }
    out
}
