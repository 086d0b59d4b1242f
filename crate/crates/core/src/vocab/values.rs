//! Aspect-value vocabularies at phrase, word and token granularity.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tokenizer::{split_words, Tokenizer};
use crate::corpus::{AspectSchema, Document};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Phrase,
    Word,
    Token,
}

impl Granularity {
    pub const ALL: [Granularity; 3] = [Granularity::Phrase, Granularity::Word, Granularity::Token];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Granularity::Phrase => "phrase",
            Granularity::Word => "word",
            Granularity::Token => "token",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phrase" => Ok(Granularity::Phrase),
            "word" => Ok(Granularity::Word),
            "token" => Ok(Granularity::Token),
            _ => Err(Error::invalid("granularity", format!("`{s}`"))),
        }
    }
}

/// Lowercases and collapses runs of whitespace.
pub fn normalize_phrase(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Decomposes one phrase-level value at granularity `g`.
pub fn decompose(phrase: &str, g: Granularity, tok: &Tokenizer) -> Vec<String> {
    match g {
        Granularity::Phrase => {
            let p = normalize_phrase(phrase);
            if p.is_empty() {
                Vec::new()
            } else {
                vec![p]
            }
        }
        Granularity::Word => split_words(phrase),
        Granularity::Token => tok.tokenize_to_strings(phrase),
    }
}

/// The value set of one (aspect, granularity) pair, ordered lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueVocabulary {
    aspect: String,
    granularity: Granularity,
    values: Vec<String>,
    index: HashMap<String, usize>,
    /// Token ids pooled into each value's shared embedding.
    pieces: Vec<Vec<u32>>,
}

impl ValueVocabulary {
    fn from_values(
        aspect: &str,
        granularity: Granularity,
        values: BTreeSet<String>,
        tok: &Tokenizer,
    ) -> Result<Self> {
        let values: Vec<String> = values.into_iter().collect();
        let mut pieces = Vec::with_capacity(values.len());
        for v in &values {
            let ids = match granularity {
                Granularity::Token => vec![tok.id(v).ok_or_else(|| Error::ValueMissing {
                    aspect: aspect.to_string(),
                    granularity: granularity.to_string(),
                    value: v.clone(),
                })?],
                Granularity::Word => tok.tokenize_word(v),
                Granularity::Phrase => tok.tokenize(v),
            };
            if ids.is_empty() {
                return Err(Error::EmptyValue(v.clone()));
            }
            pieces.push(ids);
        }
        let index = values.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
        Ok(Self {
            aspect: aspect.to_string(),
            granularity,
            values,
            index,
            pieces,
        })
    }

    pub fn aspect(&self) -> &str {
        &self.aspect
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, value: &str) -> Option<usize> {
        self.index.get(value).copied()
    }

    /// Token ids whose embeddings average into value `i`.
    pub fn pieces(&self, i: usize) -> &[u32] {
        &self.pieces[i]
    }

    /// One value per line under a `# aspect=.. granularity=.. size=..` header.
    pub fn to_file_string(&self) -> String {
        let mut s = format!(
            "# aspect={} granularity={} size={}\n",
            self.aspect,
            self.granularity,
            self.values.len()
        );
        for v in &self.values {
            let _ = writeln!(s, "{v}");
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: &Path, tok: &Tokenizer) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let parse_err = |m: &str| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: m.to_string(),
        };
        let fields: HashMap<&str, &str> = header
            .strip_prefix("# ")
            .ok_or_else(|| parse_err("missing header"))?
            .split(' ')
            .filter_map(|kv| kv.split_once('='))
            .collect();
        let aspect = fields.get("aspect").ok_or_else(|| parse_err("missing aspect"))?;
        let g: Granularity = fields
            .get("granularity")
            .ok_or_else(|| parse_err("missing granularity"))?
            .parse()?;
        let size: usize = fields
            .get("size")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err("missing size"))?;
        let values: BTreeSet<String> = lines.map(str::to_string).collect();
        if values.len() != size {
            return Err(parse_err("size does not match value count"));
        }
        Self::from_values(aspect, g, values, tok)
    }
}

/// Builds `V_a^g` from the phrase-level values of one aspect.
pub fn build_value_vocab<'a, I>(
    aspect: &str,
    phrase_values: I,
    g: Granularity,
    tok: &Tokenizer,
) -> Result<ValueVocabulary>
where
    I: IntoIterator<Item = &'a str>,
{
    let values: BTreeSet<String> = phrase_values
        .into_iter()
        .flat_map(|p| decompose(p, g, tok))
        .collect();
    ValueVocabulary::from_values(aspect, g, values, tok)
}

/// Value vocabularies for every (aspect, granularity) pair of a schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AspectVocabularies {
    aspects: Vec<String>,
    // indexed [aspect][granularity]
    tables: Vec<[ValueVocabulary; 3]>,
}

impl AspectVocabularies {
    /// Collects the annotation space of `docs` and decomposes it at all granularities.
    pub fn build<'a, I>(schema: &AspectSchema, docs: I, tok: &Tokenizer) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Document>,
    {
        let mut phrases: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); schema.len()];
        for d in docs {
            for (a, vals) in &d.annotations {
                let i = schema.index_of(a).ok_or_else(|| Error::UnknownAspect {
                    doc: d.id.clone(),
                    aspect: a.clone(),
                })?;
                phrases[i].extend(vals.iter().map(String::as_str));
            }
        }
        let mut tables = Vec::with_capacity(schema.len());
        for (name, ps) in schema.names().zip(&phrases) {
            let build = |g| build_value_vocab(name, ps.iter().copied(), g, tok);
            tables.push([
                build(Granularity::Phrase)?,
                build(Granularity::Word)?,
                build(Granularity::Token)?,
            ]);
        }
        Ok(Self {
            aspects: schema.names().map(str::to_string).collect(),
            tables,
        })
    }

    pub fn from_parts(aspects: Vec<String>, tables: Vec<[ValueVocabulary; 3]>) -> Self {
        assert_eq!(aspects.len(), tables.len());
        Self { aspects, tables }
    }

    pub fn aspects(&self) -> &[String] {
        &self.aspects
    }

    pub fn num_aspects(&self) -> usize {
        self.aspects.len()
    }

    pub fn get(&self, aspect: usize, g: Granularity) -> &ValueVocabulary {
        &self.tables[aspect][g.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ValueVocabulary> {
        self.tables.iter().flat_map(|t| t.iter())
    }

    /// Writes `<dir>/<aspect>.<granularity>.txt` for every table.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for v in self.iter() {
            v.save(&dir.join(format!("{}.{}.txt", v.aspect, v.granularity)))?;
        }
        Ok(())
    }

    pub fn load_dir(dir: &Path, schema: &AspectSchema, tok: &Tokenizer) -> Result<Self> {
        let mut tables = Vec::new();
        for name in schema.names() {
            let load = |g: Granularity| ValueVocabulary::load(&dir.join(format!("{name}.{g}.txt")), tok);
            tables.push([
                load(Granularity::Phrase)?,
                load(Granularity::Word)?,
                load(Granularity::Token)?,
            ]);
        }
        Ok(Self::from_parts(schema.names().map(str::to_string).collect(), tables))
    }
}

/// `𝒜_a^g`: sorted value indices per aspect and granularity for one document.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GranularityAnnotation {
    sets: Vec<[Vec<usize>; 3]>,
}

impl GranularityAnnotation {
    pub fn empty(num_aspects: usize) -> Self {
        Self {
            sets: vec![Default::default(); num_aspects],
        }
    }

    pub fn get(&self, aspect: usize, g: Granularity) -> &[usize] {
        &self.sets[aspect][g.index()]
    }

    pub fn num_aspects(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.iter().all(|s| s.iter().all(Vec::is_empty))
    }

    /// Drops everything except the given aspects and granularities.
    pub fn restrict(&self, aspects: &[usize], granularities: &[Granularity]) -> Self {
        let mut out = Self::empty(self.sets.len());
        for &a in aspects {
            for &g in granularities {
                out.sets[a][g.index()] = self.sets[a][g.index()].clone();
            }
        }
        out
    }
}

/// Maps a document's phrase annotations onto value indices at every granularity.
pub fn decompose_annotations(
    doc: &Document,
    vocabs: &AspectVocabularies,
    tok: &Tokenizer,
) -> Result<GranularityAnnotation> {
    let mut out = GranularityAnnotation::empty(vocabs.num_aspects());
    for (ai, name) in vocabs.aspects.iter().enumerate() {
        for g in Granularity::ALL {
            let vocab = vocabs.get(ai, g);
            let mut set = BTreeSet::new();
            for phrase in doc.phrases(name) {
                for v in decompose(phrase, g, tok) {
                    let idx = vocab.index_of(&v).ok_or_else(|| Error::ValueMissing {
                        aspect: name.clone(),
                        granularity: g.to_string(),
                        value: v.clone(),
                    })?;
                    set.insert(idx);
                }
            }
            out.sets[ai][g.index()] = set.into_iter().collect();
        }
    }
    Ok(out)
}
