//! Seeded synthetic product corpus whose taxonomy drives graded relevance.
//!
//! The taxonomy has three levels: root → mid → leaf. Leaf names are two or
//! three words and share words with their siblings (the mid noun) and
//! sometimes their cousins (the root word), so word and token decompositions
//! of category values carry relational structure.
//!
//! Item text mixes brand words, a few leaf-specific hint words, each leaf
//! name word with some probability, an optional color word and noise. Many
//! items therefore never mention their category by name, which is what makes
//! category annotations informative during pre-training.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AspectSchema, DocKind, Document, Grade, RelevanceJudgment};
use crate::error::{Error, Result};

const COLORS: [&str; 12] = [
    "red", "blue", "green", "black", "white", "yellow", "purple", "orange", "pink", "grey",
    "brown", "silver",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticGenConfig {
    pub seed: u64,
    pub n_items: usize,
    pub n_queries: usize,
    /// Children per node at the root, mid and leaf levels.
    pub branching: [usize; 3],
    pub brands_per_root: usize,
    pub hints_per_leaf: usize,
    /// Probability that an item's annotation set for an aspect is kept.
    pub item_coverage: BTreeMap<String, f64>,
    pub query_coverage: BTreeMap<String, f64>,
    /// Per-slot probability of a noise word (three slots per item).
    pub noise_rate: f64,
    /// Probability that an item mentions each word of its leaf name.
    pub name_word_rate: f64,
    /// Probability that a query mentions its brand.
    pub query_brand_rate: f64,
    /// Probability that a judgment grade is replaced by a uniformly drawn one.
    pub label_noise: f64,
    /// Irrelevant items judged per query, drawn from other roots.
    pub irrelevant_per_query: usize,
}

impl Default for SyntheticGenConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_items: 2000,
            n_queries: 500,
            branching: [5, 4, 5],
            brands_per_root: 8,
            hints_per_leaf: 4,
            item_coverage: BTreeMap::from([
                ("brand".into(), 0.9),
                ("color".into(), 0.7),
                ("category".into(), 0.9),
            ]),
            query_coverage: BTreeMap::from([("brand".into(), 1.0), ("category".into(), 0.9)]),
            noise_rate: 0.5,
            name_word_rate: 0.3,
            query_brand_rate: 0.1,
            label_noise: 0.0,
            irrelevant_per_query: 10,
        }
    }
}

impl SyntheticGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_items == 0 || self.n_queries == 0 {
            return Err(Error::invalid("generator config", "counts must be positive"));
        }
        if self.branching.iter().any(|&b| b == 0) || self.brands_per_root == 0 {
            return Err(Error::invalid("generator config", "branching must be positive"));
        }
        if self.hints_per_leaf < 2 {
            return Err(Error::invalid("generator config", "hints_per_leaf must be at least 2"));
        }
        let probs = self
            .item_coverage
            .values()
            .chain(self.query_coverage.values())
            .chain([
                &self.noise_rate,
                &self.name_word_rate,
                &self.query_brand_rate,
                &self.label_noise,
            ]);
        for &p in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(
                    "generator config",
                    format!("probability {p} outside [0, 1]"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub items: Vec<Document>,
    pub queries: Vec<Document>,
    pub judgments: Vec<RelevanceJudgment>,
}

impl SyntheticCorpus {
    /// Concatenated JSON Lines of items, queries and judgments.
    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for d in self.items.iter().chain(&self.queries) {
            out.extend(serde_json::to_vec(d).expect("serializable"));
            out.push(b'\n');
        }
        for j in &self.judgments {
            out.extend(serde_json::to_vec(j).expect("serializable"));
            out.push(b'\n');
        }
        out
    }
}

struct Leaf {
    root: usize,
    mid: usize,
    name: Vec<String>,
    hints: Vec<String>,
}

struct WordForge {
    used: HashSet<String>,
}

impl WordForge {
    const ONSETS: &'static [&'static str] = &[
        "b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br",
        "st", "tr", "pl",
    ];
    const VOWELS: &'static [&'static str] = &["a", "e", "i", "o", "u", "ai", "ou"];

    fn new() -> Self {
        Self {
            used: COLORS.iter().map(|c| c.to_string()).collect(),
        }
    }

    fn word(&mut self, rng: &mut ChaCha8Rng, syllables: std::ops::RangeInclusive<usize>) -> String {
        loop {
            let n = rng.random_range(syllables.clone());
            let mut w = String::new();
            for _ in 0..n {
                w.push_str(Self::ONSETS.choose(rng).unwrap());
                w.push_str(Self::VOWELS.choose(rng).unwrap());
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

fn keep(rng: &mut ChaCha8Rng, p: f64) -> bool {
    // p = 0 and p = 1 must not consume randomness differently from other values.
    let u: f64 = rng.random();
    u < p
}

/// Generates items, queries and ESCI judgments from `cfg`.
///
/// Only aspects named `brand`, `color` and `category` are understood; the
/// schema must contain `category` and may omit the other two.
pub fn generate_synthetic(cfg: &SyntheticGenConfig, schema: &AspectSchema) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    for name in schema.names() {
        if !matches!(name, "brand" | "color" | "category") {
            return Err(Error::invalid(
                "generator schema",
                format!("unsupported aspect `{name}`"),
            ));
        }
    }
    if schema.index_of("category").is_none() {
        return Err(Error::invalid("generator schema", "a `category` aspect is required"));
    }
    let has = |a: &str| schema.index_of(a).is_some();
    let on_queries = |a: &str| {
        schema
            .index_of(a)
            .is_some_and(|i| schema.aspects()[i].on_queries)
    };
    let coverage = |m: &BTreeMap<String, f64>, a: &str| m.get(a).copied().unwrap_or(1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut forge = WordForge::new();
    let [n_roots, n_mids, n_leaves] = cfg.branching;

    let root_words: Vec<String> = (0..n_roots).map(|_| forge.word(&mut rng, 2..=2)).collect();
    let mut leaves = Vec::new();
    for (r, root_word) in root_words.iter().enumerate() {
        for m in 0..n_mids {
            let noun = forge.word(&mut rng, 2..=3);
            for l in 0..n_leaves {
                let modifier = forge.word(&mut rng, 2..=3);
                let name = if l % 2 == 0 {
                    vec![modifier, noun.clone()]
                } else {
                    vec![modifier, root_word.clone(), noun.clone()]
                };
                let hints = (0..cfg.hints_per_leaf)
                    .map(|_| forge.word(&mut rng, 2..=3))
                    .collect();
                leaves.push(Leaf {
                    root: r,
                    mid: r * n_mids + m,
                    name,
                    hints,
                });
            }
        }
    }
    let brands: Vec<Vec<String>> = (0..n_roots)
        .map(|_| {
            (0..cfg.brands_per_root)
                .map(|_| {
                    let words = rng.random_range(1..=2);
                    (0..words).map(|_| forge.word(&mut rng, 2..=3)).collect::<Vec<_>>().join(" ")
                })
                .collect()
        })
        .collect();
    let noise: Vec<String> = (0..200).map(|_| forge.word(&mut rng, 1..=3)).collect();
    let fillers: Vec<String> = (0..12).map(|_| forge.word(&mut rng, 1..=2)).collect();

    let id_width = cfg.n_items.max(cfg.n_queries).to_string().len().max(5);
    let mut items = Vec::with_capacity(cfg.n_items);
    let mut item_leaf = Vec::with_capacity(cfg.n_items);
    for i in 0..cfg.n_items {
        let li = rng.random_range(0..leaves.len());
        let leaf = &leaves[li];
        let brand = brands[leaf.root].choose(&mut rng).unwrap().clone();
        let color = COLORS.choose(&mut rng).unwrap().to_string();

        let mut words: Vec<String> = Vec::new();
        for w in brand.split(' ') {
            if keep(&mut rng, 0.8) {
                words.push(w.to_string());
            }
        }
        words.extend(leaf.hints.choose_multiple(&mut rng, 2).cloned());
        for w in &leaf.name {
            if keep(&mut rng, cfg.name_word_rate) {
                words.push(w.clone());
            }
        }
        if keep(&mut rng, 0.6) {
            words.push(color.clone());
        }
        for _ in 0..3 {
            if keep(&mut rng, cfg.noise_rate) {
                words.push(noise.choose(&mut rng).unwrap().clone());
            }
        }
        words.shuffle(&mut rng);

        let mut doc = Document::new(format!("i{:0w$}", i, w = id_width), DocKind::Item, words.join(" "));
        let keep_brand = keep(&mut rng, coverage(&cfg.item_coverage, "brand"));
        let keep_color = keep(&mut rng, coverage(&cfg.item_coverage, "color"));
        let keep_category = keep(&mut rng, coverage(&cfg.item_coverage, "category"));
        if has("brand") {
            doc = doc.with_annotation("brand", keep_brand.then_some(brand));
        }
        if has("color") {
            doc = doc.with_annotation("color", keep_color.then_some(color));
        }
        doc = doc.with_annotation("category", keep_category.then(|| leaf.name.join(" ")));
        items.push(doc);
        item_leaf.push(li);
    }

    let mut queries = Vec::with_capacity(cfg.n_queries);
    let mut judgments = Vec::new();
    for q in 0..cfg.n_queries {
        let li = rng.random_range(0..leaves.len());
        let leaf = &leaves[li];
        let mut words: Vec<String> = leaf
            .name
            .iter()
            .filter(|_| keep(&mut rng, 0.7))
            .cloned()
            .collect();
        if words.is_empty() {
            words.push(leaf.name.last().unwrap().clone());
        }
        if keep(&mut rng, 0.3) {
            words.push(leaf.hints.choose(&mut rng).unwrap().clone());
        }
        let brand = keep(&mut rng, cfg.query_brand_rate)
            .then(|| brands[leaf.root].choose(&mut rng).unwrap().clone());
        if let Some(b) = &brand {
            words.extend(b.split(' ').map(str::to_string));
        }
        if keep(&mut rng, 0.5) {
            words.insert(0, fillers.choose(&mut rng).unwrap().clone());
        }
        let id = format!("q{:0w$}", q, w = id_width);
        let mut doc = Document::new(id.clone(), DocKind::Query, words.join(" "));
        let keep_brand = keep(&mut rng, coverage(&cfg.query_coverage, "brand"));
        let keep_category = keep(&mut rng, coverage(&cfg.query_coverage, "category"));
        if on_queries("brand") {
            doc = doc.with_annotation("brand", brand.filter(|_| keep_brand));
        }
        if on_queries("category") {
            doc = doc.with_annotation("category", keep_category.then(|| leaf.name.join(" ")));
        }
        queries.push(doc);

        let mut judged = Vec::new();
        let mut irrelevant = Vec::new();
        for (ii, &il) in item_leaf.iter().enumerate() {
            let other = &leaves[il];
            let grade = if il == li {
                Grade::E
            } else if other.mid == leaf.mid {
                Grade::S
            } else if other.root == leaf.root {
                Grade::C
            } else {
                irrelevant.push(ii);
                continue;
            };
            judged.push((ii, grade));
        }
        judged.extend(
            irrelevant
                .choose_multiple(&mut rng, cfg.irrelevant_per_query)
                .map(|&ii| (ii, Grade::I)),
        );
        judged.sort_by_key(|&(ii, _)| ii);
        for (ii, mut grade) in judged {
            if cfg.label_noise > 0.0 && keep(&mut rng, cfg.label_noise) {
                grade = *Grade::ALL.choose(&mut rng).unwrap();
            }
            judgments.push(RelevanceJudgment::new(id.clone(), items[ii].id.clone(), grade));
        }
    }
    Ok(SyntheticCorpus {
        items,
        queries,
        judgments,
    })
}
