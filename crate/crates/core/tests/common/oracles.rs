//! Slow, obviously-correct reference implementations shared by the property
//! tests and the acceptance runner.

use std::collections::{BTreeMap, BTreeSet};

use aspectir::corpus::Grade;
use aspectir::retrieval::GainMap;
use aspectir::vocab::{Granularity, Tokenizer};

/// Scores every item, sorts the whole list and keeps the first `k`.
pub fn full_sort_top_k(ids: &[String], vectors: &[Vec<f64>], query: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = ids
        .iter()
        .zip(vectors)
        .map(|(id, v)| (id.clone(), v.iter().zip(query).map(|(a, b)| a * b).sum()))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn brute_recall(ranked: &[String], positives: &BTreeSet<String>, k: usize) -> Option<f64> {
    if positives.is_empty() {
        return None;
    }
    let mut hits = 0;
    for (i, id) in ranked.iter().enumerate() {
        if i < k && positives.contains(id) {
            hits += 1;
        }
    }
    Some(hits as f64 / positives.len() as f64)
}

fn dcg_of(gains: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, g) in gains.iter().enumerate() {
        s += g / ((i + 2) as f64).ln() * std::f64::consts::LN_2;
    }
    s
}

/// Every ordered selection of up to `k` judged items; the best one is the ideal DCG.
fn best_dcg(gains: &[f64], k: usize) -> f64 {
    fn go(gains: &[f64], used: &mut Vec<bool>, picked: &mut Vec<f64>, k: usize, best: &mut f64) {
        *best = best.max(dcg_of(picked));
        if picked.len() == k {
            return;
        }
        for i in 0..gains.len() {
            if !used[i] {
                used[i] = true;
                picked.push(gains[i]);
                go(gains, used, picked, k, best);
                picked.pop();
                used[i] = false;
            }
        }
    }
    let mut best = 0.0;
    go(gains, &mut vec![false; gains.len()], &mut Vec::new(), k, &mut best);
    best
}

/// NDCG with the ideal found by exhaustive search; keep judged sets small.
pub fn brute_ndcg(ranked: &[String], judgments: &BTreeMap<String, Grade>, k: usize, gains: &GainMap) -> f64 {
    let actual: Vec<f64> = ranked
        .iter()
        .take(k)
        .map(|id| judgments.get(id).map_or(0.0, |&g| gains.gain(g)))
        .collect();
    let judged: Vec<f64> = judgments.values().map(|&g| gains.gain(g)).collect();
    let ideal = best_dcg(&judged, k);
    if ideal > 0.0 {
        dcg_of(&actual) / ideal
    } else {
        0.0
    }
}

fn manual_words(phrase: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    for c in phrase.chars() {
        if c.is_whitespace() || c.is_ascii_punctuation() {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
        } else {
            cur.extend(c.to_lowercase());
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}

fn manual_pieces(word: &str, tok: &Tokenizer) -> Vec<String> {
    if tok.id(word).is_some() {
        return vec![word.to_string()];
    }
    let chars: Vec<char> = word.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let mut end = chars.len();
        loop {
            if end == start {
                return vec![tok.token(aspectir::vocab::UNK).to_string()];
            }
            let body: String = chars[start..end].iter().collect();
            let piece = if start == 0 { body } else { format!("##{body}") };
            if tok.id(&piece).is_some() {
                out.push(piece);
                start = end;
                break;
            }
            end -= 1;
        }
    }
    out
}

/// Splits every phrase at granularity `g` and takes the union.
pub fn split_and_union(phrases: &[String], g: Granularity, tok: &Tokenizer) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for p in phrases {
        match g {
            Granularity::Phrase => {
                let p = p.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ");
                if !p.is_empty() {
                    out.insert(p);
                }
            }
            Granularity::Word => out.extend(manual_words(p)),
            Granularity::Token => {
                for w in manual_words(p) {
                    out.extend(manual_pieces(&w, tok));
                }
            }
        }
    }
    out
}
