//! Frequency-ranked WordPiece vocabulary with greedy longest-match segmentation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const MASK: u32 = 3;
pub const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[MASK]"];

/// Prefix carried by word-internal pieces.
pub const CONTINUATION: &str = "##";

/// Fraction of the post-alphabet budget held back for continuation pieces
/// when not every word fits.
const PIECE_SHARE: f64 = 0.1;

/// Lowercased words, split on Unicode whitespace and ASCII punctuation.
pub fn split_words(text: &str) -> Vec<String> {
    text.split(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Tokenizer {
    /// Builds a vocabulary of at most `max_vocab` entries from `texts`.
    ///
    /// The specials and a character alphabet (bare and `##` forms) come
    /// first; whole words then fill the budget in order of decreasing
    /// frequency. When words are left over, a small share of the budget goes
    /// to the `##` remainders those words leave after their longest
    /// whole-word prefix, so `handmade` can become `hand ##made`.
    pub fn train<'a, I>(texts: I, max_vocab: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut freq: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            for w in split_words(t) {
                *freq.entry(w).or_default() += 1;
            }
        }
        let alphabet: BTreeSet<char> = freq.keys().flat_map(|w| w.chars()).collect();
        let required = SPECIALS.len() + 2 * alphabet.len();
        if max_vocab < required {
            return Err(Error::BudgetTooSmall {
                budget: max_vocab,
                required,
            });
        }

        let mut tok = Tokenizer {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for s in SPECIALS {
            tok.push(s.to_string());
        }
        for c in &alphabet {
            tok.push(c.to_string());
        }
        for c in &alphabet {
            tok.push(format!("{CONTINUATION}{c}"));
        }

        let mut words: Vec<(&String, usize)> = freq
            .iter()
            .filter(|(w, _)| !tok.index.contains_key(*w))
            .map(|(w, &n)| (w, n))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let remaining = max_vocab - required;
        let reserve = if words.len() <= remaining {
            0
        } else if remaining >= 2 {
            ((remaining as f64 * PIECE_SHARE) as usize).max(1)
        } else {
            0
        };
        let word_slots = words.len().min(remaining - reserve);
        for (w, _) in &words[..word_slots] {
            tok.push((*w).clone());
        }

        let rejected = &words[word_slots..];
        let mut pieces: BTreeMap<String, usize> = BTreeMap::new();
        for (w, n) in rejected {
            if let Some(prefix) = tok.longest_word_prefix(w) {
                let rest = &w[prefix..];
                if !rest.is_empty() {
                    *pieces.entry(format!("{CONTINUATION}{rest}")).or_default() += n;
                }
            }
        }
        let mut pieces: Vec<(String, usize)> = pieces
            .into_iter()
            .filter(|(p, _)| !tok.index.contains_key(p))
            .collect();
        pieces.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut budget = max_vocab - tok.len();
        for (p, _) in pieces.into_iter().take(reserve.min(budget)) {
            tok.push(p);
        }
        budget = max_vocab - tok.len();
        for (w, _) in rejected.iter().take(budget) {
            tok.push((*w).clone());
        }
        Ok(tok)
    }

    fn push(&mut self, s: String) {
        let id = self.tokens.len() as u32;
        self.index.insert(s.clone(), id);
        self.tokens.push(s);
    }

    /// Byte length of the longest whole-word entry (two or more chars) that prefixes `w`.
    fn longest_word_prefix(&self, w: &str) -> Option<usize> {
        let bounds: Vec<usize> = w.char_indices().map(|(i, _)| i).skip(2).collect();
        bounds
            .into_iter()
            .rev()
            .find(|&end| self.index.contains_key(&w[..end]))
    }

    /// Rebuilds a tokenizer from an ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::invalid("tokenizer", "specials missing or out of order"));
        }
        let mut tok = Tokenizer {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in tokens {
            if tok.index.contains_key(&t) {
                return Err(Error::invalid("tokenizer", format!("duplicate token `{t}`")));
            }
            tok.push(t);
        }
        Ok(tok)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// First id that is not a special token.
    pub fn first_regular_id(&self) -> u32 {
        SPECIALS.len() as u32
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Greedy longest-match segmentation of one lowercased word.
    pub fn tokenize_word(&self, word: &str) -> Vec<u32> {
        if let Some(id) = self.id(word) {
            return vec![id];
        }
        let mut out = Vec::new();
        let mut start = 0;
        let mut scratch = String::new();
        while start < word.len() {
            let ends: Vec<usize> = word[start..]
                .char_indices()
                .map(|(i, c)| start + i + c.len_utf8())
                .collect();
            let mut found = None;
            for &end in ends.iter().rev() {
                scratch.clear();
                if start > 0 {
                    scratch.push_str(CONTINUATION);
                }
                scratch.push_str(&word[start..end]);
                if let Some(id) = self.id(&scratch) {
                    found = Some((id, end));
                    break;
                }
            }
            match found {
                Some((id, end)) => {
                    out.push(id);
                    start = end;
                }
                None => return vec![UNK],
            }
        }
        out
    }

    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        split_words(text)
            .iter()
            .flat_map(|w| self.tokenize_word(w))
            .collect()
    }

    pub fn tokenize_to_strings(&self, text: &str) -> Vec<String> {
        self.tokenize(text)
            .into_iter()
            .map(|id| self.token(id).to_string())
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        for t in &self.tokens {
            let _ = writeln!(s, "{t}");
        }
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }
}
