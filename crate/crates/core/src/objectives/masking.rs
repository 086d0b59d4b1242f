use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::DocKind;
use crate::error::{Error, Result};
use crate::vocab::MASK;

/// How content tokens are selected and replaced for masked language modeling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskingPolicy {
    pub item_ratio: f64,
    pub query_ratio: f64,
    /// Probability that a selected position becomes MASK.
    pub mask_prob: f64,
    /// Probability that a selected position becomes a random regular token.
    pub random_prob: f64,
    /// Select one position when the Bernoulli draws select none.
    pub force_one: bool,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        Self {
            item_ratio: 0.15,
            query_ratio: 0.3,
            mask_prob: 0.8,
            random_prob: 0.1,
            force_one: false,
        }
    }
}

impl MaskingPolicy {
    pub fn ratio(&self, kind: DocKind) -> f64 {
        match kind {
            DocKind::Item => self.item_ratio,
            DocKind::Query => self.query_ratio,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("item_ratio", self.item_ratio),
            ("query_ratio", self.query_ratio),
            ("mask_prob", self.mask_prob),
            ("random_prob", self.random_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(name, format!("{p} is not a probability")));
            }
        }
        if self.mask_prob + self.random_prob > 1.0 + 1e-12 {
            return Err(Error::invalid("mask_prob + random_prob", "exceeds 1"));
        }
        Ok(())
    }
}

/// A content sequence after masking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Masked {
    pub content: Vec<u32>,
    /// `(content index, original id)`, ascending by index.
    pub targets: Vec<(usize, u32)>,
}

/// Selects content positions with the kind's ratio and applies 80/10/10 replacement.
///
/// Only content ids are passed in, so CLS and guiding positions can never be
/// selected. Random replacements are drawn from `first_regular..vocab_size`.
pub fn apply_masking<R: Rng + ?Sized>(
    content: &[u32],
    policy: &MaskingPolicy,
    kind: DocKind,
    first_regular: u32,
    vocab_size: usize,
    rng: &mut R,
) -> Masked {
    let ratio = policy.ratio(kind);
    let mut selected: Vec<usize> = (0..content.len()).filter(|_| rng.random::<f64>() < ratio).collect();
    if selected.is_empty() && policy.force_one && !content.is_empty() {
        selected.push(rng.random_range(0..content.len()));
    }
    let mut out = content.to_vec();
    let mut targets = Vec::with_capacity(selected.len());
    for i in selected {
        targets.push((i, content[i]));
        let u: f64 = rng.random();
        if u < policy.mask_prob {
            out[i] = MASK;
        } else if u < policy.mask_prob + policy.random_prob && (first_regular as usize) < vocab_size {
            out[i] = rng.random_range(first_regular..vocab_size as u32);
        }
    }
    Masked { content: out, targets }
}
