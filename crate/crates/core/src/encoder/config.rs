use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionMode;
use crate::vocab::Granularity;

/// How the |A|·|G| aspect objectives share guiding tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingScheme {
    /// One guiding token per (aspect, granularity).
    Single,
    /// One guiding token per granularity, shared by all aspects.
    Granularity,
    /// One guiding token per aspect, shared by all granularities.
    Aspect,
    /// No guiding tokens: the CLS-only bi-encoder.
    None,
}

impl GroupingScheme {
    pub const ALL: [GroupingScheme; 4] = [
        GroupingScheme::Single,
        GroupingScheme::Granularity,
        GroupingScheme::Aspect,
        GroupingScheme::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GroupingScheme::Single => "single",
            GroupingScheme::Granularity => "granularity",
            GroupingScheme::Aspect => "aspect",
            GroupingScheme::None => "none",
        }
    }
}

impl fmt::Display for GroupingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GroupingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::invalid("grouping scheme", format!("unknown scheme `{s}`")))
    }
}

/// Where aspect-value embeddings come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueMode {
    /// Average of the live token embeddings of the value's pieces.
    Shared,
    /// A separate trainable table per (aspect, granularity).
    Unshared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueInit {
    Averaged,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_len: usize,
    pub scheme: GroupingScheme,
    pub value_mode: ValueMode,
    pub value_init: ValueInit,
    pub fusion: FusionMode,
    /// Schema indices of the aspects that receive objectives.
    pub aspects: Vec<usize>,
    pub granularities: Vec<Granularity>,
    /// Standard deviation of the normal weight initialization.
    pub init_std: f64,
}

impl EncoderConfig {
    /// Desk-scale defaults: H=32, two layers, two heads, FFN 64, length 64.
    pub fn desk(vocab_size: usize, num_aspects: usize) -> Self {
        Self {
            vocab_size,
            hidden: 32,
            layers: 2,
            heads: 2,
            ffn: 64,
            max_len: 64,
            scheme: GroupingScheme::Granularity,
            value_mode: ValueMode::Unshared,
            value_init: ValueInit::Averaged,
            fusion: FusionMode::ClsGating,
            aspects: (0..num_aspects).collect(),
            granularities: Granularity::ALL.to_vec(),
            init_std: 0.02,
        }
    }

    /// Slots in the guiding layout (K), whether or not they are inserted.
    pub fn slot_count(&self) -> usize {
        super::layout_guiding_tokens(self.scheme, self.aspects.len(), self.granularities.len())
            .map(|l| l.slots())
            .unwrap_or(0)
    }

    /// Guiding tokens physically inserted after CLS.
    pub fn inserted_guides(&self) -> usize {
        match self.fusion {
            FusionMode::ClsGating | FusionMode::NoClsGating => self.slot_count(),
            FusionMode::FirstK | FusionMode::ClsOnlyBaseline => 0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    /// Longest content that fits after CLS and the guiding tokens.
    pub fn max_content(&self) -> usize {
        self.max_len - 1 - self.inserted_guides()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |r: String| Err(Error::invalid("encoder config", r));
        if self.hidden == 0 || self.heads == 0 || self.layers == 0 || self.ffn == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.hidden % self.heads != 0 {
            return bad(format!("hidden {} not divisible by heads {}", self.hidden, self.heads));
        }
        if self.vocab_size < crate::vocab::SPECIALS.len() {
            return bad("vocabulary smaller than the special tokens".into());
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return bad("init_std must be positive".into());
        }
        let mut gs = self.granularities.clone();
        gs.sort();
        gs.dedup();
        if gs.len() != self.granularities.len() {
            return bad("granularities repeat".into());
        }
        let mut asp = self.aspects.clone();
        asp.sort_unstable();
        asp.dedup();
        if asp.len() != self.aspects.len() {
            return bad("aspects repeat".into());
        }
        let baseline = self.scheme == GroupingScheme::None;
        if baseline != (self.fusion == FusionMode::ClsOnlyBaseline) {
            return bad("scheme `none` goes with fusion `cls_only_baseline` and only with it".into());
        }
        if !baseline && (self.aspects.is_empty() || self.granularities.is_empty()) {
            return bad("guiding tokens need at least one aspect and one granularity".into());
        }
        if self.max_len < 1 + self.inserted_guides() + 1 {
            return bad(format!(
                "max_len {} leaves no room for content after {} guiding tokens",
                self.max_len,
                self.inserted_guides()
            ));
        }
        if self.fusion == FusionMode::FirstK && self.max_content() < self.slot_count() {
            return bad(format!("first_k needs max_len > {}", self.slot_count()));
        }
        Ok(())
    }
}
