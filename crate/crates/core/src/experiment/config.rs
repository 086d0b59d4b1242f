use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{AspectDef, AspectSchema, SyntheticGenConfig};
use crate::encoder::{EncoderConfig, GroupingScheme, ValueInit, ValueMode};
use crate::error::{Error, Result};
use crate::fusion::FusionMode;
use crate::objectives::{AdamConfig, AspectSides, FinetuneConfig, MaskingPolicy, PretrainConfig};
use crate::retrieval::AccuracyRule;
use crate::vocab::Granularity;

/// Every setting of one pipeline run, as a flat key-value document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for initialization, batching and masking.
    pub seed: u64,

    /// Directory with items.jsonl, queries.jsonl and judgments.jsonl; when
    /// unset the synthetic corpus is generated in memory.
    pub corpus_dir: Option<PathBuf>,
    pub corpus_seed: u64,
    pub n_items: usize,
    pub n_queries: usize,
    /// Queries (in id order) used for pre-training and fine-tuning; the rest are test queries.
    pub train_queries: usize,
    pub schema_aspects: Vec<String>,
    pub query_aspects: Vec<String>,

    pub max_vocab: usize,

    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_len: usize,
    pub init_std: f64,
    pub scheme: GroupingScheme,
    pub value_mode: ValueMode,
    pub value_init: ValueInit,
    pub fusion: FusionMode,
    /// Aspects with aspect learning enabled.
    pub aspects: Vec<String>,
    pub granularities: Vec<Granularity>,

    pub pretrain_steps: usize,
    pub pretrain_batch_size: usize,
    pub pretrain_lr: f64,
    pub pretrain_warmup: f64,
    pub lambda: f64,
    pub item_mask_ratio: f64,
    pub query_mask_ratio: f64,
    pub mask_token_prob: f64,
    pub random_token_prob: f64,
    pub force_one_mask: bool,
    pub query_side: bool,
    pub item_side: bool,
    pub clip_norm: f64,
    pub checkpoint_every: usize,

    pub finetune_steps: usize,
    pub finetune_batch_size: usize,
    pub finetune_lr: f64,
    pub finetune_warmup: f64,

    pub recall_ks: Vec<usize>,
    pub ndcg_ks: Vec<usize>,
    pub accuracy_rule: AccuracyRule,
}

impl Default for RunConfig {
    fn default() -> Self {
        let gen = SyntheticGenConfig::default();
        Self {
            seed: 1,
            corpus_dir: None,
            corpus_seed: gen.seed,
            n_items: gen.n_items,
            n_queries: gen.n_queries,
            train_queries: 400,
            schema_aspects: vec!["brand".into(), "color".into(), "category".into()],
            query_aspects: vec!["brand".into(), "category".into()],
            max_vocab: 1000,
            hidden: 32,
            layers: 2,
            heads: 2,
            ffn: 64,
            max_len: 64,
            init_std: 0.02,
            scheme: GroupingScheme::Granularity,
            value_mode: ValueMode::Unshared,
            value_init: ValueInit::Averaged,
            fusion: FusionMode::ClsGating,
            aspects: vec!["brand".into(), "color".into(), "category".into()],
            granularities: Granularity::ALL.to_vec(),
            pretrain_steps: 1000,
            pretrain_batch_size: 32,
            pretrain_lr: 1e-3,
            pretrain_warmup: 0.1,
            lambda: 0.1,
            item_mask_ratio: 0.15,
            query_mask_ratio: 0.3,
            mask_token_prob: 0.8,
            random_token_prob: 0.1,
            force_one_mask: false,
            query_side: true,
            item_side: true,
            clip_norm: 1.0,
            checkpoint_every: 0,
            finetune_steps: 300,
            finetune_batch_size: 16,
            finetune_lr: 1e-4,
            finetune_warmup: 0.1,
            recall_ks: vec![10, 50, 100],
            ndcg_ks: vec![10, 50],
            accuracy_rule: AccuracyRule::AnyHit,
        }
    }
}

fn config_error(origin: &str, message: impl Into<String>) -> Error {
    Error::Config {
        origin: origin.to_string(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_error(origin, e.to_string()))?;
        cfg.validate().map_err(|e| config_error(origin, e.to_string()))?;
        Ok(cfg)
    }

    pub fn from_table(table: toml::Table, origin: &str) -> Result<Self> {
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| config_error(origin, e.to_string()))?;
        cfg.validate().map_err(|e| config_error(origin, e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("run config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn schema(&self) -> Result<AspectSchema> {
        for q in &self.query_aspects {
            if !self.schema_aspects.contains(q) {
                return Err(Error::invalid("query_aspects", format!("`{q}` is not in schema_aspects")));
            }
        }
        AspectSchema::new(
            self.schema_aspects
                .iter()
                .map(|name| AspectDef {
                    name: name.clone(),
                    on_queries: self.query_aspects.contains(name),
                })
                .collect(),
        )
    }

    pub fn generator(&self) -> SyntheticGenConfig {
        SyntheticGenConfig {
            seed: self.corpus_seed,
            n_items: self.n_items,
            n_queries: self.n_queries,
            ..Default::default()
        }
    }

    pub fn aspect_indices(&self, schema: &AspectSchema) -> Result<Vec<usize>> {
        self.aspects
            .iter()
            .map(|a| {
                schema
                    .index_of(a)
                    .ok_or_else(|| Error::invalid("aspects", format!("`{a}` is not in schema_aspects")))
            })
            .collect()
    }

    pub fn encoder_config(&self, vocab_size: usize, schema: &AspectSchema) -> Result<EncoderConfig> {
        let (aspects, granularities) = if self.scheme == GroupingScheme::None {
            (Vec::new(), Vec::new())
        } else {
            (self.aspect_indices(schema)?, self.granularities.clone())
        };
        let cfg = EncoderConfig {
            vocab_size,
            hidden: self.hidden,
            layers: self.layers,
            heads: self.heads,
            ffn: self.ffn,
            max_len: self.max_len,
            scheme: self.scheme,
            value_mode: self.value_mode,
            value_init: self.value_init,
            fusion: self.fusion,
            aspects,
            granularities,
            init_std: self.init_std,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn masking(&self) -> MaskingPolicy {
        MaskingPolicy {
            item_ratio: self.item_mask_ratio,
            query_ratio: self.query_mask_ratio,
            mask_prob: self.mask_token_prob,
            random_prob: self.random_token_prob,
            force_one: self.force_one_mask,
        }
    }

    pub fn sides(&self) -> AspectSides {
        AspectSides {
            query_side: self.query_side,
            item_side: self.item_side,
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            clip_norm: self.clip_norm,
            ..Default::default()
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            steps: self.pretrain_steps,
            batch_size: self.pretrain_batch_size,
            lr: self.pretrain_lr,
            warmup_frac: self.pretrain_warmup,
            lambda: self.lambda,
            masking: self.masking(),
            adam: self.adam(),
            seed: derive_seed(self.seed, 2),
            checkpoint_every: self.checkpoint_every,
        }
    }

    pub fn finetune_config(&self) -> FinetuneConfig {
        FinetuneConfig {
            steps: self.finetune_steps,
            batch_size: self.finetune_batch_size,
            lr: self.finetune_lr,
            warmup_frac: self.finetune_warmup,
            adam: self.adam(),
            seed: derive_seed(self.seed, 3),
            checkpoint_every: self.checkpoint_every,
        }
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, 0)
    }

    pub fn value_seed(&self) -> u64 {
        derive_seed(self.seed, 1)
    }

    pub fn validate(&self) -> Result<()> {
        let schema = self.schema()?;
        if self.corpus_dir.is_none() {
            self.generator().validate()?;
            if self.train_queries >= self.n_queries {
                return Err(Error::invalid("train_queries", "must leave at least one test query"));
            }
        }
        if self.recall_ks.iter().chain(&self.ndcg_ks).any(|&k| k == 0) {
            return Err(Error::invalid("recall_ks/ndcg_ks", "cutoffs must be at least 1"));
        }
        self.pretrain_config().validate()?;
        self.finetune_config().validate()?;
        // vocab_size is only known after tokenization; check the rest with a placeholder.
        self.encoder_config(crate::vocab::SPECIALS.len(), &schema).map(|_| ())
    }
}

/// Independent seed stream `k` of `seed`.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(k.to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_validates_and_round_trips() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back = RunConfig::from_toml_str(&cfg.to_toml_string(), "test").unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn field_level_errors() {
        let err = RunConfig::from_toml_str("hidden = \"big\"", "c.toml").unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("hidden"), "{err}");
        let err = RunConfig::from_toml_str("no_such_key = 1", "c.toml").unwrap_err();
        assert!(err.to_string().contains("no_such_key"), "{err}");
        let err = RunConfig::from_toml_str("hidden = 30\nheads = 4", "c.toml").unwrap_err();
        assert!(err.to_string().contains("divisible"), "{err}");
        let err = RunConfig::from_toml_str("scheme = \"none\"", "c.toml").unwrap_err();
        assert!(err.to_string().contains("cls_only_baseline"), "{err}");
    }

    #[test]
    fn hash_tracks_every_field() {
        let a = RunConfig::default();
        let b = RunConfig { lambda: 0.0, ..a.clone() };
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn seeds_are_distinct_streams() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}
