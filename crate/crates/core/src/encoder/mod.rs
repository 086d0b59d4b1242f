//! Transformer encoder with CLS, guiding tokens and aspect-value embeddings.

mod checkpoint;
mod config;
mod layout;
mod model;
mod params;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint};
pub use config::{EncoderConfig, GroupingScheme, ValueInit, ValueMode};
pub use layout::{layout_guiding_tokens, GuidingLayout};
pub use model::{backward, encode, forward, EncodedSequence, ForwardCache, FramedInput};
pub use params::{init_value_tables, pooled_embedding, EncoderParams, LayerParams, ValueTable};

use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::vocab::{AspectVocabularies, Granularity};

/// Embeddings of every value of `V_a^g` under the configured value mode.
///
/// Shared mode pools the live token-embedding rows; unshared mode reads the
/// table `E_a^g`.
pub fn value_embeddings(
    params: &EncoderParams,
    cfg: &EncoderConfig,
    vocabs: &AspectVocabularies,
    aspect: usize,
    g: Granularity,
) -> Result<Matrix> {
    let vocab = vocabs.get(aspect, g);
    match cfg.value_mode {
        ValueMode::Shared => {
            let mut m = Matrix::zeros(vocab.len(), cfg.hidden);
            for v in 0..vocab.len() {
                m.row_mut(v)
                    .copy_from_slice(&pooled_embedding(&params.tok_emb, vocab.pieces(v)));
            }
            Ok(m)
        }
        ValueMode::Unshared => params.value_table(aspect, g).cloned().ok_or_else(|| {
            Error::invalid(
                "value tables",
                format!("no table for aspect {aspect} at {g}; call init_value_tables"),
            )
        }),
    }
}

/// Single value embedding `e_v`.
pub fn value_embedding(
    params: &EncoderParams,
    cfg: &EncoderConfig,
    vocabs: &AspectVocabularies,
    aspect: usize,
    g: Granularity,
    value: usize,
) -> Result<Vec<f64>> {
    let vocab = vocabs.get(aspect, g);
    if value >= vocab.len() {
        return Err(Error::invalid("value index", format!("{value} >= {}", vocab.len())));
    }
    match cfg.value_mode {
        ValueMode::Shared => Ok(pooled_embedding(&params.tok_emb, vocab.pieces(value))),
        ValueMode::Unshared => value_embeddings(params, cfg, vocabs, aspect, g).map(|m| m.row(value).to_vec()),
    }
}

/// Routes the gradient of a value-embedding matrix back into `grads`.
pub fn value_embeddings_backward(
    cfg: &EncoderConfig,
    vocabs: &AspectVocabularies,
    aspect: usize,
    g: Granularity,
    d_values: &Matrix,
    grads: &mut EncoderParams,
) {
    let vocab = vocabs.get(aspect, g);
    match cfg.value_mode {
        ValueMode::Shared => {
            for v in 0..vocab.len() {
                let pieces = vocab.pieces(v);
                let w = 1.0 / pieces.len() as f64;
                for &p in pieces {
                    grads.tok_emb.add_row_scaled(p as usize, d_values.row(v), w);
                }
            }
        }
        ValueMode::Unshared => {
            if let Some(t) = grads.value_table_mut(aspect, g) {
                t.add_assign(d_values);
            }
        }
    }
}
