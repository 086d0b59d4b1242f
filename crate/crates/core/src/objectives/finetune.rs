use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::finetune_loss_grad;
use super::optim::{Adam, AdamConfig, Schedule};
use super::pretrain::{diverged, EpochSampler};
use crate::encoder::{backward, forward, EncoderConfig, EncoderParams, FramedInput};
use crate::error::{Error, Result};
use crate::fusion::{final_representation, final_representation_backward};
use crate::tensor::Matrix;

/// A training query with the tokenized items it may be paired with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinetuneExample {
    pub query: Vec<u32>,
    /// Items graded E.
    pub positives: Vec<Vec<u32>>,
    /// Judged items graded other than E.
    pub negatives: Vec<Vec<u32>>,
}

/// `B` queries, their positives, and one hard negative per query.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FinetuneBatch {
    pub queries: Vec<Vec<u32>>,
    pub positives: Vec<Vec<u32>>,
    pub negatives: Vec<Vec<u32>>,
}

impl FinetuneBatch {
    /// Items in score order: positives first, then hard negatives.
    pub fn items(&self) -> impl Iterator<Item = &Vec<u32>> {
        self.positives.iter().chain(&self.negatives)
    }
}

/// Fused representation of raw content, with the state needed to backpropagate.
fn represent(params: &EncoderParams, cfg: &EncoderConfig, content: &[u32]) -> Result<(Vec<f64>, Rep)> {
    let input = FramedInput::for_config(cfg, content.to_vec());
    let (encoded, cache) = forward(params, cfg, &input)?;
    let rep = final_representation(&encoded, cfg, params)?;
    Ok((rep, Rep { encoded, cache }))
}

struct Rep {
    encoded: crate::encoder::EncodedSequence,
    cache: crate::encoder::ForwardCache,
}

/// Fused final vector `h_X` of a tokenized document.
pub fn encode_final(params: &EncoderParams, cfg: &EncoderConfig, content: &[u32]) -> Result<Vec<f64>> {
    represent(params, cfg, content).map(|(r, _)| r)
}

/// In-batch softmax cross-entropy over a batch, with gradients when requested.
pub fn finetune_batch_loss(
    batch: &FinetuneBatch,
    params: &EncoderParams,
    cfg: &EncoderConfig,
    want_grad: bool,
) -> Result<(f64, Option<EncoderParams>)> {
    if batch.queries.is_empty() {
        return Err(Error::Empty("fine-tuning batch"));
    }
    if batch.positives.len() != batch.queries.len() {
        return Err(Error::Shape("one positive per query required".into()));
    }
    let mut q_reps = Vec::new();
    let mut q_state = Vec::new();
    for q in &batch.queries {
        let (r, s) = represent(params, cfg, q)?;
        q_reps.push(r);
        q_state.push(s);
    }
    let mut i_reps = Vec::new();
    let mut i_state = Vec::new();
    for it in batch.items() {
        let (r, s) = represent(params, cfg, it)?;
        i_reps.push(r);
        i_state.push(s);
    }
    let (loss, dq, di) = finetune_loss_grad(&q_reps, &i_reps)?;
    if !want_grad {
        return Ok((loss, None));
    }
    let mut grads = params.zeros_like();
    for (state, d_rep) in q_state.iter().zip(&dq).chain(i_state.iter().zip(&di)) {
        let mut d_hidden = Matrix::zeros(state.encoded.hidden.rows(), state.encoded.hidden.cols());
        final_representation_backward(&state.encoded, cfg, params, d_rep, &mut d_hidden, &mut grads)?;
        backward(params, &state.cache, &d_hidden, &mut grads);
    }
    Ok((loss, Some(grads)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_frac: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    pub checkpoint_every: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            batch_size: 16,
            lr: 1e-4,
            warmup_frac: 0.1,
            adam: AdamConfig::default(),
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return Err(Error::invalid("warmup_frac", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Optimizes the in-batch softmax cross-entropy only; returns the per-step loss.
///
/// Each step samples distinct queries, one positive and one hard negative per query.
pub fn finetune<F>(
    examples: &[FinetuneExample],
    cfg: &EncoderConfig,
    mut params: EncoderParams,
    fcfg: &FinetuneConfig,
    mut on_checkpoint: F,
) -> Result<(EncoderParams, Vec<f64>)>
where
    F: FnMut(usize, &EncoderParams) -> Result<()>,
{
    fcfg.validate()?;
    let mut losses = Vec::new();
    if fcfg.steps == 0 {
        return Ok((params, losses));
    }
    let usable: Vec<&FinetuneExample> = examples
        .iter()
        .filter(|e| !e.positives.is_empty() && !e.negatives.is_empty())
        .collect();
    if usable.is_empty() {
        return Err(Error::Empty("queries with both a positive and a hard negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(fcfg.seed);
    let mut sampler = EpochSampler::new(usable.len());
    let mut adam = Adam::new(fcfg.adam, &params);
    let schedule = Schedule::new(fcfg.lr, fcfg.warmup_frac, fcfg.steps);
    for step in 1..=fcfg.steps {
        let mut batch = FinetuneBatch::default();
        for i in sampler.next_batch(fcfg.batch_size, &mut rng) {
            let ex = usable[i];
            batch.queries.push(ex.query.clone());
            batch.positives.push(ex.positives.choose(&mut rng).expect("non-empty").clone());
            batch.negatives.push(ex.negatives.choose(&mut rng).expect("non-empty").clone());
        }
        let (loss, grads) = finetune_batch_loss(&batch, &params, cfg, true).map_err(|e| diverged(step, e))?;
        losses.push(loss);
        adam.step(&mut params, &grads.expect("gradient requested"), schedule.lr(step))
            .map_err(|e| diverged(step, e))?;
        if !params.is_finite() {
            return Err(Error::Diverged {
                step,
                detail: "parameters became non-finite".into(),
            });
        }
        if fcfg.checkpoint_every > 0 && step % fcfg.checkpoint_every == 0 {
            on_checkpoint(step, &params)?;
        }
    }
    Ok((params, losses))
}
