use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{grouped_aspect_loss, mlm_loss, ValueBank};
use super::masking::{apply_masking, MaskingPolicy};
use super::optim::{Adam, AdamConfig, Schedule};
use crate::corpus::{DocKind, Document};
use crate::encoder::{
    backward, forward, layout_guiding_tokens, value_embeddings, value_embeddings_backward, EncoderConfig,
    EncoderParams, FramedInput, GroupingScheme,
};
use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::vocab::{decompose_annotations, AspectVocabularies, GranularityAnnotation, Tokenizer};

/// Which document kinds contribute to aspect learning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectSides {
    pub query_side: bool,
    pub item_side: bool,
}

impl Default for AspectSides {
    fn default() -> Self {
        Self {
            query_side: true,
            item_side: true,
        }
    }
}

impl AspectSides {
    pub fn allows(&self, kind: DocKind) -> bool {
        match kind {
            DocKind::Query => self.query_side,
            DocKind::Item => self.item_side,
        }
    }
}

/// A tokenized pre-training document with its annotations restricted to the
/// enabled objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainExample {
    pub kind: DocKind,
    pub content: Vec<u32>,
    pub annotations: GranularityAnnotation,
}

pub fn prepare_pretrain_examples(
    docs: &[Document],
    tok: &Tokenizer,
    vocabs: &AspectVocabularies,
    cfg: &EncoderConfig,
    sides: AspectSides,
) -> Result<Vec<PretrainExample>> {
    docs.iter()
        .map(|d| {
            let annotations = if sides.allows(d.kind) && cfg.scheme != GroupingScheme::None {
                decompose_annotations(d, vocabs, tok)?.restrict(&cfg.aspects, &cfg.granularities)
            } else {
                GranularityAnnotation::empty(vocabs.num_aspects())
            };
            Ok(PretrainExample {
                kind: d.kind,
                content: tok.tokenize(&d.text),
                annotations,
            })
        })
        .collect()
}

/// One masked document, ready for the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedDoc {
    pub kind: DocKind,
    pub input: FramedInput,
    /// `(content index, original id)`
    pub targets: Vec<(usize, u32)>,
    pub annotations: GranularityAnnotation,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PretrainBatch {
    pub docs: Vec<MaskedDoc>,
}

impl PretrainBatch {
    /// Frames and masks `examples`, drawing from `rng` in document order.
    pub fn mask<'a, I>(
        examples: I,
        cfg: &EncoderConfig,
        policy: &MaskingPolicy,
        first_regular: u32,
        rng: &mut ChaCha8Rng,
    ) -> Self
    where
        I: IntoIterator<Item = &'a PretrainExample>,
    {
        let docs = examples
            .into_iter()
            .map(|ex| {
                let mut content = ex.content.clone();
                content.truncate(cfg.max_content());
                let masked = apply_masking(&content, policy, ex.kind, first_regular, cfg.vocab_size, rng);
                MaskedDoc {
                    kind: ex.kind,
                    input: FramedInput::for_config(cfg, masked.content),
                    targets: masked.targets,
                    annotations: ex.annotations.clone(),
                }
            })
            .collect();
        Self { docs }
    }
}

/// Components of the pre-training objective for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    /// Mean MLM loss over documents with masked positions (0 if none).
    pub mlm: f64,
    /// Mean `L_{a_i}^{g_j}` over the documents annotated for it, `[aspect][granularity]`.
    pub per_objective: Vec<Vec<Option<f64>>>,
    /// Mean `L_A` over documents with at least one annotated objective (0 if none).
    pub aspect: f64,
    pub lambda: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn compose(mlm: f64, aspect: f64, lambda: f64, per_objective: Vec<Vec<Option<f64>>>) -> Self {
        Self {
            mlm,
            per_objective,
            aspect,
            lambda,
            total: mlm + lambda * aspect,
        }
    }
}

/// Value embeddings of every enabled objective.
pub fn value_bank(params: &EncoderParams, cfg: &EncoderConfig, vocabs: &AspectVocabularies) -> Result<ValueBank> {
    if cfg.scheme == GroupingScheme::None {
        return Ok(Vec::new());
    }
    cfg.aspects
        .iter()
        .map(|&a| {
            cfg.granularities
                .iter()
                .map(|&g| value_embeddings(params, cfg, vocabs, a, g))
                .collect()
        })
        .collect()
}

pub fn pretrain_loss(
    batch: &PretrainBatch,
    params: &EncoderParams,
    cfg: &EncoderConfig,
    vocabs: &AspectVocabularies,
    lambda: f64,
) -> Result<LossBreakdown> {
    evaluate(batch, params, cfg, vocabs, lambda, false).map(|(l, _)| l)
}

/// Loss together with its gradient for every parameter tensor.
pub fn pretrain_loss_grad(
    batch: &PretrainBatch,
    params: &EncoderParams,
    cfg: &EncoderConfig,
    vocabs: &AspectVocabularies,
    lambda: f64,
) -> Result<(LossBreakdown, EncoderParams)> {
    evaluate(batch, params, cfg, vocabs, lambda, true).map(|(l, g)| (l, g.expect("gradient requested")))
}

fn evaluate(
    batch: &PretrainBatch,
    params: &EncoderParams,
    cfg: &EncoderConfig,
    vocabs: &AspectVocabularies,
    lambda: f64,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<EncoderParams>)> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", format!("{lambda} must be a finite non-negative number")));
    }
    let na = cfg.aspects.len();
    let ng = cfg.granularities.len();
    let layout = layout_guiding_tokens(cfg.scheme, na, ng)?;
    let aspect_active = cfg.scheme != GroupingScheme::None;
    let bank = value_bank(params, cfg, vocabs)?;
    let mut d_bank: ValueBank = bank.iter().map(|r| r.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect()).collect();
    let mut grads = want_grad.then(|| params.zeros_like());

    let n_mlm = batch.docs.iter().filter(|d| !d.targets.is_empty()).count();
    let n_asp = if aspect_active {
        batch.docs.iter().filter(|d| !d.annotations.is_empty()).count()
    } else {
        0
    };
    let mut mlm_sum = 0.0;
    let mut asp_sum = 0.0;
    let mut obj_sum = vec![vec![0.0; ng]; na];
    let mut obj_n = vec![vec![0usize; ng]; na];

    for doc in &batch.docs {
        let has_mlm = !doc.targets.is_empty();
        let has_asp = aspect_active && !doc.annotations.is_empty();
        if !has_mlm && !has_asp {
            continue;
        }
        let (encoded, cache) = forward(params, cfg, &doc.input)?;
        let mut d_hidden = Matrix::zeros(encoded.hidden.rows(), encoded.hidden.cols());
        let mut touched = false;
        if has_mlm {
            let rows: Vec<(usize, u32)> = doc
                .targets
                .iter()
                .map(|&(i, t)| (doc.input.content_position(i), t))
                .collect();
            let l = match grads.as_mut() {
                Some(g) => {
                    touched = true;
                    let (d_emb, d_bias) = (&mut g.tok_emb, &mut g.mlm_bias);
                    mlm_loss(
                        &encoded.hidden,
                        &rows,
                        &params.tok_emb,
                        &params.mlm_bias,
                        Some((1.0 / n_mlm as f64, &mut d_hidden, d_emb, d_bias)),
                    )?
                }
                None => mlm_loss(&encoded.hidden, &rows, &params.tok_emb, &params.mlm_bias, None)?,
            };
            mlm_sum += l;
        }
        if has_asp {
            let grad = if want_grad && lambda > 0.0 {
                touched = true;
                Some((lambda / n_asp as f64, &mut d_hidden, &mut d_bank))
            } else {
                None
            };
            let g = grouped_aspect_loss(&encoded, cfg, &layout, &bank, &doc.annotations, grad)?;
            asp_sum += g.total;
            for i in 0..na {
                for j in 0..ng {
                    if let Some(l) = g.per_objective[i][j] {
                        obj_sum[i][j] += l;
                        obj_n[i][j] += 1;
                    }
                }
            }
        }
        if let (Some(g), true) = (grads.as_mut(), touched) {
            backward(params, &cache, &d_hidden, g);
        }
    }

    if let Some(g) = grads.as_mut() {
        for (i, &a) in cfg.aspects.iter().enumerate() {
            for (j, &gr) in cfg.granularities.iter().enumerate() {
                if aspect_active {
                    value_embeddings_backward(cfg, vocabs, a, gr, &d_bank[i][j], g);
                }
            }
        }
    }
    let mlm = if n_mlm > 0 { mlm_sum / n_mlm as f64 } else { 0.0 };
    let aspect = if n_asp > 0 { asp_sum / n_asp as f64 } else { 0.0 };
    let per_objective = (0..na)
        .map(|i| {
            (0..ng)
                .map(|j| (obj_n[i][j] > 0).then(|| obj_sum[i][j] / obj_n[i][j] as f64))
                .collect()
        })
        .collect();
    let breakdown = LossBreakdown::compose(mlm, aspect, lambda, per_objective);
    if !breakdown.total.is_finite() {
        return Err(Error::NonFinite("pre-training loss".into()));
    }
    Ok((breakdown, grads))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_frac: f64,
    pub lambda: f64,
    pub masking: MaskingPolicy,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Checkpoint callback cadence in steps; 0 disables intermediate checkpoints.
    pub checkpoint_every: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 32,
            lr: 1e-3,
            warmup_frac: 0.1,
            lambda: 0.1,
            masking: MaskingPolicy::default(),
            adam: AdamConfig::default(),
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl PretrainConfig {
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
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be non-negative"));
        }
        self.masking.validate()
    }
}

/// One training step's losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub step: usize,
    pub mlm: f64,
    pub aspect: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossLog {
    pub rows: Vec<LossRow>,
}

impl LossLog {
    /// `step, mlm, L_A, total`, tab separated, one line per step.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("step\tmlm\tl_a\ttotal\n");
        for r in &self.rows {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", r.step, r.mlm, r.aspect, r.total));
        }
        out
    }
}

/// Draws batches from a reshuffled permutation of `0..n`.
pub(crate) struct EpochSampler {
    order: Vec<usize>,
    pos: usize,
}

impl EpochSampler {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
        }
    }

    pub(crate) fn next_batch(&mut self, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let size = size.min(self.order.len());
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            let i = self.order[self.pos];
            self.pos += 1;
            if !out.contains(&i) {
                out.push(i);
            }
        }
        out
    }
}

pub(crate) fn diverged(step: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(detail) => Error::Diverged { step, detail },
        other => other,
    }
}

/// Optimizes `MLM + λ·L_A` with Adam over uniformly shuffled batches.
///
/// `on_checkpoint(step, params)` runs every `checkpoint_every` steps.
pub fn pretrain<F>(
    examples: &[PretrainExample],
    cfg: &EncoderConfig,
    mut params: EncoderParams,
    vocabs: &AspectVocabularies,
    pcfg: &PretrainConfig,
    first_regular: u32,
    mut on_checkpoint: F,
) -> Result<(EncoderParams, LossLog)>
where
    F: FnMut(usize, &EncoderParams) -> Result<()>,
{
    pcfg.validate()?;
    let mut log = LossLog::default();
    if pcfg.steps == 0 {
        return Ok((params, log));
    }
    if examples.is_empty() {
        return Err(Error::Empty("pre-training corpus"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(pcfg.seed);
    let mut sampler = EpochSampler::new(examples.len());
    let mut adam = Adam::new(pcfg.adam, &params);
    let schedule = Schedule::new(pcfg.lr, pcfg.warmup_frac, pcfg.steps);
    for step in 1..=pcfg.steps {
        let idx = sampler.next_batch(pcfg.batch_size, &mut rng);
        let batch = PretrainBatch::mask(idx.iter().map(|&i| &examples[i]), cfg, &pcfg.masking, first_regular, &mut rng);
        let (loss, grads) =
            pretrain_loss_grad(&batch, &params, cfg, vocabs, pcfg.lambda).map_err(|e| diverged(step, e))?;
        log.rows.push(LossRow {
            step,
            mlm: loss.mlm,
            aspect: loss.aspect,
            total: loss.total,
        });
        adam.step(&mut params, &grads, schedule.lr(step)).map_err(|e| diverged(step, e))?;
        if !params.is_finite() {
            return Err(Error::Diverged {
                step,
                detail: "parameters became non-finite".into(),
            });
        }
        if pcfg.checkpoint_every > 0 && step % pcfg.checkpoint_every == 0 {
            on_checkpoint(step, &params)?;
        }
    }
    Ok((params, log))
}
