use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{derive_seed, RunConfig};
use super::pipeline::{finetune_examples, Dataset, Model, VocabBundle};
use crate::error::{Error, Result};
use crate::objectives::{
    finetune_batch_loss, grad_check, prepare_pretrain_examples, pretrain_loss, pretrain_loss_grad, FinetuneBatch,
    GradCheckReport, MaskingPolicy, PretrainBatch,
};

/// Finite-difference checks of the pre-training and fine-tuning losses of a
/// freshly initialized model on a few documents of `data`.
pub fn grad_check_run(
    run: &RunConfig,
    data: &Dataset,
    docs: usize,
    max_per_tensor: Option<usize>,
    eps: f64,
    tolerance: f64,
) -> Result<Vec<(String, GradCheckReport)>> {
    let (train, _) = data.split_queries(run.train_queries);
    let vocab = VocabBundle::build(data, &train, run.max_vocab)?;
    let model = Model::init(run, &data.schema, &vocab)?;
    let n_items = docs.div_ceil(2).min(data.items.len());
    let n_queries = (docs / 2).min(train.len());
    let mut sample: Vec<_> = data.items[..n_items].to_vec();
    sample.extend(train[..n_queries].iter().map(|&q| q.clone()));
    let examples = prepare_pretrain_examples(&sample, &vocab.tok, &vocab.values, &model.cfg, run.sides())?;
    let policy = MaskingPolicy {
        force_one: true,
        ..run.masking()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(run.seed, 4));
    let batch = PretrainBatch::mask(&examples, &model.cfg, &policy, vocab.tok.first_regular_id(), &mut rng);

    let mut out = Vec::new();
    let (_, grads) = pretrain_loss_grad(&batch, &model.params, &model.cfg, &vocab.values, run.lambda)?;
    let report = grad_check(
        |p| pretrain_loss(&batch, p, &model.cfg, &vocab.values, run.lambda).map(|l| l.total),
        &model.params,
        &grads,
        eps,
        tolerance,
        max_per_tensor,
    )?;
    out.push(("pretrain".to_string(), report));

    let ft = finetune_examples(data, &train, &vocab.tok);
    let usable: Vec<_> = ft
        .iter()
        .filter(|e| !e.positives.is_empty() && !e.negatives.is_empty())
        .take(n_queries.max(1))
        .collect();
    if usable.is_empty() {
        return Err(Error::Empty("queries with both a positive and a hard negative"));
    }
    let fb = FinetuneBatch {
        queries: usable.iter().map(|e| e.query.clone()).collect(),
        positives: usable.iter().map(|e| e.positives[0].clone()).collect(),
        negatives: usable.iter().map(|e| e.negatives[0].clone()).collect(),
    };
    let (_, grads) = finetune_batch_loss(&fb, &model.params, &model.cfg, true)?;
    let report = grad_check(
        |p| finetune_batch_loss(&fb, p, &model.cfg, false).map(|(l, _)| l),
        &model.params,
        &grads.expect("gradient requested"),
        eps,
        tolerance,
        max_per_tensor,
    )?;
    out.push(("finetune".to_string(), report));
    Ok(out)
}
