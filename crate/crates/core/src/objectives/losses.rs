//! Loss functions and their gradients with respect to their direct inputs.

use crate::encoder::{EncodedSequence, EncoderConfig, GroupingScheme, GuidingLayout};
use crate::error::{Error, Result};
use crate::fusion::slot_row;
use crate::tensor::{axpy, dot, log_sum_exp, softmax, Matrix};
use crate::vocab::GranularityAnnotation;

/// Loss value plus gradients for the aspect-value contrastive loss.
#[derive(Debug, Clone, PartialEq)]
pub struct AspectLossGrad {
    pub loss: f64,
    /// ∂L/∂h
    pub d_h: Vec<f64>,
    /// ∂L/∂s_v for each value score; ∂L/∂e_v = d_scores[v] · h.
    pub d_scores: Vec<f64>,
}

/// Contrastive loss of `h` against every value embedding, averaged over the positives:
/// `−(1/|𝒜|) Σ_{v+∈𝒜} log softmax(h·e)[v+]`.
pub fn aspect_loss(h: &[f64], values: &Matrix, positives: &[usize]) -> Result<f64> {
    aspect_loss_grad(h, values, positives).map(|g| g.loss)
}

pub fn aspect_loss_grad(h: &[f64], values: &Matrix, positives: &[usize]) -> Result<AspectLossGrad> {
    if positives.is_empty() {
        return Err(Error::Empty("aspect annotation set"));
    }
    if values.cols() != h.len() {
        return Err(Error::Shape(format!("value width {} vs h {}", values.cols(), h.len())));
    }
    if let Some(&bad) = positives.iter().find(|&&v| v >= values.rows()) {
        return Err(Error::Shape(format!("positive {bad} outside vocabulary of {}", values.rows())));
    }
    let scores: Vec<f64> = (0..values.rows()).map(|v| dot(h, values.row(v))).collect();
    let lse = log_sum_exp(&scores);
    let n = positives.len() as f64;
    let loss = lse - positives.iter().map(|&v| scores[v]).sum::<f64>() / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("aspect loss".into()));
    }
    let mut d_scores = softmax(&scores);
    for &v in positives {
        d_scores[v] -= 1.0 / n;
    }
    let mut d_h = vec![0.0; h.len()];
    for (v, &ds) in d_scores.iter().enumerate() {
        axpy(&mut d_h, ds, values.row(v));
    }
    Ok(AspectLossGrad { loss, d_h, d_scores })
}

/// Per-objective weights of the grouped aspect loss, `[aspect][granularity]`.
///
/// Objectives without annotations get weight zero and drop out of every
/// average they would have joined; with all objectives present the weights
/// reduce to the plain single / per-granularity / per-aspect means.
pub fn objective_weights(scheme: GroupingScheme, present: &[Vec<bool>]) -> Vec<Vec<f64>> {
    let na = present.len();
    let ng = present.first().map_or(0, Vec::len);
    let mut w = vec![vec![0.0; ng]; na];
    match scheme {
        GroupingScheme::None => {}
        GroupingScheme::Single => {
            let n = present.iter().flatten().filter(|&&p| p).count();
            for i in 0..na {
                for j in 0..ng {
                    if present[i][j] {
                        w[i][j] = 1.0 / n as f64;
                    }
                }
            }
        }
        GroupingScheme::Granularity => {
            let counts: Vec<usize> = (0..ng).map(|j| (0..na).filter(|&i| present[i][j]).count()).collect();
            let groups = counts.iter().filter(|&&c| c > 0).count();
            for i in 0..na {
                for j in 0..ng {
                    if present[i][j] {
                        w[i][j] = 1.0 / (groups as f64 * counts[j] as f64);
                    }
                }
            }
        }
        GroupingScheme::Aspect => {
            let counts: Vec<usize> = (0..na).map(|i| present[i].iter().filter(|&&p| p).count()).collect();
            let groups = counts.iter().filter(|&&c| c > 0).count();
            for i in 0..na {
                for j in 0..ng {
                    if present[i][j] {
                        w[i][j] = 1.0 / (groups as f64 * counts[i] as f64);
                    }
                }
            }
        }
    }
    w
}

/// Result of the grouped aspect loss for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedAspectLoss {
    /// `L_A`
    pub total: f64,
    /// `L_{a_i}^{g_j}` where annotations exist, `[aspect][granularity]`.
    pub per_objective: Vec<Vec<Option<f64>>>,
}

/// Value embeddings of the enabled objectives, `[aspect][granularity]`
/// (positions in the enabled lists).
pub type ValueBank = Vec<Vec<Matrix>>;

fn check_layout(cfg: &EncoderConfig, layout: &GuidingLayout, bank: &ValueBank) -> Result<()> {
    if layout.scheme() != cfg.scheme
        || layout.num_aspects() != cfg.aspects.len()
        || layout.num_granularities() != cfg.granularities.len()
    {
        return Err(Error::invalid("grouped aspect loss", "layout does not match the configured scheme"));
    }
    if bank.len() != cfg.aspects.len() || bank.iter().any(|r| r.len() != cfg.granularities.len()) {
        return Err(Error::Shape("value bank does not cover the enabled objectives".into()));
    }
    Ok(())
}

/// `L_A` under the configured grouping scheme, plus gradients when `grad` is given.
///
/// With `grad = Some((scale, d_hidden, d_bank))` the gradient of `scale · L_A`
/// is accumulated into the hidden-state and value-bank gradients.
pub fn grouped_aspect_loss(
    encoded: &EncodedSequence,
    cfg: &EncoderConfig,
    layout: &GuidingLayout,
    bank: &ValueBank,
    annotations: &GranularityAnnotation,
    mut grad: Option<(f64, &mut Matrix, &mut ValueBank)>,
) -> Result<GroupedAspectLoss> {
    check_layout(cfg, layout, bank)?;
    let na = cfg.aspects.len();
    let ng = cfg.granularities.len();
    let present: Vec<Vec<bool>> = cfg
        .aspects
        .iter()
        .map(|&a| cfg.granularities.iter().map(|&g| !annotations.get(a, g).is_empty()).collect())
        .collect();
    let weights = objective_weights(cfg.scheme, &present);
    let mut per_objective = vec![vec![None; ng]; na];
    let mut total = 0.0;
    for i in 0..na {
        for j in 0..ng {
            if !present[i][j] || weights[i][j] == 0.0 {
                continue;
            }
            let Some(slot) = layout.slot(i, j) else { continue };
            let row = slot_row(cfg, encoded, slot)?;
            let h = encoded.hidden.row(row);
            let positives = annotations.get(cfg.aspects[i], cfg.granularities[j]);
            let g = aspect_loss_grad(h, &bank[i][j], positives)?;
            total += weights[i][j] * g.loss;
            per_objective[i][j] = Some(g.loss);
            if let Some((scale, d_hidden, d_bank)) = grad.as_mut() {
                let s = *scale * weights[i][j];
                d_hidden.add_row_scaled(row, &g.d_h, s);
                for (v, &ds) in g.d_scores.iter().enumerate() {
                    if ds != 0.0 {
                        d_bank[i][j].add_row_scaled(v, h, s * ds);
                    }
                }
            }
        }
    }
    Ok(GroupedAspectLoss { total, per_objective })
}

/// Mean over masked positions of `−log softmax(h·Eᵀ + b)[target]` with the
/// output projection tied to the token-embedding table.
///
/// `positions` index rows of `hidden`. With `grad = Some((scale, d_hidden,
/// d_tok_emb, d_bias))` the gradient of `scale · loss` is accumulated.
pub fn mlm_loss(
    hidden: &Matrix,
    positions: &[(usize, u32)],
    tok_emb: &Matrix,
    bias: &Matrix,
    mut grad: Option<(f64, &mut Matrix, &mut Matrix, &mut Matrix)>,
) -> Result<f64> {
    if positions.is_empty() {
        return Err(Error::Empty("masked positions"));
    }
    let vocab = tok_emb.rows();
    let n = positions.len() as f64;
    let mut total = 0.0;
    let mut logits = vec![0.0; vocab];
    for &(row, target) in positions {
        let h = hidden.row(row);
        for (v, l) in logits.iter_mut().enumerate() {
            *l = dot(h, tok_emb.row(v)) + bias.as_slice()[v];
        }
        let lse = log_sum_exp(&logits);
        total += lse - logits[target as usize];
        if let Some((scale, d_hidden, d_emb, d_bias)) = grad.as_mut() {
            let s = *scale / n;
            let dh = d_hidden.row_mut(row);
            for v in 0..vocab {
                let mut d = (logits[v] - lse).exp();
                if v == target as usize {
                    d -= 1.0;
                }
                let d = d * s;
                axpy(dh, d, tok_emb.row(v));
                axpy(d_emb.row_mut(v), d, h);
                d_bias.as_mut_slice()[v] += d;
            }
        }
    }
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("MLM loss".into()));
    }
    Ok(loss)
}

/// In-batch softmax cross entropy.
///
/// `items[b]` is the positive of `queries[b]`; every other item, including
/// the hard negatives appended after the positives, is a negative.
pub fn finetune_loss(queries: &[Vec<f64>], items: &[Vec<f64>]) -> Result<f64> {
    finetune_loss_grad(queries, items).map(|(l, _, _)| l)
}

/// Loss with `∂L/∂h_Q` and `∂L/∂h_I`.
pub fn finetune_loss_grad(queries: &[Vec<f64>], items: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let b = queries.len();
    if b == 0 {
        return Err(Error::Empty("fine-tuning batch"));
    }
    if items.len() < b {
        return Err(Error::Shape(format!("{} items for {b} queries", items.len())));
    }
    let mut loss = 0.0;
    let mut dq = vec![vec![0.0; queries[0].len()]; b];
    let mut di = vec![vec![0.0; queries[0].len()]; items.len()];
    for (qi, q) in queries.iter().enumerate() {
        let scores: Vec<f64> = items.iter().map(|it| dot(q, it)).collect();
        loss += log_sum_exp(&scores) - scores[qi];
        let mut p = softmax(&scores);
        p[qi] -= 1.0;
        for (j, &pj) in p.iter().enumerate() {
            let s = pj / b as f64;
            axpy(&mut dq[qi], s, &items[j]);
            axpy(&mut di[j], s, q);
        }
    }
    let loss = loss / b as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("fine-tuning loss".into()));
    }
    Ok((loss, dq, di))
}
