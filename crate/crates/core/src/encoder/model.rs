//! Post-LN transformer encoder with an explicit backward pass.

use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, linear, linear_backward, softmax_in_place, Matrix};
use crate::fusion::FusionMode;
use crate::vocab::{CLS, PAD};

use super::{EncoderConfig, EncoderParams, LayerParams};

const LN_EPS: f64 = 1e-6;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// `[CLS, o_1..o_K, x_1..x_n]`: the guide count and the content token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramedInput {
    pub guides: usize,
    pub content: Vec<u32>,
}

impl FramedInput {
    pub fn new(guides: usize, content: Vec<u32>) -> Self {
        Self { guides, content }
    }

    /// Frames `content` for `cfg`, truncating it to fit `max_len`.
    ///
    /// Under `first_k` fusion, content shorter than K is padded with PAD so
    /// every slot has a position to read.
    pub fn for_config(cfg: &EncoderConfig, mut content: Vec<u32>) -> Self {
        content.truncate(cfg.max_content());
        if cfg.fusion == FusionMode::FirstK && content.len() < cfg.slot_count() {
            content.resize(cfg.slot_count(), PAD);
        }
        Self::new(cfg.inserted_guides(), content)
    }

    pub fn len(&self) -> usize {
        1 + self.guides + self.content.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Position of content token `i` in the framed sequence.
    pub fn content_position(&self, i: usize) -> usize {
        1 + self.guides + i
    }
}

/// Final-layer hidden vectors for every framed position.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSequence {
    pub hidden: Matrix,
    pub guides: usize,
}

impl EncodedSequence {
    pub fn len(&self) -> usize {
        self.hidden.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.rows() == 0
    }

    pub fn cls(&self) -> &[f64] {
        self.hidden.row(0)
    }

    pub fn guide(&self, k: usize) -> &[f64] {
        assert!(k < self.guides, "guide index out of range");
        self.hidden.row(1 + k)
    }

    pub fn content_len(&self) -> usize {
        self.hidden.rows() - 1 - self.guides
    }

    pub fn content(&self, i: usize) -> &[f64] {
        self.hidden.row(1 + self.guides + i)
    }
}

#[derive(Debug, Clone)]
struct LnCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    x_in: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    probs: Vec<Matrix>,
    ctx: Matrix,
    ln1: LnCache,
    x1: Matrix,
    pre_act: Matrix,
    act: Matrix,
    ln2: LnCache,
}

/// Activations kept from [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: FramedInput,
    emb_ln: LnCache,
    layers: Vec<LayerCache>,
}

fn layer_norm(x: &Matrix, gain: &Matrix, bias: &Matrix) -> (Matrix, LnCache) {
    let (t, h) = x.shape();
    let mut y = Matrix::zeros(t, h);
    let mut xhat = Matrix::zeros(t, h);
    let mut inv_std = Vec::with_capacity(t);
    for r in 0..t {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / h as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(inv);
        let xr = xhat.row_mut(r);
        for (o, v) in xr.iter_mut().zip(row) {
            *o = (v - mean) * inv;
        }
        let yr = y.row_mut(r);
        for c in 0..h {
            yr[c] = gain.as_slice()[c] * xr[c] + bias.as_slice()[c];
        }
    }
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward(dy: &Matrix, cache: &LnCache, gain: &Matrix, dgain: &mut Matrix, dbias: &mut Matrix) -> Matrix {
    let (t, h) = dy.shape();
    let mut dx = Matrix::zeros(t, h);
    let mut dxhat = vec![0.0; h];
    for r in 0..t {
        let dyr = dy.row(r);
        let xh = cache.xhat.row(r);
        for c in 0..h {
            dgain.as_mut_slice()[c] += dyr[c] * xh[c];
            dbias.as_mut_slice()[c] += dyr[c];
            dxhat[c] = dyr[c] * gain.as_slice()[c];
        }
        let sum: f64 = dxhat.iter().sum();
        let sum_xh: f64 = dot(&dxhat, xh);
        let scale = cache.inv_std[r] / h as f64;
        let dxr = dx.row_mut(r);
        for c in 0..h {
            dxr[c] = scale * (h as f64 * dxhat[c] - sum - xh[c] * sum_xh);
        }
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Multi-head self-attention over all positions. Returns context and per-head probabilities.
fn attention(q: &Matrix, k: &Matrix, v: &Matrix, heads: usize) -> (Matrix, Vec<Matrix>) {
    let (t, h) = q.shape();
    let d = h / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let mut ctx = Matrix::zeros(t, h);
    let mut probs = Vec::with_capacity(heads);
    for hd in 0..heads {
        let off = hd * d;
        let mut p = Matrix::zeros(t, t);
        for i in 0..t {
            let qi = &q.row(i)[off..off + d];
            let pr = p.row_mut(i);
            for j in 0..t {
                pr[j] = dot(qi, &k.row(j)[off..off + d]) * scale;
            }
            softmax_in_place(pr);
        }
        for i in 0..t {
            let pr = p.row(i);
            let cr = &mut ctx.row_mut(i)[off..off + d];
            for j in 0..t {
                axpy(cr, pr[j], &v.row(j)[off..off + d]);
            }
        }
        probs.push(p);
    }
    (ctx, probs)
}

fn attention_backward(
    dctx: &Matrix,
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    probs: &[Matrix],
) -> (Matrix, Matrix, Matrix) {
    let (t, h) = q.shape();
    let heads = probs.len();
    let d = h / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let mut dq = Matrix::zeros(t, h);
    let mut dk = Matrix::zeros(t, h);
    let mut dv = Matrix::zeros(t, h);
    let mut dp = vec![0.0; t];
    for (hd, p) in probs.iter().enumerate() {
        let off = hd * d;
        for i in 0..t {
            let dci = &dctx.row(i)[off..off + d];
            let pr = p.row(i);
            for j in 0..t {
                dp[j] = dot(dci, &v.row(j)[off..off + d]);
                axpy(&mut dv.row_mut(j)[off..off + d], pr[j], dci);
            }
            let inner: f64 = dot(&dp, pr);
            for j in 0..t {
                let ds = pr[j] * (dp[j] - inner) * scale;
                if ds != 0.0 {
                    axpy(&mut dq.row_mut(i)[off..off + d], ds, &k.row(j)[off..off + d]);
                    axpy(&mut dk.row_mut(j)[off..off + d], ds, &q.row(i)[off..off + d]);
                }
            }
        }
    }
    (dq, dk, dv)
}

fn layer_forward(p: &LayerParams, x: Matrix, heads: usize) -> (Matrix, LayerCache) {
    let q = linear(&x, &p.wq, &p.bq);
    let k = linear(&x, &p.wk, &p.bk);
    let v = linear(&x, &p.wv, &p.bv);
    let (ctx, probs) = attention(&q, &k, &v, heads);
    let mut r1 = linear(&ctx, &p.wo, &p.bo);
    r1.add_assign(&x);
    let (x1, ln1) = layer_norm(&r1, &p.ln1_gain, &p.ln1_bias);
    let pre_act = linear(&x1, &p.w1, &p.b1);
    let mut act = pre_act.clone();
    act.as_mut_slice().iter_mut().for_each(|z| *z = gelu(*z));
    let mut r2 = linear(&act, &p.w2, &p.b2);
    r2.add_assign(&x1);
    let (out, ln2) = layer_norm(&r2, &p.ln2_gain, &p.ln2_bias);
    let cache = LayerCache {
        x_in: x,
        q,
        k,
        v,
        probs,
        ctx,
        ln1,
        x1,
        pre_act,
        act,
        ln2,
    };
    (out, cache)
}

fn layer_backward(p: &LayerParams, c: &LayerCache, dout: &Matrix, g: &mut LayerParams) -> Matrix {
    let dr2 = layer_norm_backward(dout, &c.ln2, &p.ln2_gain, &mut g.ln2_gain, &mut g.ln2_bias);
    let mut dact = linear_backward(&c.act, &p.w2, &dr2, &mut g.w2, &mut g.b2);
    for (d, z) in dact.as_mut_slice().iter_mut().zip(c.pre_act.as_slice()) {
        *d *= gelu_grad(*z);
    }
    let mut dx1 = linear_backward(&c.x1, &p.w1, &dact, &mut g.w1, &mut g.b1);
    dx1.add_assign(&dr2);
    let dr1 = layer_norm_backward(&dx1, &c.ln1, &p.ln1_gain, &mut g.ln1_gain, &mut g.ln1_bias);
    let dctx = linear_backward(&c.ctx, &p.wo, &dr1, &mut g.wo, &mut g.bo);
    let (dq, dk, dv) = attention_backward(&dctx, &c.q, &c.k, &c.v, &c.probs);
    let mut dx = dr1;
    dx.add_assign(&linear_backward(&c.x_in, &p.wq, &dq, &mut g.wq, &mut g.bq));
    dx.add_assign(&linear_backward(&c.x_in, &p.wk, &dk, &mut g.wk, &mut g.bk));
    dx.add_assign(&linear_backward(&c.x_in, &p.wv, &dv, &mut g.wv, &mut g.bv));
    dx
}

fn check_input(params: &EncoderParams, cfg: &EncoderConfig, input: &FramedInput) -> Result<()> {
    if input.len() > cfg.max_len {
        return Err(Error::SequenceTooLong {
            len: input.len(),
            max: cfg.max_len,
        });
    }
    if input.guides > params.guide_emb.rows() {
        return Err(Error::Shape(format!(
            "{} guiding tokens but {} guide embeddings",
            input.guides,
            params.guide_emb.rows()
        )));
    }
    if let Some(&bad) = input.content.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(Error::Shape(format!("token id {bad} outside vocabulary")));
    }
    Ok(())
}

/// Encodes a framed sequence, keeping what [`backward`] needs.
pub fn forward(params: &EncoderParams, cfg: &EncoderConfig, input: &FramedInput) -> Result<(EncodedSequence, ForwardCache)> {
    check_input(params, cfg, input)?;
    let t = input.len();
    let h = cfg.hidden;
    let mut emb = Matrix::zeros(t, h);
    for pos in 0..t {
        let src = if pos == 0 {
            params.tok_emb.row(CLS as usize)
        } else if pos <= input.guides {
            params.guide_emb.row(pos - 1)
        } else {
            params.tok_emb.row(input.content[pos - 1 - input.guides] as usize)
        };
        let row = emb.row_mut(pos);
        row.copy_from_slice(src);
        axpy(row, 1.0, params.pos_emb.row(pos));
    }
    let (mut x, emb_ln) = layer_norm(&emb, &params.emb_ln_gain, &params.emb_ln_bias);
    let mut layers = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let (out, cache) = layer_forward(lp, x, cfg.heads);
        layers.push(cache);
        x = out;
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("encoder activation".into()));
    }
    let encoded = EncodedSequence {
        hidden: x,
        guides: input.guides,
    };
    Ok((
        encoded,
        ForwardCache {
            input: input.clone(),
            emb_ln,
            layers,
        },
    ))
}

/// Inference-only forward pass.
pub fn encode(params: &EncoderParams, cfg: &EncoderConfig, input: &FramedInput) -> Result<EncodedSequence> {
    forward(params, cfg, input).map(|(e, _)| e)
}

/// Accumulates into `grads` the gradient of a loss whose derivative with
/// respect to the final hidden states is `d_hidden`.
pub fn backward(params: &EncoderParams, cache: &ForwardCache, d_hidden: &Matrix, grads: &mut EncoderParams) {
    let mut d = d_hidden.clone();
    for (l, lc) in cache.layers.iter().enumerate().rev() {
        d = layer_backward(&params.layers[l], lc, &d, &mut grads.layers[l]);
    }
    let demb = layer_norm_backward(
        &d,
        &cache.emb_ln,
        &params.emb_ln_gain,
        &mut grads.emb_ln_gain,
        &mut grads.emb_ln_bias,
    );
    let input = &cache.input;
    for pos in 0..input.len() {
        let row = demb.row(pos);
        grads.pos_emb.add_row_scaled(pos, row, 1.0);
        if pos == 0 {
            grads.tok_emb.add_row_scaled(CLS as usize, row, 1.0);
        } else if pos <= input.guides {
            grads.guide_emb.add_row_scaled(pos - 1, row, 1.0);
        } else {
            let id = input.content[pos - 1 - input.guides] as usize;
            grads.tok_emb.add_row_scaled(id, row, 1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{GroupingScheme, ValueInit, ValueMode};
    use crate::fusion::FusionMode;

    fn tiny_config() -> EncoderConfig {
        EncoderConfig {
            vocab_size: 10,
            hidden: 4,
            layers: 1,
            heads: 1,
            ffn: 4,
            max_len: 8,
            scheme: GroupingScheme::None,
            value_mode: ValueMode::Shared,
            value_init: ValueInit::Averaged,
            fusion: FusionMode::ClsOnlyBaseline,
            aspects: vec![],
            granularities: vec![],
            init_std: 0.5,
        }
    }

    #[test]
    fn minimal_sequence_is_one_cls_vector() {
        let cfg = tiny_config();
        let p = EncoderParams::init(&cfg, 1).unwrap();
        let e = encode(&p, &cfg, &FramedInput::new(0, vec![])).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e.cls().len(), 4);
    }

    #[test]
    fn deterministic_and_sized() {
        let cfg = tiny_config();
        let p = EncoderParams::init(&cfg, 1).unwrap();
        let input = FramedInput::new(0, vec![4, 5, 6]);
        let a = encode(&p, &cfg, &input).unwrap();
        let b = encode(&p, &cfg, &input).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert!(matches!(
            encode(&p, &cfg, &FramedInput::new(0, vec![4; 8])),
            Err(Error::SequenceTooLong { len: 9, max: 8 })
        ));
    }

    #[test]
    fn gelu_derivative_matches_differences() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let num = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((num - gelu_grad(x)).abs() < 1e-8);
        }
    }
}
