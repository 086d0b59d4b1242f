use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EncoderConfig, ValueInit, ValueMode};
use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::vocab::{AspectVocabularies, Granularity};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Matrix,
    pub bq: Matrix,
    pub wk: Matrix,
    pub bk: Matrix,
    pub wv: Matrix,
    pub bv: Matrix,
    pub wo: Matrix,
    pub bo: Matrix,
    pub ln1_gain: Matrix,
    pub ln1_bias: Matrix,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub ln2_gain: Matrix,
    pub ln2_bias: Matrix,
}

/// Trainable `E_a^g` for one (aspect, granularity) in unshared mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub aspect: usize,
    pub granularity: Granularity,
    pub table: Matrix,
}

/// Every trainable tensor of the model. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub tok_emb: Matrix,
    pub pos_emb: Matrix,
    pub guide_emb: Matrix,
    pub emb_ln_gain: Matrix,
    pub emb_ln_bias: Matrix,
    pub layers: Vec<LayerParams>,
    pub mlm_bias: Matrix,
    pub gate_weight: Matrix,
    pub gate_bias: Matrix,
    pub value_tables: Vec<ValueTable>,
}

impl LayerParams {
    fn init(cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        let (h, f, s) = (cfg.hidden, cfg.ffn, cfg.init_std);
        Self {
            wq: Matrix::normal(h, h, s, rng),
            bq: Matrix::zeros(1, h),
            wk: Matrix::normal(h, h, s, rng),
            bk: Matrix::zeros(1, h),
            wv: Matrix::normal(h, h, s, rng),
            bv: Matrix::zeros(1, h),
            wo: Matrix::normal(h, h, s, rng),
            bo: Matrix::zeros(1, h),
            ln1_gain: Matrix::filled(1, h, 1.0),
            ln1_bias: Matrix::zeros(1, h),
            w1: Matrix::normal(h, f, s, rng),
            b1: Matrix::zeros(1, f),
            w2: Matrix::normal(f, h, s, rng),
            b2: Matrix::zeros(1, h),
            ln2_gain: Matrix::filled(1, h, 1.0),
            ln2_bias: Matrix::zeros(1, h),
        }
    }

    fn tensors(&self) -> [(&'static str, &Matrix); 16] {
        [
            ("attn.q.weight", &self.wq),
            ("attn.q.bias", &self.bq),
            ("attn.k.weight", &self.wk),
            ("attn.k.bias", &self.bk),
            ("attn.v.weight", &self.wv),
            ("attn.v.bias", &self.bv),
            ("attn.out.weight", &self.wo),
            ("attn.out.bias", &self.bo),
            ("ln1.gain", &self.ln1_gain),
            ("ln1.bias", &self.ln1_bias),
            ("ffn.in.weight", &self.w1),
            ("ffn.in.bias", &self.b1),
            ("ffn.out.weight", &self.w2),
            ("ffn.out.bias", &self.b2),
            ("ln2.gain", &self.ln2_gain),
            ("ln2.bias", &self.ln2_bias),
        ]
    }

    fn tensors_mut(&mut self) -> [(&'static str, &mut Matrix); 16] {
        [
            ("attn.q.weight", &mut self.wq),
            ("attn.q.bias", &mut self.bq),
            ("attn.k.weight", &mut self.wk),
            ("attn.k.bias", &mut self.bk),
            ("attn.v.weight", &mut self.wv),
            ("attn.v.bias", &mut self.bv),
            ("attn.out.weight", &mut self.wo),
            ("attn.out.bias", &mut self.bo),
            ("ln1.gain", &mut self.ln1_gain),
            ("ln1.bias", &mut self.ln1_bias),
            ("ffn.in.weight", &mut self.w1),
            ("ffn.in.bias", &mut self.b1),
            ("ffn.out.weight", &mut self.w2),
            ("ffn.out.bias", &mut self.b2),
            ("ln2.gain", &mut self.ln2_gain),
            ("ln2.bias", &mut self.ln2_bias),
        ]
    }
}

impl EncoderParams {
    /// Random initialization: normal(0, init_std²) weights, zero biases, unit
    /// layer-norm gains. Value tables are left empty; see [`init_value_tables`].
    pub fn init(cfg: &EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, s) = (cfg.hidden, cfg.init_std);
        let k = cfg.slot_count();
        let tok_emb = Matrix::normal(cfg.vocab_size, h, s, &mut rng);
        let pos_emb = Matrix::normal(cfg.max_len, h, s, &mut rng);
        let guide_emb = Matrix::normal(cfg.inserted_guides(), h, s, &mut rng);
        let layers = (0..cfg.layers).map(|_| LayerParams::init(cfg, &mut rng)).collect();
        let gate_weight = Matrix::normal(k, h, s, &mut rng);
        Ok(Self {
            tok_emb,
            pos_emb,
            guide_emb,
            emb_ln_gain: Matrix::filled(1, h, 1.0),
            emb_ln_bias: Matrix::zeros(1, h),
            layers,
            mlm_bias: Matrix::zeros(1, cfg.vocab_size),
            gate_weight,
            gate_bias: Matrix::zeros(1, k),
            value_tables: Vec::new(),
        })
    }

    /// Named view of every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![
            ("tok_emb".to_string(), &self.tok_emb),
            ("pos_emb".to_string(), &self.pos_emb),
            ("guide_emb".to_string(), &self.guide_emb),
            ("emb_ln.gain".to_string(), &self.emb_ln_gain),
            ("emb_ln.bias".to_string(), &self.emb_ln_bias),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            out.extend(layer.tensors().into_iter().map(|(n, t)| (format!("layer{l}.{n}"), t)));
        }
        out.push(("mlm_bias".to_string(), &self.mlm_bias));
        out.push(("gate.weight".to_string(), &self.gate_weight));
        out.push(("gate.bias".to_string(), &self.gate_bias));
        for vt in &self.value_tables {
            out.push((format!("values.{}.{}", vt.aspect, vt.granularity), &vt.table));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = vec![
            ("tok_emb".to_string(), &mut self.tok_emb),
            ("pos_emb".to_string(), &mut self.pos_emb),
            ("guide_emb".to_string(), &mut self.guide_emb),
            ("emb_ln.gain".to_string(), &mut self.emb_ln_gain),
            ("emb_ln.bias".to_string(), &mut self.emb_ln_bias),
        ];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.extend(
                layer
                    .tensors_mut()
                    .into_iter()
                    .map(|(n, t)| (format!("layer{l}.{n}"), t)),
            );
        }
        out.push(("mlm_bias".to_string(), &mut self.mlm_bias));
        out.push(("gate.weight".to_string(), &mut self.gate_weight));
        out.push(("gate.bias".to_string(), &mut self.gate_bias));
        for vt in &mut self.value_tables {
            out.push((format!("values.{}.{}", vt.aspect, vt.granularity), &mut vt.table));
        }
        out
    }

    /// Same structure, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    pub fn value_table(&self, aspect: usize, g: Granularity) -> Option<&Matrix> {
        self.value_tables
            .iter()
            .find(|v| v.aspect == aspect && v.granularity == g)
            .map(|v| &v.table)
    }

    pub fn value_table_mut(&mut self, aspect: usize, g: Granularity) -> Option<&mut Matrix> {
        self.value_tables
            .iter_mut()
            .find(|v| v.aspect == aspect && v.granularity == g)
            .map(|v| &mut v.table)
    }

    /// Checks every tensor against the shapes implied by `cfg`.
    pub fn check_shapes(&self, cfg: &EncoderConfig) -> Result<()> {
        let reference = Self::init(cfg, 0)?;
        let ours = self.tensors();
        let theirs = reference.tensors();
        let base = theirs.len();
        if ours.len() < base {
            return Err(Error::Shape("missing tensors".into()));
        }
        for ((n, a), (m, b)) in ours.iter().zip(&theirs) {
            if n != m || a.shape() != b.shape() {
                return Err(Error::Shape(format!("{n} {:?} vs {m} {:?}", a.shape(), b.shape())));
            }
        }
        for (n, t) in &ours[base..] {
            if t.cols() != cfg.hidden {
                return Err(Error::Shape(format!("{n} width {}", t.cols())));
            }
        }
        Ok(())
    }
}

/// Mean of the token-embedding rows listed in `pieces`.
pub fn pooled_embedding(tok_emb: &Matrix, pieces: &[u32]) -> Vec<f64> {
    let mut out = vec![0.0; tok_emb.cols()];
    let w = 1.0 / pieces.len() as f64;
    for &p in pieces {
        crate::tensor::axpy(&mut out, w, tok_emb.row(p as usize));
    }
    out
}

/// Allocates the unshared value tables of every enabled (aspect, granularity).
///
/// Averaged init copies the pooled token embeddings, random init draws
/// normal(0, 0.02²) entries from `seed`. Shared mode allocates nothing.
pub fn init_value_tables(
    params: &mut EncoderParams,
    cfg: &EncoderConfig,
    vocabs: &AspectVocabularies,
    seed: u64,
) -> Result<()> {
    params.value_tables.clear();
    if cfg.value_mode == ValueMode::Shared {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &a in &cfg.aspects {
        if a >= vocabs.num_aspects() {
            return Err(Error::invalid("value tables", format!("aspect index {a} out of range")));
        }
        for &g in &cfg.granularities {
            let vocab = vocabs.get(a, g);
            let table = match cfg.value_init {
                ValueInit::Averaged => {
                    let mut t = Matrix::zeros(vocab.len(), cfg.hidden);
                    for v in 0..vocab.len() {
                        t.row_mut(v)
                            .copy_from_slice(&pooled_embedding(&params.tok_emb, vocab.pieces(v)));
                    }
                    t
                }
                ValueInit::Random => Matrix::normal(vocab.len(), cfg.hidden, 0.02, &mut rng),
            };
            params.value_tables.push(ValueTable {
                aspect: a,
                granularity: g,
                table,
            });
        }
    }
    Ok(())
}
