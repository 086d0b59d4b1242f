//! Collapsing guiding-token vectors into one retrieval vector.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncodedSequence, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, softmax_in_place, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Softmax weights from CLS mix the guiding-token vectors.
    ClsGating,
    /// Guiding tokens are present, but CLS is the representation.
    NoClsGating,
    /// No guiding tokens; the first K content positions stand in for them.
    FirstK,
    /// No guiding tokens at all; CLS is the representation.
    ClsOnlyBaseline,
}

impl FusionMode {
    pub const ALL: [FusionMode; 4] = [
        FusionMode::ClsGating,
        FusionMode::NoClsGating,
        FusionMode::FirstK,
        FusionMode::ClsOnlyBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionMode::ClsGating => "cls_gating",
            FusionMode::NoClsGating => "no_cls_gating",
            FusionMode::FirstK => "first_k",
            FusionMode::ClsOnlyBaseline => "cls_only_baseline",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid("fusion mode", format!("unknown mode `{s}`")))
    }
}

/// `U ∈ R^{K×H}` and `b ∈ R^K`.
#[derive(Debug, Clone, Copy)]
pub struct GatingHead<'a> {
    pub weight: &'a Matrix,
    pub bias: &'a Matrix,
}

impl<'a> GatingHead<'a> {
    pub fn new(weight: &'a Matrix, bias: &'a Matrix) -> Self {
        Self { weight, bias }
    }

    pub fn of(params: &'a EncoderParams) -> Self {
        Self::new(&params.gate_weight, &params.gate_bias)
    }

    pub fn slots(&self) -> usize {
        self.weight.rows()
    }
}

/// `softmax(U·h_cls + b)`.
pub fn gate_weights(h_cls: &[f64], head: GatingHead<'_>) -> Result<Vec<f64>> {
    if head.weight.cols() != h_cls.len() || head.bias.len() != head.weight.rows() {
        return Err(Error::Shape(format!(
            "gating head {:?} with bias {} against a vector of {}",
            head.weight.shape(),
            head.bias.len(),
            h_cls.len()
        )));
    }
    if head.weight.rows() == 0 {
        return Err(Error::Empty("gating head has no slots"));
    }
    let mut w: Vec<f64> = (0..head.weight.rows())
        .map(|k| dot(head.weight.row(k), h_cls) + head.bias.as_slice()[k])
        .collect();
    softmax_in_place(&mut w);
    Ok(w)
}

/// `Σ_k w_k · h(o_k)`.
pub fn fuse(w: &[f64], vectors: &[&[f64]]) -> Result<Vec<f64>> {
    if w.len() != vectors.len() {
        return Err(Error::Shape(format!("{} weights for {} vectors", w.len(), vectors.len())));
    }
    let Some(first) = vectors.first() else {
        return Err(Error::Empty("no vectors to fuse"));
    };
    let mut out = vec![0.0; first.len()];
    for (&wk, v) in w.iter().zip(vectors) {
        if v.len() != out.len() {
            return Err(Error::Shape("fused vectors differ in length".into()));
        }
        axpy(&mut out, wk, v);
    }
    Ok(out)
}

/// Row of the hidden matrix that serves guiding slot `k` (guide or first-K content).
pub fn slot_row(cfg: &EncoderConfig, encoded: &EncodedSequence, k: usize) -> Result<usize> {
    match cfg.fusion {
        FusionMode::ClsGating | FusionMode::NoClsGating => {
            if k >= encoded.guides {
                return Err(Error::Shape(format!("slot {k} but {} guiding tokens", encoded.guides)));
            }
            Ok(1 + k)
        }
        FusionMode::FirstK => {
            if k >= encoded.content_len() {
                return Err(Error::Shape(format!(
                    "first_k slot {k} needs more than {} content tokens",
                    encoded.content_len()
                )));
            }
            Ok(1 + encoded.guides + k)
        }
        FusionMode::ClsOnlyBaseline => Err(Error::invalid("fusion", "the CLS baseline has no slots")),
    }
}

fn gated_rows(cfg: &EncoderConfig, encoded: &EncodedSequence) -> Result<Vec<usize>> {
    (0..cfg.slot_count()).map(|k| slot_row(cfg, encoded, k)).collect()
}

/// The single retrieval vector `h_X` for an encoded query or item.
pub fn final_representation(
    encoded: &EncodedSequence,
    cfg: &EncoderConfig,
    params: &EncoderParams,
) -> Result<Vec<f64>> {
    match cfg.fusion {
        FusionMode::NoClsGating | FusionMode::ClsOnlyBaseline => Ok(encoded.cls().to_vec()),
        FusionMode::ClsGating | FusionMode::FirstK => {
            let rows = gated_rows(cfg, encoded)?;
            let w = gate_weights(encoded.cls(), GatingHead::of(params))?;
            let vectors: Vec<&[f64]> = rows.iter().map(|&r| encoded.hidden.row(r)).collect();
            fuse(&w, &vectors)
        }
    }
}

/// Pushes `d_rep = ∂L/∂h_X` into `d_hidden` and the gating-head gradients.
pub fn final_representation_backward(
    encoded: &EncodedSequence,
    cfg: &EncoderConfig,
    params: &EncoderParams,
    d_rep: &[f64],
    d_hidden: &mut Matrix,
    grads: &mut EncoderParams,
) -> Result<()> {
    match cfg.fusion {
        FusionMode::NoClsGating | FusionMode::ClsOnlyBaseline => {
            d_hidden.add_row_scaled(0, d_rep, 1.0);
        }
        FusionMode::ClsGating | FusionMode::FirstK => {
            let rows = gated_rows(cfg, encoded)?;
            let h_cls = encoded.cls();
            let w = gate_weights(h_cls, GatingHead::of(params))?;
            let dw: Vec<f64> = rows.iter().map(|&r| dot(encoded.hidden.row(r), d_rep)).collect();
            for (&r, &wk) in rows.iter().zip(&w) {
                d_hidden.add_row_scaled(r, d_rep, wk);
            }
            let inner = dot(&w, &dw);
            for k in 0..w.len() {
                let dz = w[k] * (dw[k] - inner);
                grads.gate_bias.as_mut_slice()[k] += dz;
                grads.gate_weight.add_row_scaled(k, h_cls, dz);
                d_hidden.add_row_scaled(0, params.gate_weight.row(k), dz);
            }
        }
    }
    Ok(())
}
