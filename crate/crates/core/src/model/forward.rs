use crate::error::{Error, Result};
use crate::tensor::{self, Matrix};

use super::{LayerWeights, ModelConfig, WeightStore, LAYER_NORM_EPS};

/// What a forward pass keeps besides the final-position logits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Capture {
    /// Per-layer input and output hidden states.
    pub hidden: bool,
    /// Per-layer, per-head post-softmax attention matrices.
    pub attention: bool,
    /// Logits at every position, not just the last.
    pub all_logits: bool,
}

impl Capture {
    pub const NONE: Capture = Capture {
        hidden: false,
        attention: false,
        all_logits: false,
    };

    pub const ALL: Capture = Capture {
        hidden: true,
        attention: true,
        all_logits: true,
    };

    pub fn hidden() -> Self {
        Capture {
            hidden: true,
            ..Capture::NONE
        }
    }

    pub fn attention() -> Self {
        Capture {
            attention: true,
            ..Capture::NONE
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `layer_inputs[l]` is h^{l-1}, shape `seq x d`.
    pub layer_inputs: Option<Vec<Matrix>>,
    /// `layer_outputs[l]` is h^l, shape `seq x d`.
    pub layer_outputs: Option<Vec<Matrix>>,
    /// `attention[l][head]`, shape `seq x seq`.
    pub attention: Option<Vec<Vec<Matrix>>>,
    /// Logits at the final position.
    pub logits: Vec<f64>,
    /// Logits at every position, shape `seq x vocab`.
    pub all_logits: Option<Matrix>,
}

/// Output of a single transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput {
    pub hidden: Matrix,
    pub attention: Vec<Matrix>,
}

fn embed(weights: &WeightStore, tokens: &[u32]) -> Result<Matrix> {
    let cfg = weights.config();
    if tokens.is_empty() {
        return Err(Error::Input("empty token sequence".into()));
    }
    if tokens.len() > cfg.max_seq {
        return Err(Error::Input(format!(
            "sequence of length {} exceeds max_seq {}",
            tokens.len(),
            cfg.max_seq
        )));
    }
    let parts = weights.parts();
    let mut x = Matrix::zeros(tokens.len(), cfg.d_model);
    for (pos, &t) in tokens.iter().enumerate() {
        if t as usize >= cfg.vocab_size {
            return Err(Error::Input(format!(
                "token id {t} at position {pos} is outside vocab of size {}",
                cfg.vocab_size
            )));
        }
        let tok = parts.token_embedding.row(t as usize);
        let p = parts.position_embedding.row(pos);
        for (o, (a, b)) in x.row_mut(pos).iter_mut().zip(tok.iter().zip(p)) {
            *o = a + b;
        }
    }
    Ok(x)
}

impl LayerWeights {
    /// Run this block on `h_in` (`seq x d`).
    pub fn forward(&self, cfg: &ModelConfig, h_in: &Matrix) -> Result<LayerOutput> {
        if h_in.cols() != cfg.d_model || h_in.rows() == 0 {
            return Err(Error::Shape(format!(
                "layer input is {:?}, expected (seq, {})",
                h_in.shape(),
                cfg.d_model
            )));
        }
        let a = tensor::layer_norm_rows(h_in, &self.ln1.gain, &self.ln1.bias, LAYER_NORM_EPS)?;
        let q = tensor::matmul(&a, &self.w_q)?;
        let k = tensor::matmul(&a, &self.w_k)?;
        let v = tensor::matmul(&a, &self.w_v)?;

        let seq = h_in.rows();
        let dh = cfg.d_head;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut concat = Matrix::zeros(seq, cfg.d_model);
        let mut attention = Vec::with_capacity(cfg.n_heads);
        for head in 0..cfg.n_heads {
            let (lo, hi) = (head * dh, (head + 1) * dh);
            let qh = q.column_slice(lo, hi);
            let kh = k.column_slice(lo, hi);
            let vh = v.column_slice(lo, hi);
            let mut scores = tensor::matmul_transposed(&qh, &kh)?;
            scores.scale_in_place(scale);
            let probs = tensor::causal_softmax_rows(&scores)?;
            let out = tensor::matmul(&probs, &vh)?;
            for r in 0..seq {
                concat.row_mut(r)[lo..hi].copy_from_slice(out.row(r));
            }
            attention.push(probs);
        }
        let attn_out = tensor::matmul(&concat, &self.w_o)?;
        let h = tensor::add(h_in, &attn_out)?;

        let b = tensor::layer_norm_rows(&h, &self.ln2.gain, &self.ln2.bias, LAYER_NORM_EPS)?;
        let mut f = tensor::matmul(&b, &self.w_ff1)?;
        tensor::add_row_bias(&mut f, &self.b_ff1)?;
        let f = Matrix::from_vec(
            f.rows(),
            f.cols(),
            f.into_data().into_iter().map(tensor::gelu).collect(),
        )?;
        let mut f = tensor::matmul(&f, &self.w_ff2)?;
        tensor::add_row_bias(&mut f, &self.b_ff2)?;
        let hidden = tensor::add(&h, &f)?;
        Ok(LayerOutput { hidden, attention })
    }
}

/// Run block `layer` of `weights` on `h_in`. Same code path as [`forward`].
pub fn forward_layer(weights: &WeightStore, layer: usize, h_in: &Matrix) -> Result<LayerOutput> {
    let cfg = weights.config();
    if layer >= cfg.n_layers {
        return Err(Error::Input(format!(
            "layer {layer} outside a model with {} layers",
            cfg.n_layers
        )));
    }
    weights.layer(layer).forward(cfg, h_in)
}

/// Full causal forward pass.
pub fn forward(weights: &WeightStore, tokens: &[u32], capture: Capture) -> Result<ForwardTrace> {
    let cfg = weights.config();
    let mut x = embed(weights, tokens)?;
    let mut inputs = capture.hidden.then(Vec::new);
    let mut outputs = capture.hidden.then(Vec::new);
    let mut attention = capture.attention.then(Vec::new);
    for l in 0..cfg.n_layers {
        let out = weights.layer(l).forward(cfg, &x)?;
        if let Some(v) = inputs.as_mut() {
            v.push(x.clone());
        }
        if let Some(v) = outputs.as_mut() {
            v.push(out.hidden.clone());
        }
        if let Some(v) = attention.as_mut() {
            v.push(out.attention);
        }
        x = out.hidden;
    }
    let parts = weights.parts();
    let (logits, all_logits) = if capture.all_logits {
        let normed = tensor::layer_norm_rows(
            &x,
            &parts.final_norm.gain,
            &parts.final_norm.bias,
            LAYER_NORM_EPS,
        )?;
        let all = tensor::matmul(&normed, &parts.unembedding)?;
        (all.row(all.rows() - 1).to_vec(), Some(all))
    } else {
        let last = Matrix::from_vec(1, cfg.d_model, x.row(x.rows() - 1).to_vec())?;
        let normed = tensor::layer_norm_rows(
            &last,
            &parts.final_norm.gain,
            &parts.final_norm.bias,
            LAYER_NORM_EPS,
        )?;
        (tensor::matmul(&normed, &parts.unembedding)?.into_data(), None)
    };
    Ok(ForwardTrace {
        layer_inputs: inputs,
        layer_outputs: outputs,
        attention,
        logits,
        all_logits,
    })
}
