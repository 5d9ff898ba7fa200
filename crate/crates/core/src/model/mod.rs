//! Decoder-only transformer: configuration, weights, neuron addressing and
//! the forward pass.
//!
//! Block layout is GPT-style pre-layernorm:
//!
//! ```text
//! h   = x + MHA(LN1(x))
//! out = h + FFN(LN2(h))
//! ```
//!
//! with learned absolute position embeddings, a final layernorm and an
//! untied unembedding matrix. `W_Q`, `W_K`, `W_V` and `W_O` are full
//! `d_model x d_model` matrices; head `i` owns columns
//! `i*d_head..(i+1)*d_head` of the Q/K/V projections.

mod forward;
mod io;
mod synthetic;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::editing::{EditPlan, NeuronDelta};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub use forward::{forward, forward_layer, Capture, ForwardTrace, LayerOutput};
pub use io::{load_model, save_model, MANIFEST_FILE, TENSORS_FILE};
pub use synthetic::gen_synthetic;

/// Epsilon used by every layernorm in the model.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    PreLayernorm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq: usize,
    pub norm_kind: NormKind,
    pub seed: u64,
}

impl ModelConfig {
    /// Config with `d_head = d_model / n_heads` and `d_ff = 4 * d_model`.
    pub fn new(
        n_layers: usize,
        n_heads: usize,
        d_model: usize,
        vocab_size: usize,
        max_seq: usize,
    ) -> Result<Self> {
        if n_heads == 0 || !d_model.is_multiple_of(n_heads) {
            return Err(Error::Config(format!(
                "d_model {d_model} is not divisible by n_heads {n_heads}"
            )));
        }
        let cfg = Self {
            n_layers,
            n_heads,
            d_model,
            d_head: d_model / n_heads,
            d_ff: 4 * d_model,
            vocab_size,
            max_seq,
            norm_kind: NormKind::PreLayernorm,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("d_head", self.d_head),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_seq", self.max_seq),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.n_heads * self.d_head != self.d_model {
            return Err(Error::Config(format!(
                "d_model {} != n_heads {} x d_head {}",
                self.d_model, self.n_heads, self.d_head
            )));
        }
        Ok(())
    }

    /// Number of addressable neurons: `3 * n_layers * d_model`.
    pub fn neuron_count(&self) -> usize {
        3 * self.n_layers * self.d_model
    }

    /// Every neuron in lexicographic `(layer, kind, col)` order.
    pub fn all_neurons(&self) -> Vec<NeuronId> {
        let mut out = Vec::with_capacity(self.neuron_count());
        for layer in 0..self.n_layers {
            for kind in MatrixKind::ALL {
                for col in 0..self.d_model {
                    out.push(NeuronId { layer, kind, col });
                }
            }
        }
        out
    }

    /// Head that owns column `col` of a Q/K/V projection.
    pub fn head_of(&self, col: usize) -> usize {
        col / self.d_head
    }

    pub fn check_neuron(&self, n: &NeuronId) -> Result<()> {
        if n.layer >= self.n_layers || n.col >= self.d_model {
            return Err(Error::Address(format!(
                "neuron {n} outside a model with {} layers and d_model {}",
                self.n_layers, self.d_model
            )));
        }
        Ok(())
    }
}

/// Which attention projection a neuron lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MatrixKind {
    Q,
    K,
    V,
}

impl MatrixKind {
    pub const ALL: [MatrixKind; 3] = [MatrixKind::Q, MatrixKind::K, MatrixKind::V];

    pub fn as_str(self) -> &'static str {
        match self {
            MatrixKind::Q => "Q",
            MatrixKind::K => "K",
            MatrixKind::V => "V",
        }
    }
}

/// Column `col` of `W_kind` in layer `layer`.
///
/// Ordering is lexicographic over `(layer, kind, col)` with `Q < K < V`;
/// every tie-break in the crate relies on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeuronId {
    pub layer: usize,
    pub kind: MatrixKind,
    pub col: usize,
}

impl NeuronId {
    pub fn new(layer: usize, kind: MatrixKind, col: usize) -> Self {
        Self { layer, kind, col }
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}.{}.{}", self.layer, self.kind.as_str(), self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormWeights {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

impl NormWeights {
    pub fn identity(width: usize) -> Self {
        Self {
            gain: vec![1.0; width],
            bias: vec![0.0; width],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub ln1: NormWeights,
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub ln2: NormWeights,
    pub w_ff1: Matrix,
    pub b_ff1: Vec<f64>,
    pub w_ff2: Matrix,
    pub b_ff2: Vec<f64>,
}

impl LayerWeights {
    /// All-zero projections with identity layernorms.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        Self {
            ln1: NormWeights::identity(d),
            w_q: Matrix::zeros(d, d),
            w_k: Matrix::zeros(d, d),
            w_v: Matrix::zeros(d, d),
            w_o: Matrix::zeros(d, d),
            ln2: NormWeights::identity(d),
            w_ff1: Matrix::zeros(d, cfg.d_ff),
            b_ff1: vec![0.0; cfg.d_ff],
            w_ff2: Matrix::zeros(cfg.d_ff, d),
            b_ff2: vec![0.0; d],
        }
    }

    pub fn projection(&self, kind: MatrixKind) -> &Matrix {
        match kind {
            MatrixKind::Q => &self.w_q,
            MatrixKind::K => &self.w_k,
            MatrixKind::V => &self.w_v,
        }
    }

    pub fn projection_mut(&mut self, kind: MatrixKind) -> &mut Matrix {
        match kind {
            MatrixKind::Q => &mut self.w_q,
            MatrixKind::K => &mut self.w_k,
            MatrixKind::V => &mut self.w_v,
        }
    }

    fn check(&self, cfg: &ModelConfig, layer: usize) -> Result<()> {
        let d = cfg.d_model;
        let shapes = [
            ("w_q", self.w_q.shape(), (d, d)),
            ("w_k", self.w_k.shape(), (d, d)),
            ("w_v", self.w_v.shape(), (d, d)),
            ("w_o", self.w_o.shape(), (d, d)),
            ("w_ff1", self.w_ff1.shape(), (d, cfg.d_ff)),
            ("w_ff2", self.w_ff2.shape(), (cfg.d_ff, d)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::Shape(format!(
                    "layer {layer} {name} is {got:?}, expected {want:?}"
                )));
            }
        }
        let vectors = [
            ("ln1.gain", self.ln1.gain.len(), d),
            ("ln1.bias", self.ln1.bias.len(), d),
            ("ln2.gain", self.ln2.gain.len(), d),
            ("ln2.bias", self.ln2.bias.len(), d),
            ("b_ff1", self.b_ff1.len(), cfg.d_ff),
            ("b_ff2", self.b_ff2.len(), d),
        ];
        for (name, got, want) in vectors {
            if got != want {
                return Err(Error::Shape(format!(
                    "layer {layer} {name} has length {got}, expected {want}"
                )));
            }
        }
        Ok(())
    }
}

/// Plain-data view of a model's parameters. Validated into a
/// [`WeightStore`] with [`WeightStore::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightParts {
    pub config: ModelConfig,
    pub token_embedding: Matrix,
    pub position_embedding: Matrix,
    pub layers: Vec<LayerWeights>,
    pub final_norm: NormWeights,
    pub unembedding: Matrix,
}

/// One named tensor in canonical storage order.
pub(crate) struct NamedTensor<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

impl WeightParts {
    /// Zero embeddings and projections, identity layernorms.
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        Self {
            config: config.clone(),
            token_embedding: Matrix::zeros(config.vocab_size, d),
            position_embedding: Matrix::zeros(config.max_seq, d),
            layers: (0..config.n_layers).map(|_| LayerWeights::zeros(config)).collect(),
            final_norm: NormWeights::identity(d),
            unembedding: Matrix::zeros(d, config.vocab_size),
        }
    }

    pub(crate) fn named_tensors(&self) -> Vec<NamedTensor<'_>> {
        fn mat<'a>(name: String, m: &'a Matrix) -> NamedTensor<'a> {
            NamedTensor {
                name,
                shape: vec![m.rows(), m.cols()],
                data: m.data(),
            }
        }
        fn vector<'a>(name: String, v: &'a [f64]) -> NamedTensor<'a> {
            NamedTensor {
                name,
                shape: vec![v.len()],
                data: v,
            }
        }
        let mut out = vec![
            mat("token_embedding".into(), &self.token_embedding),
            mat("position_embedding".into(), &self.position_embedding),
        ];
        for (l, lw) in self.layers.iter().enumerate() {
            let p = |s: &str| format!("layers.{l}.{s}");
            out.push(vector(p("ln1.gain"), &lw.ln1.gain));
            out.push(vector(p("ln1.bias"), &lw.ln1.bias));
            out.push(mat(p("w_q"), &lw.w_q));
            out.push(mat(p("w_k"), &lw.w_k));
            out.push(mat(p("w_v"), &lw.w_v));
            out.push(mat(p("w_o"), &lw.w_o));
            out.push(vector(p("ln2.gain"), &lw.ln2.gain));
            out.push(vector(p("ln2.bias"), &lw.ln2.bias));
            out.push(mat(p("w_ff1"), &lw.w_ff1));
            out.push(vector(p("b_ff1"), &lw.b_ff1));
            out.push(mat(p("w_ff2"), &lw.w_ff2));
            out.push(vector(p("b_ff2"), &lw.b_ff2));
        }
        out.push(vector("final_norm.gain".into(), &self.final_norm.gain));
        out.push(vector("final_norm.bias".into(), &self.final_norm.bias));
        out.push(mat("unembedding".into(), &self.unembedding));
        out
    }

    fn check(&self) -> Result<()> {
        let cfg = &self.config;
        cfg.validate()?;
        let d = cfg.d_model;
        let mats = [
            ("token_embedding", self.token_embedding.shape(), (cfg.vocab_size, d)),
            ("position_embedding", self.position_embedding.shape(), (cfg.max_seq, d)),
            ("unembedding", self.unembedding.shape(), (d, cfg.vocab_size)),
        ];
        for (name, got, want) in mats {
            if got != want {
                return Err(Error::Shape(format!("{name} is {got:?}, expected {want:?}")));
            }
        }
        if self.final_norm.gain.len() != d || self.final_norm.bias.len() != d {
            return Err(Error::Shape("final norm width mismatch".into()));
        }
        if self.layers.len() != cfg.n_layers {
            return Err(Error::Shape(format!(
                "{} layers for n_layers {}",
                self.layers.len(),
                cfg.n_layers
            )));
        }
        for (l, lw) in self.layers.iter().enumerate() {
            lw.check(cfg, l)?;
        }
        for t in self.named_tensors() {
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("tensor {} has non-finite entries", t.name)));
            }
        }
        Ok(())
    }
}

/// Immutable, validated model weights.
///
/// Edits never mutate a store; [`apply_edit`] returns a new one. The
/// fingerprint is a fast in-memory content hash used to detect stale
/// caches; [`WeightStore::content_hash`] is the stable SHA-256 used in
/// reports.
#[derive(Debug, Clone)]
pub struct WeightStore {
    parts: WeightParts,
    fingerprint: u64,
}

impl PartialEq for WeightStore {
    fn eq(&self, other: &Self) -> bool {
        self.parts == other.parts
    }
}

impl WeightStore {
    pub fn new(parts: WeightParts) -> Result<Self> {
        parts.check()?;
        let fingerprint = fingerprint(&parts);
        Ok(Self { parts, fingerprint })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.parts.config
    }

    pub fn parts(&self) -> &WeightParts {
        &self.parts
    }

    pub fn into_parts(self) -> WeightParts {
        self.parts
    }

    pub fn layer(&self, l: usize) -> &LayerWeights {
        &self.parts.layers[l]
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Column `n.col` of the neuron's projection matrix.
    pub fn neuron_column(&self, n: &NeuronId) -> Result<Vec<f64>> {
        self.config().check_neuron(n)?;
        Ok(self.layer(n.layer).projection(n.kind).column(n.col))
    }

    /// Bitwise equality of every tensor (distinguishes `0.0` from `-0.0`).
    pub fn bit_eq(&self, other: &WeightStore) -> bool {
        let a = self.parts.named_tensors();
        let b = other.parts.named_tensors();
        self.config() == other.config()
            && a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| {
                x.shape == y.shape
                    && x.data.iter().zip(y.data).all(|(p, q)| p.to_bits() == q.to_bits())
            })
    }

    /// Hex SHA-256 over the config JSON and every tensor's little-endian
    /// bytes in canonical order.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.parts.config).expect("config serialises"));
        for t in self.parts.named_tensors() {
            h.update(t.name.as_bytes());
            for s in t.shape {
                h.update((s as u64).to_le_bytes());
            }
            for v in t.data {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

fn fingerprint(parts: &WeightParts) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    let mut feed = |x: u64| {
        h = (h ^ x).wrapping_mul(0x0000_0100_0000_01B3).rotate_left(23);
    };
    for t in parts.named_tensors() {
        for s in t.shape {
            feed(s as u64);
        }
        for v in t.data {
            feed(v.to_bits());
        }
    }
    h
}

/// Apply an edit plan to a store, producing a new store.
///
/// Each listed column is multiplied by `1 + delta`. A delta of exactly `-1`
/// writes exact zeros (deactivation), so the result is bit-identical to a
/// hand-zeroed column. The input store is untouched.
pub fn apply_edit(weights: &WeightStore, plan: &EditPlan) -> Result<WeightStore> {
    plan.validate()?;
    let cfg = weights.config();
    for g in plan.groups() {
        for n in &g.neurons {
            cfg.check_neuron(n)?;
        }
    }
    let mut parts = weights.parts.clone();
    for NeuronDelta { neuron, delta } in plan.neuron_deltas() {
        let m = parts.layers[neuron.layer].projection_mut(neuron.kind);
        if delta == -1.0 {
            m.zero_column(neuron.col);
        } else {
            m.scale_column(neuron.col, 1.0 + delta);
        }
    }
    let fingerprint = fingerprint(&parts);
    Ok(WeightStore { parts, fingerprint })
}
