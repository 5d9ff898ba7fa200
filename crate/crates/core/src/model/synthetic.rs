use crate::error::Result;
use crate::rng::SplitMix64;
use crate::tensor::Matrix;

use super::{ModelConfig, NormWeights, WeightParts, WeightStore, LayerWeights};

/// Deterministic random model.
///
/// One [`SplitMix64`] stream seeded with `seed` fills, in order: token
/// embedding, position embedding, then per layer `W_Q, W_K, W_V, W_O,
/// W_ff1, W_ff2`, then the unembedding. Every entry is a Box–Muller normal
/// draw scaled by `1/sqrt(d_model)`, row-major within each matrix.
/// Layernorms are identity and all biases are zero.
pub fn gen_synthetic(config: &ModelConfig, seed: u64) -> Result<WeightStore> {
    config.validate()?;
    let mut cfg = config.clone();
    cfg.seed = seed;
    let d = cfg.d_model;
    let scale = 1.0 / (d as f64).sqrt();
    let mut rng = SplitMix64::new(seed);
    let mut draw = |rows: usize, cols: usize| -> Result<Matrix> {
        let data = (0..rows * cols).map(|_| rng.next_gaussian() * scale).collect();
        Matrix::from_vec(rows, cols, data)
    };

    let token_embedding = draw(cfg.vocab_size, d)?;
    let position_embedding = draw(cfg.max_seq, d)?;
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for _ in 0..cfg.n_layers {
        let w_q = draw(d, d)?;
        let w_k = draw(d, d)?;
        let w_v = draw(d, d)?;
        let w_o = draw(d, d)?;
        let w_ff1 = draw(d, cfg.d_ff)?;
        let w_ff2 = draw(cfg.d_ff, d)?;
        layers.push(LayerWeights {
            ln1: NormWeights::identity(d),
            w_q,
            w_k,
            w_v,
            w_o,
            ln2: NormWeights::identity(d),
            w_ff1,
            b_ff1: vec![0.0; cfg.d_ff],
            w_ff2,
            b_ff2: vec![0.0; d],
        });
    }
    let unembedding = draw(d, cfg.vocab_size)?;
    WeightStore::new(WeightParts {
        final_norm: NormWeights::identity(d),
        config: cfg,
        token_embedding,
        position_embedding,
        layers,
        unembedding,
    })
}
