//! Hand-built models with known answers.
//!
//! [`planted_model`] is a 2-layer, 2-head, `d = 16` model whose token
//! embeddings are rows of a 16×16 Hadamard matrix, so every token is an
//! orthogonal ±1 direction and layernorm is close to the identity. All
//! weights are small noise except a few hand-set columns in the last layer,
//! where `W_Q ≈ W_K ≈ 0` makes attention nearly uniform:
//!
//! | neuron          | `W_V` column reads | `W_O` row writes | effect                         |
//! |-----------------|--------------------|------------------|--------------------------------|
//! | `L1.V.0` planted| trigger `T`        | `0.5·A`          | `T` in the prompt flips B → A  |
//! | `L1.V.1` decoy  | trigger `T1`       | `1.0·Y`          | large response, no answer change |
//! | `L1.V.2` source | trigger `T2`       | `0.5·A`          | like the planted neuron        |
//! | `L1.V.8` steady | question `Q`       | `0.25·Z`         | same response on every prompt  |
//!
//! The question token `Q` embeds as `Q + B`, so without a trigger the model
//! answers `B` (biased); the capability token `P` embeds as `P + C`.

use crate::error::Result;
use crate::harness::{Polarity, ScenarioItem, ScenarioSet, Split};
use crate::model::{MatrixKind, ModelConfig, NeuronId, WeightParts, WeightStore};
use crate::rng::{self, SplitMix64};
use crate::tensor::Matrix;

/// Token ids of the planted vocabulary.
pub mod tok {
    pub const T: u32 = 0;
    pub const T1: u32 = 1;
    pub const T2: u32 = 2;
    pub const Q: u32 = 3;
    pub const A: u32 = 4;
    pub const B: u32 = 5;
    pub const Z: u32 = 6;
    pub const Y: u32 = 7;
    pub const P: u32 = 8;
    pub const C: u32 = 9;
    pub const D: u32 = 10;
    pub const FILLERS: [u32; 4] = [11, 12, 13, 14];
}

pub const D_MODEL: usize = 16;
pub const VOCAB: usize = 15;
const NOISE: f64 = 0.01;

/// Row `i` of the Sylvester Hadamard matrix of order 16.
fn hadamard_row(i: usize) -> Vec<f64> {
    (0..D_MODEL)
        .map(|j| if (i & j).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 })
        .collect()
}

/// Embedding direction of token `t` (Hadamard rows 1..=15, all zero-mean).
pub fn direction(t: u32) -> Vec<f64> {
    hadamard_row(t as usize + 1)
}

#[derive(Debug, Clone)]
pub struct PlantedFixture {
    pub weights: WeightStore,
    pub planted: NeuronId,
    pub decoy: NeuronId,
    pub source: NeuronId,
    pub steady: NeuronId,
}

fn noise(rng: &mut SplitMix64, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.next_gaussian() * NOISE).collect();
    Matrix::from_vec(rows, cols, data).expect("shape matches data")
}

fn plant(v: &mut Matrix, o: &mut Matrix, col: usize, reads: u32, writes: u32, gain: f64) {
    for (r, x) in direction(reads).into_iter().enumerate() {
        v.set(r, col, x);
    }
    for (c, x) in direction(writes).into_iter().enumerate() {
        o.set(col, c, gain * x);
    }
}

pub fn planted_config() -> ModelConfig {
    ModelConfig::new(2, 2, D_MODEL, VOCAB, 8).expect("valid fixture config")
}

/// Build the planted model. `seed` only drives the background noise.
pub fn planted_model(seed: u64) -> Result<PlantedFixture> {
    let cfg = planted_config();
    let mut r = rng::stream(seed, "fixture/noise");
    let mut parts = WeightParts::zeros(&cfg);
    parts.config.seed = seed;
    for t in 0..VOCAB as u32 {
        let mut e = direction(t);
        let extra = match t {
            tok::Q => Some(tok::B),
            tok::P => Some(tok::C),
            _ => None,
        };
        if let Some(x) = extra {
            for (a, b) in e.iter_mut().zip(direction(x)) {
                *a += b;
            }
        }
        parts.token_embedding.row_mut(t as usize).copy_from_slice(&e);
    }
    for layer in parts.layers.iter_mut() {
        layer.w_q = noise(&mut r, D_MODEL, D_MODEL);
        layer.w_k = noise(&mut r, D_MODEL, D_MODEL);
        layer.w_v = noise(&mut r, D_MODEL, D_MODEL);
        layer.w_o = noise(&mut r, D_MODEL, D_MODEL);
        layer.w_ff1 = noise(&mut r, D_MODEL, cfg.d_ff);
        layer.w_ff2 = noise(&mut r, cfg.d_ff, D_MODEL);
    }
    let last = &mut parts.layers[1];
    plant(&mut last.w_v, &mut last.w_o, 0, tok::T, tok::A, 0.5);
    plant(&mut last.w_v, &mut last.w_o, 1, tok::T1, tok::Y, 1.0);
    plant(&mut last.w_v, &mut last.w_o, 2, tok::T2, tok::A, 0.5);
    plant(&mut last.w_v, &mut last.w_o, 8, tok::Q, tok::Z, 0.25);
    for t in 0..VOCAB {
        for (row, x) in direction(t as u32).into_iter().enumerate() {
            parts.unembedding.set(row, t, x / D_MODEL as f64);
        }
    }
    Ok(PlantedFixture {
        weights: WeightStore::new(parts)?,
        planted: NeuronId::new(1, MatrixKind::V, 0),
        decoy: NeuronId::new(1, MatrixKind::V, 1),
        source: NeuronId::new(1, MatrixKind::V, 2),
        steady: NeuronId::new(1, MatrixKind::V, 8),
    })
}

fn filler(r: &mut SplitMix64) -> u32 {
    tok::FILLERS[(r.next_f64() * tok::FILLERS.len() as f64) as usize]
}

/// `len - 1` fillers with `specials` placed at distinct random positions,
/// followed by `last`.
fn prompt(r: &mut SplitMix64, specials: &[u32], last: u32, len: usize) -> Vec<u32> {
    let mut p: Vec<u32> = (0..len - 1).map(|_| filler(r)).collect();
    let mut free: Vec<usize> = (0..len - 1).collect();
    for &s in specials {
        let i = (r.next_f64() * free.len() as f64) as usize;
        p[free.remove(i)] = s;
    }
    p.push(last);
    p
}

/// A/B item; every other item lists the options in swapped order.
fn ab_item(id: String, category: &str, prompt: Vec<u32>, n: usize, polarity: Polarity, split: Option<Split>) -> ScenarioItem {
    let (options, unbiased_index) = if n.is_multiple_of(2) {
        (vec![vec![tok::A], vec![tok::B]], 0)
    } else {
        (vec![vec![tok::B], vec![tok::A]], 1)
    };
    ScenarioItem {
        id,
        category: category.into(),
        prompt,
        options,
        unbiased_index,
        polarity: Some(polarity),
        split,
    }
}

/// Bias set for the planted neuron, category `"planted"`: X+ prompts
/// contain one `T` (the model answers `A`), X- prompts do not (it answers
/// `B`). Dev holds 16 X+ and 8 X-, test 8 X+ and 4 X-.
pub fn planted_bias_set(seed: u64) -> ScenarioSet {
    let mut r = rng::stream(seed, "fixture/bias");
    let mut items = Vec::new();
    for (split, n_plus, n_minus) in [(Split::Dev, 16, 8), (Split::Test, 8, 4)] {
        let tag = if split == Split::Dev { "dev" } else { "test" };
        for i in 0..n_plus {
            let p = prompt(&mut r, &[tok::T], tok::Q, 4);
            items.push(ab_item(format!("planted-{tag}-plus-{i:02}"), "planted", p, i, Polarity::Unbiased, Some(split)));
        }
        for i in 0..n_minus {
            let p = prompt(&mut r, &[], tok::Q, 4);
            items.push(ab_item(format!("planted-{tag}-minus-{i:02}"), "planted", p, i, Polarity::Biased, Some(split)));
        }
    }
    ScenarioSet::new(items, None).expect("fixture items are valid")
}

/// C/D questions answered by the `P` embedding alone; half of the prompts
/// also contain the trigger `T`.
pub fn planted_capability_set(seed: u64) -> ScenarioSet {
    let mut r = rng::stream(seed, "fixture/capability");
    let items = (0..12)
        .map(|i| {
            let specials: &[u32] = if i % 2 == 0 { &[tok::T] } else { &[] };
            ScenarioItem {
                id: format!("capability-{i:02}"),
                category: "capability".into(),
                prompt: prompt(&mut r, specials, tok::P, 4),
                options: vec![vec![tok::C], vec![tok::D]],
                unbiased_index: 0,
                polarity: None,
                split: None,
            }
        })
        .collect();
    ScenarioSet::new(items, None).expect("fixture items are valid")
}

/// Two categories for transfer tests. In `"alpha"` the unbiased answer
/// depends on `T2` alone, so its best single neuron is the source neuron.
/// In `"beta"` every X+ prompt holds one `T1` and one or two `T2`: the decoy
/// neuron separates the sets most cleanly, but only removing the source
/// neuron changes the answers.
pub fn transfer_set(seed: u64) -> ScenarioSet {
    let mut r = rng::stream(seed, "fixture/transfer");
    let mut items = Vec::new();
    for i in 0..12 {
        let p = prompt(&mut r, &[tok::T2], tok::Q, 4);
        items.push(ab_item(format!("alpha-plus-{i:02}"), "alpha", p, i, Polarity::Unbiased, None));
    }
    for i in 0..6 {
        let p = prompt(&mut r, &[], tok::Q, 4);
        items.push(ab_item(format!("alpha-minus-{i:02}"), "alpha", p, i, Polarity::Biased, None));
    }
    for i in 0..12 {
        let specials: &[u32] = if i % 2 == 0 { &[tok::T1, tok::T2] } else { &[tok::T1, tok::T2, tok::T2] };
        let p = prompt(&mut r, specials, tok::Q, 4);
        items.push(ab_item(format!("beta-plus-{i:02}"), "beta", p, i, Polarity::Unbiased, None));
    }
    for i in 0..6 {
        let p = prompt(&mut r, &[], tok::Q, 4);
        items.push(ab_item(format!("beta-minus-{i:02}"), "beta", p, i, Polarity::Biased, None));
    }
    ScenarioSet::new(items, None).expect("fixture items are valid")
}
