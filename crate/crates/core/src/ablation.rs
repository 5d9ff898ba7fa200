//! Causal activation responses.
//!
//! The response of neuron `N` (column `j` of `W_w` in layer `l`) to a
//! scenario `x` is `|| h^l_{\N}(x) - h^l(x) ||_2`, measured at the final
//! prompt token, where `h^l_{\N}` is the layer output with the column
//! zeroed. Zeroing a column of layer `l` cannot change `h^{l-1}`, so only
//! layer `l` is recomputed, from a [`LayerInputCache`] built by one
//! unedited forward pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward, Capture, LayerWeights, NeuronId, WeightStore};
use crate::parallel::par_map;
use crate::tensor::{self, Matrix};

/// `(A-, A+)` for one neuron: responses on the biased and unbiased sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationResponsePair {
    pub neuron: NeuronId,
    pub a_minus: Vec<f64>,
    pub a_plus: Vec<f64>,
}

/// Per-layer hidden states of one unedited forward pass.
#[derive(Debug, Clone)]
pub struct LayerInputCache {
    fingerprint: u64,
    tokens: Vec<u32>,
    inputs: Vec<Matrix>,
    outputs: Vec<Matrix>,
}

impl LayerInputCache {
    pub fn build(weights: &WeightStore, tokens: &[u32]) -> Result<Self> {
        let trace = forward(weights, tokens, Capture::hidden())?;
        Ok(Self {
            fingerprint: weights.fingerprint(),
            tokens: tokens.to_vec(),
            inputs: trace.layer_inputs.expect("hidden captured"),
            outputs: trace.layer_outputs.expect("hidden captured"),
        })
    }

    /// h^{l-1} for every token.
    pub fn layer_input(&self, layer: usize) -> &Matrix {
        &self.inputs[layer]
    }

    /// Baseline h^l for every token.
    pub fn layer_output(&self, layer: usize) -> &Matrix {
        &self.outputs[layer]
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    fn check(&self, weights: &WeightStore, scenario: &[u32]) -> Result<()> {
        if self.fingerprint != weights.fingerprint() {
            return Err(Error::Stale("cache was built from a different weight store".into()));
        }
        if self.tokens != scenario {
            return Err(Error::Stale("cache was built from a different scenario".into()));
        }
        Ok(())
    }
}

/// Copy of the neuron's layer with its column zeroed.
pub fn ablated_layer(weights: &WeightStore, neuron: &NeuronId) -> Result<LayerWeights> {
    weights.config().check_neuron(neuron)?;
    let mut layer = weights.layer(neuron.layer).clone();
    layer.projection_mut(neuron.kind).zero_column(neuron.col);
    Ok(layer)
}

/// Final-token distance between layer `layer` recomputed with `edited`
/// and the cached baseline output.
pub fn response_with_layer(
    weights: &WeightStore,
    cache: &LayerInputCache,
    layer: usize,
    edited: &LayerWeights,
) -> Result<f64> {
    let out = edited.forward(weights.config(), cache.layer_input(layer))?;
    let base = cache.layer_output(layer);
    let last = base.rows() - 1;
    tensor::l2_dist(out.hidden.row(last), base.row(last))
}

/// Activation response of one neuron on one scenario.
pub fn activation_response(
    weights: &WeightStore,
    cache: &LayerInputCache,
    scenario: &[u32],
    neuron: &NeuronId,
) -> Result<f64> {
    cache.check(weights, scenario)?;
    let edited = ablated_layer(weights, neuron)?;
    response_with_layer(weights, cache, neuron.layer, &edited)
}

/// Responses of every neuron in `neurons` on `K` biased and `K` unbiased
/// scenarios. Caches are built once per scenario; work is spread over
/// `jobs` threads by neuron.
pub fn response_sweep(
    weights: &WeightStore,
    scenarios_minus: &[Vec<u32>],
    scenarios_plus: &[Vec<u32>],
    neurons: &[NeuronId],
    jobs: usize,
) -> Result<Vec<ActivationResponsePair>> {
    if scenarios_minus.len() != scenarios_plus.len() {
        return Err(Error::Config(format!(
            "X- has {} scenarios but X+ has {}; subsample to a common K first",
            scenarios_minus.len(),
            scenarios_plus.len()
        )));
    }
    if scenarios_minus.len() < 2 {
        return Err(Error::Config(format!(
            "K = {} but scoring needs at least 2 scenarios per set",
            scenarios_minus.len()
        )));
    }
    for n in neurons {
        weights.config().check_neuron(n)?;
    }
    let caches_minus = par_map(jobs, scenarios_minus, |s| LayerInputCache::build(weights, s))?;
    let caches_plus = par_map(jobs, scenarios_plus, |s| LayerInputCache::build(weights, s))?;
    par_map(jobs, neurons, |n| {
        let edited = ablated_layer(weights, n)?;
        let run = |caches: &[LayerInputCache]| -> Result<Vec<f64>> {
            caches
                .iter()
                .map(|c| response_with_layer(weights, c, n.layer, &edited))
                .collect()
        };
        Ok(ActivationResponsePair {
            neuron: *n,
            a_minus: run(&caches_minus)?,
            a_plus: run(&caches_plus)?,
        })
    })
}
