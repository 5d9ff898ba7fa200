//! C²-Scores and neuron selectors.
//!
//! For one neuron with responses `A+` and `A-` over `K` scenarios each,
//!
//! ```text
//! L(A+, A-) = mean_i  -log( e^{s_intra/τ} / (e^{s_intra/τ} + e^{s_inter/τ}) )
//! s_intra   = sim(a+_i, A+ without a+_i),   s_inter = sim(a+_i, A-)
//! C²(N)     = (L(A+, A-) + L(A-, A+)) / 2
//! ```
//!
//! where `sim` is the mean absolute difference, negated under the default
//! [`SimilarityConvention::NegAbs`]. Lower scores mean tighter sets that are
//! further apart. The loss is evaluated as a softplus of the logit gap so it
//! never overflows.

use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::ablation::ActivationResponsePair;
use crate::error::{Error, Result};
use crate::model::{NeuronId, WeightStore};
use crate::rng;
use crate::tensor::mean;

/// How the mean absolute difference enters the contrastive logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityConvention {
    /// `s = -abs`: close responses are similar.
    #[default]
    NegAbs,
    /// `s = +abs`, the formula taken literally.
    LiteralAbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub tau: f64,
    pub k: usize,
    #[serde(default)]
    pub similarity: SimilarityConvention,
    #[serde(default)]
    pub seed: u64,
}

impl ScoringConfig {
    pub fn new(tau: f64, k: usize) -> Self {
        Self {
            tau,
            k,
            similarity: SimilarityConvention::NegAbs,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive and finite, got {}", self.tau)));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mean of `|a - r|` over `ref_set`.
pub fn abs_stat(a: f64, ref_set: &[f64]) -> Result<f64> {
    if ref_set.is_empty() {
        return Err(Error::Config("abs_stat over an empty reference set".into()));
    }
    Ok(ref_set.iter().map(|r| (a - r).abs()).sum::<f64>() / ref_set.len() as f64)
}

/// `-log(e^x / (e^x + e^y)) = softplus(y - x)`, evaluated stably.
fn neg_log_softmax_first(x: f64, y: f64) -> f64 {
    let gap = y - x;
    if gap > 0.0 {
        gap + (-gap).exp().ln_1p()
    } else {
        gap.exp().ln_1p()
    }
}

/// One direction of the contrastive loss, anchors drawn from `anchor_set`.
pub fn contrastive_loss(anchor_set: &[f64], contrast_set: &[f64], config: &ScoringConfig) -> Result<f64> {
    config.validate()?;
    let k = anchor_set.len();
    if k < 2 || contrast_set.len() != k {
        return Err(Error::Config(format!(
            "contrastive loss needs two sets of equal size K >= 2, got {} and {}",
            k,
            contrast_set.len()
        )));
    }
    let sign = match config.similarity {
        SimilarityConvention::NegAbs => -1.0,
        SimilarityConvention::LiteralAbs => 1.0,
    };
    let mut rest = Vec::with_capacity(k - 1);
    let mut total = 0.0;
    for i in 0..k {
        rest.clear();
        rest.extend(anchor_set.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v));
        let a = anchor_set[i];
        let intra = sign * abs_stat(a, &rest)? / config.tau;
        let inter = sign * abs_stat(a, contrast_set)? / config.tau;
        total += neg_log_softmax_first(intra, inter);
    }
    Ok(total / k as f64)
}

/// Symmetric C²-Score of one response pair.
pub fn c2_score(pair: &ActivationResponsePair, config: &ScoringConfig) -> Result<f64> {
    let forward = contrastive_loss(&pair.a_plus, &pair.a_minus, config)?;
    let backward = contrastive_loss(&pair.a_minus, &pair.a_plus, config)?;
    Ok((forward + backward) / 2.0)
}

/// `|mean(a) - mean(b)|`.
pub fn disparity(a: &[f64], b: &[f64]) -> f64 {
    (mean(a) - mean(b)).abs()
}

/// Population standard deviation.
pub fn consistency(a: &[f64]) -> f64 {
    let m = mean(a);
    (a.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / a.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    #[serde(flatten)]
    pub neuron: NeuronId,
    pub score: f64,
}

/// C²-Scores for a set of neurons plus the configuration that produced
/// them. `provenance` is the SHA-256 of the response pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C2ScoreTable {
    pub config: ScoringConfig,
    pub entries: Vec<ScoreEntry>,
    pub provenance: String,
}

impl C2ScoreTable {
    pub fn build(pairs: &[ActivationResponsePair], config: &ScoringConfig) -> Result<Self> {
        config.validate()?;
        let entries = pairs
            .iter()
            .map(|p| {
                Ok(ScoreEntry {
                    neuron: p.neuron,
                    score: c2_score(p, config)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            entries,
            provenance: pairs_provenance(pairs),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn score_of(&self, n: &NeuronId) -> Option<f64> {
        self.entries.iter().find(|e| e.neuron == *n).map(|e| e.score)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text).map_err(|e| Error::Data(format!("score table: {e}")))?;
        t.config.validate()?;
        if t.entries.iter().any(|e| !e.score.is_finite()) {
            return Err(Error::Data("score table has non-finite scores".into()));
        }
        Ok(t)
    }
}

/// Hex SHA-256 over neuron ids and response bit patterns.
pub fn pairs_provenance(pairs: &[ActivationResponsePair]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for p in pairs {
        h.update((p.neuron.layer as u64).to_le_bytes());
        h.update(p.neuron.kind.as_str().as_bytes());
        h.update((p.neuron.col as u64).to_le_bytes());
        for set in [&p.a_minus, &p.a_plus] {
            h.update((set.len() as u64).to_le_bytes());
            for v in set.iter() {
                h.update(v.to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

/// Stable ascending order by value, ties by neuron id.
fn ascending(a: &(NeuronId, f64), b: &(NeuronId, f64)) -> std::cmp::Ordering {
    a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
}

/// Stable descending order by value, ties by neuron id.
fn descending(a: &(NeuronId, f64), b: &(NeuronId, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// The `k` lowest-scoring neurons, lowest first. The threshold ε(k) is the
/// score of the last returned neuron; ties at ε(k) go to the
/// lexicographically smaller neuron id.
pub fn extract_coco(table: &C2ScoreTable, k: usize) -> Result<Vec<NeuronId>> {
    if k == 0 || k > table.len() {
        return Err(Error::Config(format!(
            "cannot extract {k} neurons from a table of {}",
            table.len()
        )));
    }
    let mut v: Vec<(NeuronId, f64)> = table.entries.iter().map(|e| (e.neuron, e.score)).collect();
    v.sort_by(ascending);
    Ok(v.into_iter().take(k).map(|(n, _)| n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    Coco,
    Rand,
    Norm,
    Mact,
    Ne,
    Le,
}

impl Selector {
    pub fn as_str(self) -> &'static str {
        match self {
            Selector::Coco => "coco",
            Selector::Rand => "rand",
            Selector::Norm => "norm",
            Selector::Mact => "mact",
            Selector::Ne => "ne",
            Selector::Le => "le",
        }
    }
}

impl std::str::FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "coco" => Selector::Coco,
            "rand" => Selector::Rand,
            "norm" => Selector::Norm,
            "mact" => Selector::Mact,
            "ne" => Selector::Ne,
            "le" => Selector::Le,
            other => return Err(Error::Config(format!("unknown selector {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub selector: Selector,
    /// Disparity threshold θ for the LE/NE quality filters.
    pub theta: f64,
    pub k: usize,
    /// Upper bound on the standard deviation of `A-` for MACT.
    pub dispersion_cap: f64,
    /// Seed for RAND.
    #[serde(default)]
    pub seed: u64,
}

impl SelectorConfig {
    pub fn new(selector: Selector, k: usize) -> Self {
        Self {
            selector,
            theta: f64::NEG_INFINITY,
            k,
            dispersion_cap: f64::INFINITY,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.theta.is_nan() || self.dispersion_cap.is_nan() {
            return Err(Error::Config("theta and dispersion cap must not be NaN".into()));
        }
        Ok(())
    }
}

/// Result of a baseline selector. `fallback` is set when MACT found no
/// neuron under the dispersion cap and ranked all neurons instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSelection {
    pub neurons: Vec<NeuronId>,
    pub fallback: bool,
}

/// Top `k` by value, descending, ties by neuron id.
pub fn top_k_by_norm(entries: &[(NeuronId, f64)], k: usize) -> Vec<NeuronId> {
    let mut v = entries.to_vec();
    v.sort_by(descending);
    v.into_iter().take(k).map(|(n, _)| n).collect()
}

fn select_mact(pairs: &[ActivationResponsePair], k: usize, cap: f64) -> BaselineSelection {
    let ranked: Vec<(NeuronId, f64)> = pairs
        .iter()
        .filter(|p| consistency(&p.a_minus) <= cap)
        .map(|p| (p.neuron, mean(&p.a_minus)))
        .collect();
    if ranked.is_empty() {
        log::warn!("MACT: no neuron has A- dispersion <= {cap}; ranking all neurons by mean A-");
        let all: Vec<(NeuronId, f64)> = pairs.iter().map(|p| (p.neuron, mean(&p.a_minus))).collect();
        return BaselineSelection {
            neurons: top_k_by_norm(&all, k),
            fallback: true,
        };
    }
    BaselineSelection {
        neurons: top_k_by_norm(&ranked, k),
        fallback: false,
    }
}

/// RAND / NORM / MACT.
///
/// RAND samples `k` neurons of the whole model without replacement from the
/// `"rand"` stream of `config.seed`; NORM takes the `k` columns with the
/// largest L2 norm; MACT takes the `k` neurons with the largest mean `A-`
/// among those whose `A-` standard deviation is at most the cap.
pub fn select_baseline(
    weights: &WeightStore,
    pairs: &[ActivationResponsePair],
    config: &SelectorConfig,
) -> Result<BaselineSelection> {
    config.validate()?;
    let cfg = weights.config();
    let universe = cfg.all_neurons();
    match config.selector {
        Selector::Rand => {
            if config.k > universe.len() {
                return Err(Error::Config(format!(
                    "cannot sample {} of {} neurons",
                    config.k,
                    universe.len()
                )));
            }
            let mut r = rng::stream(config.seed, "rand");
            let mut picked: Vec<NeuronId> = index::sample(&mut r, universe.len(), config.k)
                .into_iter()
                .map(|i| universe[i])
                .collect();
            picked.sort();
            Ok(BaselineSelection {
                neurons: picked,
                fallback: false,
            })
        }
        Selector::Norm => {
            let norms: Vec<(NeuronId, f64)> = universe
                .iter()
                .map(|n| (*n, weights.layer(n.layer).projection(n.kind).column_norm(n.col)))
                .collect();
            Ok(BaselineSelection {
                neurons: top_k_by_norm(&norms, config.k),
                fallback: false,
            })
        }
        Selector::Mact => {
            if pairs.is_empty() {
                return Err(Error::Config("MACT needs activation responses".into()));
            }
            Ok(select_mact(pairs, config.k, config.dispersion_cap))
        }
        other => Err(Error::Config(format!(
            "{} is not a baseline selector",
            other.as_str()
        ))),
    }
}

/// The two groups of a local-enhancement selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeSelection {
    pub coco: Vec<NeuronId>,
    pub mact: Vec<NeuronId>,
    /// MACT picks dropped because they were already in the COCO group.
    pub overlap: Vec<NeuronId>,
    pub mact_fallback: bool,
}

fn pair_index(pairs: &[ActivationResponsePair]) -> BTreeMap<NeuronId, &ActivationResponsePair> {
    pairs.iter().map(|p| (p.neuron, p)).collect()
}

/// Local enhancement: the COCO group is the `k` lowest-scoring neurons
/// whose disparity exceeds θ; the MACT group is the MACT baseline with any
/// neuron already in the COCO group removed.
pub fn select_le(
    table: &C2ScoreTable,
    pairs: &[ActivationResponsePair],
    config: &SelectorConfig,
) -> Result<LeSelection> {
    config.validate()?;
    let by_neuron = pair_index(pairs);
    let k = config.k.min(table.len());
    let mut coco = Vec::new();
    for n in extract_coco(table, k)? {
        let p = by_neuron
            .get(&n)
            .ok_or_else(|| Error::Config(format!("no responses for scored neuron {n}")))?;
        if disparity(&p.a_minus, &p.a_plus) > config.theta {
            coco.push(n);
        }
    }
    if coco.is_empty() {
        return Err(Error::EmptySelection(format!(
            "theta = {} excludes every COCO candidate",
            config.theta
        )));
    }
    let mact_sel = select_mact(pairs, config.k, config.dispersion_cap);
    let (overlap, mact): (Vec<NeuronId>, Vec<NeuronId>) =
        mact_sel.neurons.into_iter().partition(|n| coco.contains(n));
    if !overlap.is_empty() {
        log::info!(
            "LE: removed {} neuron(s) present in both groups from the MACT group",
            overlap.len()
        );
    }
    Ok(LeSelection {
        coco,
        mact,
        overlap,
        mact_fallback: mact_sel.fallback,
    })
}

/// Networked enhancement: every neuron with disparity above θ, the `k`
/// largest kept, descending by disparity.
pub fn select_ne(pairs: &[ActivationResponsePair], config: &SelectorConfig) -> Result<Vec<NeuronId>> {
    config.validate()?;
    let passing: Vec<(NeuronId, f64)> = pairs
        .iter()
        .map(|p| (p.neuron, disparity(&p.a_minus, &p.a_plus)))
        .filter(|(_, d)| *d > config.theta)
        .collect();
    if passing.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no neuron has disparity above theta = {}",
            config.theta
        )));
    }
    Ok(top_k_by_norm(&passing, config.k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_synthetic, MatrixKind, ModelConfig, WeightParts};
    use crate::tensor::Matrix;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn nid(col: usize) -> NeuronId {
        NeuronId::new(0, MatrixKind::Q, col)
    }

    fn pair(col: usize, a_minus: Vec<f64>, a_plus: Vec<f64>) -> ActivationResponsePair {
        ActivationResponsePair {
            neuron: nid(col),
            a_minus,
            a_plus,
        }
    }

    fn cfg(tau: f64) -> ScoringConfig {
        ScoringConfig::new(tau, 1)
    }

    #[test]
    fn abs_stat_examples() {
        assert_eq!(abs_stat(2.0, &[1.0, 3.0]).unwrap(), 1.0);
        assert_eq!(abs_stat(4.5, &[4.5]).unwrap(), 0.0);
        assert_eq!(abs_stat(0.0, &[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert!(matches!(abs_stat(0.0, &[]), Err(Error::Config(_))));
    }

    #[test]
    fn contrastive_loss_examples() {
        let c = [3.0, 3.0];
        assert!((contrastive_loss(&c, &c, &cfg(1.0)).unwrap() - LN_2).abs() < 1e-15);
        // -log(1/(1+e^-10)) = ln(1 + e^-10)
        let sep = contrastive_loss(&[0.0, 0.0], &[10.0, 10.0], &cfg(1.0)).unwrap();
        assert!((sep - (-10f64).exp().ln_1p()).abs() < 1e-18);
        assert!((sep - 4.539889e-5).abs() < 1e-10);
        let mut lit = cfg(1.0);
        lit.similarity = SimilarityConvention::LiteralAbs;
        let l = contrastive_loss(&[0.0, 0.0], &[10.0, 10.0], &lit).unwrap();
        assert!((l - (10.0 + (-10f64).exp().ln_1p())).abs() < 1e-12);
        assert!((l - 10.0000454).abs() < 1e-7);
    }

    #[test]
    fn contrastive_loss_rejects_bad_sizes_and_tau() {
        assert!(contrastive_loss(&[1.0], &[1.0], &cfg(1.0)).is_err());
        assert!(contrastive_loss(&[1.0, 2.0], &[1.0], &cfg(1.0)).is_err());
        assert!(contrastive_loss(&[1.0, 2.0], &[1.0, 2.0], &cfg(0.0)).is_err());
    }

    #[test]
    fn c2_examples() {
        let p = pair(0, vec![2.0, 2.0], vec![2.0, 2.0]);
        assert!((c2_score(&p, &cfg(0.1)).unwrap() - LN_2).abs() < 1e-12);
        let sep = pair(0, vec![10.0, 10.0], vec![0.0, 0.0]);
        let s = c2_score(&sep, &cfg(1.0)).unwrap();
        assert!((s - 4.54e-5).abs() < 1e-7);
        let swapped = pair(0, vec![0.0, 0.0], vec![10.0, 10.0]);
        assert_eq!(s.to_bits(), c2_score(&swapped, &cfg(1.0)).unwrap().to_bits());
    }

    #[test]
    fn tau_limit_flattens_to_ln2() {
        let p = pair(0, vec![0.3, 5.0, 1.2], vec![9.0, 2.5, 0.1]);
        assert!((c2_score(&p, &cfg(1e9)).unwrap() - LN_2).abs() < 1e-8);
    }

    #[test]
    fn separation_monotonicity() {
        // A- starts at or above max(A+) and is translated upwards.
        let plus = vec![0.2, 0.5, 0.1, 0.4];
        let minus_base = [0.6, 0.9, 0.7, 1.0];
        let mut prev = f64::INFINITY;
        for step in 0..50 {
            let t = step as f64 * 0.05;
            let minus: Vec<f64> = minus_base.iter().map(|x| x + t).collect();
            let s = c2_score(&pair(0, minus, plus.clone()), &cfg(0.5)).unwrap();
            assert!(s < prev, "t={t}: {s} !< {prev}");
            prev = s;
        }
    }

    #[test]
    fn extract_examples() {
        let table = C2ScoreTable {
            config: cfg(1.0),
            entries: vec![
                ScoreEntry { neuron: nid(1), score: 0.1 },
                ScoreEntry { neuron: nid(2), score: 0.05 },
                ScoreEntry { neuron: nid(3), score: 0.2 },
            ],
            provenance: String::new(),
        };
        assert_eq!(extract_coco(&table, 2).unwrap(), vec![nid(2), nid(1)]);
        assert_eq!(extract_coco(&table, 3).unwrap().len(), 3);
        assert!(matches!(extract_coco(&table, 4), Err(Error::Config(_))));
        assert!(extract_coco(&table, 0).is_err());
    }

    #[test]
    fn extract_ties_break_lexicographically() {
        let table = C2ScoreTable {
            config: cfg(1.0),
            entries: vec![
                ScoreEntry { neuron: NeuronId::new(1, MatrixKind::Q, 0), score: 0.1 },
                ScoreEntry { neuron: NeuronId::new(0, MatrixKind::V, 5), score: 0.1 },
                ScoreEntry { neuron: NeuronId::new(0, MatrixKind::K, 9), score: 0.1 },
            ],
            provenance: String::new(),
        };
        assert_eq!(
            extract_coco(&table, 2).unwrap(),
            vec![NeuronId::new(0, MatrixKind::K, 9), NeuronId::new(0, MatrixKind::V, 5)]
        );
    }

    #[test]
    fn table_json_round_trip() {
        let pairs = vec![pair(0, vec![1.0, 2.0], vec![3.0, 4.0]), pair(1, vec![0.0, 0.0], vec![1.0, 1.0])];
        let t = C2ScoreTable::build(&pairs, &cfg(0.2)).unwrap();
        let json = t.to_json();
        assert!(json.contains("\"layer\""));
        assert!(json.contains("\"kind\": \"Q\""));
        assert!(json.contains("\"provenance\""));
        assert_eq!(C2ScoreTable::from_json(&json).unwrap(), t);
        let other = C2ScoreTable::build(&pairs[..1], &cfg(0.2)).unwrap();
        assert_ne!(other.provenance, t.provenance);
    }

    #[test]
    fn disparity_and_consistency() {
        assert_eq!(disparity(&[1.0, 1.0], &[1.0, 1.0]), 0.0);
        assert_eq!(disparity(&[0.0, 0.0], &[10.0, 10.0]), 10.0);
        assert_eq!(consistency(&[5.0, 5.0, 5.0]), 0.0);
        assert_eq!(consistency(&[1.0, 3.0]), 1.0);
    }

    #[test]
    fn norm_selector_picks_largest_column() {
        let cfg = ModelConfig::new(1, 1, 3, 4, 4).unwrap();
        let mut parts = WeightParts::zeros(&cfg);
        parts.layers[0].w_q =
            Matrix::from_rows(&[vec![3.0, 1.0, 2.0], vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let w = WeightStore::new(parts).unwrap();
        let sel = select_baseline(&w, &[], &SelectorConfig::new(Selector::Norm, 1)).unwrap();
        assert_eq!(sel.neurons, vec![nid(0)]);
    }

    #[test]
    fn rand_selector_is_seeded() {
        let cfg = ModelConfig::new(2, 2, 8, 4, 4).unwrap();
        let w = gen_synthetic(&cfg, 1).unwrap();
        let mut sc = SelectorConfig::new(Selector::Rand, 5);
        sc.seed = 17;
        let a = select_baseline(&w, &[], &sc).unwrap();
        let b = select_baseline(&w, &[], &sc).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.neurons.len(), 5);
        sc.seed = 18;
        assert_ne!(select_baseline(&w, &[], &sc).unwrap(), a);
        sc.k = 1000;
        assert!(select_baseline(&w, &[], &sc).is_err());
    }

    #[test]
    fn mact_selects_consistent_high_responder() {
        let pairs = vec![
            pair(0, vec![5.0, 5.0, 5.0], vec![5.0, 5.0, 5.0]),
            pair(1, vec![9.0, 0.0, 9.0], vec![0.0, 0.0, 0.0]),
            pair(2, vec![1.0, 1.0, 1.0], vec![0.0, 0.0, 0.0]),
        ];
        let cfg = ModelConfig::new(1, 1, 3, 4, 4).unwrap();
        let w = WeightStore::new(WeightParts::zeros(&cfg)).unwrap();
        let mut sc = SelectorConfig::new(Selector::Mact, 1);
        sc.dispersion_cap = 1.0;
        let sel = select_baseline(&w, &pairs, &sc).unwrap();
        assert_eq!(sel.neurons, vec![nid(0)]);
        assert!(!sel.fallback);
        sc.dispersion_cap = -1.0;
        let sel = select_baseline(&w, &pairs, &sc).unwrap();
        assert!(sel.fallback);
        assert_eq!(sel.neurons, vec![nid(1)]);
    }

    #[test]
    fn ne_threshold_behaviour() {
        let pairs = vec![
            pair(0, vec![0.0, 0.0], vec![10.0, 10.0]),
            pair(1, vec![0.0, 0.0], vec![1.0, 3.0]),
            pair(2, vec![4.0, 4.0], vec![4.0, 4.0]),
        ];
        let mut sc = SelectorConfig::new(Selector::Ne, 2);
        assert_eq!(select_ne(&pairs, &sc).unwrap(), vec![nid(0), nid(1)]);
        sc.theta = 5.0;
        assert_eq!(select_ne(&pairs, &sc).unwrap(), vec![nid(0)]);
        sc.theta = 10.0;
        assert!(matches!(select_ne(&pairs, &sc), Err(Error::EmptySelection(_))));
    }

    #[test]
    fn le_groups_partition_planted_neurons() {
        // col 0: discriminative (COCO); col 1: consistently high on A- only
        // with equal A+ (MACT); col 2: noise.
        let pairs = vec![
            pair(0, vec![0.0, 0.0, 0.0], vec![8.0, 8.0, 8.0]),
            pair(1, vec![6.0, 6.0, 6.0], vec![6.0, 6.0, 6.0]),
            pair(2, vec![0.1, 0.3, 0.2], vec![0.2, 0.1, 0.3]),
        ];
        let table = C2ScoreTable::build(&pairs, &cfg(0.5)).unwrap();
        let mut sc = SelectorConfig::new(Selector::Le, 1);
        sc.theta = 1.0;
        sc.dispersion_cap = 0.5;
        let le = select_le(&table, &pairs, &sc).unwrap();
        assert_eq!(le.coco, vec![nid(0)]);
        assert_eq!(le.mact, vec![nid(1)]);
        assert!(le.overlap.is_empty());
        sc.theta = 100.0;
        assert!(matches!(select_le(&table, &pairs, &sc), Err(Error::EmptySelection(_))));
    }

    #[test]
    fn le_removes_overlap_from_mact_group() {
        let pairs = vec![
            pair(0, vec![9.0, 9.0], vec![0.0, 0.0]),
            pair(1, vec![0.1, 0.2], vec![0.2, 0.1]),
        ];
        let table = C2ScoreTable::build(&pairs, &cfg(1.0)).unwrap();
        let sc = SelectorConfig::new(Selector::Le, 1);
        let le = select_le(&table, &pairs, &sc).unwrap();
        assert_eq!(le.coco, vec![nid(0)]);
        assert_eq!(le.overlap, vec![nid(0)]);
        assert!(le.mact.is_empty());
    }

    proptest! {
        #[test]
        fn degenerate_floor(c in 0.0f64..100.0, k in 2usize..8, tau in prop::sample::select(vec![0.05, 0.1, 0.2, 0.5, 1.0, 7.0])) {
            let p = pair(0, vec![c; k], vec![c; k]);
            prop_assert!((c2_score(&p, &cfg(tau)).unwrap() - LN_2).abs() < 1e-12);
        }

        #[test]
        fn symmetric_bitwise(
            a in prop::collection::vec(0.0f64..20.0, 2..6),
            b in prop::collection::vec(0.0f64..20.0, 2..6),
            tau in 0.01f64..5.0,
        ) {
            let k = a.len().min(b.len());
            let p = pair(0, a[..k].to_vec(), b[..k].to_vec());
            let q = pair(0, b[..k].to_vec(), a[..k].to_vec());
            prop_assert_eq!(c2_score(&p, &cfg(tau)).unwrap().to_bits(), c2_score(&q, &cfg(tau)).unwrap().to_bits());
        }

        #[test]
        fn joint_rescaling_invariance(
            a in prop::collection::vec(0.0f64..5.0, 3),
            b in prop::collection::vec(0.0f64..5.0, 3),
            tau in 0.1f64..2.0,
            c in 0.1f64..10.0,
        ) {
            let p = pair(0, a.clone(), b.clone());
            let scaled = pair(0, a.iter().map(|x| x * c).collect(), b.iter().map(|x| x * c).collect());
            let s1 = c2_score(&p, &cfg(tau)).unwrap();
            let s2 = c2_score(&scaled, &cfg(tau * c)).unwrap();
            prop_assert!((s1 - s2).abs() < 1e-12);
        }
    }
}
