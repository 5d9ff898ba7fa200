//! Per-category (τ, k) search for the deactivation that costs the most EA,
//! and the cross-category transfer search on top of it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ablation::{response_sweep, ActivationResponsePair};
use crate::editing::plan_deactivate;
use crate::error::{Error, Result};
use crate::model::{apply_edit, NeuronId, WeightStore};
use crate::scoring::{extract_coco, C2ScoreTable, ScoringConfig, SimilarityConvention};

use super::{evaluate_ea, partition_scenarios, EvalOptions, Partition, ScenarioSet};

/// Neuron budget: an absolute count or a fraction of all Q/K/V neurons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KSpec {
    Count(usize),
    Fraction(f64),
}

impl KSpec {
    /// Number of neurons out of `n`; fractions round to nearest, minimum 1.
    pub fn resolve(&self, n: usize) -> Result<usize> {
        match *self {
            KSpec::Count(c) if c >= 1 && c <= n => Ok(c),
            KSpec::Count(c) => Err(Error::Config(format!("k = {c} outside 1..={n}"))),
            KSpec::Fraction(f) if f > 0.0 && f <= 1.0 => Ok(((f * n as f64).round() as usize).max(1)),
            KSpec::Fraction(f) => Err(Error::Config(format!("k fraction {f} outside (0, 1]"))),
        }
    }
}

impl FromStr for KSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("cannot parse k value {s:?}"));
        if s.contains(['.', 'e', 'E']) {
            s.parse().map(KSpec::Fraction).map_err(|_| bad())
        } else {
            s.parse().map(KSpec::Count).map_err(|_| bad())
        }
    }
}

impl fmt::Display for KSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KSpec::Count(c) => write!(f, "{c}"),
            KSpec::Fraction(x) => write!(f, "{x:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub tau_grid: Vec<f64>,
    pub k_grid: Vec<KSpec>,
    #[serde(default)]
    pub similarity: SimilarityConvention,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub length_normalized: bool,
    #[serde(skip, default = "one_job")]
    pub jobs: usize,
}

fn one_job() -> usize {
    1
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            tau_grid: vec![0.05, 0.1, 0.2, 0.5, 1.0],
            k_grid: [0.005, 0.01, 0.015, 0.02].into_iter().map(KSpec::Fraction).collect(),
            similarity: SimilarityConvention::NegAbs,
            seed: 0,
            length_normalized: false,
            jobs: 1,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_grid.is_empty() || self.k_grid.is_empty() {
            return Err(Error::Config("tau and k grids must be nonempty".into()));
        }
        for t in &self.tau_grid {
            ScoringConfig::new(*t, 1).validate()?;
        }
        Ok(())
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            length_normalized: self.length_normalized,
            jobs: self.jobs,
        }
    }

    pub fn scoring(&self, tau: f64, k: usize) -> ScoringConfig {
        ScoringConfig {
            tau,
            k,
            similarity: self.similarity,
            seed: self.seed,
        }
    }
}

/// Everything about one category that does not depend on (τ, k): its dev
/// items, the partition of the base model's behaviour, the responses of
/// every neuron, and the base EA.
#[derive(Debug, Clone)]
pub struct CategoryContext {
    pub category: String,
    pub dev: ScenarioSet,
    pub partition: Partition,
    pub pairs: Vec<ActivationResponsePair>,
    pub ea_orig: f64,
}

impl CategoryContext {
    pub fn table(&self, tau: f64, cfg: &GridConfig) -> Result<C2ScoreTable> {
        C2ScoreTable::build(&self.pairs, &cfg.scoring(tau, 1))
    }
}

/// Partition a category once from the base model and sweep all neurons.
pub fn category_context(weights: &WeightStore, dev: &ScenarioSet, category: &str, cfg: &GridConfig) -> Result<CategoryContext> {
    let dev = dev.category(category);
    let opts = cfg.eval_options();
    let partition = partition_scenarios(weights, &dev.items, cfg.seed, category, &opts)?;
    let neurons = weights.config().all_neurons();
    let pairs = response_sweep(
        weights,
        &partition.prompts_minus(),
        &partition.prompts_plus(),
        &neurons,
        cfg.jobs,
    )?;
    let ea_orig = evaluate_ea(weights, &dev, &opts)?;
    Ok(CategoryContext {
        category: category.to_string(),
        dev,
        partition,
        pairs,
        ea_orig,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub tau: f64,
    pub k: usize,
    pub ea_deact: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryResult {
    pub category: String,
    /// Scenarios per side after subsampling.
    pub scenarios_per_side: usize,
    pub tau: f64,
    pub k: usize,
    pub ea_orig: f64,
    pub ea_deact: f64,
    pub margin: f64,
    pub neurons: Vec<NeuronId>,
    /// Every evaluated cell in grid order (τ outer, k inner).
    pub cells: Vec<GridCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMargin {
    pub source: String,
    pub ea_deact: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossResult {
    pub target: String,
    pub source: String,
    pub tau: f64,
    pub k: usize,
    pub ea_orig: f64,
    pub ea_deact: f64,
    pub margin: f64,
    pub intra_margin: f64,
    /// Margin on the target for every source, in category order.
    pub sources: Vec<SourceMargin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub config: GridConfig,
    pub categories: Vec<CategoryResult>,
    #[serde(default)]
    pub cross: Vec<CrossResult>,
    /// Categories whose partition had an empty side.
    #[serde(default)]
    pub skipped: Vec<String>,
}

impl GridSearchResult {
    pub fn category(&self, name: &str) -> Option<&CategoryResult> {
        self.categories.iter().find(|c| c.category == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("grid result serialises");
        s.push('\n');
        s
    }
}

/// Search (τ, k) for one category. Each τ builds one score table; each k
/// deactivates the `k` lowest scorers and re-evaluates dev EA. The cell
/// with the largest margin wins; ties keep the earlier cell.
pub(crate) fn search_category(weights: &WeightStore, ctx: &CategoryContext, cfg: &GridConfig) -> Result<CategoryResult> {
    let n = weights.config().neuron_count();
    let opts = cfg.eval_options();
    let mut cells: Vec<GridCell> = Vec::new();
    let mut best: Option<(usize, Vec<NeuronId>)> = None;
    for &tau in &cfg.tau_grid {
        let table = ctx.table(tau, cfg)?;
        for kspec in &cfg.k_grid {
            let k = kspec.resolve(n)?;
            let neurons = extract_coco(&table, k)?;
            let edited = apply_edit(weights, &plan_deactivate(neurons.clone())?)?;
            let ea_deact = evaluate_ea(&edited, &ctx.dev, &opts)?;
            let margin = ctx.ea_orig - ea_deact;
            log::debug!("{}: tau={tau} k={k} margin={margin}", ctx.category);
            if best.as_ref().is_none_or(|(i, _)| margin > cells[*i].margin) {
                best = Some((cells.len(), neurons));
            }
            cells.push(GridCell { tau, k, ea_deact, margin });
        }
    }
    let (i, neurons) = best.expect("grids are nonempty");
    let cell = &cells[i];
    Ok(CategoryResult {
        category: ctx.category.clone(),
        scenarios_per_side: ctx.partition.k(),
        tau: cell.tau,
        k: cell.k,
        ea_orig: ctx.ea_orig,
        ea_deact: cell.ea_deact,
        margin: cell.margin,
        neurons,
        cells,
    })
}

/// Run `f` on every category of `dev`, skipping (with a warning) those whose
/// partition has an empty side.
pub(crate) fn for_each_category<T>(
    weights: &WeightStore,
    dev: &ScenarioSet,
    cfg: &GridConfig,
    mut f: impl FnMut(&CategoryContext) -> Result<T>,
) -> Result<(Vec<T>, Vec<String>)> {
    cfg.validate()?;
    if dev.is_empty() {
        return Err(Error::Config("dev set is empty".into()));
    }
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for cat in dev.categories() {
        match category_context(weights, dev, &cat, cfg) {
            Ok(ctx) => out.push(f(&ctx)?),
            Err(Error::Partition(msg)) => {
                log::warn!("skipping category {cat}: {msg}");
                skipped.push(cat);
            }
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(Error::Partition(format!(
            "no category has both biased and unbiased items (skipped: {})",
            skipped.join(", ")
        )));
    }
    Ok((out, skipped))
}

/// Intra-category search over every category of `dev`.
pub fn grid_search_intra(weights: &WeightStore, dev: &ScenarioSet, cfg: &GridConfig) -> Result<GridSearchResult> {
    let (categories, skipped) = for_each_category(weights, dev, cfg, |ctx| search_category(weights, ctx, cfg))?;
    Ok(GridSearchResult {
        config: cfg.clone(),
        categories,
        cross: Vec::new(),
        skipped,
    })
}

/// For every target category, try every source category's selected neurons
/// on the target's dev items and keep the source with the largest margin.
/// Ties keep the earlier source; since each target is also a source, the
/// cross margin is never below the intra margin.
pub fn grid_search_cross(intra: &GridSearchResult, weights: &WeightStore, dev: &ScenarioSet) -> Result<GridSearchResult> {
    let opts = intra.config.eval_options();
    let edited = intra
        .categories
        .iter()
        .map(|c| apply_edit(weights, &plan_deactivate(c.neurons.clone())?))
        .collect::<Result<Vec<_>>>()?;
    let mut cross = Vec::with_capacity(intra.categories.len());
    for target in &intra.categories {
        let target_dev = dev.category(&target.category);
        if target_dev.is_empty() {
            return Err(Error::Config(format!("no dev items for category {}", target.category)));
        }
        let mut sources = Vec::with_capacity(edited.len());
        let mut best = 0;
        for (i, (src, w)) in intra.categories.iter().zip(&edited).enumerate() {
            let ea_deact = evaluate_ea(w, &target_dev, &opts)?;
            let margin = target.ea_orig - ea_deact;
            if margin > sources.get(best).map_or(f64::NEG_INFINITY, |s: &SourceMargin| s.margin) {
                best = i;
            }
            sources.push(SourceMargin {
                source: src.category.clone(),
                ea_deact,
                margin,
            });
        }
        let src = &intra.categories[best];
        cross.push(CrossResult {
            target: target.category.clone(),
            source: src.category.clone(),
            tau: src.tau,
            k: src.k,
            ea_orig: target.ea_orig,
            ea_deact: sources[best].ea_deact,
            margin: sources[best].margin,
            intra_margin: target.margin,
            sources,
        });
    }
    let mut out = intra.clone();
    out.cross = cross;
    Ok(out)
}
