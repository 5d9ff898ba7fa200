//! End-to-end deactivation and enhancement runs with reproducible reports.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::editing::{plan_deactivate, plan_le, EditGroup, EditMode, EditPlan};
use crate::error::{Error, Result};
use crate::model::{apply_edit, NeuronId, WeightStore};
use crate::rng::sub_seed;
use crate::scoring::{extract_coco, select_baseline, select_le, select_ne, Selector, SelectorConfig};

use super::grid::{for_each_category, search_category, CategoryContext, GridConfig};
use super::{evaluate_ea, ScenarioSet};

/// A capability set with a display name.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedSet {
    pub name: String,
    pub set: ScenarioSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    /// Scaling factors tried on dev in enhancement runs.
    pub delta_grid: Vec<f64>,
    pub selector: Selector,
    /// Disparity threshold for LE/NE.
    #[serde(default)]
    pub theta: f64,
    /// Dispersion cap for MACT; `None` admits every neuron.
    #[serde(default)]
    pub dispersion_cap: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            delta_grid: (1..=10).map(|i| i as f64 / 10.0).collect(),
            selector: Selector::Coco,
            theta: 0.0,
            dispersion_cap: None,
        }
    }
}

impl ExperimentConfig {
    fn selector_config(&self, selector: Selector, k: usize, category: &str) -> SelectorConfig {
        SelectorConfig {
            selector,
            theta: self.theta,
            k,
            dispersion_cap: self.dispersion_cap.unwrap_or(f64::INFINITY),
            seed: sub_seed(self.grid.seed, &format!("select/{category}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Deactivate,
    Enhance,
}

/// The edit chosen for one category on dev.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryEdit {
    pub category: String,
    pub tau: f64,
    pub k: usize,
    pub groups: Vec<EditGroup>,
    pub dev_ea_before: f64,
    pub dev_ea_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryEa {
    pub category: String,
    pub n_items: usize,
    pub ea_before: f64,
    pub ea_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityEa {
    pub name: String,
    pub hash: String,
    pub n_items: usize,
    pub ea_before: f64,
    pub ea_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ReportKind,
    pub run_id: String,
    pub model_hash: String,
    /// Hash of the union plan applied for capability evaluation.
    pub plan_hash: String,
    pub dev_hash: String,
    pub test_hash: String,
    pub config: ExperimentConfig,
    pub edits: Vec<CategoryEdit>,
    /// Held-out EA per category, each under its own category's edit.
    pub categories: Vec<CategoryEa>,
    /// Capability EA under the union of all category edits.
    pub capability: Vec<CapabilityEa>,
    pub skipped: Vec<String>,
    pub plan: EditPlan,
    /// Path of an attention-shift report produced for this plan, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_shift: Option<String>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("report: {e}")))
    }

    /// Flat `category,phase,EA` table. Capability rows are prefixed with
    /// `capability:`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("category,phase,EA\n");
        let mut row = |name: &str, before: f64, after: f64| {
            s.push_str(&format!("{name},before,{before}\n{name},after,{after}\n"));
        };
        for c in &self.categories {
            row(&c.category, c.ea_before, c.ea_after);
        }
        for c in &self.capability {
            row(&format!("capability:{}", c.name), c.ea_before, c.ea_after);
        }
        s
    }

    /// Write `report.json` and `report.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        fs::write(&json, self.to_json()).map_err(|e| Error::io(&json, e))?;
        let csv = dir.join("report.csv");
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        Ok(vec![json, csv])
    }
}

fn single_group_plan(label: &str, delta: f64, neurons: Vec<NeuronId>) -> Result<EditPlan> {
    EditPlan::new(EditMode::for_deltas(&[delta]), vec![EditGroup::new(label, delta, neurons)])
}

/// Combine per-category plans. A neuron claimed by several categories keeps
/// the factor of the first one.
fn union_plan(edits: &[CategoryEdit]) -> Result<EditPlan> {
    EditPlan::union_first_claim(edits.iter().map(|e| (e.category.as_str(), e.groups.as_slice())))
}

fn hash_hex(parts: &[&str]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

#[allow(clippy::too_many_arguments)]
fn finish(
    kind: ReportKind,
    weights: &WeightStore,
    config: &ExperimentConfig,
    dev: &ScenarioSet,
    test: &ScenarioSet,
    capability: &[NamedSet],
    edits: Vec<CategoryEdit>,
    skipped: Vec<String>,
) -> Result<ExperimentReport> {
    let plans = edits
        .iter()
        .map(|e| {
            let deltas: Vec<f64> = e.groups.iter().map(|g| g.delta).collect();
            Ok((e.category.clone(), EditPlan::new(EditMode::for_deltas(&deltas), e.groups.clone())?))
        })
        .collect::<Result<Vec<_>>>()?;
    let plan = union_plan(&edits)?;
    assemble(kind, weights, config, dev, test, capability, plans, plan, edits, skipped)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    kind: ReportKind,
    weights: &WeightStore,
    config: &ExperimentConfig,
    dev: &ScenarioSet,
    test: &ScenarioSet,
    capability: &[NamedSet],
    category_plans: Vec<(String, EditPlan)>,
    plan: EditPlan,
    edits: Vec<CategoryEdit>,
    skipped: Vec<String>,
) -> Result<ExperimentReport> {
    let opts = config.grid.eval_options();
    let mut categories = Vec::new();
    for (category, cat_plan) in &category_plans {
        let items = test.category(category);
        if items.is_empty() {
            log::warn!("category {category} has no test items");
            continue;
        }
        let edited = apply_edit(weights, cat_plan)?;
        categories.push(CategoryEa {
            category: category.clone(),
            n_items: items.len(),
            ea_before: evaluate_ea(weights, &items, &opts)?,
            ea_after: evaluate_ea(&edited, &items, &opts)?,
        });
    }
    let edited = apply_edit(weights, &plan)?;
    let capability = capability
        .iter()
        .map(|c| {
            Ok(CapabilityEa {
                name: c.name.clone(),
                hash: c.set.content_hash(),
                n_items: c.set.len(),
                ea_before: evaluate_ea(weights, &c.set, &opts)?,
                ea_after: evaluate_ea(&edited, &c.set, &opts)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let model_hash = weights.content_hash();
    let plan_hash = plan.content_hash();
    let dev_hash = dev.content_hash();
    let test_hash = test.content_hash();
    let config_json = serde_json::to_string(config).expect("config serialises");
    let cap_hashes: Vec<&str> = capability.iter().map(|c| c.hash.as_str()).collect();
    let mut id_parts = vec![
        match kind {
            ReportKind::Deactivate => "deactivate",
            ReportKind::Enhance => "enhance",
        },
        model_hash.as_str(),
        plan_hash.as_str(),
        dev_hash.as_str(),
        test_hash.as_str(),
        config_json.as_str(),
    ];
    id_parts.extend(cap_hashes);
    let run_id = hash_hex(&id_parts)[..16].to_string();
    Ok(ExperimentReport {
        kind,
        run_id,
        model_hash,
        plan_hash,
        dev_hash,
        test_hash,
        config: config.clone(),
        edits,
        categories,
        capability,
        skipped,
        plan,
        attention_shift: None,
    })
}

fn check_test(test: &ScenarioSet) -> Result<()> {
    if test.is_empty() {
        return Err(Error::Config("a held-out test split is required".into()));
    }
    Ok(())
}

fn deactivation_neurons(
    weights: &WeightStore,
    ctx: &CategoryContext,
    cfg: &ExperimentConfig,
    coco: &[NeuronId],
    k: usize,
) -> Result<Vec<NeuronId>> {
    match cfg.selector {
        Selector::Coco => Ok(coco.to_vec()),
        s @ (Selector::Rand | Selector::Norm | Selector::Mact) => {
            let sc = cfg.selector_config(s, k, &ctx.category);
            Ok(select_baseline(weights, &ctx.pairs, &sc)?.neurons)
        }
        s => unreachable!("{} rejected before the category loop", s.as_str()),
    }
}

/// Per category: grid-search (τ, k) on dev, deactivate the neurons picked
/// by the configured selector at the chosen budget, and report held-out
/// and capability EA.
pub fn run_deactivation_experiment(
    weights: &WeightStore,
    config: &ExperimentConfig,
    dev: &ScenarioSet,
    test: &ScenarioSet,
    capability: &[NamedSet],
) -> Result<ExperimentReport> {
    check_test(test)?;
    if matches!(config.selector, Selector::Le | Selector::Ne) {
        return Err(Error::Config(format!(
            "selector {} builds enhancement plans; use it with an enhancement run",
            config.selector.as_str()
        )));
    }
    let opts = config.grid.eval_options();
    let (edits, skipped) = for_each_category(weights, dev, &config.grid, |ctx| {
        let best = search_category(weights, ctx, &config.grid)?;
        let neurons = deactivation_neurons(weights, ctx, config, &best.neurons, best.k)?;
        let plan = plan_deactivate(neurons)?;
        let dev_ea_after = evaluate_ea(&apply_edit(weights, &plan)?, &ctx.dev, &opts)?;
        Ok(CategoryEdit {
            category: ctx.category.clone(),
            tau: best.tau,
            k: best.k,
            groups: plan.groups().to_vec(),
            dev_ea_before: ctx.ea_orig,
            dev_ea_after,
        })
    })?;
    finish(ReportKind::Deactivate, weights, config, dev, test, capability, edits, skipped)
}

/// Evaluate a given plan: every test category and capability set, before
/// and after the edit. No search is run; `config` only supplies evaluation
/// options and is echoed in the report.
pub fn run_plan_experiment(
    weights: &WeightStore,
    plan: &EditPlan,
    config: &ExperimentConfig,
    dev: &ScenarioSet,
    test: &ScenarioSet,
    capability: &[NamedSet],
) -> Result<ExperimentReport> {
    check_test(test)?;
    let kind = if plan.mode() == EditMode::Deactivate {
        ReportKind::Deactivate
    } else {
        ReportKind::Enhance
    };
    let plans = test.categories().into_iter().map(|c| (c, plan.clone())).collect();
    assemble(kind, weights, config, dev, test, capability, plans, plan.clone(), Vec::new(), Vec::new())
}

/// Candidate plans for one category, in the order they are tried.
fn enhancement_candidates(
    weights: &WeightStore,
    ctx: &CategoryContext,
    cfg: &ExperimentConfig,
    tau: f64,
    k: usize,
) -> Result<Vec<EditPlan>> {
    let sc = cfg.selector_config(cfg.selector, k, &ctx.category);
    let deltas = &cfg.delta_grid;
    match cfg.selector {
        Selector::Le => {
            let table = ctx.table(tau, &cfg.grid)?;
            let sel = select_le(&table, &ctx.pairs, &sc)?;
            let mut plans = Vec::with_capacity(deltas.len() * deltas.len());
            for &dc in deltas {
                for &dm in deltas {
                    plans.push(plan_le(sel.coco.clone(), sel.mact.clone(), dc, dm)?);
                }
            }
            Ok(plans)
        }
        Selector::Ne => {
            let neurons = select_ne(&ctx.pairs, &sc)?;
            deltas.iter().map(|&d| single_group_plan("ne", d, neurons.clone())).collect()
        }
        Selector::Coco => {
            let neurons = extract_coco(&ctx.table(tau, &cfg.grid)?, k)?;
            deltas.iter().map(|&d| single_group_plan("coco", d, neurons.clone())).collect()
        }
        s => {
            let neurons = select_baseline(weights, &ctx.pairs, &sc)?.neurons;
            deltas.iter().map(|&d| single_group_plan(s.as_str(), d, neurons.clone())).collect()
        }
    }
}

/// Per category: take (τ, k) from the deactivation grid search, select
/// neurons with the configured selector, grid-search the scaling factors on
/// dev (highest dev EA wins, ties keep the earlier candidate), then report
/// held-out and capability EA.
pub fn run_enhancement_experiment(
    weights: &WeightStore,
    config: &ExperimentConfig,
    dev: &ScenarioSet,
    test: &ScenarioSet,
    capability: &[NamedSet],
) -> Result<ExperimentReport> {
    check_test(test)?;
    if config.delta_grid.is_empty() {
        return Err(Error::Config("delta grid must be nonempty".into()));
    }
    let opts = config.grid.eval_options();
    let (edits, skipped) = for_each_category(weights, dev, &config.grid, |ctx| {
        let best = search_category(weights, ctx, &config.grid)?;
        let mut chosen: Option<(EditPlan, f64)> = None;
        for plan in enhancement_candidates(weights, ctx, config, best.tau, best.k)? {
            let ea = evaluate_ea(&apply_edit(weights, &plan)?, &ctx.dev, &opts)?;
            if chosen.as_ref().is_none_or(|(_, b)| ea > *b) {
                chosen = Some((plan, ea));
            }
        }
        let (plan, dev_ea_after) = chosen.expect("delta grid is nonempty");
        Ok(CategoryEdit {
            category: ctx.category.clone(),
            tau: best.tau,
            k: best.k,
            groups: plan.groups().to_vec(),
            dev_ea_before: ctx.ea_orig,
            dev_ea_after,
        })
    })?;
    finish(ReportKind::Enhance, weights, config, dev, test, capability, edits, skipped)
}
