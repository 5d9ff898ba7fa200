//! Scenario ingestion, exact-accuracy evaluation, X-/X+ partitioning, grid
//! search and experiment reports.

mod experiment;
mod grid;

pub use experiment::{
    run_deactivation_experiment, run_enhancement_experiment, run_plan_experiment, CapabilityEa, CategoryEa,
    CategoryEdit, ExperimentConfig, ExperimentReport, NamedSet, ReportKind,
};
pub use grid::{
    category_context, grid_search_cross, grid_search_intra, CategoryContext, CategoryResult,
    CrossResult, GridCell, GridConfig, GridSearchResult, KSpec,
};

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward, Capture, WeightStore};
use crate::parallel::par_map;
use crate::rng;
use crate::tensor::log_sum_exp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Biased,
    Unbiased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Dev,
    Test,
}

/// One multiple-choice item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioItem {
    pub id: String,
    pub category: String,
    pub prompt: Vec<u32>,
    pub options: Vec<Vec<u32>>,
    pub unbiased_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarity: Option<Polarity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl ScenarioItem {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Data(format!("item {:?}: {m}", self.id)));
        if self.id.is_empty() {
            return bad("empty id");
        }
        if self.prompt.is_empty() {
            return bad("empty prompt");
        }
        if self.options.len() < 2 {
            return bad("needs at least two options");
        }
        if self.options.iter().any(|o| o.is_empty()) {
            return bad("empty option");
        }
        if self.unbiased_index >= self.options.len() {
            return bad("unbiased_index out of range");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub items: Vec<ScenarioItem>,
    pub split: Option<Split>,
}

impl ScenarioSet {
    /// Validate every item and check ids are unique.
    pub fn new(items: Vec<ScenarioItem>, split: Option<Split>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for it in &items {
            it.validate()?;
            if !ids.insert(it.id.as_str()) {
                return Err(Error::Data(format!("duplicate item id {:?}", it.id)));
            }
        }
        Ok(Self { items, split })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Categories in order of first appearance.
    pub fn categories(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.items
            .iter()
            .filter(|it| seen.insert(it.category.as_str()))
            .map(|it| it.category.clone())
            .collect()
    }

    pub fn category(&self, name: &str) -> ScenarioSet {
        ScenarioSet {
            items: self.items.iter().filter(|it| it.category == name).cloned().collect(),
            split: self.split,
        }
    }

    /// Parse JSON Lines. Blank lines are skipped; a malformed line is a
    /// format error carrying the byte offset of the problem.
    pub fn from_jsonl(text: &str, path: &Path) -> Result<Self> {
        let mut items = Vec::new();
        let mut offset = 0usize;
        for line in text.split_inclusive('\n') {
            let body = line.trim_end_matches(['\n', '\r']);
            if !body.trim().is_empty() {
                let item: ScenarioItem = serde_json::from_str(body).map_err(|e| Error::Format {
                    path: path.to_path_buf(),
                    offset: (offset + e.column().saturating_sub(1)) as u64,
                    message: e.to_string(),
                })?;
                items.push(item);
            }
            offset += line.len();
        }
        Self::new(items, None)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text, path)
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for it in &self.items {
            s.push_str(&serde_json::to_string(it).expect("item serialises"));
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    /// Hex SHA-256 of the JSONL encoding.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }

    /// Dev/test split. Items that carry a `split` field are used as-is
    /// (then every item must carry one). Otherwise each category is
    /// shuffled with the `"split/<category>"` stream of `seed` and 30% of it
    /// (at least one item when the category has two or more) goes to test.
    pub fn split_dev_test(&self, seed: u64) -> Result<(ScenarioSet, ScenarioSet)> {
        let labelled = self.items.iter().filter(|it| it.split.is_some()).count();
        let (mut dev, mut test) = (Vec::new(), Vec::new());
        if labelled > 0 {
            if labelled != self.items.len() {
                return Err(Error::Data(format!(
                    "{labelled} of {} items carry a split field; label all or none",
                    self.items.len()
                )));
            }
            for it in &self.items {
                match it.split {
                    Some(Split::Dev) => dev.push(it.clone()),
                    _ => test.push(it.clone()),
                }
            }
        } else {
            for cat in self.categories() {
                let members: Vec<&ScenarioItem> =
                    self.items.iter().filter(|it| it.category == cat).collect();
                let n = members.len();
                let n_test = if n >= 2 {
                    ((n as f64 * 0.3).round() as usize).clamp(1, n - 1)
                } else {
                    0
                };
                let mut r = rng::stream(seed, &format!("split/{cat}"));
                let order = index::sample(&mut r, n, n).into_vec();
                let test_idx: BTreeSet<usize> = order[..n_test].iter().copied().collect();
                for (i, it) in members.into_iter().enumerate() {
                    let mut it = it.clone();
                    if test_idx.contains(&i) {
                        it.split = Some(Split::Test);
                        test.push(it);
                    } else {
                        it.split = Some(Split::Dev);
                        dev.push(it);
                    }
                }
            }
        }
        Ok((
            ScenarioSet::new(dev, Some(Split::Dev))?,
            ScenarioSet::new(test, Some(Split::Test))?,
        ))
    }
}

/// Options for multiple-choice scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Divide each option's log-probability by its token count.
    #[serde(default)]
    pub length_normalized: bool,
    /// Worker threads; never affects results.
    #[serde(skip)]
    pub jobs: usize,
}

/// Log-probability of `option` following `prompt` under teacher forcing.
pub fn option_log_prob(weights: &WeightStore, prompt: &[u32], option: &[u32], length_normalized: bool) -> Result<f64> {
    if option.is_empty() {
        return Err(Error::Input("empty option".into()));
    }
    let mut tokens = prompt.to_vec();
    tokens.extend_from_slice(&option[..option.len() - 1]);
    let mut total = 0.0;
    if option.len() == 1 {
        let logits = forward(weights, &tokens, Capture::NONE)?.logits;
        total = log_prob_at(&logits, option[0]);
    } else {
        let capture = Capture {
            all_logits: true,
            ..Capture::NONE
        };
        let all = forward(weights, &tokens, capture)?.all_logits.expect("all logits captured");
        for (i, tok) in option.iter().enumerate() {
            total += log_prob_at(all.row(prompt.len() - 1 + i), *tok);
        }
    }
    Ok(if length_normalized {
        total / option.len() as f64
    } else {
        total
    })
}

fn log_prob_at(logits: &[f64], tok: u32) -> f64 {
    logits[tok as usize] - log_sum_exp(logits)
}

/// Index of the best-scoring option; ties go to the lowest index.
pub fn predict(weights: &WeightStore, item: &ScenarioItem, length_normalized: bool) -> Result<usize> {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, opt) in item.options.iter().enumerate() {
        let s = option_log_prob(weights, &item.prompt, opt, length_normalized)?;
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    Ok(best)
}

/// Per-item correctness, in item order.
pub fn correctness(weights: &WeightStore, items: &[ScenarioItem], opts: &EvalOptions) -> Result<Vec<bool>> {
    par_map(opts.jobs, items, |it| {
        Ok(predict(weights, it, opts.length_normalized)? == it.unbiased_index)
    })
}

/// Exact accuracy in percent.
pub fn evaluate_ea(weights: &WeightStore, scenarios: &ScenarioSet, opts: &EvalOptions) -> Result<f64> {
    if scenarios.is_empty() {
        return Err(Error::Config("cannot evaluate EA on an empty scenario set".into()));
    }
    let hits = correctness(weights, &scenarios.items, opts)?.into_iter().filter(|c| *c).count();
    Ok(100.0 * hits as f64 / scenarios.len() as f64)
}

/// X- and X+ at a common size `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub minus: Vec<ScenarioItem>,
    pub plus: Vec<ScenarioItem>,
    /// Ids removed by subsampling the larger side.
    pub dropped: Vec<String>,
}

impl Partition {
    pub fn k(&self) -> usize {
        self.minus.len()
    }

    pub fn prompts_minus(&self) -> Vec<Vec<u32>> {
        self.minus.iter().map(|it| it.prompt.clone()).collect()
    }

    pub fn prompts_plus(&self) -> Vec<Vec<u32>> {
        self.plus.iter().map(|it| it.prompt.clone()).collect()
    }
}

/// Split items into biased (X-) and unbiased (X+) behaviour. Explicit
/// polarity labels are used as-is; unlabelled items are X- when the model
/// does not pick the unbiased option. The larger side is subsampled to the
/// size of the smaller with the `"partition/<label>"` stream of `seed`;
/// kept items stay in input order.
pub fn partition_scenarios(
    weights: &WeightStore,
    items: &[ScenarioItem],
    seed: u64,
    label: &str,
    opts: &EvalOptions,
) -> Result<Partition> {
    let unlabelled: Vec<ScenarioItem> = items.iter().filter(|it| it.polarity.is_none()).cloned().collect();
    let predicted = correctness(weights, &unlabelled, opts)?;
    let mut pred = predicted.into_iter();
    let (mut minus, mut plus) = (Vec::new(), Vec::new());
    for it in items {
        let biased = match it.polarity {
            Some(p) => p == Polarity::Biased,
            None => !pred.next().expect("one prediction per unlabelled item"),
        };
        if biased {
            minus.push(it.clone());
        } else {
            plus.push(it.clone());
        }
    }
    if minus.is_empty() || plus.is_empty() {
        return Err(Error::Partition(format!(
            "{label}: {} biased and {} unbiased items; both sides must be nonempty",
            minus.len(),
            plus.len()
        )));
    }
    let k = minus.len().min(plus.len());
    let mut r = rng::stream(seed, &format!("partition/{label}"));
    let mut dropped = Vec::new();
    let mut shrink = |side: &mut Vec<ScenarioItem>| {
        if side.len() > k {
            let keep: BTreeSet<usize> = index::sample(&mut r, side.len(), k).into_iter().collect();
            let all = std::mem::take(side);
            for (i, it) in all.into_iter().enumerate() {
                if keep.contains(&i) {
                    side.push(it);
                } else {
                    dropped.push(it.id);
                }
            }
        }
    };
    shrink(&mut minus);
    shrink(&mut plus);
    Ok(Partition { minus, plus, dropped })
}
