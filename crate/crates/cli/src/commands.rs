//! One function per subcommand. Each reads its inputs, runs the library,
//! and writes everything under the output directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use coco_core::attn_analysis::{attention_shift, head_tail_stat, matrix_csv, neuron_distribution};
use coco_core::editing::{plan_deactivate, plan_le, plan_ne, EditPlan};
use coco_core::harness::{
    category_context, grid_search_cross, grid_search_intra, run_deactivation_experiment, run_enhancement_experiment,
    run_plan_experiment, CategoryContext, ExperimentReport, NamedSet, ScenarioSet,
};
use coco_core::model::{
    apply_edit, gen_synthetic, load_model, save_model, ModelConfig, NeuronId, WeightStore, MANIFEST_FILE, TENSORS_FILE,
};
use coco_core::rng::sub_seed;
use coco_core::scoring::{extract_coco, select_baseline, select_le, select_ne, Selector, SelectorConfig};
use coco_core::Error;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{sanitize, OutDir};
use crate::Command;

pub fn run(command: Command, cfg: &RunConfig) -> Result<(), Error> {
    let mut out = OutDir::create(&cfg.out)?;
    let name = match command {
        Command::GenModel => {
            gen_model(cfg, &mut out)?;
            "gen-model"
        }
        Command::Score => {
            score(cfg, &mut out)?;
            "score"
        }
        Command::Extract => {
            extract(cfg, &mut out)?;
            "extract"
        }
        Command::Deactivate => {
            experiment(cfg, &mut out, false)?;
            "deactivate"
        }
        Command::Enhance => {
            experiment(cfg, &mut out, true)?;
            "enhance"
        }
        Command::Gridsearch => {
            gridsearch(cfg, &mut out)?;
            "gridsearch"
        }
        Command::AttnShift => {
            attn_shift(cfg, &mut out)?;
            "attn-shift"
        }
        Command::Report => {
            report(cfg, &mut out)?;
            "report"
        }
    };
    out.finish(name)
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serialises");
    s.push('\n');
    s
}

fn load_weights(cfg: &RunConfig) -> Result<WeightStore, Error> {
    load_model(cfg.require_model()?)
}

fn load_dev_test(cfg: &RunConfig) -> Result<(ScenarioSet, ScenarioSet), Error> {
    ScenarioSet::load(cfg.require_scenarios()?)?.split_dev_test(cfg.seed)
}

fn load_capability(cfg: &RunConfig) -> Result<Vec<NamedSet>, Error> {
    cfg.capability
        .iter()
        .map(|p| {
            Ok(NamedSet {
                name: p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                set: ScenarioSet::load(p)?,
            })
        })
        .collect()
}

fn load_plan(cfg: &RunConfig) -> Result<Option<EditPlan>, Error> {
    cfg.plan.as_deref().map(EditPlan::load).transpose()
}

/// Contexts of every category whose dev split partitions; the rest are
/// skipped with a warning.
fn contexts(weights: &WeightStore, dev: &ScenarioSet, cfg: &RunConfig) -> Result<(Vec<CategoryContext>, Vec<String>), Error> {
    let mut ok = Vec::new();
    let mut skipped = Vec::new();
    for cat in dev.categories() {
        match category_context(weights, dev, &cat, &cfg.experiment.grid) {
            Ok(c) => ok.push(c),
            Err(Error::Partition(msg)) => {
                log::warn!("skipping category {cat}: {msg}");
                skipped.push(cat);
            }
            Err(e) => return Err(e),
        }
    }
    if ok.is_empty() {
        return Err(Error::Partition("no category has both biased and unbiased dev items".into()));
    }
    Ok((ok, skipped))
}

fn gen_model(cfg: &RunConfig, out: &mut OutDir) -> Result<(), Error> {
    let config = ModelConfig::new(cfg.layers, cfg.heads, cfg.dmodel, cfg.vocab, cfg.max_seq)?;
    let weights = gen_synthetic(&config, cfg.seed)?;
    save_model(&weights, out.path("model"))?;
    out.record(Path::new("model").join(MANIFEST_FILE));
    out.record(Path::new("model").join(TENSORS_FILE));
    out.write("model.sha256", format!("{}\n", weights.content_hash()))
}

#[derive(Serialize)]
struct ScoreCategory {
    category: String,
    minus: Vec<String>,
    plus: Vec<String>,
    dropped: Vec<String>,
    ea_orig: f64,
    tables: Vec<String>,
}

#[derive(Serialize)]
struct ScoreSummary {
    model_hash: String,
    dev_hash: String,
    tau_grid: Vec<f64>,
    categories: Vec<ScoreCategory>,
    skipped: Vec<String>,
}

fn score(cfg: &RunConfig, out: &mut OutDir) -> Result<(), Error> {
    let weights = load_weights(cfg)?;
    let (dev, _) = load_dev_test(cfg)?;
    let grid = &cfg.experiment.grid;
    let (ctxs, skipped) = contexts(&weights, &dev, cfg)?;
    let ids = |items: &[coco_core::harness::ScenarioItem]| items.iter().map(|i| i.id.clone()).collect::<Vec<_>>();
    let mut categories = Vec::new();
    for c in &ctxs {
        let dir = sanitize(&c.category);
        out.write(&format!("responses/{dir}.json"), pretty(&c.pairs))?;
        let mut tables = Vec::new();
        for &tau in &grid.tau_grid {
            let rel = format!("scores/{dir}/tau-{tau}.json");
            out.write(&rel, c.table(tau, grid)?.to_json())?;
            tables.push(rel);
        }
        categories.push(ScoreCategory {
            category: c.category.clone(),
            minus: ids(&c.partition.minus),
            plus: ids(&c.partition.plus),
            dropped: c.partition.dropped.clone(),
            ea_orig: c.ea_orig,
            tables,
        });
    }
    let summary = ScoreSummary {
        model_hash: weights.content_hash(),
        dev_hash: dev.content_hash(),
        tau_grid: grid.tau_grid.clone(),
        categories,
        skipped,
    };
    out.write("score.json", pretty(&summary))
}

#[derive(Serialize)]
struct CategorySelection {
    category: String,
    groups: Vec<(String, Vec<NeuronId>)>,
    fallback: bool,
}

#[derive(Serialize)]
struct SelectionSummary {
    selector: Selector,
    tau: f64,
    k: usize,
    delta: f64,
    categories: Vec<CategorySelection>,
    skipped: Vec<String>,
}

/// Selection and edit plan for one category at a fixed τ, k and Δ.
fn select_category(
    weights: &WeightStore,
    c: &CategoryContext,
    cfg: &RunConfig,
    tau: f64,
    k: usize,
    delta: f64,
) -> Result<(CategorySelection, EditPlan), Error> {
    let exp = &cfg.experiment;
    let sc = SelectorConfig {
        selector: exp.selector,
        theta: exp.theta,
        k,
        dispersion_cap: exp.dispersion_cap.unwrap_or(f64::INFINITY),
        seed: sub_seed(exp.grid.seed, &format!("select/{}", c.category)),
    };
    let sel = |groups: Vec<(&str, Vec<NeuronId>)>, fallback| CategorySelection {
        category: c.category.clone(),
        groups: groups.into_iter().map(|(l, n)| (l.to_string(), n)).collect(),
        fallback,
    };
    Ok(match exp.selector {
        Selector::Coco => {
            let n = extract_coco(&c.table(tau, &exp.grid)?, k)?;
            (sel(vec![("coco", n.clone())], false), plan_deactivate(n)?)
        }
        Selector::Rand | Selector::Norm | Selector::Mact => {
            let b = select_baseline(weights, &c.pairs, &sc)?;
            (sel(vec![(exp.selector.as_str(), b.neurons.clone())], b.fallback), plan_deactivate(b.neurons)?)
        }
        Selector::Ne => {
            let n = select_ne(&c.pairs, &sc)?;
            (sel(vec![("ne", n.clone())], false), plan_ne(n, delta)?)
        }
        Selector::Le => {
            let le = select_le(&c.table(tau, &exp.grid)?, &c.pairs, &sc)?;
            let plan = plan_le(le.coco.clone(), le.mact.clone(), delta, delta)?;
            (sel(vec![("coco", le.coco), ("mact", le.mact)], le.mact_fallback), plan)
        }
    })
}

fn extract(cfg: &RunConfig, out: &mut OutDir) -> Result<(), Error> {
    let weights = load_weights(cfg)?;
    let (dev, _) = load_dev_test(cfg)?;
    let grid = &cfg.experiment.grid;
    let tau = grid.tau_grid[0];
    let k = grid.k_grid[0].resolve(weights.config().neuron_count())?;
    let delta = match cfg.experiment.selector {
        Selector::Le | Selector::Ne => cfg.experiment.delta_grid[0],
        _ => -1.0,
    };
    let (ctxs, skipped) = contexts(&weights, &dev, cfg)?;
    let mut categories = Vec::new();
    let mut plans = Vec::new();
    for c in &ctxs {
        let (s, plan) = select_category(&weights, c, cfg, tau, k, delta)?;
        out.write(&format!("plans/{}.json", sanitize(&c.category)), plan.to_json())?;
        categories.push(s);
        plans.push((c.category.clone(), plan));
    }
    let union = EditPlan::union_first_claim(plans.iter().map(|(n, p)| (n.as_str(), p.groups())))?;
    out.write("plan.json", union.to_json())?;
    let selected: Vec<NeuronId> = union.neurons().into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    out.write("distribution.csv", neuron_distribution(&selected, weights.config())?.to_csv())?;
    let summary = SelectionSummary {
        selector: cfg.experiment.selector,
        tau,
        k,
        delta,
        categories,
        skipped,
    };
    out.write("selection.json", pretty(&summary))
}

fn experiment(cfg: &RunConfig, out: &mut OutDir, enhance: bool) -> Result<(), Error> {
    let weights = load_weights(cfg)?;
    let (dev, test) = load_dev_test(cfg)?;
    let capability = load_capability(cfg)?;
    let exp = &cfg.experiment;
    let report = match load_plan(cfg)? {
        Some(plan) => run_plan_experiment(&weights, &plan, exp, &dev, &test, &capability)?,
        None if enhance => run_enhancement_experiment(&weights, exp, &dev, &test, &capability)?,
        None => run_deactivation_experiment(&weights, exp, &dev, &test, &capability)?,
    };
    out.write("report.json", report.to_json())?;
    out.write("report.csv", report.to_csv())?;
    out.write("plan.json", report.plan.to_json())
}

fn gridsearch(cfg: &RunConfig, out: &mut OutDir) -> Result<(), Error> {
    let weights = load_weights(cfg)?;
    let (dev, _) = load_dev_test(cfg)?;
    let intra = grid_search_intra(&weights, &dev, &cfg.experiment.grid)?;
    let cross = grid_search_cross(&intra, &weights, &dev)?;
    out.write("gridsearch.json", cross.to_json())
}

fn attn_shift(cfg: &RunConfig, out: &mut OutDir) -> Result<(), Error> {
    let weights = load_weights(cfg)?;
    let plan = load_plan(cfg)?.ok_or_else(|| Error::Config("attn-shift needs --plan".into()))?;
    let set = ScenarioSet::load(cfg.require_scenarios()?)?;
    let edited = apply_edit(&weights, &plan)?;
    let prompts: Vec<Vec<u32>> = set.items.iter().map(|i| i.prompt.clone()).collect();
    let report = attention_shift(&weights, &edited, &prompts, cfg.top_heads, cfg.jobs)?;
    out.write("attention_shift.json", report.to_json())?;
    out.write("heads.csv", report.heads_csv())?;
    for t in &report.top {
        for b in &t.buckets {
            out.write(
                &format!("delta/layer{}_head{}_len{}.csv", t.layer, t.head, b.seq_len),
                matrix_csv(&b.mean_delta),
            )?;
        }
    }
    let mut ht = String::from("layer,head,seq_len,first_col_mean,last_col_mean,trade_off\n");
    for h in head_tail_stat(&report) {
        ht.push_str(&format!(
            "{},{},{},{},{},{}\n",
            h.layer, h.head, h.seq_len, h.first_col_mean, h.last_col_mean, h.trade_off
        ));
    }
    out.write("head_tail.csv", ht)?;
    out.write("distribution.csv", neuron_distribution(&plan.neurons(), weights.config())?.to_csv())
}

fn report(cfg: &RunConfig, out: &mut OutDir) -> Result<(), Error> {
    let path = cfg
        .report
        .as_deref()
        .ok_or_else(|| Error::Config("report needs --report".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let summary = summarize(&ExperimentReport::from_json(&text)?);
    print!("{summary}");
    out.write("summary.txt", summary)
}

fn summarize(r: &ExperimentReport) -> String {
    let mut s = format!(
        "run {} ({:?}, selector {})\nplan: {} neuron(s) in {} group(s)\n",
        r.run_id,
        r.kind,
        r.config.selector.as_str(),
        r.plan.neurons().len(),
        r.plan.groups().len()
    );
    s.push_str(&format!("{:<24} {:>6} {:>9} {:>9} {:>9}\n", "set", "items", "before", "after", "change"));
    let row = |name: &str, n: usize, before: f64, after: f64| {
        format!("{name:<24} {n:>6} {before:>9.2} {after:>9.2} {:>+9.2}\n", after - before)
    };
    for c in &r.categories {
        s.push_str(&row(&c.category, c.n_items, c.ea_before, c.ea_after));
    }
    for c in &r.capability {
        s.push_str(&row(&format!("capability:{}", c.name), c.n_items, c.ea_before, c.ea_after));
    }
    if !r.skipped.is_empty() {
        s.push_str(&format!("skipped: {}\n", r.skipped.join(", ")));
    }
    s
}
