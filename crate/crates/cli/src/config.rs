//! Run configuration: an optional JSON file overlaid by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use coco_core::harness::{ExperimentConfig, GridConfig, KSpec};
use coco_core::scoring::{Selector, SimilarityConvention};
use coco_core::Error;
use serde::Deserialize;

use crate::Flags;

/// Keys of the `--config` file. Each one mirrors the flag of the same name.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub model: Option<PathBuf>,
    pub scenarios: Option<PathBuf>,
    #[serde(default)]
    pub capability: Vec<PathBuf>,
    pub plan: Option<PathBuf>,
    pub report: Option<PathBuf>,
    #[serde(default)]
    pub tau: Vec<f64>,
    #[serde(default)]
    pub k: Vec<KSpec>,
    #[serde(default)]
    pub delta: Vec<f64>,
    pub selector: Option<Selector>,
    pub similarity: Option<SimilarityConvention>,
    pub theta: Option<f64>,
    pub dispersion_cap: Option<f64>,
    pub length_normalized: Option<bool>,
    pub top_heads: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub layers: Option<usize>,
    pub heads: Option<usize>,
    pub dmodel: Option<usize>,
    pub vocab: Option<usize>,
    pub max_seq: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: FileConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        // Relative paths in the file are relative to the file itself.
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut cfg.model, &mut cfg.scenarios, &mut cfg.plan, &mut cfg.report, &mut cfg.out]
            .into_iter()
            .flatten()
        {
            rebase(p);
        }
        cfg.capability.iter_mut().for_each(rebase);
        Ok(cfg)
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: Option<PathBuf>,
    pub scenarios: Option<PathBuf>,
    pub capability: Vec<PathBuf>,
    pub plan: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub jobs: usize,
    pub top_heads: usize,
    pub experiment: ExperimentConfig,
    pub layers: usize,
    pub heads: usize,
    pub dmodel: usize,
    pub vocab: usize,
    pub max_seq: usize,
}

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

fn pick_list<T>(flag: Vec<T>, file: Vec<T>) -> Vec<T> {
    if flag.is_empty() {
        file
    } else {
        flag
    }
}

fn existing(p: Option<PathBuf>, what: &str) -> Result<Option<PathBuf>, Error> {
    match p {
        Some(p) if !p.exists() => Err(Error::Config(format!("{what} {} does not exist", p.display()))),
        other => Ok(other),
    }
}

impl RunConfig {
    pub fn resolve(flags: &Flags) -> Result<Self, Error> {
        let file = match &flags.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let defaults = ExperimentConfig::default();
        let seed = pick(flags.seed, file.seed).unwrap_or(0);
        let jobs = pick(flags.jobs, file.jobs).unwrap_or(1).max(1);
        let tau_grid = pick_list(flags.tau.clone(), file.tau);
        let k_grid = pick_list(flags.k.clone(), file.k);
        let delta_grid = pick_list(flags.delta.clone(), file.delta);
        let grid = GridConfig {
            tau_grid: if tau_grid.is_empty() { defaults.grid.tau_grid } else { tau_grid },
            k_grid: if k_grid.is_empty() { defaults.grid.k_grid } else { k_grid },
            similarity: pick(flags.similarity, file.similarity).unwrap_or_default(),
            seed,
            length_normalized: flags.length_normalized || file.length_normalized.unwrap_or(false),
            jobs,
        };
        grid.validate()?;
        let experiment = ExperimentConfig {
            grid,
            delta_grid: if delta_grid.is_empty() { defaults.delta_grid } else { delta_grid },
            selector: pick(flags.selector, file.selector).unwrap_or(Selector::Coco),
            theta: pick(flags.theta, file.theta).unwrap_or(defaults.theta),
            dispersion_cap: pick(flags.dispersion_cap, file.dispersion_cap),
        };
        if experiment.delta_grid.iter().any(|d| !d.is_finite() || *d < -1.0) {
            return Err(Error::Config("every delta must be finite and >= -1".into()));
        }
        let out = pick(flags.out.clone(), file.out)
            .ok_or_else(|| Error::Config("no output directory: pass --out or set COCO_FORGE_OUT".into()))?;
        Ok(Self {
            model: existing(pick(flags.model.clone(), file.model), "model")?,
            scenarios: existing(pick(flags.scenarios.clone(), file.scenarios), "scenario file")?,
            capability: pick_list(flags.capability.clone(), file.capability)
                .into_iter()
                .map(|p| existing(Some(p), "capability file").map(Option::unwrap))
                .collect::<Result<_, _>>()?,
            plan: existing(pick(flags.plan.clone(), file.plan), "plan")?,
            report: existing(pick(flags.report.clone(), file.report), "report")?,
            out,
            seed,
            jobs,
            top_heads: pick(flags.top_heads, file.top_heads).unwrap_or(3),
            experiment,
            layers: pick(flags.layers, file.layers).unwrap_or(4),
            heads: pick(flags.heads, file.heads).unwrap_or(4),
            dmodel: pick(flags.dmodel, file.dmodel).unwrap_or(32),
            vocab: pick(flags.vocab, file.vocab).unwrap_or(64),
            max_seq: pick(flags.max_seq, file.max_seq).unwrap_or(16),
        })
    }

    pub fn require_model(&self) -> Result<&Path, Error> {
        self.model
            .as_deref()
            .ok_or_else(|| Error::Config("this command needs --model".into()))
    }

    pub fn require_scenarios(&self) -> Result<&Path, Error> {
        self.scenarios
            .as_deref()
            .ok_or_else(|| Error::Config("this command needs --scenarios".into()))
    }
}
