//! How an edit moves attention.
//!
//! For every scenario and head, `ΔA = Â - A` is the post-softmax attention
//! of the edited model minus that of the base model. Heads are ranked by
//! the mean entrywise L1 norm of `ΔA`. Mean `ΔA` matrices are kept for the
//! top heads, one per prompt length, since matrices of different sizes
//! cannot be averaged.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward, Capture, MatrixKind, ModelConfig, NeuronId, WeightStore};
use crate::parallel::par_map;
use crate::tensor::{self, Matrix};

/// `ΔA[layer][head]` for one token sequence.
pub fn attention_deltas(base: &WeightStore, edited: &WeightStore, tokens: &[u32]) -> Result<Vec<Vec<Matrix>>> {
    check_compatible(base.config(), edited.config())?;
    let a = forward(base, tokens, Capture::attention())?.attention.expect("attention captured");
    let b = forward(edited, tokens, Capture::attention())?.attention.expect("attention captured");
    a.iter()
        .zip(&b)
        .map(|(la, lb)| la.iter().zip(lb).map(|(x, y)| tensor::sub(y, x)).collect())
        .collect()
}

fn check_compatible(a: &ModelConfig, b: &ModelConfig) -> Result<()> {
    let shape = |c: &ModelConfig| (c.n_layers, c.n_heads, c.d_model, c.d_head, c.d_ff, c.vocab_size, c.max_seq);
    if shape(a) != shape(b) {
        return Err(Error::Input(format!(
            "base and edited models differ in shape: {:?} vs {:?}",
            shape(a),
            shape(b)
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadShift {
    pub layer: usize,
    pub head: usize,
    /// Mean over scenarios of `||ΔA||_1`.
    pub l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketShift {
    pub seq_len: usize,
    pub n_scenarios: usize,
    pub mean_delta: Matrix,
    pub first_col_mean: f64,
    pub last_col_mean: f64,
    pub trade_off: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopHead {
    pub layer: usize,
    pub head: usize,
    pub l1: f64,
    pub buckets: Vec<BucketShift>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionShiftReport {
    pub n_scenarios: usize,
    /// Every head, layer-major.
    pub heads: Vec<HeadShift>,
    /// Heads with the largest shift, largest first; ties by (layer, head).
    pub top: Vec<TopHead>,
    /// True when every head's shift is exactly zero.
    pub no_shift: bool,
}

impl AttentionShiftReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    /// `layer,head,l1` for every head.
    pub fn heads_csv(&self) -> String {
        let mut s = String::from("layer,head,l1\n");
        for h in &self.heads {
            s.push_str(&format!("{},{},{}\n", h.layer, h.head, h.l1));
        }
        s
    }
}

/// Mean of column 0 and of the last column over all rows, and whether
/// attention moved towards the first token and away from the last.
pub fn head_tail(delta: &Matrix) -> (f64, f64, bool) {
    let n = delta.rows();
    if n == 0 || delta.cols() == 0 {
        return (0.0, 0.0, false);
    }
    let first = tensor::mean(&delta.column(0));
    let last = tensor::mean(&delta.column(delta.cols() - 1));
    (first, last, first > 0.0 && last < 0.0)
}

/// Compare attention of `base` and `edited` over `scenarios`.
pub fn attention_shift(
    base: &WeightStore,
    edited: &WeightStore,
    scenarios: &[Vec<u32>],
    top_k: usize,
    jobs: usize,
) -> Result<AttentionShiftReport> {
    check_compatible(base.config(), edited.config())?;
    if scenarios.is_empty() {
        return Err(Error::Input("attention shift needs at least one scenario".into()));
    }
    let cfg = base.config();
    let deltas = par_map(jobs, scenarios, |s| attention_deltas(base, edited, s))?;
    let mut heads = Vec::with_capacity(cfg.n_layers * cfg.n_heads);
    for l in 0..cfg.n_layers {
        for h in 0..cfg.n_heads {
            let total: f64 = deltas.iter().map(|d| tensor::l1_norm(&d[l][h])).sum();
            heads.push(HeadShift {
                layer: l,
                head: h,
                l1: total / scenarios.len() as f64,
            });
        }
    }
    let no_shift = heads.iter().all(|h| h.l1 == 0.0);
    let mut ranked: Vec<&HeadShift> = heads.iter().collect();
    ranked.sort_by(|a, b| b.l1.total_cmp(&a.l1).then((a.layer, a.head).cmp(&(b.layer, b.head))));
    let top = ranked
        .into_iter()
        .take(top_k)
        .map(|hs| {
            let mut by_len: BTreeMap<usize, (usize, Matrix)> = BTreeMap::new();
            for d in &deltas {
                let m = &d[hs.layer][hs.head];
                let entry = by_len
                    .entry(m.rows())
                    .or_insert_with(|| (0, Matrix::zeros(m.rows(), m.cols())));
                entry.0 += 1;
                entry.1 = tensor::add(&entry.1, m)?;
            }
            let buckets = by_len
                .into_iter()
                .map(|(seq_len, (n, sum))| {
                    let mut mean_delta = sum;
                    mean_delta.scale_in_place(1.0 / n as f64);
                    let (first_col_mean, last_col_mean, trade_off) = head_tail(&mean_delta);
                    BucketShift {
                        seq_len,
                        n_scenarios: n,
                        mean_delta,
                        first_col_mean,
                        last_col_mean,
                        trade_off,
                    }
                })
                .collect();
            Ok(TopHead {
                layer: hs.layer,
                head: hs.head,
                l1: hs.l1,
                buckets,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttentionShiftReport {
        n_scenarios: scenarios.len(),
        heads,
        top,
        no_shift,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadTail {
    pub layer: usize,
    pub head: usize,
    pub seq_len: usize,
    pub first_col_mean: f64,
    pub last_col_mean: f64,
    pub trade_off: bool,
}

/// Head-tail statistic of every top head and prompt length in `report`.
pub fn head_tail_stat(report: &AttentionShiftReport) -> Vec<HeadTail> {
    report
        .top
        .iter()
        .flat_map(|t| {
            t.buckets.iter().map(move |b| HeadTail {
                layer: t.layer,
                head: t.head,
                seq_len: b.seq_len,
                first_col_mean: b.first_col_mean,
                last_col_mean: b.last_col_mean,
                trade_off: b.trade_off,
            })
        })
        .collect()
}

/// Comma-separated rows of `m`, for heatmap tools.
pub fn matrix_csv(m: &Matrix) -> String {
    let mut s = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionCell {
    pub layer: usize,
    pub kind: MatrixKind,
    pub count: usize,
    pub percent: f64,
}

/// Where selected neurons sit, per (layer, Q/K/V).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronDistribution {
    pub total: usize,
    /// Set when nothing was selected; percentages are then all zero.
    pub empty: bool,
    pub cells: Vec<DistributionCell>,
}

impl NeuronDistribution {
    /// `layer,kind,count,percent`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,kind,count,percent\n");
        for c in &self.cells {
            s.push_str(&format!("{},{},{},{}\n", c.layer, c.kind.as_str(), c.count, c.percent));
        }
        s
    }
}

pub fn neuron_distribution(selected: &[NeuronId], config: &ModelConfig) -> Result<NeuronDistribution> {
    let mut counts = BTreeMap::new();
    for n in selected {
        config.check_neuron(n)?;
        *counts.entry((n.layer, n.kind)).or_insert(0usize) += 1;
    }
    let total = selected.len();
    let mut cells = Vec::with_capacity(config.n_layers * 3);
    for layer in 0..config.n_layers {
        for kind in MatrixKind::ALL {
            let count = counts.get(&(layer, kind)).copied().unwrap_or(0);
            let percent = if total == 0 {
                0.0
            } else {
                100.0 * count as f64 / total as f64
            };
            cells.push(DistributionCell {
                layer,
                kind,
                count,
                percent,
            });
        }
    }
    Ok(NeuronDistribution {
        total,
        empty: total == 0,
        cells,
    })
}
