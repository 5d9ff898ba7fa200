//! Edit plans: which neuron columns to rescale and by how much.
//!
//! A plan is a list of labelled groups, each carrying its own scaling
//! factor `delta`; a column `N` becomes `N + N * delta`. `delta = -1`
//! deactivates the neuron. Plans are always expressed against the base
//! model and are applied with [`crate::model::apply_edit`].

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NeuronId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditMode {
    /// Every group has `delta == -1`.
    Deactivate,
    /// Every group has `delta >= 0`.
    Enhance,
    /// Any `delta >= -1`; used for inverse edits and free-form scaling.
    Scale,
}

impl EditMode {
    /// The narrowest mode that admits all of `deltas`.
    pub fn for_deltas(deltas: &[f64]) -> EditMode {
        if !deltas.is_empty() && deltas.iter().all(|d| *d == -1.0) {
            EditMode::Deactivate
        } else if deltas.iter().all(|d| *d >= 0.0) {
            EditMode::Enhance
        } else {
            EditMode::Scale
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditGroup {
    pub label: String,
    pub delta: f64,
    pub neurons: Vec<NeuronId>,
}

impl EditGroup {
    pub fn new(label: impl Into<String>, delta: f64, neurons: Vec<NeuronId>) -> Self {
        Self {
            label: label.into(),
            delta,
            neurons,
        }
    }
}

/// One neuron with the factor it will be scaled by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronDelta {
    pub neuron: NeuronId,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditPlan {
    mode: EditMode,
    groups: Vec<EditGroup>,
}

impl EditPlan {
    pub fn new(mode: EditMode, groups: Vec<EditGroup>) -> Result<Self> {
        let plan = Self { mode, groups };
        plan.validate()?;
        Ok(plan)
    }

    /// A plan that edits nothing.
    pub fn empty() -> Self {
        Self {
            mode: EditMode::Enhance,
            groups: Vec::new(),
        }
    }

    pub fn mode(&self) -> EditMode {
        self.mode
    }

    pub fn groups(&self) -> &[EditGroup] {
        &self.groups
    }

    pub fn is_empty(&self) -> bool {
        self.groups.iter().all(|g| g.neurons.is_empty())
    }

    /// All listed neurons, sorted.
    pub fn neurons(&self) -> Vec<NeuronId> {
        let set: BTreeSet<NeuronId> = self
            .groups
            .iter()
            .flat_map(|g| g.neurons.iter().copied())
            .collect();
        set.into_iter().collect()
    }

    pub fn neuron_deltas(&self) -> impl Iterator<Item = NeuronDelta> + '_ {
        self.groups.iter().flat_map(|g| {
            g.neurons.iter().map(move |n| NeuronDelta {
                neuron: *n,
                delta: g.delta,
            })
        })
    }

    /// Check the plan invariants: finite deltas `>= -1`, mode constraints,
    /// and pairwise-disjoint neuron sets.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for g in &self.groups {
            if !g.delta.is_finite() || g.delta < -1.0 {
                return Err(Error::Plan(format!(
                    "group {:?} has delta {} (must be finite and >= -1)",
                    g.label, g.delta
                )));
            }
            match self.mode {
                EditMode::Deactivate if g.delta != -1.0 => {
                    return Err(Error::Plan(format!(
                        "deactivate plan group {:?} has delta {} instead of -1",
                        g.label, g.delta
                    )));
                }
                EditMode::Enhance if g.delta < 0.0 => {
                    return Err(Error::Plan(format!(
                        "enhance plan group {:?} has negative delta {}",
                        g.label, g.delta
                    )));
                }
                _ => {}
            }
            for n in &g.neurons {
                if !seen.insert(*n) {
                    return Err(Error::Plan(format!("neuron {n} appears in more than one group")));
                }
            }
        }
        Ok(())
    }

    /// Merge several plans into one. Groups keep their labels; neuron sets
    /// must stay disjoint across all inputs.
    pub fn merge(plans: &[EditPlan]) -> Result<EditPlan> {
        let groups: Vec<EditGroup> = plans.iter().flat_map(|p| p.groups.iter().cloned()).collect();
        let deltas: Vec<f64> = groups.iter().map(|g| g.delta).collect();
        EditPlan::new(EditMode::for_deltas(&deltas), groups)
    }

    /// Combine per-category plans into one. A neuron claimed by several
    /// plans keeps the group of the first; labels become `"<name>/<label>"`.
    pub fn union_first_claim<'a>(plans: impl IntoIterator<Item = (&'a str, &'a [EditGroup])>) -> Result<EditPlan> {
        let mut seen = BTreeSet::new();
        let mut groups = Vec::new();
        for (name, plan_groups) in plans {
            for g in plan_groups {
                let neurons: Vec<NeuronId> = g.neurons.iter().copied().filter(|n| seen.insert(*n)).collect();
                if neurons.len() < g.neurons.len() {
                    log::info!(
                        "{name}/{}: {} neuron(s) already claimed by an earlier plan",
                        g.label,
                        g.neurons.len() - neurons.len()
                    );
                }
                groups.push(EditGroup::new(format!("{name}/{}", g.label), g.delta, neurons));
            }
        }
        let deltas: Vec<f64> = groups.iter().map(|g| g.delta).collect();
        EditPlan::new(EditMode::for_deltas(&deltas), groups)
    }

    /// The plan that undoes this one: every group scaled by `1/(1+delta)`.
    /// Not defined for deactivation.
    pub fn inverse(&self) -> Result<EditPlan> {
        let mut groups = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            if g.delta == -1.0 {
                return Err(Error::Plan(format!(
                    "group {:?} deactivates its neurons and cannot be inverted",
                    g.label
                )));
            }
            groups.push(EditGroup::new(
                format!("{}-inverse", g.label),
                1.0 / (1.0 + g.delta) - 1.0,
                g.neurons.clone(),
            ));
        }
        let deltas: Vec<f64> = groups.iter().map(|g| g.delta).collect();
        EditPlan::new(EditMode::for_deltas(&deltas), groups)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("plan serialises");
        hex::encode(Sha256::digest(&json))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<EditPlan> {
        let plan: EditPlan =
            serde_json::from_str(text).map_err(|e| Error::Data(format!("edit plan: {e}")))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EditPlan> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Zero every listed neuron.
pub fn plan_deactivate(neurons: Vec<NeuronId>) -> Result<EditPlan> {
    EditPlan::new(
        EditMode::Deactivate,
        vec![EditGroup::new("deactivate", -1.0, neurons)],
    )
}

/// Two-group local-enhancement plan, one factor per group.
pub fn plan_le(
    coco_group: Vec<NeuronId>,
    mact_group: Vec<NeuronId>,
    delta_coco: f64,
    delta_mact: f64,
) -> Result<EditPlan> {
    EditPlan::new(
        EditMode::for_deltas(&[delta_coco, delta_mact]),
        vec![
            EditGroup::new("coco", delta_coco, coco_group),
            EditGroup::new("mact", delta_mact, mact_group),
        ],
    )
}

/// Single-group networked-enhancement plan.
pub fn plan_ne(neurons: Vec<NeuronId>, delta: f64) -> Result<EditPlan> {
    EditPlan::new(
        EditMode::for_deltas(&[delta]),
        vec![EditGroup::new("ne", delta, neurons)],
    )
}
