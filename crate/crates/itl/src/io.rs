//! On-disk JSON documents: environments, rollout batches, smoothed dynamics
//! estimates, and constrained sample sets.
//!
//! Files are written pretty-printed for readability, but every content hash
//! is taken over the *compact* encoding of the same document, so hashes are
//! independent of whitespace. Loaders re-validate all structural invariants;
//! derived data (counts, masks) is never stored, always recomputed.
//!
//! Floats must round-trip bit-exactly through these files — content hashes
//! and cross-stage determinism depend on it — hence the `float_roundtrip`
//! feature on the JSON dependency (shortest-repr encoding is already exact;
//! the default decoder is not).

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{validate_trajectory, Step, Trajectory, TrajectoryBatch};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::sampler::DeltaTable;

/// `"sha256:<hex>"` of the compact JSON encoding of `value`.
pub fn canonical_hash<T: Serialize>(value: &T) -> Result<String> {
    let compact = serde_json::to_vec(value)?;
    let digest = Sha256::digest(&compact);
    let mut out = String::with_capacity(7 + 64);
    out.push_str("sha256:");
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    Ok(out)
}

pub(crate) fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn tensor3_to_nested(t: &Array3<f64>) -> Vec<Vec<Vec<f64>>> {
    t.outer_iter()
        .map(|plane| plane.outer_iter().map(|row| row.to_vec()).collect())
        .collect()
}

fn tensor2_to_nested(t: &Array2<f64>) -> Vec<Vec<f64>> {
    t.outer_iter().map(|row| row.to_vec()).collect()
}

fn nested_to_tensor3(nested: &[Vec<Vec<f64>>], dims: (usize, usize, usize)) -> Result<Array3<f64>> {
    let (d0, d1, d2) = dims;
    if nested.len() != d0
        || nested.iter().any(|p| p.len() != d1)
        || nested.iter().flatten().any(|r| r.len() != d2)
    {
        return Err(Error::invalid(format!(
            "nested tensor does not have shape ({d0}, {d1}, {d2})"
        )));
    }
    let flat: Vec<f64> = nested.iter().flatten().flatten().copied().collect();
    Array3::from_shape_vec(dims, flat).map_err(|e| Error::invalid(e.to_string()))
}

fn nested_to_tensor2(nested: &[Vec<f64>], dims: (usize, usize)) -> Result<Array2<f64>> {
    let (d0, d1) = dims;
    if nested.len() != d0 || nested.iter().any(|r| r.len() != d1) {
        return Err(Error::invalid(format!(
            "nested table does not have shape ({d0}, {d1})"
        )));
    }
    let flat: Vec<f64> = nested.iter().flatten().copied().collect();
    Array2::from_shape_vec(dims, flat).map_err(|e| Error::invalid(e.to_string()))
}

/// Serialized environment: dimensions, discount, terminal index, and the
/// full transition/reward tables as nested row-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub discount: f64,
    pub terminal: usize,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<f64>>,
}

impl MdpDocument {
    pub fn from_mdp(mdp: &TabularMdp) -> Self {
        MdpDocument {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            discount: mdp.discount(),
            terminal: mdp.terminal(),
            transitions: tensor3_to_nested(mdp.transitions()),
            rewards: tensor2_to_nested(mdp.rewards()),
        }
    }

    /// Rebuilds the environment, re-running the full constructor validation
    /// (simplex rows, absorbing zero-reward terminal, discount range).
    pub fn to_mdp(&self) -> Result<TabularMdp> {
        let transitions =
            nested_to_tensor3(&self.transitions, (self.n_states, self.n_actions, self.n_states))?;
        let rewards = nested_to_tensor2(&self.rewards, (self.n_states, self.n_actions))?;
        TabularMdp::new(transitions, rewards, self.discount, self.terminal)
    }
}

/// Content identity of an environment, used to tie batches and sample sets
/// back to the exact dynamics they were produced from.
pub fn env_hash(mdp: &TabularMdp) -> Result<String> {
    canonical_hash(&MdpDocument::from_mdp(mdp))
}

pub fn save_mdp(path: &Path, mdp: &TabularMdp) -> Result<()> {
    write_pretty(path, &MdpDocument::from_mdp(mdp))
}

pub fn load_mdp(path: &Path) -> Result<TabularMdp> {
    read_json::<MdpDocument>(path)?.to_mdp()
}

/// Serialized rollout batch: origin metadata plus the raw step list.
/// Counts are deliberately absent — they are recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchDocument {
    pub env_hash: String,
    pub seed: u64,
    pub episodes: usize,
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub terminal: usize,
    /// One list per episode; each step is a `[state, action, reward,
    /// next_state]` tuple.
    pub trajectories: Vec<Vec<(usize, usize, f64, usize)>>,
}

impl BatchDocument {
    pub fn from_batch(batch: &TrajectoryBatch, env_hash: String, seed: u64, horizon: usize) -> Self {
        BatchDocument {
            env_hash,
            seed,
            episodes: batch.n_episodes(),
            horizon,
            n_states: batch.n_states(),
            n_actions: batch.n_actions(),
            terminal: batch.terminal,
            trajectories: batch
                .trajectories
                .iter()
                .map(|t| {
                    t.steps
                        .iter()
                        .map(|s| (s.state, s.action, s.reward, s.next_state))
                        .collect()
                })
                .collect(),
        }
    }

    /// Rebuilds the batch, re-validating every trajectory (index bounds,
    /// chained steps, horizon cap, terminal-or-cap ending) and recomputing
    /// counts and the visit mask from the steps.
    pub fn to_batch(&self) -> Result<TrajectoryBatch> {
        if self.trajectories.len() != self.episodes {
            return Err(Error::invalid(format!(
                "document claims {} episodes but holds {}",
                self.episodes,
                self.trajectories.len()
            )));
        }
        let trajectories: Vec<Trajectory> = self
            .trajectories
            .iter()
            .map(|t| Trajectory {
                steps: t
                    .iter()
                    .map(|&(state, action, reward, next_state)| Step {
                        state,
                        action,
                        reward,
                        next_state,
                    })
                    .collect(),
            })
            .collect();
        for trajectory in &trajectories {
            validate_trajectory(
                trajectory,
                self.n_states,
                self.n_actions,
                self.terminal,
                self.horizon,
            )?;
        }
        TrajectoryBatch::from_trajectories(trajectories, self.n_states, self.n_actions, self.terminal)
    }
}

pub fn save_batch(path: &Path, doc: &BatchDocument) -> Result<()> {
    write_pretty(path, doc)
}

pub fn load_batch(path: &Path) -> Result<BatchDocument> {
    read_json(path)
}

/// Serialized smoothed dynamics estimate (the posterior-mean tensor) with
/// the metadata needed to interpret it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MleDocument {
    pub env_hash: String,
    pub prior: f64,
    pub episodes: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub terminal: usize,
    pub transitions: Vec<Vec<Vec<f64>>>,
}

impl MleDocument {
    pub fn new(
        env_hash: String,
        prior: f64,
        episodes: usize,
        terminal: usize,
        transitions: &Array3<f64>,
    ) -> Self {
        let (n_states, n_actions, _) = transitions.dim();
        MleDocument {
            env_hash,
            prior,
            episodes,
            n_states,
            n_actions,
            terminal,
            transitions: tensor3_to_nested(transitions),
        }
    }

    pub fn to_tensor(&self) -> Result<Array3<f64>> {
        let t = nested_to_tensor3(&self.transitions, (self.n_states, self.n_actions, self.n_states))?;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = t.slice(ndarray::s![s, a, ..]);
                if row.iter().any(|&p| !p.is_finite() || p < 0.0) {
                    return Err(Error::invalid(format!("row ({s}, {a}) has invalid entries")));
                }
                if (row.sum() - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!(
                        "row ({s}, {a}) sums to {}, not 1",
                        row.sum()
                    )));
                }
            }
        }
        Ok(t)
    }
}

pub fn save_mle(path: &Path, doc: &MleDocument) -> Result<()> {
    write_pretty(path, doc)
}

pub fn load_mle(path: &Path) -> Result<MleDocument> {
    read_json(path)
}

/// Sampler diagnostics stored alongside the accepted transition samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerDiagnostics {
    pub accepted: usize,
    pub outer_rounds_used: usize,
    pub total_row_draws: u64,
    pub per_row_draws: Vec<Vec<u64>>,
}

/// Final per-row acceptance bounds after any tuning, as nested `(s, a)`
/// tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaDocument {
    pub gap: Vec<Vec<f64>>,
    pub window: Vec<Vec<f64>>,
}

impl DeltaDocument {
    pub fn from_table(table: &DeltaTable) -> Self {
        DeltaDocument {
            gap: tensor2_to_nested(&table.gap),
            window: tensor2_to_nested(&table.window),
        }
    }

    pub fn to_table(&self, n_states: usize, n_actions: usize) -> Result<DeltaTable> {
        Ok(DeltaTable {
            gap: nested_to_tensor2(&self.gap, (n_states, n_actions))?,
            window: nested_to_tensor2(&self.window, (n_states, n_actions))?,
        })
    }
}

/// Serialized output of a constrained sampling run: the accepted transition
/// tensors plus run metadata and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSetDocument {
    pub env_hash: String,
    pub expert_epsilon: f64,
    pub seed: u64,
    pub anchor: String,
    pub ball_source: String,
    pub n_states: usize,
    pub n_actions: usize,
    pub terminal: usize,
    pub samples: Vec<Vec<Vec<Vec<f64>>>>,
    pub diagnostics: SamplerDiagnostics,
    pub final_deltas: DeltaDocument,
}

impl SampleSetDocument {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        env_hash: String,
        expert_epsilon: f64,
        seed: u64,
        anchor: String,
        ball_source: String,
        terminal: usize,
        samples: &[Array3<f64>],
        outer_rounds_used: usize,
        per_row_draws: &Array2<u64>,
        deltas: &DeltaTable,
    ) -> Result<Self> {
        let (n_states, n_actions) = per_row_draws.dim();
        for sample in samples {
            if sample.dim() != (n_states, n_actions, n_states) {
                return Err(Error::contract("sample tensor shape does not match the run"));
            }
        }
        Ok(SampleSetDocument {
            env_hash,
            expert_epsilon,
            seed,
            anchor,
            ball_source,
            n_states,
            n_actions,
            terminal,
            samples: samples.iter().map(tensor3_to_nested).collect(),
            diagnostics: SamplerDiagnostics {
                accepted: samples.len(),
                outer_rounds_used,
                total_row_draws: per_row_draws.sum(),
                per_row_draws: per_row_draws.outer_iter().map(|r| r.to_vec()).collect(),
            },
            final_deltas: DeltaDocument::from_table(deltas),
        })
    }

    pub fn to_tensors(&self) -> Result<Vec<Array3<f64>>> {
        self.samples
            .iter()
            .map(|s| nested_to_tensor3(s, (self.n_states, self.n_actions, self.n_states)))
            .collect()
    }
}

pub fn save_sample_set(path: &Path, doc: &SampleSetDocument) -> Result<()> {
    write_pretty(path, doc)
}

pub fn load_sample_set(path: &Path) -> Result<SampleSetDocument> {
    read_json(path)
}
