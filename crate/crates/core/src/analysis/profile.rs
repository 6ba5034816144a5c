//! Task profiles: named measures placing a task in a common space.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{enumerate_capped, half_energy, half_time, monte_carlo, ActionGrid, DEFAULT_CAP};
use crate::algebra::Task;
use crate::error::{invalid, Error, Result};
use crate::rng::derive_seed;
use crate::sim::{free_run, SimConfig};
use crate::taskdl::TaskDocument;

/// Divergence scale: histories differing by this much count as fully apart.
pub const DIVERGENCE_SCALE: f64 = 0.1;

/// Named measures, with standard errors for Monte-Carlo estimates.
///
/// Keys: `success_ratio`, `ratio_half_time`, `ratio_half_energy`,
/// `min_time`, `min_energy` (absent without a grid solution),
/// `observability`, `controllability`, `dynamism`, `stochasticity`,
/// `continuity`, `determinism`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskProfile {
    pub task: String,
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub std_errors: BTreeMap<String, f64>,
}

impl TaskProfile {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileOptions {
    /// Above this many sequences, ratios come from Monte-Carlo sampling.
    pub cap: u64,
    pub samples: u64,
    pub determinism_runs: usize,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            cap: DEFAULT_CAP,
            samples: 10_000,
            determinism_runs: 10,
        }
    }
}

/// Computes the profile of `task`.
pub fn profile(
    doc: &TaskDocument,
    task: &Task,
    grid: &ActionGrid,
    cfg: &SimConfig,
    opts: &ProfileOptions,
) -> Result<TaskProfile> {
    let world = &doc.world;
    let body = doc.body_of(task)?;
    let mut p = TaskProfile {
        task: task.name.clone(),
        ..TaskProfile::default()
    };
    let nvars = world.len() as f64;

    match enumerate_capped(doc, task, grid, cfg, opts.cap) {
        Ok(e) => {
            p.values.insert("success_ratio".into(), e.ratio);
            p.values.insert("ratio_half_time".into(), e.ratio_half_time);
            p.values.insert("ratio_half_energy".into(), e.ratio_half_energy);
            if let Some(b) = &e.best_time {
                p.values.insert("min_time".into(), b.time);
            }
            if let Some(b) = &e.best_energy {
                p.values.insert("min_energy".into(), b.energy_spent);
            }
        }
        Err(Error::CapExceeded { .. }) => {
            for (key, t) in [
                ("success_ratio", task.clone()),
                ("ratio_half_time", half_time(task)),
                ("ratio_half_energy", half_energy(doc, task)?),
            ] {
                let mc = monte_carlo(doc, &t, grid, cfg, opts.samples)?;
                p.values.insert(key.into(), mc.ratio);
                p.std_errors.insert(key.into(), mc.std_error);
            }
        }
        Err(e) => return Err(e),
    }

    let sensed: BTreeSet<&str> = body.sensors.iter().map(|c| c.variable.as_str()).collect();
    let actuated: BTreeSet<&str> = body.actuators.iter().map(|c| c.variable.as_str()).collect();
    p.values.insert("observability".into(), sensed.len() as f64 / nvars);
    p.values.insert("controllability".into(), actuated.len() as f64 / nvars);
    p.values.insert("dynamism".into(), dynamism(doc, task, cfg)?);
    let noisy = world.has_noise() || body.has_noise();
    p.values.insert("stochasticity".into(), if noisy { 1.0 } else { 0.0 });

    let continuous = world
        .variables()
        .iter()
        .filter(|v| {
            let quantized = body
                .sensors
                .iter()
                .chain(&body.actuators)
                .any(|c| c.variable == v.name && c.resolution > 0.0);
            let smooth = world.rule_for(&v.name).is_none_or(|r| r.expr.is_smooth());
            !quantized && smooth
        })
        .count();
    p.values.insert("continuity".into(), continuous as f64 / nvars);
    p.values
        .insert("determinism".into(), measure_determinism(doc, task, cfg, opts.determinism_runs.max(2))?);
    Ok(p)
}

fn horizon_steps(task: &Task, cfg: &SimConfig) -> u64 {
    (cfg.horizon_for(task) / cfg.delta).round().max(1.0) as u64
}

/// Fraction of variables whose value changes at some step of a run with
/// no actions.
fn dynamism(doc: &TaskDocument, task: &Task, cfg: &SimConfig) -> Result<f64> {
    let world = &doc.world;
    let start = world.start_state(&task.start)?;
    let states = free_run(world, &start, cfg.delta, horizon_steps(task, cfg), cfg.master_seed)?;
    let changed = (0..world.len())
        .filter(|&i| states.iter().any(|s| s[i].to_bits() != states[0][i].to_bits()))
        .count();
    Ok(changed as f64 / world.len() as f64)
}

/// One minus the mean pairwise divergence of `n_runs` no-action runs with
/// different seeds. Two histories diverge at a sample by
/// `min(1, max_v |a_v − b_v| / 0.1)`; their divergence is the mean over
/// samples. Noise-free worlds give exactly 1.
pub fn measure_determinism(doc: &TaskDocument, task: &Task, cfg: &SimConfig, n_runs: usize) -> Result<f64> {
    if n_runs < 2 {
        return Err(invalid("determinism needs at least two runs"));
    }
    let world = &doc.world;
    let start = world.start_state(&task.start)?;
    let steps = horizon_steps(task, cfg);
    let runs = (0..n_runs)
        .map(|i| free_run(world, &start, cfg.delta, steps, derive_seed(cfg.master_seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..n_runs {
        for j in i + 1..n_runs {
            let d: f64 = runs[i]
                .iter()
                .zip(&runs[j])
                .map(|(a, b)| {
                    let gap = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                    (gap / DIVERGENCE_SCALE).min(1.0)
                })
                .sum::<f64>()
                / runs[i].len() as f64;
            total += d;
            pairs += 1;
        }
    }
    Ok(1.0 - total / pairs as f64)
}

/// Weights and normalization ranges for [`distance`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistanceConfig {
    /// Missing dimensions weigh 1.
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
    /// `(lo, hi)` per dimension; missing or zero-width ranges leave the
    /// dimension unscaled.
    #[serde(default)]
    pub ranges: BTreeMap<String, (f64, f64)>,
}

impl DistanceConfig {
    /// Unit weights and min–max ranges over `profiles`.
    pub fn fit<'a>(profiles: impl IntoIterator<Item = &'a TaskProfile>) -> Self {
        let mut ranges: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        for p in profiles {
            for (k, &v) in &p.values {
                let r = ranges.entry(k.clone()).or_insert((v, v));
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
        DistanceConfig {
            weights: BTreeMap::new(),
            ranges,
        }
    }

    /// Only `key` counts.
    pub fn only(mut self, key: &str, keys: impl IntoIterator<Item = String>) -> Self {
        for k in keys {
            self.weights.insert(k, 0.0);
        }
        self.weights.insert(key.to_string(), 1.0);
        self
    }

    fn weight(&self, key: &str) -> f64 {
        self.weights.get(key).copied().unwrap_or(1.0)
    }

    fn scale(&self, key: &str) -> f64 {
        match self.ranges.get(key) {
            Some((lo, hi)) if hi > lo => hi - lo,
            _ => 1.0,
        }
    }
}

/// Weighted Euclidean distance over normalized dimensions. Both profiles
/// must have the same dimensions.
pub fn distance(a: &TaskProfile, b: &TaskProfile, cfg: &DistanceConfig) -> Result<f64> {
    if !a.values.keys().eq(b.values.keys()) {
        let ka: BTreeSet<_> = a.values.keys().collect();
        let kb: BTreeSet<_> = b.values.keys().collect();
        let diff: Vec<String> = ka.symmetric_difference(&kb).map(|k| k.to_string()).collect();
        return Err(invalid(format!("profiles differ in dimensions: {}", diff.join(", "))));
    }
    if cfg.weights.values().any(|w| !(*w >= 0.0)) {
        return Err(invalid("distance weights must be >= 0"));
    }
    if !a.values.keys().any(|k| cfg.weight(k) > 0.0) {
        return Err(invalid("distance needs at least one positive weight"));
    }
    let sum: f64 = a
        .values
        .iter()
        .map(|(k, x)| {
            let d = (x - b.values[k]) / cfg.scale(k);
            cfg.weight(k) * d * d
        })
        .sum();
    Ok(sum.sqrt())
}
