//! Exhaustive action-sequence enumeration, Monte-Carlo estimates, task
//! profiles and the distance between them.
//!
//! Enumeration holds each grid action for one decision period and explores
//! the tree of sequences depth first, sharing simulated prefixes. A prefix
//! that reaches success at depth `d` of `D` periods accounts for
//! `L^(D−d)` complete sequences, where `L` is the number of grid actions.

mod profile;

pub use profile::{distance, measure_determinism, profile, DistanceConfig, ProfileOptions, TaskProfile};

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::Task;
use crate::error::{invalid, Error, Result};
use crate::harness::{Controller, RandomGrid};
use crate::rng::{derive_seed, NoiseStreams};
use crate::sim::{run, step_into, ActuatorPipeline, SimConfig, StatusTracker, TaskStatus};
use crate::taskdl::TaskDocument;

/// Default limit on the number of sequences enumerated.
pub const DEFAULT_CAP: u64 = 10_000_000;

/// Discrete command levels per actuator and the decision period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    /// Actuator name and its levels, sorted ascending without duplicates.
    pub levels: Vec<(String, Vec<f64>)>,
    /// Seconds each action is held.
    pub period: f64,
}

impl ActionGrid {
    pub fn new(levels: Vec<(String, Vec<f64>)>, period: f64) -> Self {
        let levels = levels
            .into_iter()
            .map(|(a, mut l)| {
                l.sort_by(f64::total_cmp);
                l.dedup();
                (a, l)
            })
            .collect();
        ActionGrid { levels, period }
    }

    /// One actuator.
    pub fn single(actuator: impl Into<String>, levels: Vec<f64>, period: f64) -> Self {
        Self::new(vec![(actuator.into(), levels)], period)
    }

    /// Number of distinct actions per period.
    pub fn action_count(&self) -> usize {
        self.levels.iter().map(|(_, l)| l.len()).product()
    }

    /// Values of action `a`; the first actuator varies slowest.
    pub fn action(&self, mut a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.levels.len()];
        for (i, (_, l)) in self.levels.iter().enumerate().rev() {
            out[i] = l[a % l.len()];
            a /= l.len();
        }
        out
    }

    pub fn actuators(&self) -> Vec<String> {
        self.levels.iter().map(|(a, _)| a.clone()).collect()
    }

    /// Steps per decision period.
    pub fn steps_per_period(&self, delta: f64) -> Result<u64> {
        let k = (self.period / delta).round();
        if k < 1.0 || (self.period / delta - k).abs() > 1e-6 * k {
            return Err(invalid(format!(
                "decision period {} must be a positive multiple of delta {delta}",
                self.period
            )));
        }
        Ok(k as u64)
    }

    pub fn validate(&self, doc: &TaskDocument, task: &Task) -> Result<()> {
        let body = doc.body_of(task)?;
        if self.levels.is_empty() {
            return Err(invalid("action grid names no actuators"));
        }
        for (a, levels) in &self.levels {
            body.actuator(a).ok_or_else(|| Error::NotAnActuator(a.clone()))?;
            if levels.is_empty() {
                return Err(invalid(format!("actuator `{a}` has no levels")));
            }
            let domain = doc.world.variable(a).ok_or_else(|| Error::UnknownVariable(a.clone()))?.domain;
            if let Some(x) = levels.iter().find(|x| !domain.contains(**x)) {
                return Err(Error::OutOfDomain {
                    name: a.clone(),
                    value: *x,
                    domain,
                });
            }
        }
        Ok(())
    }

    /// The twin random controller: uniform over the grid each period.
    pub fn random_controller(&self) -> RandomGrid {
        RandomGrid::per_actuator(self.levels.clone(), self.period)
    }
}

/// Best successful sequence under one criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    /// Completion time in seconds.
    pub time: f64,
    pub energy_spent: f64,
    /// Grid values per period, up to the period in which the task succeeded.
    pub sequence: Vec<Vec<f64>>,
}

/// Outcome of [`min_time`] or [`min_energy`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "kebab-case")]
pub enum GridSolution {
    Found(GridOptimum),
    NoGridSolution,
}

impl GridSolution {
    pub fn found(&self) -> Option<&GridOptimum> {
        match self {
            GridSolution::Found(o) => Some(o),
            GridSolution::NoGridSolution => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationResult {
    pub actuators: Vec<String>,
    pub periods: u32,
    pub n_total: u64,
    pub n_solutions: u64,
    pub ratio: f64,
    /// Ratio with the deadline halved.
    pub ratio_half_time: f64,
    /// Ratio with the energy allowance (start value minus floor) halved.
    pub ratio_half_energy: f64,
    pub best_time: Option<GridOptimum>,
    pub best_energy: Option<GridOptimum>,
}

#[derive(Debug, Clone)]
struct Candidate {
    time: f64,
    energy: f64,
    /// Action indices, padded with zeros to the full depth for ordering.
    key: Vec<usize>,
    len: usize,
}

fn lex(a: &Candidate, b: &Candidate) -> Ordering {
    a.key.cmp(&b.key)
}

fn better_time(a: &Candidate, b: &Candidate) -> bool {
    a.time
        .total_cmp(&b.time)
        .then(a.energy.total_cmp(&b.energy))
        .then(lex(a, b))
        == Ordering::Less
}

fn better_energy(a: &Candidate, b: &Candidate) -> bool {
    a.energy
        .total_cmp(&b.energy)
        .then(a.time.total_cmp(&b.time))
        .then(lex(a, b))
        == Ordering::Less
}

#[derive(Debug, Clone, Default)]
struct Tally {
    solutions: u64,
    best_time: Option<Candidate>,
    best_energy: Option<Candidate>,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        self.solutions += other.solutions;
        if let Some(c) = other.best_time {
            self.offer_time(c);
        }
        if let Some(c) = other.best_energy {
            self.offer_energy(c);
        }
        self
    }

    fn offer_time(&mut self, c: Candidate) {
        if self.best_time.as_ref().is_none_or(|b| better_time(&c, b)) {
            self.best_time = Some(c);
        }
    }

    fn offer_energy(&mut self, c: Candidate) {
        if self.best_energy.as_ref().is_none_or(|b| better_energy(&c, b)) {
            self.best_energy = Some(c);
        }
    }
}

/// Simulation state at a node of the sequence tree.
#[derive(Clone)]
struct Node {
    values: Vec<f64>,
    n: u64,
    tracker: StatusTracker,
    pipeline: ActuatorPipeline,
    streams: NoiseStreams,
}

struct Explorer<'a> {
    doc: &'a TaskDocument,
    grid: &'a ActionGrid,
    delta: f64,
    k: u64,
    periods: u32,
    count: usize,
    energy_index: usize,
    e0: f64,
    /// Pipeline slot of each grid actuator.
    slots: Vec<usize>,
    n_slots: usize,
}

impl Explorer<'_> {
    /// Simulates one period of action `a` from `node`. Returns the status
    /// after the period (or at the step it turned terminal).
    fn advance(&self, node: &mut Node, a: usize) -> Result<TaskStatus> {
        let values = self.grid.action(a);
        let mut commands = vec![None; self.n_slots];
        for (slot, v) in self.slots.iter().zip(values) {
            commands[*slot] = Some(v);
        }
        let (mut work, mut out, mut writes) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..self.k {
            node.pipeline.push(node.n, &commands, &mut writes)?;
            step_into(&self.doc.world, &node.values, &writes, self.delta, &mut node.streams, &mut work, &mut out)?;
            std::mem::swap(&mut node.values, &mut out);
            node.n += 1;
            let status = node.tracker.observe(node.n, &node.values);
            if status.is_terminal() {
                return Ok(status);
            }
        }
        Ok(TaskStatus::InProgress)
    }

    fn record(&self, tally: &mut Tally, path: &[usize], time: f64, values: &[f64]) {
        let depth = path.len() as u32;
        tally.solutions += (self.count as u64).pow(self.periods - depth);
        let mut key = path.to_vec();
        key.resize(self.periods as usize, 0);
        let c = Candidate {
            time,
            energy: self.e0 - values[self.energy_index],
            key,
            len: path.len(),
        };
        tally.offer_time(c.clone());
        tally.offer_energy(c);
    }

    fn explore(&self, node: &Node, path: &mut Vec<usize>, tally: &mut Tally) -> Result<()> {
        if path.len() as u32 == self.periods {
            return Ok(());
        }
        for a in 0..self.count {
            let mut child = node.clone();
            let status = self.advance(&mut child, a)?;
            path.push(a);
            match status {
                TaskStatus::Success { time } => self.record(tally, path, time, &child.values),
                TaskStatus::Failure { .. } => {}
                TaskStatus::InProgress => self.explore(&child, path, tally)?,
            }
            path.pop();
        }
        Ok(())
    }

    fn optimum(&self, c: &Candidate) -> GridOptimum {
        GridOptimum {
            time: c.time,
            energy_spent: c.energy,
            sequence: c.key[..c.len].iter().map(|a| self.grid.action(*a)).collect(),
        }
    }
}

struct Explored {
    periods: u32,
    n_total: u64,
    tally: Tally,
    best_time: Option<GridOptimum>,
    best_energy: Option<GridOptimum>,
}

/// Number of decision periods a run of `task` can use, and the total
/// number of sequences, checked against `cap`.
fn tree_size(task: &Task, grid: &ActionGrid, cfg: &SimConfig, cap: u64) -> Result<(u32, u64)> {
    let delta = cfg.delta;
    let k = grid.steps_per_period(delta)?;
    let limit = task.deadline.min(cfg.horizon_for(task));
    let steps = (limit / delta - 1e-9).ceil().max(0.0) as u64;
    let periods = steps.div_ceil(k);
    let total = (grid.action_count() as f64).powf(periods as f64);
    if total > cap as f64 || periods > u32::MAX as u64 {
        return Err(Error::CapExceeded { total, cap });
    }
    Ok((periods as u32, (grid.action_count() as u64).pow(periods as u32)))
}

fn explore(doc: &TaskDocument, task: &Task, grid: &ActionGrid, cfg: &SimConfig, cap: u64) -> Result<Explored> {
    cfg.validate(task)?;
    grid.validate(doc, task)?;
    let (periods, n_total) = tree_size(task, grid, cfg, cap)?;
    let world = &doc.world;
    let body = doc.body_of(task)?;
    let delta = cfg.delta;
    let horizon = cfg.horizon_for(task);
    let pipeline = ActuatorPipeline::new(world, body, cfg.master_seed, cfg.clamp_actuators)?;
    let slots = grid
        .levels
        .iter()
        .map(|(a, _)| pipeline.position(a).ok_or_else(|| Error::NotAnActuator(a.clone())))
        .collect::<Result<Vec<_>>>()?;
    let start = world.start_state(&task.start)?;
    let energy_index = world.require_index(&task.energy.variable)?;
    let ex = Explorer {
        doc,
        grid,
        delta,
        k: grid.steps_per_period(delta)?,
        periods,
        count: grid.action_count(),
        energy_index,
        e0: start.values()[energy_index],
        slots,
        n_slots: body.actuators.len(),
    };
    let mut tracker = StatusTracker::new(world, task, delta, horizon)?;
    let root = Node {
        values: start.values().to_vec(),
        n: 0,
        pipeline,
        streams: NoiseStreams::new(cfg.master_seed),
        tracker: tracker.clone(),
    };

    let tally = match tracker.observe(0, start.values()) {
        TaskStatus::Success { time } => {
            let mut t = Tally::default();
            ex.record(&mut t, &[], time, start.values());
            t
        }
        TaskStatus::Failure { .. } => Tally::default(),
        TaskStatus::InProgress if periods == 0 => Tally::default(),
        TaskStatus::InProgress => {
            let root = Node { tracker, ..root };
            let parts = (0..ex.count)
                .into_par_iter()
                .map(|a| -> Result<Tally> {
                    let mut tally = Tally::default();
                    let mut child = root.clone();
                    let mut path = vec![a];
                    match ex.advance(&mut child, a)? {
                        TaskStatus::Success { time } => ex.record(&mut tally, &path, time, &child.values),
                        TaskStatus::Failure { .. } => {}
                        TaskStatus::InProgress => ex.explore(&child, &mut path, &mut tally)?,
                    }
                    Ok(tally)
                })
                .collect::<Result<Vec<_>>>()?;
            parts.into_iter().fold(Tally::default(), Tally::merge)
        }
    };
    let best_time = tally.best_time.as_ref().map(|c| ex.optimum(c));
    let best_energy = tally.best_energy.as_ref().map(|c| ex.optimum(c));
    Ok(Explored {
        periods,
        n_total,
        tally,
        best_time,
        best_energy,
    })
}

/// The task with its deadline halved.
pub fn half_time(task: &Task) -> Task {
    Task {
        deadline: task.deadline / 2.0,
        ..task.clone()
    }
}

/// The task with half the energy allowance.
pub fn half_energy(doc: &TaskDocument, task: &Task) -> Result<Task> {
    let e0 = task.start_value(&doc.world, &task.energy.variable)?;
    let mut t = task.clone();
    t.energy.floor = e0 - (e0 - task.energy.floor) / 2.0;
    Ok(t)
}

/// Simulates every grid sequence of `task`, with the default cap.
pub fn enumerate(doc: &TaskDocument, task: &Task, grid: &ActionGrid, cfg: &SimConfig) -> Result<EnumerationResult> {
    enumerate_capped(doc, task, grid, cfg, DEFAULT_CAP)
}

pub fn enumerate_capped(
    doc: &TaskDocument,
    task: &Task,
    grid: &ActionGrid,
    cfg: &SimConfig,
    cap: u64,
) -> Result<EnumerationResult> {
    let main = explore(doc, task, grid, cfg, cap)?;
    let ratio_of = |t: &Task| -> Result<f64> {
        let e = explore(doc, t, grid, cfg, cap)?;
        Ok(e.tally.solutions as f64 / e.n_total as f64)
    };
    let ratio_half_time = ratio_of(&half_time(task))?;
    let ratio_half_energy = ratio_of(&half_energy(doc, task)?)?;
    Ok(EnumerationResult {
        actuators: grid.actuators(),
        periods: main.periods,
        n_total: main.n_total,
        n_solutions: main.tally.solutions,
        ratio: main.tally.solutions as f64 / main.n_total as f64,
        ratio_half_time,
        ratio_half_energy,
        best_time: main.best_time,
        best_energy: main.best_energy,
    })
}

/// Fastest grid sequence; ties go to lower energy, then lexicographic order.
pub fn min_time(doc: &TaskDocument, task: &Task, grid: &ActionGrid, cfg: &SimConfig) -> Result<GridSolution> {
    let e = explore(doc, task, grid, cfg, DEFAULT_CAP)?;
    Ok(e.best_time.map_or(GridSolution::NoGridSolution, GridSolution::Found))
}

/// Cheapest grid sequence; ties go to lower time, then lexicographic order.
pub fn min_energy(doc: &TaskDocument, task: &Task, grid: &ActionGrid, cfg: &SimConfig) -> Result<GridSolution> {
    let e = explore(doc, task, grid, cfg, DEFAULT_CAP)?;
    Ok(e.best_energy.map_or(GridSolution::NoGridSolution, GridSolution::Found))
}

/// Success frequency of the grid's random controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub samples: u64,
    pub successes: u64,
    pub ratio: f64,
    /// Binomial standard error of `ratio`.
    pub std_error: f64,
}

/// Runs the random-grid controller `samples` times with seeds derived
/// from `cfg.master_seed`.
pub fn monte_carlo(doc: &TaskDocument, task: &Task, grid: &ActionGrid, cfg: &SimConfig, samples: u64) -> Result<McEstimate> {
    if samples == 0 {
        return Err(invalid("Monte-Carlo needs at least one sample"));
    }
    grid.validate(doc, task)?;
    let proto = grid.random_controller();
    let successes = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<u64> {
            let mut c = proto.clone();
            let run_cfg = SimConfig {
                master_seed: derive_seed(cfg.master_seed, i),
                ..cfg.clone()
            };
            let out = run(doc, task, &mut c as &mut dyn Controller, &run_cfg)?;
            Ok(out.status.is_success() as u64)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let ratio = successes as f64 / samples as f64;
    Ok(McEstimate {
        samples,
        successes,
        ratio,
        std_error: (ratio * (1.0 - ratio) / samples as f64).sqrt(),
    })
}
