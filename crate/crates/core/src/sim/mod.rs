//! Discrete-time execution of a world with an attached agent.
//!
//! One step: actuator commands are written into the pre-state, then every
//! transition rule is evaluated against that single state and the results
//! are written together into the post-state.

pub mod export;
mod status;

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use status::{check_status, FailureCause, StatusTracker, TaskStatus};

use crate::algebra::{Communication, Task};
use crate::error::{Error, Result};
use crate::harness::{Briefing, Controller, DecisionContext};
use crate::interval::Interval;
use crate::rng::{stream_seed, NoiseStreams};
use crate::taskdl::TaskDocument;
use crate::world::{quantize, AgentBody, Assignment, Channel, State, Violation, World, TIME_VAR};

/// Actuator name → commanded value.
pub type Commands = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Step size in seconds.
    pub delta: f64,
    /// Maximum simulated time; `None` means deadline + 1 s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub master_seed: u64,
    /// Clamp out-of-domain commands instead of rejecting them.
    #[serde(default)]
    pub clamp_actuators: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            delta: 0.01,
            horizon: None,
            master_seed: 0,
            clamp_actuators: false,
        }
    }
}

impl SimConfig {
    pub fn new(delta: f64) -> Self {
        SimConfig {
            delta,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = Some(horizon);
        self
    }

    /// Settings from the document where `self` leaves them open.
    pub fn from_document(doc: &TaskDocument) -> Self {
        SimConfig {
            delta: doc.sim.delta.unwrap_or(0.01),
            horizon: doc.sim.horizon,
            master_seed: doc.sim.seed.unwrap_or(0),
            clamp_actuators: false,
        }
    }

    pub fn horizon_for(&self, task: &Task) -> f64 {
        self.horizon.unwrap_or(task.deadline + 1.0)
    }

    pub fn validate(&self, task: &Task) -> Result<()> {
        let h = self.horizon_for(task);
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Invalid(format!("delta must be positive, got {}", self.delta)));
        }
        if !(h > 0.0) || self.delta > h {
            return Err(Error::Invalid(format!(
                "horizon {h} must be positive and at least delta {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Sensor readings after noise, quantization and latency.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation {
    pub values: BTreeMap<String, f64>,
}

impl Observation {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub pre: State,
    /// Commands as the controller issued them.
    pub commands: Commands,
    /// Values actually written after the actuator channels.
    pub applied: Commands,
    pub post: State,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

/// The states a run passed through. Sample `n` is at time `n·δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub delta: f64,
    pub horizon: f64,
    pub initial: State,
    pub records: Vec<StepRecord>,
}

impl History {
    pub fn new(delta: f64, horizon: f64, initial: State) -> Self {
        History {
            delta,
            horizon,
            initial,
            records: Vec::new(),
        }
    }

    /// Number of steps taken.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// State at sample `n`; 0 is the start state.
    pub fn state(&self, n: usize) -> &State {
        if n == 0 {
            &self.initial
        } else {
            &self.records[n - 1].post
        }
    }

    pub fn last_state(&self) -> &State {
        self.state(self.len())
    }

    pub fn time_of(&self, n: usize) -> f64 {
        n as f64 * self.delta
    }
}

/// Gaussian noise for `key` at `step`, a pure function of its arguments.
fn keyed_gauss(seed: u64, key: &str, step: u64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &format!("{key}@{step}")));
    Normal::new(0.0, sigma).map(|d| d.sample(&mut rng)).unwrap_or(0.0)
}

fn eval_error(world: &World, rule: usize, pre: &[f64], fault: crate::error::EvalFault) -> Error {
    Error::Eval {
        rule: world.rules()[rule].target.clone(),
        time: world.index_of(TIME_VAR).map(|i| pre[i]),
        fault,
    }
}

/// One synchronous update on dense values. `work` receives the pre-state
/// with writes applied; `out` receives the post-state.
pub(crate) fn step_into(
    world: &World,
    pre: &[f64],
    writes: &[(usize, f64)],
    delta: f64,
    streams: &mut NoiseStreams,
    work: &mut Vec<f64>,
    out: &mut Vec<f64>,
) -> Result<()> {
    work.clear();
    work.extend_from_slice(pre);
    for &(i, x) in writes {
        work[i] = x;
    }
    out.clear();
    out.extend_from_slice(work);
    for (r, rule) in world.rules().iter().enumerate() {
        let x = rule
            .expr
            .eval(work, delta, streams)
            .map_err(|f| eval_error(world, r, work, f))?;
        out[rule.target_index()] = x;
    }
    Ok(())
}

/// Applies `commands` to `state` and advances it by `delta`.
///
/// Commands must name variables of the world and lie in their domains;
/// whether they are actuators is checked by [`run`], which knows the body.
pub fn step(
    world: &World,
    state: &State,
    commands: &Commands,
    delta: f64,
    streams: &mut NoiseStreams,
) -> Result<State> {
    let mut writes = Vec::with_capacity(commands.len());
    for (name, &x) in commands {
        let i = world.require_index(name)?;
        let domain = world.variables()[i].domain;
        if !domain.contains(x) {
            return Err(Error::OutOfDomain {
                name: name.clone(),
                value: x,
                domain,
            });
        }
        writes.push((i, x));
    }
    let (mut work, mut out) = (Vec::new(), Vec::new());
    step_into(world, state.values(), &writes, delta, streams, &mut work, &mut out)?;
    Ok(State::from_values(out))
}

/// Reads the body's sensors at sample `n` of `history`.
///
/// Each sample is processed as value + gauss(σ), then rounded to the
/// channel resolution; a channel with latency k reports the processed
/// sample from `n − k` (sample 0 before that).
pub fn sense(world: &World, body: &AgentBody, history: &History, n: usize, seed: u64) -> Result<Observation> {
    let mut values = BTreeMap::new();
    for ch in &body.sensors {
        let i = world.require_index(&ch.variable)?;
        let m = n.saturating_sub(ch.latency as usize);
        values.insert(ch.variable.clone(), read_sensor(ch, history.state(m).values()[i], m, seed));
    }
    Ok(Observation { values })
}

fn read_sensor(ch: &Channel, x: f64, m: usize, seed: u64) -> f64 {
    let key = format!("sensor:{}", ch.variable);
    quantize(x + keyed_gauss(seed, &key, m as u64, ch.noise_sigma), ch.resolution)
}

#[derive(Debug, Clone)]
struct ActuatorLine {
    index: usize,
    channel: Channel,
    domain: Interval,
    /// Processed commands waiting out the latency.
    queue: VecDeque<Option<f64>>,
}

/// Noise, quantization and latency on the way from controller to world.
/// Values leaving the channel are clamped to the actuator's domain.
#[derive(Debug, Clone)]
pub struct ActuatorPipeline {
    lines: Vec<ActuatorLine>,
    seed: u64,
    clamp: bool,
}

impl ActuatorPipeline {
    pub fn new(world: &World, body: &AgentBody, seed: u64, clamp: bool) -> Result<Self> {
        let mut lines = Vec::with_capacity(body.actuators.len());
        for ch in &body.actuators {
            let index = world.require_index(&ch.variable)?;
            lines.push(ActuatorLine {
                index,
                channel: ch.clone(),
                domain: world.variables()[index].domain,
                queue: std::iter::repeat_n(None, ch.latency as usize).collect(),
            });
        }
        Ok(ActuatorPipeline { lines, seed, clamp })
    }

    /// Position of actuator `name` in the body's list.
    pub fn position(&self, name: &str) -> Option<usize> {
        self.lines.iter().position(|l| l.channel.variable == name)
    }

    /// Pushes one command per actuator (`None` = no write) for step `n` and
    /// returns the writes that reach the world this step.
    pub(crate) fn push(&mut self, n: u64, commands: &[Option<f64>], writes: &mut Vec<(usize, f64)>) -> Result<()> {
        writes.clear();
        for (line, cmd) in self.lines.iter_mut().zip(commands) {
            let processed = match *cmd {
                None => None,
                Some(raw) => {
                    let raw = if line.domain.contains(raw) {
                        raw
                    } else if self.clamp && !raw.is_nan() {
                        line.domain.clamp(raw)
                    } else {
                        return Err(Error::OutOfDomain {
                            name: line.channel.variable.clone(),
                            value: raw,
                            domain: line.domain,
                        });
                    };
                    let key = format!("actuator:{}", line.channel.variable);
                    let noisy = raw + keyed_gauss(self.seed, &key, n, line.channel.noise_sigma);
                    Some(line.domain.clamp(quantize(noisy, line.channel.resolution)))
                }
            };
            line.queue.push_back(processed);
            if let Some(Some(x)) = line.queue.pop_front() {
                writes.push((line.index, x));
            }
        }
        Ok(())
    }

    /// Like [`ActuatorPipeline::push`] with named commands.
    pub fn push_named(&mut self, n: u64, commands: &Commands) -> Result<Vec<(usize, f64)>> {
        let mut slots = vec![None; self.lines.len()];
        for (name, &x) in commands {
            let k = self
                .position(name)
                .ok_or_else(|| Error::NotAnActuator(name.clone()))?;
            slots[k] = Some(x);
        }
        let mut writes = Vec::new();
        self.push(n, &slots, &mut writes)?;
        Ok(writes)
    }
}

/// Result of a single run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub history: History,
    pub status: TaskStatus,
    /// Final per-goal flags (see [`StatusTracker::goal_flags`]).
    pub goal_flags: Vec<bool>,
}

impl RunOutcome {
    /// Energy used between the start and the last sample.
    pub fn energy_spent(&self, world: &World, task: &Task) -> Result<f64> {
        let i = world.require_index(&task.energy.variable)?;
        Ok(self.history.initial.values()[i] - self.history.last_state().values()[i])
    }

    pub fn final_value(&self, world: &World, name: &str) -> Option<f64> {
        self.history.last_state().get(world, name)
    }
}

/// Runs `controller` on `task` until success, failure or the horizon.
pub fn run(doc: &TaskDocument, task: &Task, controller: &mut dyn Controller, cfg: &SimConfig) -> Result<RunOutcome> {
    cfg.validate(task)?;
    let world = &doc.world;
    let body = doc.body_of(task)?;
    let delta = cfg.delta;
    let horizon = cfg.horizon_for(task);
    let seed = cfg.master_seed;

    let start = world.start_state(&task.start)?;
    let mut history = History::new(delta, horizon, start.clone());
    let mut tracker = StatusTracker::new(world, task, delta, horizon)?;
    let mut pipeline = ActuatorPipeline::new(world, body, seed, cfg.clamp_actuators)?;
    let mut streams = NoiseStreams::new(seed);
    controller.reset(stream_seed(seed, "controller"));

    let mut status = tracker.observe(0, start.values());
    let (mut work, mut out) = (Vec::new(), Vec::new());
    let mut n: u64 = 0;
    while !status.is_terminal() {
        let obs = sense(world, body, &history, n as usize, seed)?;
        let briefing = match &task.communication {
            Communication::FullDescription => Briefing::Full(task),
            Communication::IncrementalReinforcement => Briefing::Reinforcement {
                goal_flags: tracker.goal_flags(),
            },
            Communication::Hints(h) => Briefing::Hints(h.as_deref()),
        };
        let ctx = DecisionContext {
            step: n,
            elapsed: n as f64 * delta,
            delta,
            world,
            body,
            briefing,
        };
        let commands = controller.decide(&obs, &ctx)?;
        let writes = pipeline.push_named(n, &commands)?;
        let pre = history.last_state().values();
        step_into(world, pre, &writes, delta, &mut streams, &mut work, &mut out)?;
        let post = State::from_values(out.clone());
        let applied = writes
            .iter()
            .map(|&(i, x)| (world.variables()[i].name.clone(), x))
            .collect();
        n += 1;
        status = tracker.observe(n, post.values());
        let record = StepRecord {
            step: n - 1,
            pre: State::from_values(pre.to_vec()),
            commands,
            applied,
            violations: world.violations(&post),
            post,
        };
        history.records.push(record);
    }
    Ok(RunOutcome {
        history,
        status,
        goal_flags: tracker.goal_flags().to_vec(),
    })
}

/// Runs the world with no commands for `steps` steps, keeping only the
/// dense states.
pub(crate) fn free_run(world: &World, start: &State, delta: f64, steps: u64, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut streams = NoiseStreams::new(seed);
    let mut states = Vec::with_capacity(steps as usize + 1);
    states.push(start.values().to_vec());
    let (mut work, mut out) = (Vec::new(), Vec::new());
    for _ in 0..steps {
        step_into(world, states.last().unwrap(), &[], delta, &mut streams, &mut work, &mut out)?;
        states.push(out.clone());
    }
    Ok(states)
}

/// Assignment view of sample `n`.
pub fn assignment_at(world: &World, history: &History, n: usize) -> Assignment {
    world.assignment(history.state(n))
}
