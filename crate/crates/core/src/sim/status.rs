//! Task status detection over a sampled history.
//!
//! Samples are taken at `t_n = n·δ`, with sample 0 the start state. A goal
//! with hold duration `h` needs `max(1, round(h/δ))` consecutive covered
//! samples inside its window. Windows are measured from the sample at which
//! the enclosing problem started.

use serde::{Deserialize, Serialize};

use super::History;
use crate::algebra::{Goal, Polarity, Problem, ProblemNode, Task};
use crate::error::Result;
use crate::world::{CompiledPartial, World};

/// Slack for comparing sample times against authored times.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureCause {
    /// A failure partial state was covered.
    FailureState,
    /// The deadline passed, or a goal window closed unmet.
    DeadlineExceeded,
    EnergyExhausted,
    HorizonReached,
    /// The start state did not meet the problem's initial conditions.
    InitialConditions,
}

impl FailureCause {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureCause::FailureState => "failure-state",
            FailureCause::DeadlineExceeded => "deadline-exceeded",
            FailureCause::EnergyExhausted => "energy-exhausted",
            FailureCause::HorizonReached => "horizon-reached",
            FailureCause::InitialConditions => "initial-conditions",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum TaskStatus {
    InProgress,
    Success { time: f64 },
    Failure { cause: FailureCause, time: f64 },
}

impl TaskStatus {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, TaskStatus::InProgress)
    }

    pub fn is_success(&self) -> bool {
        matches!(self, TaskStatus::Success { .. })
    }

    pub fn time(&self) -> Option<f64> {
        match *self {
            TaskStatus::InProgress => None,
            TaskStatus::Success { time } | TaskStatus::Failure { time, .. } => Some(time),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            TaskStatus::InProgress => "in-progress",
            TaskStatus::Success { .. } => "success",
            TaskStatus::Failure { cause, .. } => cause.as_str(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Verdict {
    Pending,
    Success,
    Failure(FailureCause),
}

#[derive(Debug, Clone)]
struct GoalTracker {
    target: CompiledPartial,
    polarity: Polarity,
    start: f64,
    end: f64,
    need: u64,
    run: u64,
    done: bool,
    /// Position in the problem's pre-order goal list.
    slot: usize,
}

impl GoalTracker {
    fn new(world: &World, g: &Goal, delta: f64, slot: usize) -> Result<Self> {
        let need = match g.hold {
            Some(h) => ((h / delta).round() as u64).max(1),
            None => 1,
        };
        Ok(GoalTracker {
            target: g.target.compile(world)?,
            polarity: g.polarity,
            start: g.window.start,
            end: g.window.end,
            need,
            run: 0,
            done: false,
            slot,
        })
    }

    fn in_window(&self, t: f64) -> bool {
        t >= self.start - TIME_EPS && t <= self.end + TIME_EPS
    }

    /// Samples still inside the window after the one at `t`.
    fn remaining(&self, t: f64, delta: f64) -> f64 {
        if self.end.is_infinite() {
            f64::INFINITY
        } else {
            ((self.end - t) / delta + TIME_EPS).floor().max(0.0)
        }
    }
}

#[derive(Debug, Clone)]
struct Atom {
    goals: Vec<GoalTracker>,
    /// Task deadline, for atoms made only of failure entries: those succeed
    /// once the deadline passes without a failure state being reached.
    watch_until: Option<f64>,
}

impl Atom {
    fn observe(&mut self, n: u64, start: u64, values: &[f64], delta: f64, flags: &mut [bool]) -> Verdict {
        let m = n - start;
        let t = m as f64 * delta;
        for g in self.goals.iter_mut().filter(|g| g.polarity == Polarity::Failure) {
            if g.in_window(t) && g.target.covers(values) {
                g.run += 1;
                flags[g.slot] = true;
                if g.run >= g.need {
                    return Verdict::Failure(FailureCause::FailureState);
                }
            } else {
                g.run = 0;
                flags[g.slot] = false;
            }
            if t >= g.end - TIME_EPS {
                g.done = true;
            }
        }
        if let Some(deadline) = self.watch_until {
            let open = self.goals.iter().any(|g| !g.done);
            return if open && (n as f64 * delta) < deadline - TIME_EPS {
                Verdict::Pending
            } else {
                Verdict::Success
            };
        }
        let mut verdict = Verdict::Success;
        for g in self.goals.iter_mut() {
            match g.polarity {
                Polarity::Failure => {
                    if !g.done && g.end.is_finite() {
                        verdict = Verdict::Pending;
                    }
                }
                Polarity::Goal => {
                    if g.done {
                        continue;
                    }
                    if g.in_window(t) {
                        if g.target.covers(values) {
                            g.run += 1;
                        } else {
                            g.run = 0;
                        }
                        if g.run >= g.need {
                            g.done = true;
                            flags[g.slot] = true;
                            continue;
                        }
                        if (g.run as f64) + g.remaining(t, delta) < g.need as f64 {
                            return Verdict::Failure(FailureCause::DeadlineExceeded);
                        }
                    } else if t > g.end + TIME_EPS {
                        return Verdict::Failure(FailureCause::DeadlineExceeded);
                    }
                    verdict = Verdict::Pending;
                }
            }
        }
        verdict
    }
}

#[derive(Debug, Clone)]
enum Node {
    Atomic(Atom),
    And(Box<Tracked>, Box<Tracked>),
    Or(Box<Tracked>, Box<Tracked>),
    Then(Box<Tracked>, Box<Tracked>),
}

/// A problem node with its start sample and latched verdict.
#[derive(Debug, Clone)]
struct Tracked {
    initial: CompiledPartial,
    node: Node,
    start: Option<u64>,
    verdict: Verdict,
}

impl Tracked {
    fn build(world: &World, p: &Problem, delta: f64, deadline: f64, slot: &mut usize) -> Result<Tracked> {
        let node = match &p.node {
            ProblemNode::Atomic(goals) => {
                let mut trackers = Vec::with_capacity(goals.len());
                for g in goals {
                    trackers.push(GoalTracker::new(world, g, delta, *slot)?);
                    *slot += 1;
                }
                let failure_only =
                    !goals.is_empty() && goals.iter().all(|g| g.polarity == Polarity::Failure);
                Node::Atomic(Atom {
                    goals: trackers,
                    watch_until: failure_only.then_some(deadline),
                })
            }
            ProblemNode::And(a, b) => Node::And(
                Box::new(Tracked::build(world, a, delta, deadline, slot)?),
                Box::new(Tracked::build(world, b, delta, deadline, slot)?),
            ),
            ProblemNode::Or(a, b) => Node::Or(
                Box::new(Tracked::build(world, a, delta, deadline, slot)?),
                Box::new(Tracked::build(world, b, delta, deadline, slot)?),
            ),
            ProblemNode::Then(a, b) => Node::Then(
                Box::new(Tracked::build(world, a, delta, deadline, slot)?),
                Box::new(Tracked::build(world, b, delta, deadline, slot)?),
            ),
            ProblemNode::Not(_) => unreachable!("trackers are built from negation normal form"),
        };
        Ok(Tracked {
            initial: p.initial.compile(world)?,
            node,
            start: None,
            verdict: Verdict::Pending,
        })
    }

    fn observe(&mut self, n: u64, values: &[f64], delta: f64, flags: &mut [bool]) -> Verdict {
        if self.verdict != Verdict::Pending {
            return self.verdict;
        }
        let start = *self.start.get_or_insert(n);
        if start == n && !self.initial.covers(values) {
            self.verdict = Verdict::Failure(FailureCause::InitialConditions);
            return self.verdict;
        }
        self.verdict = match &mut self.node {
            Node::Atomic(atom) => atom.observe(n, start, values, delta, flags),
            Node::And(a, b) => {
                let (va, vb) = (a.observe(n, values, delta, flags), b.observe(n, values, delta, flags));
                match (va, vb) {
                    (Verdict::Failure(c), _) | (_, Verdict::Failure(c)) => Verdict::Failure(c),
                    (Verdict::Success, Verdict::Success) => Verdict::Success,
                    _ => Verdict::Pending,
                }
            }
            Node::Or(a, b) => {
                let (va, vb) = (a.observe(n, values, delta, flags), b.observe(n, values, delta, flags));
                match (va, vb) {
                    (Verdict::Success, _) | (_, Verdict::Success) => Verdict::Success,
                    (Verdict::Failure(c), Verdict::Failure(_)) => Verdict::Failure(c),
                    _ => Verdict::Pending,
                }
            }
            Node::Then(a, b) => match a.observe(n, values, delta, flags) {
                Verdict::Success => b.observe(n, values, delta, flags),
                other => other,
            },
        };
        self.verdict
    }
}

/// Incremental status of one task over a run.
#[derive(Debug, Clone)]
pub struct StatusTracker {
    root: Tracked,
    delta: f64,
    deadline: f64,
    horizon: f64,
    energy_index: usize,
    energy_floor: f64,
    flags: Vec<bool>,
    status: TaskStatus,
}

impl StatusTracker {
    pub fn new(world: &World, task: &Task, delta: f64, horizon: f64) -> Result<Self> {
        let nnf = task.problem.negation_normal_form();
        let mut slots = 0;
        let root = Tracked::build(world, &nnf, delta, task.deadline, &mut slots)?;
        Ok(StatusTracker {
            root,
            delta,
            deadline: task.deadline,
            horizon,
            energy_index: world.require_index(&task.energy.variable)?,
            energy_floor: task.energy.floor,
            flags: vec![false; slots],
            status: TaskStatus::InProgress,
        })
    }

    pub fn status(&self) -> TaskStatus {
        self.status
    }

    /// Per-goal flags, in pre-order over the negation normal form: goal
    /// entries latch once met; failure entries show current coverage.
    pub fn goal_flags(&self) -> &[bool] {
        &self.flags
    }

    /// Feeds sample `n`. Samples must arrive in order starting at 0. Once
    /// the status is terminal, further samples are ignored.
    pub fn observe(&mut self, n: u64, values: &[f64]) -> TaskStatus {
        if self.status.is_terminal() {
            return self.status;
        }
        let t = n as f64 * self.delta;
        let verdict = self.root.observe(n, values, self.delta, &mut self.flags);
        self.status = if let Verdict::Failure(cause) = verdict {
            TaskStatus::Failure { cause, time: t }
        } else if values[self.energy_index] <= self.energy_floor + energy_slack(self.energy_floor) {
            TaskStatus::Failure {
                cause: FailureCause::EnergyExhausted,
                time: t,
            }
        } else if verdict == Verdict::Success {
            TaskStatus::Success { time: t }
        } else if t >= self.deadline - TIME_EPS * self.delta.max(1.0) {
            TaskStatus::Failure {
                cause: FailureCause::DeadlineExceeded,
                time: t,
            }
        } else if t >= self.horizon - TIME_EPS * self.delta.max(1.0) {
            TaskStatus::Failure {
                cause: FailureCause::HorizonReached,
                time: t,
            }
        } else {
            TaskStatus::InProgress
        };
        self.status
    }
}

/// Rounding slack on the energy floor, so that a budget spent in many equal
/// steps runs out on the step where it is exactly used up.
pub(crate) fn energy_slack(floor: f64) -> f64 {
    1e-9 * floor.abs().max(1.0)
}

/// Recomputes the status of `task` from a stored history.
pub fn check_status(world: &World, task: &Task, history: &History) -> Result<TaskStatus> {
    let mut tracker = StatusTracker::new(world, task, history.delta, history.horizon)?;
    let mut status = TaskStatus::InProgress;
    for n in 0..=history.len() {
        status = tracker.observe(n as u64, history.state(n).values());
        if status.is_terminal() {
            break;
        }
    }
    Ok(status)
}
