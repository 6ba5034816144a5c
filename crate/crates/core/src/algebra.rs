//! Goals, problems and tasks, and the operations that combine, split,
//! abstract and vary them.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::expr::Expr;
use crate::interval::Interval;
use crate::rng::{derive_seed, stream_seed};
use crate::taskdl::{self, TaskDocument};
use crate::world::{Assignment, Channel, PartialState, TransitionRule, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    Goal,
    Failure,
}

/// Time window of a goal, in seconds relative to the start of the problem
/// the goal belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub const ALWAYS: Window = Window {
        start: 0.0,
        end: f64::INFINITY,
    };

    pub fn new(start: f64, end: f64) -> Self {
        Window { start, end }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

impl Default for Window {
    fn default() -> Self {
        Window::ALWAYS
    }
}

/// A target partial state to reach (or avoid) within a window, held for at
/// least `hold` seconds. `hold = None` means a single step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Goal {
    pub target: PartialState,
    pub window: Window,
    pub hold: Option<f64>,
    pub polarity: Polarity,
}

impl Goal {
    pub fn reach(target: PartialState) -> Self {
        Goal {
            target,
            window: Window::ALWAYS,
            hold: None,
            polarity: Polarity::Goal,
        }
    }

    pub fn avoid(target: PartialState) -> Self {
        Goal {
            polarity: Polarity::Failure,
            ..Goal::reach(target)
        }
    }

    pub fn within(mut self, window: Window) -> Self {
        self.window = window;
        self
    }

    pub fn held_for(mut self, seconds: f64) -> Self {
        self.hold = Some(seconds);
        self
    }

    pub fn flipped(&self) -> Goal {
        Goal {
            polarity: match self.polarity {
                Polarity::Goal => Polarity::Failure,
                Polarity::Failure => Polarity::Goal,
            },
            ..self.clone()
        }
    }

    fn validate(&self, world: &World) -> Result<()> {
        self.target.check_against(world)?;
        if !(self.window.start <= self.window.end) || self.window.start.is_nan() {
            return Err(invalid(format!(
                "goal window [{}, {}] is empty",
                self.window.start, self.window.end
            )));
        }
        if let Some(h) = self.hold {
            if !(h >= 0.0) || h > self.window.length() {
                return Err(invalid(format!(
                    "hold duration {h} must be >= 0 and fit the goal window"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemNode {
    /// Reach every goal-polarity entry; never cover a failure entry.
    Atomic(Vec<Goal>),
    And(Box<Problem>, Box<Problem>),
    Or(Box<Problem>, Box<Problem>),
    Not(Box<Problem>),
    /// The first problem, then the second starting where the first succeeded.
    Then(Box<Problem>, Box<Problem>),
}

/// Initial conditions plus a (possibly compound) goal structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub initial: PartialState,
    pub node: ProblemNode,
}

impl Problem {
    pub fn atomic(goals: Vec<Goal>) -> Self {
        Problem {
            initial: PartialState::new(),
            node: ProblemNode::Atomic(goals),
        }
    }

    /// Succeeds immediately.
    pub fn trivial() -> Self {
        Problem::atomic(Vec::new())
    }

    pub fn with_initial(mut self, initial: PartialState) -> Self {
        self.initial = initial;
        self
    }

    pub fn validate(&self, world: &World) -> Result<()> {
        self.initial.check_against(world)?;
        match &self.node {
            ProblemNode::Atomic(goals) => goals.iter().try_for_each(|g| g.validate(world)),
            ProblemNode::And(a, b) | ProblemNode::Or(a, b) | ProblemNode::Then(a, b) => {
                a.validate(world)?;
                b.validate(world)
            }
            ProblemNode::Not(a) => a.validate(world),
        }
    }

    /// All goals in pre-order, across every atomic leaf.
    pub fn goals(&self) -> Vec<&Goal> {
        let mut out = Vec::new();
        self.collect_goals(&mut out);
        out
    }

    fn collect_goals<'a>(&'a self, out: &mut Vec<&'a Goal>) {
        match &self.node {
            ProblemNode::Atomic(goals) => out.extend(goals.iter()),
            ProblemNode::And(a, b) | ProblemNode::Or(a, b) | ProblemNode::Then(a, b) => {
                a.collect_goals(out);
                b.collect_goals(out);
            }
            ProblemNode::Not(a) => a.collect_goals(out),
        }
    }

    fn map_goals(&self, f: &mut impl FnMut(&Goal) -> Result<Goal>) -> Result<Problem> {
        let node = match &self.node {
            ProblemNode::Atomic(goals) => {
                ProblemNode::Atomic(goals.iter().map(&mut *f).collect::<Result<_>>()?)
            }
            ProblemNode::And(a, b) => ProblemNode::And(Box::new(a.map_goals(f)?), Box::new(b.map_goals(f)?)),
            ProblemNode::Or(a, b) => ProblemNode::Or(Box::new(a.map_goals(f)?), Box::new(b.map_goals(f)?)),
            ProblemNode::Then(a, b) => ProblemNode::Then(Box::new(a.map_goals(f)?), Box::new(b.map_goals(f)?)),
            ProblemNode::Not(a) => ProblemNode::Not(Box::new(a.map_goals(f)?)),
        };
        Ok(Problem {
            initial: self.initial.clone(),
            node,
        })
    }

    /// Pushes every `Not` down to the atomic leaves.
    pub fn negation_normal_form(&self) -> Problem {
        match &self.node {
            ProblemNode::Not(a) => with_extra_initial(negate(a), &self.initial),
            ProblemNode::Atomic(_) => self.clone(),
            ProblemNode::And(a, b) => Problem {
                initial: self.initial.clone(),
                node: ProblemNode::And(Box::new(a.negation_normal_form()), Box::new(b.negation_normal_form())),
            },
            ProblemNode::Or(a, b) => Problem {
                initial: self.initial.clone(),
                node: ProblemNode::Or(Box::new(a.negation_normal_form()), Box::new(b.negation_normal_form())),
            },
            ProblemNode::Then(a, b) => Problem {
                initial: self.initial.clone(),
                node: ProblemNode::Then(Box::new(a.negation_normal_form()), Box::new(b.negation_normal_form())),
            },
        }
    }
}

/// Adds initial conditions to `p`, nesting it when the bounds cannot merge.
fn with_extra_initial(p: Problem, extra: &PartialState) -> Problem {
    if extra.is_empty() {
        return p;
    }
    let mut merged = p.initial.clone();
    if extra.iter().all(|(n, iv)| merged.insert(n.clone(), *iv).is_ok()) {
        return Problem {
            initial: merged,
            node: p.node,
        };
    }
    Problem {
        initial: extra.clone(),
        node: ProblemNode::And(Box::new(p), Box::new(Problem::trivial())),
    }
}

fn same_world(world: &World, a: &Problem, b: &Problem) -> Result<()> {
    a.validate(world)
        .and_then(|_| b.validate(world))
        .map_err(|e| invalid(format!("problems do not share world `{}`: {e}", world.name())))
}

/// Both problems must succeed on the same history.
pub fn conjoin(world: &World, a: &Problem, b: &Problem) -> Result<Problem> {
    same_world(world, a, b)?;
    Ok(Problem {
        initial: PartialState::new(),
        node: ProblemNode::And(Box::new(a.clone()), Box::new(b.clone())),
    })
}

/// At least one of the problems must succeed.
pub fn disjoin(world: &World, a: &Problem, b: &Problem) -> Result<Problem> {
    same_world(world, a, b)?;
    Ok(Problem {
        initial: PartialState::new(),
        node: ProblemNode::Or(Box::new(a.clone()), Box::new(b.clone())),
    })
}

/// Swaps goal and failure states at every atomic leaf, applying De Morgan
/// through conjunctions and disjunctions. Initial conditions are kept.
pub fn negate(p: &Problem) -> Problem {
    let node = match &p.node {
        ProblemNode::Atomic(goals) => ProblemNode::Atomic(goals.iter().map(Goal::flipped).collect()),
        ProblemNode::And(a, b) => ProblemNode::Or(Box::new(negate(a)), Box::new(negate(b))),
        ProblemNode::Or(a, b) => ProblemNode::And(Box::new(negate(a)), Box::new(negate(b))),
        ProblemNode::Not(a) => return with_extra_initial(a.negation_normal_form(), &p.initial),
        // Fails iff the first part fails, or it succeeds and the second fails.
        ProblemNode::Then(a, b) => ProblemNode::Or(
            Box::new(negate(a)),
            Box::new(Problem {
                initial: PartialState::new(),
                node: ProblemNode::Then(a.clone(), Box::new(negate(b))),
            }),
        ),
    };
    Problem {
        initial: p.initial.clone(),
        node,
    }
}

/// How the task is communicated to the agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Communication {
    FullDescription,
    IncrementalReinforcement,
    /// Opaque hint payload.
    Hints(Option<String>),
}

/// The run fails once `variable` drops to `floor` or below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget {
    pub variable: String,
    pub floor: f64,
}

/// A problem assigned to an agent body, with a deadline and energy budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub name: String,
    pub problem: Problem,
    pub body: String,
    pub communication: Communication,
    /// Seconds from the start of the run.
    pub deadline: f64,
    pub energy: EnergyBudget,
    /// Overrides applied to the world's initial state at the start of a run.
    pub start: Assignment,
    /// Parameters that generated this task, if it is a variant.
    pub params: BTreeMap<String, f64>,
}

impl Task {
    pub fn new(
        name: impl Into<String>,
        body: impl Into<String>,
        problem: Problem,
        deadline: f64,
        energy: EnergyBudget,
    ) -> Self {
        Task {
            name: name.into(),
            problem,
            body: body.into(),
            communication: Communication::FullDescription,
            deadline,
            energy,
            start: Assignment::new(),
            params: BTreeMap::new(),
        }
    }

    /// A task that succeeds at its first sample.
    pub fn trivial(body: impl Into<String>, deadline: f64, energy: EnergyBudget) -> Self {
        Task::new("trivial", body, Problem::trivial(), deadline, energy)
    }

    pub fn validate(&self, world: &World) -> Result<()> {
        if !(self.deadline >= 0.0) || !self.deadline.is_finite() {
            return Err(invalid(format!(
                "task `{}` needs a finite non-negative deadline",
                self.name
            )));
        }
        world.require_index(&self.energy.variable)?;
        if !self.energy.floor.is_finite() {
            return Err(invalid(format!("task `{}` needs a finite energy floor", self.name)));
        }
        for (name, value) in &self.start {
            let var = world
                .variable(name)
                .ok_or_else(|| Error::UnknownVariable(name.clone()))?;
            if !var.domain.contains(*value) {
                return Err(Error::OutOfDomain {
                    name: name.clone(),
                    value: *value,
                    domain: var.domain,
                });
            }
        }
        self.problem.validate(world)
    }

    /// Value of `name` at the start of a run.
    pub fn start_value(&self, world: &World, name: &str) -> Result<f64> {
        match self.start.get(name) {
            Some(v) => Ok(*v),
            None => world
                .initial_state()
                .get(world, name)
                .ok_or_else(|| Error::UnknownVariable(name.to_string())),
        }
    }
}

fn goal_targets(p: &Problem) -> Vec<&PartialState> {
    p.goals()
        .into_iter()
        .filter(|g| g.polarity == Polarity::Goal)
        .map(|g| &g.target)
        .collect()
}

/// `a` then `b`: succeeds iff the history holds a success of `a` followed by
/// a success of `b` measured from that point. Deadlines add up; the energy
/// floor is the lower of the two.
pub fn serial_compose(world: &World, a: &Task, b: &Task) -> Result<Task> {
    a.validate(world)?;
    b.validate(world)?;
    if a.body != b.body {
        return Err(invalid(format!(
            "cannot chain tasks on different bodies `{}` and `{}`",
            a.body, b.body
        )));
    }
    if a.energy.variable != b.energy.variable {
        return Err(invalid("chained tasks must budget the same energy variable"));
    }
    let targets = goal_targets(&a.problem);
    if !targets.is_empty() && !targets.iter().any(|t| b.problem.initial.compatible_with(t)) {
        return Err(invalid(format!(
            "initial conditions of `{}` contradict every goal of `{}`",
            b.name, a.name
        )));
    }
    let mut params = a.params.clone();
    params.extend(b.params.iter().map(|(k, v)| (k.clone(), *v)));
    Ok(Task {
        name: format!("{}_then_{}", a.name, b.name),
        problem: Problem {
            initial: PartialState::new(),
            node: ProblemNode::Then(Box::new(a.problem.clone()), Box::new(b.problem.clone())),
        },
        body: a.body.clone(),
        communication: a.communication.clone(),
        deadline: a.deadline + b.deadline,
        energy: EnergyBudget {
            variable: a.energy.variable.clone(),
            floor: a.energy.floor.min(b.energy.floor),
        },
        start: a.start.clone(),
        params,
    })
}

/// A milestone to pass through and the time allotted to reach it.
#[derive(Debug, Clone, PartialEq)]
pub struct Milestone {
    pub target: PartialState,
    pub deadline: f64,
}

/// Splits `t` at the given milestones. Segment `i` starts where segment
/// `i - 1` reached its milestone; the last segment keeps `t`'s own problem
/// and the remaining time.
pub fn decompose_serial(world: &World, t: &Task, milestones: &[Milestone]) -> Result<Vec<Task>> {
    t.validate(world)?;
    if milestones.is_empty() {
        return Ok(vec![t.clone()]);
    }
    let own_goal = match &t.problem.node {
        ProblemNode::Atomic(goals) => {
            let reach: Vec<_> = goals.iter().filter(|g| g.polarity == Polarity::Goal).collect();
            (reach.len() == 1).then(|| reach[0].target.clone())
        }
        _ => None,
    };
    let mut out = Vec::new();
    let mut used = 0.0;
    let mut previous: Option<PartialState> = None;
    for (i, m) in milestones.iter().enumerate() {
        m.target.check_against(world)?;
        if !(m.deadline > 0.0) {
            return Err(invalid("milestone deadlines must be positive"));
        }
        used += m.deadline;
        if used > t.deadline {
            return Err(invalid(format!(
                "milestone deadlines add up to {used}, beyond the task deadline {}",
                t.deadline
            )));
        }
        let initial = previous.clone().unwrap_or_else(|| t.problem.initial.clone());
        if own_goal.as_ref() == Some(&m.target) {
            let mut seg = t.clone();
            seg.name = format!("{}_{}", t.name, i + 1);
            seg.deadline = m.deadline;
            seg.problem.initial = initial;
            if i > 0 {
                seg.start.clear();
            }
            out.push(seg);
            let mut rest = Task::trivial(&t.body, t.deadline - used, t.energy.clone());
            rest.name = format!("{}_{}", t.name, i + 2);
            out.push(rest);
            return Ok(out);
        }
        let mut seg = Task::new(
            format!("{}_{}", t.name, i + 1),
            &t.body,
            Problem::atomic(vec![Goal::reach(m.target.clone())]).with_initial(initial),
            m.deadline,
            t.energy.clone(),
        );
        seg.communication = t.communication.clone();
        if i == 0 {
            seg.start = t.start.clone();
        }
        out.push(seg);
        previous = Some(m.target.clone());
    }
    let mut last = t.clone();
    last.name = format!("{}_{}", t.name, milestones.len() + 1);
    last.deadline = t.deadline - used;
    last.start.clear();
    last.problem.initial = previous.expect("at least one milestone");
    out.push(last);
    Ok(out)
}

/// Rescales one bound relative to the start value: a bound the start value
/// does not yet satisfy moves `factor` times closer, one it already
/// satisfies moves `factor` times further away.
fn rescale_bound(bound: f64, start: f64, satisfied: bool, factor: f64) -> f64 {
    let d = bound - start;
    if satisfied {
        start + d * factor
    } else {
        start + d / factor
    }
}

fn rescale_interval(iv: &Interval, start: f64, factor: f64) -> Interval {
    match (iv.lo.is_finite(), iv.hi.is_finite()) {
        (true, true) => {
            let c = 0.5 * (iv.lo + iv.hi);
            let w = 0.5 * (iv.hi - iv.lo) * factor;
            Interval::new(c - w, c + w, iv.lo_open, iv.hi_open)
        }
        (true, false) => {
            let lo = rescale_bound(iv.lo, start, iv.contains(start), factor);
            Interval::new(lo, iv.hi, iv.lo_open, iv.hi_open)
        }
        (false, true) => {
            let hi = rescale_bound(iv.hi, start, iv.contains(start), factor);
            Interval::new(iv.lo, hi, iv.lo_open, iv.hi_open)
        }
        (false, false) => *iv,
    }
}

fn rescale_goals(world: &World, t: &Task, factors: &BTreeMap<String, f64>) -> Result<Problem> {
    let starts = factors
        .keys()
        .map(|n| Ok((n.clone(), t.start_value(world, n)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    t.problem.negation_normal_form().map_goals(&mut |g| {
        if g.polarity != Polarity::Goal {
            return Ok(g.clone());
        }
        let mut target = PartialState::new();
        for (name, iv) in g.target.iter() {
            let iv = match factors.get(name) {
                Some(f) => rescale_interval(iv, starts[name], *f),
                None => *iv,
            };
            target.insert(name.clone(), iv)?;
        }
        Ok(Goal {
            target,
            ..g.clone()
        })
    })
}

/// Widens goal intervals by the given factors (each >= 1) and drops the
/// listed variables from goal targets. Every history that solves `t` also
/// solves the result.
pub fn abstract_task(
    world: &World,
    t: &Task,
    widen: &BTreeMap<String, f64>,
    drop: &[String],
) -> Result<Task> {
    if let Some((n, f)) = widen.iter().find(|(_, f)| !(**f >= 1.0) || !f.is_finite()) {
        return Err(invalid(format!("abstraction factor for `{n}` must be >= 1, got {f}")));
    }
    for n in drop {
        world.require_index(n)?;
    }
    let widened = rescale_goals(world, t, widen)?;
    let problem = widened.map_goals(&mut |g| {
        if g.polarity != Polarity::Goal {
            return Ok(g.clone());
        }
        let mut target = g.target.clone();
        for n in drop {
            target.remove(n);
        }
        Ok(Goal {
            target,
            ..g.clone()
        })
    })?;
    Ok(Task {
        problem,
        ..t.clone()
    })
}

/// The inverse direction: narrows goal intervals by factors (each <= 1) and
/// adds bounds on variables not yet constrained by any goal.
pub fn concretize(
    world: &World,
    t: &Task,
    narrow: &BTreeMap<String, f64>,
    add: &PartialState,
) -> Result<Task> {
    if let Some((n, f)) = narrow
        .iter()
        .find(|(_, f)| !(**f > 0.0 && **f <= 1.0))
    {
        return Err(invalid(format!("concretization factor for `{n}` must be in (0, 1], got {f}")));
    }
    add.check_against(world)?;
    let constrained: Vec<String> = t
        .problem
        .goals()
        .iter()
        .filter(|g| g.polarity == Polarity::Goal)
        .flat_map(|g| g.target.variables().cloned())
        .collect();
    if let Some(n) = add.variables().find(|n| constrained.contains(n)) {
        return Err(invalid(format!("`{n}` is already constrained by a goal")));
    }
    let narrowed = rescale_goals(world, t, narrow)?;
    let problem = narrowed.map_goals(&mut |g| {
        if g.polarity != Polarity::Goal {
            return Ok(g.clone());
        }
        let mut target = g.target.clone();
        for (n, iv) in add.iter() {
            target.insert(n.clone(), *iv)?;
        }
        Ok(Goal {
            target,
            ..g.clone()
        })
    })?;
    Ok(Task {
        problem,
        ..t.clone()
    })
}

/// A sampling distribution for variant parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "kebab-case")]
pub enum Dist {
    Const { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Gauss { mean: f64, sigma: f64 },
}

impl Dist {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Dist::Const { value } => value,
            Dist::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..=hi)
                }
            }
            Dist::Gauss { mean, sigma } => {
                if sigma == 0.0 {
                    mean
                } else {
                    Normal::new(mean, sigma).map(|n| n.sample(rng)).unwrap_or(mean)
                }
            }
        }
    }

    /// Finite support, if any.
    fn support(&self) -> Option<(f64, f64)> {
        match *self {
            Dist::Const { value } => Some((value, value)),
            Dist::Uniform { lo, hi } => Some((lo, hi)),
            Dist::Gauss { sigma, mean } if sigma == 0.0 => Some((mean, mean)),
            Dist::Gauss { .. } => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Dist::Const { value } => value.is_finite(),
            Dist::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Dist::Gauss { mean, sigma } => mean.is_finite() && sigma.is_finite() && sigma >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("malformed distribution {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbMode {
    /// Replace the initial value.
    Set,
    /// Add to the initial value.
    Offset,
    /// Multiply the initial value.
    Scale,
}

impl PerturbMode {
    fn apply(self, base: f64, x: f64) -> f64 {
        match self {
            PerturbMode::Set => x,
            PerturbMode::Offset => base + x,
            PerturbMode::Scale => base * x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub variable: String,
    pub mode: PerturbMode,
    #[serde(flatten)]
    pub dist: Dist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    Sensor,
    Actuator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelOverride {
    pub body: String,
    pub kind: ChannelKind,
    pub variable: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency: Option<u32>,
}

/// An extra term composed onto a variable's dynamics. Inside `expr`, the
/// target variable stands for the value produced by the existing rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsAddition {
    pub name: String,
    pub target: String,
    #[serde(serialize_with = "expr_to_text", deserialize_with = "expr_from_text")]
    pub expr: Expr,
}

fn expr_to_text<S: Serializer>(e: &Expr, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&e.to_string())
}

fn expr_from_text<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Expr, D::Error> {
    let text = String::deserialize(d)?;
    taskdl::parse_expr(&text).map_err(serde::de::Error::custom)
}

/// Distributions and edits from which task variants are drawn.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariantSpec {
    pub perturbations: Vec<Perturbation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deadline_scale: Option<Dist>,
    /// Scales the energy allowance (start value minus floor).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_scale: Option<Dist>,
    pub channels: Vec<ChannelOverride>,
    pub dynamics: Vec<DynamicsAddition>,
    /// Bounds intersected into every goal target.
    pub clauses: PartialState,
}

/// One generated variant: the task and the document it runs in.
#[derive(Debug, Clone)]
pub struct Variant {
    pub task: Task,
    pub doc: TaskDocument,
}

const GAUSS_ATTEMPTS: usize = 1000;

fn draw_within(
    dist: &Dist,
    rng: &mut ChaCha8Rng,
    map: impl Fn(f64) -> f64,
    domain: &Interval,
    name: &str,
) -> Result<(f64, f64)> {
    if let Some((lo, hi)) = dist.support() {
        let (a, b) = (map(lo), map(hi));
        if !domain.contains(a) || !domain.contains(b) {
            return Err(invalid(format!(
                "perturbation of `{name}` can leave its domain {domain}"
            )));
        }
        let x = dist.sample(rng);
        return Ok((x, map(x)));
    }
    for _ in 0..GAUSS_ATTEMPTS {
        let x = dist.sample(rng);
        if domain.contains(map(x)) {
            return Ok((x, map(x)));
        }
    }
    Err(invalid(format!(
        "perturbation of `{name}` keeps falling outside its domain {domain}"
    )))
}

fn apply_dynamics(world: &World, additions: &[DynamicsAddition]) -> Result<World> {
    let mut rules: Vec<TransitionRule> = world.rules().to_vec();
    for add in additions {
        world.require_index(&add.target)?;
        match rules.iter_mut().find(|r| r.target == add.target) {
            Some(rule) => {
                let composed = add.expr.substitute(&add.target, &rule.expr);
                *rule = TransitionRule::new(add.target.clone(), composed);
            }
            None => rules.push(TransitionRule::new(add.target.clone(), add.expr.clone())),
        }
    }
    World::new(
        world.name(),
        world.variables().to_vec(),
        rules,
        &world.assignment(world.initial_state()),
        world.relations().to_vec(),
    )
}

/// Draws `count` variants of task `task_name` reproducibly from `spec`.
pub fn generate_variants(
    doc: &TaskDocument,
    task_name: &str,
    spec: &VariantSpec,
    count: usize,
    seed: u64,
) -> Result<Vec<Variant>> {
    let base = doc.task(task_name)?;
    for p in &spec.perturbations {
        p.dist.validate()?;
        doc.world.require_index(&p.variable)?;
    }
    for d in spec.deadline_scale.iter().chain(&spec.energy_scale) {
        d.validate()?;
        if d.support().is_some_and(|(lo, _)| lo <= 0.0) {
            return Err(invalid("budget scales must stay positive"));
        }
    }

    let world = apply_dynamics(&doc.world, &spec.dynamics)?;
    let mut bodies = doc.bodies.clone();
    for o in &spec.channels {
        let body = bodies
            .get_mut(&o.body)
            .ok_or_else(|| Error::UnknownBody(o.body.clone()))?;
        let list = match o.kind {
            ChannelKind::Sensor => &mut body.sensors,
            ChannelKind::Actuator => &mut body.actuators,
        };
        let ch: &mut Channel = list
            .iter_mut()
            .find(|c| c.variable == o.variable)
            .ok_or_else(|| invalid(format!("body `{}` has no channel for `{}`", o.body, o.variable)))?;
        if let Some(x) = o.noise_sigma {
            ch.noise_sigma = x;
        }
        if let Some(x) = o.resolution {
            ch.resolution = x;
        }
        if let Some(x) = o.latency {
            ch.latency = x;
        }
    }

    let mut clause_problem = base.problem.clone();
    if !spec.clauses.is_empty() {
        clause_problem = clause_problem.negation_normal_form().map_goals(&mut |g| {
            if g.polarity != Polarity::Goal {
                return Ok(g.clone());
            }
            let mut target = g.target.clone();
            for (n, iv) in spec.clauses.iter() {
                target.insert(n.clone(), *iv)?;
            }
            Ok(Goal {
                target,
                ..g.clone()
            })
        })?;
    }

    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(derive_seed(seed, i as u64), "variant"));
        let mut task = base.clone();
        task.name = format!("{}_v{}", base.name, i);
        task.problem = clause_problem.clone();
        task.params.insert("variant".into(), i as f64);
        for p in &spec.perturbations {
            let var = world.variable(&p.variable).expect("checked above");
            let base_value = task.start_value(&world, &p.variable)?;
            let (drawn, value) = draw_within(
                &p.dist,
                &mut rng,
                |x| p.mode.apply(base_value, x),
                &var.domain,
                &p.variable,
            )?;
            task.start.insert(p.variable.clone(), value);
            task.params.insert(format!("{}.{}", p.variable, mode_key(p.mode)), drawn);
        }
        if let Some(d) = &spec.deadline_scale {
            let s = d.sample(&mut rng);
            task.deadline *= s;
            task.params.insert("deadline_scale".into(), s);
        }
        if let Some(d) = &spec.energy_scale {
            let s = d.sample(&mut rng);
            let e0 = task.start_value(&world, &task.energy.variable)?;
            task.energy.floor = e0 - (e0 - task.energy.floor) * s;
            task.params.insert("energy_scale".into(), s);
        }
        let variant_doc = TaskDocument::new(
            world.clone(),
            bodies.clone(),
            [(task.name.clone(), task.clone())].into(),
            BTreeMap::new(),
            doc.sim.clone(),
        )?;
        out.push(Variant {
            task,
            doc: variant_doc,
        });
    }
    Ok(out)
}

fn mode_key(mode: PerturbMode) -> &'static str {
    match mode {
        PerturbMode::Set => "set",
        PerturbMode::Offset => "offset",
        PerturbMode::Scale => "scale",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(pairs: &[(&str, Interval)]) -> PartialState {
        pairs.iter().map(|(n, iv)| (n.to_string(), *iv)).collect()
    }

    #[test]
    fn negation_is_an_involution_on_plain_trees() {
        let a = Problem::atomic(vec![Goal::reach(ps(&[("x", Interval::above(1.0))]))]);
        let b = Problem::atomic(vec![
            Goal::reach(ps(&[("y", Interval::below(0.0))])),
            Goal::avoid(ps(&[("x", Interval::above(5.0))])),
        ]);
        let p = Problem {
            initial: PartialState::new(),
            node: ProblemNode::Or(
                Box::new(a.clone()),
                Box::new(Problem {
                    initial: PartialState::new(),
                    node: ProblemNode::And(Box::new(a), Box::new(b)),
                }),
            ),
        };
        assert_eq!(negate(&negate(&p)), p);
        assert!(matches!(negate(&p).node, ProblemNode::And(..)));
    }

    #[test]
    fn one_sided_bounds_rescale_about_the_start_value() {
        // start 2, bound 10: distance 8 halves to 4.
        let iv = rescale_interval(&Interval::above(10.0), 2.0, 2.0);
        assert_eq!(iv, Interval::above(6.0));
        let back = rescale_interval(&iv, 2.0, 0.5);
        assert_eq!(back, Interval::above(10.0));
        // already satisfied: the bound moves away.
        let iv = rescale_interval(&Interval::below(5.0), 0.0, 2.0);
        assert_eq!(iv, Interval::below(10.0));
        let iv = rescale_interval(&Interval::closed(-1.0, 1.0), 0.0, 3.0);
        assert_eq!(iv, Interval::closed(-3.0, 3.0));
    }

    #[test]
    fn dist_support() {
        assert_eq!(Dist::Uniform { lo: 0.0, hi: 4.0 }.support(), Some((0.0, 4.0)));
        assert!(Dist::Gauss { mean: 0.0, sigma: 1.0 }.support().is_none());
        assert!(Dist::Uniform { lo: 3.0, hi: 1.0 }.validate().is_err());
    }
}
