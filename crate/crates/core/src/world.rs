//! Worlds, states, environments and agent bodies.
//!
//! A [`World`] holds its variables sorted by name; every dense [`State`] is
//! laid out in that order. Construction validates the whole tuple
//! (variables, dynamics, initial state, domains, relations), so a `World`
//! value is always internally consistent.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::expr::{Cond, Expr};
use crate::interval::Interval;
use crate::rng::NoiseStreams;

/// Name → value map; the loose form of a state used at API boundaries.
pub type Assignment = BTreeMap<String, f64>;

/// Name of the conventional clock variable.
pub const TIME_VAR: &str = "time";

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub domain: Interval,
    pub unit: Option<String>,
}

impl Variable {
    pub fn new(name: impl Into<String>, domain: Interval) -> Self {
        Variable {
            name: name.into(),
            domain,
            unit: None,
        }
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = Some(unit.into());
        self
    }
}

/// `target <- expr`, applied once per step.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRule {
    pub target: String,
    pub expr: Expr,
    pub(crate) target_index: usize,
}

impl TransitionRule {
    pub fn new(target: impl Into<String>, expr: Expr) -> Self {
        let target = target.into();
        let mut expr = expr;
        expr.renumber_noise(&target);
        TransitionRule {
            target,
            expr,
            target_index: usize::MAX,
        }
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }
}

impl fmt::Display for TransitionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <- {}", self.target, self.expr)
    }
}

/// A boolean relation that should hold in every state.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantRelation {
    pub cond: Cond,
}

impl InvariantRelation {
    pub fn new(cond: Cond) -> Self {
        InvariantRelation { cond }
    }

    pub fn holds(&self, values: &[f64]) -> bool {
        let mut quiet = NoiseStreams::new(0);
        self.cond.eval(values, 0.0, &mut quiet).unwrap_or(false)
    }
}

impl fmt::Display for InvariantRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.cond.fmt(f)
    }
}

/// A full assignment, dense in the owning world's variable order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State {
    values: Vec<f64>,
}

impl State {
    pub fn from_values(values: Vec<f64>) -> Self {
        State { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, world: &World, name: &str) -> Option<f64> {
        world.index_of(name).map(|i| self.values[i])
    }
}

/// Something that made a state invalid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    Relation { relation: String },
    Domain { variable: String, value: f64 },
}

/// The tuple of variables, dynamics, initial state, domains and relations.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    name: String,
    variables: Vec<Variable>,
    rules: Vec<TransitionRule>,
    relations: Vec<InvariantRelation>,
    initial: State,
    index: HashMap<String, usize>,
}

impl World {
    pub fn new(
        name: impl Into<String>,
        mut variables: Vec<Variable>,
        mut rules: Vec<TransitionRule>,
        initial: &Assignment,
        mut relations: Vec<InvariantRelation>,
    ) -> Result<World> {
        variables.sort_by(|a, b| a.name.cmp(&b.name));
        for pair in variables.windows(2) {
            if pair[0].name == pair[1].name {
                return Err(Error::DuplicateVariable(pair[0].name.clone()));
            }
        }
        for v in &variables {
            if v.domain.is_empty() {
                return Err(Error::EmptyDomain {
                    name: v.name.clone(),
                    domain: v.domain,
                });
            }
        }
        let index: HashMap<String, usize> = variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.clone(), i))
            .collect();

        rules.sort_by(|a, b| a.target.cmp(&b.target));
        for pair in rules.windows(2) {
            if pair[0].target == pair[1].target {
                return Err(Error::DuplicateRule(pair[0].target.clone()));
            }
        }
        for rule in &mut rules {
            rule.target_index = *index
                .get(&rule.target)
                .ok_or_else(|| Error::UnknownVariable(rule.target.clone()))?;
            rule.expr.resolve(&index).map_err(Error::UnknownVariable)?;
        }

        for rel in &mut relations {
            rel.cond.resolve(&index).map_err(Error::UnknownVariable)?;
            if rel.cond.has_noise() {
                return Err(invalid(format!("relation `{rel}` contains a noise term")));
            }
        }
        relations.sort_by_key(|r| r.to_string());

        let mut values = vec![f64::NAN; variables.len()];
        for (name, value) in initial {
            let i = *index
                .get(name)
                .ok_or_else(|| Error::UnknownVariable(name.clone()))?;
            values[i] = *value;
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::MissingVariable(variables[i].name.clone()));
        }

        let world = World {
            name: name.into(),
            variables,
            rules,
            relations,
            initial: State::from_values(values),
            index,
        };
        world.check_state(&world.initial)?;
        Ok(world)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.index_of(name).map(|i| &self.variables[i])
    }

    pub fn rules(&self) -> &[TransitionRule] {
        &self.rules
    }

    pub fn rule_for(&self, target: &str) -> Option<&TransitionRule> {
        self.rules.iter().find(|r| r.target == target)
    }

    pub fn relations(&self) -> &[InvariantRelation] {
        &self.relations
    }

    pub fn initial_state(&self) -> &State {
        &self.initial
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn require_index(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    /// Dense state from a full assignment.
    pub fn state(&self, assignment: &Assignment) -> Result<State> {
        let mut values = vec![f64::NAN; self.len()];
        for (name, v) in assignment {
            values[self.require_index(name)?] = *v;
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::MissingVariable(self.variables[i].name.clone()));
        }
        Ok(State::from_values(values))
    }

    pub fn assignment(&self, state: &State) -> Assignment {
        self.variables
            .iter()
            .zip(state.values())
            .map(|(v, x)| (v.name.clone(), *x))
            .collect()
    }

    /// The initial state with some values replaced.
    pub fn start_state(&self, overrides: &Assignment) -> Result<State> {
        let mut state = self.initial.clone();
        for (name, v) in overrides {
            let i = self.require_index(name)?;
            state.values[i] = *v;
        }
        Ok(state)
    }

    /// Every relation and domain that `state` violates.
    pub fn violations(&self, state: &State) -> Vec<Violation> {
        let mut out = Vec::new();
        for (var, x) in self.variables.iter().zip(state.values()) {
            if !var.domain.contains(*x) {
                out.push(Violation::Domain {
                    variable: var.name.clone(),
                    value: *x,
                });
            }
        }
        for rel in &self.relations {
            if !rel.holds(state.values()) {
                out.push(Violation::Relation {
                    relation: rel.to_string(),
                });
            }
        }
        out
    }

    pub fn is_valid(&self, state: &State) -> bool {
        self.violations(state).is_empty()
    }

    /// Like [`World::is_valid`], but reports the first problem as an error.
    pub fn check_state(&self, state: &State) -> Result<()> {
        for (var, x) in self.variables.iter().zip(state.values()) {
            if !var.domain.contains(*x) {
                return Err(Error::OutOfDomain {
                    name: var.name.clone(),
                    value: *x,
                    domain: var.domain,
                });
            }
        }
        if let Some(rel) = self.relations.iter().find(|r| !r.holds(state.values())) {
            return Err(Error::InitialRelation(rel.to_string()));
        }
        Ok(())
    }

    /// Whether any rule contains a noise term.
    pub fn has_noise(&self) -> bool {
        self.rules.iter().any(|r| r.expr.has_noise())
    }
}

/// True iff every relation holds and every value lies in its domain.
///
/// Unknown or missing variables are structural errors, not `false`.
pub fn validate_state(world: &World, state: &Assignment) -> Result<bool> {
    let dense = world.state(state)?;
    Ok(world.is_valid(&dense))
}

/// Interval bounds over a subset of the variables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartialState {
    bounds: BTreeMap<String, Interval>,
}

impl PartialState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a bound; a second bound on the same variable is intersected with
    /// the first. Degenerate (`lo >= hi`) results are rejected.
    pub fn insert(&mut self, name: impl Into<String>, bound: Interval) -> Result<()> {
        let name = name.into();
        let merged = match self.bounds.get(&name) {
            Some(prev) => prev.intersect(&bound),
            None => bound,
        };
        if !merged.is_proper() {
            return Err(invalid(format!(
                "bound {merged} on `{name}` is empty or degenerate"
            )));
        }
        self.bounds.insert(name, merged);
        Ok(())
    }

    pub fn with(mut self, name: impl Into<String>, bound: Interval) -> Result<Self> {
        self.insert(name, bound)?;
        Ok(self)
    }

    pub fn remove(&mut self, name: &str) -> Option<Interval> {
        self.bounds.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&Interval> {
        self.bounds.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Interval)> {
        self.bounds.iter()
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn variables(&self) -> impl Iterator<Item = &String> {
        self.bounds.keys()
    }

    /// True iff every bounded variable's value lies within its interval.
    pub fn covers(&self, state: &Assignment) -> Result<bool> {
        for (name, iv) in &self.bounds {
            let x = state
                .get(name)
                .ok_or_else(|| Error::UnknownVariable(name.clone()))?;
            if !iv.contains(*x) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn compile(&self, world: &World) -> Result<CompiledPartial> {
        let bounds = self
            .bounds
            .iter()
            .map(|(n, iv)| Ok((world.require_index(n)?, *iv)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CompiledPartial { bounds })
    }

    /// Checks that every bound names a world variable and meets its domain.
    pub fn check_against(&self, world: &World) -> Result<()> {
        for (name, iv) in &self.bounds {
            let var = world
                .variable(name)
                .ok_or_else(|| Error::UnknownVariable(name.clone()))?;
            if !iv.intersects(&var.domain) {
                return Err(invalid(format!(
                    "bound {iv} on `{name}` lies outside its domain {}",
                    var.domain
                )));
            }
        }
        Ok(())
    }

    /// Whether some state could satisfy both partial states at once.
    pub fn compatible_with(&self, other: &PartialState) -> bool {
        self.bounds.iter().all(|(name, iv)| match other.get(name) {
            Some(o) => iv.intersects(o),
            None => true,
        })
    }
}

impl FromIterator<(String, Interval)> for PartialState {
    fn from_iter<T: IntoIterator<Item = (String, Interval)>>(iter: T) -> Self {
        let mut p = PartialState::new();
        for (n, iv) in iter {
            p.insert(n, iv).expect("non-degenerate bound");
        }
        p
    }
}

/// A partial state resolved to variable indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledPartial {
    bounds: Vec<(usize, Interval)>,
}

impl CompiledPartial {
    #[inline]
    pub fn covers(&self, values: &[f64]) -> bool {
        self.bounds.iter().all(|(i, iv)| iv.contains(values[*i]))
    }
}

/// A view of a world restricted to a subset of its variables.
#[derive(Debug, Clone)]
pub struct Environment {
    parent: Arc<World>,
    variables: BTreeSet<String>,
    domains: BTreeMap<String, Interval>,
    rules: Vec<String>,
    relations: Vec<usize>,
}

impl Environment {
    pub fn parent(&self) -> &Arc<World> {
        &self.parent
    }

    pub fn variables(&self) -> &BTreeSet<String> {
        &self.variables
    }

    pub fn domain(&self, name: &str) -> Option<&Interval> {
        self.domains.get(name)
    }

    /// Targets of the inherited transition rules.
    pub fn rule_targets(&self) -> &[String] {
        &self.rules
    }

    pub fn relations(&self) -> impl Iterator<Item = &InvariantRelation> {
        self.relations.iter().map(|i| &self.parent.relations()[*i])
    }

    /// Materializes the slice as a standalone world.
    pub fn to_world(&self) -> Result<World> {
        let variables = self
            .variables
            .iter()
            .map(|n| {
                let v = self.parent.variable(n).expect("slice variable");
                Variable {
                    name: n.clone(),
                    domain: self.domains[n],
                    unit: v.unit.clone(),
                }
            })
            .collect();
        let rules = self
            .rules
            .iter()
            .map(|t| {
                let r = self.parent.rule_for(t).expect("inherited rule");
                TransitionRule::new(t.clone(), r.expr.clone())
            })
            .collect();
        let initial: Assignment = self
            .variables
            .iter()
            .map(|n| (n.clone(), self.parent.initial_state().get(&self.parent, n).unwrap()))
            .collect();
        let relations = self.relations().cloned().collect();
        World::new(self.parent.name(), variables, rules, &initial, relations)
    }
}

/// Slices `world` down to `subset`, optionally narrowing domains.
///
/// The slice inherits exactly the rules and relations whose variables all
/// lie in the subset.
pub fn slice_environment(
    world: &Arc<World>,
    subset: &BTreeSet<String>,
    restrictions: &BTreeMap<String, Interval>,
) -> Result<Environment> {
    if subset.is_empty() {
        return Err(invalid("environment slice needs at least one variable"));
    }
    let mut domains = BTreeMap::new();
    for name in subset {
        let var = world
            .variable(name)
            .ok_or_else(|| Error::UnknownVariable(name.clone()))?;
        domains.insert(name.clone(), var.domain);
    }
    for (name, restriction) in restrictions {
        if !subset.contains(name) {
            return Err(Error::UnknownVariable(name.clone()));
        }
        let domain = world.variable(name).expect("checked above").domain;
        if !restriction.is_subset_of(&domain) || restriction.is_empty() {
            return Err(Error::RestrictionOutsideDomain {
                name: name.clone(),
                restriction: *restriction,
                domain,
            });
        }
        domains.insert(name.clone(), *restriction);
    }
    let rules = world
        .rules()
        .iter()
        .filter(|r| subset.contains(&r.target) && r.expr.variables().iter().all(|v| subset.contains(v)))
        .map(|r| r.target.clone())
        .collect();
    let relations = world
        .relations()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.cond.variables().iter().all(|v| subset.contains(v)))
        .map(|(i, _)| i)
        .collect();
    Ok(Environment {
        parent: Arc::clone(world),
        variables: subset.clone(),
        domains,
        rules,
        relations,
    })
}

/// Jaccard overlap of the two environments' variable sets.
pub fn environment_overlap(a: &Environment, b: &Environment) -> Result<f64> {
    if !Arc::ptr_eq(&a.parent, &b.parent) && a.parent != b.parent {
        return Err(Error::WorldMismatch);
    }
    let shared = a.variables.intersection(&b.variables).count();
    let union = a.variables.union(&b.variables).count();
    Ok(if union == 0 {
        1.0
    } else {
        shared as f64 / union as f64
    })
}

/// Noise, quantization and latency applied to one sensed or actuated variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub variable: String,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub resolution: f64,
    #[serde(default)]
    pub latency: u32,
}

impl Channel {
    pub fn ideal(variable: impl Into<String>) -> Self {
        Channel {
            variable: variable.into(),
            noise_sigma: 0.0,
            resolution: 0.0,
            latency: 0,
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.noise_sigma == 0.0 && self.resolution == 0.0 && self.latency == 0
    }
}

/// Rounds to the nearest multiple of `resolution`, halves away from zero.
/// A resolution of zero leaves the value untouched.
pub fn quantize(x: f64, resolution: f64) -> f64 {
    if resolution > 0.0 {
        (x / resolution).round() * resolution
    } else {
        x
    }
}

/// The agent's interface to the world: what it can read and write.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgentBody {
    pub sensors: Vec<Channel>,
    pub actuators: Vec<Channel>,
}

impl AgentBody {
    pub fn new(sensors: Vec<Channel>, actuators: Vec<Channel>) -> Self {
        let mut body = AgentBody { sensors, actuators };
        body.sensors.sort_by(|a, b| a.variable.cmp(&b.variable));
        body.actuators.sort_by(|a, b| a.variable.cmp(&b.variable));
        body
    }

    pub fn actuator(&self, name: &str) -> Option<&Channel> {
        self.actuators.iter().find(|c| c.variable == name)
    }

    pub fn sensor(&self, name: &str) -> Option<&Channel> {
        self.sensors.iter().find(|c| c.variable == name)
    }

    pub fn validate(&self, world: &World) -> Result<()> {
        for list in [&self.sensors, &self.actuators] {
            for pair in list.windows(2) {
                if pair[0].variable == pair[1].variable {
                    return Err(invalid(format!(
                        "channel for `{}` is declared twice",
                        pair[0].variable
                    )));
                }
            }
        }
        for ch in self.sensors.iter().chain(&self.actuators) {
            world.require_index(&ch.variable)?;
            if !(ch.noise_sigma >= 0.0 && ch.noise_sigma.is_finite()) {
                return Err(invalid(format!("noise of `{}` must be >= 0", ch.variable)));
            }
            if !(ch.resolution >= 0.0 && ch.resolution.is_finite()) {
                return Err(invalid(format!(
                    "resolution of `{}` must be >= 0",
                    ch.variable
                )));
            }
        }
        for ch in &self.actuators {
            let var = world.variable(&ch.variable).expect("checked above");
            if !var.domain.is_bounded() {
                return Err(invalid(format!(
                    "actuator `{}` needs a bounded domain, found {}",
                    ch.variable, var.domain
                )));
            }
        }
        Ok(())
    }

    pub fn has_noise(&self) -> bool {
        self.sensors
            .iter()
            .chain(&self.actuators)
            .any(|c| c.noise_sigma > 0.0)
    }
}
