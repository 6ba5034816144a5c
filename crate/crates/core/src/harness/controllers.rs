//! Built-in controllers and the `kind:args` spec strings that name them.
//!
//! | spec                                   | behaviour                                  |
//! |----------------------------------------|--------------------------------------------|
//! | `null`                                 | never writes                               |
//! | `constant:0.15`, `constant:power=0.15` | fixed command                              |
//! | `random-grid:0,5,10@0.5`               | uniform grid level per decision period     |
//! | `bang-bang:position:10:10:0`           | high below the threshold, low otherwise    |
//! | `scripted:10,0,5@0.5`                  | replays values, one per period, then stops |
//! | `external:CMD`                         | JSON lines over a child process's stdio    |
//!
//! Without `name=`, a value applies to every actuator of the body.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::external::ExternalController;
use super::{Controller, DecisionContext};
use crate::error::{invalid, Error, Result};
use crate::sim::{Commands, Observation};
use crate::taskdl::fmt_num;
use crate::world::{AgentBody, World};

/// Value for one named actuator, or for all of them.
#[derive(Debug, Clone, PartialEq)]
struct Setting<T> {
    actuator: Option<String>,
    value: T,
}

fn fill<T: Clone>(settings: &[Setting<T>], body: &AgentBody, mut put: impl FnMut(&str, &T)) {
    for s in settings {
        match &s.actuator {
            Some(a) => put(a, &s.value),
            None => {
                for ch in &body.actuators {
                    put(&ch.variable, &s.value);
                }
            }
        }
    }
}

fn steps_per(period: f64, delta: f64) -> u64 {
    ((period / delta).round() as u64).max(1)
}

/// Never issues a command.
#[derive(Debug, Clone, Default)]
pub struct NullController;

impl Controller for NullController {
    fn id(&self) -> String {
        "null".into()
    }

    fn reset(&mut self, _seed: u64) {}

    fn decide(&mut self, _obs: &Observation, _ctx: &DecisionContext) -> Result<Commands> {
        Ok(Commands::new())
    }
}

#[derive(Debug, Clone)]
pub struct Constant {
    settings: Vec<Setting<f64>>,
}

impl Constant {
    /// The same value on every actuator.
    pub fn all(value: f64) -> Self {
        Constant {
            settings: vec![Setting { actuator: None, value }],
        }
    }

    pub fn named(pairs: &[(&str, f64)]) -> Self {
        Constant {
            settings: pairs
                .iter()
                .map(|(a, v)| Setting {
                    actuator: Some(a.to_string()),
                    value: *v,
                })
                .collect(),
        }
    }
}

impl Controller for Constant {
    fn id(&self) -> String {
        format!("constant:{}", settings_text(&self.settings, |v| fmt_num(*v)))
    }

    fn reset(&mut self, _seed: u64) {}

    fn decide(&mut self, _obs: &Observation, ctx: &DecisionContext) -> Result<Commands> {
        let mut out = Commands::new();
        fill(&self.settings, ctx.body, |a, v| {
            out.insert(a.to_string(), *v);
        });
        Ok(out)
    }
}

/// Draws each actuator's command uniformly from its levels at the start of
/// every decision period, like a random walk through the enumerator's tree.
#[derive(Debug, Clone)]
pub struct RandomGrid {
    settings: Vec<Setting<Vec<f64>>>,
    period: f64,
    rng: ChaCha8Rng,
    current: Commands,
}

impl RandomGrid {
    pub fn new(levels: Vec<f64>, period: f64) -> Self {
        Self::with_settings(vec![Setting { actuator: None, value: levels }], period)
    }

    /// Levels per named actuator.
    pub fn per_actuator(levels: Vec<(String, Vec<f64>)>, period: f64) -> Self {
        Self::with_settings(
            levels
                .into_iter()
                .map(|(a, l)| Setting {
                    actuator: Some(a),
                    value: l,
                })
                .collect(),
            period,
        )
    }

    fn with_settings(settings: Vec<Setting<Vec<f64>>>, period: f64) -> Self {
        RandomGrid {
            settings,
            period,
            rng: ChaCha8Rng::seed_from_u64(0),
            current: Commands::new(),
        }
    }
}

impl Controller for RandomGrid {
    fn id(&self) -> String {
        let levels = settings_text(&self.settings, |l| {
            l.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(",")
        });
        format!("random-grid:{levels}@{}", fmt_num(self.period))
    }

    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.current.clear();
    }

    fn decide(&mut self, _obs: &Observation, ctx: &DecisionContext) -> Result<Commands> {
        if ctx.step.is_multiple_of(steps_per(self.period, ctx.delta)) {
            let mut next = Commands::new();
            let rng = &mut self.rng;
            fill(&self.settings, ctx.body, |a, levels| {
                if !levels.is_empty() {
                    next.insert(a.to_string(), levels[rng.random_range(0..levels.len())]);
                }
            });
            self.current = next;
        }
        Ok(self.current.clone())
    }
}

/// Emits `high` while the sensor reads below `threshold`, else `low`.
#[derive(Debug, Clone)]
pub struct BangBang {
    pub sensor: String,
    pub threshold: f64,
    pub high: f64,
    pub low: f64,
}

impl Controller for BangBang {
    fn id(&self) -> String {
        format!(
            "bang-bang:{}:{}:{}:{}",
            self.sensor,
            fmt_num(self.threshold),
            fmt_num(self.high),
            fmt_num(self.low)
        )
    }

    fn reset(&mut self, _seed: u64) {}

    fn decide(&mut self, obs: &Observation, ctx: &DecisionContext) -> Result<Commands> {
        let x = obs
            .get(&self.sensor)
            .ok_or_else(|| Error::Controller(format!("no sensor reading for `{}`", self.sensor)))?;
        let v = if x < self.threshold { self.high } else { self.low };
        Ok(ctx.body.actuators.iter().map(|c| (c.variable.clone(), v)).collect())
    }
}

/// Replays one value per period on every actuator, then stops writing.
#[derive(Debug, Clone)]
pub struct Scripted {
    pub values: Vec<f64>,
    pub period: f64,
}

impl Controller for Scripted {
    fn id(&self) -> String {
        let vals: Vec<String> = self.values.iter().map(|x| fmt_num(*x)).collect();
        format!("scripted:{}@{}", vals.join(","), fmt_num(self.period))
    }

    fn reset(&mut self, _seed: u64) {}

    fn decide(&mut self, _obs: &Observation, ctx: &DecisionContext) -> Result<Commands> {
        let k = (ctx.step / steps_per(self.period, ctx.delta)) as usize;
        Ok(match self.values.get(k) {
            Some(&v) => ctx.body.actuators.iter().map(|c| (c.variable.clone(), v)).collect(),
            None => Commands::new(),
        })
    }
}

fn settings_text<T>(settings: &[Setting<T>], f: impl Fn(&T) -> String) -> String {
    settings
        .iter()
        .map(|s| match &s.actuator {
            Some(a) => format!("{a}={}", f(&s.value)),
            None => f(&s.value),
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// A parsed controller spec string; [`ControllerSpec::build`] makes a fresh
/// controller from it.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerSpec {
    Null,
    Constant(Vec<(Option<String>, f64)>),
    RandomGrid { levels: Vec<(Option<String>, Vec<f64>)>, period: f64 },
    BangBang { sensor: String, threshold: f64, high: f64, low: f64 },
    Scripted { values: Vec<f64>, period: f64 },
    External(String),
}

impl ControllerSpec {
    pub fn build(&self) -> Box<dyn Controller> {
        match self {
            ControllerSpec::Null => Box::new(NullController),
            ControllerSpec::Constant(s) => Box::new(Constant {
                settings: s
                    .iter()
                    .map(|(a, v)| Setting {
                        actuator: a.clone(),
                        value: *v,
                    })
                    .collect(),
            }),
            ControllerSpec::RandomGrid { levels, period } => Box::new(RandomGrid::with_settings(
                levels
                    .iter()
                    .map(|(a, l)| Setting {
                        actuator: a.clone(),
                        value: l.clone(),
                    })
                    .collect(),
                *period,
            )),
            ControllerSpec::BangBang {
                sensor,
                threshold,
                high,
                low,
            } => Box::new(BangBang {
                sensor: sensor.clone(),
                threshold: *threshold,
                high: *high,
                low: *low,
            }),
            ControllerSpec::Scripted { values, period } => Box::new(Scripted {
                values: values.clone(),
                period: *period,
            }),
            ControllerSpec::External(cmd) => Box::new(ExternalController::new(cmd.clone())),
        }
    }

    /// The id the built controller reports.
    pub fn id(&self) -> String {
        self.build().id()
    }

    /// Checks that every value fits the actuators it will be sent to.
    pub fn check(&self, world: &World, body: &AgentBody) -> Result<()> {
        let check_one = |actuator: &Option<String>, x: f64| -> Result<()> {
            let names: Vec<&str> = match actuator {
                Some(a) => {
                    body.actuator(a).ok_or_else(|| Error::NotAnActuator(a.clone()))?;
                    vec![a.as_str()]
                }
                None => body.actuators.iter().map(|c| c.variable.as_str()).collect(),
            };
            for n in names {
                let domain = world.variable(n).ok_or_else(|| Error::UnknownVariable(n.into()))?.domain;
                if !domain.contains(x) {
                    return Err(Error::OutOfDomain {
                        name: n.to_string(),
                        value: x,
                        domain,
                    });
                }
            }
            Ok(())
        };
        match self {
            ControllerSpec::Null | ControllerSpec::External(_) => Ok(()),
            ControllerSpec::Constant(s) => s.iter().try_for_each(|(a, x)| check_one(a, *x)),
            ControllerSpec::RandomGrid { levels, .. } => levels
                .iter()
                .try_for_each(|(a, l)| l.iter().try_for_each(|x| check_one(a, *x))),
            ControllerSpec::BangBang { sensor, high, low, .. } => {
                body.sensor(sensor)
                    .ok_or_else(|| invalid(format!("body has no sensor `{sensor}`")))?;
                check_one(&None, *high)?;
                check_one(&None, *low)
            }
            ControllerSpec::Scripted { values, .. } => values.iter().try_for_each(|x| check_one(&None, *x)),
        }
    }
}

fn num(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| invalid(format!("`{s}` is not a number")))
}

fn num_list(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(num).collect()
}

fn period_of(s: &str) -> Result<(&str, f64)> {
    let (body, p) = s
        .rsplit_once('@')
        .ok_or_else(|| invalid("expected `@PERIOD` after the values"))?;
    let period = num(p)?;
    if period <= 0.0 {
        return Err(invalid("period must be positive"));
    }
    Ok((body, period))
}

/// `a=1;b=2` or a bare value.
fn named<T>(s: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<(Option<String>, T)>> {
    s.split(';')
        .map(|part| match part.split_once('=') {
            Some((a, v)) => Ok((Some(a.trim().to_string()), parse(v)?)),
            None => Ok((None, parse(part)?)),
        })
        .collect()
}

impl FromStr for ControllerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let spec = match kind {
            "null" => ControllerSpec::Null,
            "constant" => ControllerSpec::Constant(named(args, num)?),
            "random-grid" => {
                let (levels, period) = period_of(args)?;
                let levels = named(levels, num_list)?;
                if levels.iter().any(|(_, l)| l.is_empty()) {
                    return Err(invalid("random-grid needs at least one level"));
                }
                ControllerSpec::RandomGrid { levels, period }
            }
            "bang-bang" => {
                let parts: Vec<&str> = args.split(':').collect();
                let [sensor, t, h, l] = parts[..] else {
                    return Err(invalid("bang-bang takes SENSOR:THRESHOLD:HIGH:LOW"));
                };
                ControllerSpec::BangBang {
                    sensor: sensor.to_string(),
                    threshold: num(t)?,
                    high: num(h)?,
                    low: num(l)?,
                }
            }
            "scripted" => {
                let (values, period) = if args.contains('@') {
                    period_of(args)?
                } else {
                    (args, 1.0)
                };
                ControllerSpec::Scripted {
                    values: num_list(values)?,
                    period,
                }
            }
            "external" if !args.trim().is_empty() => ControllerSpec::External(args.to_string()),
            _ => {
                return Err(invalid(format!(
                    "unknown controller `{s}`; expected null, constant, random-grid, bang-bang, scripted or external"
                )))
            }
        };
        Ok(spec)
    }
}

impl fmt::Display for ControllerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// Names and example specs of the built-in controllers.
pub fn builtin_controllers() -> Vec<(&'static str, &'static str)> {
    vec![
        ("null", "null"),
        ("constant", "constant:0.15"),
        ("random-grid", "random-grid:0,5,10@0.5"),
        ("bang-bang", "bang-bang:position:10:10:0"),
        ("scripted", "scripted:10,10,0@0.5"),
        ("external", "external:python3 agent.py"),
    ]
}
