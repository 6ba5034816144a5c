//! The task description language: a small line-oriented text format for
//! worlds, agent bodies, tasks and variant specs.
//!
//! ```text
//! world driving
//! var time in [0, inf) = 0 unit "s"
//! var x = 0
//! dyn time <- time + delta
//! body car
//!   sensor x
//! end
//! task reach
//!   body car
//!   deadline 10
//!   energy x floor -1
//!   goal x > 3
//! end
//! ```
//!
//! See `docs/taskdl.md` for the full grammar.

mod lexer;
mod parser;
mod writer;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::algebra::{Task, VariantSpec};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::world::{AgentBody, World};

/// A located parse or validation message. Lines and columns are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl Diagnostic {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        Diagnostic {
            line,
            column,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

/// Simulation settings a document may carry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimDefaults {
    pub delta: Option<f64>,
    pub seed: Option<u64>,
    pub horizon: Option<f64>,
}

/// Everything one file declares.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDocument {
    pub world: World,
    pub bodies: BTreeMap<String, AgentBody>,
    pub tasks: BTreeMap<String, Task>,
    pub variants: BTreeMap<String, VariantSpec>,
    pub sim: SimDefaults,
}

impl TaskDocument {
    /// Assembles a document, checking every body, task and variant against
    /// the world.
    pub fn new(
        world: World,
        bodies: BTreeMap<String, AgentBody>,
        tasks: BTreeMap<String, Task>,
        variants: BTreeMap<String, VariantSpec>,
        sim: SimDefaults,
    ) -> Result<Self> {
        for body in bodies.values() {
            body.validate(&world)?;
        }
        for (name, task) in &tasks {
            if name != &task.name {
                return Err(Error::Invalid(format!(
                    "task stored under `{name}` is named `{}`",
                    task.name
                )));
            }
            if !bodies.contains_key(&task.body) {
                return Err(Error::UnknownBody(task.body.clone()));
            }
            task.validate(&world)?;
        }
        for spec in variants.values() {
            for p in &spec.perturbations {
                world.require_index(&p.variable)?;
            }
            for c in &spec.channels {
                if !bodies.contains_key(&c.body) {
                    return Err(Error::UnknownBody(c.body.clone()));
                }
                world.require_index(&c.variable)?;
            }
            for d in &spec.dynamics {
                world.require_index(&d.target)?;
                for v in d.expr.variables() {
                    world.require_index(&v)?;
                }
            }
            spec.clauses.check_against(&world)?;
        }
        if let Some(d) = sim.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Invalid(format!("delta must be positive, got {d}")));
            }
        }
        Ok(TaskDocument {
            world,
            bodies,
            tasks,
            variants,
            sim,
        })
    }

    pub fn task(&self, name: &str) -> Result<&Task> {
        self.tasks
            .get(name)
            .ok_or_else(|| Error::UnknownTask(name.to_string()))
    }

    pub fn body(&self, name: &str) -> Result<&AgentBody> {
        self.bodies
            .get(name)
            .ok_or_else(|| Error::UnknownBody(name.to_string()))
    }

    /// The body a task acts through.
    pub fn body_of(&self, task: &Task) -> Result<&AgentBody> {
        self.body(&task.body)
    }

    pub fn variant(&self, name: &str) -> Result<&VariantSpec> {
        self.variants
            .get(name)
            .ok_or_else(|| Error::UnknownVariant(name.to_string()))
    }

    /// The first task by name, if the document has any.
    pub fn default_task(&self) -> Option<&Task> {
        self.tasks.values().next()
    }
}

/// Parses a document. Every problem found is reported, each with its
/// location, as [`Error::Parse`].
pub fn parse(text: &str) -> Result<TaskDocument> {
    parser::parse_document(text).map_err(Error::Parse)
}

/// Writes a document in canonical form; `parse(&serialize(d))` equals `d`.
pub fn serialize(doc: &TaskDocument) -> String {
    writer::write_document(doc)
}

/// Parses a single expression such as `x + delta * 2`.
pub fn parse_expr(text: &str) -> std::result::Result<Expr, Diagnostic> {
    parser::parse_expr(text)
}

/// Shortest text that reads back as the same `f64`.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_num_round_trips() {
        for x in [0.0, 1.0, -2.5, 0.1, 1e-7, 3.3e20, 123456.789, f64::MIN_POSITIVE] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x, "{x}");
        }
        assert_eq!(fmt_num(10.0), "10");
        assert_eq!(fmt_num(1e-7), "1e-7");
    }
}
