//! Controllers and batch evaluation.
//!
//! A controller sees only its observation and a [`DecisionContext`]; what
//! the context carries about the task depends on the task's communication
//! mode.

mod batch;
mod controllers;
mod external;

pub use batch::{run_batch, write_results, BatchResult, BatchSpec, CellSummary, ResultRecord, VariantRef, WORKERS_ENV};
pub use controllers::{
    builtin_controllers, BangBang, Constant, ControllerSpec, NullController, RandomGrid, Scripted,
};
pub use external::ExternalController;

use crate::algebra::Task;
use crate::error::Result;
use crate::sim::{Commands, Observation};
use crate::world::{AgentBody, World};

/// What the agent is told about its task.
#[derive(Debug, Clone, Copy)]
pub enum Briefing<'a> {
    /// The whole task description.
    Full(&'a Task),
    /// Per-goal flags as of the previous sample, and nothing else.
    Reinforcement { goal_flags: &'a [bool] },
    /// An opaque hint, if the task has one.
    Hints(Option<&'a str>),
}

#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub step: u64,
    /// Seconds since the start of the run.
    pub elapsed: f64,
    pub delta: f64,
    pub world: &'a World,
    pub body: &'a AgentBody,
    pub briefing: Briefing<'a>,
}

/// The agent's decision-making component.
///
/// After `reset` with a given seed, the same observation stream must yield
/// the same commands.
pub trait Controller: Send {
    /// Stable identifier, used as the controller id in result files.
    fn id(&self) -> String;
    fn reset(&mut self, seed: u64);
    fn decide(&mut self, obs: &Observation, ctx: &DecisionContext) -> Result<Commands>;
}
