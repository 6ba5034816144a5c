//! Task environments: worlds with discrete-time dynamics, tasks posed in
//! them, a simulator that runs agents through tasks, and the algebra and
//! analysis tools built on top.

pub mod algebra;
pub mod analysis;
pub mod error;
pub mod expr;
pub mod harness;
pub mod interval;
pub mod rng;
pub mod sim;
pub mod taskdl;
pub mod world;

pub use algebra::{Goal, Problem, Task};
pub use error::{Error, Result};
pub use interval::Interval;
pub use taskdl::{parse, serialize, TaskDocument};
pub use world::{AgentBody, Assignment, PartialState, State, World};
