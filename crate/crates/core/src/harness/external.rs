//! Controllers that live in another process.
//!
//! The child is started with `sh -c CMD`. After each reset it receives one
//! line `{"reset": SEED}`. Then, every step, it receives
//!
//! ```json
//! {"step": 0, "elapsed": 0.0, "delta": 0.01, "observation": {"position": 2.0},
//!  "actuators": ["power"], "briefing": {"mode": "full", ...}}
//! ```
//!
//! and must answer with one line holding a JSON object of actuator values,
//! e.g. `{"power": 0.15}`; `{}` leaves every actuator as it is.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde_json::{json, Value};

use super::{Briefing, Controller, DecisionContext};
use crate::error::{Error, Result};
use crate::sim::{Commands, Observation};

struct Session {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct ExternalController {
    command: String,
    seed: u64,
    session: Option<Session>,
}

impl ExternalController {
    pub fn new(command: impl Into<String>) -> Self {
        ExternalController {
            command: command.into(),
            seed: 0,
            session: None,
        }
    }

    fn session(&mut self) -> Result<&mut Session> {
        if self.session.is_none() {
            let mut child = Command::new("sh")
                .arg("-c")
                .arg(&self.command)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| Error::Controller(format!("cannot start `{}`: {e}", self.command)))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
            let mut s = Session { child, stdin, stdout };
            send(&mut s, &json!({ "reset": self.seed }))?;
            self.session = Some(s);
        }
        Ok(self.session.as_mut().expect("just started"))
    }
}

fn send(s: &mut Session, msg: &Value) -> Result<()> {
    writeln!(s.stdin, "{msg}")
        .and_then(|_| s.stdin.flush())
        .map_err(|e| Error::Controller(format!("write to controller failed: {e}")))
}

fn briefing_json(b: &Briefing) -> Value {
    match b {
        Briefing::Full(task) => json!({
            "mode": "full",
            "task": task.name,
            "deadline": task.deadline,
            "energy": {"variable": task.energy.variable, "floor": task.energy.floor},
            "goals": task.problem.goals(),
        }),
        Briefing::Reinforcement { goal_flags } => json!({
            "mode": "reinforcement",
            "goal_flags": goal_flags,
        }),
        Briefing::Hints(h) => json!({ "mode": "hints", "hint": h }),
    }
}

impl Controller for ExternalController {
    fn id(&self) -> String {
        format!("external:{}", self.command)
    }

    fn reset(&mut self, seed: u64) {
        self.seed = seed;
        self.session = None;
    }

    fn decide(&mut self, obs: &Observation, ctx: &DecisionContext) -> Result<Commands> {
        let msg = json!({
            "step": ctx.step,
            "elapsed": ctx.elapsed,
            "delta": ctx.delta,
            "observation": obs,
            "actuators": ctx.body.actuators.iter().map(|c| &c.variable).collect::<Vec<_>>(),
            "briefing": briefing_json(&ctx.briefing),
        });
        let s = self.session()?;
        send(s, &msg)?;
        let mut line = String::new();
        let n = s
            .stdout
            .read_line(&mut line)
            .map_err(|e| Error::Controller(format!("read from controller failed: {e}")))?;
        if n == 0 {
            return Err(Error::Controller("controller closed its output".into()));
        }
        serde_json::from_str::<Commands>(line.trim())
            .map_err(|e| Error::Controller(format!("bad reply {:?}: {e}", line.trim())))
    }
}
