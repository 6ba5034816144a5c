//! History export.
//!
//! JSON lines: one object per sample,
//! `{"step": n, "time": t, "state": {..}, "applied": {..}, "violations": [..]}`,
//! where sample 0 is the start state and has no `applied` entry. CSV: a
//! `step` column, then one column per variable in name order.

use std::io::Write;

use serde::Serialize;

use super::{Commands, History};
use crate::error::Result;
use crate::world::{Assignment, Violation, World};

#[derive(Serialize)]
struct Sample<'a> {
    step: usize,
    time: f64,
    state: Assignment,
    #[serde(skip_serializing_if = "Option::is_none")]
    applied: Option<&'a Commands>,
    #[serde(skip_serializing_if = "<[Violation]>::is_empty")]
    violations: &'a [Violation],
}

pub fn write_jsonl(world: &World, history: &History, mut out: impl Write) -> Result<()> {
    for n in 0..=history.len() {
        let rec = n.checked_sub(1).map(|i| &history.records[i]);
        let sample = Sample {
            step: n,
            time: history.time_of(n),
            state: world.assignment(history.state(n)),
            applied: rec.map(|r| &r.applied),
            violations: rec.map_or(&[], |r| &r.violations),
        };
        serde_json::to_writer(&mut out, &sample)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_csv(world: &World, history: &History, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string()];
    header.extend(world.variables().iter().map(|v| v.name.clone()));
    w.write_record(&header)?;
    for n in 0..=history.len() {
        let mut row = vec![n.to_string()];
        row.extend(history.state(n).values().iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
