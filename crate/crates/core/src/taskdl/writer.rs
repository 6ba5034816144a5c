//! Canonical text output.

use std::fmt::Write;

use super::{fmt_num, TaskDocument};
use crate::algebra::{Communication, Dist, Goal, PerturbMode, Polarity, Problem, ProblemNode, ChannelKind};
use crate::interval::Interval;
use crate::world::{Channel, PartialState};

pub(crate) fn write_document(doc: &TaskDocument) -> String {
    let mut out = String::new();
    let w = &doc.world;
    let _ = writeln!(out, "world {}", w.name());
    let sim = &doc.sim;
    if sim.delta.is_some() || sim.seed.is_some() || sim.horizon.is_some() {
        out.push_str("sim");
        if let Some(d) = sim.delta {
            let _ = write!(out, " delta {}", fmt_num(d));
        }
        if let Some(s) = sim.seed {
            let _ = write!(out, " seed {s}");
        }
        if let Some(h) = sim.horizon {
            let _ = write!(out, " horizon {}", fmt_num(h));
        }
        out.push('\n');
    }
    out.push('\n');
    let init = w.initial_state().values();
    for (i, v) in w.variables().iter().enumerate() {
        let _ = write!(out, "var {}", v.name);
        if !v.domain.is_unbounded() {
            let _ = write!(out, " in {}", v.domain);
        }
        let _ = write!(out, " = {}", fmt_num(init[i]));
        if let Some(u) = &v.unit {
            let _ = write!(out, " unit {}", quote(u));
        }
        out.push('\n');
    }
    for r in w.rules() {
        let _ = writeln!(out, "dyn {} <- {}", r.target, r.expr);
    }
    for r in w.relations() {
        let _ = writeln!(out, "rel {}", r.cond);
    }

    for (name, body) in &doc.bodies {
        let _ = writeln!(out, "\nbody {name}");
        for c in &body.sensors {
            let _ = writeln!(out, "  sensor {}{}", c.variable, channel_opts(c));
        }
        for c in &body.actuators {
            let _ = writeln!(out, "  actuator {}{}", c.variable, channel_opts(c));
        }
        out.push_str("end\n");
    }

    for (name, t) in &doc.tasks {
        let _ = writeln!(out, "\ntask {name}");
        let _ = writeln!(out, "  body {}", t.body);
        match &t.communication {
            Communication::FullDescription => {}
            Communication::IncrementalReinforcement => out.push_str("  mode reinforcement\n"),
            Communication::Hints(None) => out.push_str("  mode hints\n"),
            Communication::Hints(Some(h)) => {
                let _ = writeln!(out, "  mode hints {}", quote(h));
            }
        }
        let _ = writeln!(out, "  deadline {}", fmt_num(t.deadline));
        let _ = writeln!(out, "  energy {} floor {}", t.energy.variable, fmt_num(t.energy.floor));
        for (v, x) in &t.start {
            let _ = writeln!(out, "  start {v} = {}", fmt_num(*x));
        }
        for (k, x) in &t.params {
            let _ = writeln!(out, "  param {} = {}", quote(k), fmt_num(*x));
        }
        match &t.problem.node {
            ProblemNode::Atomic(goals) => write_atomic(&mut out, &t.problem.initial, goals, 1),
            _ => write_problem(&mut out, &t.problem, 1),
        }
        out.push_str("end\n");
    }

    for (name, spec) in &doc.variants {
        let _ = writeln!(out, "\nvariant {name}");
        for p in &spec.perturbations {
            let mode = match p.mode {
                PerturbMode::Set => "set",
                PerturbMode::Offset => "offset",
                PerturbMode::Scale => "scale",
            };
            let _ = writeln!(out, "  perturb {} {mode} {}", p.variable, dist(&p.dist));
        }
        if let Some(d) = &spec.deadline_scale {
            let _ = writeln!(out, "  deadline scale {}", dist(d));
        }
        if let Some(d) = &spec.energy_scale {
            let _ = writeln!(out, "  energy scale {}", dist(d));
        }
        for c in &spec.channels {
            let kind = match c.kind {
                ChannelKind::Sensor => "sensor",
                ChannelKind::Actuator => "actuator",
            };
            let _ = write!(out, "  {kind} {} {}", c.body, c.variable);
            if let Some(x) = c.noise_sigma {
                let _ = write!(out, " noise {}", fmt_num(x));
            }
            if let Some(x) = c.resolution {
                let _ = write!(out, " res {}", fmt_num(x));
            }
            if let Some(x) = c.latency {
                let _ = write!(out, " lat {x}");
            }
            out.push('\n');
        }
        for d in &spec.dynamics {
            let _ = writeln!(out, "  add {} {} <- {}", d.name, d.target, d.expr);
        }
        if !spec.clauses.is_empty() {
            let _ = writeln!(out, "  clause {}", partial(&spec.clauses));
        }
        out.push_str("end\n");
    }
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn write_atomic(out: &mut String, initial: &PartialState, goals: &[Goal], depth: usize) {
    if !initial.is_empty() {
        indent(out, depth);
        let _ = writeln!(out, "require {}", partial(initial));
    }
    for g in goals {
        indent(out, depth);
        out.push_str(match g.polarity {
            Polarity::Goal => "goal",
            Polarity::Failure => "fail",
        });
        if !g.target.is_empty() {
            let _ = write!(out, " {}", partial(&g.target));
        }
        if let Some(h) = g.hold {
            let _ = write!(out, " hold {}", fmt_num(h));
        }
        if g.window != crate::algebra::Window::ALWAYS {
            let end = if g.window.end == f64::INFINITY {
                "inf".to_string()
            } else {
                fmt_num(g.window.end)
            };
            let _ = write!(out, " window {} {end}", fmt_num(g.window.start));
        }
        out.push('\n');
    }
}

fn write_problem(out: &mut String, p: &Problem, depth: usize) {
    indent(out, depth);
    let children: Vec<&Problem> = match &p.node {
        ProblemNode::Atomic(goals) => {
            out.push_str("atom\n");
            write_atomic(out, &p.initial, goals, depth + 1);
            indent(out, depth);
            out.push_str("end\n");
            return;
        }
        ProblemNode::And(a, b) => {
            out.push_str("and\n");
            vec![a, b]
        }
        ProblemNode::Or(a, b) => {
            out.push_str("or\n");
            vec![a, b]
        }
        ProblemNode::Then(a, b) => {
            out.push_str("then\n");
            vec![a, b]
        }
        ProblemNode::Not(a) => {
            out.push_str("not\n");
            vec![a]
        }
    };
    if !p.initial.is_empty() {
        indent(out, depth + 1);
        let _ = writeln!(out, "require {}", partial(&p.initial));
    }
    for c in children {
        write_problem(out, c, depth + 1);
    }
    indent(out, depth);
    out.push_str("end\n");
}

fn partial(ps: &PartialState) -> String {
    ps.iter()
        .map(|(n, iv)| bound_text(n, iv))
        .collect::<Vec<_>>()
        .join(", ")
}

fn bound_text(name: &str, iv: &Interval) -> String {
    match (iv.lo.is_finite(), iv.hi.is_finite()) {
        (true, false) if iv.lo_open => format!("{name} > {}", fmt_num(iv.lo)),
        (true, false) => format!("{name} >= {}", fmt_num(iv.lo)),
        (false, true) if iv.hi_open => format!("{name} < {}", fmt_num(iv.hi)),
        (false, true) => format!("{name} <= {}", fmt_num(iv.hi)),
        _ => format!("{name} in {iv}"),
    }
}

fn channel_opts(c: &Channel) -> String {
    let mut s = String::new();
    if c.noise_sigma != 0.0 {
        let _ = write!(s, " noise {}", fmt_num(c.noise_sigma));
    }
    if c.resolution != 0.0 {
        let _ = write!(s, " res {}", fmt_num(c.resolution));
    }
    if c.latency != 0 {
        let _ = write!(s, " lat {}", c.latency);
    }
    s
}

fn dist(d: &Dist) -> String {
    match *d {
        Dist::Const { value } => fmt_num(value),
        Dist::Uniform { lo, hi } => format!("uniform({}, {})", fmt_num(lo), fmt_num(hi)),
        Dist::Gauss { mean, sigma } => format!("gauss({}, {})", fmt_num(mean), fmt_num(sigma)),
    }
}

fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
