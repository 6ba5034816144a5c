//! Generators for valid task documents.

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;
use taskenv::taskdl::fmt_num;

/// `count` generated documents, the same on every call.
pub fn sample_documents(count: usize) -> Vec<String> {
    let mut runner = TestRunner::deterministic();
    let strategy = document();
    (0..count).map(|_| strategy.new_tree(&mut runner).unwrap().current()).collect()
}


const NAMES: [&str; 4] = ["alpha", "beta", "gamma", "delta_v"];

pub fn literal() -> impl Strategy<Value = f64> {
    prop_oneof![
        (-1000.0..1000.0f64),
        (0u32..20).prop_map(f64::from),
        Just(0.1),
        Just(1e-7),
        Just(2.5e18),
        (-1e-3..1e-3f64),
    ]
}

pub fn lit_text(x: f64) -> String {
    if x < 0.0 {
        format!("(-{})", fmt_num(-x))
    } else {
        fmt_num(x)
    }
}

pub fn expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        literal().prop_map(lit_text),
        prop::sample::select(NAMES.to_vec()).prop_map(String::from),
        Just("time".to_string()),
        Just("delta".to_string()),
        (0.0..2.0f64).prop_map(|s| format!("gauss({})", fmt_num(s))),
        (-1.0..0.0f64, 0.0..1.0f64).prop_map(|(a, b)| format!("uniform({}, {})", fmt_num(a), fmt_num(b))),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), prop::sample::select(vec!["+", "-", "*", "/", "^"]), inner.clone())
                .prop_map(|(a, op, b)| format!("({a} {op} {b})")),
            (prop::sample::select(vec!["sqrt", "abs", "-"]), inner.clone()).prop_map(|(f, a)| format!("{f}({a})")),
            (prop::sample::select(vec!["min", "max"]), inner.clone(), inner.clone())
                .prop_map(|(f, a, b)| format!("{f}({a}, {b})")),
            (inner.clone(), inner.clone(), inner.clone(), prop::sample::select(vec!["<", "<=", ">", ">=", "==", "!="]))
                .prop_map(|(a, b, c, op)| format!("if({a} {op} 1 && !({b} > 0) || true, {b}, {c})")),
        ]
    })
}

fn bound_clause() -> impl Strategy<Value = String> {
    (
        prop::sample::select(NAMES.to_vec()),
        0usize..6,
        -50.0..50.0f64,
        0.5..10.0f64,
    )
        .prop_map(|(v, kind, a, w)| {
            let (a, b) = (fmt_num(a), fmt_num(a + w));
            match kind {
                0 => format!("{v} > {a}"),
                1 => format!("{v} <= {a}"),
                2 => format!("{v} in [{a}, {b})"),
                3 => format!("{v} in ({a}, {b}]"),
                4 => format!("{v} ~ {a} +- {}", fmt_num(w)),
                _ => format!("{v} >= {a}"),
            }
        })
}

fn goal_line() -> impl Strategy<Value = String> {
    (
        prop::bool::ANY,
        prop::collection::btree_map(prop::sample::select(NAMES.to_vec()), bound_clause(), 1..3),
        prop::option::of((0.0..5.0f64, 4.0..20.0f64)),
        prop::option::of(0.0..4.0f64),
    )
        .prop_map(|(goal, clauses, window, hold)| {
            // One clause per variable keeps the bounds consistent.
            let mut body: Vec<String> = clauses
                .into_iter()
                .map(|(v, c)| format!("{v}{}", &c[c.find(' ').unwrap()..]))
                .collect();
            body.dedup();
            let mut s = format!("{} {}", if goal { "goal" } else { "fail" }, body.join(", "));
            if let Some(h) = hold {
                s += &format!(" hold {}", fmt_num(h));
            }
            if let Some((a, b)) = window {
                s += &format!(" window {} {}", fmt_num(a), fmt_num(a + b));
            }
            s
        })
}

fn problem(depth: u32) -> BoxedStrategy<String> {
    let atom = prop::collection::vec(goal_line(), 1..3).prop_map(|gs| {
        let mut s = "atom\n".to_string();
        for g in gs {
            s += &format!("{g}\n");
        }
        s + "end\n"
    });
    if depth == 0 {
        return atom.boxed();
    }
    let sub = problem(depth - 1);
    prop_oneof![
        atom,
        (prop::sample::select(vec!["and", "or", "then"]), sub.clone(), sub.clone())
            .prop_map(|(k, a, b)| format!("{k}\n{a}{b}end\n")),
        sub.prop_map(|a| format!("not\n{a}end\n")),
    ]
    .boxed()
}

fn task_text() -> impl Strategy<Value = String> {
    (
        (1.0..50.0f64, prop::sample::select(vec!["", "mode full\n", "mode reinforcement\n", "mode hints \"go east\"\n", "mode hints\n"])),
        prop::option::of(-5.0..5.0f64),
        prop::option::of(0.0..100.0f64),
        prop_oneof![
            prop::collection::vec(goal_line(), 0..3).prop_map(|gs| gs.join("\n") + "\n"),
            problem(2),
        ],
        prop::option::of(bound_clause()),
    )
        .prop_map(|((deadline, mode), start, param, problem, require)| {
            let mut s = format!("body rig\n{mode}deadline {}\nenergy fuel floor 1\n", fmt_num(deadline));
            if let Some(x) = start {
                s += &format!("start alpha = {}\n", fmt_num(x));
            }
            if let Some(p) = param {
                s += &format!("param \"seed weight\" = {}\n", fmt_num(p));
            }
            // Nested problems carry their own conditions inside the block.
            if let Some(r) = require.filter(|_| !problem.ends_with("end\n")) {
                s += &format!("require {r}\n");
            }
            s + &problem
        })
}

fn variant_text() -> impl Strategy<Value = String> {
    (
        prop::sample::select(vec!["set", "offset", "scale"]),
        prop::option::of(0.5..1.0f64),
        prop::option::of(expr()),
        prop::option::of(bound_clause()),
        prop::option::of((0.0..1.0f64, 0u32..4)),
    )
        .prop_map(|(mode, scale, add, clause, chan)| {
            let dist = match mode {
                "set" => "gauss(1, 0.5)".to_string(),
                "offset" => "uniform(-1, 1)".to_string(),
                _ => "const(2)".to_string(),
            };
            let mut s = format!("perturb beta {mode} {dist}\n");
            if let Some(x) = scale {
                s += &format!("deadline scale uniform({}, 1.5)\nenergy scale 0.9\n", fmt_num(x));
            }
            if let Some(e) = add {
                s += &format!("add gust gamma <- gamma + {e}\n");
            }
            if let Some(c) = clause {
                s += &format!("clause {c}\n");
            }
            if let Some((n, l)) = chan {
                s += &format!("sensor rig alpha noise {} lat {l}\nactuator rig knob res 0.25\n", fmt_num(n));
            }
            s
        })
}

pub fn document() -> impl Strategy<Value = String> {
    (
        prop::collection::vec(literal(), 4),
        prop::collection::vec(prop::option::of(expr()), 4),
        prop::option::of((0.001..1.0f64, any::<u32>())),
        prop::collection::vec(task_text(), 0..3),
        prop::collection::vec(variant_text(), 0..2),
        (0.0..1.0f64, 0.0..1.0f64, 0u32..5),
    )
        .prop_map(|(inits, rules, sim, tasks, variants, (noise, res, lat))| {
            let mut s = "# generated\nworld gen\n".to_string();
            if let Some((d, seed)) = sim {
                s += &format!("sim delta {} seed {seed}\n", fmt_num(d));
            }
            s += "var time in [0, inf) = 0 unit \"s\"\nvar fuel in [0, 100] = 50\nvar knob in [-1, 1] = 0\n";
            for (n, x) in NAMES.iter().zip(&inits) {
                s += &format!("var {n} = {}\n", fmt_num(*x));
            }
            s += "dyn time <- time + delta\ndyn fuel <- max(0, fuel - delta * abs(knob))\n";
            for (n, r) in NAMES.iter().zip(rules) {
                if let Some(r) = r {
                    s += &format!("dyn {n} <- {r}\n");
                }
            }
            s += "rel fuel >= 0 && (alpha < 1e19 || !(beta == beta))\n";
            s += &format!(
                "body rig\n  sensor alpha noise {} res {} lat {lat}\n  sensor fuel\n  actuator knob\nend\n",
                fmt_num(noise),
                fmt_num(res)
            );
            for (i, t) in tasks.iter().enumerate() {
                s += &format!("task t{i}\n{t}end\n");
            }
            for (i, v) in variants.iter().enumerate() {
                s += &format!("variant v{i}\n{v}end\n");
            }
            s
        })
}

