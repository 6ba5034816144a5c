mod common;

use common::{driving, reference_drive, Ref};
use proptest::prelude::*;
use taskenv::harness::{Constant, Controller, NullController, RandomGrid, Scripted};
use taskenv::rng::NoiseStreams;
use taskenv::sim::export::{write_csv, write_jsonl};
use taskenv::sim::{check_status, run, sense, step, Commands, FailureCause, History, SimConfig, TaskStatus};
use taskenv::world::quantize;

fn drive(power: f64, delta: f64) -> taskenv::sim::RunOutcome {
    let doc = driving();
    let task = doc.task("drive").unwrap();
    run(&doc, task, &mut Constant::all(power), &SimConfig::new(delta).with_horizon(20.0)).unwrap()
}

#[test]
fn slow_constant_power_matches_reference() {
    let doc = driving();
    let out = drive(0.15, 0.001);
    let Ref::Reached { time, energy } = reference_drive(0.15, 0.001, 20.0, 0.0) else {
        panic!("reference run must reach the goal");
    };
    assert_eq!(out.status, TaskStatus::Success { time });
    assert_eq!(out.final_value(&doc.world, "energy"), Some(energy));
    assert!((time - 9.865).abs() <= 9.865 * 0.005);
    assert!((energy - 8.52).abs() <= 0.02);
}

#[test]
fn full_power_runs_out_of_energy_after_one_second() {
    let doc = driving();
    let out = drive(10.0, 0.001);
    assert_eq!(reference_drive(10.0, 0.001, 20.0, 0.0), Ref::Exhausted { time: 1.0 });
    match out.status {
        TaskStatus::Failure { cause: FailureCause::EnergyExhausted, time } => assert_eq!(time, 1.0),
        s => panic!("{s:?}"),
    }
    assert_eq!(check_status(&doc.world, doc.task("drive").unwrap(), &out.history).unwrap(), out.status);
}

#[test]
fn no_power_misses_the_deadline() {
    let doc = driving();
    let task = doc.task("drive_by_5").unwrap();
    let out = run(&doc, task, &mut NullController, &SimConfig::new(0.01)).unwrap();
    match out.status {
        TaskStatus::Failure { cause: FailureCause::DeadlineExceeded, time } => assert!((time - 5.0).abs() < 1e-9),
        s => panic!("{s:?}"),
    }
    assert_eq!(out.final_value(&doc.world, "position"), Some(2.0));
}

#[test]
fn empty_script_is_the_null_action() {
    let doc = driving();
    let task = doc.task("drive_by_5").unwrap();
    let cfg = SimConfig::new(0.1);
    let a = run(&doc, task, &mut NullController, &cfg).unwrap();
    let b = run(&doc, task, &mut Scripted { values: Vec::new(), period: 0.5 }, &cfg).unwrap();
    assert_eq!(a.status, b.status);
    assert_eq!(a.history.last_state(), b.history.last_state());
}

#[test]
fn convergence_in_delta() {
    let t = |d: f64| drive(0.15, d).status.time().unwrap();
    let (t1, t2, t3) = (t(0.1), t(0.01), t(0.001));
    assert!((t2 - t3).abs() < (t1 - t2).abs(), "{t1} {t2} {t3}");
}

#[test]
fn step_applies_commands_before_the_rules() {
    let doc = driving();
    let s0 = doc.world.initial_state();
    let cmds: Commands = [("power".to_string(), 10.0)].into();
    let s1 = step(&doc.world, s0, &cmds, 0.5, &mut NoiseStreams::new(0)).unwrap();
    let v = |n: &str| s1.get(&doc.world, n).unwrap();
    // energy = 10 − 0.5·10, velocity = √(2·0.5·10/2 + 0), position keeps the zero pre-step velocity.
    assert_eq!(
        (v("time"), v("energy"), v("position"), v("velocity"), v("power"), v("mass")),
        (0.5, 5.0, 2.0, 5f64.sqrt(), 10.0, 2.0)
    );
    let err = step(&doc.world, s0, &[("power".to_string(), 11.0)].into(), 0.5, &mut NoiseStreams::new(0)).unwrap_err();
    assert!(err.to_string().contains("power"), "{err}");
}

#[test]
fn time_only_world_advances_time_only() {
    let doc = taskenv::parse("world w\nvar time in [0, inf) = 0\nvar y = 3\ndyn time <- time + delta\n").unwrap();
    let s = step(&doc.world, doc.world.initial_state(), &Commands::new(), 0.25, &mut NoiseStreams::new(1)).unwrap();
    assert_eq!(s.values(), &[0.25, 3.0]);
}

#[test]
fn evaluation_errors_name_the_rule() {
    let doc = taskenv::parse("world w\nvar time in [0, inf) = 0\nvar y = 0\ndyn time <- time + delta\ndyn y <- 1 / y\n").unwrap();
    let err = step(&doc.world, doc.world.initial_state(), &Commands::new(), 0.1, &mut NoiseStreams::new(1)).unwrap_err();
    assert!(err.to_string().contains('y'), "{err}");
}

#[test]
fn sensor_quantization_and_latency() {
    assert_eq!(quantize(2.26, 0.5), 2.5);
    assert_eq!(quantize(-2.25, 0.5), -2.5);
    assert_eq!(quantize(2.26, 0.0), 2.26);

    let text = common::DRIVING.replace("  sensor position\n", "  sensor position lat 2\n  sensor velocity res 0.5\n");
    let doc = taskenv::parse(&text).unwrap();
    let task = doc.task("drive").unwrap();
    let out = run(&doc, task, &mut Constant::all(10.0), &SimConfig::new(0.1)).unwrap();
    let body = doc.body("car").unwrap();
    let obs = sense(&doc.world, body, &out.history, 1, 0).unwrap();
    assert_eq!(obs.get("position"), Some(2.0));
    let obs = sense(&doc.world, body, &out.history, 0, 0).unwrap();
    assert_eq!(obs.get("position"), Some(2.0));
    let v3 = out.history.state(3).get(&doc.world, "velocity").unwrap();
    let obs = sense(&doc.world, body, &out.history, 3, 0).unwrap();
    assert_eq!(obs.get("velocity"), Some(quantize(v3, 0.5)));
    let p2 = out.history.state(2).get(&doc.world, "position").unwrap();
    assert_eq!(sense(&doc.world, body, &out.history, 4, 0).unwrap().get("position"), Some(p2));
}

fn maintenance_doc() -> taskenv::TaskDocument {
    taskenv::parse(
        "world keep\nvar time in [0, inf) = 0\nvar energy = 1\nvar x = 1\nvar u in [0, 1] = 0\n\
         dyn time <- time + delta\ndyn x <- if(time >= 6.85, 5, 1)\n\
         body b\n  actuator u\nend\n\
         task hold_x\n  body b\n  deadline 12\n  energy energy floor 0\n  goal x ~ 1 +- 0.5 hold 10 window 0 10\nend\n\
         task nothing\n  body b\n  deadline 12\n  energy energy floor 0\nend\n",
    )
    .unwrap()
}

#[test]
fn maintenance_goal_fails_when_left_early() {
    let doc = maintenance_doc();
    let out = run(&doc, doc.task("hold_x").unwrap(), &mut NullController, &SimConfig::new(0.1)).unwrap();
    match out.status {
        TaskStatus::Failure { cause: FailureCause::DeadlineExceeded, time } => assert!((time - 7.0).abs() < 1e-9, "{time}"),
        s => panic!("{s:?}"),
    }
}

#[test]
fn maintenance_goal_succeeds_when_held() {
    let text = "world keep\nvar time in [0, inf) = 0\nvar energy = 1\nvar x = 1\nvar u in [0, 1] = 0\n\
         dyn time <- time + delta\n\
         body b\n  actuator u\nend\n\
         task hold_x\n  body b\n  deadline 12\n  energy energy floor 0\n  goal x ~ 1 +- 0.5 hold 10 window 0 10\nend\n";
    let doc = taskenv::parse(text).unwrap();
    let out = run(&doc, doc.task("hold_x").unwrap(), &mut NullController, &SimConfig::new(0.1)).unwrap();
    // 100 consecutive samples starting at t = 0 end at t = 9.9.
    assert!(matches!(out.status, TaskStatus::Success { time } if (time - 9.9).abs() < 1e-9), "{:?}", out.status);
}

#[test]
fn empty_goal_set_succeeds_at_once() {
    let doc = maintenance_doc();
    let out = run(&doc, doc.task("nothing").unwrap(), &mut NullController, &SimConfig::new(0.1)).unwrap();
    assert_eq!(out.status, TaskStatus::Success { time: 0.0 });
    assert!(out.history.is_empty());
}

#[test]
fn commands_for_sensors_abort_the_run() {
    let doc = driving();
    let mut c = Constant::named(&[("position", 1.0)]);
    assert!(run(&doc, doc.task("drive").unwrap(), &mut c, &SimConfig::new(0.1)).is_err());
}

#[test]
fn history_exports() {
    let doc = driving();
    let out = run(&doc, doc.task("drive").unwrap(), &mut Constant::all(10.0), &SimConfig::new(0.25)).unwrap();
    let mut jsonl = Vec::new();
    write_jsonl(&doc.world, &out.history, &mut jsonl).unwrap();
    let lines: Vec<serde_json::Value> = String::from_utf8(jsonl)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), out.history.len() + 1);
    assert!(lines[0].get("applied").is_none());
    assert_eq!(lines[1]["applied"]["power"], 10.0);
    assert_eq!(lines[1]["state"]["energy"], 7.5);
    let mut csv = Vec::new();
    write_csv(&doc.world, &out.history, &mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("step,energy,mass,position,power,time,velocity\n"), "{csv}");
}

fn bits(h: &History) -> Vec<u64> {
    (0..=h.len()).flat_map(|n| h.state(n).values().iter().map(|x| x.to_bits()).collect::<Vec<_>>()).collect()
}

/// A random world of `n` coupled noisy variables driven by one actuator.
fn random_world(coef: &[(f64, f64, f64)], sigma: f64, sensor_noise: f64, latency: u32) -> String {
    let n = coef.len();
    let mut s = String::from("world rnd\nvar time in [0, inf) = 0\nvar energy = 5\nvar u in [-1, 1] = 0\n");
    for (i, (a, _, _)) in coef.iter().enumerate() {
        s += &format!("var x{i} = {a}\n");
    }
    s += "dyn time <- time + delta\ndyn energy <- energy - delta * abs(u)\n";
    for (i, (a, b, c)) in coef.iter().enumerate() {
        let j = (i + 1) % n;
        s += &format!("dyn x{i} <- x{i} + delta * ({b} * x{j} - {} * x{i} + u) + {c} * gauss({sigma})\n", a.abs());
    }
    s += &format!("body b\n  sensor x0 noise {sensor_noise} lat {latency}\n  actuator u noise {sensor_noise}\nend\n");
    s += "task t\n  body b\n  deadline 2\n  energy energy floor 0\n  goal x0 > 100\nend\n";
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn runs_are_reproducible(
        coef in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, 0.0..1.0f64), 1..5),
        sigma in 0.0..0.5f64,
        sensor_noise in 0.0..0.3f64,
        latency in 0u32..3,
        seed in any::<u64>(),
    ) {
        let doc = taskenv::parse(&random_world(&coef, sigma, sensor_noise, latency)).unwrap();
        let task = doc.task("t").unwrap();
        let cfg = SimConfig::new(0.05).with_seed(seed);
        let go = || {
            let mut c = RandomGrid::new(vec![-1.0, 0.0, 1.0], 0.2);
            run(&doc, task, &mut c as &mut dyn Controller, &cfg).map(|o| (bits(&o.history), o.status))
        };
        match (go(), go()) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn driving_invariants_under_random_power(seed in any::<u64>(), period in 1u32..20) {
        let doc = driving();
        let task = doc.task("drive").unwrap();
        let cfg = SimConfig::new(0.05).with_seed(seed);
        let mut c = RandomGrid::new(vec![0.0, 0.5, 2.0, 10.0], 0.05 * period as f64);
        let out = run(&doc, task, &mut c as &mut dyn Controller, &cfg).unwrap();
        let w = &doc.world;
        let mut energy = 10.0f64;
        let mut spent = 0.0f64;
        for (n, r) in out.history.records.iter().enumerate() {
            let post = &r.post;
            prop_assert!(post.get(w, "position").unwrap() >= 0.0);
            let power = post.get(w, "power").unwrap();
            energy -= cfg.delta * power;
            spent += cfg.delta * power;
            prop_assert_eq!(post.get(w, "energy").unwrap(), energy);
            prop_assert!((10.0 - energy - spent).abs() < 1e-9);
            prop_assert!((out.history.time_of(n + 1) - (n + 1) as f64 * cfg.delta).abs() < 1e-12);
        }
        prop_assert_eq!(check_status(w, task, &out.history).unwrap(), out.status);
    }
}
