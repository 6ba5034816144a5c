//! Shared fixtures and independent reference computations.
#![allow(dead_code)]

pub mod docgen;

use taskenv::TaskDocument;

pub const DRIVING: &str = include_str!("../../../../worlds/driving.taskdl");

pub fn driving() -> TaskDocument {
    taskenv::parse(DRIVING).expect("shipped driving document parses")
}

/// Outcome of the reference driving integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ref {
    Reached { time: f64, energy: f64 },
    Exhausted { time: f64 },
    TimedOut,
}

/// Plain-loop integration of the driving rules under constant power,
/// written without the engine. Sample n is at n·δ; the goal is
/// position > 10 with energy > 0, the floor is 0 (with the engine's
/// 1e-9 slack), and the run stops at `limit` seconds.
pub fn reference_drive(power: f64, delta: f64, limit: f64, energy_floor: f64) -> Ref {
    let (mut time, mut energy, mut position, mut velocity) = (0.0f64, 10.0f64, 2.0f64, 0.0f64);
    let mass = 2.0;
    let mut n: u64 = 0;
    loop {
        n += 1;
        let (t0, e0, p0, v0) = (time, energy, position, velocity);
        time = t0 + delta;
        energy = e0 - delta * power;
        position = (p0 + delta * v0).max(0.0);
        velocity = (2.0 * delta * power / mass + v0 * v0).sqrt();
        let t = n as f64 * delta;
        if energy <= energy_floor + 1e-9 * energy_floor.abs().max(1.0) {
            return Ref::Exhausted { time: t };
        }
        if position > 10.0 && (energy > 0.0 || energy_floor < 0.0) {
            return Ref::Reached { time: t, energy };
        }
        if t >= limit - 1e-9 {
            return Ref::TimedOut;
        }
    }
}

pub fn world_file(name: &str) -> String {
    let path = format!("{}/../../worlds/{name}.taskdl", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn load(name: &str) -> TaskDocument {
    taskenv::parse(&world_file(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Brute-force count of power sequences solving `drive_by_5`
/// (position > 10, time < 5, energy > 0 by t = 5), each level held for
/// `k` steps of `delta`. Every sequence is simulated from scratch.
pub fn reference_drive_by_5_solutions(levels: &[f64], delta: f64, k: usize, periods: u32) -> u64 {
    let total = (levels.len() as u64).pow(periods);
    let mut solved = 0;
    for code in 0..total {
        let mut seq = Vec::with_capacity(periods as usize);
        let mut c = code;
        for _ in 0..periods {
            seq.push(levels[(c % levels.len() as u64) as usize]);
            c /= levels.len() as u64;
        }
        let (mut time, mut energy, mut position, mut velocity) = (0.0f64, 10.0f64, 2.0f64, 0.0f64);
        let mut n = 0u64;
        'run: for &power in &seq {
            for _ in 0..k {
                let (t0, e0, p0, v0) = (time, energy, position, velocity);
                time = t0 + delta;
                energy = e0 - delta * power;
                position = (p0 + delta * v0).max(0.0);
                velocity = (2.0 * delta * power / 2.0 + v0 * v0).sqrt();
                n += 1;
                let t = n as f64 * delta;
                if energy <= 1e-9 {
                    break 'run;
                }
                if position > 10.0 && time < 5.0 && energy > 0.0 {
                    solved += 1;
                    break 'run;
                }
                if t >= 5.0 - 1e-9 {
                    break 'run;
                }
            }
        }
    }
    solved
}

/// Final x of the counter world after pressing according to `bits`.
pub fn counter_trace(bits: u32, steps: u32) -> Vec<f64> {
    let mut xs = vec![0.0];
    for i in 0..steps {
        let last = *xs.last().unwrap();
        xs.push(last + ((bits >> i) & 1) as f64);
    }
    xs
}
