use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use taskenv::analysis::{enumerate, ActionGrid};
use taskenv::harness::Constant;
use taskenv::rng::NoiseStreams;
use taskenv::sim::{run, step, Commands, SimConfig};
use taskenv::{parse, serialize};

const DRIVING: &str = include_str!("../../../worlds/driving.taskdl");
const THERMOSTAT: &str = include_str!("../../../worlds/thermostat.taskdl");

fn bench_step(c: &mut Criterion) {
    let doc = parse(DRIVING).unwrap();
    let state = doc.world.initial_state().clone();
    let commands: Commands = [("power".to_string(), 5.0)].into();
    let mut streams = NoiseStreams::new(1);
    c.bench_function("step/driving", |b| {
        b.iter(|| step(&doc.world, black_box(&state), &commands, 0.001, &mut streams).unwrap())
    });

    let task = doc.task("drive").unwrap();
    let cfg = SimConfig::new(0.001);
    c.bench_function("run/drive_constant_0.15", |b| {
        b.iter(|| run(&doc, task, &mut Constant::all(0.15), &cfg).unwrap())
    });
}

fn bench_parse(c: &mut Criterion) {
    c.bench_function("parse/driving", |b| b.iter(|| parse(black_box(DRIVING)).unwrap()));
    c.bench_function("parse/thermostat", |b| b.iter(|| parse(black_box(THERMOSTAT)).unwrap()));
    let doc = parse(THERMOSTAT).unwrap();
    c.bench_function("serialize/thermostat", |b| b.iter(|| serialize(black_box(&doc))));
}

fn bench_enumerate(c: &mut Criterion) {
    let doc = parse(DRIVING).unwrap();
    let task = doc.task("drive_by_5").unwrap();
    let cfg = SimConfig::new(0.1);
    let mut group = c.benchmark_group("enumerate");
    group.sample_size(10);
    for (periods, period) in [(5, 1.0), (10, 0.5)] {
        let grid = ActionGrid::single("power", vec![0.0, 5.0, 10.0], period);
        group.bench_function(format!("drive_by_5/3^{periods}"), |b| {
            b.iter(|| enumerate(&doc, task, &grid, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_step, bench_parse, bench_enumerate);
criterion_main!(benches);
