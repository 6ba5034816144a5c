//! `taskenv`: validate, simulate, analyse and batch-evaluate task documents.
//!
//! Exit codes: 0 on success, 1 when a simulated task fails, 2 on usage or
//! validation errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use taskenv::algebra::generate_variants;
use taskenv::analysis::{self, distance, ActionGrid, DistanceConfig, ProfileOptions, TaskProfile};
use taskenv::harness::{run_batch, write_results, BatchSpec, ControllerSpec};
use taskenv::sim::export::{write_csv, write_jsonl};
use taskenv::sim::{run, SimConfig, TaskStatus};
use taskenv::{Error, Task, TaskDocument};

#[derive(Parser)]
#[command(name = "taskenv", version, about = "Task-environment toolkit: simulate, enumerate, profile and batch-run tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate .taskdl documents
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Run one task with one controller
    Simulate {
        file: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        /// Controller spec, e.g. constant:0.15 or random-grid:0,5,10@0.5
        #[arg(long, default_value = "null")]
        controller: String,
        /// Write the history to this file (.jsonl or .csv)
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Print the outcome as JSON
        #[arg(long)]
        json: bool,
    },
    /// Enumerate every grid action sequence
    Enumerate {
        file: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Largest number of sequences to simulate
        #[arg(long, default_value_t = analysis::DEFAULT_CAP)]
        cap: u64,
        #[arg(long)]
        json: bool,
    },
    /// Compute a task profile as JSON
    Profile {
        file: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Above this many sequences, ratios are estimated by sampling
        #[arg(long, default_value_t = analysis::DEFAULT_CAP)]
        cap: u64,
        /// Monte-Carlo samples when the cap is exceeded
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        /// Write the profile here instead of stdout
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Compare profiles: per-dimension deltas for two, a distance matrix (CSV) for more
    Compare {
        #[arg(required = true, num_args = 2..)]
        profiles: Vec<PathBuf>,
        /// Dimension weight, e.g. min_energy=2 (others weigh 1)
        #[arg(long = "weight", value_parser = parse_pair)]
        weights: Vec<(String, f64)>,
    },
    /// Generate task variants from a variant block
    Variants {
        file: PathBuf,
        #[arg(long)]
        task: Option<String>,
        /// Name of the variant block
        #[arg(long)]
        variant: String,
        #[arg(long, default_value_t = 5)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write each variant as a .taskdl document into this directory
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run a batch spec (JSON) and write JSON-lines results with a CSV mirror
    Batch {
        spec: PathBuf,
        /// Results file; overrides the spec's output
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Worker threads (default: the spec, then $TASKENV_WORKERS, then all cores)
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Args)]
struct SimArgs {
    /// Task name (default: the first task in the document)
    #[arg(long)]
    task: Option<String>,
    /// Step size in seconds (default: the document's, else 0.01)
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum simulated time (default: deadline + 1 s)
    #[arg(long)]
    horizon: Option<f64>,
    /// Clamp out-of-domain commands instead of failing
    #[arg(long)]
    clamp: bool,
}

#[derive(Args)]
struct GridArgs {
    /// Levels per actuator, e.g. power=0,5,10; a bare list applies to a single actuator
    #[arg(long = "grid", required = true)]
    grid: Vec<String>,
    /// Seconds each grid action is held
    #[arg(long)]
    period: f64,
}

/// A task that ran but did not succeed.
struct TaskFailed;

fn parse_pair(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    let v: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.to_string(), v))
}

fn load(path: &Path) -> Result<TaskDocument> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    taskenv::parse(&text).map_err(|e| match e {
        Error::Parse(diags) => anyhow!(
            "{}",
            diags
                .iter()
                .map(|d| format!("{}:{d}", path.display()))
                .collect::<Vec<_>>()
                .join("\n")
        ),
        other => other.into(),
    })
}

fn pick_task<'a>(doc: &'a TaskDocument, name: &Option<String>) -> Result<&'a Task> {
    match name {
        Some(n) => Ok(doc.task(n)?),
        None => doc.default_task().ok_or_else(|| anyhow!("the document declares no tasks")),
    }
}

fn sim_config(doc: &TaskDocument, a: &SimArgs) -> SimConfig {
    let mut cfg = SimConfig::from_document(doc);
    if let Some(d) = a.delta {
        cfg.delta = d;
    }
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    if a.horizon.is_some() {
        cfg.horizon = a.horizon;
    }
    cfg.clamp_actuators |= a.clamp;
    cfg
}

fn grid(doc: &TaskDocument, task: &Task, g: &GridArgs) -> Result<ActionGrid> {
    let body = doc.body_of(task)?;
    let mut levels = Vec::new();
    for item in &g.grid {
        let (name, list) = match item.split_once('=') {
            Some((n, l)) => (n.trim().to_string(), l),
            None => match body.actuators.as_slice() {
                [one] => (one.variable.clone(), item.as_str()),
                _ => bail!("body `{}` has several actuators; write --grid NAME=LEVELS", task.body),
            },
        };
        let values = list
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| anyhow!("`{x}` is not a number")))
            .collect::<Result<Vec<_>>>()?;
        levels.push((name, values));
    }
    let grid = ActionGrid::new(levels, g.period);
    grid.validate(doc, task)?;
    Ok(grid)
}

fn status_line(status: &TaskStatus) -> String {
    match status {
        TaskStatus::Success { time } => format!("success at t={time}"),
        TaskStatus::Failure { cause, time } => format!("failure ({}) at t={time}", cause.as_str()),
        TaskStatus::InProgress => "in progress".into(),
    }
}

fn validate(file: &Path) -> Result<()> {
    let doc = load(file)?;
    println!(
        "{}: world `{}` with {} variables, {} rules, {} bodies, {} tasks, {} variants",
        file.display(),
        doc.world.name(),
        doc.world.len(),
        doc.world.rules().len(),
        doc.bodies.len(),
        doc.tasks.len(),
        doc.variants.len()
    );
    Ok(())
}

fn simulate(file: &Path, a: &SimArgs, controller: &str, trace: Option<&Path>, as_json: bool) -> Result<bool> {
    let doc = load(file)?;
    let task = pick_task(&doc, &a.task)?;
    let cfg = sim_config(&doc, a);
    let spec: ControllerSpec = controller.parse()?;
    spec.check(&doc.world, doc.body_of(task)?)?;
    let out = run(&doc, task, spec.build().as_mut(), &cfg)?;
    let energy_left = out.final_value(&doc.world, &task.energy.variable);
    let energy_spent = out.energy_spent(&doc.world, task)?;
    if let Some(path) = trace {
        let f = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "csv") {
            write_csv(&doc.world, &out.history, f)?;
        } else {
            write_jsonl(&doc.world, &out.history, std::io::BufWriter::new(f))?;
        }
    }
    if as_json {
        let v = json!({
            "task": task.name,
            "controller": spec.id(),
            "delta": cfg.delta,
            "seed": cfg.master_seed,
            "status": out.status,
            "steps": out.history.len(),
            "energy_left": energy_left,
            "energy_spent": energy_spent,
            "final_state": doc.world.assignment(out.history.last_state()),
        });
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        println!("task {} with {} (delta {})", task.name, spec.id(), cfg.delta);
        println!("{}", status_line(&out.status));
        if let Some(e) = energy_left {
            println!("{} left: {e} (spent {energy_spent})", task.energy.variable);
        }
    }
    Ok(out.status.is_success())
}

fn enumerate(file: &Path, a: &SimArgs, g: &GridArgs, cap: u64, as_json: bool) -> Result<()> {
    let doc = load(file)?;
    let task = pick_task(&doc, &a.task)?;
    let grid = grid(&doc, task, g)?;
    let e = analysis::enumerate_capped(&doc, task, &grid, &sim_config(&doc, a), cap)?;
    if as_json {
        println!("{}", serde_json::to_string_pretty(&e)?);
        return Ok(());
    }
    println!("sequences: {} ({} periods of {} s)", e.n_total, e.periods, grid.period);
    println!("solutions: {}", e.n_solutions);
    println!("ratio: {}", e.ratio);
    println!("ratio with half the time: {}", e.ratio_half_time);
    println!("ratio with half the energy: {}", e.ratio_half_energy);
    for (label, best) in [("fastest", &e.best_time), ("cheapest", &e.best_energy)] {
        match best {
            Some(b) => println!(
                "{label}: t={} energy spent {} via {}",
                b.time,
                b.energy_spent,
                serde_json::to_string(&b.sequence)?
            ),
            None => println!("{label}: no grid solution"),
        }
    }
    Ok(())
}

fn profile(file: &Path, a: &SimArgs, g: &GridArgs, cap: u64, samples: u64, output: Option<&Path>) -> Result<()> {
    let doc = load(file)?;
    let task = pick_task(&doc, &a.task)?;
    let grid = grid(&doc, task, g)?;
    let opts = ProfileOptions {
        cap,
        samples,
        ..ProfileOptions::default()
    };
    let p = analysis::profile(&doc, task, &grid, &sim_config(&doc, a), &opts)?;
    let text = serde_json::to_string_pretty(&p)?;
    match output {
        Some(path) => fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn show(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

fn compare(paths: &[PathBuf], weights: &[(String, f64)]) -> Result<()> {
    let profiles = paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            serde_json::from_str::<TaskProfile>(&text).with_context(|| format!("{} is not a profile", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    // Profiles without a grid solution lack the optimum dimensions; compare
    // on the dimensions all of them share.
    let shared: BTreeSet<String> = profiles
        .iter()
        .map(|p| p.values.keys().cloned().collect::<BTreeSet<_>>())
        .reduce(|a, b| &a & &b)
        .unwrap_or_default();
    let all: BTreeSet<&String> = profiles.iter().flat_map(|p| p.values.keys()).collect();
    let dropped: Vec<&str> = all.iter().filter(|k| !shared.contains(**k)).map(|k| k.as_str()).collect();
    if !dropped.is_empty() {
        eprintln!("note: not in every profile, left out of the distance: {}", dropped.join(", "));
    }
    let trimmed: Vec<TaskProfile> = profiles
        .iter()
        .map(|p| TaskProfile {
            values: p.values.iter().filter(|(k, _)| shared.contains(*k)).map(|(k, v)| (k.clone(), *v)).collect(),
            ..p.clone()
        })
        .collect();
    let mut cfg = DistanceConfig::fit(&trimmed);
    cfg.weights.extend(weights.iter().cloned());
    if let [a, b] = profiles.as_slice() {
        println!("dimension,{},{},delta", a.task, b.task);
        for k in &all {
            match (a.get(k), b.get(k)) {
                (Some(x), Some(y)) => println!("{k},{x},{y},{}", y - x),
                (x, y) => println!("{k},{},{},", show(x), show(y)),
            }
        }
        println!("distance,{}", distance(&trimmed[0], &trimmed[1], &cfg)?);
        return Ok(());
    }
    let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    println!(",{}", names.join(","));
    for (i, a) in trimmed.iter().enumerate() {
        let row = trimmed
            .iter()
            .map(|b| distance(a, b, &cfg).map(|d| d.to_string()))
            .collect::<taskenv::Result<Vec<_>>>()?;
        println!("{},{}", names[i], row.join(","));
    }
    Ok(())
}

fn variants(file: &Path, task: &Option<String>, variant: &str, count: usize, seed: u64, out_dir: Option<&Path>) -> Result<()> {
    let doc = load(file)?;
    let task = pick_task(&doc, task)?;
    let list = generate_variants(&doc, &task.name, doc.variant(variant)?, count, seed)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    for v in &list {
        let mut line = BTreeMap::new();
        line.insert("task", json!(v.task.name));
        line.insert("params", json!(v.task.params));
        line.insert("deadline", json!(v.task.deadline));
        line.insert("start", json!(v.task.start));
        if let Some(dir) = out_dir {
            let path = dir.join(format!("{}.taskdl", v.task.name));
            fs::write(&path, taskenv::serialize(&v.doc))?;
            line.insert("file", json!(path.display().to_string()));
        }
        println!("{}", serde_json::to_string(&line)?);
    }
    Ok(())
}

fn batch(spec_path: &Path, output: Option<PathBuf>, workers: Option<usize>) -> Result<()> {
    let mut spec = BatchSpec::load(spec_path)?;
    if workers.is_some() {
        spec.workers = workers;
    }
    let output = output
        .or_else(|| spec.output.clone())
        .unwrap_or_else(|| spec_path.with_extension("results.jsonl"));
    let result = run_batch(&spec)?;
    write_results(&result, &output)?;
    println!("{} records written to {}", result.records.len(), output.display());
    for s in result.summaries() {
        println!(
            "{} / {}: {}/{} succeeded{}",
            s.task,
            s.controller,
            s.successes,
            s.runs,
            s.mean_time.map(|t| format!(", mean time {t:.4}")).unwrap_or_default()
        );
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<std::result::Result<(), TaskFailed>> {
    match cli.command {
        Command::Validate { files } => {
            let mut failed = 0;
            for file in &files {
                if let Err(e) = validate(file) {
                    eprintln!("{e:#}");
                    failed += 1;
                }
            }
            if failed > 0 {
                bail!("{failed} of {} documents are invalid", files.len());
            }
        }
        Command::Simulate {
            file,
            sim,
            controller,
            trace,
            json,
        } => {
            if !simulate(&file, &sim, &controller, trace.as_deref(), json)? {
                return Ok(Err(TaskFailed));
            }
        }
        Command::Enumerate {
            file,
            sim,
            grid,
            cap,
            json,
        } => enumerate(&file, &sim, &grid, cap, json)?,
        Command::Profile {
            file,
            sim,
            grid,
            cap,
            samples,
            output,
        } => profile(&file, &sim, &grid, cap, samples, output.as_deref())?,
        Command::Compare { profiles, weights } => compare(&profiles, &weights)?,
        Command::Variants {
            file,
            task,
            variant,
            count,
            seed,
            out_dir,
        } => variants(&file, &task, &variant, count, seed, out_dir.as_deref())?,
        Command::Batch { spec, output, workers } => batch(&spec, output, workers)?,
    }
    Ok(Ok(()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(TaskFailed)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
