//! Batch evaluation: every (task, controller, seed) cell, run concurrently,
//! written in canonical order so identical specs give identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ControllerSpec;
use crate::algebra::{generate_variants, Task};
use crate::error::{invalid, Result};
use crate::rng::derive_seed;
use crate::sim::{run, SimConfig};
use crate::taskdl::{self, TaskDocument};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "TASKENV_WORKERS";

/// Draw `count` variants from the named variant spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRef {
    pub spec: String,
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSpec {
    /// Path to a `.taskdl` file, relative to the spec file.
    pub document: PathBuf,
    /// Task to run; the document's first task if absent.
    #[serde(default)]
    pub task: Option<String>,
    /// Run generated variants of the task instead of the task itself.
    #[serde(default)]
    pub variant: Option<VariantRef>,
    pub controllers: Vec<String>,
    /// Seeds per (task, controller) cell.
    #[serde(default = "one")]
    pub runs: u64,
    /// Simulation settings; the document's `sim` line fills in if absent.
    #[serde(default)]
    pub sim: Option<SimConfig>,
    /// Where to write results, relative to the spec file.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn one() -> u64 {
    1
}

impl BatchSpec {
    /// Reads a spec, resolving its paths against the spec's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec: BatchSpec = serde_json::from_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.document = base.join(&spec.document);
        spec.output = spec.output.map(|o| base.join(o));
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub task: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    pub controller: String,
    pub run: u64,
    pub seed: u64,
    /// `success`, a failure cause, or `error` when the run aborted.
    pub status: String,
    pub time: Option<f64>,
    pub energy_spent: Option<f64>,
    pub goal_flags: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub task: String,
    pub controller: String,
    pub runs: u64,
    pub successes: u64,
    pub success_rate: f64,
    /// Mean completion time over successful runs.
    pub mean_time: Option<f64>,
    /// Mean energy spent over runs that did not abort.
    pub mean_energy_spent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub world: String,
    pub tasks: Vec<String>,
    pub controllers: Vec<String>,
    pub runs: u64,
    pub sim: SimConfig,
    pub records: Vec<ResultRecord>,
}

impl BatchResult {
    /// Per-cell statistics, recomputed from the records.
    pub fn summaries(&self) -> Vec<CellSummary> {
        let mut cells: BTreeMap<(&str, &str), Vec<&ResultRecord>> = BTreeMap::new();
        for r in &self.records {
            cells.entry((&r.task, &r.controller)).or_default().push(r);
        }
        cells
            .into_iter()
            .map(|((task, controller), recs)| {
                let successes: Vec<f64> = recs
                    .iter()
                    .filter(|r| r.status == "success")
                    .filter_map(|r| r.time)
                    .collect();
                let energies: Vec<f64> = recs.iter().filter_map(|r| r.energy_spent).collect();
                let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
                CellSummary {
                    task: task.to_string(),
                    controller: controller.to_string(),
                    runs: recs.len() as u64,
                    successes: successes.len() as u64,
                    success_rate: successes.len() as f64 / recs.len() as f64,
                    mean_time: mean(&successes),
                    mean_energy_spent: mean(&energies),
                }
            })
            .collect()
    }
}

fn worker_count(spec: &BatchSpec) -> usize {
    spec.workers
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()))
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_one(doc: &TaskDocument, task: &Task, controller: &ControllerSpec, run_index: u64, sim: &SimConfig) -> ResultRecord {
    let seed = derive_seed(sim.master_seed, run_index);
    let cfg = SimConfig {
        master_seed: seed,
        ..sim.clone()
    };
    let mut c = controller.build();
    let mut record = ResultRecord {
        task: task.name.clone(),
        params: task.params.clone(),
        controller: c.id(),
        run: run_index,
        seed,
        status: "error".into(),
        time: None,
        energy_spent: None,
        goal_flags: Vec::new(),
        error: None,
    };
    match run(doc, task, c.as_mut(), &cfg) {
        Ok(out) => {
            record.status = out.status.label().to_string();
            record.time = out.status.time();
            record.energy_spent = out.energy_spent(&doc.world, task).ok();
            record.goal_flags = out.goal_flags;
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

/// Runs every cell of `spec`. Aborted runs become records with status
/// `error`; the batch itself fails only on unresolvable references.
pub fn run_batch(spec: &BatchSpec) -> Result<BatchResult> {
    if spec.runs == 0 {
        return Err(invalid("a batch needs at least one run per cell"));
    }
    let doc = taskdl::parse(&fs::read_to_string(&spec.document)?)?;
    let base = match &spec.task {
        Some(name) => doc.task(name)?.clone(),
        None => doc
            .default_task()
            .cloned()
            .ok_or_else(|| invalid("the document declares no tasks"))?,
    };
    let controllers = spec
        .controllers
        .iter()
        .map(|s| s.parse::<ControllerSpec>())
        .collect::<Result<Vec<_>>>()?;
    let body = doc.body_of(&base)?;
    for c in &controllers {
        c.check(&doc.world, body)?;
    }
    let sim = spec.sim.clone().unwrap_or_else(|| SimConfig::from_document(&doc));

    let cells: Vec<(TaskDocument, Task)> = match &spec.variant {
        None => vec![(doc.clone(), base)],
        Some(v) => generate_variants(&doc, &base.name, doc.variant(&v.spec)?, v.count, v.seed)?
            .into_iter()
            .map(|v| (v.doc, v.task))
            .collect(),
    };
    let jobs: Vec<(usize, usize, u64)> = (0..cells.len())
        .flat_map(|t| (0..controllers.len()).flat_map(move |c| (0..spec.runs).map(move |r| (t, c, r))))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(spec))
        .build()
        .map_err(|e| invalid(format!("cannot start workers: {e}")))?;
    let mut records: Vec<ResultRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(t, c, r)| run_one(&cells[t].0, &cells[t].1, &controllers[c], r, &sim))
            .collect()
    });
    records.sort_by(|a, b| {
        (&a.task, &a.controller, a.run, a.seed).cmp(&(&b.task, &b.controller, b.run, b.seed))
    });

    Ok(BatchResult {
        world: doc.world.name().to_string(),
        tasks: cells.iter().map(|(_, t)| t.name.clone()).collect(),
        controllers: controllers.iter().map(|c| c.id()).collect(),
        runs: spec.runs,
        sim,
        records,
    })
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Line<'a> {
    Header {
        format: &'static str,
        version: u32,
        world: &'a str,
        tasks: &'a [String],
        controllers: &'a [String],
        runs: u64,
        sim: &'a SimConfig,
    },
    Record(&'a ResultRecord),
    Summary(&'a CellSummary),
}

/// Writes `result` as JSON lines to `path` and a CSV mirror of the records
/// next to it (same name, `.csv` extension).
pub fn write_results(result: &BatchResult, path: &Path) -> Result<()> {
    let mut out = String::new();
    let mut push = |line: &Line| -> Result<()> {
        out.push_str(&serde_json::to_string(line)?);
        out.push('\n');
        Ok(())
    };
    push(&Line::Header {
        format: "taskenv-results",
        version: 1,
        world: &result.world,
        tasks: &result.tasks,
        controllers: &result.controllers,
        runs: result.runs,
        sim: &result.sim,
    })?;
    for r in &result.records {
        push(&Line::Record(r))?;
    }
    for s in &result.summaries() {
        push(&Line::Summary(s))?;
    }
    fs::write(path, out)?;

    let mut csv = csv::Writer::from_path(path.with_extension("csv"))?;
    csv.write_record([
        "task", "controller", "run", "seed", "status", "time", "energy_spent", "goal_flags", "params", "error",
    ])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in &result.records {
        let flags: String = r.goal_flags.iter().map(|f| if *f { '1' } else { '0' }).collect();
        let params = r
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        csv.write_record([
            r.task.clone(),
            r.controller.clone(),
            r.run.to_string(),
            r.seed.to_string(),
            r.status.clone(),
            opt(r.time),
            opt(r.energy_spent),
            flags,
            params,
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
