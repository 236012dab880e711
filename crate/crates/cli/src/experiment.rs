//! Batch runs over datasets, initial layouts and model families.
//!
//! Every (dataset, init, family, control-point count) combination is a
//! cell; each cell is repeated `runs` times with seeds `seed, seed + 1, ...`.
//! Runs are independent and may execute in parallel; results are collected
//! in plan order, so the CSV output does not depend on scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;
use simembed::datasets::{DatasetEntry, LabeledDataset, Registry};
use simembed::init::{force_scheme, load_external_layout, pca_2d, DEFAULT_FORCE_ITERATIONS};
use simembed::metrics::{evaluate, MetricReport, DEFAULT_NEIGHBOR_K};
use simembed::preprocess::fit_pca;
use simembed::scenarios::{
    default_control_count, drag_class, run_interpolation, run_neighbor_learning, select_control_points,
    simulate_center_manipulation, DEFAULT_SPREAD,
};
use simembed::{Error, InitMethod, Layout2D64, ManipulationSet64, ModelFamily, NeighborSpec, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Scenario {
    /// Control-point interpolation.
    Interpolation,
    /// Neighbour learning.
    Neighbors,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Interpolation => "interpolation",
            Scenario::Neighbors => "neighbors",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "1" | "interpolation" => Ok(Scenario::Interpolation),
            "2" | "neighbors" | "neighbours" => Ok(Scenario::Neighbors),
            other => Err(Error::InvalidConfig(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub datasets: Vec<String>,
    pub inits: Vec<InitMethod>,
    pub families: Vec<ModelFamily>,
    pub scenario: Scenario,
    pub runs: usize,
    pub seed: u64,
    pub iterations: Option<usize>,
    /// Learning rate of both stages; family default when absent.
    pub learning_rate: Option<f64>,
    /// Learning rate of the refit stage only, overriding `learning_rate`.
    pub refit_learning_rate: Option<f64>,
    /// Overrides the registry's control-point count.
    pub control_points: Option<usize>,
    /// Control-point counts as multiples of `sqrt(N)`; replaces
    /// `control_points` when non-empty.
    pub control_sweep: Vec<f64>,
    pub k_original: Option<usize>,
    pub k_visual: Option<usize>,
    pub spread: f64,
    pub drag_class: Option<i64>,
    pub drag_delta: [f64; 2],
    /// Layout file used by the external init, one row per dataset row.
    pub external_layout: Option<PathBuf>,
    pub parallel: bool,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            datasets: vec!["wine".into()],
            inits: vec![InitMethod::Pca],
            families: vec![ModelFamily::Linear, ModelFamily::Kernel],
            scenario: Scenario::Interpolation,
            runs: 10,
            seed: 0,
            iterations: None,
            learning_rate: None,
            refit_learning_rate: None,
            control_points: None,
            control_sweep: Vec::new(),
            k_original: None,
            k_visual: None,
            spread: DEFAULT_SPREAD,
            drag_class: None,
            drag_delta: [10.0, 10.0],
            external_layout: None,
            parallel: true,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self, registry: &Registry) -> Result<(), Error> {
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be at least 1".into()));
        }
        if self.datasets.is_empty() || self.inits.is_empty() || self.families.is_empty() {
            return Err(Error::InvalidConfig("plan needs at least one dataset, init and family".into()));
        }
        for d in &self.datasets {
            registry.entry(d)?;
        }
        if self.inits.contains(&InitMethod::External) && self.external_layout.is_none() {
            return Err(Error::InvalidConfig("external init needs a layout file".into()));
        }
        if self.control_sweep.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::InvalidConfig("control-point multiples must be positive".into()));
        }
        Ok(())
    }
}

/// Identifies one cell of the plan.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CellKey {
    pub dataset: String,
    pub init: String,
    pub family: String,
    pub scenario: String,
    /// Control-point count; 0 for neighbour learning.
    pub control_points: usize,
}

/// Metrics and timings of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    #[serde(flatten)]
    pub cell: CellKey,
    pub run: usize,
    pub seed: u64,
    pub before: MetricReport,
    pub after: MetricReport,
    pub clone_final_loss: f64,
    pub refit_final_loss: f64,
    #[serde(skip)]
    pub setup_time: Duration,
    #[serde(skip)]
    pub clone_time: Duration,
    #[serde(skip)]
    pub refit_time: Duration,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellFailure {
    #[serde(flatten)]
    pub cell: CellKey,
    pub run: usize,
    pub seed: u64,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    pub failures: Vec<CellFailure>,
}

impl ExperimentResult {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Prepared {
    entry: DatasetEntry,
    dataset: LabeledDataset,
}

#[derive(Debug, Clone)]
struct Job {
    cell: CellKey,
    dataset: usize,
    init: InitMethod,
    family: ModelFamily,
    run: usize,
    seed: u64,
}

fn expand(plan: &ExperimentPlan, prepared: &[Prepared]) -> Vec<Job> {
    let mut jobs = Vec::new();
    for (di, name) in plan.datasets.iter().enumerate() {
        let n = prepared[di].dataset.len();
        let counts: Vec<usize> = match plan.scenario {
            Scenario::Neighbors => vec![0],
            Scenario::Interpolation if !plan.control_sweep.is_empty() => plan
                .control_sweep
                .iter()
                .map(|m| ((m * (n as f64).sqrt()).round() as usize).clamp(2, n))
                .collect(),
            Scenario::Interpolation => vec![plan
                .control_points
                .or(prepared[di].entry.control_points)
                .unwrap_or_else(|| default_control_count(n))],
        };
        for &init in &plan.inits {
            for &family in &plan.families {
                for &count in &counts {
                    let cell = CellKey {
                        dataset: name.clone(),
                        init: init.as_str().to_string(),
                        family: family.as_str().to_string(),
                        scenario: plan.scenario.as_str().to_string(),
                        control_points: count,
                    };
                    for run in 0..plan.runs {
                        jobs.push(Job {
                            cell: cell.clone(),
                            dataset: di,
                            init,
                            family,
                            run,
                            seed: plan.seed.wrapping_add(run as u64),
                        });
                    }
                }
            }
        }
    }
    jobs
}

fn scenario_config(plan: &ExperimentPlan, family: ModelFamily, seed: u64) -> ScenarioConfig {
    let mut config = match plan.scenario {
        Scenario::Interpolation => ScenarioConfig::for_family(family),
        Scenario::Neighbors => ScenarioConfig::for_neighbor_learning(family),
    }
    .with_seed(seed);
    if let Some(it) = plan.iterations {
        config = config.with_iterations(it);
    }
    if let Some(lr) = plan.learning_rate {
        config.clone.learning_rate = lr;
        config.refit.learning_rate = lr;
    }
    if let Some(lr) = plan.refit_learning_rate {
        config.refit.learning_rate = lr;
    }
    config
}

fn init_layout(
    plan: &ExperimentPlan,
    method: InitMethod,
    x: &Array2<f64>,
    rows: Option<&[usize]>,
    seed: u64,
) -> Result<Layout2D64, Error> {
    // PCA and external layouts are computed on the whole dataset and then
    // restricted; Force Scheme places only the rows it is given
    match (method, rows) {
        (InitMethod::Pca, None) => pca_2d(x.view()),
        (InitMethod::Pca, Some(r)) => Ok(pca_2d(x.view())?.select(r)),
        (InitMethod::Force, None) => force_scheme(x.view(), DEFAULT_FORCE_ITERATIONS, seed),
        (InitMethod::Force, Some(r)) => {
            force_scheme(x.select(ndarray::Axis(0), r).view(), DEFAULT_FORCE_ITERATIONS, seed)
        }
        (InitMethod::External, rows) => {
            let path = plan
                .external_layout
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("external init needs a layout file".into()))?;
            let full = load_external_layout(path, Some(x.nrows()))?;
            Ok(match rows {
                Some(r) => full.select(r),
                None => full,
            })
        }
    }
}

/// Seed of the manipulation simulator, kept apart from the optimizer seed.
fn jitter_seed(seed: u64) -> u64 {
    seed ^ 0x005e_ed0f_d7a6
}

fn run_job(plan: &ExperimentPlan, prepared: &Prepared, job: &Job, timing_only: bool) -> Result<RunRecord, Error> {
    let setup = Instant::now();
    let ds = &prepared.dataset;
    let pca = fit_pca(ds.features.view(), prepared.entry.retained_fraction)?;
    let x = pca.transform(ds.features.view())?;
    let labels = ds.labels.as_deref();
    let config = scenario_config(plan, job.family, job.seed);

    let empty = || MetricReport {
        nearest_centroid_precision: None,
        silhouette_scaled: None,
        neighbor_error_mean: f64::NAN,
        neighbor_error_per_point: Vec::new(),
    };
    let record = |before, after, clone_loss, refit_loss, setup_time, clone_time, refit_time| RunRecord {
        cell: job.cell.clone(),
        run: job.run,
        seed: job.seed,
        before,
        after,
        clone_final_loss: clone_loss,
        refit_final_loss: refit_loss,
        setup_time,
        clone_time,
        refit_time,
    };

    match plan.scenario {
        Scenario::Interpolation => {
            let control = select_control_points(x.nrows(), Some(job.cell.control_points), job.seed)?;
            let init = init_layout(plan, job.init, &x, Some(&control.indices), job.seed)?;
            let setup_time = setup.elapsed();
            if timing_only {
                return Ok(record(empty(), empty(), f64::NAN, f64::NAN, setup_time, Duration::ZERO, Duration::ZERO));
            }
            let labels = labels.ok_or(Error::MissingLabels)?;
            let control_labels: Vec<i64> = control.indices.iter().map(|&i| labels[i]).collect();
            let spread = plan.spread;
            let mut simulate = |l: &Layout2D64, rows: &[usize]| -> Result<ManipulationSet64, Error> {
                Ok(simulate_center_manipulation(l, rows, &control_labels, spread, jitter_seed(job.seed))?.moves)
            };
            let out = run_interpolation(x.view(), &control, &init, &mut simulate, job.family, &config)?;
            let first = out.initial_model.project(x.view())?;
            let before = evaluate(first.view(), Some(labels), x.view(), DEFAULT_NEIGHBOR_K)?;
            let after = evaluate(out.layout.coords.view(), Some(labels), x.view(), DEFAULT_NEIGHBOR_K)?;
            Ok(record(
                before,
                after,
                *out.clone_trace.last().unwrap_or(&f64::NAN),
                *out.refit_trace.last().unwrap_or(&f64::NAN),
                setup_time,
                out.timings.clone,
                out.timings.refit,
            ))
        }
        Scenario::Neighbors => {
            let init = init_layout(plan, job.init, &x, None, job.seed)?;
            let setup_time = setup.elapsed();
            if timing_only {
                return Ok(record(empty(), empty(), f64::NAN, f64::NAN, setup_time, Duration::ZERO, Duration::ZERO));
            }
            let labels = labels.ok_or(Error::MissingLabels)?;
            let defaults = NeighborSpec::default();
            let spec = NeighborSpec {
                k_original: plan
                    .k_original
                    .or(prepared.entry.k_original)
                    .unwrap_or(defaults.k_original),
                k_visual: plan.k_visual.or(prepared.entry.k_visual).unwrap_or(defaults.k_visual),
                ..defaults
            };
            let class = plan
                .drag_class
                .or(prepared.entry.drag_class)
                .or_else(|| ds.classes().first().copied())
                .ok_or(Error::MissingLabels)?;
            let delta = plan.drag_delta;
            let mut drag =
                |l: &Layout2D64, _: &[usize]| -> Result<ManipulationSet64, Error> { drag_class(l, labels, class, delta) };
            let out = run_neighbor_learning(x.view(), &init, &mut drag, &spec, job.family, &config)?;
            let before = evaluate(out.initial_layout.coords.view(), Some(labels), x.view(), DEFAULT_NEIGHBOR_K)?;
            let after = evaluate(out.layout.coords.view(), Some(labels), x.view(), DEFAULT_NEIGHBOR_K)?;
            Ok(record(
                before,
                after,
                *out.clone_trace.last().unwrap_or(&f64::NAN),
                *out.refit_trace.last().unwrap_or(&f64::NAN),
                setup_time,
                out.timings.clone,
                out.timings.refit,
            ))
        }
    }
}

fn execute(plan: &ExperimentPlan, registry: &Registry, timing_only: bool) -> Result<ExperimentResult, Error> {
    plan.validate(registry)?;
    let prepared = plan
        .datasets
        .iter()
        .map(|name| {
            Ok(Prepared {
                entry: registry.entry(name)?.clone(),
                dataset: registry.load_dataset(name)?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let jobs = expand(plan, &prepared);
    let work = |job: &Job| run_job(plan, &prepared[job.dataset], job, timing_only);
    let outcomes: Vec<Result<RunRecord, Error>> = if plan.parallel {
        jobs.par_iter().map(work).collect()
    } else {
        jobs.iter().map(work).collect()
    };

    let mut result = ExperimentResult::default();
    for (job, outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(r) => result.records.push(r),
            Err(e) => result.failures.push(CellFailure {
                cell: job.cell.clone(),
                run: job.run,
                seed: job.seed,
                code: e.code().to_string(),
                message: e.to_string(),
            }),
        }
    }
    // a cell with any failed run is reported as failed as a whole
    let failed: Vec<CellKey> = result.failures.iter().map(|f| f.cell.clone()).collect();
    result.records.retain(|r| !failed.contains(&r.cell));
    Ok(result)
}

/// Runs every cell of the plan and collects per-run metrics.
pub fn run_experiment(plan: &ExperimentPlan, registry: &Registry) -> Result<ExperimentResult, Error> {
    execute(plan, registry, false)
}

/// Runs the plan for wall-clock timings. With zero iterations only the setup
/// (PCA, control points, initial layout) is timed.
pub fn time_fit(plan: &ExperimentPlan, registry: &Registry) -> Result<ExperimentResult, Error> {
    if plan.iterations == Some(0) {
        let plan = ExperimentPlan {
            iterations: None,
            ..plan.clone()
        };
        return execute(&plan, registry, true);
    }
    execute(plan, registry, false)
}

/// Metric names in summary order.
pub const METRICS: [&str; 5] = [
    "precision",
    "silhouette",
    "neighbor_error_x100",
    "precision_gain",
    "silhouette_gain",
];

fn metric_values(r: &RunRecord) -> [f64; 5] {
    let p = r.after.nearest_centroid_precision.unwrap_or(f64::NAN);
    let s = r.after.silhouette_scaled.unwrap_or(f64::NAN);
    let p0 = r.before.nearest_centroid_precision.unwrap_or(f64::NAN);
    let s0 = r.before.silhouette_scaled.unwrap_or(f64::NAN);
    [p, s, 100.0 * r.after.neighbor_error_mean, p - p0, s - s0]
}

/// Mean and population standard deviation; a single value has deviation 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    #[serde(flatten)]
    pub cell: CellKey,
    pub metric: String,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    /// `mean (std)` with two decimals.
    pub formatted: String,
}

pub fn summarize(result: &ExperimentResult) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<CellKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in &result.records {
        cells.entry(r.cell.clone()).or_default().push(r);
    }
    let mut rows = Vec::new();
    for (cell, records) in cells {
        let values: Vec<[f64; 5]> = records.iter().map(|r| metric_values(r)).collect();
        for (m, name) in METRICS.iter().enumerate() {
            let col: Vec<f64> = values.iter().map(|v| v[m]).collect();
            let (mean, std) = mean_std(&col);
            rows.push(SummaryRow {
                cell: cell.clone(),
                metric: name.to_string(),
                runs: col.len(),
                mean,
                std,
                formatted: format!("{mean:.2} ({std:.2})"),
            });
        }
    }
    rows
}

const CELL_HEADER: [&str; 5] = ["dataset", "init", "family", "scenario", "control_points"];

fn cell_fields(c: &CellKey) -> Vec<String> {
    vec![
        c.dataset.clone(),
        c.init.clone(),
        c.family.clone(),
        c.scenario.clone(),
        c.control_points.to_string(),
    ]
}

/// Shortest text that parses back to the same value.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// One row per run. Contains no timings, so reruns with equal seeds produce
/// identical bytes.
pub fn write_results_csv<W: std::io::Write>(result: &ExperimentResult, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CELL_HEADER.to_vec();
    header.extend([
        "run",
        "seed",
        "precision_before",
        "silhouette_before",
        "neighbor_error_before",
        "precision",
        "silhouette",
        "neighbor_error",
        "neighbor_error_x100",
        "clone_final_loss",
        "refit_final_loss",
    ]);
    w.write_record(&header)?;
    for r in &result.records {
        let mut row = cell_fields(&r.cell);
        row.extend([
            r.run.to_string(),
            r.seed.to_string(),
            opt(r.before.nearest_centroid_precision),
            opt(r.before.silhouette_scaled),
            num(r.before.neighbor_error_mean),
            opt(r.after.nearest_centroid_precision),
            opt(r.after.silhouette_scaled),
            num(r.after.neighbor_error_mean),
            num(100.0 * r.after.neighbor_error_mean),
            num(r.clone_final_loss),
            num(r.refit_final_loss),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: std::io::Write>(rows: &[SummaryRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CELL_HEADER.to_vec();
    header.extend(["metric", "runs", "mean", "std", "formatted"]);
    w.write_record(&header)?;
    for s in rows {
        let mut row = cell_fields(&s.cell);
        row.extend([
            s.metric.clone(),
            s.runs.to_string(),
            num(s.mean),
            num(s.std),
            s.formatted.clone(),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timing_csv<W: std::io::Write>(result: &ExperimentResult, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CELL_HEADER.to_vec();
    header.extend(["run", "seed", "setup_seconds", "clone_seconds", "refit_seconds"]);
    w.write_record(&header)?;
    for r in &result.records {
        let mut row = cell_fields(&r.cell);
        row.extend([
            r.run.to_string(),
            r.seed.to_string(),
            num(r.setup_time.as_secs_f64()),
            num(r.clone_time.as_secs_f64()),
            num(r.refit_time.as_secs_f64()),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_failures_csv<W: std::io::Write>(result: &ExperimentResult, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CELL_HEADER.to_vec();
    header.extend(["run", "seed", "code", "message"]);
    w.write_record(&header)?;
    for f in &result.failures {
        let mut row = cell_fields(&f.cell);
        row.extend([f.run.to_string(), f.seed.to_string(), f.code.clone(), f.message.clone()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Text table with one line per cell and one `mean (std)` column per metric.
pub fn format_summary_table(rows: &[SummaryRow]) -> String {
    let mut by_cell: BTreeMap<&CellKey, BTreeMap<&str, &str>> = BTreeMap::new();
    for r in rows {
        by_cell.entry(&r.cell).or_default().insert(&r.metric, &r.formatted);
    }
    let mut out = format!(
        "{:<10} {:<9} {:<7} {:>5}  {:>16} {:>16} {:>16}\n",
        "dataset", "init", "family", "cp", "precision", "silhouette", "neighbor err"
    );
    for (cell, m) in by_cell {
        out.push_str(&format!(
            "{:<10} {:<9} {:<7} {:>5}  {:>16} {:>16} {:>16}\n",
            cell.dataset,
            cell.init,
            cell.family,
            cell.control_points,
            m.get("precision").copied().unwrap_or("-"),
            m.get("silhouette").copied().unwrap_or("-"),
            m.get("neighbor_error_x100").copied().unwrap_or("-"),
        ));
    }
    out
}

/// Writes `results.csv`, `summary.csv` and, when needed, `failures.csv` to
/// `dir`.
pub fn write_experiment_outputs(result: &ExperimentResult, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let io = |e: csv::Error| std::io::Error::other(e);
    write_results_csv(result, std::fs::File::create(dir.join("results.csv"))?).map_err(io)?;
    write_summary_csv(&summarize(result), std::fs::File::create(dir.join("summary.csv"))?).map_err(io)?;
    if !result.failures.is_empty() {
        write_failures_csv(result, std::fs::File::create(dir.join("failures.csv"))?).map_err(io)?;
    }
    Ok(())
}
