use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simembed::datasets::{bundled_registry_path, Registry};
use simembed::init::{force_scheme, load_external_layout, pca_2d, write_layout, DEFAULT_FORCE_ITERATIONS};
use simembed::metrics::{evaluate, DEFAULT_NEIGHBOR_K};
use simembed::optimizer::write_loss_trace;
use simembed::preprocess::fit_pca;
use simembed::scenarios::{clone_layout, DEFAULT_SPREAD};
use simembed::{Error, InitMethod, Layout2D, LayoutSource, ModelFamily, ScenarioConfig};
use simembed_cli::experiment::{
    format_summary_table, summarize, write_experiment_outputs, write_timing_csv, ExperimentResult,
};
use simembed_cli::{run_experiment, time_fit, ExperimentPlan, SavedModel, Scenario};

#[derive(Parser)]
#[command(name = "simembed", version, about = "Learned, steerable 2D projections")]
struct Cli {
    /// Dataset registry (defaults to the bundled data/registry.json).
    #[arg(long, global = true)]
    registry: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run repeated scenario experiments and write results.csv and summary.csv.
    Experiment(PlanArgs),
    /// Time the setup, clone and refit stages and write timing.csv.
    Time(PlanArgs),
    /// Fit a model that clones an initial layout and save it as JSON.
    Fit(FitArgs),
    /// Project a dataset through a saved model.
    Project(ProjectArgs),
    /// Score a layout file against a dataset.
    Metrics(MetricsArgs),
    /// List the registered datasets.
    Datasets,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long, value_delimiter = ',', default_value = "wine")]
    dataset: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "pca")]
    init: Vec<InitMethod>,
    #[arg(long, value_delimiter = ',', default_value = "linear,kernel")]
    family: Vec<ModelFamily>,
    /// 1 (interpolation) or 2 (neighbors).
    #[arg(long, default_value = "1")]
    scenario: Scenario,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    iterations: Option<usize>,
    /// Learning rate of both stages.
    #[arg(long)]
    lr: Option<f64>,
    /// Learning rate of the refit stage.
    #[arg(long)]
    refit_lr: Option<f64>,
    #[arg(long)]
    control_points: Option<usize>,
    /// Control-point counts as multiples of sqrt(N), e.g. `0.5,1,2`.
    #[arg(long, value_delimiter = ',')]
    control_sweep: Vec<f64>,
    #[arg(long)]
    k_original: Option<usize>,
    #[arg(long)]
    k_visual: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SPREAD)]
    spread: f64,
    #[arg(long)]
    drag_class: Option<i64>,
    #[arg(long, num_args = 2, value_names = ["DX", "DY"], default_values_t = [10.0, 10.0])]
    drag_delta: Vec<f64>,
    /// Layout file for the external init.
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Run jobs one after another.
    #[arg(long)]
    serial: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl PlanArgs {
    fn plan(&self) -> ExperimentPlan {
        ExperimentPlan {
            datasets: self.dataset.clone(),
            inits: self.init.clone(),
            families: self.family.clone(),
            scenario: self.scenario,
            runs: self.runs,
            seed: self.seed,
            iterations: self.iterations,
            learning_rate: self.lr,
            refit_learning_rate: self.refit_lr,
            control_points: self.control_points,
            control_sweep: self.control_sweep.clone(),
            k_original: self.k_original,
            k_visual: self.k_visual,
            spread: self.spread,
            drag_class: self.drag_class,
            drag_delta: [self.drag_delta[0], self.drag_delta[1]],
            external_layout: self.layout.clone(),
            parallel: !self.serial,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, default_value = "wine")]
    dataset: String,
    #[arg(long, default_value = "pca")]
    init: InitMethod,
    #[arg(long, default_value = "linear")]
    family: ModelFamily,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Model JSON destination.
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Also write the per-iteration loss as CSV.
    #[arg(long)]
    loss_trace: Option<PathBuf>,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: String,
    /// Layout destination (`x,y` per line).
    #[arg(long, default_value = "layout.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    layout: PathBuf,
    #[arg(long)]
    dataset: String,
    #[arg(long, default_value_t = DEFAULT_NEIGHBOR_K)]
    k: usize,
}

fn load_registry(path: &Option<PathBuf>) -> Result<Registry, Error> {
    Registry::load(path.clone().unwrap_or_else(bundled_registry_path))
}

fn report_failures(result: &ExperimentResult) -> ExitCode {
    for f in &result.failures {
        eprintln!(
            "failed: {} {} {} cp={} run {}: [{}] {}",
            f.cell.dataset, f.cell.init, f.cell.family, f.cell.control_points, f.run, f.code, f.message
        );
    }
    if result.succeeded() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn experiment(registry: &Registry, args: &PlanArgs) -> Result<ExitCode, Error> {
    let result = run_experiment(&args.plan(), registry)?;
    write_experiment_outputs(&result, &args.out)?;
    print!("{}", format_summary_table(&summarize(&result)));
    println!("wrote {}", args.out.display());
    Ok(report_failures(&result))
}

fn time(registry: &Registry, args: &PlanArgs) -> Result<ExitCode, Error> {
    let result = time_fit(&args.plan(), registry)?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("timing.csv");
    write_timing_csv(&result, std::fs::File::create(&path)?).map_err(std::io::Error::other)?;
    println!("wrote {}", path.display());
    Ok(report_failures(&result))
}

fn fit(registry: &Registry, args: &FitArgs) -> Result<ExitCode, Error> {
    let entry = registry.entry(&args.dataset)?;
    let ds = registry.load_dataset(&args.dataset)?;
    let pca = fit_pca(ds.features.view(), entry.retained_fraction)?;
    let x = pca.transform(ds.features.view())?;
    let init: Layout2D<f64> = match args.init {
        InitMethod::Pca => pca_2d(x.view())?,
        InitMethod::Force => force_scheme(x.view(), DEFAULT_FORCE_ITERATIONS, args.seed)?,
        InitMethod::External => {
            let path = args
                .layout
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("external init needs --layout".into()))?;
            load_external_layout(path, Some(x.nrows()))?
        }
    };
    let mut config = ScenarioConfig::for_family(args.family).with_seed(args.seed);
    if let Some(it) = args.iterations {
        config = config.with_iterations(it);
    }
    if let Some(lr) = args.lr {
        config.clone.learning_rate = lr;
    }
    let result = clone_layout(x.view(), &init, args.family, &config, None)?;
    if let Some(path) = &args.loss_trace {
        write_loss_trace(&result.loss_trace, std::fs::File::create(path)?)?;
    }
    println!(
        "loss {:.6e} -> {:.6e} over {} iterations",
        result.initial_loss(),
        result.final_loss(),
        result.loss_trace.len()
    );
    SavedModel::new(&args.dataset, pca, result.model).save(&args.out)?;
    println!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn project(registry: &Registry, args: &ProjectArgs) -> Result<ExitCode, Error> {
    let saved = SavedModel::load(&args.model)?;
    let ds = registry.load_dataset(&args.dataset)?;
    let coords = saved.project(ds.features.view())?;
    write_layout(&Layout2D::new(coords, LayoutSource::Learned), &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn metrics(registry: &Registry, args: &MetricsArgs) -> Result<ExitCode, Error> {
    let entry = registry.entry(&args.dataset)?;
    let ds = registry.load_dataset(&args.dataset)?;
    let x = fit_pca(ds.features.view(), entry.retained_fraction)?.transform(ds.features.view())?;
    let layout: Layout2D<f64> = load_external_layout(&args.layout, Some(ds.len()))?;
    let mut report = evaluate(layout.coords.view(), ds.labels.as_deref(), x.view(), args.k)?;
    report.neighbor_error_per_point.clear();
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn datasets(registry: &Registry) -> Result<ExitCode, Error> {
    for name in registry.names() {
        let ds = registry.load_dataset(name)?;
        let classes = ds.classes();
        println!(
            "{name:<10} {:>5} x {:<4} classes {:?}  {}",
            ds.len(),
            ds.dim(),
            classes,
            registry.entry(name)?.description
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    let registry = load_registry(&cli.registry)?;
    match &cli.command {
        Command::Experiment(a) => experiment(&registry, a),
        Command::Time(a) => time(&registry, a),
        Command::Fit(a) => fit(&registry, a),
        Command::Project(a) => project(&registry, a),
        Command::Metrics(a) => metrics(&registry, a),
        Command::Datasets => datasets(&registry),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(2)
        }
    }
}
