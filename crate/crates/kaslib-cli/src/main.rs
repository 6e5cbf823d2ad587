//! Command-line front end: generate benchmark datasets, tune feature maps,
//! fit and query surrogates, and emit comparison reports and plot data.
//!
//! Exit codes: 0 success, 2 usage or schema problems, 3 numerical failures.
//! Set KASLIB_LOG={error,info,debug} for progress logging.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use kaslib::benchmarks::{by_name, generate_dataset};
use kaslib::datasets::{read_dataset, DatasetPaths, GradientDataset};
use kaslib::error::Error;
use kaslib::featuremap::{build_feature_map, FeatureMap, SpectralMeasure};
use kaslib::pipeline::{
    compare, fit_surrogate, plot_to_csv, predict, summary_plot_data, Surrogate,
};
use kaslib::subspace::SubspaceKind;
use kaslib::tuning::{derive_seed, grid_search, TuneConfig};
use kaslib::Result;

#[derive(Parser)]
#[command(
    name = "kaslib",
    version,
    about = "Gradient-based dimension reduction with active subspaces, kernel feature maps, and GP response surfaces"
)]
struct Cli {
    /// Worker threads (default: available parallelism). Results do not
    /// depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an analytic benchmark, tune the measure, and compare methods.
    RunBenchmark(RunBenchmarkArgs),
    /// Fit a surrogate from CSV dataset files and persist it.
    Fit(FitArgs),
    /// Predict with a persisted surrogate on an inputs CSV.
    Predict(PredictArgs),
    /// Grid-search the spectral measure on a CSV dataset.
    Tune(TuneArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    As,
    Kas,
}

impl From<MethodArg> for SubspaceKind {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::As => SubspaceKind::As,
            MethodArg::Kas => SubspaceKind::Kas,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MeasureArg {
    Gaussian,
    MvnDiag,
    Laplace,
    Beta,
}

impl MeasureArg {
    /// Template measure with unit parameters; tuning replaces them.
    fn family(self, m: usize) -> SpectralMeasure {
        match self {
            MeasureArg::Gaussian => SpectralMeasure::Gaussian { variance: 1.0 },
            MeasureArg::MvnDiag => SpectralMeasure::MultivariateNormalDiag { diag: vec![1.0; m] },
            MeasureArg::Laplace => SpectralMeasure::Laplace {
                location: 0.0,
                scale: 1.0,
            },
            MeasureArg::Beta => SpectralMeasure::Beta {
                alpha: 1.0,
                beta: 1.0,
            },
        }
    }
}

#[derive(Args)]
struct CsvDatasetArgs {
    /// Inputs CSV (header x1..xm).
    #[arg(long)]
    inputs: PathBuf,
    /// Outputs CSV (header y1..yd).
    #[arg(long)]
    outputs: PathBuf,
    /// Gradients CSV (header g_1_1..g_d_m, row-major Jacobians).
    #[arg(long)]
    gradients: PathBuf,
    /// Optional d x d SPD output-metric CSV (no header).
    #[arg(long)]
    metric: Option<PathBuf>,
}

impl CsvDatasetArgs {
    fn read(&self) -> Result<GradientDataset> {
        read_dataset(&DatasetPaths {
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            gradients: self.gradients.clone(),
            metric: self.metric.clone(),
        })
    }
}

#[derive(Args)]
struct GridArgs {
    /// Grid lower bound for every measure hyperparameter.
    #[arg(long = "grid-min")]
    grid_min: Option<f64>,
    /// Grid upper bound for every measure hyperparameter.
    #[arg(long = "grid-max")]
    grid_max: Option<f64>,
    /// Log-spaced points per hyperparameter axis.
    #[arg(long = "grid-points")]
    grid_points: Option<usize>,
}

impl GridArgs {
    /// Explicit axes when any flag is given, otherwise empty (library
    /// default grid).
    fn build(&self, n_axes: usize) -> Result<Vec<Vec<f64>>> {
        if self.grid_min.is_none() && self.grid_max.is_none() && self.grid_points.is_none() {
            return Ok(Vec::new());
        }
        let lo = self.grid_min.unwrap_or(1e-3);
        let hi = self.grid_max.unwrap_or(1e2);
        let points = self.grid_points.unwrap_or(12);
        if lo.is_nan() || hi.is_nan() || lo <= 0.0 || hi < lo || points == 0 {
            return Err(Error::Argument(
                "need 0 < grid-min <= grid-max and grid-points >= 1".into(),
            ));
        }
        let axis: Vec<f64> = if points == 1 {
            vec![lo]
        } else {
            let (ll, lh) = (lo.ln(), hi.ln());
            (0..points)
                .map(|i| (ll + (lh - ll) * i as f64 / (points - 1) as f64).exp())
                .collect()
        };
        Ok(vec![axis; n_axes])
    }
}

#[derive(Args)]
struct RunBenchmarkArgs {
    /// Benchmark name: paraboloid, sine, ebola, or vec-quadratic.
    #[arg(long)]
    name: String,
    /// Training sample count.
    #[arg(long, default_value_t = 500)]
    train: usize,
    /// Held-out sample count for summary plots.
    #[arg(long, default_value_t = 500)]
    test: usize,
    /// Feature-space dimension D.
    #[arg(long = "features", default_value_t = 1000)]
    features: usize,
    /// RFF amplitude sigma_f.
    #[arg(long = "sigma-f", default_value_t = 1.0)]
    sigma_f: f64,
    /// Spectral-measure family to tune.
    #[arg(long, value_enum, default_value_t = MeasureArg::Gaussian)]
    measure: MeasureArg,
    /// Active dimension; repeat for several.
    #[arg(long = "r")]
    r: Vec<usize>,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 3)]
    folds: usize,
    /// Early-stop tolerance on fold RRMSE.
    #[arg(long, default_value_t = 0.8)]
    tol: f64,
    #[command(flatten)]
    grid: GridArgs,
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: u64,
    /// Output directory for report and plot files.
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    dataset: CsvDatasetArgs,
    /// Subspace method.
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Active dimension.
    #[arg(long = "r", default_value_t = 1)]
    r: usize,
    /// Feature-space dimension D (kas only, when no featuremap.json exists).
    #[arg(long = "features", default_value_t = 1000)]
    features: usize,
    /// RFF amplitude sigma_f (kas only).
    #[arg(long = "sigma-f", default_value_t = 1.0)]
    sigma_f: f64,
    /// Measure for a freshly sampled map (kas only).
    #[arg(long, value_enum, default_value_t = MeasureArg::Gaussian)]
    measure: MeasureArg,
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: u64,
    /// Output directory; receives surrogate.json (and featuremap.json).
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Inputs CSV (header x1..xm).
    #[arg(long)]
    inputs: PathBuf,
    /// Directory holding surrogate.json; receives predictions.csv.
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    dataset: CsvDatasetArgs,
    /// Feature-space dimension D.
    #[arg(long = "features", default_value_t = 1000)]
    features: usize,
    /// RFF amplitude sigma_f.
    #[arg(long = "sigma-f", default_value_t = 1.0)]
    sigma_f: f64,
    /// Spectral-measure family to tune.
    #[arg(long, value_enum, default_value_t = MeasureArg::Gaussian)]
    measure: MeasureArg,
    /// Active dimension used inside cross validation.
    #[arg(long = "r", default_value_t = 1)]
    r: usize,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Early-stop tolerance on fold RRMSE.
    #[arg(long, default_value_t = 0.8)]
    tol: f64,
    #[command(flatten)]
    grid: GridArgs,
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: u64,
    /// Output directory for tune_report.json and featuremap.json.
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KASLIB_LOG", "error")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            log::debug!("thread pool already initialized: {e}");
        }
    }
    let outcome = match cli.command {
        Command::RunBenchmark(args) => cmd_run_benchmark(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Tune(args) => cmd_tune(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Factorization { .. } | Error::Singular(_) | Error::Domain(_) => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn cmd_run_benchmark(args: RunBenchmarkArgs) -> Result<()> {
    let bench = by_name(&args.name)?;
    let rs = if args.r.is_empty() { vec![1] } else { args.r.clone() };
    fs::create_dir_all(&args.out_dir)?;

    log::info!("sampling {} training and {} test points", args.train, args.test);
    let train_ds = generate_dataset(&bench, args.train, args.seed)?;
    let test_ds = generate_dataset(&bench, args.test, derive_seed(args.seed, u64::MAX))?;

    let family = args.measure.family(bench.m());
    let cfg = TuneConfig {
        grid: args.grid.build(family.n_hyperparams())?,
        folds: args.folds,
        tol: args.tol,
        d_features: args.features,
        r: rs[0],
        sigma_f: args.sigma_f,
        seed: args.seed,
    };
    log::info!("tuning {} and comparing methods at r = {:?}", args.name, rs);
    let cmp = compare(&train_ds, &cfg, &family, &rs)?;

    write_json(&args.out_dir.join("report.json"), &cmp.report)?;
    write_text(&args.out_dir.join("report.csv"), &cmp.report.to_csv()?)?;
    write_json(&args.out_dir.join("tune_report.json"), &cmp.tune)?;
    if let Some(fm) = &cmp.feature_map {
        write_json(&args.out_dir.join("featuremap.json"), fm)?;
    }

    if rs.contains(&1) && bench.d == 1 {
        let s = fit_surrogate(&train_ds, SubspaceKind::As, 1, None)?;
        let rows = summary_plot_data(&s, &test_ds.x, &test_ds.y, 200)?;
        write_text(&args.out_dir.join("summary_as.csv"), &plot_to_csv(&rows)?)?;
        if let Some(fm) = &cmp.feature_map {
            let s = fit_surrogate(&train_ds, SubspaceKind::Kas, 1, Some(fm))?;
            let rows = summary_plot_data(&s, &test_ds.x, &test_ds.y, 200)?;
            write_text(&args.out_dir.join("summary_kas.csv"), &plot_to_csv(&rows)?)?;
        }
    } else {
        log::info!("skipping summary plots (need r = 1 and scalar outputs)");
    }

    for cell in &cmp.report.cells {
        let method = match cell.method {
            SubspaceKind::As => "as",
            SubspaceKind::Kas => "kas",
        };
        match (cell.mean, cell.std) {
            (Some(mean), Some(std)) => {
                println!("{method} r={}: rrmse {mean:.4} +/- {std:.4}", cell.r)
            }
            _ => println!(
                "{method} r={}: unavailable ({})",
                cell.r,
                cell.note.as_deref().unwrap_or("no result")
            ),
        }
    }
    Ok(())
}

/// Feature map for a kas fit: reuse <out-dir>/featuremap.json when present
/// (e.g. a tuned winner), otherwise sample a fresh map and persist it.
fn fit_feature_map(args: &FitArgs, m: usize) -> Result<FeatureMap> {
    let path = args.out_dir.join("featuremap.json");
    if path.exists() {
        log::info!("reusing feature map {}", path.display());
        let fm: FeatureMap = read_json(&path)?;
        if fm.m() != m {
            return Err(Error::Dim(format!(
                "feature map in {} has m={}, dataset has m={m}",
                path.display(),
                fm.m()
            )));
        }
        return Ok(fm);
    }
    let fm = build_feature_map(
        m,
        args.features,
        args.sigma_f,
        args.measure.family(m),
        args.seed,
    )?;
    write_json(&path, &fm)?;
    Ok(fm)
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let ds = args.dataset.read()?;
    fs::create_dir_all(&args.out_dir)?;
    let method: SubspaceKind = args.method.into();
    let fm = match method {
        SubspaceKind::Kas => Some(fit_feature_map(&args, ds.m())?),
        SubspaceKind::As => None,
    };
    let surrogate = fit_surrogate(&ds, method, args.r, fm.as_ref())?;
    write_json(&args.out_dir.join("surrogate.json"), &surrogate)?;
    println!(
        "fitted {} surrogate on {} samples (r={})",
        match method {
            SubspaceKind::As => "as",
            SubspaceKind::Kas => "kas",
        },
        ds.n_samples(),
        args.r
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let surrogate_path = args.out_dir.join("surrogate.json");
    if !surrogate_path.exists() {
        return Err(Error::Argument(format!(
            "no surrogate found at {}; run fit first",
            surrogate_path.display()
        )));
    }
    let surrogate: Surrogate = read_json(&surrogate_path)?;
    let x = read_inputs_csv(&args.inputs)?;
    let (means, vars) = predict(&surrogate, &x)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let d = means.ncols();
    let header: Vec<String> = if d == 1 {
        vec!["mean".into(), "variance".into()]
    } else {
        (1..=d)
            .map(|j| format!("mean_{j}"))
            .chain(std::iter::once("variance".into()))
            .collect()
    };
    w.write_record(&header).map_err(|e| Error::State(e.to_string()))?;
    for i in 0..means.nrows() {
        let mut rec: Vec<String> = (0..d).map(|j| format!("{:.16e}", means[[i, j]])).collect();
        rec.push(format!("{:.16e}", vars[i]));
        w.write_record(&rec).map_err(|e| Error::State(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::State(e.to_string()))?;
    let text = String::from_utf8(bytes).map_err(|e| Error::State(e.to_string()))?;
    write_text(&args.out_dir.join("predictions.csv"), &text)?;
    println!("predicted {} rows", means.nrows());
    Ok(())
}

fn cmd_tune(args: TuneArgs) -> Result<()> {
    let ds = args.dataset.read()?;
    fs::create_dir_all(&args.out_dir)?;
    let family = args.measure.family(ds.m());
    let cfg = TuneConfig {
        grid: args.grid.build(family.n_hyperparams())?,
        folds: args.folds,
        tol: args.tol,
        d_features: args.features,
        r: args.r,
        sigma_f: args.sigma_f,
        seed: args.seed,
    };
    let report = grid_search(&ds, &cfg, &family)?;
    write_json(&args.out_dir.join("tune_report.json"), &report)?;
    match &report.best {
        Some(best) => {
            write_json(&args.out_dir.join("featuremap.json"), &best.feature_map)?;
            println!(
                "best {:?} = {:?} with mean rrmse {:.4}",
                report.param_names, best.params, best.mean_score
            );
        }
        None => println!("no grid point scored below 1; no feature map persisted"),
    }
    Ok(())
}

/// Read a bare inputs CSV (header x1..xm) into a row-major matrix.
fn read_inputs_csv(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            file: path.display().to_string(),
            row: 0,
            msg: e.to_string(),
        })?;
    let m = reader.headers().map_err(|e| Error::Parse {
        file: path.display().to_string(),
        row: 1,
        msg: e.to_string(),
    })?.len();
    let mut rows: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            file: path.display().to_string(),
            row: i + 2,
            msg: e.to_string(),
        })?;
        if record.len() != m {
            return Err(Error::Schema {
                file: path.display().to_string(),
                row: i + 2,
                msg: format!("{} fields, expected {m}", record.len()),
            });
        }
        for field in record.iter() {
            rows.push(field.trim().parse::<f64>().map_err(|e| Error::Parse {
                file: path.display().to_string(),
                row: i + 2,
                msg: e.to_string(),
            })?);
        }
        n += 1;
    }
    Array2::from_shape_vec((n, m), rows)
        .map_err(|e| Error::Argument(format!("inputs csv shape: {e}")))
}
