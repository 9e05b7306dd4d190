use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simbase::dataset::{load_dataset, make_folds, Dataset, LabelColumn};
use simbase::eval::{
    abs_coefficient_csv, coefficient_report, run_benchmark, run_cv, ExperimentConfig, GridSpec, MethodSpec,
    DATA_DIR_ENV,
};
use simbase::metrics::Metric;
use simbase::models::{Hyper, MethodKind, ModelBody, TrainedModel};
use simbase::optim::SolverConfig;
use simbase::schema::{write_atomic, Document};
use simbase::{Error, ErrorKind};

#[derive(Parser)]
#[command(
    name = "simbase",
    version,
    about = "Similarity-evidence classifiers: train, predict, evaluate, benchmark"
)]
struct Cli {
    /// Seed for fold assignment and validation splits; echoed into outputs
    /// [default: 42, or the experiment file's seed for benchmark].
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on a whole dataset and save it.
    Train(TrainArgs),
    /// Apply a saved model to a dataset.
    Predict(PredictArgs),
    /// Cross-validate one method on one dataset.
    Evaluate(EvaluateArgs),
    /// Run every dataset x method pair of an experiment file.
    Benchmark(BenchmarkArgs),
    /// Coefficient tables of a saved SBLR or SparseSBLR model.
    Report(ReportArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Dataset file: MULAN ARFF (with --labels-xml) or CSV.
    #[arg(long)]
    data: PathBuf,

    /// Label XML for ARFF input.
    #[arg(long)]
    labels_xml: Option<PathBuf>,

    /// CSV class column: header name, 0-based index, or `last`.
    #[arg(long, default_value = "class")]
    label_col: String,
}

impl DataArgs {
    fn load(&self) -> simbase::Result<Dataset> {
        let column: LabelColumn = self.label_col.parse().expect("infallible");
        let data = resolve(&self.data);
        let xml = self.labels_xml.as_deref().map(resolve);
        load_dataset(&data, xml.as_deref(), &column)
    }
}

/// Relative paths that do not exist here are looked up in the data directory.
fn resolve(p: &Path) -> PathBuf {
    if p.is_relative() && !p.exists() {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            let candidate = Path::new(&dir).join(p);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    p.to_path_buf()
}

#[derive(Args)]
struct HyperArgs {
    /// sml, sblr, sparsesblr, knn, ncm or lr.
    #[arg(long)]
    method: MethodKind,

    /// RBF kernel width.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,

    /// l1 penalty (sparsesblr).
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,

    /// Neighbours (knn).
    #[arg(long, default_value_t = 5)]
    k: usize,
}

impl HyperArgs {
    fn hyper(&self) -> simbase::Result<Hyper> {
        if self.k == 0 {
            return Err(Error::Param("--k must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Param(format!("--gamma must be > 0, got {}", self.gamma)));
        }
        Ok(Hyper {
            gamma: self.gamma,
            lambda: self.lambda,
            k: self.k,
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Predictions CSV to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// sml, sblr, sparsesblr, knn, ncm or lr.
    #[arg(long)]
    method: MethodKind,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Comma-separated grid for gamma (and lambda).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Metric that drives grid selection.
    #[arg(long)]
    select: Option<Metric>,
    /// Per-fold results CSV to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the file's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    model: PathBuf,
    /// Training data, for co-occurrence counts.
    #[command(flatten)]
    data: DataArgs,
    /// Focus class: label name or index.
    #[arg(long)]
    class: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

const DEFAULT_SEED: u64 = 42;

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .init();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .expect("thread pool is configured once");
    }
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let outcome = match &cli.command {
        Command::Train(a) => train(a, seed),
        Command::Predict(a) => predict(a, seed),
        Command::Evaluate(a) => evaluate(a, seed),
        Command::Benchmark(a) => benchmark(a, cli.seed),
        Command::Report(a) => report(a, seed),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

fn train(a: &TrainArgs, seed: u64) -> simbase::Result<u8> {
    let hyper = a.hyper.hyper()?;
    let d = a.data.load()?;
    let mut model = TrainedModel::fit(a.hyper.method, &d, hyper, &SolverConfig::default())?;
    model.seed = Some(seed);
    model.save(&a.out)?;

    println!("seed {seed}");
    println!("method {}", model.kind());
    println!(
        "instances {}  features {}  classes {}  task {:?}",
        d.n_instances(),
        d.n_features(),
        d.n_labels(),
        d.task()
    );
    match &model.body {
        ModelBody::Sml(m) => {
            println!("evidence dimensions {}", m.n_labels());
            if let Some(st) = m.size_transform() {
                println!("label-set sizes {:?}", st.sizes);
            }
        }
        ModelBody::Sblr(m) | ModelBody::SparseSblr(m) => {
            println!("evidence dimensions {}", m.n_labels());
            println!("coefficient matrix {} x {}", m.n_labels(), m.n_labels() + 1);
            println!("solver iterations {:?}", m.iterations());
            let unconverged: Vec<usize> = (0..m.n_labels()).filter(|&k| !m.converged()[k]).collect();
            if !unconverged.is_empty() {
                println!("not converged for classes {unconverged:?}");
            }
            println!("nonzero evidence weights {}", m.coefficients().nonzero_weights());
        }
        _ => {}
    }
    println!("wrote {}", a.out.display());
    Ok(0)
}

fn predict(a: &PredictArgs, seed: u64) -> simbase::Result<u8> {
    let model = TrainedModel::load_checked(&a.model)?;
    let d = a.data.load()?;
    model.check_compatible(&d)?;
    let pred = model.predict_raw(d.features().view())?;

    let prefix = match model.kind() {
        MethodKind::Sblr | MethodKind::SparseSblr | MethodKind::Lr => "posterior",
        _ => "score",
    };
    let mut out = format!("# seed={seed} method={}\n", model.kind());
    out.push_str("row,labels,fallback");
    for name in &model.label_names {
        let _ = write!(out, ",{prefix}_{}", csv_cell(name));
    }
    out.push('\n');
    for i in 0..pred.len() {
        let names: Vec<&str> = pred.labels[i].iter().map(|&k| model.label_names[k].as_str()).collect();
        let _ = write!(out, "{i},{},{}", csv_cell(&names.join(";")), pred.fallback[i]);
        for v in pred.scores.row(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    write_atomic(&a.out, out.as_bytes())?;
    let fallbacks = pred.fallback.iter().filter(|&&f| f).count();
    println!(
        "predicted {} rows ({fallbacks} fallbacks) -> {}",
        pred.len(),
        a.out.display()
    );
    Ok(0)
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn evaluate(a: &EvaluateArgs, seed: u64) -> simbase::Result<u8> {
    if a.k == 0 {
        return Err(Error::Param("--k must be at least 1".into()));
    }
    let d = a.data.load()?;
    let plan = make_folds(d.n_instances(), a.folds, seed)?;
    let mut grid = GridSpec {
        selection_metric: a.select,
        ..GridSpec::default()
    };
    if let Some(values) = &a.grid {
        grid.values = values.clone();
    }
    let spec = MethodSpec { kind: a.method, k: a.k };
    let r = run_cv(&d, &spec, &plan, &grid, &SolverConfig::default())?;

    let metrics = Metric::for_task(d.task());
    let mut csv = format!("# seed={seed} folds={}\nfold,gamma,lambda", a.folds);
    for m in metrics {
        let _ = write!(csv, ",{m}");
    }
    csv.push('\n');
    println!("seed {seed}  {} on {} ({} folds)", spec, a.data.data.display(), a.folds);
    for f in &r.folds {
        let shown = |used: bool, v: f64| if used { v.to_string() } else { String::new() };
        let _ = write!(
            csv,
            "{},{},{}",
            f.fold,
            shown(a.method.uses_gamma(), f.hyper.gamma),
            shown(a.method.uses_lambda(), f.hyper.lambda)
        );
        let mut line = format!("fold {:>2}", f.fold);
        if a.method.uses_gamma() {
            let _ = write!(line, "  gamma {:<8}", f.hyper.gamma);
        }
        if a.method.uses_lambda() {
            let _ = write!(line, " lambda {:<8}", f.hyper.lambda);
        }
        for &m in metrics {
            let v = f.report.get(m);
            let _ = write!(csv, ",{}", v.map(|v| v.to_string()).unwrap_or_default());
            let _ = write!(
                line,
                "  {m} {}",
                v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
            );
        }
        csv.push('\n');
        println!("{line}");
    }
    for s in &r.skipped {
        println!("fold {:>2}  skipped: {}", s.fold, s.reason);
    }
    let mut mean = String::from("mean");
    for &m in metrics {
        let _ = write!(
            mean,
            "  {m} {}",
            r.mean(m).map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
        );
    }
    println!("{mean}");
    if let Some(out) = &a.out {
        write_atomic(out, csv.as_bytes())?;
    }
    Ok(0)
}

fn benchmark(a: &BenchmarkArgs, seed: Option<u64>) -> simbase::Result<u8> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let config_dir = a.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let out_dir = match (&a.out, &cfg.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) if o.is_relative() => config_dir.join(o),
        (None, Some(o)) => o.clone(),
        (None, None) => PathBuf::from("results"),
    };
    let outcome = run_benchmark(&cfg, &config_dir)?;
    outcome.write_outputs(&out_dir)?;
    print!("{}", outcome.report());
    println!("\nwrote {}", out_dir.display());
    Ok(match outcome.failures.first() {
        None => 0,
        Some(f) => exit_code(f.error.kind()).max(3),
    })
}

fn report(a: &ReportArgs, seed: u64) -> simbase::Result<u8> {
    let model = TrainedModel::load_checked(&a.model)?;
    let sblr = match &model.body {
        ModelBody::Sblr(m) | ModelBody::SparseSblr(m) => m,
        _ => {
            return Err(Error::Param(format!(
                "coefficient reports need an sblr or sparsesblr model, got {}",
                model.kind()
            )))
        }
    };
    let d = a.data.load()?;
    model.check_compatible(&d)?;
    // names win over indices: wine's classes are called "1", "2", "3"
    let focus = model
        .label_names
        .iter()
        .position(|n| n == &a.class)
        .or_else(|| a.class.parse::<usize>().ok())
        .ok_or_else(|| Error::Param(format!("no class named `{}`", a.class)))?;
    let r = coefficient_report(sblr, &d, focus)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    let safe: String = r
        .focus_name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    let header = format!("# seed={} method={}\n", model.seed.unwrap_or(seed), model.kind());
    let focus_path = a.out.join(format!("coefficients_{safe}.csv"));
    write_atomic(&focus_path, format!("{header}{}", r.to_csv()).as_bytes())?;
    let abs_path = a.out.join("coefficients_abs.csv");
    write_atomic(
        &abs_path,
        format!("{header}{}", abs_coefficient_csv(sblr, &model.label_names)).as_bytes(),
    )?;

    let full_path = a.out.join("coefficients.csv");
    let full = model.coefficients_csv().expect("report needs an sblr-family model");
    write_atomic(&full_path, format!("{header}{full}").as_bytes())?;

    println!("class {} (intercept {:.4})", r.focus_name, r.intercept);
    let w = r.rows.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
    println!("{:<w$}  {:>13}  {:>11}", "Class", "co-occurrence", "coefficient");
    for row in &r.rows {
        println!("{:<w$}  {:>13}  {:>11.4}", row.name, row.cooccurrence, row.coefficient);
    }
    println!(
        "wrote {}, {} and {}",
        focus_path.display(),
        abs_path.display(),
        full_path.display()
    );
    Ok(0)
}
