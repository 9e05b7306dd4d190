//! Declarative benchmark runs.
//!
//! An experiment file (TOML) lists datasets and methods; every applicable
//! (dataset, method) pair is cross-validated on the same fold plan and the
//! results are written as:
//!
//! * `results.csv`: one row per (dataset, method, fold, metric)
//! * `selected.csv`: the grid point chosen in every fold
//! * `ranks.csv`: per-dataset mean, rank, and average rank per metric
//! * `nemenyi.json`: Friedman and Nemenyi statistics per metric
//! * `report.txt`: one table per metric, `value(rank)` per cell
//!
//! Relative dataset paths resolve against `SIMBASE_DATA_DIR` when it is set
//! and against the experiment file's directory otherwise.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_dataset, make_folds, Dataset, LabelColumn, Task};
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::models::MethodKind;
use crate::optim::SolverConfig;
use crate::schema::{write_atomic, Document};

use super::cv::{run_cv, CvResult, GridSpec, MethodSpec, DEFAULT_GRID};
use super::stats::{friedman, nemenyi, rank_methods, FriedmanResult, NemenyiResult, RankTable};

pub const DATA_DIR_ENV: &str = "SIMBASE_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub path: PathBuf,
    #[serde(default)]
    pub labels_xml: Option<PathBuf>,
    /// CSV class column: a header name, a 0-based index, or `last`.
    #[serde(default)]
    pub label_column: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodEntry {
    pub kind: MethodKind,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridEntry {
    #[serde(default = "default_grid")]
    pub values: Vec<f64>,
    #[serde(default = "default_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub selection_metric: Option<Metric>,
}

fn default_grid() -> Vec<f64> {
    DEFAULT_GRID.to_vec()
}

fn default_fraction() -> f64 {
    0.1
}

impl Default for GridEntry {
    fn default() -> Self {
        GridEntry {
            values: default_grid(),
            validation_fraction: default_fraction(),
            selection_metric: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridEntry,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default, rename = "dataset")]
    pub datasets: Vec<DatasetEntry>,
    #[serde(default, rename = "method")]
    pub methods: Vec<MethodEntry>,
}

fn default_seed() -> u64 {
    42
}

fn default_folds() -> usize {
    10
}

fn default_alpha() -> f64 {
    0.05
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("no [[dataset]] entries".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no [[method]] entries".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        let mut names: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("dataset names must be unique".into()));
        }
        let mut kinds: Vec<MethodKind> = self.methods.iter().map(|m| m.kind).collect();
        kinds.sort_unstable();
        if kinds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("each method may appear once".into()));
        }
        if self.methods.iter().any(|m| m.k == 0) {
            return Err(Error::Config("k must be at least 1".into()));
        }
        self.grid_spec().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.solver().validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            values: self.grid.values.clone(),
            validation_fraction: self.grid.validation_fraction,
            selection_metric: self.grid.selection_metric,
        }
    }

    pub fn solver(&self) -> SolverConfig {
        self.solver.unwrap_or_default()
    }

    pub fn method_specs(&self) -> Vec<MethodSpec> {
        self.methods
            .iter()
            .map(|m| MethodSpec { kind: m.kind, k: m.k })
            .collect()
    }
}

/// Resolves a dataset path from the experiment file.
pub fn resolve_data_path(path: &Path, config_dir: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if !dir.is_empty() => Path::new(&dir).join(path),
        _ => config_dir.join(path),
    }
}

pub fn load_entry(entry: &DatasetEntry, config_dir: &Path) -> Result<Dataset> {
    let path = resolve_data_path(&entry.path, config_dir);
    let xml = entry.labels_xml.as_ref().map(|p| resolve_data_path(p, config_dir));
    let column: LabelColumn = entry
        .label_column
        .as_deref()
        .unwrap_or("class")
        .parse()
        .expect("infallible");
    load_dataset(&path, xml.as_deref(), &column)
}

#[derive(Debug)]
pub struct PairFailure {
    pub dataset: String,
    pub method: MethodSpec,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub ranks: RankTable,
    /// Mean metric per (dataset, method), same layout as `ranks.ranks`.
    pub means: Array2<f64>,
    pub friedman: Option<FriedmanResult>,
    pub nemenyi: Option<NemenyiResult>,
    /// Why the significance tests were not run, if they were not.
    pub note: Option<String>,
}

#[derive(Debug)]
pub struct BenchmarkOutcome {
    pub seed: u64,
    pub folds: usize,
    pub alpha: f64,
    /// (dataset name, task, result) in config order.
    pub results: Vec<(String, Task, CvResult)>,
    pub failures: Vec<PairFailure>,
    pub summaries: Vec<MetricSummary>,
}

#[derive(Serialize, Deserialize)]
struct StatsDocument {
    seed: u64,
    alpha: f64,
    metrics: Vec<MetricStats>,
}

#[derive(Serialize, Deserialize)]
struct MetricStats {
    metric: Metric,
    n_datasets: usize,
    friedman: Option<FriedmanResult>,
    nemenyi: Option<NemenyiResult>,
    note: Option<String>,
}

impl Document for StatsDocument {
    const FORMAT: &'static str = "simbase-nemenyi";
}

/// Runs every applicable (dataset, method) pair. A pair that fails is
/// recorded and the run continues.
pub fn run_benchmark(cfg: &ExperimentConfig, config_dir: &Path) -> Result<BenchmarkOutcome> {
    cfg.validate()?;
    let grid = cfg.grid_spec();
    let solver = cfg.solver();
    let specs = cfg.method_specs();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut tasks: Vec<(String, Task)> = Vec::new();

    for entry in &cfg.datasets {
        let d = match load_entry(entry, config_dir) {
            Ok(d) => d,
            Err(error) => {
                for spec in &specs {
                    failures.push(PairFailure {
                        dataset: entry.name.clone(),
                        method: *spec,
                        error: clone_error(&error),
                    });
                }
                continue;
            }
        };
        tasks.push((entry.name.clone(), d.task()));
        let plan = match make_folds(d.n_instances(), cfg.folds, cfg.seed) {
            Ok(p) => p,
            Err(error) => {
                for spec in &specs {
                    failures.push(PairFailure {
                        dataset: entry.name.clone(),
                        method: *spec,
                        error: clone_error(&error),
                    });
                }
                continue;
            }
        };
        for spec in &specs {
            if !spec.kind.supports(d.task()) {
                log::info!("{}: {spec} does not apply to multi-label data", entry.name);
                continue;
            }
            log::info!("{}: running {spec}", entry.name);
            match run_cv(&d, spec, &plan, &grid, &solver) {
                Ok(r) => results.push((entry.name.clone(), d.task(), r)),
                Err(error) => failures.push(PairFailure {
                    dataset: entry.name.clone(),
                    method: *spec,
                    error,
                }),
            }
        }
    }

    let summaries = summarize(&results, &tasks, &specs, cfg.alpha);
    Ok(BenchmarkOutcome {
        seed: cfg.seed,
        folds: cfg.folds,
        alpha: cfg.alpha,
        results,
        failures,
        summaries,
    })
}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::Param(s) => Error::Param(s.clone()),
        Error::Config(s) => Error::Config(s.clone()),
        other => Error::Data(other.to_string()),
    }
}

fn summarize(
    results: &[(String, Task, CvResult)],
    tasks: &[(String, Task)],
    specs: &[MethodSpec],
    alpha: f64,
) -> Vec<MetricSummary> {
    let mut out = Vec::new();
    for task in [Task::Mlc, Task::Mcc] {
        let methods: Vec<MethodSpec> = specs.iter().copied().filter(|s| s.kind.supports(task)).collect();
        if methods.is_empty() {
            continue;
        }
        for &metric in Metric::for_task(task) {
            let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
            for (name, t) in tasks {
                if *t != task {
                    continue;
                }
                let row: Option<Vec<f64>> = methods
                    .iter()
                    .map(|spec| {
                        results
                            .iter()
                            .find(|(n, _, r)| n == name && r.method == *spec)
                            .and_then(|(_, _, r)| r.mean(metric))
                    })
                    .collect();
                match row {
                    Some(v) => rows.push((name.clone(), v)),
                    None => log::warn!("{name}: incomplete results, left out of the {metric} ranking"),
                }
            }
            if rows.is_empty() {
                continue;
            }
            let names: Vec<String> = methods.iter().map(|m| m.to_string()).collect();
            let datasets: Vec<String> = rows.iter().map(|(n, _)| n.clone()).collect();
            let mut means = Array2::zeros((rows.len(), methods.len()));
            for (r, (_, v)) in rows.iter().enumerate() {
                for (c, x) in v.iter().enumerate() {
                    means[[r, c]] = *x;
                }
            }
            let ranks = rank_methods(&names, &datasets, &means, metric.higher_is_better()).expect("complete table");
            let (friedman, nemenyi, note) = match (friedman(&ranks), nemenyi(&ranks, alpha)) {
                (Ok(f), Ok(n)) => (Some(f), Some(n), None),
                (f, n) => {
                    let why = n.err().or(f.err()).map(|e| e.to_string());
                    (None, None, why)
                }
            };
            out.push(MetricSummary {
                metric,
                ranks,
                means,
                friedman,
                nemenyi,
                note,
            });
        }
    }
    out
}

fn fmt_value(v: f64) -> String {
    format!("{v}")
}

impl BenchmarkOutcome {
    fn header(&self) -> String {
        format!("# seed={} folds={}\n", self.seed, self.folds)
    }

    pub fn results_csv(&self) -> String {
        let mut out = self.header();
        out.push_str("dataset,method,fold,metric,value\n");
        for (name, task, r) in &self.results {
            for f in &r.folds {
                for &metric in Metric::for_task(*task) {
                    if let Some(v) = f.report.get(metric) {
                        let _ = writeln!(out, "{name},{},{},{metric},{}", r.method.kind, f.fold, fmt_value(v));
                    }
                }
            }
        }
        out
    }

    pub fn selected_csv(&self) -> String {
        let mut out = self.header();
        out.push_str("dataset,method,fold,gamma,lambda,k,validation_score\n");
        for (name, _, r) in &self.results {
            for f in &r.folds {
                let (g, l) = match r.method.kind {
                    MethodKind::Sml | MethodKind::Sblr => (fmt_value(f.hyper.gamma), String::new()),
                    MethodKind::SparseSblr => (fmt_value(f.hyper.gamma), fmt_value(f.hyper.lambda)),
                    _ => (String::new(), String::new()),
                };
                let k = if r.method.kind == MethodKind::Knn {
                    r.method.k.to_string()
                } else {
                    String::new()
                };
                let v = f.validation_score.map(fmt_value).unwrap_or_default();
                let _ = writeln!(out, "{name},{},{},{g},{l},{k},{v}", r.method.kind, f.fold);
            }
        }
        out
    }

    pub fn ranks_csv(&self) -> String {
        let mut out = self.header();
        out.push_str("metric,dataset,method,mean,rank\n");
        for s in &self.summaries {
            for (r, ds) in s.ranks.datasets.iter().enumerate() {
                for (c, m) in s.ranks.methods.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{},{ds},{m},{},{}",
                        s.metric,
                        fmt_value(s.means[[r, c]]),
                        fmt_value(s.ranks.ranks[[r, c]])
                    );
                }
            }
            for (c, m) in s.ranks.methods.iter().enumerate() {
                let _ = writeln!(out, "{},average,{m},,{}", s.metric, fmt_value(s.ranks.average_rank[c]));
            }
        }
        out
    }

    pub fn stats_text(&self) -> Result<String> {
        StatsDocument {
            seed: self.seed,
            alpha: self.alpha,
            metrics: self
                .summaries
                .iter()
                .map(|s| MetricStats {
                    metric: s.metric,
                    n_datasets: s.ranks.datasets.len(),
                    friedman: s.friedman.clone(),
                    nemenyi: s.nemenyi.clone(),
                    note: s.note.clone(),
                })
                .collect(),
        }
        .to_text()
    }

    /// Plain-text tables, one per metric: datasets down, methods across,
    /// `mean(rank)` in each cell and the average rank at the bottom.
    pub fn report(&self) -> String {
        let mut out = format!("seed {}  folds {}  alpha {}\n", self.seed, self.folds, self.alpha);
        for s in &self.summaries {
            let arrow = if s.metric.higher_is_better() {
                "higher is better"
            } else {
                "lower is better"
            };
            let _ = write!(out, "\n{} ({arrow})\n", s.metric.title());
            let width = s.ranks.methods.iter().map(|m| m.len()).max().unwrap_or(0).max(12);
            let name_w = s.ranks.datasets.iter().map(|d| d.len()).max().unwrap_or(0).max(12);
            let _ = write!(out, "{:<name_w$}", "Dataset");
            for m in &s.ranks.methods {
                let _ = write!(out, "  {m:>width$}");
            }
            out.push('\n');
            for (r, ds) in s.ranks.datasets.iter().enumerate() {
                let _ = write!(out, "{ds:<name_w$}");
                for c in 0..s.ranks.methods.len() {
                    let cell = format!("{:.3}({})", s.means[[r, c]], fmt_rank(s.ranks.ranks[[r, c]]));
                    let _ = write!(out, "  {cell:>width$}");
                }
                out.push('\n');
            }
            let _ = write!(out, "{:<name_w$}", "Average rank");
            for a in &s.ranks.average_rank {
                let cell = format!("{a:.2}");
                let _ = write!(out, "  {cell:>width$}");
            }
            out.push('\n');
            match (&s.friedman, &s.nemenyi) {
                (Some(f), Some(n)) => {
                    let _ = writeln!(
                        out,
                        "Friedman chi2 = {:.3} (p = {:.4}); Nemenyi CD = {:.3}",
                        f.chi_square, f.chi_square_p, n.critical_difference
                    );
                    let sig: Vec<String> = n
                        .pairs
                        .iter()
                        .filter(|p| p.significant)
                        .map(|p| format!("{} vs {}", p.a, p.b))
                        .collect();
                    if !sig.is_empty() {
                        let _ = writeln!(out, "Significant: {}", sig.join(", "));
                    }
                }
                _ => {
                    if let Some(note) = &s.note {
                        let _ = writeln!(out, "No significance test: {note}");
                    }
                }
            }
        }
        if !self.failures.is_empty() {
            out.push_str("\nFailed pairs\n");
            for f in &self.failures {
                let _ = writeln!(out, "{} / {}: {}", f.dataset, f.method, f.error);
            }
        }
        out
    }

    /// Writes every output file into `dir` (created if missing).
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("results.csv"), self.results_csv().as_bytes())?;
        write_atomic(&dir.join("selected.csv"), self.selected_csv().as_bytes())?;
        write_atomic(&dir.join("ranks.csv"), self.ranks_csv().as_bytes())?;
        write_atomic(&dir.join("nemenyi.json"), self.stats_text()?.as_bytes())?;
        write_atomic(&dir.join("report.txt"), self.report().as_bytes())?;
        Ok(())
    }
}

fn fmt_rank(r: f64) -> String {
    if r.fract() == 0.0 {
        format!("{}", r as u64)
    } else {
        format!("{r}")
    }
}
