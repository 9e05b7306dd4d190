use std::collections::BTreeMap;
use std::fmt;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FoldPlan, LabelSet, NormStats, Task};
use crate::error::{Error, Result};
use crate::metrics::{Metric, MetricReport, PredictionBatch};
use crate::models::{sblr_decisions, BatchPrediction, Hyper, MethodKind, ModelBody, SblrModel};
use crate::optim::SolverConfig;
use crate::similarity::{sq_dist_matrix, EvidenceTransform, KernelConfig};
use crate::sml::SmlModel;

pub const DEFAULT_GRID: [f64; 8] = [1e2, 1e1, 1e0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub values: Vec<f64>,
    pub validation_fraction: f64,
    /// `None` picks average precision for multi-label and accuracy for
    /// multi-class data.
    pub selection_metric: Option<Metric>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            values: DEFAULT_GRID.to_vec(),
            validation_fraction: 0.1,
            selection_metric: None,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Param("grid has no values".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Param(format!("grid value {v} is not a positive number")));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Param(format!(
                "validation fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }

    pub fn metric_for(&self, task: Task) -> Metric {
        self.selection_metric.unwrap_or(match task {
            Task::Mlc => Metric::AvgPrecision,
            Task::Mcc => Metric::Accuracy,
        })
    }

    /// Candidate settings for `spec`, in evaluation order. Gamma is the
    /// outer loop of the (gamma, lambda) product.
    pub fn points(&self, spec: &MethodSpec) -> Vec<Hyper> {
        let base = Hyper {
            k: spec.k,
            ..Hyper::default()
        };
        match spec.kind {
            MethodKind::Sml | MethodKind::Sblr => self.values.iter().map(|&gamma| Hyper { gamma, ..base }).collect(),
            MethodKind::SparseSblr => self
                .values
                .iter()
                .flat_map(|&gamma| self.values.iter().map(move |&lambda| Hyper { gamma, lambda, ..base }))
                .collect(),
            MethodKind::Knn | MethodKind::Ncm | MethodKind::Lr => vec![base],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub kind: MethodKind,
    /// Neighbour count, used by KNN only.
    pub k: usize,
}

impl MethodSpec {
    pub fn new(kind: MethodKind) -> Self {
        MethodSpec { kind, k: 5 }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub hyper: Hyper,
    /// Selection metric on the validation carve-out of the chosen point;
    /// `None` when the grid had a single point.
    pub validation_score: Option<f64>,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub fold: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub method: MethodSpec,
    pub folds: Vec<FoldResult>,
    pub skipped: Vec<SkippedFold>,
}

impl CvResult {
    /// Mean over the folds where the metric is defined.
    pub fn mean(&self, metric: Metric) -> Option<f64> {
        let v: Vec<f64> = self.folds.iter().filter_map(|f| f.report.get(metric)).collect();
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    }
}

/// Splits `train` (indices into the dataset) into (sub-train, validation).
///
/// Instances are grouped by class (multi-class) or label-set size
/// (multi-label), shuffled within groups, and each group contributes its
/// share of the validation set by largest remainder. A validation instance
/// carrying a label that no sub-train instance has is moved back so every
/// class stays fit-able.
pub fn validation_split(d: &Dataset, train: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in train {
        let set = &d.labels()[i];
        let key = match d.task() {
            Task::Mcc => set[0],
            Task::Mlc => set.len(),
        };
        groups.entry(key).or_default().push(i);
    }
    let target = ((train.len() as f64 * fraction).round() as usize).clamp(1, train.len().saturating_sub(1).max(1));
    let shares: Vec<f64> = groups.values().map(|g| g.len() as f64 * fraction).collect();
    let mut take: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        (shares[b] - shares[b].floor())
            .total_cmp(&(shares[a] - shares[a].floor()))
            .then(a.cmp(&b))
    });
    let mut assigned: usize = take.iter().sum();
    for &g in order.iter().cycle().take(order.len() * 2) {
        if assigned >= target {
            break;
        }
        if take[g] < groups.values().nth(g).map_or(0, Vec::len) {
            take[g] += 1;
            assigned += 1;
        }
    }

    let mut sub = Vec::new();
    let mut val = Vec::new();
    for (g, members) in groups.values_mut().enumerate() {
        members.shuffle(&mut rng);
        val.extend_from_slice(&members[..take[g]]);
        sub.extend_from_slice(&members[take[g]..]);
    }

    let mut counts = vec![0usize; d.n_labels()];
    for &i in &sub {
        for &k in &d.labels()[i] {
            counts[k] += 1;
        }
    }
    let mut kept = Vec::with_capacity(val.len());
    for i in val {
        if d.labels()[i].iter().any(|&k| counts[k] == 0) {
            for &k in &d.labels()[i] {
                counts[k] += 1;
            }
            sub.push(i);
        } else {
            kept.push(i);
        }
    }
    sub.sort_unstable();
    kept.sort_unstable();
    (sub, kept)
}

fn batch_for(pred: BatchPrediction, truth: &[LabelSet]) -> Result<PredictionBatch> {
    PredictionBatch::new(pred.scores, pred.labels, truth.to_vec())
}

/// Scores every grid point on the validation set. Kernel methods reuse one
/// training distance matrix across the grid, and the sparse model reuses
/// the evidence of each gamma across all lambdas.
fn grid_scores(
    sub: &Dataset,
    val_x: ArrayView2<'_, f64>,
    val_truth: &[LabelSet],
    spec: &MethodSpec,
    points: &[Hyper],
    metric: Metric,
    solver: &SolverConfig,
) -> Vec<f64> {
    let score = |pred: Result<BatchPrediction>| -> f64 {
        pred.and_then(|p| batch_for(p, val_truth))
            .and_then(|b| metric.compute(&b))
            .map(|v| if metric.higher_is_better() { v } else { -v })
            .unwrap_or(f64::NEG_INFINITY)
    };
    let x = sub.features().view();
    let (labels, m, task) = (sub.labels(), sub.n_labels(), sub.task());

    if !spec.kind.uses_gamma() {
        return points
            .iter()
            .map(|h| score(ModelBody::fit(spec.kind, sub, h, solver).and_then(|b| b.predict_batch(val_x))))
            .collect();
    }

    let d2 = sq_dist_matrix(x, x);
    let gammas: Vec<f64> = {
        let mut g: Vec<f64> = points.iter().map(|h| h.gamma).collect();
        g.dedup();
        g
    };
    let per_gamma = |gamma: f64| -> Vec<f64> {
        let in_gamma: Vec<&Hyper> = points.iter().filter(|h| h.gamma == gamma).collect();
        let Ok(kernel) = KernelConfig::rbf(gamma) else {
            return vec![f64::NEG_INFINITY; in_gamma.len()];
        };
        match spec.kind {
            MethodKind::Sml => {
                let pred = SmlModel::fit_from_sq_dists(x, labels, m, task, kernel, d2.view())
                    .and_then(|model| model.predict_batch(val_x))
                    .map(|(s, l)| BatchPrediction {
                        fallback: vec![false; l.len()],
                        scores: s,
                        labels: l,
                    });
                vec![score(pred)]
            }
            _ => {
                let fitted = EvidenceTransform::fit_from_sq_dists(x, labels, m, kernel, d2.view());
                let Ok((transform, raw)) = fitted else {
                    return vec![f64::NEG_INFINITY; in_gamma.len()];
                };
                let Ok(val_raw) = transform.evidence_matrix(val_x, false) else {
                    return vec![f64::NEG_INFINITY; in_gamma.len()];
                };
                in_gamma
                    .iter()
                    .map(|h| {
                        let lambda = if spec.kind == MethodKind::SparseSblr {
                            h.lambda
                        } else {
                            0.0
                        };
                        let pred = SblrModel::fit_from_evidence(
                            transform.clone(),
                            raw.clone(),
                            labels,
                            task,
                            lambda,
                            false,
                            solver,
                        )
                        .map(|model| sblr_decisions(model.posteriors_from_raw(val_raw.clone()), task));
                        score(pred)
                    })
                    .collect()
            }
        }
    };

    #[cfg(feature = "parallel")]
    let nested: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        gammas.par_iter().map(|&g| per_gamma(g)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let nested: Vec<Vec<f64>> = gammas.iter().map(|&g| per_gamma(g)).collect();
    nested.into_iter().flatten().collect()
}

/// Index of the best score; the earliest point wins ties.
fn select(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn normalized(stats: &NormStats, d: &Dataset) -> Result<Dataset> {
    stats.apply_dataset(d)
}

fn validation_seed(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn run_fold(
    d: &Dataset,
    spec: &MethodSpec,
    plan: &FoldPlan,
    fold: usize,
    grid: &GridSpec,
    solver: &SolverConfig,
) -> Result<FoldResult> {
    let train_idx = plan.train_indices(fold);
    let test_idx = plan.test_indices(fold);
    let train = d.subset(&train_idx);
    if let Some(class) = train.label_counts().iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass { class });
    }
    let metric = grid.metric_for(d.task());
    let points = grid.points(spec);

    let (chosen, validation_score) = if points.len() == 1 {
        (points[0], None)
    } else {
        let (sub_idx, val_idx) = validation_split(
            d,
            &train_idx,
            grid.validation_fraction,
            validation_seed(plan.seed, fold),
        );
        if val_idx.is_empty() {
            log::warn!("fold {fold}: validation carve-out is empty, using the first grid point");
            (points[0], None)
        } else {
            let sub_raw = d.subset(&sub_idx);
            let stats = NormStats::fit(sub_raw.features().view());
            let sub = normalized(&stats, &sub_raw)?;
            let val = normalized(&stats, &d.subset(&val_idx))?;
            let scores = grid_scores(&sub, val.features().view(), val.labels(), spec, &points, metric, solver);
            let best = select(&scores);
            let s = scores[best];
            let shown = if metric.higher_is_better() { s } else { -s };
            (points[best], shown.is_finite().then_some(shown))
        }
    };

    let stats = NormStats::fit(train.features().view());
    let train_n = normalized(&stats, &train)?;
    let test = normalized(&stats, &d.subset(&test_idx))?;
    let body = ModelBody::fit(spec.kind, &train_n, &chosen, solver)?;
    let pred = body.predict_batch(test.features().view())?;
    let fallbacks = pred.fallback.iter().filter(|&&f| f).count();
    let batch = batch_for(pred, test.labels())?;
    let mut report = MetricReport::compute(&batch, d.task())?;
    report.fallbacks = fallbacks;
    Ok(FoldResult {
        fold,
        hyper: chosen,
        validation_score,
        report,
    })
}

/// Cross-validates `spec` over the folds of `plan`, tuning on a validation
/// carve-out of each training portion. Folds whose training portion lacks a
/// class are skipped with a warning; any other error aborts.
pub fn run_cv(
    d: &Dataset,
    spec: &MethodSpec,
    plan: &FoldPlan,
    grid: &GridSpec,
    solver: &SolverConfig,
) -> Result<CvResult> {
    grid.validate()?;
    solver.validate()?;
    if plan.n_instances() != d.n_instances() {
        return Err(Error::Dimension {
            expected: d.n_instances(),
            actual: plan.n_instances(),
        });
    }
    if !spec.kind.supports(d.task()) {
        return Err(Error::Param(format!("{} needs multi-class data", spec.kind)));
    }
    let run = |fold: usize| run_fold(d, spec, plan, fold, grid, solver);
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<FoldResult>> = {
        use rayon::prelude::*;
        (0..plan.k).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<FoldResult>> = (0..plan.k).map(run).collect();

    let mut folds = Vec::new();
    let mut skipped = Vec::new();
    for (fold, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => folds.push(r),
            Err(e @ Error::EmptyClass { .. }) => {
                log::warn!("{spec}: skipping fold {fold}: {e}");
                skipped.push(SkippedFold {
                    fold,
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(CvResult {
        method: *spec,
        folds,
        skipped,
    })
}

/// Normalizes on `train`, fits one setting and scores it on `test`.
pub fn fit_and_score(
    train: &Dataset,
    test: &Dataset,
    spec: &MethodSpec,
    hyper: &Hyper,
    solver: &SolverConfig,
) -> Result<MetricReport> {
    let stats = NormStats::fit(train.features().view());
    let train_n = normalized(&stats, train)?;
    let test_n = normalized(&stats, test)?;
    let body = ModelBody::fit(spec.kind, &train_n, hyper, solver)?;
    let batch = batch_for(body.predict_batch(test_n.features().view())?, test.labels())?;
    MetricReport::compute(&batch, train.task())
}
