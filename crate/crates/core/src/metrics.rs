//! Multi-label ranking and set metrics, plus multi-class accuracy.
//!
//! Ranks are 1-based positions in descending score order; equal scores are
//! ordered by class index. Ranking loss instead gives half credit to tied
//! (relevant, irrelevant) pairs. Instances whose truth set is empty carry no
//! ranking information and are left out of every ranking metric; they still
//! count towards Hamming loss.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabelSet, Task};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBatch {
    scores: Array2<f64>,
    predicted: Vec<LabelSet>,
    truth: Vec<LabelSet>,
}

impl PredictionBatch {
    /// Label sets are sorted and deduplicated on the way in.
    pub fn new(scores: Array2<f64>, mut predicted: Vec<LabelSet>, mut truth: Vec<LabelSet>) -> Result<Self> {
        let (n, m) = scores.dim();
        if predicted.len() != n || truth.len() != n {
            return Err(Error::Metric(format!(
                "batch has {n} score rows, {} predictions, {} truth sets",
                predicted.len(),
                truth.len()
            )));
        }
        if scores.iter().any(|v| v.is_nan()) {
            return Err(Error::Metric("NaN score".into()));
        }
        for s in predicted.iter_mut().chain(truth.iter_mut()) {
            s.sort_unstable();
            s.dedup();
            if s.last().is_some_and(|&k| k >= m) {
                return Err(Error::Metric(format!("label index out of range for m = {m}")));
            }
        }
        Ok(PredictionBatch {
            scores,
            predicted,
            truth,
        })
    }

    pub fn n_instances(&self) -> usize {
        self.truth.len()
    }

    pub fn n_labels(&self) -> usize {
        self.scores.ncols()
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }

    pub fn predicted(&self) -> &[LabelSet] {
        &self.predicted
    }

    pub fn truth(&self) -> &[LabelSet] {
        &self.truth
    }

    /// Instances with an empty truth set.
    pub fn empty_truth_count(&self) -> usize {
        self.truth.iter().filter(|t| t.is_empty()).count()
    }

    /// Instances where every label or no label is relevant.
    pub fn degenerate_count(&self) -> usize {
        let m = self.n_labels();
        self.truth.iter().filter(|t| t.is_empty() || t.len() == m).count()
    }

    fn ranking(&self, i: usize) -> Vec<usize> {
        let row = self.scores.row(i);
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        // rank[class] = 1-based position
        let mut rank = vec![0; order.len()];
        for (pos, &c) in order.iter().enumerate() {
            rank[c] = pos + 1;
        }
        rank
    }

    fn mean_over_ranked<F>(&self, name: &str, per_instance: F) -> Result<f64>
    where
        F: Fn(usize, &[usize], &LabelSet) -> f64,
    {
        let mut total = 0.0;
        let mut count = 0usize;
        for (i, t) in self.truth.iter().enumerate() {
            if t.is_empty() {
                continue;
            }
            total += per_instance(i, &self.ranking(i), t);
            count += 1;
        }
        if count == 0 {
            return Err(Error::Metric(format!("{name}: every truth set is empty")));
        }
        Ok(total / count as f64)
    }
}

pub fn hamming_loss(b: &PredictionBatch) -> Result<f64> {
    if b.n_instances() == 0 {
        return Err(Error::Metric("hamming loss of an empty batch".into()));
    }
    let m = b.n_labels() as f64;
    let total: f64 = b
        .predicted
        .iter()
        .zip(&b.truth)
        .map(|(p, t)| symmetric_difference(p, t) as f64 / m)
        .sum();
    Ok(total / b.n_instances() as f64)
}

fn symmetric_difference(a: &[usize], b: &[usize]) -> usize {
    let common = a.iter().filter(|x| b.binary_search(x).is_ok()).count();
    a.len() + b.len() - 2 * common
}

pub fn one_error(b: &PredictionBatch) -> Result<f64> {
    b.mean_over_ranked("one-error", |_, rank, t| {
        let top = rank.iter().position(|&r| r == 1).expect("rank 1 exists");
        if t.binary_search(&top).is_ok() {
            0.0
        } else {
            1.0
        }
    })
}

pub fn coverage(b: &PredictionBatch) -> Result<f64> {
    b.mean_over_ranked("coverage", |_, rank, t| {
        t.iter().map(|&c| rank[c]).max().expect("nonempty") as f64 - 1.0
    })
}

pub fn average_precision(b: &PredictionBatch) -> Result<f64> {
    b.mean_over_ranked("average precision", |_, rank, t| {
        let mut relevant_ranks: Vec<usize> = t.iter().map(|&c| rank[c]).collect();
        relevant_ranks.sort_unstable();
        // the j-th best relevant label (0-based) has j + 1 relevant labels at or above it
        let sum: f64 = relevant_ranks
            .iter()
            .enumerate()
            .map(|(j, &r)| (j + 1) as f64 / r as f64)
            .sum();
        sum / t.len() as f64
    })
}

/// Mean ranking loss and the number of instances skipped because all or
/// none of their labels are relevant.
pub fn rank_loss_with_skipped(b: &PredictionBatch) -> Result<(f64, usize)> {
    let m = b.n_labels();
    let mut total = 0.0;
    let mut used = 0usize;
    for (i, t) in b.truth.iter().enumerate() {
        if t.is_empty() || t.len() == m {
            continue;
        }
        let row = b.scores.row(i);
        let irrelevant: Vec<usize> = (0..m).filter(|c| t.binary_search(c).is_err()).collect();
        let mut wrong = 0.0;
        for &r in t {
            for &s in &irrelevant {
                if row[r] < row[s] {
                    wrong += 1.0;
                } else if row[r] == row[s] {
                    wrong += 0.5;
                }
            }
        }
        total += wrong / (t.len() * irrelevant.len()) as f64;
        used += 1;
    }
    let skipped = b.n_instances() - used;
    if used == 0 {
        return Err(Error::Metric("ranking loss: every instance is degenerate".into()));
    }
    Ok((total / used as f64, skipped))
}

pub fn rank_loss(b: &PredictionBatch) -> Result<f64> {
    Ok(rank_loss_with_skipped(b)?.0)
}

pub fn accuracy(b: &PredictionBatch) -> Result<f64> {
    if b.n_instances() == 0 {
        return Err(Error::Metric("accuracy of an empty batch".into()));
    }
    let mut correct = 0usize;
    for (p, t) in b.predicted.iter().zip(&b.truth) {
        if p.len() != 1 || t.len() != 1 {
            return Err(Error::Metric("accuracy needs singleton label sets".into()));
        }
        if p[0] == t[0] {
            correct += 1;
        }
    }
    Ok(correct as f64 / b.n_instances() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    HammingLoss,
    RankLoss,
    OneError,
    Coverage,
    AvgPrecision,
    Accuracy,
}

impl Metric {
    /// Table order for multi-label data.
    pub const MULTI_LABEL: [Metric; 5] = [
        Metric::HammingLoss,
        Metric::RankLoss,
        Metric::OneError,
        Metric::Coverage,
        Metric::AvgPrecision,
    ];

    pub fn for_task(task: Task) -> &'static [Metric] {
        match task {
            Task::Mlc => &Self::MULTI_LABEL,
            Task::Mcc => &[Metric::Accuracy],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::HammingLoss => "hamming_loss",
            Metric::RankLoss => "rank_loss",
            Metric::OneError => "one_error",
            Metric::Coverage => "coverage",
            Metric::AvgPrecision => "avg_precision",
            Metric::Accuracy => "accuracy",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Metric::HammingLoss => "Hamming Loss",
            Metric::RankLoss => "Ranking Loss",
            Metric::OneError => "One Error",
            Metric::Coverage => "Coverage",
            Metric::AvgPrecision => "Average Precision",
            Metric::Accuracy => "Accuracy",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::AvgPrecision | Metric::Accuracy)
    }

    pub fn compute(self, b: &PredictionBatch) -> Result<f64> {
        match self {
            Metric::HammingLoss => hamming_loss(b),
            Metric::RankLoss => rank_loss(b),
            Metric::OneError => one_error(b),
            Metric::Coverage => coverage(b),
            Metric::AvgPrecision => average_precision(b),
            Metric::Accuracy => accuracy(b),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        let all = [
            Metric::HammingLoss,
            Metric::RankLoss,
            Metric::OneError,
            Metric::Coverage,
            Metric::AvgPrecision,
            Metric::Accuracy,
        ];
        all.into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::Param(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub hamming_loss: Option<f64>,
    pub one_error: Option<f64>,
    pub coverage: Option<f64>,
    pub rank_loss: Option<f64>,
    pub avg_precision: Option<f64>,
    pub accuracy: Option<f64>,
    /// Instances left out of the ranking metrics for having no relevant label.
    pub empty_truth: usize,
    /// Instances left out of ranking loss (all or no labels relevant).
    pub rank_loss_skipped: usize,
    /// Multi-label predictions that fell back to the single top class.
    pub fallbacks: usize,
}

impl MetricReport {
    /// Computes the metrics that belong to `task`.
    pub fn compute(b: &PredictionBatch, task: Task) -> Result<Self> {
        let mut r = MetricReport {
            empty_truth: b.empty_truth_count(),
            ..MetricReport::default()
        };
        match task {
            Task::Mcc => r.accuracy = Some(accuracy(b)?),
            Task::Mlc => {
                r.hamming_loss = Some(hamming_loss(b)?);
                r.one_error = one_error(b).ok();
                r.coverage = coverage(b).ok();
                r.avg_precision = average_precision(b).ok();
                match rank_loss_with_skipped(b) {
                    Ok((v, skipped)) => {
                        r.rank_loss = Some(v);
                        r.rank_loss_skipped = skipped;
                    }
                    Err(_) => r.rank_loss_skipped = b.n_instances(),
                }
            }
        }
        Ok(r)
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::HammingLoss => self.hamming_loss,
            Metric::RankLoss => self.rank_loss,
            Metric::OneError => self.one_error,
            Metric::Coverage => self.coverage,
            Metric::AvgPrecision => self.avg_precision,
            Metric::Accuracy => self.accuracy,
        }
    }
}
