use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::{normalize_features, Dataset, LabelSet, NormStats, Task};
use crate::error::{Error, Result};
use crate::optim::SolverConfig;
use crate::schema::Document;
use crate::similarity::KernelConfig;
use crate::sml::{argmax, SmlModel};

use super::baseline::{KnnModel, LrModel, NcmModel};
use super::sblr::{decide, SblrModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Sml,
    Sblr,
    SparseSblr,
    Knn,
    Ncm,
    Lr,
}

impl MethodKind {
    pub const ALL: [MethodKind; 6] = [
        MethodKind::Sml,
        MethodKind::Sblr,
        MethodKind::SparseSblr,
        MethodKind::Knn,
        MethodKind::Ncm,
        MethodKind::Lr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Sml => "sml",
            MethodKind::Sblr => "sblr",
            MethodKind::SparseSblr => "sparsesblr",
            MethodKind::Knn => "knn",
            MethodKind::Ncm => "ncm",
            MethodKind::Lr => "lr",
        }
    }

    /// Display name used in tables.
    pub fn label(self) -> &'static str {
        match self {
            MethodKind::Sml => "SML",
            MethodKind::Sblr => "SBLR",
            MethodKind::SparseSblr => "SparseSBLR",
            MethodKind::Knn => "KNN",
            MethodKind::Ncm => "NCM",
            MethodKind::Lr => "LR",
        }
    }

    pub fn uses_gamma(self) -> bool {
        matches!(self, MethodKind::Sml | MethodKind::Sblr | MethodKind::SparseSblr)
    }

    pub fn uses_lambda(self) -> bool {
        self == MethodKind::SparseSblr
    }

    pub fn supports(self, task: Task) -> bool {
        task == Task::Mcc || self.uses_gamma()
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase().replace(['-', '_'], "");
        MethodKind::ALL.into_iter().find(|m| m.name() == lower).ok_or_else(|| {
            Error::Param(format!(
                "unknown method `{s}` (expected one of sml, sblr, sparsesblr, knn, ncm, lr)"
            ))
        })
    }
}

/// Hyperparameters for a single fit. Unused fields are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub gamma: f64,
    pub lambda: f64,
    pub k: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            gamma: 1.0,
            lambda: 1e-3,
            k: 5,
        }
    }
}

/// A fitted model of any kind, operating on normalized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum ModelBody {
    Sml(SmlModel),
    Sblr(SblrModel),
    SparseSblr(SblrModel),
    Knn(KnnModel),
    Ncm(NcmModel),
    Lr(LrModel),
}

/// Scores and decisions for a batch of instances.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPrediction {
    /// n x m ranking scores; higher means more relevant.
    pub scores: Array2<f64>,
    pub labels: Vec<LabelSet>,
    pub fallback: Vec<bool>,
}

impl BatchPrediction {
    fn from_parts(scores: Array2<f64>, labels: Vec<LabelSet>) -> Self {
        let n = labels.len();
        BatchPrediction {
            scores,
            labels,
            fallback: vec![false; n],
        }
    }

    fn argmax_rows(scores: Array2<f64>) -> Self {
        let labels = scores.rows().into_iter().map(|r| vec![argmax(&r.to_vec())]).collect();
        Self::from_parts(scores, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl ModelBody {
    /// Fits `kind` on an already normalized dataset.
    pub fn fit(kind: MethodKind, d: &Dataset, hyper: &Hyper, solver: &SolverConfig) -> Result<Self> {
        if !kind.supports(d.task()) {
            return Err(Error::Param(format!("{kind} needs multi-class data")));
        }
        Ok(match kind {
            MethodKind::Sml => ModelBody::Sml(SmlModel::fit(d, KernelConfig::rbf(hyper.gamma)?)?),
            MethodKind::Sblr => {
                ModelBody::Sblr(SblrModel::fit(d, KernelConfig::rbf(hyper.gamma)?, 0.0, false, solver)?)
            }
            MethodKind::SparseSblr => {
                if !(hyper.lambda > 0.0 && hyper.lambda.is_finite()) {
                    return Err(Error::Param(format!("lambda must be > 0, got {}", hyper.lambda)));
                }
                ModelBody::SparseSblr(SblrModel::fit(
                    d,
                    KernelConfig::rbf(hyper.gamma)?,
                    hyper.lambda,
                    false,
                    solver,
                )?)
            }
            MethodKind::Knn => ModelBody::Knn(KnnModel::fit(d, hyper.k)?),
            MethodKind::Ncm => ModelBody::Ncm(NcmModel::fit(d)?),
            MethodKind::Lr => ModelBody::Lr(LrModel::fit(d, solver)?),
        })
    }

    pub fn kind(&self) -> MethodKind {
        match self {
            ModelBody::Sml(_) => MethodKind::Sml,
            ModelBody::Sblr(_) => MethodKind::Sblr,
            ModelBody::SparseSblr(_) => MethodKind::SparseSblr,
            ModelBody::Knn(_) => MethodKind::Knn,
            ModelBody::Ncm(_) => MethodKind::Ncm,
            ModelBody::Lr(_) => MethodKind::Lr,
        }
    }

    pub fn n_labels(&self) -> usize {
        match self {
            ModelBody::Sml(m) => m.n_labels(),
            ModelBody::Sblr(m) | ModelBody::SparseSblr(m) => m.n_labels(),
            ModelBody::Knn(m) => m.n_labels(),
            ModelBody::Ncm(m) => m.n_labels(),
            ModelBody::Lr(m) => m.n_labels(),
        }
    }

    /// Predicts every row of the (normalized) feature matrix.
    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Result<BatchPrediction> {
        match self {
            ModelBody::Sml(m) => {
                let (scores, labels) = m.predict_batch(x)?;
                Ok(BatchPrediction::from_parts(scores, labels))
            }
            ModelBody::Sblr(m) | ModelBody::SparseSblr(m) => {
                let post = m.posteriors_batch(x)?;
                Ok(sblr_decisions(post, m.task()))
            }
            ModelBody::Knn(m) => Ok(BatchPrediction::argmax_rows(m.scores_batch(x)?)),
            ModelBody::Ncm(m) => Ok(BatchPrediction::argmax_rows(m.scores_batch(x)?)),
            ModelBody::Lr(m) => Ok(BatchPrediction::argmax_rows(m.scores_batch(x)?)),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ModelBody::Sml(m) => m.validate(),
            ModelBody::Sblr(m) | ModelBody::SparseSblr(m) => {
                m.validate()?;
                if m.is_sparse() != (self.kind() == MethodKind::SparseSblr) {
                    return Err(Error::Schema("penalty does not match model kind".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

pub(crate) fn sblr_decisions(posteriors: Array2<f64>, task: Task) -> BatchPrediction {
    let mut labels = Vec::with_capacity(posteriors.nrows());
    let mut fallback = Vec::with_capacity(posteriors.nrows());
    for r in posteriors.rows() {
        let p = decide(&r.to_vec(), task);
        labels.push(p.labels);
        fallback.push(p.fallback);
    }
    BatchPrediction {
        scores: posteriors,
        labels,
        fallback,
    }
}

/// A model together with everything needed to apply it to raw feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub task: Task,
    pub label_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub norm: NormStats,
    pub hyper: Hyper,
    /// Seed of the run that produced the model, kept for provenance.
    #[serde(default)]
    pub seed: Option<u64>,
    pub body: ModelBody,
}

impl Document for TrainedModel {
    const FORMAT: &'static str = "simbase-model";
}

impl TrainedModel {
    /// Normalizes `d` and fits `kind` on it.
    pub fn fit(kind: MethodKind, d: &Dataset, hyper: Hyper, solver: &SolverConfig) -> Result<Self> {
        let (normalized, norm) = normalize_features(d);
        let body = ModelBody::fit(kind, &normalized, &hyper, solver)?;
        Ok(TrainedModel {
            task: d.task(),
            label_names: d.label_names().to_vec(),
            feature_names: d.feature_names().to_vec(),
            norm,
            hyper,
            seed: None,
            body,
        })
    }

    pub fn kind(&self) -> MethodKind {
        self.body.kind()
    }

    /// Predicts raw (unnormalized) feature rows.
    pub fn predict_raw(&self, x: ArrayView2<'_, f64>) -> Result<BatchPrediction> {
        let z = self.norm.apply(x)?;
        self.body.predict_batch(z.view())
    }

    /// Checks that a dataset is compatible with this model: same feature
    /// count and the same label names in the same order.
    pub fn check_compatible(&self, d: &Dataset) -> Result<()> {
        if d.n_features() != self.feature_names.len() {
            return Err(Error::Dimension {
                expected: self.feature_names.len(),
                actual: d.n_features(),
            });
        }
        if d.label_names() != self.label_names.as_slice() {
            return Err(Error::Data(format!(
                "label names differ from the model's ({} vs {})",
                d.label_names().join(","),
                self.label_names.join(",")
            )));
        }
        Ok(())
    }

    /// Structural checks run after loading.
    pub fn validate(&self) -> Result<()> {
        let m = self.label_names.len();
        if self.body.n_labels() != m {
            return Err(Error::Schema(format!(
                "model has {} classes but {m} label names",
                self.body.n_labels()
            )));
        }
        if self.norm.n_features() != self.feature_names.len() {
            return Err(Error::Schema("normalization does not match feature count".into()));
        }
        self.body.validate()
    }

    pub fn load_checked(path: &std::path::Path) -> Result<Self> {
        let m = Self::load(path)?;
        m.validate()?;
        Ok(m)
    }

    /// Coefficient matrix as CSV (SBLR-family only): one row per class,
    /// intercept then one weight per class evidence.
    pub fn coefficients_csv(&self) -> Option<String> {
        let m = match &self.body {
            ModelBody::Sblr(m) | ModelBody::SparseSblr(m) => m,
            _ => return None,
        };
        let mut out = String::from("class,intercept");
        for name in &self.label_names {
            out.push(',');
            out.push_str(&csv_field(name));
        }
        out.push('\n');
        for (k, row) in m.coefficients().betas.rows().into_iter().enumerate() {
            out.push_str(&csv_field(&self.label_names[k]));
            for b in row {
                out.push(',');
                out.push_str(&b.to_string());
            }
            out.push('\n');
        }
        Some(out)
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
