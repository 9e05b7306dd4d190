//! Datasets for multi-label (MLC) and multi-class (MCC) problems.
//!
//! A [`Dataset`] holds a dense feature matrix and one label-index set per
//! instance. Loaders accept MULAN-style ARFF (with the companion labels XML)
//! and headed CSV files.

mod arff;
mod folds;
mod norm;
mod table;

use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use arff::{load_arff_mulan, parse_arff_mulan, parse_label_xml};
pub use folds::{make_folds, FoldPlan};
pub use norm::{normalize_features, NormStats};
pub use table::{load_csv_mcc, parse_csv_mcc, LabelColumn};

/// Loads a dataset by extension: `.arff` needs the labels XML (multi-label),
/// anything else is read as CSV with a class column (multi-class).
pub fn load_dataset(path: &Path, labels_xml: Option<&Path>, label_column: &LabelColumn) -> Result<Dataset> {
    let is_arff = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("arff"));
    match (is_arff, labels_xml) {
        (true, Some(xml)) => load_arff_mulan(path, xml),
        (true, None) => Err(Error::Param(format!(
            "{} is ARFF and needs a labels XML file",
            path.display()
        ))),
        (false, _) => load_csv_mcc(path, label_column),
    }
}

/// Sorted, duplicate-free list of label indices.
pub type LabelSet = Vec<usize>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Multi-label: each instance carries a subset of the labels.
    Mlc,
    /// Multi-class: each instance carries exactly one label.
    Mcc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<LabelSet>,
    label_names: Vec<String>,
    feature_names: Vec<String>,
    task: Task,
}

impl Dataset {
    /// Builds a dataset, checking every structural invariant. Label sets are
    /// sorted and deduplicated.
    pub fn new(
        features: Array2<f64>,
        mut labels: Vec<LabelSet>,
        label_names: Vec<String>,
        feature_names: Vec<String>,
        task: Task,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 {
            return Err(Error::Data("dataset has no instances".into()));
        }
        if d == 0 {
            return Err(Error::Data("dataset has no features".into()));
        }
        if label_names.len() < 2 {
            return Err(Error::Data(format!(
                "need at least 2 labels, found {}",
                label_names.len()
            )));
        }
        if feature_names.len() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: feature_names.len(),
            });
        }
        if labels.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: labels.len(),
            });
        }
        let m = label_names.len();
        for (i, set) in labels.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if let Some(&bad) = set.iter().find(|&&l| l >= m) {
                return Err(Error::Data(format!(
                    "instance {i}: label index {bad} out of range (m = {m})"
                )));
            }
            if task == Task::Mcc && set.len() != 1 {
                return Err(Error::Data(format!(
                    "instance {i}: multi-class instance has {} labels",
                    set.len()
                )));
            }
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feature value".into()));
        }
        Ok(Dataset {
            features,
            labels,
            label_names,
            feature_names,
            task,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[LabelSet] {
        &self.labels
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_instances(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    /// Instances at `indices`, in that order. Label space is kept intact even
    /// if some labels have no instance in the subset.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
            label_names: self.label_names.clone(),
            feature_names: self.feature_names.clone(),
            task: self.task,
        }
    }

    /// Same labels, replaced feature matrix (used after normalization).
    pub fn with_features(&self, features: Array2<f64>) -> Result<Dataset> {
        if features.dim() != self.features.dim() {
            return Err(Error::Dimension {
                expected: self.n_features(),
                actual: features.ncols(),
            });
        }
        Ok(Dataset {
            features,
            ..self.clone()
        })
    }

    /// |D_k| for every label k.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_labels()];
        for set in &self.labels {
            for &l in set {
                counts[l] += 1;
            }
        }
        counts
    }

    /// Average number of relevant labels per instance.
    pub fn cardinality(&self) -> f64 {
        let total: usize = self.labels.iter().map(Vec::len).sum();
        total as f64 / self.n_instances() as f64
    }
}

/// Replaces NaN cells with their column mean. Columns that are entirely
/// missing become 0.
pub(crate) fn impute_column_means(features: &mut Array2<f64>) {
    for mut col in features.columns_mut() {
        let (sum, count) = col
            .iter()
            .filter(|v| !v.is_nan())
            .fold((0.0, 0usize), |(s, c), &v| (s + v, c + 1));
        let mean = if count == 0 { 0.0 } else { sum / count as f64 };
        col.mapv_inplace(|v| if v.is_nan() { mean } else { v });
    }
}
