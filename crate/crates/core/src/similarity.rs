//! Similarity evidence: for a query `x` and class `k`, the sum of kernel
//! similarities between `x` and every training instance labelled `k`.
//!
//! The fitted [`EvidenceTransform`] keeps the (normalized) training
//! instances, the per-class instance lists and the per-column range of the
//! training evidence, so queries can be mapped into the same `[0, 1]^m`
//! space the classifiers were trained in.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabelSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelConfig {
    /// `exp(-gamma * |a - b|^2)`
    Rbf { gamma: f64 },
}

impl KernelConfig {
    pub fn rbf(gamma: f64) -> Result<Self> {
        let cfg = KernelConfig::Rbf { gamma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelConfig::Rbf { gamma } if gamma > 0.0 && gamma.is_finite() => Ok(()),
            KernelConfig::Rbf { gamma } => Err(Error::Param(format!("RBF gamma must be positive, got {gamma}"))),
        }
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            KernelConfig::Rbf { gamma } => gamma,
        }
    }

    pub fn eval(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::Dimension {
                expected: a.len(),
                actual: b.len(),
            });
        }
        Ok(self.from_sq_dist(sq_dist(a, b)))
    }

    #[inline]
    pub(crate) fn from_sq_dist(&self, d2: f64) -> f64 {
        match *self {
            KernelConfig::Rbf { gamma } => (-gamma * d2).exp(),
        }
    }
}

#[inline]
pub(crate) fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Pairwise squared Euclidean distances between the rows of `a` and `b`.
pub(crate) fn sq_dist_matrix(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    for_each_row(&mut out, |i, mut row| {
        let ai = a.row(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = sq_dist(ai, b.row(j));
        }
    });
    out
}

#[cfg(feature = "parallel")]
pub(crate) fn for_each_row<F>(out: &mut Array2<f64>, f: F)
where
    F: Fn(usize, ndarray::ArrayViewMut1<'_, f64>) + Sync + Send,
{
    use ndarray::parallel::prelude::*;
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_row<F>(out: &mut Array2<f64>, f: F)
where
    F: Fn(usize, ndarray::ArrayViewMut1<'_, f64>),
{
    for (i, row) in out.axis_iter_mut(Axis(0)).enumerate() {
        f(i, row);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub min: f64,
    pub max: f64,
}

impl ColumnRange {
    /// Min-max to [0, 1], clipped; a constant column maps to 0.
    #[inline]
    pub fn scale(&self, v: f64) -> f64 {
        let range = self.max - self.min;
        if range <= 0.0 {
            0.0
        } else {
            ((v - self.min) / range).clamp(0.0, 1.0)
        }
    }
}

/// Per-class evidence values for one query.
pub type EvidenceVector = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceTransform {
    kernel: KernelConfig,
    train_features: Array2<f64>,
    class_index: Vec<Vec<usize>>,
    evidence_norm: Vec<ColumnRange>,
}

/// Builds the class -> instance lists. Fails if any class is empty.
fn build_class_index(labels: &[LabelSet], n_classes: usize) -> Result<Vec<Vec<usize>>> {
    let mut index = vec![Vec::new(); n_classes];
    for (i, set) in labels.iter().enumerate() {
        for &k in set {
            if k >= n_classes {
                return Err(Error::Dimension {
                    expected: n_classes,
                    actual: k + 1,
                });
            }
            index[k].push(i);
        }
    }
    if let Some(class) = index.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass { class });
    }
    Ok(index)
}

#[inline]
fn sum_by_class(class_index: &[Vec<usize>], kernel_row: ArrayView1<'_, f64>, out: &mut [f64]) {
    for (o, members) in out.iter_mut().zip(class_index) {
        *o = members.iter().map(|&j| kernel_row[j]).sum();
    }
}

impl EvidenceTransform {
    /// Fits on `features` (already normalized) with one label set per row and
    /// returns the transform together with the raw N x m training evidence.
    pub fn fit_with_evidence(
        features: ArrayView2<'_, f64>,
        labels: &[LabelSet],
        n_classes: usize,
        kernel: KernelConfig,
    ) -> Result<(Self, Array2<f64>)> {
        let d2 = sq_dist_matrix(features, features);
        Self::fit_from_sq_dists(features, labels, n_classes, kernel, d2.view())
    }

    pub fn fit(
        features: ArrayView2<'_, f64>,
        labels: &[LabelSet],
        n_classes: usize,
        kernel: KernelConfig,
    ) -> Result<Self> {
        Ok(Self::fit_with_evidence(features, labels, n_classes, kernel)?.0)
    }

    /// Same as [`fit_with_evidence`](Self::fit_with_evidence) but reuses a
    /// precomputed training distance matrix, which lets a kernel-width
    /// search pay for the distances once.
    pub(crate) fn fit_from_sq_dists(
        features: ArrayView2<'_, f64>,
        labels: &[LabelSet],
        n_classes: usize,
        kernel: KernelConfig,
        train_sq_dists: ArrayView2<'_, f64>,
    ) -> Result<(Self, Array2<f64>)> {
        kernel.validate()?;
        if labels.len() != features.nrows() {
            return Err(Error::Dimension {
                expected: features.nrows(),
                actual: labels.len(),
            });
        }
        let class_index = build_class_index(labels, n_classes)?;
        let mut transform = EvidenceTransform {
            kernel,
            train_features: features.to_owned(),
            class_index,
            evidence_norm: Vec::new(),
        };
        let evidence = transform.raw_from_sq_dists(train_sq_dists);
        transform.evidence_norm = evidence
            .axis_iter(Axis(1))
            .map(|c| ColumnRange {
                min: c.iter().copied().fold(f64::INFINITY, f64::min),
                max: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            })
            .collect();
        Ok((transform, evidence))
    }

    pub fn kernel(&self) -> KernelConfig {
        self.kernel
    }

    pub fn n_classes(&self) -> usize {
        self.class_index.len()
    }

    pub fn n_features(&self) -> usize {
        self.train_features.ncols()
    }

    pub fn train_features(&self) -> &Array2<f64> {
        &self.train_features
    }

    pub fn class_index(&self) -> &[Vec<usize>] {
        &self.class_index
    }

    pub fn evidence_norm(&self) -> &[ColumnRange] {
        &self.evidence_norm
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.n_features() {
            return Err(Error::Dimension {
                expected: self.n_features(),
                actual: d,
            });
        }
        Ok(())
    }

    /// Evidence for a single query. With `normalized`, each class column is
    /// min-max scaled by the training range and clipped to [0, 1].
    pub fn evidence_for(&self, x: ArrayView1<'_, f64>, normalized: bool) -> Result<EvidenceVector> {
        self.check_dim(x.len())?;
        let krow: ndarray::Array1<f64> = self
            .train_features
            .axis_iter(Axis(0))
            .map(|t| self.kernel.from_sq_dist(sq_dist(x, t)))
            .collect();
        let mut out = vec![0.0; self.n_classes()];
        sum_by_class(&self.class_index, krow.view(), &mut out);
        if normalized {
            self.normalize_in_place(&mut out);
        }
        Ok(out)
    }

    /// Evidence for every row of `x`, as an n x m matrix.
    pub fn evidence_matrix(&self, x: ArrayView2<'_, f64>, normalized: bool) -> Result<Array2<f64>> {
        self.check_dim(x.ncols())?;
        let d2 = sq_dist_matrix(x, self.train_features.view());
        let mut ev = self.raw_from_sq_dists(d2.view());
        if normalized {
            self.normalize_rows(&mut ev);
        }
        Ok(ev)
    }

    /// Raw evidence from squared distances to the training rows
    /// (`queries x N`).
    pub(crate) fn raw_from_sq_dists(&self, sq_dists: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((sq_dists.nrows(), self.n_classes()));
        let kernel = self.kernel;
        let class_index = &self.class_index;
        for_each_row(&mut out, |i, mut row| {
            let krow = sq_dists.row(i).mapv(|v| kernel.from_sq_dist(v));
            sum_by_class(class_index, krow.view(), row.as_slice_mut().expect("standard layout"));
        });
        out
    }

    pub fn normalize_in_place(&self, values: &mut [f64]) {
        for (v, r) in values.iter_mut().zip(&self.evidence_norm) {
            *v = r.scale(*v);
        }
    }

    pub fn normalize_rows(&self, evidence: &mut Array2<f64>) {
        for mut row in evidence.axis_iter_mut(Axis(0)) {
            self.normalize_in_place(row.as_slice_mut().expect("standard layout"));
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.evidence_norm.len() != self.class_index.len() {
            return Err(Error::Schema("evidence normalization width mismatch".into()));
        }
        let n = self.train_features.nrows();
        if self.class_index.iter().flatten().any(|&j| j >= n) {
            return Err(Error::Schema("class index refers past training rows".into()));
        }
        Ok(())
    }
}

/// Fits the class-evidence transform of a (normalized) dataset.
pub fn fit_evidence(d: &Dataset, kernel: KernelConfig) -> Result<EvidenceTransform> {
    EvidenceTransform::fit(d.features().view(), d.labels(), d.n_labels(), kernel)
}
