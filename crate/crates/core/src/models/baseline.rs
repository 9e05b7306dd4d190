//! Reference classifiers for multi-class data, fitted on normalized features.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Task};
use crate::error::{Error, Result};
use crate::optim::{sigmoid, SolverConfig};
use crate::similarity::{sq_dist, sq_dist_matrix};
use crate::sml::argmax;

use super::sblr::{design_matrix, fit_per_class};

fn single_labels(d: &Dataset) -> Result<Vec<usize>> {
    if d.task() != Task::Mcc {
        return Err(Error::Data("baseline classifiers need multi-class data".into()));
    }
    Ok(d.labels().iter().map(|s| s[0]).collect())
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension { expected, actual });
    }
    Ok(())
}

/// k nearest neighbours under Euclidean distance with majority vote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    n_classes: usize,
    train_features: Array2<f64>,
    train_classes: Vec<usize>,
}

impl KnnModel {
    pub fn fit(d: &Dataset, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Param("k must be at least 1".into()));
        }
        Ok(KnnModel {
            k,
            n_classes: d.n_labels(),
            train_features: d.features().clone(),
            train_classes: single_labels(d)?,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_labels(&self) -> usize {
        self.n_classes
    }

    fn scores_from_dists(&self, dists: ArrayView1<'_, f64>) -> Vec<f64> {
        let mut order: Vec<usize> = (0..dists.len()).collect();
        order.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
        let k = self.k.min(order.len());
        let mut votes = vec![0.0; self.n_classes];
        for &i in &order[..k] {
            votes[self.train_classes[i]] += 1.0;
        }
        votes.iter().map(|v| v / k as f64).collect()
    }

    /// Vote fractions per class.
    pub fn scores(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        check_dim(self.train_features.ncols(), x.len())?;
        let dists: ndarray::Array1<f64> = self.train_features.rows().into_iter().map(|r| sq_dist(r, x)).collect();
        Ok(self.scores_from_dists(dists.view()))
    }

    pub fn scores_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_dim(self.train_features.ncols(), x.ncols())?;
        let d = sq_dist_matrix(x, self.train_features.view());
        let mut out = Array2::zeros((x.nrows(), self.n_classes));
        for (i, row) in d.rows().into_iter().enumerate() {
            out.row_mut(i)
                .assign(&ndarray::Array1::from(self.scores_from_dists(row)));
        }
        Ok(out)
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<usize> {
        Ok(argmax(&self.scores(x)?))
    }
}

/// Nearest class mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcmModel {
    means: Array2<f64>,
}

impl NcmModel {
    pub fn fit(d: &Dataset) -> Result<Self> {
        let classes = single_labels(d)?;
        let m = d.n_labels();
        let mut means = Array2::zeros((m, d.n_features()));
        let mut counts = vec![0usize; m];
        for (i, &c) in classes.iter().enumerate() {
            let mut row = means.row_mut(c);
            row += &d.row(i);
            counts[c] += 1;
        }
        for (c, &n) in counts.iter().enumerate() {
            if n == 0 {
                return Err(Error::EmptyClass { class: c });
            }
            means.row_mut(c).mapv_inplace(|v| v / n as f64);
        }
        Ok(NcmModel { means })
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn n_labels(&self) -> usize {
        self.means.nrows()
    }

    /// Negative squared distance to each class mean.
    pub fn scores(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        check_dim(self.means.ncols(), x.len())?;
        Ok(self.means.rows().into_iter().map(|mu| -sq_dist(mu, x)).collect())
    }

    pub fn scores_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_dim(self.means.ncols(), x.ncols())?;
        Ok(sq_dist_matrix(x, self.means.view()).mapv(|v| -v))
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<usize> {
        Ok(argmax(&self.scores(x)?))
    }
}

/// One-vs-rest logistic regression on the raw (normalized) features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    /// m x (d + 1), intercept first.
    coefficients: Array2<f64>,
}

impl LrModel {
    pub fn fit(d: &Dataset, solver: &SolverConfig) -> Result<Self> {
        single_labels(d)?;
        let m = d.n_labels();
        let design = design_matrix(d.features().view());
        let labels = d.labels();
        let mut coefficients = Array2::zeros((m, d.n_features() + 1));
        for (k, s) in fit_per_class(design.view(), labels, m, 0.0, false, true, solver)?
            .into_iter()
            .enumerate()
        {
            coefficients.row_mut(k).assign(&s.beta);
        }
        Ok(LrModel { coefficients })
    }

    pub fn coefficients(&self) -> &Array2<f64> {
        &self.coefficients
    }

    pub fn n_labels(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn scores(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        let s = self.scores_batch(x.insert_axis(Axis(0)))?;
        Ok(s.row(0).to_vec())
    }

    pub fn scores_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_dim(self.coefficients.ncols() - 1, x.ncols())?;
        Ok(design_matrix(x).dot(&self.coefficients.t()).mapv(sigmoid))
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<usize> {
        Ok(argmax(&self.scores(x)?))
    }
}
