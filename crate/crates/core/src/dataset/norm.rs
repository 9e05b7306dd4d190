use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::schema::Document;

/// Per-column range of the data the normalizer was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Document for NormStats {
    const FORMAT: &'static str = "simbase-normstats";
}

impl NormStats {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let min = x
            .axis_iter(Axis(1))
            .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let max = x
            .axis_iter(Axis(1))
            .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        NormStats { min, max }
    }

    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    /// Maps one value of column `j` into [-1, 1]; constant columns go to 0.
    #[inline]
    pub fn scale(&self, j: usize, v: f64) -> f64 {
        let (lo, hi) = (self.min[j], self.max[j]);
        let range = hi - lo;
        if range <= 0.0 {
            return 0.0;
        }
        (2.0 * (v - lo) / range - 1.0).clamp(-1.0, 1.0)
    }

    pub fn apply_row(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if x.len() != self.n_features() {
            return Err(Error::Dimension {
                expected: self.n_features(),
                actual: x.len(),
            });
        }
        Ok(x.iter().enumerate().map(|(j, &v)| self.scale(j, v)).collect())
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::Dimension {
                expected: self.n_features(),
                actual: x.ncols(),
            });
        }
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| self.scale(j, v));
        }
        Ok(out)
    }

    pub fn apply_dataset(&self, d: &Dataset) -> Result<Dataset> {
        d.with_features(self.apply(d.features().view())?)
    }
}

/// Rescales every feature column to [-1, 1] and returns the statistics needed
/// to map unseen instances the same way.
pub fn normalize_features(d: &Dataset) -> (Dataset, NormStats) {
    let stats = NormStats::fit(d.features().view());
    let normalized = stats.apply_dataset(d).expect("stats fitted on the same matrix");
    (normalized, stats)
}
