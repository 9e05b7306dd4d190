//! Lazy similarity-based classifier.
//!
//! Classes are ranked by raw evidence. For multi-class data the top class is
//! returned. For multi-label data the number of labels to emit is itself
//! predicted: the training set is relabelled by label-set size and a second
//! evidence transform picks the size with the largest evidence.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabelSet, Task};
use crate::error::{Error, Result};
use crate::similarity::{EvidenceTransform, KernelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmlModel {
    evidence: EvidenceTransform,
    task: Task,
    size_transform: Option<SizeTransform>,
}

/// Evidence over the label-set-size classes; `sizes[c]` is the set size that
/// size-class `c` stands for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeTransform {
    pub sizes: Vec<usize>,
    pub evidence: EvidenceTransform,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// The `k` classes with the largest scores, ties broken towards lower
/// indices, returned sorted by class index.
pub fn top_k(scores: &[f64], k: usize) -> LabelSet {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut chosen: LabelSet = order.into_iter().take(k).collect();
    chosen.sort_unstable();
    chosen
}

impl SmlModel {
    pub fn fit(d: &Dataset, kernel: KernelConfig) -> Result<Self> {
        Self::fit_parts(d.features().view(), d.labels(), d.n_labels(), d.task(), kernel)
    }

    pub(crate) fn fit_parts(
        features: ArrayView2<'_, f64>,
        labels: &[LabelSet],
        n_labels: usize,
        task: Task,
        kernel: KernelConfig,
    ) -> Result<Self> {
        let evidence = EvidenceTransform::fit(features, labels, n_labels, kernel)?;
        let size_transform = match task {
            Task::Mcc => None,
            Task::Mlc => Some(SizeTransform::fit(features, labels, kernel)?),
        };
        Ok(SmlModel {
            evidence,
            task,
            size_transform,
        })
    }

    /// Variant of [`fit_parts`](Self::fit_parts) that reuses a training
    /// distance matrix.
    pub(crate) fn fit_from_sq_dists(
        features: ArrayView2<'_, f64>,
        labels: &[LabelSet],
        n_labels: usize,
        task: Task,
        kernel: KernelConfig,
        sq_dists: ArrayView2<'_, f64>,
    ) -> Result<Self> {
        let (evidence, _) = EvidenceTransform::fit_from_sq_dists(features, labels, n_labels, kernel, sq_dists)?;
        let size_transform = match task {
            Task::Mcc => None,
            Task::Mlc => {
                let (sizes, size_labels) = size_classes(labels);
                let (evidence, _) =
                    EvidenceTransform::fit_from_sq_dists(features, &size_labels, sizes.len(), kernel, sq_dists)?;
                Some(SizeTransform { sizes, evidence })
            }
        };
        Ok(SmlModel {
            evidence,
            task,
            size_transform,
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn evidence(&self) -> &EvidenceTransform {
        &self.evidence
    }

    pub fn size_transform(&self) -> Option<&SizeTransform> {
        self.size_transform.as_ref()
    }

    pub fn n_labels(&self) -> usize {
        self.evidence.n_classes()
    }

    /// Predicted label-set size for `x` (always 1 for multi-class).
    pub fn predict_size(&self, x: ArrayView1<'_, f64>) -> Result<usize> {
        match &self.size_transform {
            None => Ok(1),
            Some(st) => {
                let f = st.evidence.evidence_for(x, false)?;
                Ok(st.sizes[argmax(&f)])
            }
        }
    }

    /// Returns the raw class evidence (usable as ranking scores) and the
    /// predicted label set.
    pub fn predict_scored(&self, x: ArrayView1<'_, f64>) -> Result<(Vec<f64>, LabelSet)> {
        let f = self.evidence.evidence_for(x, false)?;
        let set = match self.task {
            Task::Mcc => vec![argmax(&f)],
            Task::Mlc => top_k(&f, self.predict_size(x)?),
        };
        Ok((f, set))
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<LabelSet> {
        Ok(self.predict_scored(x)?.1)
    }

    /// Batch prediction: the n x m score matrix and one label set per row.
    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Vec<LabelSet>)> {
        let scores = self.evidence.evidence_matrix(x, false)?;
        let sizes: Vec<usize> = match &self.size_transform {
            None => vec![1; x.nrows()],
            Some(st) => {
                let f = st.evidence.evidence_matrix(x, false)?;
                f.rows()
                    .into_iter()
                    .map(|r| st.sizes[argmax(r.as_slice().expect("standard layout"))])
                    .collect()
            }
        };
        let sets = scores
            .rows()
            .into_iter()
            .zip(sizes)
            .map(|(r, k)| {
                let r = r.as_slice().expect("standard layout");
                match self.task {
                    Task::Mcc => vec![argmax(r)],
                    Task::Mlc => top_k(r, k),
                }
            })
            .collect();
        Ok((scores, sets))
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.evidence.validate()?;
        match (&self.size_transform, self.task) {
            (None, Task::Mcc) => Ok(()),
            (Some(st), Task::Mlc) => {
                st.evidence.validate()?;
                if st.sizes.len() != st.evidence.n_classes() {
                    return Err(Error::Schema("size classes do not match transform".into()));
                }
                Ok(())
            }
            _ => Err(Error::Schema("size transform present iff task is mlc".into())),
        }
    }
}

/// Distinct label-set sizes (ascending) and each instance's size-class.
fn size_classes(labels: &[LabelSet]) -> (Vec<usize>, Vec<LabelSet>) {
    let mut sizes: Vec<usize> = labels.iter().map(Vec::len).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let relabelled = labels
        .iter()
        .map(|s| vec![sizes.binary_search(&s.len()).expect("size present")])
        .collect();
    (sizes, relabelled)
}

impl SizeTransform {
    fn fit(features: ArrayView2<'_, f64>, labels: &[LabelSet], kernel: KernelConfig) -> Result<Self> {
        let (sizes, size_labels) = size_classes(labels);
        let evidence = EvidenceTransform::fit(features, &size_labels, sizes.len(), kernel)?;
        Ok(SizeTransform { sizes, evidence })
    }
}

pub fn sml_fit(d: &Dataset, kernel: KernelConfig) -> Result<SmlModel> {
    SmlModel::fit(d, kernel)
}

pub fn sml_predict(model: &SmlModel, x: ArrayView1<'_, f64>) -> Result<LabelSet> {
    model.predict(x)
}
