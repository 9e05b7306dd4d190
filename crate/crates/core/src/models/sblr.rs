//! Per-class logistic models over normalized similarity evidence.
//!
//! Every class `k` gets its own coefficient vector `beta_k` of length
//! `m + 1` (intercept first), fitted on the shared design
//! `z_i = [1, fbar_1(x_i), ..., fbar_m(x_i)]`. With a positive l1 penalty the
//! model is the sparse variant; with none it is the plain one.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabelSet, Task};
use crate::error::{Error, Result};
use crate::optim::{sigmoid, solve_l1, solve_smooth, GlmProblem, GlmSolution, SolverConfig};
use crate::similarity::{EvidenceTransform, KernelConfig};
use crate::sml::argmax;

/// Row `k` is `beta_k`; column 0 is the intercept and column `t + 1` weighs
/// the evidence of class `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMatrix {
    pub betas: Array2<f64>,
}

impl CoefficientMatrix {
    pub fn n_classes(&self) -> usize {
        self.betas.nrows()
    }

    pub fn row(&self, k: usize) -> ArrayView1<'_, f64> {
        self.betas.row(k)
    }

    /// Evidence weights of class `k` (intercept dropped).
    pub fn weights(&self, k: usize) -> ArrayView1<'_, f64> {
        self.betas.row(k).slice_move(ndarray::s![1..])
    }

    pub fn nonzero_weights(&self) -> usize {
        self.betas
            .slice(ndarray::s![.., 1..])
            .iter()
            .filter(|&&b| b != 0.0)
            .count()
    }
}

/// Decision for one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub labels: LabelSet,
    /// Multi-label only: no posterior reached 1/2 and the top class was
    /// emitted instead of an empty set.
    pub fallback: bool,
}

/// Thresholds posteriors at 1/2 (multi-label, with a top-1 fallback when
/// nothing passes) or takes the argmax (multi-class).
pub fn decide(posteriors: &[f64], task: Task) -> Prediction {
    match task {
        Task::Mcc => Prediction {
            labels: vec![argmax(posteriors)],
            fallback: false,
        },
        Task::Mlc => {
            let labels: LabelSet = (0..posteriors.len()).filter(|&k| posteriors[k] >= 0.5).collect();
            if labels.is_empty() {
                Prediction {
                    labels: vec![argmax(posteriors)],
                    fallback: true,
                }
            } else {
                Prediction {
                    labels,
                    fallback: false,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SblrModel {
    evidence: EvidenceTransform,
    coefficients: CoefficientMatrix,
    task: Task,
    l1_lambda: f64,
    penalize_intercept: bool,
    /// Solver iterations per class.
    iterations: Vec<usize>,
    converged: Vec<bool>,
}

/// `[1 | evidence]`.
pub(crate) fn design_matrix(normalized_evidence: ArrayView2<'_, f64>) -> Array2<f64> {
    let ones = Array2::ones((normalized_evidence.nrows(), 1));
    concatenate![Axis(1), ones, normalized_evidence]
}

/// Fits one binary logistic model per class. Runs the classes in parallel
/// when the `parallel` feature is on; results are ordered by class index.
pub(crate) fn fit_per_class(
    design: ArrayView2<'_, f64>,
    labels: &[LabelSet],
    n_classes: usize,
    l1_lambda: f64,
    penalize_intercept: bool,
    scale_by_n: bool,
    solver: &SolverConfig,
) -> Result<Vec<GlmSolution>> {
    solver.validate()?;
    if !(l1_lambda >= 0.0 && l1_lambda.is_finite()) {
        return Err(Error::Param(format!("l1 penalty must be >= 0, got {l1_lambda}")));
    }
    let fit_one = |k: usize| -> Result<GlmSolution> {
        let targets: Array1<f64> = labels
            .iter()
            .map(|s| if s.binary_search(&k).is_ok() { 1.0 } else { 0.0 })
            .collect();
        let problem = GlmProblem::new(design.view(), targets.view())?;
        let solved = if l1_lambda > 0.0 {
            let problem = problem
                .scaled(scale_by_n)
                .with_l1(l1_lambda)?
                .penalizing_intercept(penalize_intercept);
            solve_l1(&problem, solver)
        } else {
            solve_smooth(&problem.scaled(scale_by_n), solver)
        };
        solved.map_err(|e| Error::Solver {
            class: k,
            msg: e.to_string(),
        })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n_classes).into_par_iter().map(fit_one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_classes).map(fit_one).collect()
    }
}

impl SblrModel {
    /// Fits on a normalized dataset. `l1_lambda = 0` gives the plain model
    /// (unscaled likelihood, gradient descent); a positive value gives the
    /// sparse model (likelihood divided by n, FISTA).
    pub fn fit(
        d: &Dataset,
        kernel: KernelConfig,
        l1_lambda: f64,
        penalize_intercept: bool,
        solver: &SolverConfig,
    ) -> Result<Self> {
        let (evidence, raw) =
            EvidenceTransform::fit_with_evidence(d.features().view(), d.labels(), d.n_labels(), kernel)?;
        Self::fit_from_evidence(
            evidence,
            raw,
            d.labels(),
            d.task(),
            l1_lambda,
            penalize_intercept,
            solver,
        )
    }

    /// Fits the coefficient matrix given an already fitted transform and its
    /// raw training evidence.
    pub(crate) fn fit_from_evidence(
        evidence: EvidenceTransform,
        mut raw_training_evidence: Array2<f64>,
        labels: &[LabelSet],
        task: Task,
        l1_lambda: f64,
        penalize_intercept: bool,
        solver: &SolverConfig,
    ) -> Result<Self> {
        evidence.normalize_rows(&mut raw_training_evidence);
        let design = design_matrix(raw_training_evidence.view());
        let m = evidence.n_classes();
        let solutions = fit_per_class(
            design.view(),
            labels,
            m,
            l1_lambda,
            penalize_intercept,
            l1_lambda > 0.0,
            solver,
        )?;
        let mut betas = Array2::zeros((m, m + 1));
        for (k, s) in solutions.iter().enumerate() {
            betas.row_mut(k).assign(&s.beta);
        }
        Ok(SblrModel {
            evidence,
            coefficients: CoefficientMatrix { betas },
            task,
            l1_lambda,
            penalize_intercept,
            iterations: solutions.iter().map(|s| s.iterations).collect(),
            converged: solutions.iter().map(|s| s.converged).collect(),
        })
    }

    pub fn evidence(&self) -> &EvidenceTransform {
        &self.evidence
    }

    pub fn coefficients(&self) -> &CoefficientMatrix {
        &self.coefficients
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn l1_lambda(&self) -> f64 {
        self.l1_lambda
    }

    pub fn is_sparse(&self) -> bool {
        self.l1_lambda > 0.0
    }

    pub fn iterations(&self) -> &[usize] {
        &self.iterations
    }

    pub fn converged(&self) -> &[bool] {
        &self.converged
    }

    pub fn n_labels(&self) -> usize {
        self.coefficients.n_classes()
    }

    /// `sigmoid(beta_k . [1, fbar(x)])` for every class.
    pub fn posteriors(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        let fbar = self.evidence.evidence_for(x, true)?;
        Ok((0..self.n_labels())
            .map(|k| {
                let beta = self.coefficients.row(k);
                let a = beta[0] + fbar.iter().zip(beta.iter().skip(1)).map(|(f, b)| f * b).sum::<f64>();
                sigmoid(a)
            })
            .collect())
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<Prediction> {
        Ok(decide(&self.posteriors(x)?, self.task))
    }

    /// Posterior matrix (n x m) for every row of `x`.
    pub fn posteriors_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let raw = self.evidence.evidence_matrix(x, false)?;
        Ok(self.posteriors_from_raw(raw))
    }

    pub(crate) fn posteriors_from_raw(&self, mut raw_evidence: Array2<f64>) -> Array2<f64> {
        self.evidence.normalize_rows(&mut raw_evidence);
        let design = design_matrix(raw_evidence.view());
        design.dot(&self.coefficients.betas.t()).mapv(sigmoid)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.evidence.validate()?;
        let m = self.evidence.n_classes();
        if self.coefficients.betas.dim() != (m, m + 1) {
            return Err(Error::Schema(format!(
                "coefficient matrix must be {m} x {}, found {:?}",
                m + 1,
                self.coefficients.betas.dim()
            )));
        }
        if self.coefficients.betas.iter().any(|b| !b.is_finite()) {
            return Err(Error::Schema("non-finite coefficient".into()));
        }
        Ok(())
    }
}

pub fn sblr_fit(d: &Dataset, kernel: KernelConfig, l1_lambda: f64, solver: &SolverConfig) -> Result<SblrModel> {
    SblrModel::fit(d, kernel, l1_lambda, false, solver)
}

pub fn sblr_posteriors(m: &SblrModel, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
    m.posteriors(x)
}

pub fn sblr_predict(m: &SblrModel, x: ArrayView1<'_, f64>) -> Result<Prediction> {
    m.predict(x)
}
