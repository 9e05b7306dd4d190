//! Binary logistic regression over a design matrix with a leading column of
//! ones.
//!
//! Two solvers are provided: gradient descent with Armijo backtracking for
//! the smooth negative log-likelihood, and FISTA (accelerated proximal
//! gradient with backtracking and monotone restart) for the l1-penalized
//! objective. Both start from `beta = 0`.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Armijo sufficient-decrease constant.
const ARMIJO_C: f64 = 1e-4;
/// Line searches give up below this step length.
const MIN_STEP: f64 = 1e-20;

#[derive(Debug, Clone, Copy)]
pub struct GlmProblem<'a> {
    design: ArrayView2<'a, f64>,
    targets: ArrayView1<'a, f64>,
    pub l1_lambda: f64,
    pub penalize_intercept: bool,
    pub scale_by_n: bool,
}

impl<'a> GlmProblem<'a> {
    pub fn new(design: ArrayView2<'a, f64>, targets: ArrayView1<'a, f64>) -> Result<Self> {
        if design.nrows() != targets.len() {
            return Err(Error::Dimension {
                expected: design.nrows(),
                actual: targets.len(),
            });
        }
        if design.nrows() == 0 || design.ncols() == 0 {
            return Err(Error::Param("empty design matrix".into()));
        }
        if design.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::Param("design column 0 must be all ones".into()));
        }
        if targets.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::Param("targets must be 0 or 1".into()));
        }
        Ok(GlmProblem {
            design,
            targets,
            l1_lambda: 0.0,
            penalize_intercept: false,
            scale_by_n: false,
        })
    }

    pub fn with_l1(mut self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Param(format!("l1 penalty must be >= 0, got {lambda}")));
        }
        self.l1_lambda = lambda;
        Ok(self)
    }

    pub fn scaled(mut self, scale_by_n: bool) -> Self {
        self.scale_by_n = scale_by_n;
        self
    }

    pub fn penalizing_intercept(mut self, yes: bool) -> Self {
        self.penalize_intercept = yes;
        self
    }

    pub fn n_instances(&self) -> usize {
        self.design.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> ArrayView2<'a, f64> {
        self.design
    }

    pub fn targets(&self) -> ArrayView1<'a, f64> {
        self.targets
    }

    fn scale(&self) -> f64 {
        if self.scale_by_n {
            1.0 / self.n_instances() as f64
        } else {
            1.0
        }
    }

    fn check(&self, beta: ArrayView1<'_, f64>) {
        assert_eq!(beta.len(), self.n_params(), "beta has wrong length");
    }

    /// l1 norm over the penalized coordinates.
    pub fn penalty_norm(&self, beta: ArrayView1<'_, f64>) -> f64 {
        let skip = usize::from(!self.penalize_intercept);
        beta.iter().skip(skip).map(|b| b.abs()).sum()
    }

    /// Smooth part plus `l1_lambda` times the penalty norm.
    pub fn composite(&self, beta: ArrayView1<'_, f64>) -> f64 {
        nll(self, beta) + self.l1_lambda * self.penalty_norm(beta)
    }
}

/// `log(1 + e^a)` without overflow.
#[inline]
pub fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Negative log-likelihood `sum_i (-y_i a_i + log(1 + e^{a_i}))`, `a = Z beta`,
/// divided by n when the problem is scaled. Evaluated as `log(1 + e^{-a})`
/// for positives so confident correct predictions keep full precision.
pub fn nll(p: &GlmProblem<'_>, beta: ArrayView1<'_, f64>) -> f64 {
    p.check(beta);
    let a = p.design.dot(&beta);
    let total: f64 = a
        .iter()
        .zip(p.targets.iter())
        .map(|(&a, &y)| if y == 1.0 { softplus(-a) } else { softplus(a) })
        .sum();
    total * p.scale()
}

/// `Z^T (sigmoid(Z beta) - y)`, with the same scaling as [`nll`].
pub fn nll_gradient(p: &GlmProblem<'_>, beta: ArrayView1<'_, f64>) -> Array1<f64> {
    p.check(beta);
    let residual: Array1<f64> = p
        .design
        .dot(&beta)
        .iter()
        .zip(p.targets.iter())
        .map(|(&a, &y)| sigmoid(a) - y)
        .collect();
    p.design.t().dot(&residual) * p.scale()
}

/// Proximal operator of `t |.|`.
#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    v.signum() * (v.abs() - t).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_init: f64,
    pub backtrack_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 1000,
            grad_tol: 1e-6,
            step_init: 1.0,
            backtrack_factor: 0.5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Param("max_iters must be positive".into()));
        }
        if !(self.grad_tol > 0.0) || !(self.step_init > 0.0) {
            return Err(Error::Param("grad_tol and step_init must be positive".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::Param("backtrack_factor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmSolution {
    pub beta: Array1<f64>,
    pub final_objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn finite(v: f64, iteration: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { iteration })
    }
}

/// Gradient descent with Armijo backtracking on the smooth objective. Stops
/// once the gradient's max-norm is at most `grad_tol`.
pub fn solve_smooth(p: &GlmProblem<'_>, cfg: &SolverConfig) -> Result<GlmSolution> {
    cfg.validate()?;
    if p.l1_lambda != 0.0 {
        return Err(Error::Param("solve_smooth needs l1_lambda = 0".into()));
    }
    let mut beta = Array1::<f64>::zeros(p.n_params());
    let mut f = finite(nll(p, beta.view()), 0)?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        let g = nll_gradient(p, beta.view());
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= cfg.grad_tol {
            converged = true;
            break;
        }
        let g2 = g.dot(&g);
        let mut step = cfg.step_init;
        let accepted = loop {
            let cand = &beta - &(&g * step);
            let fc = nll(p, cand.view());
            if fc.is_finite() && fc <= f - ARMIJO_C * step * g2 {
                break Some((cand, fc));
            }
            step *= cfg.backtrack_factor;
            if step < MIN_STEP {
                break None;
            }
        };
        iterations += 1;
        match accepted {
            Some((cand, fc)) => {
                beta = cand;
                f = fc;
            }
            // no representable descent step left; beta is as good as it gets
            None => break,
        }
    }
    Ok(GlmSolution {
        beta,
        final_objective: finite(f, iterations)?,
        iterations,
        converged,
    })
}

fn prox(p: &GlmProblem<'_>, v: &Array1<f64>, step: f64) -> Array1<f64> {
    let t = step * p.l1_lambda;
    let mut out = v.mapv(|x| soft_threshold(x, t));
    if !p.penalize_intercept {
        out[0] = v[0];
    }
    out
}

/// FISTA with backtracking. A step that would increase the composite
/// objective is rejected and the momentum reset, so the reported objective
/// never increases. Converged when an accepted step changes the composite
/// objective by at most `grad_tol`.
pub fn solve_l1(p: &GlmProblem<'_>, cfg: &SolverConfig) -> Result<GlmSolution> {
    cfg.validate()?;
    let n = p.n_params();
    let mut x = Array1::<f64>::zeros(n);
    let mut y = x.clone();
    let mut momentum = 1.0f64;
    let mut step = cfg.step_init;
    let mut objective = finite(p.composite(x.view()), 0)?;
    let mut iterations = 0;
    let mut converged = false;
    // true while y == x, i.e. the next step is a plain proximal-gradient step
    let mut at_anchor = true;

    while iterations < cfg.max_iters {
        iterations += 1;
        let fy = finite(nll(p, y.view()), iterations)?;
        let gy = nll_gradient(p, y.view());
        let x_new = loop {
            let cand = prox(p, &(&y - &(&gy * step)), step);
            let diff = &cand - &y;
            let fc = nll(p, cand.view());
            let bound = fy + gy.dot(&diff) + diff.dot(&diff) / (2.0 * step);
            if fc.is_finite() && fc <= bound {
                break Some(cand);
            }
            step *= cfg.backtrack_factor;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some(x_new) = x_new else { break };
        let new_objective = finite(p.composite(x_new.view()), iterations)?;

        if new_objective > objective {
            if at_anchor {
                // a plain proximal step from x cannot improve: rounding floor
                converged = true;
                break;
            }
            momentum = 1.0;
            y.assign(&x);
            at_anchor = true;
            continue;
        }

        let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let coef = (momentum - 1.0) / next_momentum;
        y = &x_new + &((&x_new - &x) * coef);
        at_anchor = coef == 0.0;
        let change = objective - new_objective;
        x = x_new;
        objective = new_objective;
        momentum = next_momentum;
        if change <= cfg.grad_tol {
            converged = true;
            break;
        }
    }
    Ok(GlmSolution {
        beta: x,
        final_objective: objective,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn naive_nll(z: &Array2<f64>, y: &Array1<f64>, beta: &Array1<f64>, scaled: bool) -> f64 {
        let mut s = 0.0;
        for i in 0..z.nrows() {
            let a: f64 = (0..z.ncols()).map(|j| z[[i, j]] * beta[j]).sum();
            s += -y[i] * a + (1.0 + a.exp()).ln();
        }
        if scaled {
            s / z.nrows() as f64
        } else {
            s
        }
    }

    /// Random design (ones column + entries in [0, 1]), targets and beta.
    fn problem_strategy() -> impl Strategy<Value = (Array2<f64>, Array1<f64>, Array1<f64>)> {
        (1usize..15, 1usize..5).prop_flat_map(|(n, p)| {
            (
                proptest::collection::vec(0.0f64..1.0, n * p),
                proptest::collection::vec(0u8..2, n),
                proptest::collection::vec(-3.0f64..3.0, p + 1),
            )
                .prop_map(move |(vals, ys, b)| {
                    let mut z = Array2::ones((n, p + 1));
                    for i in 0..n {
                        for j in 0..p {
                            z[[i, j + 1]] = vals[i * p + j];
                        }
                    }
                    let y = ys.iter().map(|&v| f64::from(v)).collect();
                    (z, y, Array1::from(b))
                })
        })
    }

    #[test]
    fn zero_beta_gives_log_two() {
        let z = array![[1.0, 0.2], [1.0, 0.7], [1.0, -0.1]];
        let y = array![1.0, 0.0, 1.0];
        let p = GlmProblem::new(z.view(), y.view()).unwrap();
        let b = Array1::zeros(2);
        assert!((nll(&p, b.view()) - 3.0 * 2f64.ln()).abs() < 1e-14);
        assert!((nll(&p.scaled(true), b.view()) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_confident_instance() {
        let z = array![[1.0]];
        let y = array![1.0];
        let p = GlmProblem::new(z.view(), y.view()).unwrap();
        let v = nll(&p, array![10.0].view());
        assert!((v - 4.539_889_921_686_465e-5).abs() < 1e-18, "{v}");
    }

    #[test]
    fn extreme_margins_stay_finite() {
        let z = array![[1.0], [1.0]];
        let y = array![1.0, 0.0];
        let p = GlmProblem::new(z.view(), y.view()).unwrap();
        let v = nll(&p, array![800.0].view());
        assert!((v - 800.0).abs() < 1e-9);
        let g = nll_gradient(&p, array![-800.0].view());
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn intercept_only_gradient() {
        let z = Array2::ones((4, 1));
        let y = Array1::ones(4);
        let p = GlmProblem::new(z.view(), y.view()).unwrap();
        let g = nll_gradient(&p, array![0.0].view());
        assert_eq!(g[0], -2.0);
    }

    #[test]
    fn balanced_centered_intercept_gradient_is_zero() {
        let z = array![[1.0, -1.0], [1.0, 1.0], [1.0, -0.5], [1.0, 0.5]];
        let y = array![0.0, 1.0, 1.0, 0.0];
        let p = GlmProblem::new(z.view(), y.view()).unwrap();
        let g = nll_gradient(&p, Array1::zeros(2).view());
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn problem_validation() {
        let z = array![[0.5, 1.0]];
        let y = array![1.0];
        assert!(GlmProblem::new(z.view(), y.view()).is_err());
        let z = array![[1.0, 1.0]];
        let y = array![0.5];
        assert!(GlmProblem::new(z.view(), y.view()).is_err());
        let y = array![1.0, 0.0];
        assert!(GlmProblem::new(z.view(), y.view()).is_err());
    }

    #[test]
    fn soft_threshold_closed_forms() {
        assert_eq!(soft_threshold(1.5, 1.0), 0.5);
        assert_eq!(soft_threshold(-1.5, 1.0), -0.5);
        assert_eq!(soft_threshold(0.3, 1.0), 0.0);
        assert_eq!(soft_threshold(-0.7, 0.0), -0.7);
    }

    #[test]
    fn intercept_only_optimum() {
        // feature carries no information: same value distribution per class
        let z = array![[1.0, 0.0], [1.0, 1.0], [1.0, 0.0], [1.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = array![1.0, 1.0, 0.0, 0.0, 1.0, 1.0];
        let p = GlmProblem::new(z.view(), y.view()).unwrap();
        let cfg = SolverConfig {
            max_iters: 20_000,
            grad_tol: 1e-8,
            ..Default::default()
        };
        let s = solve_smooth(&p, &cfg).unwrap();
        assert!(s.converged);
        let logit = (2.0f64 / 3.0 / (1.0 / 3.0)).ln();
        assert!((s.beta[0] - logit).abs() < 1e-7, "{}", s.beta);
        assert!(s.beta[1].abs() < 1e-7);
    }

    #[test]
    fn separable_one_dimensional() {
        let z = array![[1.0, -1.0], [1.0, 1.0]];
        let y = array![0.0, 1.0];
        let p = GlmProblem::new(z.view(), y.view()).unwrap();
        let s = solve_smooth(&p, &SolverConfig::default()).unwrap();
        assert!(s.beta[1] > 0.0);
        for i in 0..2 {
            let a = z.row(i).dot(&s.beta);
            assert_eq!(sigmoid(a) >= 0.5, y[i] == 1.0);
        }
        assert!(s.final_objective <= nll(&p, Array1::zeros(2).view()));
    }

    #[test]
    fn full_shrinkage_zeroes_slopes() {
        let z = array![[1.0, 0.1, 0.9], [1.0, 0.8, 0.2], [1.0, 0.5, 0.5], [1.0, 0.0, 1.0]];
        let y = array![1.0, 0.0, 1.0, 1.0];
        let p = GlmProblem::new(z.view(), y.view())
            .unwrap()
            .scaled(true)
            .with_l1(1e3)
            .unwrap();
        let s = solve_l1(&p, &SolverConfig::default()).unwrap();
        assert_eq!(s.beta[1], 0.0);
        assert_eq!(s.beta[2], 0.0);
        // intercept is free and moves to the base rate
        assert!(s.beta[0] > 0.5);
    }

    #[test]
    fn penalized_intercept_flag_honoured() {
        let z = array![[1.0, 0.1], [1.0, 0.8], [1.0, 0.5]];
        let y = array![1.0, 1.0, 1.0];
        let p = GlmProblem::new(z.view(), y.view())
            .unwrap()
            .scaled(true)
            .with_l1(1e3)
            .unwrap()
            .penalizing_intercept(true);
        let s = solve_l1(&p, &SolverConfig::default()).unwrap();
        assert_eq!(s.beta.to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn vanishing_penalty_matches_smooth() {
        // opposite-label duplicates keep the optimum finite
        let z = array![
            [1.0, 0.1, 0.9],
            [1.0, 0.8, 0.2],
            [1.0, 0.5, 0.5],
            [1.0, 0.5, 0.5],
            [1.0, 0.3, 0.3],
            [1.0, 0.3, 0.3],
            [1.0, 0.9, 0.6],
            [1.0, 0.2, 0.7],
            [1.0, 0.2, 0.7]
        ];
        let y = array![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let cfg = SolverConfig {
            max_iters: 50_000,
            grad_tol: 1e-12,
            ..Default::default()
        };
        let p = GlmProblem::new(z.view(), y.view()).unwrap().scaled(true);
        let smooth = solve_smooth(&p, &cfg).unwrap();
        let fista = solve_l1(&p, &cfg).unwrap();
        assert!(
            (smooth.final_objective - fista.final_objective).abs() < 1e-6,
            "{smooth:?} {fista:?}"
        );
    }

    #[test]
    fn bad_config_rejected() {
        let z = array![[1.0]];
        let y = array![1.0];
        let p = GlmProblem::new(z.view(), y.view()).unwrap();
        let cfg = SolverConfig {
            backtrack_factor: 1.0,
            ..Default::default()
        };
        assert!(solve_smooth(&p, &cfg).is_err());
        assert!(solve_smooth(&p.with_l1(0.1).unwrap(), &SolverConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn nll_matches_naive_sum((z, y, b) in problem_strategy(), scaled: bool) {
            let p = GlmProblem::new(z.view(), y.view()).unwrap().scaled(scaled);
            let got = nll(&p, b.view());
            let want = naive_nll(&z, &y, &b, scaled);
            prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1e-300));
        }

        #[test]
        fn gradient_matches_central_differences((z, y, b) in problem_strategy(), scaled: bool) {
            let p = GlmProblem::new(z.view(), y.view()).unwrap().scaled(scaled);
            let g = nll_gradient(&p, b.view());
            let h = 1e-6;
            for j in 0..b.len() {
                let mut bp = b.clone();
                bp[j] += h;
                let mut bm = b.clone();
                bm[j] -= h;
                let fd = (nll(&p, bp.view()) - nll(&p, bm.view())) / (2.0 * h);
                let tol = 1e-5 * g[j].abs().max(1.0);
                prop_assert!((fd - g[j]).abs() <= tol, "component {}: fd {} vs {}", j, fd, g[j]);
            }
        }

        #[test]
        fn soft_threshold_is_the_prox(v in -5.0f64..5.0, t in 0.0f64..3.0) {
            let s = soft_threshold(v, t);
            let obj = |u: f64| 0.5 * (u - v).powi(2) + t * u.abs();
            let best = obj(s);
            for k in -2000..=2000 {
                let u = k as f64 * 0.004;
                prop_assert!(best <= obj(u) + 1e-12);
            }
        }

        #[test]
        fn fista_never_worse_than_start((z, y, _b) in problem_strategy(), lam in 0.0f64..0.5) {
            let p = GlmProblem::new(z.view(), y.view()).unwrap().scaled(true).with_l1(lam).unwrap();
            let s = solve_l1(&p, &SolverConfig::default()).unwrap();
            prop_assert!(s.final_objective <= p.composite(Array1::zeros(p.n_params()).view()));
        }

        #[test]
        fn gradient_descent_never_worse_than_start((z, y, _b) in problem_strategy()) {
            let p = GlmProblem::new(z.view(), y.view()).unwrap();
            let s = solve_smooth(&p, &SolverConfig::default()).unwrap();
            prop_assert!(s.final_objective <= nll(&p, Array1::zeros(p.n_params()).view()));
        }
    }
}
