//! Partially penalized multivariable IVW.
//!
//! The objective
//!
//! ```text
//! 1/2 (by - theta bx - bw delta)' S (by - theta bx - bw delta) + lambda sum_i |delta_i|
//! ```
//!
//! leaves `theta` unpenalized. Profiling `theta` out turns it into a plain
//! Lasso on the part of `S^{1/2} by` and `S^{1/2} bw` orthogonal to
//! `b = S^{1/2} bx` (step 1), after which `theta` has a closed form given
//! `delta` (step 2).

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::SummaryDataset;
use crate::error::{Error, Result};
use crate::estimators::{self, CausalEstimate, MethodTag};
use crate::lasso::{self, LassoProblem, SolverOptions};

/// Residual-maker `v -> v - b (b'b)^{-1} b'v` for `b = S^{1/2} bx`.
#[derive(Debug, Clone)]
pub struct ProjectionComplement {
    b: DVector<f64>,
    bb: f64,
}

impl ProjectionComplement {
    pub fn new(b: DVector<f64>) -> Result<Self> {
        let bb = b.norm_squared();
        if !(bb > 0.0) {
            return Err(Error::Degenerate(
                "all variant-exposure associations are zero".into(),
            ));
        }
        Ok(ProjectionComplement { b, bb })
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let c = self.b.dot(v) / self.bb;
        v - &self.b * c
    }

    pub fn apply_columns(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for j in 0..m.ncols() {
            let c = self.b.dot(&m.column(j)) / self.bb;
            out.column_mut(j).axpy(-c, &self.b, 1.0);
        }
        out
    }
}

pub fn projection_complement(d: &SummaryDataset) -> Result<ProjectionComplement> {
    ProjectionComplement::new(d.beta_x().component_mul(&d.weights().sqrt()))
}

/// Step-1 Lasso for a dataset: response `P S^{1/2} by`, design
/// `P S^{1/2} bw`.
pub fn step_one_problem(d: &SummaryDataset, standardize: bool) -> Result<LassoProblem> {
    let proj = projection_complement(d)?;
    let sw = d.weights().sqrt();
    let y = proj.apply(&d.beta_y().component_mul(&sw));
    let mut x = d.beta_w().clone();
    for (i, s) in sw.iter().enumerate() {
        x.row_mut(i).scale_mut(*s);
    }
    Ok(LassoProblem::new(proj.apply_columns(&x), y, standardize))
}

/// Step 2: `theta = (by - bw delta)' S bx / (bx' S bx)`.
pub fn profile_theta(d: &SummaryDataset, delta: &[f64]) -> Result<f64> {
    let w = d.weights();
    let resid = d.beta_y() - d.beta_w() * DVector::from_column_slice(delta);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..d.n_variants() {
        let wx = w.as_slice()[i] * d.beta_x()[i];
        num += resid[i] * wx;
        den += wx * d.beta_x()[i];
    }
    if !(den > 0.0) {
        return Err(Error::Degenerate(
            "all variant-exposure associations are zero".into(),
        ));
    }
    Ok(num / den)
}

/// The penalized objective at `(theta, delta)`, with per-covariate penalty
/// factors (all one for the plain L1 penalty).
pub fn penalized_objective(
    d: &SummaryDataset,
    lambda: f64,
    theta: f64,
    delta: &[f64],
    penalty_factors: &[f64],
) -> f64 {
    let w = d.weights();
    let resid = d.beta_y() - d.beta_x() * theta - d.beta_w() * DVector::from_column_slice(delta);
    let loss: f64 = resid
        .iter()
        .zip(w.as_slice())
        .map(|(r, w)| w * r * r)
        .sum();
    let pen: f64 = delta
        .iter()
        .zip(penalty_factors)
        .map(|(d, c)| c * d.abs())
        .sum();
    0.5 * loss + lambda * pen
}

/// Per-covariate penalty factors implied by `standardize` for this dataset;
/// with them, [`penalized_objective`] is exactly what
/// [`solve_penalized`] minimizes.
pub fn penalty_factors(d: &SummaryDataset, standardize: bool) -> Result<Vec<f64>> {
    let prob = step_one_problem(d, standardize)?;
    Ok(prob.standardize(&vec![1.0; d.n_covariates()]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PenalizedSolution {
    pub lambda: f64,
    pub theta: f64,
    pub delta: Vec<f64>,
}

impl PenalizedSolution {
    pub fn active(&self) -> Vec<usize> {
        self.delta
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

fn check_penalized_inputs(d: &SummaryDataset, lambda: f64) -> Result<()> {
    if d.n_variants() < 2 {
        return Err(Error::TooFewVariants {
            needed: 2,
            got: d.n_variants(),
            context: "penalized fit",
        });
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("penalty {lambda} must be finite and >= 0")));
    }
    if lambda == 0.0 && d.n_variants() < d.n_covariates() + 2 {
        return Err(Error::TooFewVariants {
            needed: d.n_covariates() + 2,
            got: d.n_variants(),
            context: "unpenalized fit needs p >= k + 2",
        });
    }
    Ok(())
}

/// Minimizes the partially penalized objective at one `lambda` through the
/// two-step reduction.
pub fn solve_penalized(
    d: &SummaryDataset,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<PenalizedSolution> {
    check_penalized_inputs(d, lambda)?;
    let prob = step_one_problem(d, opts.standardize)?;
    let mut beta = vec![0.0; d.n_covariates()];
    prob.solve(lambda, &mut beta, opts)?;
    let delta = prob.unstandardize(&beta);
    Ok(PenalizedSolution {
        lambda,
        theta: profile_theta(d, &delta)?,
        delta,
    })
}

/// Penalty path from the smallest all-zero penalty down by `min_ratio`.
pub fn lambda_path(
    d: &SummaryDataset,
    n_lambda: usize,
    min_ratio: f64,
    standardize: bool,
) -> Result<Vec<f64>> {
    if d.n_covariates() == 0 {
        return Err(Error::InvalidArgument("a penalty path needs at least one covariate".into()));
    }
    check_path_args(n_lambda, min_ratio)?;
    let lmax = step_one_problem(d, standardize)?.lambda_max();
    if !(lmax > 0.0) {
        return Err(Error::Degenerate(
            "outcome associations are orthogonal to every covariate".into(),
        ));
    }
    Ok(lasso::geometric_path(lmax, n_lambda, min_ratio))
}

fn check_path_args(n_lambda: usize, min_ratio: f64) -> Result<()> {
    if n_lambda < 2 {
        return Err(Error::InvalidArgument("n_lambda must be at least 2".into()));
    }
    if !(min_ratio > 0.0 && min_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda_min_ratio {min_ratio} must lie in (0, 1)"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CvTarget {
    /// Held-out weighted squared error of the full fitted model.
    Mse,
    /// Held-out step-1 loss, projected off the held-out exposure direction.
    Projected,
}

impl std::str::FromStr for CvTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(CvTarget::Mse),
            "projected" => Ok(CvTarget::Projected),
            other => Err(Error::InvalidArgument(format!("unknown CV target `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvConfig {
    pub n_folds: usize,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub target: CvTarget,
    pub n_repeats: usize,
    pub rng_seed: u64,
    pub solver: SolverOptions,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            n_folds: 10,
            n_lambda: 100,
            lambda_min_ratio: 1e-4,
            target: CvTarget::Mse,
            n_repeats: 1,
            rng_seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularizationFit {
    pub covariate_names: Vec<String>,
    /// Strictly decreasing penalties; the first gives an all-zero `delta`.
    pub lambdas: Vec<f64>,
    /// One row of covariate coefficients per penalty.
    pub delta_path: Vec<Vec<f64>>,
    pub theta_path: Vec<f64>,
    pub active_sets: Vec<Vec<String>>,
    pub cv_target: Option<CvTarget>,
    pub cv_curve: Option<Vec<f64>>,
    /// Penalty used for the final estimate, after the size cap.
    pub chosen_lambda: Option<f64>,
    /// Solution at the chosen penalty on all variants.
    pub chosen: Option<PenalizedSolution>,
    /// Whether the cap of `p - 2` selected covariates raised the penalty.
    pub capped: bool,
}

impl RegularizationFit {
    pub fn chosen_active_set(&self) -> Option<Vec<String>> {
        self.chosen.as_ref().map(|s| {
            s.active()
                .into_iter()
                .map(|j| self.covariate_names[j].clone())
                .collect()
        })
    }

    /// Writes `lambda,theta,delta_<name>...,n_active,cv_loss,chosen`, with
    /// numbers in shortest round-trip form.
    pub fn write_path_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["lambda".to_string(), "theta".to_string()];
        header.extend(self.covariate_names.iter().map(|n| format!("delta_{n}")));
        header.extend(["n_active", "cv_loss", "chosen"].map(String::from));
        w.write_record(&header)?;
        // nearest path value on the log scale; repeated CV can choose off-path
        let chosen_idx = self.chosen_lambda.map(|c| {
            let dist = |l: f64| (l.ln() - c.ln()).abs();
            (0..self.lambdas.len())
                .min_by(|&a, &b| dist(self.lambdas[a]).total_cmp(&dist(self.lambdas[b])))
                .unwrap_or(0)
        });
        for i in 0..self.lambdas.len() {
            let mut row = vec![format!("{:?}", self.lambdas[i]), format!("{:?}", self.theta_path[i])];
            row.extend(self.delta_path[i].iter().map(|v| format!("{v:?}")));
            row.push(self.active_sets[i].len().to_string());
            row.push(
                self.cv_curve
                    .as_ref()
                    .map(|c| format!("{:?}", c[i]))
                    .unwrap_or_default(),
            );
            row.push(if Some(i) == chosen_idx { "1" } else { "0" }.to_string());
            w.write_record(&row)?;
        }
        w.flush()
    }
}

/// Fits the whole penalty path on all variants, without cross-validation.
pub fn fit_path(
    d: &SummaryDataset,
    n_lambda: usize,
    min_ratio: f64,
    opts: &SolverOptions,
) -> Result<RegularizationFit> {
    let lambdas = lambda_path(d, n_lambda, min_ratio, opts.standardize)?;
    fit_on_path(d, lambdas, opts)
}

fn fit_on_path(d: &SummaryDataset, lambdas: Vec<f64>, opts: &SolverOptions) -> Result<RegularizationFit> {
    let prob = step_one_problem(d, opts.standardize)?;
    let betas = prob.solve_path(&lambdas, opts)?;
    let mut delta_path = Vec::with_capacity(lambdas.len());
    let mut theta_path = Vec::with_capacity(lambdas.len());
    let mut active_sets = Vec::with_capacity(lambdas.len());
    for beta in &betas {
        let delta = prob.unstandardize(beta);
        theta_path.push(profile_theta(d, &delta)?);
        active_sets.push(
            delta
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, _)| d.covariate_names()[j].clone())
                .collect(),
        );
        delta_path.push(delta);
    }
    Ok(RegularizationFit {
        covariate_names: d.covariate_names().to_vec(),
        lambdas,
        delta_path,
        theta_path,
        active_sets,
        cv_target: None,
        cv_curve: None,
        chosen_lambda: None,
        chosen: None,
        capped: false,
    })
}

/// Held-out loss of a fold fit under `target`.
fn fold_loss(
    test: &SummaryDataset,
    target: CvTarget,
    theta: f64,
    delta: &[f64],
) -> f64 {
    let w = test.weights();
    let m = test.n_variants() as f64;
    let resid = test.beta_y() - test.beta_w() * DVector::from_column_slice(delta);
    match target {
        CvTarget::Mse => {
            (0..test.n_variants())
                .map(|i| {
                    let r = resid[i] - theta * test.beta_x()[i];
                    w.as_slice()[i] * r * r
                })
                .sum::<f64>()
                / m
        }
        CvTarget::Projected => {
            let sw = w.sqrt();
            let v = resid.component_mul(&sw);
            let b = test.beta_x().component_mul(&sw);
            let bv = b.dot(&v);
            (v.norm_squared() - bv * bv / b.norm_squared()) / m
        }
    }
}

fn fold_is_scorable(test: &SummaryDataset, target: CvTarget) -> bool {
    match target {
        CvTarget::Mse => test.n_variants() >= 1,
        // a single held-out variant is annihilated by its own projection
        CvTarget::Projected => {
            test.n_variants() >= 2
                && test
                    .beta_x()
                    .iter()
                    .zip(test.weights().as_slice())
                    .any(|(b, w)| b * b * w > 0.0)
        }
    }
}

/// Chooses the penalty by K-fold cross-validation over variants and refits
/// on all variants at the chosen value.
pub fn cross_validate(d: &SummaryDataset, cfg: &CvConfig) -> Result<RegularizationFit> {
    let p = d.n_variants();
    if d.n_covariates() == 0 {
        return Err(Error::InvalidArgument(
            "cross-validation needs at least one covariate".into(),
        ));
    }
    if p < cfg.n_folds {
        return Err(Error::TooFewVariants {
            needed: cfg.n_folds,
            got: p,
            context: "one variant per fold",
        });
    }
    let opts = cfg.solver;
    let mut fit = fit_path(d, cfg.n_lambda, cfg.lambda_min_ratio, &opts)?;

    let outcome = lasso::cross_validate_path(
        p,
        &fit.lambdas,
        cfg.n_folds,
        cfg.n_repeats,
        cfg.rng_seed,
        |train, test, lambdas| {
            let test_d = d.subset_variants(test)?;
            if !fold_is_scorable(&test_d, cfg.target) {
                return Ok(None);
            }
            let train_d = d.subset_variants(train)?;
            let prob = match step_one_problem(&train_d, opts.standardize) {
                Ok(prob) => prob,
                Err(Error::Degenerate(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let betas = prob.solve_path(lambdas, &opts)?;
            let mut losses = Vec::with_capacity(lambdas.len());
            for beta in &betas {
                let delta = prob.unstandardize(beta);
                let theta = profile_theta(&train_d, &delta)?;
                losses.push(fold_loss(&test_d, cfg.target, theta, &delta));
            }
            Ok(Some(losses))
        },
    )?;

    let mut chosen_lambda = outcome.chosen_lambda;
    let mut chosen = match fit
        .lambdas
        .iter()
        .position(|l| *l == chosen_lambda)
    {
        Some(i) => PenalizedSolution {
            lambda: chosen_lambda,
            theta: fit.theta_path[i],
            delta: fit.delta_path[i].clone(),
        },
        None => solve_penalized(d, chosen_lambda, &opts)?,
    };

    let cap = p.saturating_sub(2);
    let mut capped = false;
    if chosen.active().len() > cap {
        // smallest path penalty at or above the chosen one that fits the cap
        let i = (0..fit.lambdas.len())
            .rev()
            .find(|&i| fit.lambdas[i] >= chosen_lambda && fit.active_sets[i].len() <= cap)
            .unwrap_or(0);
        chosen_lambda = fit.lambdas[i];
        chosen = PenalizedSolution {
            lambda: chosen_lambda,
            theta: fit.theta_path[i],
            delta: fit.delta_path[i].clone(),
        };
        capped = true;
    }

    fit.cv_target = Some(cfg.target);
    fit.cv_curve = Some(outcome.curve);
    fit.chosen_lambda = Some(chosen_lambda);
    fit.chosen = Some(chosen);
    fit.capped = capped;
    Ok(fit)
}

fn chosen_solution(fit: &RegularizationFit) -> Result<&PenalizedSolution> {
    fit.chosen
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("fit has no chosen penalty; run cross-validation".into()))
}

/// Multivariable IVW refit on the covariates selected at the chosen
/// penalty (plain IVW when none are selected).
pub fn post_regularization(d: &SummaryDataset, fit: &RegularizationFit) -> Result<CausalEstimate> {
    chosen_solution(fit)?;
    let selected = fit.chosen_active_set().unwrap_or_default();
    if selected.len() + 2 > d.n_variants() {
        return Err(Error::TooFewVariants {
            needed: selected.len() + 2,
            got: d.n_variants(),
            context: "post-regularization refit",
        });
    }
    let sub = d.subset_covariates(&selected)?;
    Ok(estimators::mv_ivw(&sub)?.with_method(MethodTag::PostRegularization))
}

/// The shrunken two-step estimate at the chosen penalty. Carries no
/// standard error.
pub fn regularized_estimate(fit: &RegularizationFit) -> Result<CausalEstimate> {
    let sol = chosen_solution(fit)?;
    Ok(CausalEstimate {
        theta_hat: sol.theta,
        delta_hat: sol.delta.clone(),
        se_theta: None,
        ci: None,
        dispersion: 1.0,
        covariates_used: fit.chosen_active_set().unwrap_or_default(),
        method: MethodTag::Regularized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(seed: u64, p: usize, k: usize) -> SummaryDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bx = DVector::from_fn(p, |_, _| rng.random_range(0.1..0.3));
        let bw = DMatrix::from_fn(p, k, |_, _| rng.random_range(-0.2..0.4));
        let by = DVector::from_fn(p, |i, _| {
            0.2 * bx[i] + if k > 0 { 0.3 * bw[(i, 0)] } else { 0.0 } + rng.random_range(-0.02..0.02)
        });
        let se = DVector::from_fn(p, |_, _| rng.random_range(0.01..0.03));
        SummaryDataset::from_parts(bx, bw, by, se).unwrap()
    }

    #[test]
    fn projection_properties() {
        let d = random_dataset(1, 8, 2);
        let proj = projection_complement(&d).unwrap();
        let b = d.beta_x().component_mul(&d.weights().sqrt());
        assert!(proj.apply(&b).amax() <= 1e-12 * b.amax());
        let v = DVector::from_fn(8, |i, _| (i as f64).sin());
        let once = proj.apply(&v);
        let twice = proj.apply(&once);
        assert!((once.clone() - twice).amax() <= 1e-12);
        assert!((proj.apply(&once) - &once).amax() <= 1e-12);
    }

    #[test]
    fn degenerate_exposure() {
        let d = SummaryDataset::from_parts(
            DVector::zeros(3),
            DMatrix::from_element(3, 1, 0.1),
            DVector::from_element(3, 0.1),
            DVector::from_element(3, 0.1),
        )
        .unwrap();
        assert!(matches!(projection_complement(&d), Err(Error::Degenerate(_))));
    }

    #[test]
    fn large_penalty_gives_ivw() {
        let d = random_dataset(2, 10, 4);
        let path = lambda_path(&d, 10, 1e-3, true).unwrap();
        let sol = solve_penalized(&d, path[0], &SolverOptions::default()).unwrap();
        assert!(sol.delta.iter().all(|v| *v == 0.0));
        let ivw = estimators::ivw(&d).unwrap();
        assert_abs_diff_eq!(sol.theta, ivw.theta_hat, epsilon = 1e-14);
        let more = solve_penalized(&d, 2.0 * path[0], &SolverOptions::default()).unwrap();
        assert!(more.delta.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_penalty_gives_mv_ivw() {
        let d = random_dataset(3, 12, 3);
        for standardize in [true, false] {
            let opts = SolverOptions {
                standardize,
                ..Default::default()
            };
            let sol = solve_penalized(&d, 0.0, &opts).unwrap();
            let mv = estimators::mv_ivw(&d).unwrap();
            assert_abs_diff_eq!(sol.theta, mv.theta_hat, epsilon = 1e-8);
            for j in 0..3 {
                assert_abs_diff_eq!(sol.delta[j], mv.delta_hat[j], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn zero_penalty_needs_spare_variants() {
        let d = random_dataset(4, 4, 3);
        assert!(solve_penalized(&d, 0.0, &SolverOptions::default()).is_err());
        assert!(solve_penalized(&d, 0.1, &SolverOptions::default()).is_ok());
        assert!(solve_penalized(&d, -1.0, &SolverOptions::default()).is_err());
    }

    #[test]
    fn path_requires_covariates() {
        let d = random_dataset(5, 6, 0);
        assert!(lambda_path(&d, 100, 1e-4, true).is_err());
    }

    #[test]
    fn path_first_row_is_zero() {
        let d = random_dataset(6, 10, 8);
        let fit = fit_path(&d, 100, 1e-4, &SolverOptions::default()).unwrap();
        assert_eq!(fit.lambdas.len(), 100);
        assert!(fit.delta_path[0].iter().all(|v| *v == 0.0));
        assert!(fit.active_sets[0].is_empty());
        assert!(fit.lambdas.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn cross_validation_is_deterministic() {
        let d = random_dataset(7, 20, 5);
        let cfg = CvConfig {
            rng_seed: 11,
            ..Default::default()
        };
        let a = cross_validate(&d, &cfg).unwrap();
        let b = cross_validate(&d, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.chosen_active_set().unwrap().len() <= 18);
    }

    #[test]
    fn post_regularization_reductions() {
        let d = random_dataset(8, 20, 3);
        let mut fit = fit_path(&d, 20, 1e-3, &SolverOptions::default()).unwrap();
        let last = fit.lambdas.len() - 1;
        fit.chosen = Some(PenalizedSolution {
            lambda: fit.lambdas[0],
            theta: fit.theta_path[0],
            delta: fit.delta_path[0].clone(),
        });
        fit.chosen_lambda = Some(fit.lambdas[0]);
        let post = post_regularization(&d, &fit).unwrap();
        let ivw = estimators::ivw(&d).unwrap();
        assert_abs_diff_eq!(post.theta_hat, ivw.theta_hat, epsilon = 1e-14);
        let reg = regularized_estimate(&fit).unwrap();
        assert_abs_diff_eq!(reg.theta_hat, ivw.theta_hat, epsilon = 1e-14);
        assert!(reg.se_theta.is_none());

        fit.chosen = Some(PenalizedSolution {
            lambda: fit.lambdas[last],
            theta: fit.theta_path[last],
            delta: fit.delta_path[last].clone(),
        });
        if fit.active_sets[last].len() == 3 {
            let post = post_regularization(&d, &fit).unwrap();
            let mv = estimators::mv_ivw(&d).unwrap();
            assert_abs_diff_eq!(post.theta_hat, mv.theta_hat, epsilon = 1e-12);
        }
    }

    #[test]
    fn path_csv_layout() {
        let d = random_dataset(9, 15, 2);
        let fit = cross_validate(&d, &CvConfig::default()).unwrap();
        let mut buf = Vec::new();
        fit.write_path_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "lambda,theta,delta_w1,delta_w2,n_active,cv_loss,chosen");
        assert_eq!(lines.len(), 101);
        assert_eq!(lines.iter().filter(|l| l.ends_with(",1")).count(), 1);
    }
}
