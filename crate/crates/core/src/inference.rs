//! Confidence intervals after covariate selection.
//!
//! Every procedure picks a covariate set and then reports the multivariable
//! IVW fit on that set. They differ in where the selection comes from:
//! the analysis data itself (two-sample), an independent selection dataset
//! (three-sample), or the union of two plain Lasso screens (double
//! estimation).

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::SummaryDataset;
use crate::error::{Error, Result};
use crate::estimators::{self, CausalEstimate, MethodTag};
use crate::lasso::{self, LassoProblem};
use crate::regularize::{self, CvConfig, CvTarget, RegularizationFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMethod {
    TwoSampleA,
    TwoSampleB,
    ThreeSampleA,
    ThreeSampleB,
    DoubleEstimation,
    Oracle,
    MvAll,
    Ivw,
}

impl InferenceMethod {
    fn tag(self) -> MethodTag {
        match self {
            InferenceMethod::TwoSampleA => MethodTag::TwoSampleA,
            InferenceMethod::TwoSampleB => MethodTag::TwoSampleB,
            InferenceMethod::ThreeSampleA => MethodTag::ThreeSampleA,
            InferenceMethod::ThreeSampleB => MethodTag::ThreeSampleB,
            InferenceMethod::DoubleEstimation => MethodTag::DoubleEstimation,
            InferenceMethod::Oracle => MethodTag::Oracle,
            InferenceMethod::MvAll => MethodTag::MvIvw,
            InferenceMethod::Ivw => MethodTag::Ivw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceResult {
    pub estimate: CausalEstimate,
    pub selection_set: Vec<String>,
    pub method: InferenceMethod,
    /// The selection fit, when a regularization path produced the set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<RegularizationFit>,
}

/// Multivariable IVW on `selected` (plain IVW when empty).
pub fn estimate_on_set<S: AsRef<str>>(
    d: &SummaryDataset,
    selected: &[S],
    method: InferenceMethod,
) -> Result<InferenceResult> {
    let sub = d.subset_covariates(selected)?;
    if sub.n_variants() < sub.n_covariates() + 2 {
        return Err(Error::TooFewVariants {
            needed: sub.n_covariates() + 2,
            got: sub.n_variants(),
            context: "multivariable IVW needs p >= k + 2",
        });
    }
    let estimate = estimators::mv_ivw(&sub)?.with_method(method.tag());
    Ok(InferenceResult {
        selection_set: estimate.covariates_used.clone(),
        estimate,
        method,
        fit: None,
    })
}

fn two_sample_method(target: CvTarget) -> InferenceMethod {
    match target {
        CvTarget::Mse => InferenceMethod::TwoSampleA,
        CvTarget::Projected => InferenceMethod::TwoSampleB,
    }
}

fn three_sample_method(target: CvTarget) -> InferenceMethod {
    match target {
        CvTarget::Mse => InferenceMethod::ThreeSampleA,
        CvTarget::Projected => InferenceMethod::ThreeSampleB,
    }
}

/// Selection and estimation on the same data. Intervals ignore the
/// selection step and tend to under-cover.
pub fn two_sample_ci(d: &SummaryDataset, cfg: &CvConfig) -> Result<InferenceResult> {
    let fit = regularize::cross_validate(d, cfg)?;
    two_sample_from_fit(d, fit)
}

/// [`two_sample_ci`] reusing an existing cross-validated fit of `d`.
pub fn two_sample_from_fit(d: &SummaryDataset, fit: RegularizationFit) -> Result<InferenceResult> {
    let target = fit
        .cv_target
        .ok_or_else(|| Error::InvalidArgument("fit was not cross-validated".into()))?;
    let selected = fit.chosen_active_set().unwrap_or_default();
    let mut res = estimate_on_set(d, &selected, two_sample_method(target))?;
    res.fit = Some(fit);
    Ok(res)
}

fn check_same_universe(a: &SummaryDataset, b: &SummaryDataset) -> Result<()> {
    if a.variant_ids() != b.variant_ids() {
        return Err(Error::InvalidData(
            "selection and analysis datasets list different variants".into(),
        ));
    }
    if a.covariate_names() != b.covariate_names() {
        return Err(Error::InvalidData(
            "selection and analysis datasets list different covariates".into(),
        ));
    }
    Ok(())
}

/// Covariates selected on `d_select`, effect estimated on `d_analyze`.
/// The two datasets must come from independent samples.
pub fn three_sample_ci(
    d_select: &SummaryDataset,
    d_analyze: &SummaryDataset,
    cfg: &CvConfig,
) -> Result<InferenceResult> {
    check_same_universe(d_select, d_analyze)?;
    if d_select == d_analyze {
        warn!("selection and analysis datasets are identical; intervals are not selection-adjusted");
    }
    let fit = regularize::cross_validate(d_select, cfg)?;
    three_sample_from_fit(d_analyze, fit)
}

pub fn three_sample_from_fit(
    d_analyze: &SummaryDataset,
    fit: RegularizationFit,
) -> Result<InferenceResult> {
    let target = fit
        .cv_target
        .ok_or_else(|| Error::InvalidArgument("fit was not cross-validated".into()))?;
    let selected = fit.chosen_active_set().unwrap_or_default();
    let mut res = estimate_on_set(d_analyze, &selected, three_sample_method(target))?;
    res.fit = Some(fit);
    Ok(res)
}

/// Options for the two covariate screens of double estimation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoubleEstimationConfig {
    pub cv: CvConfig,
    /// Scale both regressions by `S^{1/2}`.
    pub weighted: bool,
}

impl From<CvConfig> for DoubleEstimationConfig {
    fn from(cv: CvConfig) -> Self {
        DoubleEstimationConfig { cv, weighted: true }
    }
}

/// A cross-validated plain Lasso screen of `response` on the covariates.
#[derive(Debug, Clone)]
struct Screen {
    active_sets: Vec<Vec<usize>>,
    chosen_index: usize,
}

fn screen(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    cfg: &CvConfig,
    seed: u64,
) -> Result<Screen> {
    let p = design.nrows();
    let prob = LassoProblem::new(design.clone(), response.clone(), cfg.solver.standardize);
    let lmax = prob.lambda_max();
    if !(lmax > 0.0) {
        // nothing correlates with the response: empty selection everywhere
        return Ok(Screen {
            active_sets: vec![Vec::new()],
            chosen_index: 0,
        });
    }
    let lambdas = lasso::geometric_path(lmax, cfg.n_lambda, cfg.lambda_min_ratio);
    let betas = prob.solve_path(&lambdas, &cfg.solver)?;
    let active_sets: Vec<Vec<usize>> = betas
        .iter()
        .map(|b| (0..b.len()).filter(|&j| b[j] != 0.0).collect())
        .collect();

    let outcome = lasso::cross_validate_path(
        p,
        &lambdas,
        cfg.n_folds,
        cfg.n_repeats,
        seed,
        |train, test, scaled| {
            let x_tr = design.select_rows(train);
            let y_tr = response.select_rows(train);
            let x_te = design.select_rows(test);
            let y_te = response.select_rows(test);
            let fold = LassoProblem::new(x_tr, y_tr, cfg.solver.standardize);
            let betas = fold.solve_path(scaled, &cfg.solver)?;
            Ok(Some(
                betas
                    .iter()
                    .map(|b| {
                        let coef = DVector::from_vec(fold.unstandardize(b));
                        (&y_te - &x_te * coef).norm_squared() / test.len() as f64
                    })
                    .collect(),
            ))
        },
    )?;
    // first path value at or below the chosen penalty
    let chosen_index = lambdas
        .iter()
        .position(|l| *l <= outcome.chosen_lambda * (1.0 + 1e-12))
        .unwrap_or(lambdas.len() - 1);
    Ok(Screen {
        active_sets,
        chosen_index,
    })
}

/// Union of the covariates selected by Lasso regressions of the exposure
/// associations and of the outcome associations on the covariate
/// associations, capped at `p - 2` by raising both penalties together.
pub fn double_estimation_ci(
    d: &SummaryDataset,
    cfg: &DoubleEstimationConfig,
) -> Result<InferenceResult> {
    let (p, k) = (d.n_variants(), d.n_covariates());
    if k == 0 {
        return Err(Error::InvalidArgument(
            "double estimation needs at least one covariate".into(),
        ));
    }
    if p < 3 {
        return Err(Error::TooFewVariants {
            needed: 3,
            got: p,
            context: "double estimation",
        });
    }
    let scale = if cfg.weighted {
        d.weights().sqrt()
    } else {
        DVector::from_element(p, 1.0)
    };
    let mut design = d.beta_w().clone();
    for (i, s) in scale.iter().enumerate() {
        design.row_mut(i).scale_mut(*s);
    }
    let on_x = screen(&design, &d.beta_x().component_mul(&scale), &cfg.cv, cfg.cv.rng_seed)?;
    let on_y = screen(
        &design,
        &d.beta_y().component_mul(&scale),
        &cfg.cv,
        cfg.cv.rng_seed.wrapping_add(1),
    )?;

    let cap = p - 2;
    let mut step = 0;
    let union = loop {
        let ia = on_x.chosen_index.saturating_sub(step);
        let ib = on_y.chosen_index.saturating_sub(step);
        let mut u: Vec<usize> = on_x.active_sets[ia]
            .iter()
            .chain(&on_y.active_sets[ib])
            .copied()
            .collect();
        u.sort_unstable();
        u.dedup();
        if u.len() <= cap || (ia == 0 && ib == 0) {
            break u;
        }
        step += 1;
    };
    if union.len() > cap {
        return Err(Error::TooFewVariants {
            needed: union.len() + 2,
            got: p,
            context: "double-estimation union",
        });
    }
    let names: Vec<String> = union.iter().map(|&j| d.covariate_names()[j].clone()).collect();
    estimate_on_set(d, &names, InferenceMethod::DoubleEstimation)
}

/// Multivariable IVW on the known pleiotropic set; a simulation benchmark.
pub fn oracle_ci<S: AsRef<str>>(d: &SummaryDataset, true_set: &[S]) -> Result<InferenceResult> {
    estimate_on_set(d, true_set, InferenceMethod::Oracle)
}
