//! Closed-form summary-data estimators: inverse-variance weighted (IVW),
//! multivariable IVW, and the covariate-balancing allele score, plus the
//! covariate-balance diagnostic.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{SummaryDataset, WeightVector};
use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959964;

/// Pivots of the triangular factor below this fraction of the largest one
/// are treated as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodTag {
    Ivw,
    MvIvw,
    Balancing,
    Regularized,
    PostRegularization,
    TwoSampleA,
    TwoSampleB,
    ThreeSampleA,
    ThreeSampleB,
    DoubleEstimation,
    Oracle,
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MethodTag::Ivw => "ivw",
            MethodTag::MvIvw => "mv_ivw",
            MethodTag::Balancing => "balancing",
            MethodTag::Regularized => "reg",
            MethodTag::PostRegularization => "post_reg",
            MethodTag::TwoSampleA => "two_sample_a",
            MethodTag::TwoSampleB => "two_sample_b",
            MethodTag::ThreeSampleA => "three_sample_a",
            MethodTag::ThreeSampleB => "three_sample_b",
            MethodTag::DoubleEstimation => "double_est",
            MethodTag::Oracle => "oracle",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn normal(center: f64, se: f64) -> Self {
        Interval {
            low: center - Z_95 * se,
            high: center + Z_95 * se,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.low <= value && value <= self.high
    }
}

/// A causal-effect estimate with its covariate coefficients.
///
/// `se_theta` and `ci` are `None` for estimators whose standard errors are
/// not valid (the shrunken regularized estimate); use a refit from
/// [`crate::inference`] for intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CausalEstimate {
    pub theta_hat: f64,
    pub delta_hat: Vec<f64>,
    pub se_theta: Option<f64>,
    pub ci: Option<Interval>,
    pub dispersion: f64,
    pub covariates_used: Vec<String>,
    pub method: MethodTag,
}

impl CausalEstimate {
    fn from_fit(fit: &WeightedFit, covariates_used: Vec<String>, method: MethodTag) -> Self {
        let theta_hat = fit.coefficients[0];
        let se = fit.covariance[(0, 0)].max(0.0).sqrt();
        CausalEstimate {
            theta_hat,
            delta_hat: fit.coefficients.iter().skip(1).copied().collect(),
            se_theta: Some(se),
            ci: Some(Interval::normal(theta_hat, se)),
            dispersion: fit.dispersion,
            covariates_used,
            method,
        }
    }

    pub(crate) fn with_method(mut self, method: MethodTag) -> Self {
        self.method = method;
        self
    }

    /// True when a confidence interval exists and excludes zero.
    pub fn rejects_null(&self) -> Option<bool> {
        self.ci.map(|ci| !ci.contains(0.0))
    }
}

/// Result of a weighted least-squares fit without intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedFit {
    pub coefficients: DVector<f64>,
    /// `dispersion * (X'WX)^{-1}`.
    pub covariance: DMatrix<f64>,
    /// Multiplicative over-dispersion, floored at 1.
    pub dispersion: f64,
    pub weighted_rss: f64,
}

/// Weighted least squares `(X'WX)^{-1} X'W y` with a random-effects
/// (multiplicative, floored at one) residual dispersion.
pub fn fit_weighted_regression(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    w: &WeightVector,
) -> Result<WeightedFit> {
    let (n, c) = x.shape();
    if y.len() != n || w.len() != n {
        return Err(Error::InvalidArgument(format!(
            "regression shapes disagree: y {}, X {n}x{c}, w {}",
            y.len(),
            w.len()
        )));
    }
    if c == 0 {
        return Err(Error::InvalidArgument("regression with no columns".into()));
    }
    if n <= c {
        return Err(Error::TooFewVariants {
            needed: c + 1,
            got: n,
            context: "weighted regression needs a residual degree of freedom",
        });
    }
    let sw = w.sqrt();
    let a = DMatrix::from_fn(n, c, |i, j| sw[i] * x[(i, j)]);
    let mut b = y.component_mul(&sw);

    let qr = a.clone().qr();
    let r = qr.r();
    let max_pivot = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_pivot == 0.0 || r.diagonal().iter().any(|v| v.abs() <= RANK_TOL * max_pivot) {
        return Err(Error::RankDeficient(format!(
            "{c} columns are not linearly independent under the weights"
        )));
    }
    qr.q_tr_mul(&mut b);
    let qtb = b.rows(0, c).into_owned();
    let coefficients = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(c, c))
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
    let unscaled = &r_inv * r_inv.transpose();

    let fitted = &a * &coefficients;
    let resid = y.component_mul(&sw) - fitted;
    let weighted_rss = resid.norm_squared();
    let dispersion = (weighted_rss / (n - c) as f64).max(1.0);

    Ok(WeightedFit {
        coefficients,
        covariance: unscaled * dispersion,
        dispersion,
        weighted_rss,
    })
}

fn exposure_information(d: &SummaryDataset) -> Result<f64> {
    let w = d.weights();
    let info: f64 = d
        .beta_x()
        .iter()
        .zip(w.as_slice())
        .map(|(b, w)| w * b * b)
        .sum();
    if !(info > 0.0) {
        return Err(Error::Degenerate(
            "all variant-exposure associations are zero".into(),
        ));
    }
    Ok(info)
}

/// Inverse-variance weighted estimate, ignoring every covariate.
pub fn ivw(d: &SummaryDataset) -> Result<CausalEstimate> {
    if d.n_variants() < 2 {
        return Err(Error::TooFewVariants {
            needed: 2,
            got: d.n_variants(),
            context: "IVW estimate",
        });
    }
    exposure_information(d)?;
    let x = DMatrix::from_column_slice(d.n_variants(), 1, d.beta_x().as_slice());
    let fit = fit_weighted_regression(d.beta_y(), &x, &d.weights())?;
    Ok(CausalEstimate::from_fit(&fit, Vec::new(), MethodTag::Ivw))
}

/// `[beta_x | beta_w]`.
pub(crate) fn joint_design(d: &SummaryDataset) -> DMatrix<f64> {
    let (p, k) = (d.n_variants(), d.n_covariates());
    let mut x = DMatrix::zeros(p, k + 1);
    x.set_column(0, d.beta_x());
    x.columns_mut(1, k).copy_from(d.beta_w());
    x
}

/// Multivariable IVW: weighted regression of the outcome associations on
/// the exposure and all covariate associations, no intercept.
pub fn mv_ivw(d: &SummaryDataset) -> Result<CausalEstimate> {
    let (p, k) = (d.n_variants(), d.n_covariates());
    if p < k + 2 {
        return Err(Error::TooFewVariants {
            needed: k + 2,
            got: p,
            context: "multivariable IVW needs p >= k + 2",
        });
    }
    if k == 0 {
        return Ok(ivw(d)?.with_method(MethodTag::MvIvw));
    }
    exposure_information(d)?;
    let fit = fit_weighted_regression(d.beta_y(), &joint_design(d), &d.weights())?;
    Ok(CausalEstimate::from_fit(
        &fit,
        d.covariate_names().to_vec(),
        MethodTag::MvIvw,
    ))
}

/// Allele-score weights maximizing covariance with the exposure subject to
/// zero covariance with every covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancingWeights {
    /// Normalized weights `xi / (xi' S xi)`.
    pub alpha: DVector<f64>,
    /// Exposure associations with the covariate directions removed.
    pub xi: DVector<f64>,
}

pub fn balancing_weights(d: &SummaryDataset) -> Result<BalancingWeights> {
    let (p, k) = (d.n_variants(), d.n_covariates());
    if p <= k {
        return Err(Error::TooFewVariants {
            needed: k + 1,
            got: p,
            context: "balancing weights need p > k",
        });
    }
    let w = d.weights();
    let xi = if k == 0 {
        d.beta_x().clone()
    } else {
        // residual of beta_x after S-weighted projection on beta_w
        let sw = w.sqrt();
        let a = DMatrix::from_fn(p, k, |i, j| sw[i] * d.beta_w()[(i, j)]);
        let qr = a.qr();
        let r = qr.r();
        let max_pivot = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max_pivot == 0.0 || r.diagonal().iter().any(|v| v.abs() <= RANK_TOL * max_pivot) {
            return Err(Error::RankDeficient(
                "covariate associations are collinear under the weights".into(),
            ));
        }
        let mut rhs = d.beta_x().component_mul(&sw);
        qr.q_tr_mul(&mut rhs);
        let coef = r
            .solve_upper_triangular(&rhs.rows(0, k).into_owned())
            .ok_or_else(|| Error::RankDeficient("singular covariate block".into()))?;
        d.beta_x() - d.beta_w() * coef
    };
    let norm: f64 = xi.iter().zip(w.as_slice()).map(|(x, w)| w * x * x).sum();
    if !(norm > 0.0) {
        return Err(Error::Degenerate(
            "exposure associations lie in the span of the covariate associations".into(),
        ));
    }
    Ok(BalancingWeights {
        alpha: &xi / norm,
        xi,
    })
}

/// Ratio estimate using the balancing allele score; numerically the
/// multivariable IVW estimate, whose standard error it reports.
pub fn balancing_estimate(d: &SummaryDataset) -> Result<CausalEstimate> {
    let bw = balancing_weights(d)?;
    let w = d.weights();
    let dot = |v: &DVector<f64>| -> f64 {
        bw.alpha
            .iter()
            .zip(w.as_slice())
            .zip(v.iter())
            .map(|((a, w), v)| a * w * v)
            .sum()
    };
    let denom = dot(d.beta_x());
    if denom == 0.0 {
        return Err(Error::Degenerate("allele score is uncorrelated with the exposure".into()));
    }
    let theta_hat = dot(d.beta_y()) / denom;
    let reference = mv_ivw(d)?;
    Ok(CausalEstimate {
        theta_hat,
        se_theta: reference.se_theta,
        ci: reference.se_theta.map(|se| Interval::normal(theta_hat, se)),
        method: MethodTag::Balancing,
        ..reference
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceDiagnostic {
    /// `exposure` followed by the covariate names.
    pub trait_names: Vec<String>,
    pub correlations: Vec<f64>,
}

/// Trait label used for the exposure row of a [`BalanceDiagnostic`].
pub const EXPOSURE_LABEL: &str = "exposure";

/// Correlations of the exposure and covariate associations with the outcome
/// residuals left after adjusting for `covariates_in_model`.
///
/// Residuals come from a no-intercept regression, so correlations are
/// uncentered (cosine) correlations; a covariate in the model is then
/// exactly orthogonal to the residuals. With `weighted` all vectors are
/// scaled by `S^{1/2}` and the regression is weighted; otherwise the raw
/// associations and an unweighted regression are used.
pub fn balance_diagnostic<S: AsRef<str>>(
    d: &SummaryDataset,
    covariates_in_model: &[S],
    weighted: bool,
) -> Result<BalanceDiagnostic> {
    let idx = d.covariate_indices(covariates_in_model)?;
    let p = d.n_variants();
    let scale = if weighted {
        d.weights().sqrt()
    } else {
        DVector::from_element(p, 1.0)
    };
    let y = d.beta_y().component_mul(&scale);
    let resid = if idx.is_empty() {
        y
    } else {
        if idx.len() >= p {
            return Err(Error::TooFewVariants {
                needed: idx.len() + 1,
                got: p,
                context: "balance diagnostic regression",
            });
        }
        let a = DMatrix::from_fn(p, idx.len(), |i, j| scale[i] * d.beta_w()[(i, idx[j])]);
        let fit = fit_weighted_regression(&y, &a, &WeightVector::ones(p))?;
        &y - &a * fit.coefficients
    };

    let mut trait_names = vec![EXPOSURE_LABEL.to_string()];
    trait_names.extend(d.covariate_names().iter().cloned());
    let mut correlations = vec![cosine(&d.beta_x().component_mul(&scale), &resid)];
    for j in 0..d.n_covariates() {
        let col = d.beta_w().column(j).component_mul(&scale);
        correlations.push(cosine(&col, &resid));
    }
    Ok(BalanceDiagnostic {
        trait_names,
        correlations,
    })
}

fn cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        0.0
    } else {
        (a.dot(b) / denom).clamp(-1.0, 1.0)
    }
}
