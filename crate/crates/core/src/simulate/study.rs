//! Monte Carlo comparison of estimators over simulated replicates.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use log::debug;
use rayon::prelude::*;
use serde::Serialize;

use super::config::ScenarioConfig;
use super::dgp::{generate_replicate, Replicate};
use crate::error::{Error, Result};
use crate::estimators::{self, CausalEstimate};
use crate::inference::{self, DoubleEstimationConfig};
use crate::regularize::{self, CvConfig, CvTarget, RegularizationFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyMethod {
    Ivw,
    Reg,
    PostReg,
    MvAll,
    Oracle,
    TwoSampleA,
    TwoSampleB,
    ThreeSampleA,
    ThreeSampleB,
    DoubleEst,
}

impl StudyMethod {
    pub const ALL: [StudyMethod; 10] = [
        StudyMethod::Ivw,
        StudyMethod::Reg,
        StudyMethod::PostReg,
        StudyMethod::MvAll,
        StudyMethod::Oracle,
        StudyMethod::TwoSampleA,
        StudyMethod::TwoSampleB,
        StudyMethod::ThreeSampleA,
        StudyMethod::ThreeSampleB,
        StudyMethod::DoubleEst,
    ];

    /// The estimator comparison shown for point estimates.
    pub const ESTIMATION: [StudyMethod; 5] = [
        StudyMethod::Ivw,
        StudyMethod::Reg,
        StudyMethod::PostReg,
        StudyMethod::MvAll,
        StudyMethod::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyMethod::Ivw => "ivw",
            StudyMethod::Reg => "reg",
            StudyMethod::PostReg => "post_reg",
            StudyMethod::MvAll => "mv_all",
            StudyMethod::Oracle => "oracle",
            StudyMethod::TwoSampleA => "two_sample_a",
            StudyMethod::TwoSampleB => "two_sample_b",
            StudyMethod::ThreeSampleA => "three_sample_a",
            StudyMethod::ThreeSampleB => "three_sample_b",
            StudyMethod::DoubleEst => "double_est",
        }
    }

    /// Methods that are only available on some configurations.
    fn check(self, cfg: &ScenarioConfig) -> Result<()> {
        match self {
            StudyMethod::MvAll if cfg.p < cfg.k + 2 => Err(Error::InvalidArgument(format!(
                "mv_all needs p >= k + 2, got p = {} and k = {}",
                cfg.p, cfg.k
            ))),
            StudyMethod::ThreeSampleA | StudyMethod::ThreeSampleB if cfg.n_datasets != 3 => {
                Err(Error::InvalidArgument(format!(
                    "{} needs n_datasets = 3",
                    self.name()
                )))
            }
            StudyMethod::Oracle if cfg.p < cfg.n_pleiotropic + 2 => {
                Err(Error::InvalidArgument(format!(
                    "oracle needs p >= n_pleiotropic + 2, got p = {} and {} pleiotropic",
                    cfg.p, cfg.n_pleiotropic
                )))
            }
            StudyMethod::Reg
            | StudyMethod::PostReg
            | StudyMethod::TwoSampleA
            | StudyMethod::TwoSampleB
            | StudyMethod::ThreeSampleA
            | StudyMethod::ThreeSampleB
            | StudyMethod::DoubleEst
                if cfg.k == 0 =>
            {
                Err(Error::InvalidArgument(format!(
                    "{} needs at least one covariate",
                    self.name()
                )))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for StudyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StudyMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().replace('-', "_");
        StudyMethod::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// Aggregates for one method. Statistics that need a standard error are
/// `None` for estimators without one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: StudyMethod,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub mean_se: Option<f64>,
    pub coverage: Option<f64>,
    pub power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub scenario: ScenarioConfig,
    pub cv: CvConfig,
    pub n_reps: usize,
    pub rows: Vec<MethodSummary>,
}

impl SimulationReport {
    pub fn row(&self, method: StudyMethod) -> Option<&MethodSummary> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Writes `method,n_ok,n_failed,mean,sd,mean_se,coverage,power`, with
    /// `NA` for unavailable statistics.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "method,n_ok,n_failed,mean,sd,mean_se,coverage,power")?;
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.method,
                r.n_ok,
                r.n_failed,
                fmt(r.mean),
                fmt(r.sd),
                fmt(r.mean_se),
                fmt(r.coverage),
                fmt(r.power)
            )?;
        }
        Ok(())
    }
}

/// Called once per replicate with the mean-squared-error fit of the
/// analysis data, when one was computed.
pub type FitObserver<'a> = dyn Fn(u64, &Replicate, &RegularizationFit) + Sync + 'a;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold seed for a replicate, so fold splits differ between replicates.
pub fn replicate_cv_seed(base: u64, rep: u64) -> u64 {
    splitmix64(base ^ splitmix64(rep))
}

type Outcome = Result<CausalEstimate>;

/// Every requested estimate for replicate `rep`, in the order of `methods`.
pub fn run_replicate(
    cfg: &ScenarioConfig,
    methods: &[StudyMethod],
    cv: &CvConfig,
    rep: u64,
    observer: Option<&FitObserver<'_>>,
) -> Result<Vec<Outcome>> {
    let r = generate_replicate(cfg, rep)?;
    let d = &r.analysis;
    let seed = replicate_cv_seed(cv.rng_seed, rep);
    let with_target = |target| CvConfig {
        target,
        rng_seed: seed,
        ..cv.clone()
    };
    let needs = |ms: &[StudyMethod]| methods.iter().any(|m| ms.contains(m));

    let mse_fit = needs(&[StudyMethod::Reg, StudyMethod::PostReg, StudyMethod::TwoSampleA])
        .then(|| regularize::cross_validate(d, &with_target(CvTarget::Mse)));
    if let (Some(obs), Some(Ok(fit))) = (observer, &mse_fit) {
        obs(rep, &r, fit);
    }
    let projected_fit = needs(&[StudyMethod::TwoSampleB])
        .then(|| regularize::cross_validate(d, &with_target(CvTarget::Projected)));
    let selection_fit = |target| -> Result<RegularizationFit> {
        let s = r
            .selection
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("no selection dataset".into()))?;
        regularize::cross_validate(s, &with_target(target))
    };
    let shared = |f: &Option<Result<RegularizationFit>>| -> Result<RegularizationFit> {
        match f {
            Some(Ok(fit)) => Ok(fit.clone()),
            Some(Err(e)) => Err(Error::Degenerate(format!("selection failed: {e}"))),
            None => unreachable!("fit computed for every method that uses it"),
        }
    };

    let outcomes = methods
        .iter()
        .map(|m| -> Outcome {
            match m {
                StudyMethod::Ivw => estimators::ivw(d),
                StudyMethod::MvAll => estimators::mv_ivw(d),
                StudyMethod::Oracle => {
                    Ok(inference::oracle_ci(d, &r.truth.pleiotropic_names())?.estimate)
                }
                StudyMethod::Reg => regularize::regularized_estimate(&shared(&mse_fit)?),
                StudyMethod::PostReg => regularize::post_regularization(d, &shared(&mse_fit)?),
                StudyMethod::TwoSampleA => {
                    Ok(inference::two_sample_from_fit(d, shared(&mse_fit)?)?.estimate)
                }
                StudyMethod::TwoSampleB => {
                    Ok(inference::two_sample_from_fit(d, shared(&projected_fit)?)?.estimate)
                }
                StudyMethod::ThreeSampleA => Ok(inference::three_sample_from_fit(
                    d,
                    selection_fit(CvTarget::Mse)?,
                )?
                .estimate),
                StudyMethod::ThreeSampleB => Ok(inference::three_sample_from_fit(
                    d,
                    selection_fit(CvTarget::Projected)?,
                )?
                .estimate),
                StudyMethod::DoubleEst => {
                    let de = DoubleEstimationConfig::from(with_target(CvTarget::Mse));
                    Ok(inference::double_estimation_ci(d, &de)?.estimate)
                }
            }
        })
        .collect();
    Ok(outcomes)
}

fn summarize(method: StudyMethod, outcomes: &[&Outcome], theta: f64) -> MethodSummary {
    let ok: Vec<&CausalEstimate> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let n = ok.len();
    let mean = (n > 0).then(|| ok.iter().map(|e| e.theta_hat).sum::<f64>() / n as f64);
    let sd = mean.filter(|_| n > 1).map(|m| {
        let ss: f64 = ok.iter().map(|e| (e.theta_hat - m).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    let with_ci: Vec<&CausalEstimate> = ok
        .iter()
        .copied()
        .filter(|e| e.se_theta.is_some() && e.ci.is_some())
        .collect();
    let (mean_se, coverage, power) = if with_ci.is_empty() || with_ci.len() < n {
        (None, None, None)
    } else {
        let m = with_ci.len() as f64;
        let frac = |pred: &dyn Fn(&CausalEstimate) -> bool| {
            with_ci.iter().filter(|e| pred(e)).count() as f64 / m
        };
        (
            Some(with_ci.iter().map(|e| e.se_theta.unwrap()).sum::<f64>() / m),
            Some(frac(&|e| e.ci.unwrap().contains(theta))),
            Some(frac(&|e| e.rejects_null() == Some(true))),
        )
    };
    MethodSummary {
        method,
        n_ok: n,
        n_failed: outcomes.len() - n,
        mean,
        sd,
        mean_se,
        coverage,
        power,
    }
}

pub fn run_study(
    cfg: &ScenarioConfig,
    methods: &[StudyMethod],
    n_reps: usize,
    cv: &CvConfig,
) -> Result<SimulationReport> {
    run_study_observed(cfg, methods, n_reps, cv, None)
}

/// [`run_study`] calling `observer` on each replicate's cross-validated
/// fit. Replicates run in parallel on the current rayon pool; results are
/// aggregated in replicate order, so reports do not depend on the number
/// of threads.
pub fn run_study_observed(
    cfg: &ScenarioConfig,
    methods: &[StudyMethod],
    n_reps: usize,
    cv: &CvConfig,
    observer: Option<&FitObserver<'_>>,
) -> Result<SimulationReport> {
    cfg.validate()?;
    if n_reps == 0 {
        return Err(Error::InvalidArgument("number of replicates must be positive".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    for (i, m) in methods.iter().enumerate() {
        if methods[..i].contains(m) {
            return Err(Error::InvalidArgument(format!("method {m} listed twice")));
        }
        m.check(cfg)?;
    }

    let per_rep: Vec<Vec<Outcome>> = (0..n_reps as u64)
        .into_par_iter()
        .map(|rep| {
            let out = run_replicate(cfg, methods, cv, rep, observer)?;
            for (m, o) in methods.iter().zip(&out) {
                if let Err(e) = o {
                    debug!("replicate {rep}: {m} failed: {e}");
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let rows = methods
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let column: Vec<&Outcome> = per_rep.iter().map(|r| &r[i]).collect();
            summarize(*m, &column, cfg.theta)
        })
        .collect();
    Ok(SimulationReport {
        scenario: cfg.clone(),
        cv: cv.clone(),
        n_reps,
        rows,
    })
}
