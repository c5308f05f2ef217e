//! Individual-level data generation and reduction to summary statistics.
//!
//! Each sample of `n` individuals follows
//!
//! ```text
//! X  = G bx + gx U + eX
//! Wj = G bwj + gw U + eWj
//! Y  = theta X + W delta + gy U + eY
//! ```
//!
//! with `G_ij ~ Binomial(2, maf)` and independent standard normal `U` and
//! noise terms. Summary statistics are per-variant simple regressions with
//! an intercept.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{ScenarioConfig, SparsityRegime};
use crate::data::SummaryDataset;
use crate::error::{Error, Result};

/// Stream reserved for parameters shared by all replicates.
const FROZEN_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct TrueParameters {
    pub beta_x: DVector<f64>,
    pub beta_w: DMatrix<f64>,
    pub delta: DVector<f64>,
    /// Indices of the covariates that open a pleiotropic pathway.
    pub pleiotropic: Vec<usize>,
}

impl TrueParameters {
    pub fn pleiotropic_names(&self) -> Vec<String> {
        self.pleiotropic.iter().map(|j| covariate_name(*j)).collect()
    }
}

pub fn covariate_name(j: usize) -> String {
    format!("w{}", j + 1)
}

fn variant_ids(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("snp{i}")).collect()
}

/// Generator for replicate `rep`: one ChaCha stream per replicate, so a
/// replicate's draws do not depend on which others were run before it.
pub fn replicate_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn draw_parameters(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> TrueParameters {
    let (p, k) = (cfg.p, cfg.k);
    let beta_x = DVector::from_fn(p, |_, _| uniform(rng, cfg.beta_x_range));
    let mut beta_w = DMatrix::from_fn(p, k, |_, _| uniform(rng, cfg.beta_w_range));
    let pleiotropic: Vec<usize> = (0..cfg.n_pleiotropic).collect();
    let delta = match cfg.sparsity_regime {
        SparsityRegime::OutcomeEffects => DVector::from_fn(k, |j, _| {
            if j < cfg.n_pleiotropic {
                uniform(rng, cfg.delta_range)
            } else {
                0.0
            }
        }),
        SparsityRegime::VariantEffects => {
            for j in cfg.n_pleiotropic..k {
                beta_w.column_mut(j).fill(0.0);
            }
            DVector::from_fn(k, |_, _| uniform(rng, cfg.delta_range))
        }
    };
    TrueParameters {
        beta_x,
        beta_w,
        delta,
        pleiotropic,
    }
}

/// Summary statistics of one simulated sample.
#[derive(Debug, Clone)]
pub struct SampleSummary {
    pub beta_x: DVector<f64>,
    pub se_x: DVector<f64>,
    pub beta_w: DMatrix<f64>,
    pub beta_y: DVector<f64>,
    pub se_y: DVector<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Wanted {
    exposure: bool,
    outcome: bool,
}

/// Genotype matrix with every column polymorphic.
fn draw_genotypes(n: usize, p: usize, maf: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let q0 = (1.0 - maf) * (1.0 - maf);
    let q1 = q0 + 2.0 * maf * (1.0 - maf);
    loop {
        let g = DMatrix::from_fn(n, p, |_, _| {
            let u: f64 = rng.random();
            if u < q0 {
                0.0
            } else if u < q1 {
                1.0
            } else {
                2.0
            }
        });
        let monomorphic = (0..p).any(|j| {
            let c = g.column(j);
            c.iter().all(|v| *v == c[0])
        });
        if !monomorphic {
            return g;
        }
        warn!("redrawing genotypes: a variant has no variation");
    }
}

fn normals(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Simple regressions of each column of `v` on each genotype. Returns
/// `(slopes, standard errors)`, both `p x cols(v)`.
fn per_variant_regressions(
    gc: &DMatrix<f64>,
    sgg: &[f64],
    v: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = gc.nrows();
    let cross = gc.tr_mul(v);
    let svv: Vec<f64> = (0..v.ncols())
        .map(|c| {
            let col = v.column(c);
            let mean = col.mean();
            col.iter().map(|x| (x - mean) * (x - mean)).sum()
        })
        .collect();
    let slopes = DMatrix::from_fn(gc.ncols(), v.ncols(), |l, c| cross[(l, c)] / sgg[l]);
    let ses = DMatrix::from_fn(gc.ncols(), v.ncols(), |l, c| {
        let b = slopes[(l, c)];
        let rss = (svv[c] - b * b * sgg[l]).max(0.0);
        (rss / (n - 2) as f64 / sgg[l]).sqrt()
    });
    (slopes, ses)
}

fn simulate_sample(
    cfg: &ScenarioConfig,
    truth: &TrueParameters,
    rng: &mut ChaCha8Rng,
    want: Wanted,
) -> SampleSummary {
    let (n, p, k) = (cfg.n, cfg.p, cfg.k);
    let g = draw_genotypes(n, p, cfg.maf, rng);
    let u = normals(n, rng);
    let x = &g * &truth.beta_x + &u * cfg.gamma_x + normals(n, rng);
    let gamma_w = cfg.gamma_w();

    // W itself is only materialized when its associations are reported;
    // otherwise W delta is drawn from its exact distribution given G and U.
    let w = want.exposure.then(|| {
        let mut w = &g * &truth.beta_w;
        for j in 0..k {
            let mut col = w.column_mut(j);
            for i in 0..n {
                col[i] += gamma_w * u[i] + rng.sample::<f64, _>(StandardNormal);
            }
        }
        w
    });

    let y = want.outcome.then(|| {
        let w_delta = match &w {
            Some(w) => w * &truth.delta,
            None => {
                let pleio_dir = &truth.beta_w * &truth.delta;
                let noise_sd = truth.delta.norm();
                let loading = gamma_w * truth.delta.sum();
                let mut wd = &g * pleio_dir + &u * loading;
                for i in 0..n {
                    wd[i] += noise_sd * rng.sample::<f64, _>(StandardNormal);
                }
                wd
            }
        };
        &x * cfg.theta + w_delta + &u * cfg.gamma_y + normals(n, rng)
    });

    let mut gc = g;
    for j in 0..p {
        let mut col = gc.column_mut(j);
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let sgg: Vec<f64> = (0..p).map(|j| gc.column(j).norm_squared()).collect();

    let mut summary = SampleSummary {
        beta_x: DVector::zeros(p),
        se_x: DVector::zeros(p),
        beta_w: DMatrix::zeros(p, k),
        beta_y: DVector::zeros(p),
        se_y: DVector::zeros(p),
    };
    if let Some(w) = &w {
        let mut v = DMatrix::zeros(n, k + 1);
        v.set_column(0, &x);
        v.columns_mut(1, k).copy_from(w);
        let (b, se) = per_variant_regressions(&gc, &sgg, &v);
        summary.beta_x = b.column(0).into_owned();
        summary.se_x = se.column(0).into_owned();
        summary.beta_w = b.columns(1, k).into_owned();
    }
    if let Some(y) = &y {
        let v = DMatrix::from_column_slice(n, 1, y.as_slice());
        let (b, se) = per_variant_regressions(&gc, &sgg, &v);
        summary.beta_y = b.column(0).into_owned();
        summary.se_y = se.column(0).into_owned();
    }
    summary
}

/// One replicate: the two-sample analysis dataset (exposure-side
/// associations from sample 1, outcome associations from sample 2) and,
/// in three-sample designs, a selection dataset with every association
/// estimated in a third, independent sample.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub analysis: SummaryDataset,
    pub selection: Option<SummaryDataset>,
    /// Standard errors of the exposure associations in the analysis data.
    pub se_x: DVector<f64>,
    pub truth: TrueParameters,
}

fn to_dataset(beta_x: DVector<f64>, beta_w: DMatrix<f64>, beta_y: DVector<f64>, se_y: DVector<f64>) -> Result<SummaryDataset> {
    let (p, k) = beta_w.shape();
    SummaryDataset::new(
        variant_ids(p),
        beta_x,
        beta_w,
        beta_y,
        se_y,
        (0..k).map(covariate_name).collect(),
    )
}

pub fn generate_replicate(cfg: &ScenarioConfig, rep_index: u64) -> Result<Replicate> {
    cfg.validate()?;
    let mut rng = replicate_rng(cfg.rng_seed, rep_index);
    let truth = if cfg.freeze_parameters {
        draw_parameters(cfg, &mut replicate_rng(cfg.rng_seed, FROZEN_STREAM))
    } else {
        draw_parameters(cfg, &mut rng)
    };
    let exposure = simulate_sample(
        cfg,
        &truth,
        &mut rng,
        Wanted {
            exposure: true,
            outcome: false,
        },
    );
    let outcome = simulate_sample(
        cfg,
        &truth,
        &mut rng,
        Wanted {
            exposure: false,
            outcome: true,
        },
    );
    let selection = if cfg.n_datasets == 3 {
        let s = simulate_sample(
            cfg,
            &truth,
            &mut rng,
            Wanted {
                exposure: true,
                outcome: true,
            },
        );
        Some(to_dataset(s.beta_x, s.beta_w, s.beta_y, s.se_y)?)
    } else {
        None
    };
    let analysis = to_dataset(exposure.beta_x, exposure.beta_w, outcome.beta_y, outcome.se_y)
        .map_err(|e| Error::InvalidData(format!("replicate {rep_index}: {e}")))?;
    Ok(Replicate {
        analysis,
        selection,
        se_x: exposure.se_x,
        truth,
    })
}

/// Mean over replicates of the in-sample R^2 of the exposure regressed on
/// all variants jointly (with intercept) in the exposure sample.
pub fn mean_exposure_r2(cfg: &ScenarioConfig, n_reps: usize) -> Result<f64> {
    cfg.validate()?;
    if n_reps == 0 {
        return Err(Error::InvalidArgument("n_reps must be positive".into()));
    }
    let mut total = 0.0;
    for rep in 0..n_reps as u64 {
        let mut rng = replicate_rng(cfg.rng_seed, rep);
        let truth = draw_parameters(cfg, &mut rng);
        let g = draw_genotypes(cfg.n, cfg.p, cfg.maf, &mut rng);
        let u = normals(cfg.n, &mut rng);
        let x = &g * &truth.beta_x + &u * cfg.gamma_x + normals(cfg.n, &mut rng);
        total += r_squared(&g, &x)?;
    }
    Ok(total / n_reps as f64)
}

fn r_squared(g: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
    let mut gc = g.clone();
    for j in 0..gc.ncols() {
        let mut col = gc.column_mut(j);
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let xm = x.mean();
    let xc = x.add_scalar(-xm);
    let gram = gc.tr_mul(&gc);
    let gx = gc.tr_mul(&xc);
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("genotype matrix".into()))?;
    let explained = gx.dot(&chol.solve(&gx));
    Ok(explained / xc.norm_squared())
}
