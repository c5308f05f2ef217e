//! Cyclic coordinate descent for the Lasso
//!
//! ```text
//! minimize 1/2 ||y - X b||^2 + lambda * sum_j c_j |b_j|
//! ```
//!
//! with no intercept. When standardizing, `c_j` is the root-mean-square of
//! column `j` and the problem is solved on the rescaled columns `x_j / c_j`
//! with a plain L1 penalty; otherwise `c_j = 1`. Columns that are zero to
//! working precision are excluded and keep a zero coefficient.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Columns with scale below this fraction of the largest are dropped.
const ZERO_COLUMN_TOL: f64 = 1e-10;

/// Passes over the working set between attempts at an exact active-set step.
const ACTIVE_SET_JUMP_EVERY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub standardize: bool,
    /// Convergence threshold on the largest coefficient change in a full
    /// pass, on the standardized scale, multiplied by the largest
    /// coefficient magnitude when that exceeds one.
    pub tol: f64,
    /// Passes over the coordinates allowed per penalty value.
    pub max_passes: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            standardize: true,
            tol: 1e-9,
            max_passes: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoProblem {
    z: DMatrix<f64>,
    y: DVector<f64>,
    scale: Vec<f64>,
    col_sq: Vec<f64>,
    active_cols: Vec<usize>,
}

impl LassoProblem {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, standardize: bool) -> Self {
        let (m, k) = x.shape();
        assert_eq!(m, y.len(), "design and response lengths differ");
        let norms: Vec<f64> = (0..k).map(|j| x.column(j).norm()).collect();
        let max_norm = norms.iter().fold(0.0f64, |a, &b| a.max(b));
        let mut z = x;
        let mut scale = vec![0.0; k];
        let mut col_sq = vec![0.0; k];
        let mut active_cols = Vec::with_capacity(k);
        for j in 0..k {
            if max_norm == 0.0 || norms[j] <= ZERO_COLUMN_TOL * max_norm {
                z.column_mut(j).fill(0.0);
                continue;
            }
            let c = if standardize {
                norms[j] / (m as f64).sqrt()
            } else {
                1.0
            };
            if standardize {
                z.column_mut(j).scale_mut(1.0 / c);
            }
            scale[j] = c;
            col_sq[j] = z.column(j).norm_squared();
            active_cols.push(j);
        }
        LassoProblem {
            z,
            y,
            scale,
            col_sq,
            active_cols,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.scale.len()
    }

    /// Smallest penalty at which every coefficient is zero.
    pub fn lambda_max(&self) -> f64 {
        self.active_cols
            .iter()
            .map(|&j| self.z.column(j).dot(&self.y).abs())
            .fold(0.0, f64::max)
    }

    /// Solves at `lambda` starting from `beta` (standardized scale), which
    /// is overwritten with the solution. Returns the number of passes.
    pub fn solve(&self, lambda: f64, beta: &mut [f64], opts: &SolverOptions) -> Result<usize> {
        assert_eq!(beta.len(), self.n_cols());
        let mut resid = self.y.clone();
        for &j in &self.active_cols {
            if beta[j] != 0.0 {
                resid.axpy(-beta[j], &self.z.column(j), 1.0);
            }
        }
        let mut passes = 0;
        let mut working: Vec<usize> = Vec::with_capacity(self.active_cols.len());
        // absolute below unit magnitude, relative above it, since large
        // coefficients cannot be resolved to an absolute 1e-9
        let threshold = |beta: &[f64]| opts.tol * beta.iter().fold(1.0f64, |m, b| m.max(b.abs()));
        loop {
            // full sweep
            let mut change = self.sweep(self.active_cols.iter().copied(), lambda, beta, &mut resid);
            passes += 1;
            if change < threshold(beta) {
                return Ok(passes);
            }
            working.clear();
            working.extend(self.active_cols.iter().copied().filter(|&j| beta[j] != 0.0));

            // iterate on the nonzero set until it settles
            let mut since_jump = 0;
            loop {
                if passes >= opts.max_passes {
                    return Err(Error::NoConvergence {
                        lambda,
                        iterations: passes,
                        max_change: change,
                    });
                }
                if since_jump == ACTIVE_SET_JUMP_EVERY {
                    since_jump = 0;
                    let saved_beta = beta.to_vec();
                    let saved_working = working.clone();
                    let before = self.objective(lambda, beta);
                    self.active_set_steps(&mut working, lambda, beta, &mut resid);
                    // drop accumulated round-off
                    resid = self.residual(beta);
                    if self.objective(lambda, beta) > before + 1e-12 * before.abs() {
                        beta.copy_from_slice(&saved_beta);
                        working = saved_working;
                        resid = self.residual(beta);
                    }
                }
                since_jump += 1;
                change = self.sweep(working.iter().copied(), lambda, beta, &mut resid);
                passes += 1;
                if change < threshold(beta) {
                    break;
                }
            }
        }
    }

    /// Moves the working-set coefficients toward the exact minimizer for
    /// their current signs, stopping at whichever zero crossing along the
    /// way gives the lowest objective; coefficients that reach zero leave
    /// the working set. Repeats until the minimizer keeps its signs. Speeds
    /// up ill-conditioned problems where cyclic updates creep.
    fn active_set_steps(
        &self,
        working: &mut Vec<usize>,
        lambda: f64,
        beta: &mut [f64],
        resid: &mut DVector<f64>,
    ) {
        // sweeps may have zeroed some entries since the set was built
        working.retain(|&j| beta[j] != 0.0);
        for _ in 0..=working.len() {
            if working.is_empty() {
                return;
            }
            let za = self.z.select_columns(working.iter());
            let cur = DVector::from_iterator(working.len(), working.iter().map(|&j| beta[j]));
            let signs = cur.map(f64::signum);
            // minimizer of 1/2 ||y - Za b||^2 + lambda s'b via Za = QR,
            // avoiding the squared conditioning of the normal equations
            let qr = (working.len() < za.nrows()).then(|| za.clone().qr());
            let r = qr.as_ref().map(|qr| qr.r());
            let singular = r.as_ref().is_none_or(|r| {
                let diag_max = r.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
                r.diagonal().iter().any(|d| d.abs() <= 1e-10 * diag_max)
            });
            if singular {
                if !self.null_step(working, &za, &cur, beta, resid) {
                    return;
                }
                continue;
            }
            let (Some(qr), Some(r)) = (qr, r) else {
                return;
            };
            let Some(u) = r.tr_solve_upper_triangular(&signs) else {
                return;
            };
            let mut qty = self.y.clone();
            qr.q_tr_mul(&mut qty);
            let qty = qty.rows(0, r.nrows()).into_owned();
            let Some(target) = r.solve_upper_triangular(&(qty - u.scale(lambda))) else {
                return;
            };
            if target.iter().any(|v| !v.is_finite()) {
                return;
            }
            let dir = &target - &cur;
            let zdir = &za * &dir;
            let objective_at = |t: f64| {
                let r = &*resid - zdir.scale(t);
                0.5 * r.norm_squared() + lambda * (&cur + dir.scale(t)).iter().map(|b| b.abs()).sum::<f64>()
            };
            let mut crossings: Vec<f64> = (0..cur.len())
                .filter(|&i| target[i] * signs[i] <= 0.0)
                .map(|i| cur[i] / (cur[i] - target[i]))
                .filter(|t| *t > 0.0 && *t <= 1.0)
                .collect();
            crossings.push(1.0);
            // up to the first crossing the objective is the sign-restricted
            // quadratic, which decreases all the way to its minimizer, so the
            // first crossing is always acceptable
            let mut best_t = crossings.iter().copied().fold(1.0, f64::min);
            let mut best_obj = objective_at(best_t);
            for &t in &crossings {
                let obj = objective_at(t);
                if obj < best_obj {
                    best_obj = obj;
                    best_t = t;
                }
            }
            *resid -= zdir.scale(best_t);
            let mut zeroed = false;
            for (i, &j) in working.iter().enumerate() {
                let hits_zero = target[i] * signs[i] <= 0.0
                    && (cur[i] / (cur[i] - target[i]) - best_t).abs() <= 1e-14;
                if hits_zero {
                    // put the round-off remainder back into the residual
                    resid.axpy(cur[i] + best_t * dir[i], &self.z.column(j), 1.0);
                    beta[j] = 0.0;
                    zeroed = true;
                } else {
                    beta[j] = cur[i] + best_t * dir[i];
                }
            }
            if best_t == 1.0 && !zeroed {
                return;
            }
            working.retain(|&j| beta[j] != 0.0);
        }
    }

    /// With (nearly) dependent working columns the fit barely moves along a
    /// null direction of `za`, so the penalty is lowered by following it
    /// until the first coefficient reaches zero. Returns false when no
    /// usable direction exists.
    fn null_step(
        &self,
        working: &mut Vec<usize>,
        za: &DMatrix<f64>,
        cur: &DVector<f64>,
        beta: &mut [f64],
        resid: &mut DVector<f64>,
    ) -> bool {
        let k = za.ncols();
        // Za P = QR with pivoting puts the dependent columns last; the first
        // of them is a combination of the ones before it
        let qr = za.clone().col_piv_qr();
        let r = qr.r();
        let d0 = r[(0, 0)].abs();
        let rank = (0..r.nrows()).take_while(|&i| r[(i, i)].abs() > 1e-8 * d0).count();
        if rank >= k {
            return false;
        }
        let Some(head) = r
            .view((0, 0), (rank, rank))
            .solve_upper_triangular(&(-r.view((0, rank), (rank, 1))))
        else {
            return false;
        };
        let mut dir = DVector::zeros(k);
        dir.rows_mut(0, rank).copy_from(&head);
        dir[rank] = 1.0;
        qr.p().inv_permute_rows(&mut dir);
        dir /= dir.norm();
        if dir.dot(&cur.map(f64::signum)) > 0.0 {
            dir.neg_mut();
        }
        let Some((hit, t)) = (0..k)
            .filter(|&i| dir[i] * cur[i] < 0.0)
            .map(|i| (i, -cur[i] / dir[i]))
            .min_by(|a, b| a.1.total_cmp(&b.1))
        else {
            return false;
        };
        *resid -= (za * &dir).scale(t);
        for (i, &j) in working.iter().enumerate() {
            beta[j] = cur[i] + t * dir[i];
        }
        // put the round-off remainder back into the residual
        let dropped = working[hit];
        resid.axpy(beta[dropped], &self.z.column(dropped), 1.0);
        beta[dropped] = 0.0;
        working.retain(|&j| beta[j] != 0.0);
        true
    }

    fn sweep(
        &self,
        cols: impl Iterator<Item = usize>,
        lambda: f64,
        beta: &mut [f64],
        resid: &mut DVector<f64>,
    ) -> f64 {
        let mut max_change = 0.0f64;
        for j in cols {
            let zj = self.z.column(j);
            let old = beta[j];
            let g = zj.dot(resid) + self.col_sq[j] * old;
            let new = soft_threshold(g, lambda) / self.col_sq[j];
            let delta = new - old;
            if delta != 0.0 {
                resid.axpy(-delta, &zj, 1.0);
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    }

    /// Coefficients on the original column scale.
    pub fn unstandardize(&self, beta: &[f64]) -> Vec<f64> {
        beta.iter()
            .zip(&self.scale)
            .map(|(b, c)| if *c > 0.0 { b / c } else { 0.0 })
            .collect()
    }

    /// Standardized-scale coefficients from original-scale ones.
    pub fn standardize(&self, coef: &[f64]) -> Vec<f64> {
        coef.iter().zip(&self.scale).map(|(b, c)| b * c).collect()
    }

    pub fn residual(&self, beta: &[f64]) -> DVector<f64> {
        let mut r = self.y.clone();
        for &j in &self.active_cols {
            if beta[j] != 0.0 {
                r.axpy(-beta[j], &self.z.column(j), 1.0);
            }
        }
        r
    }

    /// `1/2 ||r||^2 + lambda ||beta||_1` on the standardized scale.
    pub fn objective(&self, lambda: f64, beta: &[f64]) -> f64 {
        0.5 * self.residual(beta).norm_squared() + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Largest violation of the subgradient optimality conditions.
    pub fn kkt_violation(&self, lambda: f64, beta: &[f64]) -> f64 {
        let r = self.residual(beta);
        self.active_cols
            .iter()
            .map(|&j| {
                let g = self.z.column(j).dot(&r);
                if beta[j] == 0.0 {
                    (g.abs() - lambda).max(0.0)
                } else {
                    (g - lambda * beta[j].signum()).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// Warm-started solutions along `lambdas`, on the standardized scale.
    pub fn solve_path(&self, lambdas: &[f64], opts: &SolverOptions) -> Result<Vec<Vec<f64>>> {
        let mut beta = vec![0.0; self.n_cols()];
        let mut out = Vec::with_capacity(lambdas.len());
        for &lambda in lambdas {
            self.solve(lambda, &mut beta, opts)?;
            out.push(beta.clone());
        }
        Ok(out)
    }
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Geometric sequence from `lambda_max` down to `lambda_max * min_ratio`.
pub fn geometric_path(lambda_max: f64, n: usize, min_ratio: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lambda_max];
    }
    let step = min_ratio.ln() / (n - 1) as f64;
    (0..n).map(|i| lambda_max * (step * i as f64).exp()).collect()
}

/// Random partition of `0..p` into `n_folds` near-equal folds, each sorted.
pub fn assign_folds(p: usize, n_folds: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..p).collect();
    perm.shuffle(rng);
    let mut folds = vec![Vec::new(); n_folds];
    for (pos, &i) in perm.iter().enumerate() {
        folds[pos % n_folds].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvOutcome {
    /// Mean held-out loss per penalty value, averaged over repeats.
    pub curve: Vec<f64>,
    /// Index of the minimizing penalty in each repeat.
    pub minimizers: Vec<usize>,
    /// Mean of the per-repeat minimizing penalties.
    pub chosen_lambda: f64,
}

/// K-fold cross-validation over a fixed penalty path.
///
/// `fold_loss(train, test, lambdas)` fits on the training rows at each of
/// the given penalties (already rescaled to the training-set size) and
/// returns the held-out loss per penalty, or `None` when the fold cannot be
/// scored. Ties resolve to the largest penalty.
pub fn cross_validate_path<F>(
    p: usize,
    lambdas: &[f64],
    n_folds: usize,
    n_repeats: usize,
    seed: u64,
    mut fold_loss: F,
) -> Result<CvOutcome>
where
    F: FnMut(&[usize], &[usize], &[f64]) -> Result<Option<Vec<f64>>>,
{
    if n_folds < 2 || n_folds > p {
        return Err(Error::InvalidArgument(format!(
            "{n_folds} folds for {p} variants (need 2 <= folds <= variants)"
        )));
    }
    if n_repeats == 0 {
        return Err(Error::InvalidArgument("at least one CV repeat is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_lambda = lambdas.len();
    let mut curve = vec![0.0; n_lambda];
    let mut minimizers = Vec::with_capacity(n_repeats);
    for _ in 0..n_repeats {
        let folds = assign_folds(p, n_folds, &mut rng);
        let mut sum = vec![0.0; n_lambda];
        let mut used = 0usize;
        for test in &folds {
            let train: Vec<usize> = (0..p).filter(|i| test.binary_search(i).is_err()).collect();
            if train.len() < 2 {
                return Err(Error::TooFewVariants {
                    needed: 2,
                    got: train.len(),
                    context: "cross-validation training fold",
                });
            }
            let factor = train.len() as f64 / p as f64;
            let scaled: Vec<f64> = lambdas.iter().map(|l| l * factor).collect();
            if let Some(losses) = fold_loss(&train, test, &scaled)? {
                for (s, l) in sum.iter_mut().zip(&losses) {
                    *s += l;
                }
                used += 1;
            }
        }
        if used == 0 {
            return Err(Error::Degenerate(
                "no cross-validation fold could be scored".into(),
            ));
        }
        let mut best = 0;
        for i in 0..n_lambda {
            sum[i] /= used as f64;
            if sum[i] < sum[best] {
                best = i;
            }
        }
        for (c, s) in curve.iter_mut().zip(&sum) {
            *c += s / n_repeats as f64;
        }
        minimizers.push(best);
    }
    let chosen_lambda = minimizers.iter().map(|&i| lambdas[i]).sum::<f64>() / n_repeats as f64;
    Ok(CvOutcome {
        curve,
        minimizers,
        chosen_lambda,
    })
}
