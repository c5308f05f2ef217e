#![allow(dead_code)]

use mr_covsel::SummaryDataset;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random dataset with `p` variants and `k` covariates. Effects are O(1)
/// and weights moderate so objectives are well scaled.
pub fn random_dataset(seed: u64, p: usize, k: usize) -> SummaryDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bx = DVector::from_fn(p, |_, _| rng.random_range(0.2..1.5));
    let bw = DMatrix::from_fn(p, k, |_, _| rng.random_range(-1.0..1.0));
    let theta = rng.random_range(-0.5..0.5);
    let delta = DVector::from_fn(k, |j, _| if j % 2 == 0 { rng.random_range(-0.8..0.8) } else { 0.0 });
    let se = DVector::from_fn(p, |_, _| rng.random_range(0.5..1.5));
    let noise = DVector::from_fn(p, |i, _| se[i] * rng.random_range(-0.5..0.5));
    let by = &bx * theta + &bw * delta + noise;
    SummaryDataset::from_parts(bx, bw, by, se).unwrap()
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Weighted least squares of `beta_y` on `[beta_x, beta_w[:, cols]]`
/// through the normal equations: coefficients, then the fixed-effect
/// standard error of the first one scaled by the dispersion floor at one.
pub fn wls_oracle(d: &SummaryDataset, cols: &[usize]) -> (Vec<f64>, f64) {
    let p = d.n_variants();
    let m = cols.len() + 1;
    let col = |i: usize, c: usize| if c == 0 { d.beta_x()[i] } else { d.beta_w()[(i, cols[c - 1])] };
    let w: Vec<f64> = (0..p).map(|i| 1.0 / (d.se_y()[i] * d.se_y()[i])).collect();
    let mut xtx = vec![vec![0.0; m]; m];
    let mut xty = vec![0.0; m];
    for i in 0..p {
        for a in 0..m {
            xty[a] += w[i] * col(i, a) * d.beta_y()[i];
            for b in 0..m {
                xtx[a][b] += w[i] * col(i, a) * col(i, b);
            }
        }
    }
    let coef = gauss_solve(xtx.clone(), xty);
    let rss: f64 = (0..p)
        .map(|i| {
            let fit: f64 = (0..m).map(|a| coef[a] * col(i, a)).sum();
            w[i] * (d.beta_y()[i] - fit).powi(2)
        })
        .sum();
    let phi = (rss / (p - m) as f64).max(1.0);
    let mut e0 = vec![0.0; m];
    e0[0] = 1.0;
    let inv_col = gauss_solve(xtx, e0);
    (coef, (inv_col[0] * phi).sqrt())
}

/// Joint penalized objective written out directly.
pub fn objective(d: &SummaryDataset, lambda: f64, factors: &[f64], theta: f64, delta: &[f64]) -> f64 {
    let mut loss = 0.0;
    for i in 0..d.n_variants() {
        let mut r = d.beta_y()[i] - theta * d.beta_x()[i];
        for (j, dj) in delta.iter().enumerate() {
            r -= d.beta_w()[(i, j)] * dj;
        }
        loss += r * r / (d.se_y()[i] * d.se_y()[i]);
    }
    let pen: f64 = delta.iter().zip(factors).map(|(v, c)| c * v.abs()).sum();
    0.5 * loss + lambda * pen
}

/// Largest violation of the joint optimality conditions, with each
/// covariate gradient divided by its penalty factor.
pub fn kkt_violation(d: &SummaryDataset, lambda: f64, factors: &[f64], theta: f64, delta: &[f64]) -> f64 {
    let p = d.n_variants();
    let r: Vec<f64> = (0..p)
        .map(|i| {
            let mut v = d.beta_y()[i] - theta * d.beta_x()[i];
            for (j, dj) in delta.iter().enumerate() {
                v -= d.beta_w()[(i, j)] * dj;
            }
            v / (d.se_y()[i] * d.se_y()[i])
        })
        .collect();
    let gx: f64 = (0..p).map(|i| d.beta_x()[i] * r[i]).sum();
    let sx: f64 = (0..p)
        .map(|i| (d.beta_x()[i] / d.se_y()[i]).powi(2))
        .sum::<f64>()
        .sqrt();
    let mut worst = gx.abs() / sx;
    for (j, dj) in delta.iter().enumerate() {
        let c = factors[j];
        if c == 0.0 {
            continue;
        }
        let g = (0..p).map(|i| d.beta_w()[(i, j)] * r[i]).sum::<f64>() / c;
        let v = if *dj == 0.0 {
            (g.abs() - lambda).max(0.0)
        } else {
            (g - lambda * dj.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Minimum of `f` over a box by repeated grid zooms down to `final_step`.
/// Each level searches +-`half` steps per coordinate around the incumbent.
pub fn zoom_grid_min(
    f: impl Fn(&[f64]) -> f64,
    center: &[f64],
    start_step: f64,
    final_step: f64,
    half: i64,
) -> (Vec<f64>, f64) {
    let dim = center.len();
    let mut best = center.to_vec();
    let mut best_val = f(&best);
    let mut step = start_step;
    let mut point = vec![0.0; dim];
    loop {
        let origin = best.clone();
        let side = (2 * half + 1) as usize;
        let total = side.pow(dim as u32);
        for idx in 0..total {
            let mut rem = idx;
            for (c, x) in point.iter_mut().enumerate() {
                let off = (rem % side) as i64 - half;
                rem /= side;
                *x = origin[c] + off as f64 * step;
            }
            let v = f(&point);
            if v < best_val {
                best_val = v;
                best.copy_from_slice(&point);
            }
        }
        if step <= final_step * (1.0 + 1e-12) {
            return (best, best_val);
        }
        step = (step / 4.0).max(final_step);
    }
}
