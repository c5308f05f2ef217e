//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! Set `MR_COVSEL_URATE_DATA` to a urate summary CSV to run the applied
//! workflow on real data; otherwise a synthetic dataset of the same shape
//! is used.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Mutex;
use std::time::Instant;

use mr_covsel::estimators::{balancing_estimate, mv_ivw};
use mr_covsel::lasso::SolverOptions;
use mr_covsel::regularize::{lambda_path, penalty_factors, solve_penalized, CvConfig};
use mr_covsel::simulate::{
    generate_replicate, mean_exposure_r2, preset_scenario, run_study, run_study_observed,
    Replicate, ScenarioConfig, SimulationReport, StudyMethod,
};
use mr_covsel::{RegularizationFit, SummaryDataset};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REPS: usize = 1000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn study(
    cfg: &ScenarioConfig,
    methods: &[StudyMethod],
    kkt: Option<&KktTracker>,
) -> SimulationReport {
    let cv = CvConfig { rng_seed: cfg.rng_seed, ..CvConfig::default() };
    match kkt {
        Some(t) => {
            let obs = |rep: u64, r: &Replicate, fit: &RegularizationFit| t.observe(rep, r, fit);
            run_study_observed(cfg, methods, REPS, &cv, Some(&obs)).unwrap()
        }
        None => run_study(cfg, methods, REPS, &cv).unwrap(),
    }
}

fn stat(report: &SimulationReport, m: StudyMethod, pick: fn(&mr_covsel::simulate::MethodSummary) -> Option<f64>) -> f64 {
    let row = report.row(m).unwrap();
    assert_eq!(row.n_failed, 0, "{m} failed on {} replicates", row.n_failed);
    pick(row).unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------------------
// Optimality conditions, written against the objective directly.

fn residuals_over_variance(d: &SummaryDataset, theta: f64, delta: &[f64]) -> Vec<f64> {
    (0..d.n_variants())
        .map(|i| {
            let mut r = d.beta_y()[i] - theta * d.beta_x()[i];
            for (j, dj) in delta.iter().enumerate() {
                r -= d.beta_w()[(i, j)] * dj;
            }
            r / d.se_y()[i].powi(2)
        })
        .collect()
}

/// Largest subgradient violation, each covariate gradient divided by its
/// penalty factor; the exposure gradient is scaled by the norm of its
/// weighted column.
fn kkt_violation(d: &SummaryDataset, lambda: f64, factors: &[f64], theta: f64, delta: &[f64]) -> f64 {
    let r = residuals_over_variance(d, theta, delta);
    let p = d.n_variants();
    let gx: f64 = (0..p).map(|i| d.beta_x()[i] * r[i]).sum();
    let sx = (0..p).map(|i| (d.beta_x()[i] / d.se_y()[i]).powi(2)).sum::<f64>().sqrt();
    let mut worst = gx.abs() / sx;
    for (j, dj) in delta.iter().enumerate() {
        let g = (0..p).map(|i| d.beta_w()[(i, j)] * r[i]).sum::<f64>() / factors[j];
        let v = if *dj == 0.0 {
            (g.abs() - lambda).max(0.0)
        } else {
            (g - lambda * dj.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

#[derive(Default)]
struct KktState {
    solutions: usize,
    worst: f64,
    nonzero_at_max: usize,
    unpenalized_checked: usize,
    unpenalized_gap: f64,
}

struct KktTracker {
    state: Mutex<KktState>,
}

impl KktTracker {
    fn new() -> Self {
        KktTracker { state: Mutex::new(KktState::default()) }
    }

    fn observe(&self, _rep: u64, r: &Replicate, fit: &RegularizationFit) {
        let d = &r.analysis;
        let factors = penalty_factors(d, true).unwrap();
        let mut worst = 0.0f64;
        for (i, &l) in fit.lambdas.iter().enumerate() {
            worst = worst.max(kkt_violation(d, l, &factors, fit.theta_path[i], &fit.delta_path[i]));
        }
        let lmax = fit.lambdas[0];
        let mut nonzero = fit.delta_path[0].iter().filter(|v| **v != 0.0).count();
        for scale in [1.0, 1.5, 10.0] {
            let sol = solve_penalized(d, scale * lmax, &SolverOptions::default()).unwrap();
            nonzero += sol.delta.iter().filter(|v| **v != 0.0).count();
        }
        let gap = (d.n_variants() > d.n_covariates() + 1).then(|| {
            let sol = solve_penalized(d, 0.0, &SolverOptions::default()).unwrap();
            (sol.theta - mv_ivw(d).unwrap().theta_hat).abs()
        });
        let mut s = self.state.lock().unwrap();
        s.solutions += fit.lambdas.len();
        s.worst = s.worst.max(worst);
        s.nonzero_at_max += nonzero;
        if let Some(g) = gap {
            s.unpenalized_checked += 1;
            s.unpenalized_gap = s.unpenalized_gap.max(g);
        }
    }
}

// ---------------------------------------------------------------------------
// Criteria.

fn criterion_1(kkt: &KktTracker) -> Outcome {
    let cfg = ScenarioConfig { theta: 0.2, n_pleiotropic: 1, ..preset_scenario(1).unwrap() };
    let report = study(&cfg, &StudyMethod::ESTIMATION, Some(kkt));
    let targets = [
        (StudyMethod::Ivw, 0.219, 0.077),
        (StudyMethod::Reg, 0.204, 0.060),
        (StudyMethod::PostReg, 0.201, 0.066),
        (StudyMethod::MvAll, 0.198, 0.282),
        (StudyMethod::Oracle, 0.199, 0.030),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (m, mean_t, sd_t) in targets {
        let mean = stat(&report, m, |r| r.mean);
        let sd = stat(&report, m, |r| r.sd);
        let ok = within(mean, mean_t, 0.015) && within(sd, sd_t, 0.015);
        pass &= ok;
        parts.push(format!(
            "{m} mean {mean:.3} (want {mean_t:.3}) sd {sd:.3} (want {sd_t:.3}){}",
            if ok { "" } else { " <-" }
        ));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn criterion_2(kkt: &KktTracker) -> Outcome {
    let cfg = ScenarioConfig { theta: 0.0, n_pleiotropic: 35, ..preset_scenario(4).unwrap() };
    let report = study(&cfg, &[StudyMethod::Reg, StudyMethod::PostReg], Some(kkt));
    let reg = stat(&report, StudyMethod::Reg, |r| r.mean);
    let post = stat(&report, StudyMethod::PostReg, |r| r.mean);
    let (a, b) = (within(reg, 0.072, 0.02), within(post, 0.035, 0.02));
    Outcome {
        pass: a && b,
        detail: format!(
            "reg mean {reg:.3} (want 0.072 +- 0.02){}; post_reg mean {post:.3} (want 0.035 +- 0.02){}",
            if a { "" } else { " <-" },
            if b { "" } else { " <-" }
        ),
    }
}

fn criterion_3() -> Outcome {
    let cfg = ScenarioConfig {
        theta: 0.2,
        n_pleiotropic: 7,
        n_datasets: 3,
        ..preset_scenario(3).unwrap()
    };
    let methods = [StudyMethod::TwoSampleA, StudyMethod::ThreeSampleA, StudyMethod::Oracle];
    let report = study(&cfg, &methods, None);
    let two = stat(&report, StudyMethod::TwoSampleA, |r| r.coverage);
    let three = stat(&report, StudyMethod::ThreeSampleA, |r| r.coverage);
    let oracle = stat(&report, StudyMethod::Oracle, |r| r.coverage);
    let oracle_mean = stat(&report, StudyMethod::Oracle, |r| r.mean);
    let checks = [within(three, 0.947, 0.02), within(oracle, 0.950, 0.02), two < 0.90];
    let mark = |ok: bool| if ok { "" } else { " <-" };
    Outcome {
        pass: checks.iter().all(|c| *c),
        detail: format!(
            "three_sample_a coverage {three:.3} (want 0.947){}; oracle coverage {oracle:.3} (want 0.950){} \
             [oracle mean {oracle_mean:.3}]; two_sample_a coverage {two:.3} (want < 0.90){}",
            mark(checks[0]),
            mark(checks[1]),
            mark(checks[2])
        ),
    }
}

fn criterion_4() -> Outcome {
    let cfg = ScenarioConfig { theta: 0.0, n_pleiotropic: 1, ..preset_scenario(1).unwrap() };
    let report = study(&cfg, &[StudyMethod::Ivw, StudyMethod::Oracle], None);
    let oracle = stat(&report, StudyMethod::Oracle, |r| r.power);
    let ivw = stat(&report, StudyMethod::Ivw, |r| r.power);
    Outcome {
        pass: (0.02..=0.06).contains(&oracle) && ivw > 0.20,
        detail: format!("oracle type I error {oracle:.3} (want 0.02..0.06); ivw {ivw:.3} (want > 0.20)"),
    }
}

fn random_instance(rng: &mut ChaCha8Rng, p: usize, k: usize) -> SummaryDataset {
    let bx = DVector::from_fn(p, |_, _| rng.random_range(0.01..0.5) * if rng.random::<bool>() { 1.0 } else { -1.0 });
    let bw = DMatrix::from_fn(p, k, |_, _| rng.random_range(-0.3..0.3));
    let se = DVector::from_fn(p, |_, _| rng.random_range(0.01..0.2));
    let theta = rng.random_range(-1.0..1.0);
    let delta = DVector::from_fn(k, |_, _| rng.random_range(-0.5..0.5));
    let noise = DVector::from_fn(p, |i, _| se[i] * rng.random_range(-2.0..2.0));
    let by = &bx * theta + &bw * delta + noise;
    SummaryDataset::from_parts(bx, bw, by, se).unwrap()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(0..=10);
        let p = rng.random_range(k + 2..=50);
        let d = random_instance(&mut rng, p, k);
        let a = balancing_estimate(&d).unwrap().theta_hat;
        let b = mv_ivw(&d).unwrap().theta_hat;
        worst = worst.max((a - b).abs());
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("1000 instances, max |balancing - multivariable| = {worst:.2e}"),
    }
}

fn objective(d: &SummaryDataset, lambda: f64, factors: &[f64], theta: f64, delta: &[f64]) -> f64 {
    let mut loss = 0.0;
    for i in 0..d.n_variants() {
        let mut r = d.beta_y()[i] - theta * d.beta_x()[i];
        for (j, dj) in delta.iter().enumerate() {
            r -= d.beta_w()[(i, j)] * dj;
        }
        loss += (r / d.se_y()[i]).powi(2);
    }
    0.5 * loss + lambda * delta.iter().zip(factors).map(|(v, c)| c * v.abs()).sum::<f64>()
}

/// Grid search: a (2 half + 1)^dim grid around the incumbent, with the
/// spacing cut by four per level until it reaches `final_step`.
fn grid_min(f: impl Fn(&[f64]) -> f64, dim: usize, start: f64, final_step: f64, half: i64) -> f64 {
    let mut best = vec![0.0; dim];
    let mut best_val = f(&best);
    let mut step = start;
    let side = (2 * half + 1) as usize;
    let mut point = vec![0.0; dim];
    loop {
        let origin = best.clone();
        for idx in 0..side.pow(dim as u32) {
            let mut rem = idx;
            for (c, x) in point.iter_mut().enumerate() {
                *x = origin[c] + ((rem % side) as i64 - half) as f64 * step;
                rem /= side;
            }
            let v = f(&point);
            if v < best_val {
                best_val = v;
                best.copy_from_slice(&point);
            }
        }
        if step <= final_step * (1.0 + 1e-12) {
            return best_val;
        }
        step = (step / 4.0).max(final_step);
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_gap = 0.0f64;
    for n in 0..200 {
        let k = rng.random_range(1..=3);
        let p = rng.random_range(3..=6);
        let bx = DVector::from_fn(p, |_, _| rng.random_range(0.2..1.5));
        let bw = DMatrix::from_fn(p, k, |_, _| rng.random_range(-1.0..1.0));
        let se = DVector::from_fn(p, |_, _| rng.random_range(0.5..1.5));
        let theta = rng.random_range(-0.5..0.5);
        let delta = DVector::from_fn(k, |_, _| rng.random_range(-0.8..0.8));
        let by = &bx * theta + &bw * delta + DVector::from_fn(p, |i, _| se[i] * rng.random_range(-0.5..0.5));
        let d = SummaryDataset::from_parts(bx, bw, by, se).unwrap();

        let standardize = n % 2 == 0;
        let lmax = lambda_path(&d, 2, 0.5, standardize).unwrap()[0];
        let lambda = lmax * rng.random_range(0.02..0.9);
        let factors = penalty_factors(&d, standardize).unwrap();
        let sol = solve_penalized(&d, lambda, &SolverOptions { standardize, ..SolverOptions::default() }).unwrap();
        let two_step = objective(&d, lambda, &factors, sol.theta, &sol.delta);
        let grid = grid_min(|x| objective(&d, lambda, &factors, x[0], &x[1..]), k + 1, 0.25, 1e-3, 8);
        worst_excess = worst_excess.max(two_step - grid);
        worst_gap = worst_gap.max((two_step - grid).abs());
    }
    Outcome {
        pass: worst_excess <= 1e-6,
        detail: format!(
            "200 instances, max (two-step - grid) = {worst_excess:.2e}, max |difference| = {worst_gap:.2e}"
        ),
    }
}

fn criterion_7(kkt: &KktTracker) -> Outcome {
    let s = kkt.state.lock().unwrap();
    let pass = s.solutions > 0
        && s.worst <= 1e-6
        && s.nonzero_at_max == 0
        && s.unpenalized_checked > 0
        && s.unpenalized_gap <= 1e-8;
    Outcome {
        pass,
        detail: format!(
            "{} path solutions, max violation {:.2e}; nonzero coefficients at or above lambda_max: {}; \
             lambda = 0 vs multivariable on {} datasets, max gap {:.2e}",
            s.solutions, s.worst, s.nonzero_at_max, s.unpenalized_checked, s.unpenalized_gap
        ),
    }
}

fn criterion_8() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (id, target) in [(1, 0.100), (2, 0.100), (3, 0.117), (4, 0.117)] {
        let r2 = mean_exposure_r2(&preset_scenario(id).unwrap(), 100).unwrap();
        let ok = within(r2, target, 0.015);
        pass &= ok;
        parts.push(format!("scenario {id} {:.2}% (want {:.1}%)", 100.0 * r2, 100.0 * target));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mr-covsel"))
}

fn run_ok(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = binary().current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn criterion_9(dir: &Path) -> Outcome {
    let base = ["simulate", "--scenario", "1", "--theta", "0.2", "--n-pleio", "1", "--reps", "1000", "--seed", "7"];
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let out = format!("sim_{threads}.csv");
        let mut args = base.to_vec();
        args.extend(["--threads", threads, "--out", &out]);
        if let Err(e) = run_ok(dir, &args) {
            return Outcome { pass: false, detail: e };
        }
        outputs.push(fs::read(dir.join(&out)).unwrap());
    }
    let rows = String::from_utf8_lossy(&outputs[0]).lines().count() - 1;
    Outcome {
        pass: outputs[0] == outputs[1] && rows == 5,
        detail: format!(
            "1 vs 8 threads byte-identical: {}; {rows} method rows",
            outputs[0] == outputs[1]
        ),
    }
}

const URATE_COVARIATES: [&str; 8] = ["FG", "BMI", "T2D", "HDL", "LDL", "Tri", "SBP", "DBP"];

fn synthetic_urate(path: &Path) {
    let cfg = ScenarioConfig {
        p: 31,
        k: 8,
        n_pleiotropic: 2,
        rng_seed: 2,
        ..preset_scenario(1).unwrap()
    };
    let d = generate_replicate(&cfg, 0).unwrap().analysis;
    SummaryDataset::new(
        d.variant_ids().to_vec(),
        d.beta_x().clone(),
        d.beta_w().clone(),
        d.beta_y().clone(),
        d.se_y().clone(),
        URATE_COVARIATES.map(String::from).to_vec(),
    )
    .unwrap()
    .save_csv(path)
    .unwrap();
}

struct PathTable {
    names: Vec<String>,
    lambdas: Vec<f64>,
    deltas: Vec<Vec<f64>>,
    n_active: Vec<usize>,
    chosen: Vec<usize>,
}

fn read_path(path: &Path) -> PathTable {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().clone();
    let k = header.len() - 5;
    let names = (0..k).map(|j| header[2 + j].trim_start_matches("delta_").to_string()).collect();
    let mut t = PathTable { names, lambdas: vec![], deltas: vec![], n_active: vec![], chosen: vec![] };
    for (i, rec) in r.records().enumerate() {
        let rec = rec.unwrap();
        t.lambdas.push(rec[0].parse().unwrap());
        t.deltas.push((0..k).map(|j| rec[2 + j].parse().unwrap()).collect());
        t.n_active.push(rec[2 + k].parse().unwrap());
        if &rec[4 + k] == "1" {
            t.chosen.push(i);
        }
    }
    t
}

fn selected_from(json_path: &Path) -> Vec<String> {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(json_path).unwrap()).unwrap();
    let mut s: Vec<String> = v["selected"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_str().unwrap().to_string())
        .collect();
    s.sort();
    s
}

fn urate_checks(dir: &Path, data: &Path, workflow_dir: &Path) -> Result<String, String> {
    let mut notes = Vec::new();
    let path = read_path(&workflow_dir.join("path.csv"));
    if !path.lambdas.windows(2).all(|w| w[0] > w[1]) {
        return Err("penalty path is not strictly decreasing".into());
    }
    if path.deltas[0].iter().any(|v| *v != 0.0) {
        return Err("first path row has nonzero coefficients".into());
    }
    for (i, row) in path.deltas.iter().enumerate() {
        if row.iter().filter(|v| **v != 0.0).count() != path.n_active[i] {
            return Err(format!("path row {i}: n_active disagrees with coefficients"));
        }
    }
    if path.chosen.len() != 1 {
        return Err(format!("{} rows flagged as chosen", path.chosen.len()));
    }
    notes.push(format!("path of {} penalties ordered, first row empty", path.lambdas.len()));

    // With a single fold split the chosen penalty lies on the path, so the
    // selected set must be exactly the active set of the flagged row.
    let data_s = data.to_string_lossy().into_owned();
    run_ok(dir, &["path", "--data", &data_s, "--seed", "1", "--out", "single_path.csv"])?;
    run_ok(dir, &["estimate", "--data", &data_s, "--method", "post-reg", "--seed", "1", "--out", "single.json"])?;
    let single = read_path(&dir.join("single_path.csv"));
    let row = single.chosen.first().ok_or("no chosen row")?;
    let mut active: Vec<String> = single.deltas[*row]
        .iter()
        .zip(&single.names)
        .filter(|(v, _)| **v != 0.0)
        .map(|(_, n)| n.clone())
        .collect();
    active.sort();
    let selected = selected_from(&dir.join("single.json"));
    if active != selected {
        return Err(format!("selected {selected:?} but chosen row has {active:?}"));
    }
    let repeated = selected_from(&workflow_dir.join("selection.json"));
    notes.push(format!("selected set {selected:?} matches chosen row; with repeats {repeated:?}"));

    let mut r = csv::Reader::from_path(workflow_dir.join("balance.csv")).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let (set, t, c): (&str, &str, f64) = (&rec[0], &rec[1], rec[2].parse().unwrap());
        let adjusted = match set {
            "all" => t != "exposure",
            "none" => false,
            list => list.split('+').any(|n| n == t),
        };
        if adjusted {
            checked += 1;
            if c.abs() > 1e-10 {
                return Err(format!("set {set}: {t} correlation {c:e} is not zero"));
            }
        }
    }
    notes.push(format!("{checked} adjusted covariates balanced to 1e-10"));
    Ok(notes.join("; "))
}

fn criterion_10(dir: &Path) -> Outcome {
    let (data, source) = match std::env::var_os("MR_COVSEL_URATE_DATA") {
        Some(p) => (PathBuf::from(p), "user data"),
        None => {
            let p = dir.join("urate_synthetic.csv");
            synthetic_urate(&p);
            (p, "synthetic urate-shaped data")
        }
    };
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scripts/urate_workflow.sh");
    let out_dir = dir.join("urate_out");
    let status = Command::new("bash")
        .arg(&script)
        .arg(&data)
        .arg(&out_dir)
        .env("MR_COVSEL", env!("CARGO_BIN_EXE_mr-covsel"))
        .env("SEED", "1")
        .output();
    match status {
        Ok(o) if o.status.success() => {}
        Ok(o) => {
            return Outcome {
                pass: false,
                detail: format!("workflow failed: {}", String::from_utf8_lossy(&o.stderr)),
            }
        }
        Err(e) => return Outcome { pass: false, detail: format!("cannot run bash: {e}") },
    }
    match urate_checks(dir, &data, &out_dir) {
        Ok(notes) => Outcome { pass: true, detail: format!("{source}: {notes}") },
        Err(e) => Outcome { pass: false, detail: format!("{source}: {e}") },
    }
}

fn main() -> ExitCode {
    let tmp = tempfile::TempDir::new().unwrap();
    let kkt = KktTracker::new();
    let mut results: Vec<(u32, Outcome, f64)> = Vec::new();
    let mut record = |id: u32, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {id:>2}: {} ({secs:.0}s) {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, o, secs));
    };
    record(5, &mut criterion_5);
    record(6, &mut criterion_6);
    record(8, &mut criterion_8);
    record(9, &mut || criterion_9(tmp.path()));
    record(10, &mut || criterion_10(tmp.path()));
    record(4, &mut criterion_4);
    record(1, &mut || criterion_1(&kkt));
    record(2, &mut || criterion_2(&kkt));
    record(7, &mut || criterion_7(&kkt));
    record(3, &mut criterion_3);

    results.sort_by_key(|r| r.0);
    println!("\nsummary");
    for (id, o, _) in &results {
        println!("criterion {id:>2}: {}", if o.pass { "PASS" } else { "FAIL" });
    }
    if results.iter().all(|r| r.1.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
