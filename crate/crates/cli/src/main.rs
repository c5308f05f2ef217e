//! Command-line front end: estimation, penalty paths, balance diagnostics
//! and simulation studies. Every command writes a run manifest next to its
//! output; `replay` re-runs a manifest.
//!
//! Exit codes: 0 success, 2 usage or validation failure, 3 numerical
//! failure.

mod manifest;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use mr_covsel::estimators::{self, balance_diagnostic, CausalEstimate};
use mr_covsel::inference::{self, DoubleEstimationConfig};
use mr_covsel::lasso::SolverOptions;
use mr_covsel::regularize::{self, CvConfig, CvTarget, RegularizationFit};
use mr_covsel::simulate::{
    preset_scenario, run_study, ScenarioConfig, SparsityRegime, StudyMethod,
};
use mr_covsel::SummaryDataset;

use manifest::RunManifest;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl From<mr_covsel::Error> for CliError {
    fn from(e: mr_covsel::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "mr-covsel", version, about = "Covariate selection for Mendelian randomization from summary data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the causal effect with one method.
    Estimate(EstimateArgs),
    /// Penalty path with per-penalty coefficients and cross-validation loss.
    Path(PathArgs),
    /// Correlations of exposure and covariate associations with outcome residuals.
    Balance(BalanceArgs),
    /// Monte Carlo study of the estimators under a simulation scenario.
    Simulate(SimulateArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Method {
    Ivw,
    MvAll,
    Reg,
    PostReg,
    Balance,
    DoubleEst,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum TargetArg {
    Mse,
    Projected,
}

impl From<TargetArg> for CvTarget {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Mse => CvTarget::Mse,
            TargetArg::Projected => CvTarget::Projected,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct CvArgs {
    /// Cross-validation loss.
    #[arg(long, value_enum, default_value = "mse")]
    cv_target: TargetArg,
    /// Number of folds over variants.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Repeats of the fold split; the penalty is the mean of the per-repeat choices.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Seed for the fold assignment.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of penalty values on the path.
    #[arg(long, default_value_t = 100)]
    n_lambda: usize,
    /// Smallest penalty as a fraction of the largest.
    #[arg(long, default_value_t = 1e-4)]
    lambda_min_ratio: f64,
    /// Penalize covariate effects on their original scale.
    #[arg(long)]
    no_standardize: bool,
}

impl CvArgs {
    fn config(&self) -> CvConfig {
        CvConfig {
            n_folds: self.folds,
            n_lambda: self.n_lambda,
            lambda_min_ratio: self.lambda_min_ratio,
            target: self.cv_target.into(),
            n_repeats: self.repeats,
            rng_seed: self.seed,
            solver: SolverOptions {
                standardize: !self.no_standardize,
                ..SolverOptions::default()
            },
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct OutputArgs {
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Manifest file [default: <out>.manifest.json].
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct EstimateArgs {
    /// Summary data CSV: variant_id,beta_x,beta_w_<name>...,beta_y,se_y.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    /// Independent dataset used only to select covariates (post-reg only).
    #[arg(long)]
    select_data: Option<PathBuf>,
    /// Comma list of covariates to keep; the others are dropped first.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    #[command(flatten)]
    cv: CvArgs,
    /// JSON report [default: estimate.json].
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
struct PathArgs {
    #[arg(long)]
    data: PathBuf,
    /// Skip cross-validation; cv_loss is left empty and no penalty is flagged.
    #[arg(long)]
    no_cv: bool,
    #[command(flatten)]
    cv: CvArgs,
    /// CSV output [default: path.csv].
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
struct BalanceArgs {
    #[arg(long)]
    data: PathBuf,
    /// Covariate set to adjust for: `none`, `all` or a comma list of names.
    /// Repeat the flag, or separate sets with `;`.
    #[arg(long = "sets", required = true)]
    sets: Vec<String>,
    /// Use raw associations and an unweighted regression.
    #[arg(long)]
    unweighted: bool,
    /// CSV output [default: balance.csv].
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SimulateArgs {
    /// Preset scenario, 1 to 4.
    #[arg(long, conflicts_with = "config")]
    scenario: Option<u32>,
    /// Scenario file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    theta: Option<f64>,
    /// Number of covariates with a direct effect on the outcome.
    #[arg(long)]
    n_pleio: Option<usize>,
    /// outcome_effects or variant_effects.
    #[arg(long)]
    regime: Option<String>,
    /// Independent samples per replicate, 2 or 3.
    #[arg(long)]
    datasets: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    /// Seed for data generation and fold assignment.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma list from ivw, reg, post_reg, mv_all, oracle, two_sample_a,
    /// two_sample_b, three_sample_a, three_sample_b, double_est.
    #[arg(long, default_value = "ivw,reg,post_reg,mv_all,oracle")]
    methods: String,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, value_enum, default_value = "mse")]
    cv_target: TargetArg,
    /// CSV output [default: simulation.csv].
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Write the output here instead of the recorded path.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Finished {
    inputs: Vec<PathBuf>,
    output: PathBuf,
    config: serde_json::Value,
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match dispatch(cli.command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Usage(m) | CliError::Numerical(m)) = &e;
            eprintln!("error: {m}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command, args: Vec<String>) -> Result<()> {
    let start = Instant::now();
    let (name, output_args, done) = match command {
        Command::Replay(r) => return replay(&r),
        Command::Estimate(a) => ("estimate", a.output.clone(), cmd_estimate(&a)?),
        Command::Path(a) => ("path", a.output.clone(), cmd_path(&a)?),
        Command::Balance(a) => ("balance", a.output.clone(), cmd_balance(&a)?),
        Command::Simulate(a) => ("simulate", a.output.clone(), cmd_simulate(&a)?),
    };
    let manifest_path = manifest::default_path(&done.output, output_args.manifest.as_deref());
    let m = RunManifest {
        command: name.to_string(),
        args,
        working_dir: std::env::current_dir().unwrap_or_default(),
        inputs: done.inputs,
        outputs: vec![done.output.clone()],
        config: done.config,
        seed: done.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    m.write(&manifest_path)?;
    info!("wrote {} and {}", done.output.display(), manifest_path.display());
    Ok(())
}

fn replay(r: &ReplayArgs) -> Result<()> {
    let m = RunManifest::read(&r.manifest)?;
    let mut args = m.args.clone();
    if matches!(args.first().map(String::as_str), Some("replay") | None) {
        return Err(CliError::Usage(format!(
            "{} does not record a replayable command",
            r.manifest.display()
        )));
    }
    if let Some(out) = &r.out {
        let out = std::path::absolute(out)
            .map_err(|e| CliError::Usage(format!("bad output path {}: {e}", out.display())))?;
        args = strip_flags(&args, &["--out", "--manifest"]);
        args.push("--out".into());
        args.push(out.to_string_lossy().into_owned());
    }
    std::env::set_current_dir(&m.working_dir).map_err(|e| {
        CliError::Usage(format!("cannot enter {}: {e}", m.working_dir.display()))
    })?;
    let cli = Cli::try_parse_from(std::iter::once("mr-covsel".to_string()).chain(args.iter().cloned()))
        .map_err(|e| CliError::Usage(format!("manifest arguments no longer parse: {e}")))?;
    dispatch(cli.command, args)
}

/// Drops `--flag value` and `--flag=value` occurrences.
fn strip_flags(args: &[String], flags: &[&str]) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut skip_next = false;
    for a in args {
        if skip_next {
            skip_next = false;
            continue;
        }
        if flags.contains(&a.as_str()) {
            skip_next = true;
            continue;
        }
        if flags.iter().any(|f| a.starts_with(&format!("{f}="))) {
            continue;
        }
        out.push(a.clone());
    }
    out
}

fn load(path: &Path) -> Result<SummaryDataset> {
    Ok(SummaryDataset::load_csv(path)?)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    method: Method,
    estimate: &'a CausalEstimate,
    selected: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<&'a RegularizationFit>,
}

fn restrict(d: SummaryDataset, keep: Option<&Vec<String>>) -> Result<SummaryDataset> {
    match keep {
        Some(names) => Ok(d.subset_covariates(names)?),
        None => Ok(d),
    }
}

fn cmd_estimate(a: &EstimateArgs) -> Result<Finished> {
    let d = restrict(load(&a.data)?, a.covariates.as_ref())?;
    let cv = a.cv.config();
    let mut inputs = vec![a.data.clone()];
    if a.select_data.is_some() && a.method != Method::PostReg {
        return Err(CliError::Usage(
            "--select-data only applies to --method post-reg".into(),
        ));
    }
    let (estimate, fit) = match a.method {
        Method::Ivw => (estimators::ivw(&d)?, None),
        Method::MvAll => (estimators::mv_ivw(&d)?, None),
        Method::Balance => (estimators::balancing_estimate(&d)?, None),
        Method::Reg => {
            let fit = regularize::cross_validate(&d, &cv)?;
            (regularize::regularized_estimate(&fit)?, Some(fit))
        }
        Method::PostReg => {
            let res = match &a.select_data {
                Some(path) => {
                    inputs.push(path.clone());
                    let sel = restrict(load(path)?, a.covariates.as_ref())?;
                    inference::three_sample_ci(&sel, &d, &cv)?
                }
                None => inference::two_sample_ci(&d, &cv)?,
            };
            (res.estimate, res.fit)
        }
        Method::DoubleEst => {
            let res = inference::double_estimation_ci(&d, &DoubleEstimationConfig::from(cv.clone()))?;
            (res.estimate, res.fit)
        }
    };
    let selected = estimate.covariates_used.clone();

    let mut stdout = std::io::stdout().lock();
    let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.6}"));
    let _ = writeln!(stdout, "method     {}", a.method.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default());
    let _ = writeln!(stdout, "variants   {}", d.n_variants());
    let _ = writeln!(stdout, "theta_hat  {:.6}", estimate.theta_hat);
    let _ = writeln!(stdout, "se         {}", fmt(estimate.se_theta));
    let _ = writeln!(
        stdout,
        "95% CI     {}",
        estimate
            .ci
            .map_or("NA".to_string(), |c| format!("({:.6}, {:.6})", c.low, c.high))
    );
    let _ = writeln!(
        stdout,
        "selected   {}",
        if selected.is_empty() { "(none)".to_string() } else { selected.join(", ") }
    );

    let report = EstimateReport {
        method: a.method,
        estimate: &estimate,
        selected,
        fit: fit.as_ref(),
    };
    let output = a.output.out.clone().unwrap_or_else(|| PathBuf::from("estimate.json"));
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Usage(format!("cannot encode report: {e}")))?;
    text.push('\n');
    write_file(&output, text.as_bytes())?;
    Ok(Finished {
        inputs,
        output,
        config: to_json(a),
        seed: Some(cv.rng_seed),
    })
}

fn cmd_path(a: &PathArgs) -> Result<Finished> {
    let d = load(&a.data)?;
    let cv = a.cv.config();
    let fit = if a.no_cv {
        regularize::fit_path(&d, cv.n_lambda, cv.lambda_min_ratio, &cv.solver)?
    } else {
        regularize::cross_validate(&d, &cv)?
    };
    let mut buf = Vec::new();
    fit.write_path_csv(&mut buf)
        .map_err(|e| CliError::Usage(format!("cannot format path: {e}")))?;
    let output = a.output.out.clone().unwrap_or_else(|| PathBuf::from("path.csv"));
    write_file(&output, &buf)?;
    Ok(Finished {
        inputs: vec![a.data.clone()],
        output,
        config: to_json(a),
        seed: (!a.no_cv).then_some(cv.rng_seed),
    })
}

/// Splits the `--sets` values into (label, covariates) pairs.
fn parse_sets(specs: &[String], d: &SummaryDataset) -> Result<Vec<(String, Vec<String>)>> {
    let mut sets = Vec::new();
    for spec in specs.iter().flat_map(|s| s.split(';')) {
        let spec = spec.trim();
        if spec.is_empty() {
            continue;
        }
        let names: Vec<String> = match spec {
            "none" => Vec::new(),
            "all" => d.covariate_names().to_vec(),
            list => list
                .split(',')
                .map(|n| n.trim().to_string())
                .filter(|n| !n.is_empty())
                .collect(),
        };
        d.covariate_indices(&names)?;
        let label = match spec {
            "none" | "all" => spec.to_string(),
            _ => names.join("+"),
        };
        sets.push((label, names));
    }
    if sets.is_empty() {
        return Err(CliError::Usage("--sets names no covariate set".into()));
    }
    Ok(sets)
}

fn cmd_balance(a: &BalanceArgs) -> Result<Finished> {
    let d = load(&a.data)?;
    let sets = parse_sets(&a.sets, &d)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Usage(format!("cannot format balance table: {e}"));
    w.write_record(["set_label", "trait", "correlation"]).map_err(csv_err)?;
    for (label, names) in &sets {
        let diag = balance_diagnostic(&d, names, !a.unweighted)?;
        for (t, c) in diag.trait_names.iter().zip(&diag.correlations) {
            w.write_record([label.as_str(), t.as_str(), &format!("{c:?}")]).map_err(csv_err)?;
        }
    }
    let buf = w
        .into_inner()
        .map_err(|e| CliError::Usage(format!("cannot format balance table: {e}")))?;
    let output = a.output.out.clone().unwrap_or_else(|| PathBuf::from("balance.csv"));
    write_file(&output, &buf)?;
    Ok(Finished {
        inputs: vec![a.data.clone()],
        output,
        config: to_json(a),
        seed: None,
    })
}

#[derive(Serialize)]
struct SimulationEcho<'a> {
    scenario: &'a ScenarioConfig,
    methods: Vec<&'static str>,
    reps: usize,
    threads: usize,
    cv: &'a CvConfig,
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Finished> {
    if a.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    let mut inputs = Vec::new();
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            inputs.push(path.clone());
            ScenarioConfig::default().apply_config_str(&text)?
        }
        None => preset_scenario(a.scenario.unwrap_or(1))?,
    };
    if let Some(t) = a.theta {
        cfg.theta = t;
    }
    if let Some(n) = a.n_pleio {
        cfg.n_pleiotropic = n;
    }
    if let Some(r) = &a.regime {
        cfg.sparsity_regime = r.parse::<SparsityRegime>()?;
    }
    if let Some(s) = a.seed {
        cfg.rng_seed = s;
    }
    let methods = a
        .methods
        .split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(str::parse::<StudyMethod>)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    match a.datasets {
        Some(n) => cfg.n_datasets = n,
        None => {
            if methods
                .iter()
                .any(|m| matches!(m, StudyMethod::ThreeSampleA | StudyMethod::ThreeSampleB))
            {
                cfg.n_datasets = 3;
            }
        }
    }
    let cv = CvConfig {
        n_folds: a.folds,
        target: a.cv_target.into(),
        rng_seed: cfg.rng_seed,
        ..CvConfig::default()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} threads: {e}", a.threads)))?;
    let report = pool.install(|| run_study(&cfg, &methods, a.reps, &cv))?;
    let mut buf = Vec::new();
    report
        .write_csv(&mut buf)
        .map_err(|e| CliError::Usage(format!("cannot format report: {e}")))?;
    let output = a.output.out.clone().unwrap_or_else(|| PathBuf::from("simulation.csv"));
    write_file(&output, &buf)?;
    let echo = SimulationEcho {
        scenario: &cfg,
        methods: methods.iter().map(|m| m.name()).collect(),
        reps: a.reps,
        threads: a.threads,
        cv: &cv,
    };
    Ok(Finished {
        inputs,
        output,
        config: to_json(&echo),
        seed: Some(cfg.rng_seed),
    })
}
