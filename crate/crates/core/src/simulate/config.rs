use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

/// Where sparsity sits in the true model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityRegime {
    /// Every covariate is associated with the variants; only some affect
    /// the outcome (zero entries of `delta`).
    OutcomeEffects,
    /// Every covariate affects the outcome; only some are associated with
    /// the variants (zero columns of `beta_w`).
    VariantEffects,
}

impl FromStr for SparsityRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "outcome_effects" | "outcome" => Ok(SparsityRegime::OutcomeEffects),
            "variant_effects" | "variant" => Ok(SparsityRegime::VariantEffects),
            other => Err(Error::InvalidArgument(format!("unknown sparsity regime `{other}`"))),
        }
    }
}

impl fmt::Display for SparsityRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SparsityRegime::OutcomeEffects => "outcome_effects",
            SparsityRegime::VariantEffects => "variant_effects",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub p: usize,
    pub k: usize,
    /// Individuals per simulated sample.
    pub n: usize,
    /// Effect-allele frequency.
    pub maf: f64,
    pub beta_x_range: (f64, f64),
    pub beta_w_range: (f64, f64),
    /// Range of the nonzero covariate effects on the outcome.
    pub delta_range: (f64, f64),
    pub n_pleiotropic: usize,
    pub sparsity_regime: SparsityRegime,
    pub theta: f64,
    pub gamma_x: f64,
    pub gamma_y: f64,
    /// Confounder loading of each covariate; `None` means `1/k`.
    pub gamma_w: Option<f64>,
    /// 2 for the two-sample design, 3 to add an independent selection sample.
    pub n_datasets: usize,
    pub rng_seed: u64,
    /// Draw the true parameters once and reuse them for every replicate.
    pub freeze_parameters: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            p: 10,
            k: 8,
            n: 20_000,
            maf: 0.3,
            beta_x_range: (0.15, 0.3),
            beta_w_range: (-0.2, 0.4),
            delta_range: (-0.2, 0.3),
            n_pleiotropic: 1,
            sparsity_regime: SparsityRegime::OutcomeEffects,
            theta: 0.2,
            gamma_x: 1.0,
            gamma_y: 1.0,
            gamma_w: None,
            n_datasets: 2,
            rng_seed: 0,
            freeze_parameters: false,
        }
    }
}

/// The four published simulation designs: p = 10 with k = 8 or 12, and
/// p = 80 with k = 70 or 90.
pub fn preset_scenario(id: u32) -> Result<ScenarioConfig> {
    let base = ScenarioConfig::default();
    let cfg = match id {
        1 => ScenarioConfig { p: 10, k: 8, ..base },
        2 => ScenarioConfig { p: 10, k: 12, ..base },
        3 | 4 => ScenarioConfig {
            p: 80,
            k: if id == 3 { 70 } else { 90 },
            beta_x_range: (0.05, 0.12),
            beta_w_range: (0.05, 0.12),
            n_pleiotropic: 7,
            ..base
        },
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown scenario {other}; expected 1, 2, 3 or 4"
            )))
        }
    };
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn gamma_w(&self) -> f64 {
        self.gamma_w
            .unwrap_or(if self.k == 0 { 0.0 } else { 1.0 / self.k as f64 })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.p < 2 {
            return bad(format!("p = {} (need at least 2 variants)", self.p));
        }
        if self.n < 3 {
            return bad(format!("n = {} individuals is too small", self.n));
        }
        if !(self.maf > 0.0 && self.maf < 1.0) {
            return bad(format!("allele frequency {} outside (0, 1)", self.maf));
        }
        if self.n_pleiotropic > self.k {
            return bad(format!(
                "{} pleiotropic covariates but only {} covariates",
                self.n_pleiotropic, self.k
            ));
        }
        for (name, (lo, hi)) in [
            ("beta_x_range", self.beta_x_range),
            ("beta_w_range", self.beta_w_range),
            ("delta_range", self.delta_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name} ({lo}, {hi}) is not an ordered finite range"));
            }
        }
        if !(2..=3).contains(&self.n_datasets) {
            return bad(format!("n_datasets = {} (must be 2 or 3)", self.n_datasets));
        }
        Ok(())
    }

    /// Applies `key = value` lines (`#` starts a comment) on top of `self`.
    ///
    /// Recognized keys: `scenario` (replaces everything with a preset, so
    /// put it first), `p`, `k`, `n`, `maf`, `beta_x_range`, `beta_w_range`,
    /// `delta_range` (as `low, high`), `n_pleiotropic`, `regime`, `theta`,
    /// `gamma_x`, `gamma_y`, `gamma_w`, `n_datasets`, `seed`,
    /// `freeze_parameters`.
    pub fn apply_config_str(mut self, text: &str) -> Result<Self> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::InvalidArgument(format!("config line {}: {m}", lineno + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| -> Result<f64> {
                v.parse::<f64>().map_err(|_| err(format!("`{v}` is not a number")))
            };
            let int = |v: &str| -> Result<usize> {
                v.parse::<usize>()
                    .map_err(|_| err(format!("`{v}` is not a non-negative integer")))
            };
            let range = |v: &str| -> Result<(f64, f64)> {
                let (a, b) = v
                    .split_once(',')
                    .ok_or_else(|| err(format!("expected `low, high`, got `{v}`")))?;
                Ok((num(a.trim())?, num(b.trim())?))
            };
            match key {
                "scenario" => {
                    let id = value
                        .parse::<u32>()
                        .map_err(|_| err(format!("bad scenario `{value}`")))?;
                    self = preset_scenario(id)?;
                }
                "p" => self.p = int(value)?,
                "k" => self.k = int(value)?,
                "n" => self.n = int(value)?,
                "maf" => self.maf = num(value)?,
                "beta_x_range" => self.beta_x_range = range(value)?,
                "beta_w_range" => self.beta_w_range = range(value)?,
                "delta_range" => self.delta_range = range(value)?,
                "n_pleiotropic" => self.n_pleiotropic = int(value)?,
                "regime" => self.sparsity_regime = value.parse()?,
                "theta" => self.theta = num(value)?,
                "gamma_x" => self.gamma_x = num(value)?,
                "gamma_y" => self.gamma_y = num(value)?,
                "gamma_w" => self.gamma_w = Some(num(value)?),
                "n_datasets" => self.n_datasets = int(value)?,
                "seed" => {
                    self.rng_seed = value
                        .parse()
                        .map_err(|_| err(format!("bad seed `{value}`")))?
                }
                "freeze_parameters" => {
                    self.freeze_parameters = value
                        .parse()
                        .map_err(|_| err(format!("expected true/false, got `{value}`")))?
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        self.validate()?;
        Ok(self)
    }
}
