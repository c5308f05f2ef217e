//! Simulation of individual-level data from the structural model and
//! Monte Carlo comparison of the estimators.

pub mod config;
pub mod dgp;
pub mod study;

pub use config::{preset_scenario, ScenarioConfig, SparsityRegime};
pub use dgp::{generate_replicate, mean_exposure_r2, Replicate, TrueParameters};
pub use study::{
    run_study, run_study_observed, MethodSummary, SimulationReport, StudyMethod,
};
