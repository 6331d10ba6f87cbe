//! Simulation lab: data-generating processes, an independent quadrature
//! oracle for the true effect, and the Monte-Carlo study runner.

mod dgp;
mod oracle;
mod study;

pub use dgp::{generate, generate_with, Dgp, TrueHazard, OUTCOME_SD, TAU};
pub use oracle::{monte_carlo_psi, oracle_psi, sample_intervened_time, MonteCarloEstimate};
pub use study::{run_study, StudyConfig, StudyReport, StudyRow};
