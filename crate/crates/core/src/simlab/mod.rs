//! Simulation laboratory: scenario DGPs, their data-adaptive truths and the
//! Monte Carlo harness.

pub mod dgp;
pub mod monte_carlo;
pub mod truth;

pub use dgp::{draw_dgp, outcome_prob, treatment_prob, DgpKind, DgpState};
pub use monte_carlo::{
    metrics_from_records, monte_carlo, table_from_records, AdaptiveScenario, AteScenario, DrawRecord, GSpec,
    MetricsRow, MetricsTable, MonteCarloResult, Scenario,
};
pub use truth::{true_context_ate, true_mean_under_rule};
