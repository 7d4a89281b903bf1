//! Two-stage battery planning for AC/DC hybrid distribution networks: size
//! stationary storage over typical days, then rent mobile modules for an
//! event, and write the plan with its hourly dispatch.

mod config;
mod error;
mod plan;
mod report;

pub use config::{Inputs, RunConfig, ScenarioEntry, SolverConfig};
pub use error::{CliError, Result};
pub use plan::{
    revalidate, run_dispatch, run_plan, run_stage1, run_stage2, Case, CaseRecord, PlanResult,
    StageResult, REVALIDATION_TOL, SCHEMA_VERSION,
};
pub use report::{summary, write_report, SCHEMAS};
