//! Outer search for the two-stage battery plan: a genetic algorithm with
//! annealing acceptance sizes stationary units over typical days, then
//! rents mobile modules for an event with the stationary plan frozen.

mod config;
mod error;
mod ga;
mod stage;

pub use config::SearchConfig;
pub use error::{Result, SearchError};
pub use ga::{
    ga_sa_search, random_population, write_trace, FitnessCache, Gene, GeneKind, GenerationStats,
    SearchOutcome, SearchProblem,
};
pub use stage::{
    daily_fade, fitness_stage1, fitness_stage2, lifetimes, MessGene, PlanContext, PlanEvaluation,
    SessGene, Stage1Chromosome, Stage1Problem, Stage2Chromosome, Stage2Problem, INFEASIBLE_FITNESS,
    VIOLATION_FITNESS,
};
