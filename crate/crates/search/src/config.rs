use serde::{Deserialize, Serialize};

use crate::error::{Result, SearchError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    /// Standard deviation of real-gene mutation as a fraction of the gene range.
    pub mutation_scale: f64,
    pub elitism: usize,
    /// Initial annealing temperature as a fraction of the initial best fitness.
    pub t0_fraction: f64,
    pub cooling: f64,
    pub tournament: usize,
    pub seed: u64,
    /// Grid resolution of the sizing genes; coarser grids give more cache hits.
    pub energy_step_kwh: f64,
    pub power_step_kw: f64,
    pub soc_step: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            population: 24,
            generations: 60,
            crossover_rate: 0.8,
            mutation_rate: 0.1,
            mutation_scale: 0.1,
            elitism: 2,
            t0_fraction: 0.1,
            cooling: 0.95,
            tournament: 2,
            seed: 7,
            energy_step_kwh: 50.0,
            power_step_kw: 25.0,
            soc_step: 0.05,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SearchError::Config(m.to_string()));
        if self.population < 2 {
            return bad("population must be at least 2");
        }
        if self.elitism >= self.population {
            return bad("elitism must leave room for offspring");
        }
        for (name, v) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SearchError::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return bad("cooling must lie in (0, 1)");
        }
        if !(self.t0_fraction >= 0.0 && self.mutation_scale >= 0.0) {
            return bad("t0_fraction and mutation_scale must be non-negative");
        }
        if !(self.energy_step_kwh > 0.0 && self.power_step_kw > 0.0 && self.soc_step > 0.0) {
            return bad("gene steps must be positive");
        }
        if self.tournament == 0 {
            return bad("tournament size must be positive");
        }
        Ok(())
    }
}
