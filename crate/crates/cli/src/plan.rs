//! Two-stage orchestration: stationary sizing, then mobile rental with the
//! stationary plan frozen, with every solved day kept for reporting.

use std::path::Path;

use duostore_conic::ClarabelBackend;
use duostore_core::economics::CostReport;
use duostore_core::net::Stage;
use duostore_core::storage::StorageDesign;
use duostore_dispatch::{build, violation_dispatch, DispatchSolution};
use duostore_search::{
    ga_sa_search, FitnessCache, GenerationStats, PlanContext, PlanEvaluation, SearchOutcome,
    Stage1Problem, Stage2Problem,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Inputs, RunConfig};
use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Relative objective drift tolerated when a chosen plan is re-solved.
pub const REVALIDATION_TOL: f64 = 1e-6;

/// Which storage a solved day carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// No storage.
    Baseline,
    /// Stationary units only.
    Stationary,
    /// Stationary units plus rented modules.
    Joint,
    /// A design given on the command line.
    Fixed,
}

impl Case {
    pub fn as_str(self) -> &'static str {
        match self {
            Case::Baseline => "baseline",
            Case::Stationary => "stationary",
            Case::Joint => "joint",
            Case::Fixed => "fixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub stage: Stage,
    pub case: Case,
    pub solution: DispatchSolution,
}

impl CaseRecord {
    pub fn scenario(&self) -> &str {
        &self.solution.scenario
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub designs: Vec<StorageDesign>,
    pub report: CostReport,
    /// Battery life of each stationary unit, years (stage 1 only).
    pub lifetimes: Vec<f64>,
    pub max_socr_gap: f64,
    pub feasible: bool,
    pub fitness: f64,
    pub evaluations: usize,
    pub trace: Vec<GenerationStats>,
}

impl StageResult {
    fn new(ev: PlanEvaluation, out: SearchOutcome) -> Self {
        Self {
            designs: ev.designs,
            report: ev.report,
            lifetimes: ev.lifetimes,
            max_socr_gap: ev.max_socr_gap,
            feasible: ev.feasible,
            fitness: ev.fitness,
            evaluations: out.evaluations,
            trace: out.history,
        }
    }
}

/// Persisted outcome of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub schema_version: u32,
    pub network: String,
    pub seed: u64,
    pub stage1: Option<StageResult>,
    pub stage2: Option<StageResult>,
    pub cases: Vec<CaseRecord>,
}

impl PlanResult {
    fn new(cfg: &RunConfig, inputs: &Inputs) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            network: inputs.net.name.clone(),
            seed: cfg.seed(),
            stage1: None,
            stage2: None,
            cases: Vec::new(),
        }
    }

    /// Stationary then mobile designs.
    pub fn designs(&self) -> Vec<StorageDesign> {
        self.stage1
            .iter()
            .chain(&self.stage2)
            .flat_map(|s| s.designs.iter().cloned())
            .collect()
    }

    pub fn feasible(&self) -> bool {
        self.stage1.iter().chain(&self.stage2).all(|s| s.feasible)
    }

    pub fn case(&self, scenario: &str, case: Case) -> Option<&CaseRecord> {
        self.cases.iter().find(|c| c.scenario() == scenario && c.case == case)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let format = |message: String| CliError::Format {
            path: path.display().to_string(),
            message,
        };
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| format(e.to_string()))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            other => return Err(format(format!("unsupported schema_version {other:?}"))),
        }
        serde_json::from_value(value).map_err(|e| format(e.to_string()))
    }
}

fn soft(ctx: &PlanContext, designs: &[StorageDesign], stage: Stage, case: Case) -> Result<Vec<CaseRecord>> {
    ctx.scenarios
        .par_iter()
        .map(|s| {
            let solution = violation_dispatch(&ctx.net, s, designs, &ctx.opts, &ClarabelBackend::default(), &ctx.mip)?;
            Ok(CaseRecord { stage, case, solution })
        })
        .collect()
}

fn records(solutions: &[DispatchSolution], stage: Stage, case: Case) -> Vec<CaseRecord> {
    solutions
        .iter()
        .map(|s| CaseRecord {
            stage,
            case,
            solution: s.clone(),
        })
        .collect()
}

/// Solves the chosen plan again and checks that every scenario reproduces
/// the objective seen during the search. A wall-clock budget makes the tree
/// search timing dependent, so drift is only logged when one is set.
fn recheck(cfg: &RunConfig, ctx: &PlanContext, designs: &[StorageDesign], solutions: &[DispatchSolution]) -> Result<()> {
    match revalidate(ctx, designs, solutions) {
        Err(CliError::Revalidation(m)) if cfg.solver.time_limit_s.is_some() => {
            log::warn!("{m}");
            Ok(())
        }
        r => r,
    }
}

pub fn revalidate(ctx: &PlanContext, designs: &[StorageDesign], solutions: &[DispatchSolution]) -> Result<()> {
    ctx.scenarios.par_iter().zip(solutions).try_for_each(|(s, seen)| {
        let again = build(&ctx.net, s, designs, &ctx.opts)?.solve(&ClarabelBackend::default(), &ctx.mip)?;
        let scale = seen.objective.abs().max(1.0);
        if (again.objective - seen.objective).abs() > REVALIDATION_TOL * scale {
            return Err(CliError::Revalidation(format!(
                "scenario {}: objective {} on re-solve, {} during search",
                s.id, again.objective, seen.objective
            )));
        }
        Ok(())
    })
}

fn search_threads<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> T + Send) -> Result<T> {
    match cfg.solver.jobs {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| CliError::Validation(format!("worker pool: {e}"))),
    }
}

/// Sizes the stationary units over the stage-1 days.
pub fn run_stage1(cfg: &RunConfig, inputs: &Inputs) -> Result<PlanResult> {
    search_threads(cfg, || stage1(cfg, inputs))?
}

fn stage1(cfg: &RunConfig, inputs: &Inputs) -> Result<PlanResult> {
    let ctx = cfg.context(inputs, Stage::Stage1);
    if ctx.scenarios.is_empty() {
        return Err(CliError::Validation("no stage1 scenarios".into()));
    }
    let search = cfg.search_config();
    let problem = Stage1Problem::new(ctx, &search)?;
    log::info!("stage 1: {} sites, {} scenarios", problem.sites.len(), problem.ctx.scenarios.len());
    let out = ga_sa_search(&problem, Vec::new(), &search, &FitnessCache::default())?;
    let ev = problem.evaluate(&problem.chromosome(&out.best));
    log::info!("stage 1: fitness {:.2} after {} evaluations", ev.fitness, out.evaluations);

    let mut result = PlanResult::new(cfg, inputs);
    result.cases = records(problem.baseline(), Stage::Stage1, Case::Baseline);
    if ev.feasible {
        recheck(cfg, &problem.ctx, &ev.designs, &ev.solutions)?;
        result.cases.extend(records(&ev.solutions, Stage::Stage1, Case::Stationary));
    } else {
        result.cases.extend(soft(&problem.ctx, &ev.designs, Stage::Stage1, Case::Stationary)?);
    }
    result.stage1 = Some(StageResult::new(ev, out));
    Ok(result)
}

/// Rents mobile modules for the stage-2 days on top of a stage-1 result.
/// The stationary designs are copied, never changed.
pub fn run_stage2(cfg: &RunConfig, inputs: &Inputs, stage1: &PlanResult) -> Result<PlanResult> {
    search_threads(cfg, || stage2(cfg, inputs, stage1))?
}

fn stage2(cfg: &RunConfig, inputs: &Inputs, stage1: &PlanResult) -> Result<PlanResult> {
    let s1 = stage1
        .stage1
        .as_ref()
        .ok_or_else(|| CliError::Sequencing("stage 2 needs a stage-1 result".into()))?;
    let ctx = cfg.context(inputs, Stage::Stage2);
    if ctx.scenarios.is_empty() {
        return Err(CliError::Validation("no stage2 scenarios".into()));
    }
    let search = cfg.search_config();
    let sess = s1.designs.clone();
    let problem = Stage2Problem::new(ctx, sess.clone(), cfg.rent_budget(), &search)?;
    log::info!("stage 2: {} sites, {} scenarios", problem.sites.len(), problem.ctx.scenarios.len());
    let out = ga_sa_search(&problem, Vec::new(), &search, &FitnessCache::default())?;
    let ev = problem.evaluate(&problem.chromosome(&out.best));
    log::info!("stage 2: fitness {:.2} after {} evaluations", ev.fitness, out.evaluations);

    let ctx = &problem.ctx;
    let joint: Vec<StorageDesign> = sess.iter().chain(&ev.designs).cloned().collect();
    let mut result = stage1.clone();
    result.cases.retain(|c| c.stage != Stage::Stage2);
    result.cases.extend(soft(ctx, &[], Stage::Stage2, Case::Baseline)?);
    result.cases.extend(soft(ctx, &sess, Stage::Stage2, Case::Stationary)?);
    if ev.feasible {
        recheck(cfg, ctx, &joint, &ev.solutions)?;
        result.cases.extend(records(&ev.solutions, Stage::Stage2, Case::Joint));
    } else {
        result.cases.extend(soft(ctx, &joint, Stage::Stage2, Case::Joint)?);
    }
    result.stage2 = Some(StageResult::new(ev, out));
    Ok(result)
}

/// Both stages back to back.
pub fn run_plan(cfg: &RunConfig, inputs: &Inputs) -> Result<PlanResult> {
    let first = run_stage1(cfg, inputs)?;
    run_stage2(cfg, inputs, &first)
}

/// One scenario under a fixed set of designs, with hard limits or, when
/// `relaxed`, with soft limits that count violations.
pub fn run_dispatch(
    cfg: &RunConfig,
    inputs: &Inputs,
    scenario: &str,
    designs: &[StorageDesign],
    relaxed: bool,
) -> Result<PlanResult> {
    let s = inputs.scenario(scenario)?;
    let mut opts = cfg.dispatch_options();
    opts.penalty_relaxed = relaxed;
    let solution = build(&inputs.net, s, designs, &opts)?.solve(&ClarabelBackend::default(), &cfg.mip_options())?;
    let mut result = PlanResult::new(cfg, inputs);
    result.cases.push(CaseRecord {
        stage: s.stage,
        case: if designs.is_empty() { Case::Baseline } else { Case::Fixed },
        solution,
    });
    Ok(result)
}
