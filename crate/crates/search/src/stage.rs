//! The two planning problems: stationary sizing over typical days, then
//! mobile module rental over an event with the stationary plan frozen.

use duostore_conic::{ClarabelBackend, MipOptions};
use duostore_core::degradation::{daily_degradation, lifetime_years, rainflow, soc_average};
use duostore_core::economics::{
    mess_rent, operating_cash, stage1_report, stage2_report, CostReport, DispatchLedger,
};
use duostore_core::net::{HybridNetwork, Placement, Scenario, StorageKind};
use duostore_core::storage::{soc_floors, BessRating, StorageDesign};
use duostore_dispatch::{
    build, violation_dispatch, DeviceTrace, DispatchError, DispatchOptions, DispatchSolution,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SearchConfig;
use crate::error::{Result, SearchError};
use crate::ga::{Gene, SearchProblem};

/// Fitness of a plan whose dispatch has no feasible point under the hard
/// limits.
pub const INFEASIBLE_FITNESS: f64 = 1e9;
/// Added per bus-hour or branch-hour over its limit in the soft-limit
/// solve of an infeasible plan, so the search can still rank such plans.
pub const VIOLATION_FITNESS: f64 = 1e6;

/// Network, scenario set and dispatch settings shared by every evaluation.
#[derive(Debug, Clone)]
pub struct PlanContext {
    pub net: HybridNetwork,
    pub scenarios: Vec<Scenario>,
    pub opts: DispatchOptions,
    pub mip: MipOptions,
}

impl PlanContext {
    fn solve(&self, designs: &[StorageDesign]) -> std::result::Result<Vec<DispatchSolution>, DispatchError> {
        self.scenarios
            .par_iter()
            .map(|s| build(&self.net, s, designs, &self.opts)?.solve(&ClarabelBackend::default(), &self.mip))
            .collect()
    }

    /// Bus-hours plus branch-hours over their limits with soft limits.
    pub fn soft_violations(&self, designs: &[StorageDesign]) -> usize {
        self.scenarios
            .par_iter()
            .map(|s| {
                violation_dispatch(&self.net, s, designs, &self.opts, &ClarabelBackend::default(), &self.mip)
                    .map_or(self.net.buses.len() * s.price.len(), |sol| sol.violations())
            })
            .sum()
    }

    /// Hard-limit solves of a fixed plan, falling back to the soft-limit
    /// model for scenarios where the hard limits cannot be met.
    pub fn reference(&self, designs: &[StorageDesign]) -> Result<Vec<DispatchSolution>> {
        self.scenarios
            .par_iter()
            .map(|s| {
                let backend = ClarabelBackend::default();
                let hard = build(&self.net, s, designs, &self.opts).and_then(|m| m.solve(&backend, &self.mip));
                match hard {
                    Ok(sol) => Ok(sol),
                    Err(DispatchError::Infeasible { .. } | DispatchError::NoSolution { .. }) => {
                        violation_dispatch(&self.net, s, designs, &self.opts, &backend, &self.mip)
                    }
                    Err(e) => Err(e),
                }
                .map_err(|source| SearchError::Baseline {
                    scenario: s.id.clone(),
                    source,
                })
            })
            .collect()
    }
}

/// A plan with its solved scenarios and costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEvaluation {
    pub designs: Vec<StorageDesign>,
    /// Empty when the plan is infeasible.
    pub solutions: Vec<DispatchSolution>,
    pub report: CostReport,
    /// Battery life per stationary device, years (stage 1 only).
    pub lifetimes: Vec<f64>,
    pub max_socr_gap: f64,
    pub feasible: bool,
    /// Soft-limit violations of an infeasible plan.
    pub violations: usize,
    pub fitness: f64,
    pub failure: Option<String>,
}

impl PlanEvaluation {
    fn infeasible(ctx: &PlanContext, designs: Vec<StorageDesign>, err: String) -> Self {
        let violations = ctx.soft_violations(&designs);
        log::debug!("infeasible plan ({err}), {violations} soft violations");
        Self {
            designs,
            solutions: Vec::new(),
            report: CostReport::default(),
            lifetimes: Vec::new(),
            max_socr_gap: f64::NAN,
            feasible: false,
            violations,
            fitness: INFEASIBLE_FITNESS + VIOLATION_FITNESS * violations as f64,
            failure: Some(err),
        }
    }
}

/// Capacity fade of one device over one solved day, from rainflow cycles at
/// the container temperature (or the middle of the container window when
/// temperatures are not modelled).
pub fn daily_fade(d: &DeviceTrace, opts: &DispatchOptions) -> Result<f64> {
    let temps: Vec<f64> = if d.thermal.states.len() == d.soc.len() {
        d.thermal.states.iter().map(|s| s.t_cess).collect()
    } else {
        vec![opts.t_ref(); d.soc.len()]
    };
    let cycles = rainflow(&d.soc, &temps)?;
    Ok(daily_degradation(soc_average(&d.soc), &cycles, &opts.degradation)?)
}

/// Battery life of each device across weighted scenario solutions.
pub fn lifetimes(solutions: &[DispatchSolution], opts: &DispatchOptions) -> Result<Vec<f64>> {
    let Some(first) = solutions.first() else {
        return Ok(Vec::new());
    };
    (0..first.devices.len())
        .map(|k| {
            let mut annual = 0.0;
            for s in solutions {
                annual += s.weight_days * daily_fade(&s.devices[k], opts)?;
            }
            Ok(lifetime_years(annual, &opts.degradation, opts.econ.project_years))
        })
        .collect()
}

fn ledgers(solutions: &[DispatchSolution], keep: Option<StorageKind>) -> Vec<DispatchLedger> {
    solutions
        .iter()
        .map(|s| {
            let mut l = s.ledger();
            if let Some(kind) = keep {
                l.devices.retain(|d| d.kind == Some(kind));
            }
            l
        })
        .collect()
}

fn max_gap(solutions: &[DispatchSolution]) -> f64 {
    solutions.iter().map(|s| s.socr_gap).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessGene {
    pub node: u32,
    pub e_rate_kwh: f64,
    pub p_rate_kw: f64,
    pub soc0: f64,
    pub q_enable: bool,
}

/// Four genes per stationary site: energy, power, initial SOC and the
/// reactive-capability bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Chromosome {
    pub sites: Vec<SessGene>,
}

impl Stage1Chromosome {
    pub fn designs(&self, placements: &[Placement]) -> Vec<StorageDesign> {
        self.sites
            .iter()
            .zip(placements)
            .map(|(g, p)| {
                let mut d = StorageDesign::sess(g.node, g.e_rate_kwh, g.p_rate_kw, g.soc0);
                d.q_enable = g.q_enable;
                d.colocated = p.colocated;
                d
            })
            .filter(|d| !d.is_empty())
            .collect()
    }
}

pub struct Stage1Problem {
    pub ctx: PlanContext,
    pub sites: Vec<Placement>,
    pub budget: f64,
    genes: Vec<Gene>,
    baseline: Vec<DispatchSolution>,
}

impl Stage1Problem {
    /// Solves the storage-free reference of every scenario up front.
    pub fn new(ctx: PlanContext, cfg: &SearchConfig) -> Result<Self> {
        if ctx.scenarios.is_empty() {
            return Err(SearchError::Config("stage 1 needs at least one scenario".into()));
        }
        let sites: Vec<Placement> = ctx.net.placements_of(StorageKind::Sess).cloned().collect();
        let dev = &ctx.opts.device;
        let mut genes = Vec::new();
        for p in &sites {
            genes.push(Gene::real(format!("e_{}", p.node), p.e_min_kwh, p.e_max_kwh, cfg.energy_step_kwh));
            genes.push(Gene::real(format!("p_{}", p.node), p.p_min_kw, p.p_max_kw, cfg.power_step_kw));
            genes.push(Gene::real(format!("soc0_{}", p.node), dev.soc_min, dev.soc_max, cfg.soc_step));
            genes.push(Gene::bit(format!("q_{}", p.node)));
        }
        let baseline = ctx.reference(&[])?;
        Ok(Self {
            budget: ctx.opts.econ.budget,
            ctx,
            sites,
            genes,
            baseline,
        })
    }

    pub fn baseline(&self) -> &[DispatchSolution] {
        &self.baseline
    }

    pub fn chromosome(&self, x: &[f64]) -> Stage1Chromosome {
        Stage1Chromosome {
            sites: self
                .sites
                .iter()
                .zip(x.chunks(4))
                .map(|(p, g)| SessGene {
                    node: p.node,
                    e_rate_kwh: g[0],
                    p_rate_kw: g[1],
                    soc0: g[2],
                    q_enable: g[3] > 0.5,
                })
                .collect(),
        }
    }

    pub fn encode(&self, c: &Stage1Chromosome) -> Vec<f64> {
        c.sites
            .iter()
            .flat_map(|g| [g.e_rate_kwh, g.p_rate_kw, g.soc0, f64::from(g.q_enable as u8)])
            .collect()
    }

    /// Every site at zero size.
    pub fn zero(&self) -> Vec<f64> {
        let mut x: Vec<f64> = self
            .sites
            .iter()
            .flat_map(|_| [0.0, 0.0, self.ctx.opts.device.soc_min, 0.0])
            .collect();
        self.repair(&mut x);
        x
    }

    /// Left side of the budget row, $.
    pub fn capital(&self, x: &[f64]) -> f64 {
        let e = &self.ctx.opts.econ;
        x.chunks(4).map(|g| (e.c_e + e.c_b) * g[0] + e.c_p * g[1]).sum()
    }

    /// True when `x` is on the gene grid, in its box (or zeroed) and within
    /// budget.
    pub fn is_repaired(&self, x: &[f64]) -> bool {
        let on_grid = self.genes.iter().zip(x).enumerate().all(|(i, (g, &v))| {
            let zeroed = i % 4 < 2 && v == 0.0;
            zeroed || (g.snap(v) - v).abs() <= 1e-9 * g.step.max(1.0)
        });
        on_grid && self.capital(x) <= self.budget * (1.0 + 1e-12) + 1e-9
    }

    pub fn evaluate(&self, c: &Stage1Chromosome) -> PlanEvaluation {
        let designs = c.designs(&self.sites);
        let solutions = match self.ctx.solve(&designs) {
            Ok(s) => s,
            Err(e) => return PlanEvaluation::infeasible(&self.ctx, designs, e.to_string()),
        };
        match self.assemble(&solutions) {
            Ok((report, lifetimes)) => PlanEvaluation {
                designs,
                max_socr_gap: max_gap(&solutions),
                fitness: report.net,
                report,
                lifetimes,
                solutions,
                feasible: true,
                violations: 0,
                failure: None,
            },
            Err(e) => PlanEvaluation::infeasible(&self.ctx, designs, e.to_string()),
        }
    }

    fn assemble(&self, solutions: &[DispatchSolution]) -> Result<(CostReport, Vec<f64>)> {
        let o = &self.ctx.opts;
        let ratings: Vec<BessRating> = solutions[0].devices.iter().map(|d| d.rating.clone()).collect();
        let life = lifetimes(solutions, o)?;
        let cash = operating_cash(
            &ledgers(solutions, None),
            Some(&ledgers(&self.baseline, None)),
            &ratings,
            &o.econ,
            &o.thermal,
            1.0,
        )?;
        Ok((stage1_report(&ratings, &life, &cash, max_gap(solutions), &o.econ), life))
    }
}

/// Stage-1 fitness of a chromosome with its full evaluation.
pub fn fitness_stage1(problem: &Stage1Problem, c: &Stage1Chromosome) -> PlanEvaluation {
    problem.evaluate(c)
}

impl SearchProblem for Stage1Problem {
    fn genes(&self) -> &[Gene] {
        &self.genes
    }

    /// Snaps genes to their grid and box, then scales energy and power
    /// down together if the budget row is violated. A plan that cannot fit
    /// even at its lower bounds is zeroed.
    fn repair(&self, x: &mut [f64]) {
        for (g, v) in self.genes.iter().zip(x.iter_mut()) {
            *v = g.snap(*v);
        }
        let cost = self.capital(x);
        if cost <= self.budget {
            return;
        }
        let scale = if cost > 0.0 { self.budget.max(0.0) / cost } else { 0.0 };
        for (i, g) in self.genes.iter().enumerate() {
            if i % 4 < 2 {
                x[i] = g.snap_down(x[i] * scale);
            }
        }
        if self.capital(x) > self.budget {
            for (i, v) in x.iter_mut().enumerate() {
                if i % 4 < 2 {
                    *v = 0.0;
                }
            }
        }
    }

    fn fitness(&self, x: &[f64]) -> f64 {
        assert!(self.is_repaired(x), "unrepaired chromosome {x:?}");
        self.evaluate(&self.chromosome(x)).fitness
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessGene {
    pub node: u32,
    pub modules: u32,
    pub soc0: f64,
}

/// Two genes per mobile site: module count and initial SOC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Chromosome {
    pub sites: Vec<MessGene>,
}

impl Stage2Chromosome {
    pub fn designs(&self, placements: &[Placement], opts: &DispatchOptions) -> Vec<StorageDesign> {
        self.sites
            .iter()
            .zip(placements)
            .map(|(g, p)| {
                let mut d = StorageDesign::mess(g.node, g.modules, &opts.device, g.soc0);
                d.colocated = p.colocated;
                d
            })
            .filter(|d| !d.is_empty())
            .collect()
    }

    pub fn total_modules(&self) -> u32 {
        self.sites.iter().map(|s| s.modules).sum()
    }
}

pub struct Stage2Problem {
    pub ctx: PlanContext,
    /// Frozen stationary plan.
    pub sess: Vec<StorageDesign>,
    pub sites: Vec<Placement>,
    /// Cap on module rent over the rental period, $.
    pub budget: f64,
    genes: Vec<Gene>,
    baseline: Vec<DispatchSolution>,
}

impl Stage2Problem {
    /// Solves the stationary-only reference of every event scenario up
    /// front, with soft limits where the hard ones cannot be met.
    pub fn new(ctx: PlanContext, sess: Vec<StorageDesign>, budget: f64, cfg: &SearchConfig) -> Result<Self> {
        if ctx.scenarios.is_empty() {
            return Err(SearchError::Config("stage 2 needs at least one event scenario".into()));
        }
        let sites: Vec<Placement> = ctx.net.placements_of(StorageKind::Mess).cloned().collect();
        let dev = &ctx.opts.device;
        let mut genes = Vec::new();
        for p in &sites {
            genes.push(Gene::integer(format!("n_{}", p.node), 0, p.max_modules as i64));
            genes.push(Gene::real(format!("soc0_{}", p.node), dev.soc_min, dev.soc_max, cfg.soc_step));
        }
        let baseline = ctx.reference(&sess)?;
        Ok(Self {
            ctx,
            sess,
            sites,
            budget,
            genes,
            baseline,
        })
    }

    pub fn baseline(&self) -> &[DispatchSolution] {
        &self.baseline
    }

    pub fn chromosome(&self, x: &[f64]) -> Stage2Chromosome {
        Stage2Chromosome {
            sites: self
                .sites
                .iter()
                .zip(x.chunks(2))
                .map(|(p, g)| MessGene {
                    node: p.node,
                    modules: g[0].round().max(0.0) as u32,
                    soc0: g[1],
                })
                .collect(),
        }
    }

    pub fn encode(&self, c: &Stage2Chromosome) -> Vec<f64> {
        c.sites.iter().flat_map(|g| [g.modules as f64, g.soc0]).collect()
    }

    pub fn zero(&self) -> Vec<f64> {
        let mut x: Vec<f64> = self.sites.iter().flat_map(|_| [0.0, self.ctx.opts.device.soc_max]).collect();
        self.repair(&mut x);
        x
    }

    /// Module rent before life compensation, $.
    pub fn base_rent(&self, x: &[f64]) -> f64 {
        let e = &self.ctx.opts.econ;
        x.chunks(2).map(|g| e.c_rent * g[0] * e.rent_days).sum()
    }

    /// Highest first-hour reserve floor of `modules` units at site `i`
    /// over the event scenarios.
    pub fn first_floor(&self, i: usize, modules: u32) -> f64 {
        let o = &self.ctx.opts;
        let p = &self.sites[i];
        if modules == 0 {
            return o.device.soc_min;
        }
        let mut d = StorageDesign::mess(p.node, modules, &o.device, o.device.soc_max);
        d.colocated = p.colocated;
        let Some(b) = self.ctx.net.bus_index(p.node) else {
            return o.device.soc_min;
        };
        let dc = self.ctx.net.buses[b].kind == duostore_core::net::BusKind::Dc;
        let Ok(r) = BessRating::from_design(&d, &o.device, dc) else {
            return o.device.soc_min;
        };
        self.ctx
            .scenarios
            .iter()
            .filter_map(|s| {
                let mut load = s.load_series(p.node);
                load.resize(s.price.len(), 0.0);
                soc_floors(&r, &load, self.ctx.net.buses[b].important_ratio, o.device.reserve_horizon)
                    .ok()
                    .and_then(|f| f.first().copied())
            })
            .fold(o.device.soc_min, f64::max)
    }

    pub fn evaluate(&self, c: &Stage2Chromosome) -> PlanEvaluation {
        let mess = c.designs(&self.sites, &self.ctx.opts);
        let all: Vec<StorageDesign> = self.sess.iter().chain(&mess).cloned().collect();
        let solutions = match self.ctx.solve(&all) {
            Ok(s) => s,
            Err(e) => return PlanEvaluation::infeasible(&self.ctx, mess, e.to_string()),
        };
        match self.assemble(c, &solutions) {
            Ok(report) => PlanEvaluation {
                designs: mess,
                max_socr_gap: max_gap(&solutions),
                fitness: report.net,
                report,
                lifetimes: Vec::new(),
                solutions,
                feasible: true,
                violations: 0,
                failure: None,
            },
            Err(e) => PlanEvaluation::infeasible(&self.ctx, mess, e.to_string()),
        }
    }

    fn assemble(&self, c: &Stage2Chromosome, solutions: &[DispatchSolution]) -> Result<CostReport> {
        let o = &self.ctx.opts;
        let e = &o.econ;
        let mobile: Vec<&DeviceTrace> = solutions[0]
            .devices
            .iter()
            .filter(|d| d.design.kind == StorageKind::Mess)
            .collect();
        let ratings: Vec<BessRating> = mobile.iter().map(|d| d.rating.clone()).collect();
        let cash = operating_cash(
            &ledgers(solutions, Some(StorageKind::Mess)),
            Some(&ledgers(&self.baseline, None)),
            &ratings,
            e,
            &o.thermal,
            e.rent_days / e.days_per_year,
        )?;

        // Per-module daily damage, averaged over the event scenarios by weight.
        let total_w: f64 = solutions.iter().map(|s| s.weight_days).sum::<f64>().max(f64::MIN_POSITIVE);
        let mut damages = Vec::with_capacity(c.sites.len());
        for g in &c.sites {
            let mut z = 0.0;
            for s in solutions {
                if let Some(d) = s
                    .devices
                    .iter()
                    .find(|d| d.design.kind == StorageKind::Mess && d.design.node == g.node)
                {
                    z += s.weight_days * daily_fade(d, o)?;
                }
            }
            damages.push(vec![z / total_w; g.modules as usize]);
        }
        let modules: Vec<u32> = c.sites.iter().map(|g| g.modules).collect();
        let rent = mess_rent(&modules, &damages, o.device.module_kwh, e, o.degradation.end_of_life);
        Ok(stage2_report(rent, &cash, max_gap(solutions), e))
    }
}

/// Stage-2 fitness of a chromosome with its full evaluation.
pub fn fitness_stage2(problem: &Stage2Problem, c: &Stage2Chromosome) -> PlanEvaluation {
    problem.evaluate(c)
}

impl SearchProblem for Stage2Problem {
    fn genes(&self) -> &[Gene] {
        &self.genes
    }

    /// Clamps counts to their caps, drops modules from the largest site
    /// until the rent fits the budget, and lifts each initial SOC to the
    /// site's first reserve floor.
    fn repair(&self, x: &mut [f64]) {
        for (g, v) in self.genes.iter().zip(x.iter_mut()) {
            *v = g.snap(*v);
        }
        while self.base_rent(x) > self.budget {
            let Some(i) = (0..self.sites.len())
                .filter(|&i| x[2 * i] > 0.0)
                .max_by(|&a, &b| x[2 * a].total_cmp(&x[2 * b]).then(b.cmp(&a)))
            else {
                break;
            };
            x[2 * i] -= 1.0;
        }
        for i in 0..self.sites.len() {
            let floor = self.first_floor(i, x[2 * i] as u32);
            let g = &self.genes[2 * i + 1];
            if x[2 * i + 1] < floor {
                x[2 * i + 1] = g.snap_up(floor);
            }
        }
    }

    fn fitness(&self, x: &[f64]) -> f64 {
        assert!(
            self.genes.iter().zip(x).all(|(g, &v)| (g.snap(v) - v).abs() <= 1e-9)
                && self.base_rent(x) <= self.budget + 1e-9,
            "unrepaired chromosome {x:?}"
        );
        self.evaluate(&self.chromosome(x)).fitness
    }
}
