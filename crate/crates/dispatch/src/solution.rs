use duostore_conic::{ClarabelBackend, ConicBackend, MipOptions, MipStatus};
use duostore_core::degradation::{linear_daily_damage, soc_average};
use duostore_core::economics::{life_compensation, DeviceLedger, DispatchLedger};
use duostore_core::net::{BusKind, HybridNetwork};
use duostore_core::storage::{BessRating, StorageDesign};
use duostore_core::thermal::{self, HvacAction, ThermalState};
use serde::{Deserialize, Serialize};

use crate::error::{DispatchError, Result};
use crate::model::{DispatchModel, Reactive};

/// Values below this are treated as zero when counting bound violations.
pub const SLACK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Stopped on the node or time budget with an incumbent.
    Feasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusTrace {
    pub id: u32,
    pub kind: BusKind,
    /// Squared voltage magnitude, p.u.
    pub v2: Vec<f64>,
}

impl BusTrace {
    pub fn voltage(&self) -> Vec<f64> {
        self.v2.iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchTrace {
    pub from: u32,
    pub to: u32,
    pub kind: BusKind,
    pub r_pu: f64,
    pub x_pu: f64,
    /// Sending-end flow, p.u.
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Squared current, p.u.
    pub i2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTrace {
    pub bus: u32,
    pub p_kw: Vec<f64>,
    pub q_kvar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VscTrace {
    pub name: String,
    /// AC-side injection, positive from DC to AC.
    pub p_ac_kw: Vec<f64>,
    pub q_kvar: Vec<f64>,
    pub p_abs_kw: Vec<f64>,
    /// Power drawn from the DC bus.
    pub p_dc_kw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalTrace {
    /// One state more than hours; the last equals the first. Empty when
    /// the container model is off.
    pub states: Vec<ThermalState>,
    pub hvac: Vec<HvacAction>,
    /// Heat generated per container, kW.
    pub q_gen_kw: Vec<f64>,
    /// Squared-current surrogate per cell, A².
    pub cell_i2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceTrace {
    pub design: StorageDesign,
    pub rating: BessRating,
    pub p_dis_kw: Vec<f64>,
    pub p_ch_kw: Vec<f64>,
    pub q_kvar: Vec<f64>,
    pub mu_dis: Vec<bool>,
    pub soc: Vec<f64>,
    pub floors: Vec<f64>,
    pub thermal: ThermalTrace,
}

/// Daily money terms of a solved scenario, $.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DailyCosts {
    pub c_loss: f64,
    pub c_var: f64,
    pub c_com: f64,
    pub b_arb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub scenario: String,
    pub weight_days: f64,
    pub status: SolveStatus,
    pub objective: f64,
    pub root_objective: f64,
    pub mip_gap: f64,
    pub nodes: usize,
    pub socr_gap: f64,
    pub base_kva: f64,
    pub price: Vec<f64>,
    pub t_ext_k: Vec<f64>,
    pub wind_ms: Vec<f64>,
    pub buses: Vec<BusTrace>,
    pub branches: Vec<BranchTrace>,
    pub grid: Vec<GridTrace>,
    pub vscs: Vec<VscTrace>,
    pub devices: Vec<DeviceTrace>,
    /// Bus-hours outside the voltage window (penalty-relaxed solves only).
    pub voltage_violations: usize,
    /// Branch-hours above the current limit (penalty-relaxed solves only).
    pub current_violations: usize,
    /// Solved with soft voltage and current limits.
    pub relaxed: bool,
    pub costs: DailyCosts,
}

impl DispatchSolution {
    pub fn violations(&self) -> usize {
        self.voltage_violations + self.current_violations
    }

    /// Hourly money-relevant series for the cost model.
    pub fn ledger(&self) -> DispatchLedger {
        let base = self.base_kva;
        let hours = self.price.len();
        let line_loss_kw = (0..hours)
            .map(|t| self.branches.iter().map(|b| b.r_pu * b.i2[t] * base).sum())
            .collect();
        let vsc_loss_kw = (0..hours)
            .map(|t| self.vscs.iter().map(|v| v.p_dc_kw[t] - v.p_ac_kw[t]).sum())
            .collect();
        let devices = self
            .devices
            .iter()
            .map(|d| DeviceLedger {
                node: d.design.node,
                kind: Some(d.design.kind),
                n_cess: d.rating.n_cess,
                e_rate: d.rating.e_rate,
                p_dis: d.p_dis_kw.clone(),
                p_ch: d.p_ch_kw.clone(),
                hvac_kw: d.thermal.hvac.iter().map(HvacAction::power).collect(),
                cell_i2: d.thermal.cell_i2.clone(),
                soc: d.soc.clone(),
                t_cess: d.thermal.states.iter().map(|s| s.t_cess).collect(),
            })
            .collect();
        DispatchLedger {
            scenario: self.scenario.clone(),
            weight_days: self.weight_days,
            price: self.price.clone(),
            line_loss_kw,
            vsc_loss_kw,
            devices,
        }
    }

    /// Voltage magnitudes of every bus, p.u., row per bus.
    pub fn voltages(&self) -> Vec<(u32, Vec<f64>)> {
        self.buses.iter().map(|b| (b.id, b.voltage())).collect()
    }

    /// Bus-hours whose voltage lies outside the given window by more than
    /// `tol` p.u., recomputed from the trace.
    pub fn count_voltage_excursions(&self, net: &HybridNetwork, tol: f64) -> usize {
        let mut n = 0;
        for b in &self.buses {
            let Ok(bus) = net.bus(b.id) else { continue };
            n += b
                .voltage()
                .iter()
                .filter(|&&v| v < bus.v_min - tol || v > bus.v_max + tol)
                .count();
        }
        n
    }
}

/// Daily linear damage of a device under its dispatch, as priced in the
/// objective.
pub fn linear_damage(d: &DeviceTrace, dp: &duostore_core::degradation::DegradationParams) -> f64 {
    let df = d.rating.discharge_factor();
    let dods: Vec<f64> = d
        .p_dis_kw
        .iter()
        .map(|p| p * duostore_core::DT_HOURS / (d.rating.e_rate * df))
        .collect();
    linear_daily_damage(soc_average(&d.soc), &dods, dp)
}

/// Largest |I² − (P² + Q²)/V²| over branches and hours, p.u.
pub fn socr_gap(sol: &DispatchSolution, _net: &HybridNetwork) -> f64 {
    let mut gap: f64 = 0.0;
    for b in &sol.branches {
        let Some(parent) = sol.buses.iter().find(|x| x.id == b.from) else {
            continue;
        };
        for t in 0..b.i2.len() {
            let exact = (b.p[t] * b.p[t] + b.q[t] * b.q[t]) / parent.v2[t];
            gap = gap.max((b.i2[t] - exact).abs());
        }
    }
    gap
}

/// Solves a built model with the Clarabel backend.
pub fn solve_misocp(model: &DispatchModel, mip: &MipOptions) -> Result<DispatchSolution> {
    model.solve(&ClarabelBackend::default(), mip)
}

impl DispatchModel {
    pub fn solve(&self, backend: &dyn ConicBackend, mip: &MipOptions) -> Result<DispatchSolution> {
        let s = duostore_conic::solve_mip(&self.program, backend, mip);
        let status = match s.status {
            MipStatus::Optimal => SolveStatus::Optimal,
            MipStatus::Feasible => SolveStatus::Feasible,
            MipStatus::Infeasible => {
                return Err(DispatchError::Infeasible {
                    scenario: self.scenario.id.clone(),
                    conflict: s.conflict,
                })
            }
            MipStatus::NoSolution => {
                return Err(DispatchError::NoSolution {
                    scenario: self.scenario.id.clone(),
                    message: s.message,
                })
            }
        };
        log::debug!(
            "scenario {}: objective {:.4}, root {:.4}, {} nodes",
            self.scenario.id,
            s.objective,
            s.root_objective,
            s.nodes
        );
        let mut sol = self.extract(&s.x);
        sol.status = status;
        sol.objective = s.objective;
        sol.root_objective = s.root_objective;
        sol.mip_gap = s.gap;
        sol.nodes = s.nodes;
        Ok(sol)
    }

    /// Reads a primal point back into physical units.
    pub fn extract(&self, x: &[f64]) -> DispatchSolution {
        let net = &self.net;
        let base = net.base_kva;
        let val = |v: duostore_conic::Var| x[v.0];
        let hours = self.hours;
        let series = |vs: &[duostore_conic::Var], k: f64| -> Vec<f64> {
            vs.iter().map(|&v| x[v.0] * k).collect()
        };
        let count = |vs: &Option<Vec<duostore_conic::Var>>| -> usize {
            vs.iter().flatten().filter(|&&v| val(v) > SLACK_TOL).count()
        };

        let buses: Vec<BusTrace> = net
            .buses
            .iter()
            .zip(&self.buses)
            .map(|(b, v)| BusTrace {
                id: b.id,
                kind: b.kind,
                v2: series(&v.v, 1.0),
            })
            .collect();
        let mut voltage_violations = 0;
        for bv in &self.buses {
            if let (Some(lo), Some(hi)) = (&bv.lo, &bv.hi) {
                voltage_violations += (0..hours)
                    .filter(|&t| val(lo[t]) > SLACK_TOL || val(hi[t]) > SLACK_TOL)
                    .count();
            }
        }
        let current_violations = self.branches.iter().map(|b| count(&b.over)).sum();

        let branches = net
            .branches
            .iter()
            .zip(&self.branches)
            .map(|(br, v)| BranchTrace {
                from: net.buses[br.parent].id,
                to: net.buses[br.child].id,
                kind: br.kind,
                r_pu: br.r_pu,
                x_pu: br.x_pu,
                p: series(&v.p, 1.0),
                q: v.q.as_ref().map_or(vec![0.0; hours], |q| series(q, 1.0)),
                i2: series(&v.l, 1.0),
            })
            .collect();
        let grid = self
            .grid
            .iter()
            .map(|g| GridTrace {
                bus: net.buses[g.bus].id,
                p_kw: series(&g.p, base),
                q_kvar: g.q.as_ref().map_or(vec![0.0; hours], |q| series(q, base)),
            })
            .collect();
        let vscs = net
            .vscs
            .iter()
            .zip(&self.vscs)
            .map(|(c, v)| {
                let p_ac = series(&v.p, base);
                let p_abs = series(&v.abs, base);
                let p_dc = (0..hours).map(|t| p_ac[t] + c.loss_coeff * p_abs[t]).collect();
                VscTrace {
                    name: c.name.clone(),
                    p_ac_kw: p_ac,
                    q_kvar: series(&v.q, base),
                    p_abs_kw: p_abs,
                    p_dc_kw: p_dc,
                }
            })
            .collect();

        let t_ref = self.opts.t_ref();
        let devices = self
            .devices
            .iter()
            .map(|d| {
                let v = &d.vars;
                let q_kvar = match &v.reactive {
                    Reactive::None => vec![0.0; hours],
                    Reactive::Box(q) => series(q, base),
                    Reactive::Split { dis, ch } => {
                        (0..hours).map(|t| (val(dis[t]) + val(ch[t])) * base).collect()
                    }
                };
                let (states, hvac) = match &v.thermal {
                    Some(tv) => (
                        (0..=hours)
                            .map(|t| ThermalState {
                                t_cess: val(tv.tau[t]) + t_ref,
                                t_bar: val(tv.tau_bar[t]) + t_ref,
                            })
                            .collect(),
                        (0..hours)
                            .map(|t| HvacAction {
                                p_hot: val(tv.p_hot[t]),
                                p_cool: val(tv.p_cool[t]),
                                x_air: val(tv.x_air[t]) > 0.5,
                                x_vent: val(tv.x_vent[t]) > 0.5,
                            })
                            .collect(),
                    ),
                    None => (Vec::new(), Vec::new()),
                };
                DeviceTrace {
                    design: d.design.clone(),
                    rating: d.rating.clone(),
                    p_dis_kw: series(&v.p_dis, base),
                    p_ch_kw: series(&v.p_ch, base),
                    q_kvar,
                    mu_dis: v.mu.iter().map(|&m| val(m) > 0.5).collect(),
                    soc: series(&v.soc, 1.0),
                    floors: d.floors.clone(),
                    thermal: ThermalTrace {
                        states,
                        hvac,
                        q_gen_kw: series(&v.q_gen, 1.0),
                        cell_i2: series(&v.i2n, d.i_ref * d.i_ref),
                    },
                }
            })
            .collect();

        let mut sol = DispatchSolution {
            scenario: self.scenario.id.clone(),
            weight_days: self.scenario.weight_days as f64,
            status: SolveStatus::Optimal,
            objective: self.program.objective_value(x),
            root_objective: f64::NAN,
            mip_gap: 0.0,
            nodes: 0,
            socr_gap: 0.0,
            base_kva: base,
            price: self.scenario.price.clone(),
            t_ext_k: self.scenario.t_ext_k.clone(),
            wind_ms: self.scenario.wind_ms.clone(),
            buses,
            branches,
            grid,
            vscs,
            devices,
            voltage_violations,
            relaxed: self.opts.penalty_relaxed,
            current_violations,
            costs: DailyCosts::default(),
        };
        sol.socr_gap = socr_gap(&sol, net);
        let ledger = sol.ledger();
        sol.costs = DailyCosts {
            c_loss: ledger.loss_cost(),
            c_var: ledger.variable_om(&self.opts.thermal),
            c_com: sol
                .devices
                .iter()
                .map(|d| {
                    let z = linear_damage(d, &self.opts.degradation);
                    life_compensation(z, d.rating.e_rate, &self.opts.econ, self.opts.degradation.end_of_life)
                })
                .sum(),
            b_arb: ledger.arbitrage(),
        };
        sol
    }

    /// Checks a solution against the physical rules independently of the
    /// program rows. Returns one message per broken invariant.
    pub fn audit(&self, sol: &DispatchSolution, tol: f64) -> Vec<String> {
        let net = &self.net;
        let scen = &self.scenario;
        let base = net.base_kva;
        let mut issues = Vec::new();

        // Nodal balance, p.u.
        for t in 0..self.hours {
            for (b, bus) in net.buses.iter().enumerate() {
                let mut p = (scen.pv(bus.id, t) - scen.load_p(bus.id, t)) / base;
                let mut q = -scen.load_q(bus.id, t) / base;
                for (br, tr) in net.branches.iter().zip(&sol.branches) {
                    if br.child == b {
                        p += tr.p[t] - br.r_pu * tr.i2[t];
                        q += tr.q[t] - br.x_pu * tr.i2[t];
                    } else if br.parent == b {
                        p -= tr.p[t];
                        q -= tr.q[t];
                    }
                }
                for g in sol.grid.iter().filter(|g| g.bus == bus.id) {
                    p += g.p_kw[t] / base;
                    q += g.q_kvar[t] / base;
                }
                for (c, tr) in net.vscs.iter().zip(&sol.vscs) {
                    if c.ac_bus == b {
                        p += tr.p_ac_kw[t] / base;
                        q += tr.q_kvar[t] / base;
                    }
                    if c.dc_bus == b {
                        p -= tr.p_dc_kw[t] / base;
                    }
                }
                for d in sol.devices.iter().filter(|d| d.design.node == bus.id) {
                    p += (d.p_dis_kw[t] + d.p_ch_kw[t]) / base;
                    q += d.q_kvar[t] / base;
                }
                if bus.kind == BusKind::Dc {
                    q = 0.0;
                }
                if p.abs() > tol || q.abs() > tol {
                    issues.push(format!("balance at bus {} hour {t}: ({p:.2e}, {q:.2e})", bus.id));
                }
            }
        }

        // Voltage and current windows, skipped for penalty-relaxed solves.
        if !self.opts.penalty_relaxed {
            for (bus, tr) in net.buses.iter().zip(&sol.buses) {
                for (t, &v2) in tr.v2.iter().enumerate() {
                    if v2 < bus.v_min.powi(2) - tol || v2 > bus.v_max.powi(2) + tol {
                        issues.push(format!("voltage at bus {} hour {t}: {v2:.6}", bus.id));
                    }
                }
            }
            for (br, tr) in net.branches.iter().zip(&sol.branches) {
                for (t, &l) in tr.i2.iter().enumerate() {
                    if l < -tol || l > br.i_max_pu.powi(2) + tol {
                        issues.push(format!("current on {}-{} hour {t}: {l:.6}", tr.from, tr.to));
                    }
                }
            }
        }

        // Converter loss relation.
        for tr in &sol.vscs {
            for t in 0..self.hours {
                if (tr.p_abs_kw[t] - tr.p_ac_kw[t].abs()).abs() > tol * base {
                    issues.push(format!("converter {} hour {t}: loss epigraph slack", tr.name));
                }
            }
        }

        // Devices.
        for d in &sol.devices {
            let r = &d.rating;
            let label = format!("{} at {}", d.design.kind, d.design.node);
            for t in 0..self.hours {
                let mu = d.mu_dis[t];
                if d.p_dis_kw[t] > tol * base && !mu || d.p_ch_kw[t] < -tol * base && mu {
                    issues.push(format!("{label} hour {t}: power against mode"));
                }
                if d.soc[t] < d.floors[t].max(r.soc_min) - tol || d.soc[t] > r.soc_max + tol {
                    issues.push(format!("{label} hour {t}: SOC {:.6} outside window", d.soc[t]));
                }
            }
            if (d.soc[self.hours] - d.soc[0]).abs() > tol {
                issues.push(format!("{label}: SOC does not return to its start"));
            }
            if !r.dc_connected {
                for t in 0..self.hours {
                    let s = (d.p_dis_kw[t] + d.p_ch_kw[t]).hypot(d.q_kvar[t]);
                    if s > r.s_pcs * (1.0 + tol) + tol {
                        issues.push(format!("{label} hour {t}: PCS rating exceeded"));
                    }
                }
            }
            let tp = &self.opts.thermal;
            for (t, s) in d.thermal.states.iter().enumerate() {
                if s.t_cess < tp.t_min_k - tol || s.t_cess > tp.t_max_k + tol {
                    issues.push(format!("{label} state {t}: container at {:.3} K", s.t_cess));
                }
                if s.t_bar < s.t_cess - tol {
                    issues.push(format!("{label} state {t}: cells cooler than air"));
                }
            }
            for (t, h) in d.thermal.hvac.iter().enumerate() {
                if !h.is_valid(tp, tol) {
                    issues.push(format!("{label} hour {t}: HVAC against mode"));
                }
            }
            if let (Some(first), Some(last)) = (d.thermal.states.first(), d.thermal.states.last()) {
                if (first.t_cess - last.t_cess).abs() > tol || (first.t_bar - last.t_bar).abs() > tol {
                    issues.push(format!("{label}: thermal state does not return to its start"));
                }
            }
        }
        issues
    }

    /// Rebuilds the container temperatures by forward simulation from the
    /// solved initial state, HVAC actions and heat generation.
    pub fn simulate_thermal(&self, d: &DeviceTrace) -> Vec<ThermalState> {
        thermal::simulate_day(
            d.thermal.states[0],
            &d.thermal.hvac,
            &d.thermal.q_gen_kw,
            &self.scenario.t_ext_k,
            &self.scenario.wind_ms,
            &self.opts.thermal,
        )
    }

    /// Heat generation implied by the dispatched power with the exact
    /// squared current, kW per container.
    pub fn exact_heat(&self, k: usize, d: &DeviceTrace) -> Vec<f64> {
        let denom = self.device_current_denominator(k);
        let r = &d.rating;
        (0..self.hours)
            .map(|t| {
                let i = (d.p_ch_kw[t] * r.charge_factor() - d.p_dis_kw[t] / r.discharge_factor()) / denom;
                thermal::heat_generation(i, &self.opts.thermal)
            })
            .collect()
    }
}
