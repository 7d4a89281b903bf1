//! Construction of the daily dispatch program for one scenario.
//!
//! Network quantities are in per unit on the network power base: squared
//! voltages, squared branch currents, branch and injection powers. Device
//! thermal quantities stay in kW and kelvin, the latter shifted by a
//! reference temperature to keep the program well scaled.

use std::f64::consts::SQRT_2;

use duostore_conic::{Affine, ConicProgram, Sense, Var};
use duostore_core::degradation::DegradationParams;
use duostore_core::economics::EconParams;
use duostore_core::net::{BusKind, HybridNetwork, Scenario, StorageKind};
use duostore_core::storage::{soc_floors, BessRating, DeviceParams, StorageDesign};
use duostore_core::thermal::{self, LinearRow, ThermalParams, ThermalTerm};
use duostore_core::DT_HOURS;
use serde::{Deserialize, Serialize};

use crate::error::{DispatchError, Result};

/// Objective weight per p.u. of bound slack per hour in penalty-relaxed mode.
pub const VIOLATION_PENALTY: f64 = 1e4;

/// Branching classes: charge/discharge first, then HVAC mode, then vents.
pub const CLASS_MODE: u8 = 0;
pub const CLASS_AIR: u8 = 1;
pub const CLASS_VENT: u8 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispatchOptions {
    pub device: DeviceParams,
    pub thermal: ThermalParams,
    pub econ: EconParams,
    pub degradation: DegradationParams,
    /// Turn voltage and current limits into penalized soft limits.
    pub penalty_relaxed: bool,
    /// Model container temperatures and HVAC. When off, the cell ohmic
    /// loss is still priced but no thermal rows are built.
    pub thermal_model: bool,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        Self {
            device: DeviceParams::default(),
            thermal: ThermalParams::default(),
            econ: EconParams::default(),
            degradation: DegradationParams::default(),
            penalty_relaxed: false,
            thermal_model: true,
        }
    }
}

impl DispatchOptions {
    pub fn relaxed(&self) -> Self {
        Self {
            penalty_relaxed: true,
            ..self.clone()
        }
    }

    /// Midpoint of the container operating window, used as the zero of the
    /// shifted temperature variables.
    pub fn t_ref(&self) -> f64 {
        0.5 * (self.thermal.t_min_k + self.thermal.t_max_k)
    }
}

pub(crate) struct BusVars {
    pub v: Vec<Var>,
    pub lo: Option<Vec<Var>>,
    pub hi: Option<Vec<Var>>,
}

pub(crate) struct BranchVars {
    pub p: Vec<Var>,
    pub q: Option<Vec<Var>>,
    pub l: Vec<Var>,
    pub over: Option<Vec<Var>>,
}

pub(crate) struct GridVars {
    pub bus: usize,
    pub p: Vec<Var>,
    pub q: Option<Vec<Var>>,
}

pub(crate) struct VscVars {
    pub p: Vec<Var>,
    pub q: Vec<Var>,
    pub abs: Vec<Var>,
}

pub(crate) enum Reactive {
    None,
    Box(Vec<Var>),
    Split { dis: Vec<Var>, ch: Vec<Var> },
}

pub(crate) struct ThermalVars {
    /// Shifted container air temperature, one state per hour boundary.
    pub tau: Vec<Var>,
    pub tau_bar: Vec<Var>,
    pub p_hot: Vec<Var>,
    pub p_cool: Vec<Var>,
    pub x_air: Vec<Var>,
    pub x_vent: Vec<Var>,
    /// Shifted vent product T·X − T_ref·X.
    pub tx: Vec<Var>,
}

pub(crate) struct DeviceVars {
    pub p_dis: Vec<Var>,
    pub p_ch: Vec<Var>,
    pub mu: Vec<Var>,
    pub reactive: Reactive,
    pub soc: Vec<Var>,
    /// Squared cell current over its rated value.
    pub i2n: Vec<Var>,
    pub q_gen: Vec<Var>,
    pub thermal: Option<ThermalVars>,
}

/// One storage unit inside a built model.
pub struct DeviceModel {
    pub design: StorageDesign,
    pub rating: BessRating,
    pub bus: usize,
    /// SOC floor at the start of each hour.
    pub floors: Vec<f64>,
    /// Cell current at rated discharge power, A.
    pub i_ref: f64,
    pub(crate) vars: DeviceVars,
}

impl DeviceModel {
    /// Cell ohmic heat per unit of the normalized squared current, kW.
    pub(crate) fn ohmic_kw_per_unit(&self, tp: &ThermalParams) -> f64 {
        thermal::heat_from_parts(self.i_ref * self.i_ref, 0.0, tp)
    }

    fn current_denominator(&self, tp: &ThermalParams) -> f64 {
        tp.n_par * tp.u_bar * self.rating.n_cess as f64
    }
}

/// A built dispatch program plus the handles needed to read a solution.
pub struct DispatchModel {
    pub net: HybridNetwork,
    pub scenario: Scenario,
    pub opts: DispatchOptions,
    /// Number of hourly intervals, taken from the scenario.
    pub hours: usize,
    pub devices: Vec<DeviceModel>,
    pub program: ConicProgram,
    pub(crate) buses: Vec<BusVars>,
    pub(crate) branches: Vec<BranchVars>,
    pub(crate) grid: Vec<GridVars>,
    pub(crate) vscs: Vec<VscVars>,
}

/// Stationary units only.
pub fn build_stage1(
    net: &HybridNetwork,
    scen: &Scenario,
    sess: &[StorageDesign],
    opts: &DispatchOptions,
) -> Result<DispatchModel> {
    build(net, scen, sess, opts)
}

/// Frozen stationary units plus rented mobile modules.
pub fn build_stage2(
    net: &HybridNetwork,
    scen: &Scenario,
    sess: &[StorageDesign],
    mess: &[StorageDesign],
    opts: &DispatchOptions,
) -> Result<DispatchModel> {
    let all: Vec<StorageDesign> = sess.iter().chain(mess).cloned().collect();
    build(net, scen, &all, opts)
}

/// Same network and scenario with every storage unit removed.
pub fn build_baseline(
    net: &HybridNetwork,
    scen: &Scenario,
    opts: &DispatchOptions,
) -> Result<DispatchModel> {
    build(net, scen, &[], opts)
}

struct Injections {
    p: Vec<Vec<(Var, f64)>>,
    q: Vec<Vec<(Var, f64)>>,
    hours: usize,
}

impl Injections {
    fn new(n_bus: usize, hours: usize) -> Self {
        Self {
            p: vec![Vec::new(); n_bus * hours],
            q: vec![Vec::new(); n_bus * hours],
            hours,
        }
    }

    fn at(&self, bus: usize, t: usize) -> usize {
        bus * self.hours + t
    }
}

pub fn build(
    net: &HybridNetwork,
    scen: &Scenario,
    designs: &[StorageDesign],
    opts: &DispatchOptions,
) -> Result<DispatchModel> {
    let hours = scen.price.len();
    let series = [&scen.t_ext_k, &scen.wind_ms]
        .into_iter()
        .chain(scen.load_p_kw.values())
        .chain(scen.load_q_kvar.values())
        .chain(scen.pv_kw.values());
    for s in series {
        if s.len() != hours || hours == 0 {
            return Err(DispatchError::InfeasibleBounds(format!(
                "scenario {}: series of {} hours against {hours} prices",
                scen.id,
                s.len()
            )));
        }
    }
    opts.device.validate()?;
    opts.thermal.validate()?;
    opts.econ.validate()?;

    let base = net.base_kva;
    let relaxed = opts.penalty_relaxed;
    let mut prog = ConicProgram::new();
    let mut inj = Injections::new(net.buses.len(), hours);
    let at = |bus: usize, t: usize| bus * hours + t;

    // Buses.
    let mut buses = Vec::with_capacity(net.buses.len());
    for (b, bus) in net.buses.iter().enumerate() {
        let (lo2, hi2) = (bus.v_min * bus.v_min, bus.v_max * bus.v_max);
        let mut v = Vec::with_capacity(hours);
        let soft = relaxed && !net.is_slack(b);
        let mut lo = soft.then(Vec::new);
        let mut hi = soft.then(Vec::new);
        for t in 0..hours {
            let name = format!("v2_{}_{t}", bus.id);
            if net.is_slack(b) {
                v.push(prog.add_var(name, 1.0, 1.0));
            } else if relaxed {
                let var = prog.add_var(name, 0.0, f64::INFINITY);
                let s_lo = prog.add_var(format!("v2_under_{}_{t}", bus.id), 0.0, f64::INFINITY);
                let s_hi = prog.add_var(format!("v2_over_{}_{t}", bus.id), 0.0, f64::INFINITY);
                prog.add_linear(
                    format!("vmin_{}_{t}", bus.id),
                    vec![(var, 1.0), (s_lo, 1.0)],
                    Sense::Ge,
                    lo2,
                );
                prog.add_linear(
                    format!("vmax_{}_{t}", bus.id),
                    vec![(var, 1.0), (s_hi, -1.0)],
                    Sense::Le,
                    hi2,
                );
                v.push(var);
                lo.as_mut().unwrap().push(s_lo);
                hi.as_mut().unwrap().push(s_hi);
            } else {
                v.push(prog.add_var(name, lo2, hi2));
            }
        }
        buses.push(BusVars { v, lo, hi });
    }

    // Branches.
    let mut branches = Vec::with_capacity(net.branches.len());
    for br in &net.branches {
        let (from, to) = (net.buses[br.parent].id, net.buses[br.child].id);
        let imax2 = br.i_max_pu * br.i_max_pu;
        let mut vars = BranchVars {
            p: Vec::with_capacity(hours),
            q: (br.kind == BusKind::Ac).then(Vec::new),
            l: Vec::with_capacity(hours),
            over: relaxed.then(Vec::new),
        };
        for t in 0..hours {
            vars.p.push(prog.add_free(format!("p_{from}_{to}_{t}")));
            if let Some(q) = vars.q.as_mut() {
                q.push(prog.add_free(format!("q_{from}_{to}_{t}")));
            }
            if relaxed {
                let l = prog.add_var(format!("i2_{from}_{to}_{t}"), 0.0, f64::INFINITY);
                let s = prog.add_var(format!("i2_over_{from}_{to}_{t}"), 0.0, f64::INFINITY);
                prog.add_linear(
                    format!("imax_{from}_{to}_{t}"),
                    vec![(l, 1.0), (s, -1.0)],
                    Sense::Le,
                    imax2,
                );
                vars.l.push(l);
                vars.over.as_mut().unwrap().push(s);
            } else {
                vars.l.push(prog.add_var(format!("i2_{from}_{to}_{t}"), 0.0, imax2));
            }
        }
        branches.push(vars);
    }

    // Grid supply at substation buses.
    let mut grid = Vec::new();
    for (b, bus) in net.buses.iter().enumerate() {
        if !net.is_grid_slack(b) {
            continue;
        }
        let p: Vec<Var> = (0..hours)
            .map(|t| prog.add_free(format!("grid_p_{}_{t}", bus.id)))
            .collect();
        let q = (bus.kind == BusKind::Ac).then(|| {
            (0..hours)
                .map(|t| prog.add_free(format!("grid_q_{}_{t}", bus.id)))
                .collect::<Vec<_>>()
        });
        for t in 0..hours {
            inj.p[at(b, t)].push((p[t], 1.0));
            if let Some(q) = &q {
                inj.q[at(b, t)].push((q[t], 1.0));
            }
        }
        grid.push(GridVars { bus: b, p, q });
    }

    // Converters. P on the AC side is positive when power flows DC → AC;
    // the DC side then supplies P plus the loss η·|P|.
    let mut vscs = Vec::with_capacity(net.vscs.len());
    for c in &net.vscs {
        let pmax = c.p_max_kw / base;
        let qmax = c.q_max_kvar / base;
        let s = c.s_kva / base;
        let mut vars = VscVars {
            p: Vec::with_capacity(hours),
            q: Vec::with_capacity(hours),
            abs: Vec::with_capacity(hours),
        };
        for t in 0..hours {
            let p = prog.add_var(format!("vsc_p_{}_{t}", c.name), -pmax, pmax);
            let q = prog.add_var(format!("vsc_q_{}_{t}", c.name), -qmax, qmax);
            let a = prog.add_var(format!("vsc_abs_{}_{t}", c.name), 0.0, pmax);
            prog.add_linear(format!("vsc_abs_pos_{}_{t}", c.name), vec![(a, 1.0), (p, -1.0)], Sense::Ge, 0.0);
            prog.add_linear(format!("vsc_abs_neg_{}_{t}", c.name), vec![(a, 1.0), (p, 1.0)], Sense::Ge, 0.0);
            let half = Affine::constant(s / SQRT_2);
            prog.add_rotated(
                format!("vsc_rating_{}_{t}", c.name),
                half.clone(),
                half,
                vec![Affine::var(p), Affine::var(q)],
            );
            inj.p[at(c.ac_bus, t)].push((p, 1.0));
            inj.q[at(c.ac_bus, t)].push((q, 1.0));
            inj.p[at(c.dc_bus, t)].push((p, -1.0));
            inj.p[at(c.dc_bus, t)].push((a, -c.loss_coeff));
            vars.p.push(p);
            vars.q.push(q);
            vars.abs.push(a);
        }
        vscs.push(vars);
    }

    // Storage.
    let mut devices = Vec::new();
    let mut shared_mu: Vec<(usize, Vec<Var>)> = Vec::new();
    for d in designs.iter().filter(|d| !d.is_empty()) {
        let b = net.bus_index(d.node).ok_or(DispatchError::UnknownNode(d.node))?;
        let dc = net.buses[b].kind == BusKind::Dc;
        let rating = BessRating::from_design(d, &opts.device, dc)?;
        let floors = match rating.kind {
            StorageKind::Sess => vec![rating.soc_min; hours],
            StorageKind::Mess => {
                let mut load = scen.load_series(d.node);
                load.resize(hours, 0.0);
                soc_floors(&rating, &load, net.buses[b].important_ratio, opts.device.reserve_horizon)?
            }
        };
        let dev = add_device(&mut prog, &mut inj, &mut shared_mu, d, rating, b, floors, scen, opts, base)?;
        devices.push(dev);
    }

    // Nodal balance, voltage drop and branch cones.
    for t in 0..hours {
        for (b, bus) in net.buses.iter().enumerate() {
            let load_p = scen.load_p(bus.id, t) - scen.pv(bus.id, t);
            let mut terms = inj.p[at(b, t)].clone();
            let mut q_terms = inj.q[at(b, t)].clone();
            for (k, br) in net.branches.iter().enumerate() {
                let v = &branches[k];
                if br.child == b {
                    terms.push((v.p[t], 1.0));
                    terms.push((v.l[t], -br.r_pu));
                    if let Some(q) = &v.q {
                        q_terms.push((q[t], 1.0));
                        q_terms.push((v.l[t], -br.x_pu));
                    }
                } else if br.parent == b {
                    terms.push((v.p[t], -1.0));
                    if let Some(q) = &v.q {
                        q_terms.push((q[t], -1.0));
                    }
                }
            }
            prog.add_linear(format!("balance_p_{}_{t}", bus.id), terms, Sense::Eq, load_p / base);
            if bus.kind == BusKind::Ac {
                let load_q = scen.load_q(bus.id, t);
                prog.add_linear(format!("balance_q_{}_{t}", bus.id), q_terms, Sense::Eq, load_q / base);
            }
        }
        for (k, br) in net.branches.iter().enumerate() {
            let v = &branches[k];
            let (from, to) = (net.buses[br.parent].id, net.buses[br.child].id);
            let vi = buses[br.parent].v[t];
            let vj = buses[br.child].v[t];
            let z2 = br.r_pu * br.r_pu + br.x_pu * br.x_pu;
            let mut drop = vec![(vj, 1.0), (vi, -1.0), (v.p[t], 2.0 * br.r_pu), (v.l[t], -z2)];
            let mut xs = vec![Affine::scaled(v.p[t], 2.0)];
            if let Some(q) = &v.q {
                drop.push((q[t], 2.0 * br.x_pu));
                xs.push(Affine::scaled(q[t], 2.0));
            }
            xs.push(Affine::new(vec![(v.l[t], 1.0), (vi, -1.0)], 0.0));
            prog.add_linear(format!("vdrop_{from}_{to}_{t}"), drop, Sense::Eq, 0.0);
            prog.add_soc(
                format!("flow_cone_{from}_{to}_{t}"),
                Affine::new(vec![(v.l[t], 1.0), (vi, 1.0)], 0.0),
                xs,
            );
        }
    }

    // Objective: λ1·C_loss + λ2·(C_var + C_com − B_arb), $ per day.
    let (l1, l2) = (opts.econ.lambda_loss, opts.econ.lambda_cost);
    for t in 0..hours {
        let money = scen.price[t] * DT_HOURS * base;
        for (k, br) in net.branches.iter().enumerate() {
            prog.add_objective(branches[k].l[t], l1 * money * br.r_pu);
        }
        for (h, c) in net.vscs.iter().enumerate() {
            prog.add_objective(vscs[h].abs[t], l1 * money * c.loss_coeff);
        }
    }
    for dev in &devices {
        add_device_objective(&mut prog, dev, scen, opts, base, l2);
    }
    if relaxed {
        for bv in &buses {
            for s in bv.lo.iter().chain(bv.hi.iter()).flatten() {
                prog.add_objective(*s, VIOLATION_PENALTY);
            }
        }
        for bv in &branches {
            for s in bv.over.iter().flatten() {
                prog.add_objective(*s, VIOLATION_PENALTY);
            }
        }
    }

    prog.validate()?;
    Ok(DispatchModel {
        net: net.clone(),
        scenario: scen.clone(),
        opts: opts.clone(),
        devices,
        program: prog,
        buses,
        branches,
        grid,
        vscs,
        hours,
    })
}

#[allow(clippy::too_many_arguments)]
fn add_device(
    prog: &mut ConicProgram,
    inj: &mut Injections,
    shared_mu: &mut Vec<(usize, Vec<Var>)>,
    d: &StorageDesign,
    rating: BessRating,
    b: usize,
    floors: Vec<f64>,
    scen: &Scenario,
    opts: &DispatchOptions,
    base: f64,
) -> Result<DeviceModel> {
    let hours = scen.price.len();
    let tag = format!("{}{}", tag_of(rating.kind), d.node);
    let tol = 1e-9;
    if let Some((t, f)) = floors.iter().enumerate().find(|(_, &f)| f > rating.soc_max + tol) {
        return Err(DispatchError::InfeasibleBounds(format!(
            "{tag}: SOC floor {f:.4} at hour {t} exceeds SOC max {}",
            rating.soc_max
        )));
    }
    if rating.soc0 < floors[0] - tol {
        return Err(DispatchError::InfeasibleBounds(format!(
            "{tag}: initial SOC {} below reserve floor {:.4}",
            rating.soc0, floors[0]
        )));
    }

    let pr = rating.p_rate / base;
    let qr = rating.q_rate / base;
    let e = rating.e_rate;
    let (cf, df) = (rating.charge_factor(), rating.discharge_factor());
    let tp = &opts.thermal;

    // Colocated units at one node share their mode binaries.
    let mu: Vec<Var> = match shared_mu.iter().find(|(bus, _)| *bus == b && d.colocated) {
        Some((_, mu)) => mu.clone(),
        None => {
            let mu: Vec<Var> = (0..hours)
                .map(|t| prog.add_binary(format!("mu_dis_{tag}_{t}"), CLASS_MODE))
                .collect();
            if d.colocated {
                shared_mu.push((b, mu.clone()));
            }
            mu
        }
    };

    let mut p_dis = Vec::with_capacity(hours);
    let mut p_ch = Vec::with_capacity(hours);
    let mut q_box = Vec::new();
    let mut q_dis = Vec::new();
    let mut q_ch = Vec::new();
    for t in 0..hours {
        let pd = prog.add_var(format!("p_dis_{tag}_{t}"), 0.0, pr);
        let pc = prog.add_var(format!("p_ch_{tag}_{t}"), -pr, 0.0);
        prog.add_linear(format!("dis_mode_{tag}_{t}"), vec![(pd, 1.0), (mu[t], -pr)], Sense::Le, 0.0);
        prog.add_linear(format!("ch_mode_{tag}_{t}"), vec![(pc, -1.0), (mu[t], pr)], Sense::Le, pr);
        prog.hint_binary(mu[t], &[pd], &[pc]);
        let at = inj.at(b, t);
        inj.p[at].extend([(pd, 1.0), (pc, 1.0)]);

        let mut q_expr = Affine::default();
        if !rating.dc_connected && qr > 0.0 {
            if d.colocated {
                let qd = prog.add_var(format!("q_dis_{tag}_{t}"), 0.0, qr);
                let qc = prog.add_var(format!("q_ch_{tag}_{t}"), -qr, 0.0);
                prog.add_linear(format!("q_dis_mode_{tag}_{t}"), vec![(qd, 1.0), (mu[t], -qr)], Sense::Le, 0.0);
                prog.add_linear(format!("q_ch_mode_{tag}_{t}"), vec![(qc, -1.0), (mu[t], qr)], Sense::Le, qr);
                let at = inj.at(b, t);
                inj.q[at].extend([(qd, 1.0), (qc, 1.0)]);
                q_expr = Affine::new(vec![(qd, 1.0), (qc, 1.0)], 0.0);
                q_dis.push(qd);
                q_ch.push(qc);
            } else {
                let q = prog.add_var(format!("q_{tag}_{t}"), -qr, qr);
                let at = inj.at(b, t);
                inj.q[at].push((q, 1.0));
                q_expr = Affine::var(q);
                q_box.push(q);
            }
        }
        if !rating.dc_connected {
            let half = Affine::constant(rating.s_pcs / base / SQRT_2);
            let mut xs = vec![Affine::new(vec![(pd, 1.0), (pc, 1.0)], 0.0)];
            if !q_expr.terms.is_empty() {
                xs.push(q_expr);
            }
            prog.add_rotated(format!("pcs_{tag}_{t}"), half.clone(), half, xs);
        }
        p_dis.push(pd);
        p_ch.push(pc);
    }
    let reactive = if !q_dis.is_empty() {
        Reactive::Split { dis: q_dis, ch: q_ch }
    } else if !q_box.is_empty() {
        Reactive::Box(q_box)
    } else {
        Reactive::None
    };

    // State of charge: fixed start, daily return, reserve floors.
    let mut soc = Vec::with_capacity(hours + 1);
    for t in 0..=hours {
        let name = format!("soc_{tag}_{t}");
        let var = if t == 0 {
            prog.add_var(name, rating.soc0, rating.soc0)
        } else if t < hours {
            prog.add_var(name, floors[t].max(rating.soc_min), rating.soc_max)
        } else {
            prog.add_var(name, rating.soc_min, rating.soc_max)
        };
        soc.push(var);
    }
    for t in 0..hours {
        prog.add_linear(
            format!("soc_step_{tag}_{t}"),
            vec![
                (soc[t + 1], 1.0),
                (soc[t], -(1.0 - rating.delta)),
                (p_ch[t], cf * base * DT_HOURS / e),
                (p_dis[t], base * DT_HOURS / (e * df)),
            ],
            Sense::Eq,
            0.0,
        );
    }
    prog.add_linear(
        format!("soc_cycle_{tag}"),
        vec![(soc[hours], 1.0), (soc[0], -1.0)],
        Sense::Eq,
        0.0,
    );

    // Cell current and heat of one representative container.
    let denom = tp.n_par * tp.u_bar * rating.n_cess as f64;
    let i_ref = rating.p_rate / df / denom;
    let ohmic = thermal::heat_from_parts(i_ref * i_ref, 0.0, tp);
    let entropic = thermal::heat_from_parts(0.0, 1.0, tp);
    let mut i2n = Vec::with_capacity(hours);
    let mut q_gen = Vec::with_capacity(hours);
    for t in 0..hours {
        let q = prog.add_var(format!("q_gen_{tag}_{t}"), 0.0, f64::INFINITY);
        let i2 = prog.add_var(format!("i2_cell_{tag}_{t}"), 0.0, f64::INFINITY);
        // i / i_ref, signed; 2·i2·½ ≥ (i / i_ref)².
        let i_norm = Affine::new(
            vec![(p_ch[t], cf * df * base / rating.p_rate), (p_dis[t], -base / rating.p_rate)],
            0.0,
        );
        prog.add_rotated(
            format!("cell_current_{tag}_{t}"),
            Affine::var(i2),
            Affine::constant(0.5),
            vec![i_norm],
        );
        // Q_gen = ohmic·i2 + entropic·|i|, with |i| linear under the mode binaries.
        prog.add_linear(
            format!("heat_gen_{tag}_{t}"),
            vec![
                (q, 1.0),
                (i2, -ohmic),
                (p_ch[t], entropic * cf * base / denom),
                (p_dis[t], -entropic * base / (df * denom)),
            ],
            Sense::Eq,
            0.0,
        );
        i2n.push(i2);
        q_gen.push(q);
    }

    let thermal = if opts.thermal_model {
        Some(add_container(prog, &q_gen, scen, opts, &tag))
    } else {
        None
    };

    Ok(DeviceModel {
        design: d.clone(),
        rating,
        bus: b,
        floors,
        i_ref,
        vars: DeviceVars {
            p_dis,
            p_ch,
            mu,
            reactive,
            soc,
            i2n,
            q_gen,
            thermal,
        },
    })
}

/// Container air and cell temperatures, HVAC and vents.
fn add_container(
    prog: &mut ConicProgram,
    q_gen: &[Var],
    scen: &Scenario,
    opts: &DispatchOptions,
    tag: &str,
) -> ThermalVars {
    let tp = &opts.thermal;
    let hours = q_gen.len();
    let t_ref = opts.t_ref();
    let (lo, hi) = (tp.t_min_k - t_ref, tp.t_max_k - t_ref);
    let mut tv = ThermalVars {
        tau: (0..=hours)
            .map(|t| prog.add_var(format!("t_cess_{tag}_{t}"), lo, hi))
            .collect(),
        tau_bar: (0..=hours)
            .map(|t| prog.add_var(format!("t_bar_{tag}_{t}"), lo, f64::INFINITY))
            .collect(),
        p_hot: Vec::with_capacity(hours),
        p_cool: Vec::with_capacity(hours),
        x_air: Vec::with_capacity(hours),
        x_vent: Vec::with_capacity(hours),
        tx: Vec::with_capacity(hours),
    };
    for t in 0..hours {
        let p_hot = prog.add_var(format!("p_hot_{tag}_{t}"), 0.0, tp.p_air_max);
        let p_cool = prog.add_var(format!("p_cool_{tag}_{t}"), 0.0, tp.p_air_max);
        let x_air = prog.add_binary(format!("x_air_{tag}_{t}"), CLASS_AIR);
        let x_vent = prog.add_binary(format!("x_vent_{tag}_{t}"), CLASS_VENT);
        prog.hint_binary(x_air, &[p_hot], &[p_cool]);
        tv.p_hot.push(p_hot);
        tv.p_cool.push(p_cool);
        tv.x_air.push(x_air);
        tv.x_vent.push(x_vent);
        tv.tx.push(prog.add_free(format!("t_vent_{tag}_{t}")));

        let mut rows = vec![
            thermal::balance_row(scen.t_ext_k[t], scen.wind_ms[t], tp),
            thermal::surface_row(tp),
        ];
        rows.extend(thermal::linearized_vent_constraints(tp));
        rows.extend(thermal::hvac_rows(tp));
        for row in &rows {
            add_thermal_row(prog, row, &tv, q_gen[t], t, t_ref, tag);
        }
    }
    prog.add_linear(
        format!("t_cess_cycle_{tag}"),
        vec![(tv.tau[hours], 1.0), (tv.tau[0], -1.0)],
        Sense::Eq,
        0.0,
    );
    prog.add_linear(
        format!("t_bar_cycle_{tag}"),
        vec![(tv.tau_bar[hours], 1.0), (tv.tau_bar[0], -1.0)],
        Sense::Eq,
        0.0,
    );
    tv
}

/// Adds one thermal row for hour `t` (state `t + 1`), substituting the
/// shifted temperature variables.
fn add_thermal_row(
    prog: &mut ConicProgram,
    row: &LinearRow,
    tv: &ThermalVars,
    q_gen: Var,
    t: usize,
    t_ref: f64,
    tag: &str,
) {
    let mut terms = Vec::with_capacity(row.terms.len() + 1);
    let mut rhs = row.rhs;
    for &(term, c) in &row.terms {
        let shifted = |v: Var, terms: &mut Vec<(Var, f64)>, rhs: &mut f64| {
            terms.push((v, c));
            *rhs -= c * t_ref;
        };
        match term {
            ThermalTerm::TCess => shifted(tv.tau[t + 1], &mut terms, &mut rhs),
            ThermalTerm::TCessPrev => shifted(tv.tau[t], &mut terms, &mut rhs),
            ThermalTerm::TBar => shifted(tv.tau_bar[t + 1], &mut terms, &mut rhs),
            ThermalTerm::TBarPrev => shifted(tv.tau_bar[t], &mut terms, &mut rhs),
            ThermalTerm::TVent => {
                terms.push((tv.tx[t], c));
                terms.push((tv.x_vent[t], c * t_ref));
            }
            ThermalTerm::PHot => terms.push((tv.p_hot[t], c)),
            ThermalTerm::PCool => terms.push((tv.p_cool[t], c)),
            ThermalTerm::XVent => terms.push((tv.x_vent[t], c)),
            ThermalTerm::XAir => terms.push((tv.x_air[t], c)),
            ThermalTerm::QGen => terms.push((q_gen, c)),
        }
    }
    let sense = match row.sense {
        thermal::Sense::Eq => Sense::Eq,
        thermal::Sense::Le => Sense::Le,
    };
    prog.add_linear(format!("{}_{tag}_{t}", row.name), terms, sense, rhs);
}

fn add_device_objective(
    prog: &mut ConicProgram,
    dev: &DeviceModel,
    scen: &Scenario,
    opts: &DispatchOptions,
    base: f64,
    l2: f64,
) {
    let r = &dev.rating;
    let v = &dev.vars;
    let n = r.n_cess as f64;
    let ohmic = dev.ohmic_kw_per_unit(&opts.thermal);
    let hours = scen.price.len();
    for t in 0..hours {
        let price = scen.price[t] * DT_HOURS;
        // Variable O&M: HVAC and cell ohmic loss of every container.
        if let Some(tv) = &v.thermal {
            prog.add_objective(tv.p_hot[t], l2 * price * n);
            prog.add_objective(tv.p_cool[t], l2 * price * n);
        }
        prog.add_objective(v.i2n[t], l2 * price * n * ohmic);
        // Arbitrage revenue.
        prog.add_objective(v.p_dis[t], -l2 * price * base);
        prog.add_objective(v.p_ch[t], -l2 * price * base);
    }
    // Life compensation from the linear damage estimate, with per-hour
    // discharge depth standing in for cycle depth.
    let dp = &opts.degradation;
    let k = l2 * opts.econ.c_e * r.e_rate / dp.end_of_life;
    for t in 0..hours {
        prog.add_objective(v.soc[t], k * dp.idle_slope / hours as f64);
        prog.add_objective(
            v.p_dis[t],
            k * 0.5 * dp.cycle_slope * base * DT_HOURS / (r.e_rate * r.discharge_factor()),
        );
    }
    prog.objective.constant += k * (dp.idle_intercept + 0.5 * dp.cycle_intercept);
}

pub(crate) fn tag_of(kind: StorageKind) -> &'static str {
    match kind {
        StorageKind::Sess => "sess",
        StorageKind::Mess => "mess",
    }
}

impl DispatchModel {
    /// Conic Benchmark Format text of the program.
    pub fn to_cbf(&self) -> String {
        duostore_conic::cbf::to_cbf(&self.program)
    }

    pub(crate) fn device_current_denominator(&self, k: usize) -> f64 {
        self.devices[k].current_denominator(&self.opts.thermal)
    }
}
