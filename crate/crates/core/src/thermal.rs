//! Container thermal model: cell heat, battery/air exchange, HVAC and
//! natural ventilation.
//!
//! The heat balance is written once as a linear row over [`ThermalTerm`]s.
//! The simulator solves that row for the new container temperature; the
//! dispatch model adds the same row to its conic program.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::storage::BessRating;
use crate::{DT_HOURS, DT_SECONDS, J_PER_KWH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalParams {
    /// Cell internal resistance, ohm.
    pub r_int: f64,
    pub n_bar: f64,
    pub n_par: f64,
    /// Cell voltage, kV.
    pub u_bar: f64,
    /// Cell surface area, m².
    pub a_bar: f64,
    /// Surface heat transfer coefficient, W/m²K.
    pub h_trans: f64,
    /// Cell specific heat, J/kgK.
    pub c_bat: f64,
    /// Cell mass, kg.
    pub m_bat: f64,
    /// Air specific heat, J/kgK.
    pub c_air: f64,
    /// Air mass inside one container, kg.
    pub m_air: f64,
    pub cop: f64,
    pub eer: f64,
    pub rho_air: f64,
    /// Wall heat transfer coefficient, W/m²K.
    pub k_wall: f64,
    pub a_wall: f64,
    pub a_vent: f64,
    /// Product of the flow and wind-pressure coefficients.
    pub c_flo_sqrt_c_wind: f64,
    /// Reversible heat constant, V.
    pub entropic: f64,
    pub t_min_k: f64,
    pub t_max_k: f64,
    /// HVAC electrical rating per container, kW.
    pub p_air_max: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        Self {
            r_int: 0.003,
            n_bar: 2760.0,
            n_par: 12.0,
            u_bar: 0.851,
            a_bar: 0.0418,
            h_trans: 5.0,
            c_bat: 956.0,
            m_bat: 1.7,
            c_air: 1003.0,
            m_air: 107.4,
            cop: 3.25,
            eer: 3.34,
            rho_air: 1.248,
            k_wall: 0.6,
            a_wall: 114.46,
            a_vent: 0.5,
            c_flo_sqrt_c_wind: 0.29,
            entropic: 0.0116,
            t_min_k: 283.15,
            t_max_k: 308.15,
            p_air_max: 10.0,
        }
    }
}

impl ThermalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("r_int", self.r_int),
            ("n_bar", self.n_bar),
            ("n_par", self.n_par),
            ("u_bar", self.u_bar),
            ("a_bar", self.a_bar),
            ("h_trans", self.h_trans),
            ("c_bat", self.c_bat),
            ("m_bat", self.m_bat),
            ("c_air", self.c_air),
            ("m_air", self.m_air),
            ("rho_air", self.rho_air),
            ("k_wall", self.k_wall),
            ("a_wall", self.a_wall),
            ("a_vent", self.a_vent),
            ("c_flo_sqrt_c_wind", self.c_flo_sqrt_c_wind),
            ("entropic", self.entropic),
            ("p_air_max", self.p_air_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CoreError::Config(format!("thermal.{name} must be positive")));
            }
        }
        if !(self.cop > 1.0 && self.eer > 1.0) {
            return Err(CoreError::Config("thermal COP and EER must exceed 1".into()));
        }
        if !(0.0 < self.t_min_k && self.t_min_k < self.t_max_k) {
            return Err(CoreError::Config("thermal temperature window invalid".into()));
        }
        Ok(())
    }

    /// Air enthalpy per kelvin, kWh/K.
    pub fn air_capacity(&self) -> f64 {
        self.c_air * self.m_air / J_PER_KWH
    }

    /// Cell enthalpy per kelvin for the whole container, kWh/K.
    pub fn battery_capacity(&self) -> f64 {
        self.c_bat * self.m_bat * self.n_bar / J_PER_KWH
    }

    /// Cell-to-air convective conductance, kW/K.
    pub fn surface_conductance(&self) -> f64 {
        self.a_bar * self.h_trans * self.n_bar / 1000.0
    }

    /// Wall conductance, kW/K.
    pub fn wall_conductance(&self) -> f64 {
        self.k_wall * self.a_wall / 1000.0
    }

    /// Wind-driven ventilation flow, m³/s.
    pub fn vent_flow(&self, wind_ms: f64) -> f64 {
        self.a_vent / 2.0 * self.c_flo_sqrt_c_wind * wind_ms.abs()
    }

    /// Heat carried per kelvin by an open vent over one step, kWh/K.
    pub fn vent_conductance(&self, wind_ms: f64) -> f64 {
        DT_SECONDS * self.vent_flow(wind_ms) * self.c_air * self.rho_air / J_PER_KWH
    }

    /// Temperature lift of the cells over the air per kW of heat generated.
    pub fn surface_lift(&self) -> f64 {
        1.0 / (self.surface_conductance() + self.battery_capacity() / DT_HOURS)
    }

    /// Share of generated heat released into the air.
    pub fn release_fraction(&self) -> f64 {
        self.surface_conductance() * self.surface_lift()
    }
}

/// Per-cell current in A. Charging power is non-positive, so the result is
/// negative while discharging.
pub fn cell_current(p_ch: f64, p_dis: f64, r: &BessRating, tp: &ThermalParams) -> Result<f64> {
    let denom = tp.n_par * tp.u_bar * r.n_cess as f64;
    if denom <= 0.0 {
        return Err(CoreError::DegenerateDevice(format!(
            "{} at node {} has no containers",
            r.kind, r.node
        )));
    }
    Ok((p_ch * r.charge_factor() - p_dis / r.discharge_factor()) / denom)
}

/// Heat released by one container's cells, kW.
pub fn heat_generation(i_bat: f64, tp: &ThermalParams) -> f64 {
    heat_from_parts(i_bat * i_bat, i_bat.abs(), tp)
}

/// Heat from the squared and absolute cell current; lets the dispatch model
/// plug in its surrogate for I².
pub fn heat_from_parts(i_sq: f64, i_abs: f64, tp: &ThermalParams) -> f64 {
    (i_sq * tp.r_int + i_abs * tp.entropic) * tp.n_bar / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    pub t_cess: f64,
    pub t_bar: f64,
}

impl ThermalState {
    pub fn uniform(t: f64) -> Self {
        Self { t_cess: t, t_bar: t }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HvacAction {
    pub p_hot: f64,
    pub p_cool: f64,
    /// Heating mode selected.
    pub x_air: bool,
    pub x_vent: bool,
}

impl HvacAction {
    pub fn is_valid(&self, tp: &ThermalParams, tol: f64) -> bool {
        let heat = if self.x_air { 1.0 } else { 0.0 };
        self.p_hot >= -tol
            && self.p_cool >= -tol
            && self.p_hot <= tp.p_air_max * heat + tol
            && self.p_cool <= tp.p_air_max * (1.0 - heat) + tol
    }

    pub fn power(&self) -> f64 {
        self.p_hot + self.p_cool
    }
}

/// Variables appearing in the thermal rows of one hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThermalTerm {
    TCess,
    TCessPrev,
    TBar,
    TBarPrev,
    PHot,
    PCool,
    /// Product of container temperature and vent state.
    TVent,
    XVent,
    XAir,
    /// Heat generated by the cells this hour.
    QGen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    /// `terms ≤ rhs`
    Le,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub name: &'static str,
    pub terms: Vec<(ThermalTerm, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearRow {
    pub fn eval(&self, value: impl Fn(ThermalTerm) -> f64) -> f64 {
        self.terms.iter().map(|&(v, c)| c * value(v)).sum::<f64>() - self.rhs
    }

    pub fn satisfied(&self, value: impl Fn(ThermalTerm) -> f64, tol: f64) -> bool {
        let r = self.eval(value);
        match self.sense {
            Sense::Eq => r.abs() <= tol,
            Sense::Le => r <= tol,
        }
    }
}

/// Air heat balance over one hour, in kWh:
/// C_a(T − T⁻) = COP·P_hot − EER·P_cool + Q_rel + g_v(T_ext·X − T^X)
///               + g_w(T_ext − T) − C_b(T − T_bar⁻)
pub fn balance_row(t_ext: f64, wind_ms: f64, tp: &ThermalParams) -> LinearRow {
    let ca = tp.air_capacity();
    let cb = tp.battery_capacity();
    let gw = tp.wall_conductance() * DT_HOURS;
    let gv = tp.vent_conductance(wind_ms);
    LinearRow {
        name: "heat_balance",
        terms: vec![
            (ThermalTerm::TCess, ca + cb + gw),
            (ThermalTerm::TCessPrev, -ca),
            (ThermalTerm::TBarPrev, -cb),
            (ThermalTerm::PHot, -tp.cop * DT_HOURS),
            (ThermalTerm::PCool, tp.eer * DT_HOURS),
            (ThermalTerm::QGen, -tp.release_fraction() * DT_HOURS),
            (ThermalTerm::TVent, gv),
            (ThermalTerm::XVent, -gv * t_ext),
        ],
        sense: Sense::Eq,
        rhs: gw * t_ext,
    }
}

/// Cell temperature follows from the generated heat split between surface
/// release and absorption: T_bar = T + Q_gen·lift.
pub fn surface_row(tp: &ThermalParams) -> LinearRow {
    LinearRow {
        name: "cell_surface",
        terms: vec![
            (ThermalTerm::TBar, 1.0),
            (ThermalTerm::TCess, -1.0),
            (ThermalTerm::QGen, -tp.surface_lift()),
        ],
        sense: Sense::Eq,
        rhs: 0.0,
    }
}

/// Exact linearization of T^X = T·X for binary X and T ∈ [T_min, T_max].
pub fn linearized_vent_constraints(tp: &ThermalParams) -> Vec<LinearRow> {
    use ThermalTerm::*;
    let (lo, hi) = (tp.t_min_k, tp.t_max_k);
    vec![
        LinearRow {
            name: "vent_upper_state",
            terms: vec![(TVent, 1.0), (TCess, -1.0)],
            sense: Sense::Le,
            rhs: 0.0,
        },
        LinearRow {
            name: "vent_lower_state",
            terms: vec![(TVent, -1.0), (TCess, 1.0), (XVent, hi)],
            sense: Sense::Le,
            rhs: hi,
        },
        LinearRow {
            name: "vent_upper_switch",
            terms: vec![(TVent, 1.0), (XVent, -hi)],
            sense: Sense::Le,
            rhs: 0.0,
        },
        LinearRow {
            name: "vent_lower_switch",
            terms: vec![(TVent, -1.0), (XVent, lo)],
            sense: Sense::Le,
            rhs: 0.0,
        },
    ]
}

/// HVAC mode rows: P_hot ≤ P_max·X_air, P_cool ≤ P_max·(1 − X_air).
pub fn hvac_rows(tp: &ThermalParams) -> Vec<LinearRow> {
    use ThermalTerm::*;
    vec![
        LinearRow {
            name: "hvac_heat",
            terms: vec![(PHot, 1.0), (XAir, -tp.p_air_max)],
            sense: Sense::Le,
            rhs: 0.0,
        },
        LinearRow {
            name: "hvac_cool",
            terms: vec![(PCool, 1.0), (XAir, tp.p_air_max)],
            sense: Sense::Le,
            rhs: tp.p_air_max,
        },
    ]
}

fn valuation(
    prev: &ThermalState,
    next: &ThermalState,
    hvac: &HvacAction,
    q_gen: f64,
) -> impl Fn(ThermalTerm) -> f64 {
    let (prev, next, hvac) = (*prev, *next, *hvac);
    let x = if hvac.x_vent { 1.0 } else { 0.0 };
    let xa = if hvac.x_air { 1.0 } else { 0.0 };
    move |v| match v {
        ThermalTerm::TCess => next.t_cess,
        ThermalTerm::TCessPrev => prev.t_cess,
        ThermalTerm::TBar => next.t_bar,
        ThermalTerm::TBarPrev => prev.t_bar,
        ThermalTerm::PHot => hvac.p_hot,
        ThermalTerm::PCool => hvac.p_cool,
        ThermalTerm::TVent => next.t_cess * x,
        ThermalTerm::XVent => x,
        ThermalTerm::XAir => xa,
        ThermalTerm::QGen => q_gen,
    }
}

/// Advances the container by one hour by solving the balance row for the new
/// air temperature. Results are not clamped to the operating window.
pub fn balance_step(
    prev: &ThermalState,
    hvac: &HvacAction,
    q_gen: f64,
    t_ext: f64,
    wind_ms: f64,
    tp: &ThermalParams,
) -> ThermalState {
    let row = balance_row(t_ext, wind_ms, tp);
    let x = if hvac.x_vent { 1.0 } else { 0.0 };
    // Split the row into the part linear in T_CESS and the rest.
    let mut slope = 0.0;
    let probe = ThermalState { t_cess: 0.0, t_bar: 0.0 };
    for &(v, c) in &row.terms {
        match v {
            ThermalTerm::TCess => slope += c,
            ThermalTerm::TVent => slope += c * x,
            _ => {}
        }
    }
    let offset = row.eval(valuation(prev, &probe, hvac, q_gen));
    let t_cess = -offset / slope;
    ThermalState {
        t_cess,
        t_bar: t_cess + q_gen * tp.surface_lift(),
    }
}

/// Energy residual of the balance row in kWh.
pub fn balance_residual(
    prev: &ThermalState,
    next: &ThermalState,
    hvac: &HvacAction,
    q_gen: f64,
    t_ext: f64,
    wind_ms: f64,
    tp: &ThermalParams,
) -> f64 {
    balance_row(t_ext, wind_ms, tp).eval(valuation(prev, next, hvac, q_gen))
}

/// Individual heat flows of one step, kWh, signed as gains to the air.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatFlows {
    pub hvac: f64,
    pub released: f64,
    pub absorbed: f64,
    pub vent: f64,
    pub wall: f64,
    pub abstem: f64,
}

pub fn heat_flows(
    prev: &ThermalState,
    next: &ThermalState,
    hvac: &HvacAction,
    t_ext: f64,
    wind_ms: f64,
    tp: &ThermalParams,
) -> HeatFlows {
    let x = if hvac.x_vent { 1.0 } else { 0.0 };
    let lift = next.t_bar - next.t_cess;
    HeatFlows {
        hvac: (tp.cop * hvac.p_hot - tp.eer * hvac.p_cool) * DT_HOURS,
        released: tp.surface_conductance() * lift * DT_HOURS,
        absorbed: tp.battery_capacity() * lift,
        vent: tp.vent_conductance(wind_ms) * (t_ext - next.t_cess) * x,
        wall: tp.wall_conductance() * (t_ext - next.t_cess) * DT_HOURS,
        abstem: tp.battery_capacity() * (next.t_cess - prev.t_bar),
    }
}

impl HeatFlows {
    pub fn net_gain(&self) -> f64 {
        self.hvac + self.released + self.vent + self.wall - self.abstem
    }
}

/// Hour-by-hour simulation; returns `hvac.len() + 1` states.
pub fn simulate_day(
    initial: ThermalState,
    hvac: &[HvacAction],
    q_gen: &[f64],
    t_ext: &[f64],
    wind_ms: &[f64],
    tp: &ThermalParams,
) -> Vec<ThermalState> {
    let mut out = Vec::with_capacity(hvac.len() + 1);
    out.push(initial);
    for t in 0..hvac.len() {
        let next = balance_step(&out[t], &hvac[t], q_gen[t], t_ext[t], wind_ms[t], tp);
        out.push(next);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ThermalViolation {
    OutOfWindow { t: usize, t_cess: f64 },
    CellBelowAir { t: usize, t_cess: f64, t_bar: f64 },
    Periodicity { start: f64, end: f64 },
}

pub fn check_states(states: &[ThermalState], tp: &ThermalParams, tol: f64) -> Vec<ThermalViolation> {
    let mut out = Vec::new();
    for (t, s) in states.iter().enumerate() {
        if s.t_cess < tp.t_min_k - tol || s.t_cess > tp.t_max_k + tol {
            out.push(ThermalViolation::OutOfWindow { t, t_cess: s.t_cess });
        }
        if s.t_cess > s.t_bar + tol {
            out.push(ThermalViolation::CellBelowAir {
                t,
                t_cess: s.t_cess,
                t_bar: s.t_bar,
            });
        }
    }
    if let (Some(a), Some(b)) = (states.first(), states.last()) {
        if (a.t_cess - b.t_cess).abs() > tol {
            out.push(ThermalViolation::Periodicity {
                start: a.t_cess,
                end: b.t_cess,
            });
        }
    }
    out
}
