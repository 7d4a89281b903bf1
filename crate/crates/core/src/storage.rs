//! Device-level battery model shared by stationary and mobile units.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::net::StorageKind;
use crate::{DT_HOURS, HOURS};

pub const TRAJECTORY_TOL: f64 = 1e-6;

/// Technology parameters that do not depend on the sizing decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    pub eta_c: f64,
    pub eta_d: f64,
    pub eta_pcs: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Self-discharge per step.
    pub self_discharge: f64,
    /// Energy held by one stationary container.
    pub container_kwh: f64,
    /// Energy and power of one mobile module.
    pub module_kwh: f64,
    pub module_kw: f64,
    /// Let AC-connected devices exchange reactive power up to their power rating.
    pub reactive: bool,
    /// Hours of important load a mobile unit must be able to carry.
    pub reserve_horizon: usize,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            eta_c: 0.976,
            eta_d: 0.976,
            eta_pcs: 0.95,
            soc_min: 0.1,
            soc_max: 0.9,
            self_discharge: 0.0,
            container_kwh: 1000.0,
            module_kwh: 1000.0,
            module_kw: 1000.0,
            reactive: true,
            reserve_horizon: 2,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta_c", self.eta_c), ("eta_d", self.eta_d), ("eta_pcs", self.eta_pcs)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(CoreError::Config(format!("{name} = {v} outside (0, 1]")));
            }
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return Err(CoreError::Config(format!(
                "SOC window [{}, {}] invalid",
                self.soc_min, self.soc_max
            )));
        }
        if !(0.0..1.0).contains(&self.self_discharge) {
            return Err(CoreError::Config("self_discharge outside [0, 1)".into()));
        }
        if !(self.container_kwh > 0.0 && self.module_kwh > 0.0 && self.module_kw > 0.0) {
            return Err(CoreError::Config("container/module sizes must be positive".into()));
        }
        if self.reserve_horizon == 0 {
            return Err(CoreError::Config("reserve_horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sizing decision for one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageDesign {
    pub node: u32,
    pub kind: StorageKind,
    pub e_rate_kwh: f64,
    pub p_rate_kw: f64,
    pub soc0: f64,
    /// Number of mobile modules (zero for stationary units).
    pub modules: u32,
    pub colocated: bool,
    /// Use the converter's reactive capability; off pins Q to zero.
    #[serde(default = "enabled")]
    pub q_enable: bool,
}

fn enabled() -> bool {
    true
}

impl StorageDesign {
    pub fn sess(node: u32, e_rate_kwh: f64, p_rate_kw: f64, soc0: f64) -> Self {
        Self {
            node,
            kind: StorageKind::Sess,
            e_rate_kwh,
            p_rate_kw,
            soc0,
            modules: 0,
            colocated: false,
            q_enable: true,
        }
    }

    pub fn mess(node: u32, modules: u32, params: &DeviceParams, soc0: f64) -> Self {
        Self {
            node,
            kind: StorageKind::Mess,
            e_rate_kwh: modules as f64 * params.module_kwh,
            p_rate_kw: modules as f64 * params.module_kw,
            soc0,
            modules,
            colocated: false,
            q_enable: true,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.e_rate_kwh <= 0.0 || self.p_rate_kw <= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BessRating {
    pub node: u32,
    pub kind: StorageKind,
    pub e_rate: f64,
    pub p_rate: f64,
    pub q_rate: f64,
    pub s_pcs: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc0: f64,
    pub delta: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    pub eta_pcs: f64,
    pub n_cess: u32,
    pub modules: u32,
    pub colocated: bool,
    pub dc_connected: bool,
}

impl BessRating {
    pub fn from_design(d: &StorageDesign, p: &DeviceParams, dc_connected: bool) -> Result<Self> {
        if !(d.e_rate_kwh >= 0.0 && d.p_rate_kw >= 0.0) {
            return Err(CoreError::Config(format!(
                "device at node {}: negative rating",
                d.node
            )));
        }
        let n_cess = match d.kind {
            StorageKind::Sess => (d.e_rate_kwh / p.container_kwh - 1e-9).ceil().max(0.0) as u32,
            StorageKind::Mess => d.modules,
        };
        let q_rate = if dc_connected || !p.reactive || !d.q_enable { 0.0 } else { d.p_rate_kw };
        let r = Self {
            node: d.node,
            kind: d.kind,
            e_rate: d.e_rate_kwh,
            p_rate: d.p_rate_kw,
            q_rate,
            s_pcs: d.p_rate_kw.max(q_rate),
            soc_min: p.soc_min,
            soc_max: p.soc_max,
            soc0: d.soc0,
            delta: p.self_discharge,
            eta_c: p.eta_c,
            eta_d: p.eta_d,
            eta_pcs: p.eta_pcs,
            n_cess,
            modules: d.modules,
            colocated: d.colocated,
            dc_connected,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return Err(CoreError::Config("SOC window invalid".into()));
        }
        if self.soc0 < self.soc_min - TRAJECTORY_TOL || self.soc0 > self.soc_max + TRAJECTORY_TOL {
            return Err(CoreError::Config(format!(
                "device at node {}: initial SOC {} outside [{}, {}]",
                self.node, self.soc0, self.soc_min, self.soc_max
            )));
        }
        if self.e_rate < 0.0 || self.p_rate < 0.0 {
            return Err(CoreError::Config("ratings must be non-negative".into()));
        }
        for v in [self.eta_c, self.eta_d, self.eta_pcs] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(CoreError::Config("efficiency outside (0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Fraction of stored energy delivered to the grid per unit discharged.
    pub fn discharge_factor(&self) -> f64 {
        self.eta_d * self.eta_pcs
    }

    pub fn charge_factor(&self) -> f64 {
        self.eta_c * self.eta_pcs
    }

    fn require_energy(&self) -> Result<()> {
        if self.e_rate <= 0.0 {
            Err(CoreError::DegenerateDevice(format!(
                "{} at node {} has zero energy rating",
                self.kind, self.node
            )))
        } else {
            Ok(())
        }
    }
}

/// Operating point for one hour. `p_ch` and `q_ch` are non-positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BessSetpoint {
    pub p_dis: f64,
    pub p_ch: f64,
    pub q_dis: f64,
    pub q_ch: f64,
    pub mu_dis: bool,
}

impl BessSetpoint {
    pub fn discharging(p: f64) -> Self {
        Self {
            p_dis: p,
            mu_dis: true,
            ..Default::default()
        }
    }

    /// `p` is the (non-positive) charging power.
    pub fn charging(p: f64) -> Self {
        Self {
            p_ch: p,
            mu_dis: false,
            ..Default::default()
        }
    }

    pub fn mu_ch(&self) -> bool {
        !self.mu_dis
    }

    pub fn p_net(&self) -> f64 {
        self.p_dis + self.p_ch
    }

    pub fn q_net(&self) -> f64 {
        self.q_dis + self.q_ch
    }

    /// Mode and rating constraints for active (and, for colocated pairs,
    /// split reactive) power.
    pub fn respects_mode(&self, r: &BessRating, tol: f64) -> bool {
        let (on_dis, on_ch) = if self.mu_dis { (1.0, 0.0) } else { (0.0, 1.0) };
        let active = self.p_dis >= -tol
            && self.p_dis <= r.p_rate * on_dis + tol
            && self.p_ch <= tol
            && self.p_ch >= -r.p_rate * on_ch - tol;
        if !active {
            return false;
        }
        if r.dc_connected {
            return self.q_net().abs() <= tol;
        }
        if r.colocated {
            self.q_dis >= -tol
                && self.q_dis <= r.q_rate * on_dis + tol
                && self.q_ch <= tol
                && self.q_ch >= -r.q_rate * on_ch - tol
        } else {
            self.q_net().abs() <= r.q_rate + tol
        }
    }
}

/// SOC after one step; no clamping.
pub fn soc_step(soc_prev: f64, sp: &BessSetpoint, r: &BessRating) -> Result<f64> {
    r.require_energy()?;
    Ok(soc_prev * (1.0 - r.delta) - sp.p_ch * r.charge_factor() * DT_HOURS / r.e_rate
        - sp.p_dis * DT_HOURS / (r.e_rate * r.discharge_factor()))
}

/// Full trajectory of length `setpoints.len() + 1` starting from `r.soc0`.
pub fn simulate_soc(setpoints: &[BessSetpoint], r: &BessRating) -> Result<Vec<f64>> {
    let mut traj = Vec::with_capacity(setpoints.len() + 1);
    let mut soc = r.soc0;
    traj.push(soc);
    for sp in setpoints {
        soc = soc_step(soc, sp, r)?;
        traj.push(soc);
    }
    Ok(traj)
}

/// Apparent-power check of the converter. DC-connected devices only see the
/// mode constraints.
pub fn pcs_feasible(sp: &BessSetpoint, r: &BessRating) -> bool {
    if r.dc_connected {
        return sp.respects_mode(r, 1e-9);
    }
    sp.p_net().hypot(sp.q_net()) <= r.s_pcs * (1.0 + 1e-12)
}

/// Reserve floor for a mobile unit at hour `t`: energy needed to carry the
/// important share of the next `horizon` hours of load.
pub fn mess_min_soc(
    t: usize,
    load_p: &[f64],
    r: &BessRating,
    mu_impor: f64,
    horizon: usize,
) -> Result<f64> {
    r.require_energy()?;
    if load_p.is_empty() {
        return Err(CoreError::Domain("empty load series".into()));
    }
    let n = load_p.len();
    let energy: f64 = (0..horizon).map(|k| load_p[(t + k) % n]).sum::<f64>() * DT_HOURS;
    Ok(mu_impor * energy / (r.e_rate * r.discharge_factor()))
}

/// Floors applied to SOC at the start of each hour.
pub fn soc_floors(
    r: &BessRating,
    load_p: &[f64],
    mu_impor: f64,
    horizon: usize,
) -> Result<Vec<f64>> {
    match r.kind {
        StorageKind::Sess => Ok(vec![r.soc_min; HOURS]),
        StorageKind::Mess => (0..load_p.len())
            .map(|t| Ok(r.soc_min.max(mess_min_soc(t, load_p, r, mu_impor, horizon)?)))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SocViolation {
    AboveMax { t: usize, soc: f64, max: f64 },
    BelowMin { t: usize, soc: f64, min: f64 },
    BelowFloor { t: usize, soc: f64, floor: f64 },
    Periodicity { start: f64, end: f64 },
}

/// Checks bounds at every entry, reserve floors at the start of each hour
/// and the daily return to the initial SOC.
pub fn check_trajectory(traj: &[f64], r: &BessRating, floors: &[f64]) -> Vec<SocViolation> {
    let tol = TRAJECTORY_TOL;
    let mut out = Vec::new();
    for (t, &soc) in traj.iter().enumerate() {
        if soc > r.soc_max + tol {
            out.push(SocViolation::AboveMax { t, soc, max: r.soc_max });
        } else if soc < r.soc_min - tol {
            out.push(SocViolation::BelowMin { t, soc, min: r.soc_min });
        } else if let Some(&floor) = floors.get(t) {
            if floor > r.soc_min && soc < floor - tol {
                out.push(SocViolation::BelowFloor { t, soc, floor });
            }
        }
    }
    if let (Some(&start), Some(&end)) = (traj.first(), traj.last()) {
        if (end - start).abs() > tol {
            out.push(SocViolation::Periodicity { start, end });
        }
    }
    out
}
