//! Life-cycle cost of stationary units, rent of mobile modules, and the
//! operating cash flows (arbitrage, losses, variable O&M) of a dispatch.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::net::StorageKind;
use crate::storage::BessRating;
use crate::thermal::ThermalParams;
use crate::DT_HOURS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EconParams {
    /// Battery energy price, $/kWh.
    pub c_e: f64,
    /// Converter price, $/kW.
    pub c_p: f64,
    /// Balance-of-plant price, $/kWh.
    pub c_b: f64,
    /// Fixed O&M, $/kW per year.
    pub c_f: f64,
    /// Disposal, $/kW.
    pub c_d: f64,
    /// Mobile module rent, $/module per day.
    pub c_rent: f64,
    pub discount_rate: f64,
    pub project_years: f64,
    /// Annual decline of equipment prices.
    pub cost_decline: f64,
    pub pcs_life_years: f64,
    /// Up-front budget, $.
    pub budget: f64,
    /// Weight on network loss cost in the dispatch objective.
    pub lambda_loss: f64,
    /// Weight on money terms in the dispatch objective.
    pub lambda_cost: f64,
    /// Largest tolerated relaxation gap before the penalty applies.
    pub gap_max: f64,
    pub penalty: f64,
    /// Length of the mobile rent period, days.
    pub rent_days: f64,
    pub days_per_year: f64,
}

impl Default for EconParams {
    fn default() -> Self {
        Self {
            c_e: 156.0,
            c_p: 10.0,
            c_b: 0.0,
            c_f: 23.8,
            c_d: 243.4,
            c_rent: 102.6,
            discount_rate: 0.10,
            project_years: 20.0,
            cost_decline: 0.0,
            pcs_life_years: 10.0,
            budget: 2.0e6,
            lambda_loss: 0.67,
            lambda_cost: 0.33,
            gap_max: 1e-4,
            penalty: 1e6,
            rent_days: 60.0,
            days_per_year: 360.0,
        }
    }
}

impl EconParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.discount_rate >= 0.0) {
            return Err(CoreError::Config("discount_rate must be non-negative".into()));
        }
        if !(self.project_years >= 1.0) {
            return Err(CoreError::Config("project_years must be at least 1".into()));
        }
        if ((self.lambda_loss + self.lambda_cost) - 1.0).abs() > 1e-9 {
            return Err(CoreError::Config(format!(
                "objective weights must sum to 1 (got {} + {})",
                self.lambda_loss, self.lambda_cost
            )));
        }
        if !(self.budget >= 0.0) {
            return Err(CoreError::Config("budget must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.cost_decline) {
            return Err(CoreError::Config("cost_decline must lie in [0, 1)".into()));
        }
        let prices = [
            ("c_e", self.c_e),
            ("c_p", self.c_p),
            ("c_b", self.c_b),
            ("c_f", self.c_f),
            ("c_d", self.c_d),
            ("c_rent", self.c_rent),
            ("gap_max", self.gap_max),
            ("penalty", self.penalty),
            ("rent_days", self.rent_days),
        ];
        for (name, v) in prices {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(CoreError::Config(format!("{name} must be non-negative")));
            }
        }
        if !(self.days_per_year > 0.0 && self.pcs_life_years > 0.0) {
            return Err(CoreError::Config("days_per_year and pcs_life_years must be positive".into()));
        }
        Ok(())
    }

    pub fn crf(&self) -> f64 {
        crf(self.discount_rate, self.project_years)
    }

    /// Discount-and-decline factor for a cash flow `years` from now.
    fn present_factor(&self, years: f64) -> f64 {
        ((1.0 - self.cost_decline) / (1.0 + self.discount_rate)).powf(years)
    }
}

/// Capital recovery factor τ(1+τ)^Y / ((1+τ)^Y − 1), continuous at τ = 0.
pub fn crf(tau: f64, years: f64) -> f64 {
    if tau.abs() < 1e-12 {
        return 1.0 / years;
    }
    let g = (years * tau.ln_1p()).exp_m1();
    tau * (g + 1.0) / g
}

/// Up-front spend of a stationary unit, $.
pub fn capital_outlay(r: &BessRating, p: &EconParams) -> f64 {
    (p.c_e + p.c_b) * r.e_rate + p.c_p * r.p_rate
}

pub fn annualized_capital(r: &BessRating, p: &EconParams) -> f64 {
    capital_outlay(r, p) * p.crf()
}

/// Number of battery replacements strictly inside the project horizon.
pub fn replacement_count(lifetime_years: f64, horizon_years: f64) -> u32 {
    if !(lifetime_years > 0.0) || lifetime_years >= horizon_years {
        return 0;
    }
    ((horizon_years / lifetime_years - 1e-9).ceil() - 1.0).max(0.0) as u32
}

/// Annualized replacement and disposal cost of a stationary unit with
/// battery lifetime `n` years.
pub fn replacement_and_disposal(r: &BessRating, n: f64, p: &EconParams) -> (f64, f64) {
    let crf = p.crf();
    let k = replacement_count(n, p.project_years);
    let discounted: f64 = (1..=k).map(|e| p.present_factor(e as f64 * n)).sum();
    let mut rep = p.c_e * r.e_rate * discounted * crf;
    if p.project_years > p.pcs_life_years {
        rep += p.c_p * r.p_rate * p.present_factor(p.pcs_life_years) * crf;
    }
    let dis = p.c_d * r.p_rate * discounted * crf;
    (rep, dis)
}

/// Hourly record of one storage device within a solved scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceLedger {
    pub node: u32,
    pub kind: Option<StorageKind>,
    pub n_cess: u32,
    pub e_rate: f64,
    pub p_dis: Vec<f64>,
    /// Non-positive.
    pub p_ch: Vec<f64>,
    /// HVAC electrical power per container, kW.
    pub hvac_kw: Vec<f64>,
    /// Squared cell current, A².
    pub cell_i2: Vec<f64>,
    /// SOC at the start of each hour plus the closing value.
    pub soc: Vec<f64>,
    /// Container air temperature, aligned with `soc`.
    pub t_cess: Vec<f64>,
}

/// Hourly money-relevant outputs of one solved scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DispatchLedger {
    pub scenario: String,
    pub weight_days: f64,
    pub price: Vec<f64>,
    pub line_loss_kw: Vec<f64>,
    pub vsc_loss_kw: Vec<f64>,
    pub devices: Vec<DeviceLedger>,
}

impl DispatchLedger {
    /// Daily cost of network losses, $.
    pub fn loss_cost(&self) -> f64 {
        (0..self.price.len())
            .map(|t| (self.line_loss_kw[t] + self.vsc_loss_kw[t]) * self.price[t] * DT_HOURS)
            .sum()
    }

    /// Daily arbitrage revenue, $.
    pub fn arbitrage(&self) -> f64 {
        self.devices.iter().map(|d| device_arbitrage(d, &self.price)).sum()
    }

    /// Daily variable O&M (HVAC energy and cell ohmic loss at tariff), $.
    pub fn variable_om(&self, tp: &ThermalParams) -> f64 {
        self.devices
            .iter()
            .map(|d| device_variable_om(d, &self.price, tp))
            .sum()
    }
}

pub fn device_arbitrage(d: &DeviceLedger, price: &[f64]) -> f64 {
    (0..price.len())
        .map(|t| (d.p_dis[t] + d.p_ch[t]) * price[t] * DT_HOURS)
        .sum()
}

pub fn device_variable_om(d: &DeviceLedger, price: &[f64], tp: &ThermalParams) -> f64 {
    let per_container: f64 = (0..price.len())
        .map(|t| {
            let hvac = d.hvac_kw.get(t).copied().unwrap_or(0.0);
            let ohmic = d.cell_i2.get(t).copied().unwrap_or(0.0) * tp.r_int * tp.n_bar / 1000.0;
            (hvac + ohmic) * price[t] * DT_HOURS
        })
        .sum();
    per_container * d.n_cess as f64
}

/// Weighted operating cash flows over a scenario set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OperatingCash {
    pub c_var: f64,
    pub b_arb: f64,
    pub b_loss: f64,
    pub c_loss: f64,
    pub c_loss0: f64,
    pub c_fix: f64,
}

/// Sums weighted scenario cash flows. `baseline` must hold the storage-free
/// solve of every scenario in `ledgers`, matched by scenario id.
/// `fixed_fraction` scales the yearly fixed O&M (1 for a full year).
pub fn operating_cash(
    ledgers: &[DispatchLedger],
    baseline: Option<&[DispatchLedger]>,
    ratings: &[BessRating],
    p: &EconParams,
    tp: &ThermalParams,
    fixed_fraction: f64,
) -> Result<OperatingCash> {
    let baseline = baseline.ok_or_else(|| {
        CoreError::MissingBaseline("loss benefit needs a storage-free reference solve".into())
    })?;
    let mut out = OperatingCash::default();
    for l in ledgers {
        let base = baseline
            .iter()
            .find(|b| b.scenario == l.scenario)
            .ok_or_else(|| {
                CoreError::MissingBaseline(format!("no reference solve for scenario {}", l.scenario))
            })?;
        out.c_var += l.weight_days * l.variable_om(tp);
        out.b_arb += l.weight_days * l.arbitrage();
        out.c_loss += l.weight_days * l.loss_cost();
        out.c_loss0 += l.weight_days * base.loss_cost();
    }
    out.b_loss = out.c_loss0 - out.c_loss;
    out.c_fix = p.c_f * ratings.iter().fold(0.0, |s, r| s + r.p_rate) * fixed_fraction;
    Ok(out)
}

/// Cost of one day's life expenditure, $.
pub fn life_compensation(zeta: f64, e_rate: f64, p: &EconParams, end_of_life: f64) -> f64 {
    zeta / end_of_life * p.c_e * e_rate
}

/// Rent of mobile modules over the rent period plus life-damage
/// compensation. `damages[i]` holds the daily damage of each module at
/// site `i`.
pub fn mess_rent(
    modules_per_site: &[u32],
    damages: &[Vec<f64>],
    module_kwh: f64,
    p: &EconParams,
    end_of_life: f64,
) -> f64 {
    let mut total = 0.0;
    for (i, &n) in modules_per_site.iter().enumerate() {
        total += p.c_rent * n as f64 * p.rent_days;
        if let Some(z) = damages.get(i) {
            total += p.rent_days
                * z.iter()
                    .map(|&zeta| life_compensation(zeta, module_kwh, p, end_of_life))
                    .sum::<f64>();
        }
    }
    total
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceCost {
    pub node: u32,
    pub kind: Option<StorageKind>,
    pub c_cap: f64,
    pub c_rep: f64,
    pub c_fix: f64,
    pub c_dis: f64,
    pub c_rent: f64,
    pub lifetime_years: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub c_cap: f64,
    pub c_rep: f64,
    pub c_fix: f64,
    pub c_var: f64,
    pub c_dis: f64,
    pub c_rent: f64,
    pub c_com: f64,
    pub b_arb: f64,
    pub b_loss: f64,
    pub c_pun: f64,
    pub net: f64,
    pub devices: Vec<DeviceCost>,
}

impl CostReport {
    /// Recomputes `net` from the components.
    pub fn finish(mut self) -> Self {
        self.net = self.c_cap + self.c_rep + self.c_fix + self.c_var + self.c_dis + self.c_rent
            + self.c_com
            + self.c_pun
            - self.b_arb
            - self.b_loss;
        self
    }

    pub fn is_finite(&self) -> bool {
        [
            self.c_cap, self.c_rep, self.c_fix, self.c_var, self.c_dis, self.c_rent, self.c_com,
            self.b_arb, self.b_loss, self.c_pun, self.net,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Annual life-cycle report of a stationary plan. `lifetimes[i]` is the
/// battery life of `ratings[i]` in years.
pub fn stage1_report(
    ratings: &[BessRating],
    lifetimes: &[f64],
    cash: &OperatingCash,
    max_gap: f64,
    p: &EconParams,
) -> CostReport {
    let mut report = CostReport::default();
    for (r, &n) in ratings.iter().zip(lifetimes) {
        let cap = annualized_capital(r, p);
        let (rep, dis) = replacement_and_disposal(r, n, p);
        let fix = p.c_f * r.p_rate;
        report.c_cap += cap;
        report.c_rep += rep;
        report.c_dis += dis;
        report.devices.push(DeviceCost {
            node: r.node,
            kind: Some(r.kind),
            c_cap: cap,
            c_rep: rep,
            c_fix: fix,
            c_dis: dis,
            c_rent: 0.0,
            lifetime_years: n,
        });
    }
    report.c_fix = cash.c_fix;
    report.c_var = cash.c_var;
    report.b_arb = cash.b_arb;
    report.b_loss = cash.b_loss;
    report.c_pun = if max_gap >= p.gap_max { p.penalty } else { 0.0 };
    report.finish()
}

/// Event-period report of a mobile rental plan.
pub fn stage2_report(c_rent: f64, cash: &OperatingCash, max_gap: f64, p: &EconParams) -> CostReport {
    CostReport {
        c_rent,
        c_fix: cash.c_fix,
        c_var: cash.c_var,
        b_arb: cash.b_arb,
        b_loss: cash.b_loss,
        c_pun: if max_gap >= p.gap_max { p.penalty } else { 0.0 },
        ..Default::default()
    }
    .finish()
}
