//! Brute-force optimum of one DC battery on the three-bus DC oracle feeder:
//! every mode pattern and power level over four hours, each checked with an
//! exact power flow.

use duostore_core::degradation::{linear_daily_damage, soc_average};
use duostore_core::economics::life_compensation;
use duostore_core::net::{HybridNetwork, Scenario};
use duostore_core::storage::{simulate_soc, BessRating, BessSetpoint, StorageDesign};
use duostore_core::thermal::{cell_current, heat_from_parts};
use duostore_core::DT_HOURS;
use duostore_dispatch::DispatchOptions;

/// Power levels each side of idle; 2 * LEVELS + 1 setpoints per hour.
pub const LEVELS: i32 = 5;
pub const HOURS4: usize = 4;

/// Exact DC flow on the 1-2-3 chain by fixed-point sweep. Returns squared
/// branch currents and bus voltages in p.u.
pub fn dc_flow(net: &HybridNetwork, inj: [f64; 3]) -> ([f64; 2], [f64; 3]) {
    let r = [net.branches[0].r_pu, net.branches[1].r_pu];
    let mut v = [1.0; 3];
    let mut i = [0.0; 2];
    for _ in 0..200 {
        let i2 = -inj[2] / v[2];
        let i1 = -inj[1] / v[1] + i2;
        i = [i1, i2];
        v[1] = v[0] - r[0] * i1;
        v[2] = v[1] - r[1] * i2;
    }
    ([i[0] * i[0], i[1] * i[1]], v)
}

/// Objective of a full schedule, or `None` if it breaks a limit.
pub fn evaluate(
    net: &HybridNetwork,
    scen: &Scenario,
    opts: &DispatchOptions,
    rating: &BessRating,
    setpoints: &[BessSetpoint],
) -> Option<f64> {
    let soc = simulate_soc(setpoints, rating).ok()?;
    let tol = 1e-9;
    if soc.iter().any(|&s| s < rating.soc_min - tol || s > rating.soc_max + tol) {
        return None;
    }
    if (soc[HOURS4] - soc[0]).abs() > tol {
        return None;
    }
    let base = net.base_kva;
    let (l1, l2) = (opts.econ.lambda_loss, opts.econ.lambda_cost);
    let mut total = 0.0;
    for (t, sp) in setpoints.iter().enumerate() {
        let money = scen.price[t] * DT_HOURS;
        let inj = [0.0, -scen.load_p(2, t) / base, (sp.p_net() - scen.load_p(3, t)) / base];
        let (l, v) = dc_flow(net, inj);
        for (k, br) in net.branches.iter().enumerate() {
            if l[k] > br.i_max_pu.powi(2) {
                return None;
            }
            total += l1 * money * base * br.r_pu * l[k];
        }
        for (b, bus) in net.buses.iter().enumerate() {
            if v[b] < bus.v_min - tol || v[b] > bus.v_max + tol {
                return None;
            }
        }
        let i = cell_current(sp.p_ch, sp.p_dis, rating, &opts.thermal).ok()?;
        total += l2 * money * rating.n_cess as f64 * heat_from_parts(i * i, 0.0, &opts.thermal);
        total -= l2 * money * sp.p_net();
    }
    let dods: Vec<f64> = setpoints
        .iter()
        .map(|sp| sp.p_dis * DT_HOURS / (rating.e_rate * rating.discharge_factor()))
        .collect();
    let dp = &opts.degradation;
    let zeta = linear_daily_damage(soc_average(&soc), &dods, dp);
    total += l2 * life_compensation(zeta, rating.e_rate, &opts.econ, dp.end_of_life);
    Some(total)
}

/// Best objective over all mode patterns and power levels.
pub fn enumerate(
    net: &HybridNetwork,
    scen: &Scenario,
    opts: &DispatchOptions,
    design: &StorageDesign,
) -> f64 {
    let rating = BessRating::from_design(design, &opts.device, true).unwrap();
    let step = rating.p_rate / LEVELS as f64;
    let per_hour: Vec<BessSetpoint> = (-LEVELS..=LEVELS)
        .map(|k| {
            if k >= 0 {
                BessSetpoint::discharging(k as f64 * step)
            } else {
                BessSetpoint::charging(k as f64 * step)
            }
        })
        .collect();
    let n = per_hour.len();
    let mut best = f64::INFINITY;
    for code in 0..n.pow(HOURS4 as u32) {
        let mut c = code;
        let sps: Vec<BessSetpoint> = (0..HOURS4)
            .map(|_| {
                let sp = per_hour[c % n];
                c /= n;
                sp
            })
            .collect();
        if let Some(v) = evaluate(net, scen, opts, &rating, &sps) {
            best = best.min(v);
        }
    }
    best
}
