#![allow(dead_code)]

use duostore_core::net::{HybridNetwork, Scenario, Stage, Tariff};
use duostore_core::HOURS;

pub const FEEDER5_AC: &str = include_str!("../../../../fixtures/feeder5_ac.toml");
pub const FEEDER4_DC: &str = include_str!("../../../../fixtures/feeder4_dc.toml");
pub const HYBRID9: &str = include_str!("../../../../fixtures/hybrid9.toml");
pub const BUS1: &str = include_str!("../../../../fixtures/bus1_ac.toml");
pub const DC3: &str = include_str!("../../../../fixtures/dc3_oracle.toml");

pub fn net(text: &str) -> HybridNetwork {
    HybridNetwork::from_toml_str(text).unwrap()
}

/// Winter-like daily load shape, peak 1.0.
pub const SHAPE: [f64; HOURS] = [
    0.55, 0.5, 0.48, 0.47, 0.5, 0.6, 0.8, 0.95, 0.9, 0.8, 0.75, 0.7, 0.68, 0.7, 0.72, 0.78, 0.9,
    1.0, 1.0, 0.95, 0.9, 0.8, 0.7, 0.6,
];

/// Scenario with `peak_kw` at every non-slack bus following [`SHAPE`],
/// reactive load at 30 % of active.
pub fn shaped(net: &HybridNetwork, peak_kw: f64, t_ext_k: f64) -> Scenario {
    let mut s = Scenario::empty("day", 180, Stage::Stage1, &Tariff::default_tou(), t_ext_k);
    s.wind_ms = vec![2.0; HOURS];
    for (b, bus) in net.buses.iter().enumerate() {
        if net.is_slack(b) {
            continue;
        }
        let p: Vec<f64> = SHAPE.iter().map(|f| f * peak_kw).collect();
        s.load_q_kvar.insert(bus.id, p.iter().map(|x| 0.3 * x).collect());
        s.load_p_kw.insert(bus.id, p);
    }
    s
}

/// Flat scenario over `price.len()` hours with no load.
pub fn flat(price: &[f64], t_ext_k: f64) -> Scenario {
    let n = price.len();
    let mut s = Scenario::empty("flat", 1, Stage::Stage1, &Tariff::default_tou(), t_ext_k);
    s.price = price.to_vec();
    s.t_ext_k = vec![t_ext_k; n];
    s.wind_ms = vec![0.0; n];
    s
}
