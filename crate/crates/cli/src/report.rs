//! Tables and hourly CSVs written from a persisted [`PlanResult`]. Every
//! number is copied from the result; nothing is re-solved here.

use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use duostore_core::economics::CostReport;
use duostore_core::net::StorageKind;
use duostore_search::write_trace;

use crate::error::{CliError, Result};
use crate::plan::PlanResult;

/// Header of each CSV the report writes, by file name.
pub const SCHEMAS: [(&str, &[&str]); 8] = [
    ("designs.csv", &["stage", "kind", "node", "e_rate_kwh", "p_rate_kw", "soc0", "modules", "q_enable"]),
    ("lcc.csv", &["node", "c_cap", "c_rep", "c_fix", "c_dis", "lifetime_years"]),
    (
        "costs.csv",
        &["stage", "c_cap", "c_rep", "c_fix", "c_var", "c_dis", "c_rent", "c_com", "b_arb", "b_loss", "c_pun", "net"],
    ),
    ("voltages.csv", &["scenario", "case", "hour", "bus", "v_pu"]),
    ("soc.csv", &["scenario", "case", "node", "kind", "hour", "soc", "floor"]),
    ("hvac.csv", &["scenario", "case", "node", "hour", "p_hot_kw", "p_cool_kw", "x_air", "x_vent"]),
    ("temperatures.csv", &["scenario", "case", "node", "hour", "t_ext_k", "t_cess_k", "t_bar_k"]),
    ("violations.csv", &["scenario", "case", "relaxed", "voltage", "current"]),
];

fn kind_name(k: StorageKind) -> &'static str {
    match k {
        StorageKind::Sess => "sess",
        StorageKind::Mess => "mess",
    }
}

fn writer(dir: &Path, name: &str) -> Result<(csv::Writer<File>, PathBuf)> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let header = SCHEMAS.iter().find(|(n, _)| *n == name).map(|(_, h)| *h).unwrap_or(&[]);
    w.write_record(header).map_err(|e| csv_err(&path, e))?;
    Ok((w, path))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

struct Table {
    w: csv::Writer<File>,
    path: PathBuf,
}

impl Table {
    fn open(dir: &Path, name: &str) -> Result<Self> {
        let (w, path) = writer(dir, name)?;
        Ok(Self { w, path })
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        let fields: Vec<String> = fields.into_iter().collect();
        self.w.write_record(&fields).map_err(|e| csv_err(&self.path, e))
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.w.flush().map_err(|e| CliError::io(&self.path, e))?;
        Ok(self.path)
    }
}

fn costs_row(stage: &str, r: &CostReport) -> Vec<String> {
    std::iter::once(stage.to_string())
        .chain(
            [r.c_cap, r.c_rep, r.c_fix, r.c_var, r.c_dis, r.c_rent, r.c_com, r.b_arb, r.b_loss, r.c_pun, r.net]
                .iter()
                .map(|v| v.to_string()),
        )
        .collect()
}

/// Writes the design, cost and hourly tables plus search traces into `dir`
/// and returns the files written.
pub fn write_report(result: &PlanResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();

    let mut t = Table::open(dir, "designs.csv")?;
    for (stage, res) in [("stage1", &result.stage1), ("stage2", &result.stage2)] {
        for d in res.iter().flat_map(|r| &r.designs) {
            t.row([
                stage.to_string(),
                kind_name(d.kind).to_string(),
                d.node.to_string(),
                d.e_rate_kwh.to_string(),
                d.p_rate_kw.to_string(),
                d.soc0.to_string(),
                d.modules.to_string(),
                d.q_enable.to_string(),
            ])?;
        }
    }
    written.push(t.finish()?);

    let mut t = Table::open(dir, "lcc.csv")?;
    for d in result.stage1.iter().flat_map(|r| &r.report.devices) {
        t.row([
            d.node.to_string(),
            d.c_cap.to_string(),
            d.c_rep.to_string(),
            d.c_fix.to_string(),
            d.c_dis.to_string(),
            d.lifetime_years.to_string(),
        ])?;
    }
    written.push(t.finish()?);

    let mut t = Table::open(dir, "costs.csv")?;
    for (stage, res) in [("stage1", &result.stage1), ("stage2", &result.stage2)] {
        if let Some(r) = res {
            t.row(costs_row(stage, &r.report))?;
        }
    }
    written.push(t.finish()?);

    let mut volts = Table::open(dir, "voltages.csv")?;
    let mut soc = Table::open(dir, "soc.csv")?;
    let mut hvac = Table::open(dir, "hvac.csv")?;
    let mut temps = Table::open(dir, "temperatures.csv")?;
    let mut viol = Table::open(dir, "violations.csv")?;
    for c in &result.cases {
        let s = &c.solution;
        let id = || s.scenario.clone();
        let case = || c.case.as_str().to_string();
        for b in &s.buses {
            for (h, v) in b.voltage().iter().enumerate() {
                volts.row([id(), case(), h.to_string(), b.id.to_string(), v.to_string()])?;
            }
        }
        for d in &s.devices {
            let node = d.design.node.to_string();
            for (h, x) in d.soc.iter().enumerate() {
                let floor = d.floors.get(h).or(d.floors.first()).map_or(String::new(), |f| f.to_string());
                soc.row([id(), case(), node.clone(), kind_name(d.design.kind).to_string(), h.to_string(), x.to_string(), floor])?;
            }
            for (h, a) in d.thermal.hvac.iter().enumerate() {
                hvac.row([
                    id(),
                    case(),
                    node.clone(),
                    h.to_string(),
                    a.p_hot.to_string(),
                    a.p_cool.to_string(),
                    a.x_air.to_string(),
                    a.x_vent.to_string(),
                ])?;
            }
            for (h, st) in d.thermal.states.iter().enumerate() {
                let ext = s.t_ext_k.get(h).or(s.t_ext_k.first()).map_or(String::new(), |t| t.to_string());
                temps.row([id(), case(), node.clone(), h.to_string(), ext, st.t_cess.to_string(), st.t_bar.to_string()])?;
            }
        }
        viol.row([
            id(),
            case(),
            s.relaxed.to_string(),
            s.voltage_violations.to_string(),
            s.current_violations.to_string(),
        ])?;
    }
    for t in [volts, soc, hvac, temps, viol] {
        written.push(t.finish()?);
    }

    for (name, res) in [("trace_stage1.csv", &result.stage1), ("trace_stage2.csv", &result.stage2)] {
        if let Some(r) = res {
            let path = dir.join(name);
            let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
            write_trace(&r.trace, f)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Plain-text summary of designs, costs and violation counts.
pub fn summary(result: &PlanResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "network {} (seed {})", result.network, result.seed);
    let _ = writeln!(out, "\n{:<7} {:<5} {:>5} {:>10} {:>9} {:>5} {:>7}", "stage", "kind", "node", "E kWh", "P kW", "SOC0", "modules");
    for (stage, res) in [("stage1", &result.stage1), ("stage2", &result.stage2)] {
        for d in res.iter().flat_map(|r| &r.designs) {
            let _ = writeln!(
                out,
                "{:<7} {:<5} {:>5} {:>10.1} {:>9.1} {:>5.2} {:>7}",
                stage,
                kind_name(d.kind),
                d.node,
                d.e_rate_kwh,
                d.p_rate_kw,
                d.soc0,
                d.modules
            );
        }
    }
    for (stage, res) in [("stage1", &result.stage1), ("stage2", &result.stage2)] {
        let Some(r) = res else { continue };
        let c = &r.report;
        let _ = writeln!(
            out,
            "\n{stage}: net {:.2} $ (cap {:.2}, rep {:.2}, fix {:.2}, var {:.2}, dis {:.2}, rent {:.2}, arb -{:.2}, loss -{:.2}, pun {:.2}){}",
            c.net,
            c.c_cap,
            c.c_rep,
            c.c_fix,
            c.c_var,
            c.c_dis,
            c.c_rent,
            c.b_arb,
            c.b_loss,
            c.c_pun,
            if r.feasible { "" } else { " INFEASIBLE" }
        );
        for (d, n) in r.report.devices.iter().zip(&r.lifetimes) {
            let _ = writeln!(out, "  node {} battery life {:.1} years", d.node, n);
        }
    }
    let _ = writeln!(out, "\n{:<12} {:<11} {:>8} {:>8}", "scenario", "case", "voltage", "current");
    for c in &result.cases {
        let s = &c.solution;
        let _ = writeln!(
            out,
            "{:<12} {:<11} {:>8} {:>8}",
            s.scenario,
            c.case.as_str(),
            s.voltage_violations,
            s.current_violations
        );
    }
    out
}

