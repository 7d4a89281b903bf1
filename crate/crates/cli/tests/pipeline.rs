mod common;

use std::process::Command;

use approx::assert_relative_eq;
use common::*;
use duostore::*;
use duostore_core::net::{Stage, StorageKind};
use duostore_core::storage::StorageDesign;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_duostore"))
}

#[test]
fn fixture_configs_load() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["venue21", "event5", "toy3"] {
        let inputs = config(name, tmp.path()).inputs().unwrap();
        assert_eq!(inputs.stage(Stage::Stage1).len(), 2, "{name}");
        assert_eq!(inputs.stage(Stage::Stage2).len(), 1, "{name}");
    }
    let venue = config("venue21", tmp.path()).inputs().unwrap();
    assert_eq!(venue.net.n_ac() + venue.net.n_dc(), 21);
    assert_eq!(venue.net.vscs.len(), 2);
}

#[test]
fn relative_paths_follow_the_config_file() {
    let cfg = RunConfig::from_toml_str(
        "network = \"n.toml\"\nout = \"/abs/out\"\n[[scenarios]]\nid = \"a\"\nfile = \"a.csv\"\nweight_days = 1\nstage = \"stage1\"\n",
        std::path::Path::new("/data/run"),
    )
    .unwrap();
    assert_eq!(cfg.network, std::path::Path::new("/data/run/n.toml"));
    assert_eq!(cfg.scenarios[0].file, std::path::Path::new("/data/run/a.csv"));
    assert_eq!(cfg.out, std::path::Path::new("/abs/out"));
    assert!(cfg.thermal_model);
}

#[test]
fn bad_inputs_exit_with_validation_status() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config("toy3", tmp.path());
    cfg.network = tmp.path().join("missing.toml");
    assert_eq!(cfg.inputs().unwrap_err().exit_code(), 2);

    let mut cfg = config("toy3", tmp.path());
    cfg.search.cooling = 2.0;
    assert_eq!(cfg.inputs().unwrap_err().exit_code(), 2);

    let mut cfg = config("toy3", tmp.path());
    cfg.scenarios[1].id = "winter".into();
    assert_eq!(cfg.inputs().unwrap_err().exit_code(), 2);

    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "network = 3\n").unwrap();
    let out = bin().args(["validate", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stage2_without_stage1_is_a_sequencing_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["plan-stage2", "--config"])
        .arg(fixture("toy3/run.toml"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sequencing"));

    let cfg = config("toy3", tmp.path());
    let inputs = cfg.inputs().unwrap();
    let mut empty = frozen_stage1(Vec::new());
    empty.stage1 = None;
    assert!(matches!(run_stage2(&cfg, &inputs, &empty), Err(CliError::Sequencing(_))));
}

#[test]
fn infeasible_dispatch_exits_with_status_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["dispatch", "--scenario", "event", "--config"])
        .arg(fixture("event5/run.toml"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bin()
        .args(["dispatch", "--scenario", "event", "--relaxed", "--config"])
        .arg(fixture("event5/run.toml"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("dispatch_event.json").is_file());
}

#[test]
fn stage1_on_the_toy_feeder() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("toy3", tmp.path());
    let inputs = cfg.inputs().unwrap();
    let r = run_stage1(&cfg, &inputs).unwrap();
    let s1 = r.stage1.as_ref().unwrap();
    assert!(s1.feasible);
    assert_eq!(s1.trace.len(), cfg.search.generations + 1);
    let site = &inputs.net.placements[0];
    for d in &s1.designs {
        assert_eq!(d.kind, StorageKind::Sess);
        assert!(d.e_rate_kwh >= site.e_min_kwh && d.e_rate_kwh <= site.e_max_kwh);
        assert!(d.p_rate_kw >= site.p_min_kw && d.p_rate_kw <= site.p_max_kw);
    }
    let e = &cfg.econ;
    let spent: f64 = s1.designs.iter().map(|d| (e.c_e + e.c_b) * d.e_rate_kwh + e.c_p * d.p_rate_kw).sum();
    assert!(spent <= e.budget * (1.0 + 1e-12));

    // Arbitrage and fixed O&M summed by hand over the 180-day weights.
    let mut arb = 0.0;
    for c in r.cases.iter().filter(|c| c.case == Case::Stationary) {
        let s = &c.solution;
        assert_eq!(s.weight_days, 180.0);
        for d in &s.devices {
            for t in 0..s.price.len() {
                arb += 180.0 * (d.p_dis_kw[t] + d.p_ch_kw[t]) * s.price[t];
            }
        }
    }
    assert_relative_eq!(s1.report.b_arb, arb, max_relative = 1e-9);
    let p: f64 = s1.designs.iter().map(|d| d.p_rate_kw).sum();
    assert_relative_eq!(s1.report.c_fix, 23.8 * p, max_relative = 1e-12);
    assert_eq!(r.cases.iter().filter(|c| c.case == Case::Baseline).count(), 2);
}

#[test]
fn zero_budget_returns_an_empty_plan() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config("toy3", tmp.path());
    cfg.econ.budget = 0.0;
    cfg.search.generations = 2;
    let inputs = cfg.inputs().unwrap();
    let r = run_stage1(&cfg, &inputs).unwrap();
    let s1 = r.stage1.unwrap();
    assert!(s1.designs.is_empty());
    assert_eq!(s1.fitness, 0.0);
}

#[test]
fn sufficient_stationary_plan_rents_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("toy3", tmp.path());
    let inputs = cfg.inputs().unwrap();
    let first = frozen_stage1(vec![StorageDesign::sess(3, 1000.0, 250.0, 0.5)]);
    let r = run_stage2(&cfg, &inputs, &first).unwrap();
    let s2 = r.stage2.as_ref().unwrap();
    assert!(s2.feasible);
    assert!(s2.designs.is_empty(), "{:?}", s2.designs);
    assert_eq!(s2.report.c_rent, 0.0);
    assert_eq!(r.stage1, first.stage1);
}

#[test]
fn saved_plan_reproduces_its_dispatch() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("toy3", tmp.path());
    let inputs = cfg.inputs().unwrap();
    let r = run_stage1(&cfg, &inputs).unwrap();
    let path = tmp.path().join("stage1.json");
    r.save(&path).unwrap();
    let back = PlanResult::load(&path).unwrap();
    assert_eq!(back, r);

    let designs = back.designs();
    for c in back.cases.iter().filter(|c| c.case == Case::Stationary) {
        let again = run_dispatch(&cfg, &inputs, c.scenario(), &designs, false).unwrap();
        let o = again.cases[0].solution.objective;
        assert!((o - c.solution.objective).abs() <= REVALIDATION_TOL * c.solution.objective.abs().max(1.0));
    }
    let ctx_cases: Vec<_> = back
        .cases
        .iter()
        .filter(|c| c.case == Case::Stationary)
        .map(|c| c.solution.clone())
        .collect();
    let mut plan_cfg = cfg.clone();
    plan_cfg.scenarios.retain(|s| s.stage == Stage::Stage1);
    revalidate(&plan_cfg.context(&inputs, Stage::Stage1), &designs, &ctx_cases).unwrap();
}

#[test]
fn foreign_schema_version_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("plan.json");
    let mut r = frozen_stage1(Vec::new());
    r.schema_version = SCHEMA_VERSION + 1;
    std::fs::write(&path, serde_json::to_string(&r).unwrap()).unwrap();
    assert!(matches!(PlanResult::load(&path), Err(CliError::Format { .. })));
}

#[test]
fn report_columns_match_the_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("toy3", tmp.path());
    let inputs = cfg.inputs().unwrap();
    let r = run_dispatch(&cfg, &inputs, "summer", &[StorageDesign::sess(3, 800.0, 200.0, 0.5)], false).unwrap();
    let files = write_report(&r, tmp.path()).unwrap();
    for (name, header) in SCHEMAS {
        assert!(files.iter().any(|f| f.ends_with(name)), "{name}");
        let (h, rows) = read_csv(&tmp.path().join(name));
        assert_eq!(h, header.to_vec(), "{name}");
        match name {
            "voltages.csv" => assert_eq!(rows.len(), 3 * 24),
            "soc.csv" => assert_eq!(rows.len(), 25),
            "hvac.csv" => assert_eq!(rows.len(), 24),
            "temperatures.csv" => assert_eq!(rows.len(), 25),
            "violations.csv" => assert_eq!(rows, vec![vec!["summer", "fixed", "false", "0", "0"]]),
            _ => assert!(rows.is_empty(), "{name}"),
        }
    }
    assert!(summary(&r).contains("summer"));
}

#[test]
fn empty_plan_reports_without_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let files = write_report(&frozen_stage1(Vec::new()), tmp.path()).unwrap();
    for name in ["designs.csv", "lcc.csv", "voltages.csv", "soc.csv"] {
        assert!(files.iter().any(|f| f.ends_with(name)));
        assert!(read_csv(&tmp.path().join(name)).1.is_empty());
    }
    let (_, costs) = read_csv(&tmp.path().join("costs.csv"));
    assert_eq!(costs.len(), 1);
}

#[test]
fn overload_event_is_cleared_by_rented_modules() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config("event5", tmp.path());
    cfg.search.population = 8;
    cfg.search.generations = 4;
    let inputs = cfg.inputs().unwrap();
    let first = frozen_stage1(vec![StorageDesign::sess(4, 2350.0, 450.0, 0.1)]);
    let r = run_stage2(&cfg, &inputs, &first).unwrap();
    let s2 = r.stage2.as_ref().unwrap();
    assert!(s2.feasible);
    let modules: u32 = s2.designs.iter().map(|d| d.modules).sum();
    assert!(modules >= 1);
    assert_eq!(r.stage1, first.stage1);

    let base = r.case("event", Case::Baseline).unwrap();
    let stat = r.case("event", Case::Stationary).unwrap();
    let joint = r.case("event", Case::Joint).unwrap();
    assert!(base.solution.violations() > stat.solution.violations());
    assert!(stat.solution.violations() > 0);
    assert_eq!(joint.solution.violations(), 0);
    assert!(!joint.solution.relaxed);
    for d in joint.solution.devices.iter().filter(|d| d.design.kind == StorageKind::Mess) {
        for (s, f) in d.soc.iter().zip(&d.floors) {
            assert!(*s >= f - 1e-6, "soc {s} below floor {f}");
        }
    }

    write_report(&r, tmp.path()).unwrap();
    let (_, rows) = read_csv(&tmp.path().join("voltages.csv"));
    let low = |case: &str| {
        rows.iter()
            .filter(|r| r[0] == "event" && r[1] == case)
            .filter(|r| r[4].parse::<f64>().unwrap() < 0.97 - 1e-6)
            .count()
    };
    assert!(low("baseline") > 0);
    assert_eq!(low("joint"), 0);
}
