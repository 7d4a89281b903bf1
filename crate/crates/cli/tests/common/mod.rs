#![allow(dead_code)]

use std::path::{Path, PathBuf};

use duostore::{PlanResult, RunConfig, StageResult, SCHEMA_VERSION};
use duostore_core::economics::CostReport;
use duostore_core::storage::StorageDesign;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

/// A fixture run configuration writing into `out`.
pub fn config(name: &str, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(fixture(&format!("{name}/run.toml"))).unwrap();
    cfg.out = out.to_path_buf();
    cfg
}

/// A stage-1 result holding the given stationary designs and nothing else.
pub fn frozen_stage1(designs: Vec<StorageDesign>) -> PlanResult {
    PlanResult {
        schema_version: SCHEMA_VERSION,
        network: String::new(),
        seed: 0,
        stage1: Some(StageResult {
            designs,
            report: CostReport::default(),
            lifetimes: Vec::new(),
            max_socr_gap: 0.0,
            feasible: true,
            fitness: 0.0,
            evaluations: 0,
            trace: Vec::new(),
        }),
        stage2: None,
        cases: Vec::new(),
    }
}

pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}
