mod common;

use approx::assert_relative_eq;
use common::*;
use duostore_conic::{ClarabelBackend, MipOptions};
use duostore_core::net::{HybridNetwork, Scenario};
use duostore_core::storage::StorageDesign;
use duostore_dispatch::{build, DispatchOptions};
use duostore_search::*;
use proptest::prelude::*;

fn ctx(net: HybridNetwork, scenarios: Vec<Scenario>, opts: DispatchOptions) -> PlanContext {
    PlanContext {
        net,
        scenarios,
        opts,
        mip: MipOptions::default(),
    }
}

/// One grid bus with a stationary site and no load.
fn idle_stage1(opts: DispatchOptions) -> Stage1Problem {
    let mut n = net(BUS1);
    n.placements.push(sess_site(1));
    Stage1Problem::new(ctx(n, vec![flat(&[0.1; 24], 293.0)], opts), &SearchConfig::default()).unwrap()
}

fn site(e: f64, p: f64) -> Stage1Chromosome {
    Stage1Chromosome {
        sites: vec![SessGene {
            node: 1,
            e_rate_kwh: e,
            p_rate_kw: p,
            soc0: 0.5,
            q_enable: true,
        }],
    }
}

fn mess_stage2(max_modules: u32, budget: f64) -> Stage2Problem {
    let mut n = net(BUS1);
    n.placements.push(mess_site(1, max_modules));
    let opts = DispatchOptions {
        thermal_model: false,
        ..Default::default()
    };
    Stage2Problem::new(ctx(n, vec![flat(&[0.1; 24], 293.0)], opts), Vec::new(), budget, &SearchConfig::default())
        .unwrap()
}

#[test]
fn zero_plan_costs_nothing() {
    let p = idle_stage1(DispatchOptions::default());
    let x = p.zero();
    assert_eq!(p.fitness(&x), 0.0);
    let ev = p.evaluate(&p.chromosome(&x));
    assert!(ev.feasible && ev.designs.is_empty());
}

#[test]
fn larger_energy_costs_exactly_the_capital_delta() {
    let p = idle_stage1(DispatchOptions::default());
    let small = p.evaluate(&site(1100.0, 250.0));
    let large = p.evaluate(&site(1900.0, 250.0));
    assert!(small.feasible && large.feasible);
    for ev in [&small, &large] {
        let d = &ev.solutions[0].devices[0];
        assert!(d.p_dis_kw.iter().chain(&d.p_ch_kw).all(|x| x.abs() < 1e-3));
        assert!(d.thermal.hvac.iter().all(|h| h.p_hot.abs() + h.p_cool.abs() < 1e-6));
    }
    let n = small.lifetimes[0];
    assert_relative_eq!(n, large.lifetimes[0], max_relative = 1e-9);

    // Annuity and replacement schedule written out from scratch.
    let tau: f64 = 0.10;
    let years = 20.0;
    let crf = tau * (1.0 + tau).powf(years) / ((1.0 + tau).powf(years) - 1.0);
    let mut replaced = 0.0;
    let mut k = 1.0;
    while k * n < years - 1e-9 {
        replaced += (1.0 + tau).powf(-k * n);
        k += 1.0;
    }
    let de = 800.0;
    let expected = crf * 156.0 * de + 156.0 * de * replaced * crf;
    assert_relative_eq!(large.fitness - small.fitness, expected, max_relative = 1e-6);
}

#[test]
fn gap_penalty_is_added_once() {
    let mut strict = DispatchOptions::default();
    strict.econ.gap_max = 0.0;
    let mut loose = DispatchOptions::default();
    loose.econ.gap_max = 1e9;
    let a = idle_stage1(strict).evaluate(&site(1000.0, 250.0));
    let b = idle_stage1(loose).evaluate(&site(1000.0, 250.0));
    assert_eq!(a.report.c_pun, 1e6);
    assert_eq!(b.report.c_pun, 0.0);
    assert_relative_eq!(a.fitness - b.fitness, 1e6, max_relative = 1e-12);
}

#[test]
fn in_bounds_chromosome_is_left_alone() {
    let p = idle_stage1(DispatchOptions::default());
    let mut x = vec![1000.0, 250.0, 0.5, 1.0];
    p.repair(&mut x);
    assert_eq!(x, vec![1000.0, 250.0, 0.5, 1.0]);
    assert!(p.is_repaired(&x));
}

#[test]
fn double_budget_is_scaled_to_the_boundary() {
    let mut opts = DispatchOptions::default();
    // 156 $/kWh · 4000 kWh + 10 $/kW · 1000 kW = 634 000 $, twice the budget.
    opts.econ.budget = 317_000.0;
    let p = idle_stage1(opts);
    let mut x = vec![4000.0, 1000.0, 0.5, 0.0];
    p.repair(&mut x);
    assert_eq!(x, vec![2000.0, 500.0, 0.5, 0.0]);
    assert_eq!(p.capital(&x), 317_000.0);
}

#[test]
fn zero_budget_forces_an_empty_plan() {
    let mut opts = DispatchOptions::default();
    opts.econ.budget = 0.0;
    let p = idle_stage1(opts);
    let mut x = vec![3000.0, 800.0, 0.5, 1.0];
    p.repair(&mut x);
    assert_eq!((x[0], x[1]), (0.0, 0.0));
    let out = ga_sa_search(
        &p,
        Vec::new(),
        &SearchConfig {
            population: 4,
            generations: 2,
            elitism: 1,
            ..Default::default()
        },
        &FitnessCache::default(),
    )
    .unwrap();
    assert!(p.chromosome(&out.best).designs(&p.sites).is_empty());
}

#[test]
fn module_count_is_clamped_to_its_cap() {
    let p = mess_stage2(4, 1e9);
    let mut x = vec![7.0, 0.5];
    p.repair(&mut x);
    assert_eq!(x[0], 4.0);
}

#[test]
fn rent_budget_drops_modules() {
    // One module rents for 102.6 $ · 60 days.
    let p = mess_stage2(4, 2.5 * 6156.0);
    let mut x = vec![4.0, 0.9];
    p.repair(&mut x);
    assert_eq!(x[0], 2.0);
}

#[test]
fn initial_soc_is_lifted_to_the_reserve_floor() {
    let mut n = net(FEEDER5_AC);
    n.buses[3].important_ratio = 1.0;
    n.placements.push(mess_site(4, 2));
    let s = shaped(&n, "ev", 1, duostore_core::net::Stage::Stage2, 300.0, 293.0);
    let p = Stage2Problem::new(ctx(n, vec![s], DispatchOptions::default()), Vec::new(), 1e9, &SearchConfig::default())
        .unwrap();
    let floor = p.first_floor(0, 1);
    assert!(floor > 0.1);
    let mut x = vec![1.0, 0.1];
    p.repair(&mut x);
    assert!(x[1] >= floor && x[1] - floor < 0.05 + 1e-9, "{x:?} floor {floor}");
}

#[test]
fn no_modules_pay_no_rent() {
    let p = mess_stage2(4, 1e9);
    let x = p.zero();
    assert_eq!(x[0], 0.0);
    let ev = p.evaluate(&p.chromosome(&x));
    assert!(ev.feasible);
    assert_eq!(ev.report.c_rent, 0.0);
    assert_eq!(ev.fitness, 0.0);
}

#[test]
fn rent_grows_with_module_count() {
    let p = mess_stage2(4, 1e9);
    let mut last = 0.0;
    for n in 1..=3 {
        let ev = p.evaluate(&p.chromosome(&[n as f64, 0.5]));
        assert!(ev.feasible);
        assert!(ev.report.c_rent >= last + 6156.0 - 1e-9, "{n}: {}", ev.report.c_rent);
        last = ev.report.c_rent;
    }
}

#[test]
fn cleared_reactive_bit_pins_reactive_power() {
    let n = net(FEEDER5_AC);
    let s = shaped(&n, "day", 1, duostore_core::net::Stage::Stage1, 400.0, 293.0);
    let c = Stage1Chromosome {
        sites: vec![SessGene {
            node: 4,
            e_rate_kwh: 2000.0,
            p_rate_kw: 500.0,
            soc0: 0.5,
            q_enable: false,
        }],
    };
    let designs = c.designs(&n.placements);
    assert!(!designs[0].q_enable);
    let opts = DispatchOptions::default();
    let sol = build(&n, &s, &designs, &opts)
        .unwrap()
        .solve(&ClarabelBackend::default(), &MipOptions::default())
        .unwrap();
    assert_eq!(sol.devices[0].rating.q_rate, 0.0);
    assert!(sol.devices[0].q_kvar.iter().all(|q| q.abs() < 1e-9));

    let on = [StorageDesign { q_enable: true, ..designs[0].clone() }];
    let sol = build(&n, &s, &on, &opts)
        .unwrap()
        .solve(&ClarabelBackend::default(), &MipOptions::default())
        .unwrap();
    assert!(sol.devices[0].q_kvar.iter().any(|q| q.abs() > 1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn repair_always_lands_in_the_feasible_set(
        e in -500.0f64..6000.0,
        p in -100.0f64..1500.0,
        soc in -0.5f64..1.5,
        q in 0.0f64..1.0,
        budget in 0.0f64..800_000.0,
    ) {
        let mut opts = DispatchOptions::default();
        opts.econ.budget = budget;
        let mut n = net(BUS1);
        n.placements.push(sess_site(1));
        // A two-hour day keeps the reference solve cheap.
        let problem = Stage1Problem::new(ctx(n, vec![flat(&[0.1; 2], 293.0)], opts), &SearchConfig::default()).unwrap();
        let mut x = vec![e, p, soc, q];
        problem.repair(&mut x);
        prop_assert!(problem.is_repaired(&x), "{x:?}");
        let again = x.clone();
        problem.repair(&mut x);
        prop_assert_eq!(x, again);
    }
}

#[test]
fn overload_event_rents_modules() {
    let mut n = net(FEEDER5_AC);
    n.placements.push(mess_site(4, 4));
    n.placements.push(mess_site(5, 4));
    let s = shaped(&n, "event", 3, duostore_core::net::Stage::Stage2, 950.0, 300.0);
    let c = PlanContext {
        mip: MipOptions {
            node_limit: 60,
            ..Default::default()
        },
        ..ctx(n, vec![s], DispatchOptions::default())
    };
    let sess = vec![StorageDesign::sess(4, 2350.0, 450.0, 0.1)];
    assert!(c.soft_violations(&sess) > 0);
    let p = Stage2Problem::new(c, sess, 1e9, &SearchConfig::default()).unwrap();
    let cfg = SearchConfig {
        population: 8,
        generations: 4,
        ..Default::default()
    };
    let out = ga_sa_search(&p, Vec::new(), &cfg, &FitnessCache::default()).unwrap();
    let best = p.chromosome(&out.best);
    assert!(best.total_modules() >= 1, "{best:?}");
    let ev = p.evaluate(&best);
    assert!(ev.feasible, "{:?}", ev.failure);
    assert!(ev.solutions[0].violations() == 0);
}
