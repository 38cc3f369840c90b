use std::sync::OnceLock;

use svoc_core::runner::acceptance::{
    baseline_failure, canonical_suite, check_acceptance, fault_a_scenario, one_phase_fault,
    run_suite, zero_setpoint_current, AcceptanceReport, CriterionResult, FAULT_A, ZERO,
};
use svoc_core::runner::{run_scenario, ControllerKind, RunResult};
use svoc_core::SimError;

struct Suite {
    runs: Vec<RunResult>,
    report: AcceptanceReport,
}

fn suite() -> &'static Suite {
    static SUITE: OnceLock<Suite> = OnceLock::new();
    SUITE.get_or_init(|| {
        let runs = run_suite(&canonical_suite()).expect("canonical scenarios are valid");
        let report = check_acceptance(&runs).expect("all canonical runs present");
        println!("{report}");
        Suite { runs, report }
    })
}

fn verdict(id: u8) -> &'static CriterionResult {
    let c = suite().report.get(id).expect("criterion graded");
    println!("{c}");
    c
}

#[test]
fn balanced_power_tracking() {
    assert!(verdict(1).passed);
}

#[test]
fn unbalanced_sag_support() {
    assert!(verdict(2).passed);
}

#[test]
fn one_phase_fault_ride_through() {
    assert!(verdict(3).passed);
}

#[test]
fn two_phase_fault_ride_through() {
    assert!(verdict(4).passed);
}

#[test]
fn baseline_failure_reproduction() {
    assert!(verdict(5).passed);
}

#[test]
fn oscillator_limit_cycle() {
    assert!(verdict(6).passed);
}

#[test]
fn sequence_math_properties() {
    assert!(verdict(7).passed);
}

#[test]
fn plant_oracle_agreement() {
    assert!(verdict(8).passed);
}

#[test]
fn repeated_runs_are_byte_identical() {
    assert!(verdict(9).passed);
}

#[test]
fn zero_setpoints_draw_almost_no_current() {
    let r = suite()
        .runs
        .iter()
        .find(|r| r.scenario.name == ZERO)
        .unwrap();
    let (inv, grid) = zero_setpoint_current(r);
    println!(
        "zero setpoints: peak irms {:.2}% inverter side, {:.2}% grid side of rated",
        100.0 * inv,
        100.0 * grid
    );
    assert!(r.completed() && inv <= 0.02);
}

#[test]
fn current_limit_follows_config() {
    let mut s = fault_a_scenario("fault_a_010_imax5", ControllerKind::Svoc);
    s.control.i_max = 5.0;
    s.duration = 2.0;
    s.grid_events[0].t_end = 2.0;
    let r = run_scenario(&s).unwrap();
    let c = one_phase_fault(&r);
    println!("I_max 5 A: {c}");
    assert!(c.detail.contains("<= 5.050"));
    let peak = r.max(0.54, f64::INFINITY, |s| s.irms)[0];
    assert!(peak <= 5.05, "{peak}");
}

#[test]
fn baseline_in_place_of_svoc_fails_fault_check() {
    let runs = &suite().runs;
    let baseline = runs
        .iter()
        .find(|r| r.scenario.controller == ControllerKind::DvocBaseline)
        .unwrap();
    let c = one_phase_fault(baseline);
    println!("baseline graded as fault ride-through: {c}");
    assert!(!c.passed);
    // and graded against itself it cannot show the S-VOC's retained power
    assert!(!baseline_failure(baseline, baseline).passed);
}

#[test]
fn missing_run_is_reported() {
    let runs: Vec<RunResult> = suite()
        .runs
        .iter()
        .filter(|r| r.scenario.name != FAULT_A)
        .cloned()
        .collect();
    match check_acceptance(&runs) {
        Err(SimError::MissingScenario(name)) => assert_eq!(name, FAULT_A),
        other => panic!("expected a missing-scenario error, got {other:?}"),
    }
}
