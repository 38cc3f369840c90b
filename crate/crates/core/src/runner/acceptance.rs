//! Acceptance checks over canonical runs.
//!
//! [`canonical_suite`] lists the scenarios, [`run_suite`] runs them and
//! [`check_acceptance`] grades the results. Criteria 6 to 8 exercise the
//! oscillator, sequence math and plant directly and need no runs.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::output::csv_string;
use super::{
    run_scenario, ControllerKind, RunResult, Sample, Scenario, SetpointSpec, SetpointStep,
};
use crate::controller::ControllerConfig;
use crate::error::{Result, SimError};
use crate::plant::oracle::{phasor_steady_state, simulated_phasors};
use crate::plant::{rk4_step, GridEvent, PlantParams, RlLoad, PHASE_SHIFT};
use crate::signals::ThreePhase;
use crate::svoc::{
    decompose_phasors, neg_osc_step_outputs, pos_osc_derivatives, zero_osc_step_outputs,
    NegOscState, OscParams, PosOscState, ZeroOscState,
};

/// Rated apparent power per phase (1 kVA three-phase).
pub const RATED_PHASE_VA: f64 = 1000.0 / 3.0;

/// Relative tolerance on the sliding rms current limit.
pub const IRMS_TOLERANCE: f64 = 0.01;

pub const TRACK: &str = "track_900";
pub const SAG: &str = "sag_a_090";
pub const FAULT_A: &str = "fault_a_010";
pub const FAULT_BC: &str = "fault_bc_005";
pub const BASELINE_FAULT_A: &str = "dvoc_fault_a_010";
pub const ZERO: &str = "zero_setpoints";
pub const REPEAT: &str = "repeat";

const FAULT_ON: f64 = 0.5;
const FAULT_OFF: f64 = 5.5;

fn grid_event(t_start: f64, t_end: f64, m: [Option<f64>; 3]) -> GridEvent {
    GridEvent {
        t_start,
        t_end,
        a: m[0],
        b: m[1],
        c: m[2],
    }
}

fn base(name: &str, duration: f64, p_total: f64) -> Scenario {
    let mut s = Scenario::new(name, duration);
    s.setpoints = SetpointSpec::totals(p_total, 0.0);
    s
}

pub fn fault_a_scenario(name: &str, controller: ControllerKind) -> Scenario {
    let mut s = base(name, 6.0, 600.0);
    s.controller = controller;
    s.grid_events = vec![grid_event(FAULT_ON, FAULT_OFF, [Some(0.1), None, None])];
    s
}

/// The canonical scenario set. `repeat` appears twice for the determinism check.
pub fn canonical_suite() -> Vec<Scenario> {
    let mut track = base(TRACK, 2.0, 600.0);
    track.setpoint_steps = vec![SetpointStep {
        t: 1.0,
        set: SetpointSpec::totals(900.0, 0.0),
    }];

    let mut sag = base(SAG, 4.0, 600.0);
    sag.grid_events = vec![grid_event(FAULT_ON, 4.0, [Some(0.9), None, None])];

    let mut fault_bc = base(FAULT_BC, 6.0, 600.0);
    fault_bc.grid_events = vec![grid_event(
        FAULT_ON,
        FAULT_OFF,
        [None, Some(0.05), Some(0.05)],
    )];

    let zero = base(ZERO, 1.0, 0.0);

    let mut repeat = base(REPEAT, 0.8, 600.0);
    repeat.grid_events = vec![grid_event(0.3, 0.6, [None, Some(0.1), None])];

    vec![
        track,
        sag,
        fault_a_scenario(FAULT_A, ControllerKind::Svoc),
        fault_bc,
        fault_a_scenario(BASELINE_FAULT_A, ControllerKind::DvocBaseline),
        zero,
        repeat.clone(),
        repeat,
    ]
}

/// Runs every scenario; a run that stops early is kept with its error.
pub fn run_suite(suite: &[Scenario]) -> Result<Vec<RunResult>> {
    suite.iter().map(run_scenario).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    /// Measured values behind the verdict.
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {} {} [{}] {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AcceptanceReport {
    pub criteria: Vec<CriterionResult>,
}

impl AcceptanceReport {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn get(&self, id: u8) -> Option<&CriterionResult> {
        self.criteria.iter().find(|c| c.id == id)
    }
}

impl fmt::Display for AcceptanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.criteria {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

fn find<'a>(runs: &'a [RunResult], name: &str) -> Result<&'a RunResult> {
    runs.iter()
        .find(|r| r.scenario.name == name)
        .ok_or_else(|| SimError::MissingScenario(name.to_string()))
}

fn fmt_err(r: &RunResult) -> String {
    r.error
        .as_ref()
        .map_or(String::new(), |e| format!(" (run stopped: {e})"))
}

/// Start of the steady-state window: the last second before `t_end`.
fn steady(t_end: f64) -> (f64, f64) {
    (t_end - 1.0, t_end)
}

/// Time from which the current limit must hold: fault onset, then the
/// detector dwell, then one fundamental period.
pub fn current_gate(s: &Scenario, onset: f64) -> f64 {
    onset + s.control.detector.dwell + 2.0 * PI / s.control.osc.omega_n
}

fn max_irms_after(r: &RunResult, t0: f64) -> [f64; 3] {
    r.max(t0, f64::INFINITY, |s| s.irms)
}

pub fn tracking(r: &RunResult) -> CriterionResult {
    let (t_step, p0, p1) = (1.0, 200.0, 300.0);
    let before = r.mean(t_step - 0.25, t_step, |s| s.p);
    let t_end = r.scenario.duration;
    let after = r.mean(t_end - 0.25, t_end, |s| s.p);
    let band = 0.05 * p1;
    let mut worst_settle = 0.0f64;
    let mut worst_over = 0.0f64;
    let mut worst_err = 0.0f64;
    for k in 0..3 {
        let last_out = r
            .window(t_step, t_end)
            .filter(|s| (s.p[k] - p1).abs() > band)
            .map(|s| s.t)
            .fold(t_step, f64::max);
        worst_settle = worst_settle.max(last_out - t_step);
        let peak = r
            .window(t_step, t_end)
            .map(|s| s.p[k])
            .fold(f64::NEG_INFINITY, f64::max);
        worst_over = worst_over.max((peak - p1) / (p1 - p0));
        worst_err = worst_err
            .max((after[k] - p1).abs() / p1)
            .max((before[k] - p0).abs() / p0);
    }
    let passed = r.completed() && worst_err <= 0.02 && worst_settle <= 0.25 && worst_over <= 0.05;
    CriterionResult {
        id: 1,
        name: "balanced power tracking",
        passed,
        detail: format!(
            "P before {:.1}/{:.1}/{:.1} W, after {:.1}/{:.1}/{:.1} W, steady error {:.2}% (<= 2%), settling {:.0} ms (<= 250), overshoot {:.1}% (<= 5%){}",
            before[0], before[1], before[2], after[0], after[1], after[2],
            100.0 * worst_err, 1e3 * worst_settle, 100.0 * worst_over.max(0.0), fmt_err(r)
        ),
    }
}

pub fn sag_support(r: &RunResult) -> CriterionResult {
    let (t0, t1) = steady(r.scenario.duration);
    let p = r.mean(t0, t1, |s| s.p);
    let q = r.mean(t0, t1, |s| s.q);
    let q_lim = 0.1 * RATED_PHASE_VA;
    let passed = r.completed()
        && q[0] > 0.0
        && (p[1] - 200.0).abs() <= 10.0
        && (p[2] - 200.0).abs() <= 10.0
        && q[1].abs() <= q_lim
        && q[2].abs() <= q_lim;
    CriterionResult {
        id: 2,
        name: "unbalanced sag support",
        passed,
        detail: format!(
            "Q_a {:.1} var (> 0), P_b {:.1} P_c {:.1} W (200 +- 10), Q_b {:.1} Q_c {:.1} var (|.| <= {:.1}){}",
            q[0], p[1], p[2], q[1], q[2], q_lim, fmt_err(r)
        ),
    }
}

struct FaultFigures {
    peak: [f64; 3],
    limit: f64,
    p: [f64; 3],
    q: [f64; 3],
}

fn fault_figures(r: &RunResult) -> FaultFigures {
    let (t0, t1) = (FAULT_OFF - 1.0, FAULT_OFF);
    FaultFigures {
        peak: max_irms_after(r, current_gate(&r.scenario, FAULT_ON)),
        limit: r.scenario.control.i_max * (1.0 + IRMS_TOLERANCE),
        p: r.mean(t0, t1, |s| s.p),
        q: r.mean(t0, t1, |s| s.q),
    }
}

pub fn one_phase_fault(r: &RunResult) -> CriterionResult {
    let f = fault_figures(r);
    let near = |x: f64| (x - 200.0).abs() <= 20.0;
    let passed =
        r.completed() && f.peak[0] <= f.limit && f.q[0] > 0.0 && near(f.p[1]) && near(f.p[2]);
    CriterionResult {
        id: 3,
        name: "one-phase fault ride-through",
        passed,
        detail: format!(
            "peak irms_a {:.3} A (<= {:.3}), Q_a {:.1} var (> 0), P_b {:.1} P_c {:.1} W (200 +- 20){}",
            f.peak[0], f.limit, f.q[0], f.p[1], f.p[2], fmt_err(r)
        ),
    }
}

pub fn two_phase_fault(r: &RunResult) -> CriterionResult {
    let f = fault_figures(r);
    let passed = r.completed()
        && f.peak[1] <= f.limit
        && f.peak[2] <= f.limit
        && f.q[1] > 0.0
        && f.q[2] > 0.0
        && (f.p[0] - 200.0).abs() <= 20.0;
    CriterionResult {
        id: 4,
        name: "two-phase fault ride-through",
        passed,
        detail: format!(
            "peak irms_b {:.3} irms_c {:.3} A (<= {:.3}), Q_b {:.1} Q_c {:.1} var (> 0), P_a {:.1} W (200 +- 20){}",
            f.peak[1], f.peak[2], f.limit, f.q[1], f.q[2], f.p[0], fmt_err(r)
        ),
    }
}

pub fn baseline_failure(baseline: &RunResult, svoc: &RunResult) -> CriterionResult {
    let b = fault_figures(baseline);
    let s = fault_figures(svoc);
    let collapsed = b.p[1] < 0.25 * 200.0 && b.p[2] < 0.25 * 200.0;
    let kept = s.p[1] >= 0.9 * 200.0 && s.p[2] >= 0.9 * 200.0;
    let passed =
        baseline.completed() && svoc.completed() && b.peak[0] <= b.limit && collapsed && kept;
    CriterionResult {
        id: 5,
        name: "baseline failure reproduction",
        passed,
        detail: format!(
            "baseline peak irms_a {:.3} A (<= {:.3}), baseline P_b {:.1} P_c {:.1} W (< 50), S-VOC P_b {:.1} P_c {:.1} W (>= 180){}{}",
            b.peak[0], b.limit, b.p[1], b.p[2], s.p[1], s.p[2], fmt_err(baseline), fmt_err(svoc)
        ),
    }
}

/// Free-running positive oscillator from 80% amplitude: amplitude and
/// frequency measured over the second after the first.
pub fn oscillator_limit_cycle(p: &OscParams, dt: f64) -> CriterionResult {
    let r0 = 0.8 * p.radius();
    let mut x = [r0, 0.0];
    let n = (1.0 / dt).round() as usize;
    let step = |x: &[f64; 2]| {
        rk4_step(x, 0.0, dt, |_, x| {
            let d = pos_osc_derivatives(
                PosOscState {
                    v_alpha: x[0],
                    v_beta: x[1],
                },
                (0.0, 0.0),
                p,
            );
            [d.0, d.1]
        })
    };
    for _ in 0..n {
        x = step(&x);
    }
    // the state turns clockwise, so the phase is atan2(-beta, alpha)
    let mut amp_err = 0.0f64;
    let mut turned = 0.0;
    let mut prev = (-x[1]).atan2(x[0]);
    for _ in 0..n {
        x = step(&x);
        amp_err = amp_err.max((x[0].hypot(x[1]) / p.radius() - 1.0).abs());
        let ph = (-x[1]).atan2(x[0]);
        let mut d = ph - prev;
        if d < -PI {
            d += 2.0 * PI;
        } else if d > PI {
            d -= 2.0 * PI;
        }
        turned += d;
        prev = ph;
    }
    let freq = turned / (2.0 * PI * n as f64 * dt);
    let f_n = p.omega_n / (2.0 * PI);
    let f_err = (freq / f_n - 1.0).abs();
    CriterionResult {
        id: 6,
        name: "oscillator limit cycle",
        passed: amp_err <= 1e-3 && f_err <= 1e-4,
        detail: format!(
            "amplitude error {:.2e} (<= 1e-3) around {:.3} V, frequency {:.5} Hz, error {:.2e} (<= 1e-4)",
            amp_err,
            p.radius(),
            freq,
            f_err
        ),
    }
}

pub fn sequence_properties(p: &OscParams) -> CriterionResult {
    let mut rng = StdRng::seed_from_u64(7);
    let mut round_trip = 0.0f64;
    for _ in 0..200 {
        let err = ThreePhase::from_fn(|_| {
            Complex64::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0))
        });
        let back = decompose_phasors(&err).resynthesize();
        let scale = err.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for (a, b) in err.iter().zip(back.iter()) {
            round_trip = round_trip.max((a - b).norm() / scale);
        }
    }
    let mut rejection = 0.0f64;
    for k in 0..24 {
        let th = k as f64 * PI / 12.0;
        let set =
            ThreePhase::from_fn(|ph| Complex64::from_polar(10.0, -(th + PHASE_SHIFT[ph.index()])));
        let f = decompose_phasors(&set);
        let pos = f.pos.0.hypot(f.pos.1);
        rejection = rejection
            .max(f.neg.0.hypot(f.neg.1) / pos)
            .max(f.zero.0.hypot(f.zero.1) / pos);
    }
    let r = p.radius();
    let mut on_circle = 0.0f64;
    for k in 0..24 {
        let th = k as f64 * PI / 12.0;
        let (a, b) = (r * th.cos(), r * th.sin());
        let (_, na, nb) = neg_osc_step_outputs(
            NegOscState {
                v_alpha1: a,
                v_beta1: b,
                v_alpha_out: 0.0,
                v_beta_out: 0.0,
            },
            (1.0, -2.0),
            p,
        )
        .expect("on-circle state is not degenerate");
        let (_, za, zb) = zero_osc_step_outputs(
            ZeroOscState {
                v_alpha1: a,
                v_beta1: b,
                v_alpha_out: 0.0,
                v_beta_out: 0.0,
            },
            (1.0, -2.0),
            p,
        )
        .expect("on-circle state is not degenerate");
        on_circle = on_circle
            .max(na.abs())
            .max(nb.abs())
            .max(za.abs())
            .max(zb.abs());
    }
    CriterionResult {
        id: 7,
        name: "sequence-math properties",
        passed: round_trip <= 1e-12 && rejection <= 1e-6 && on_circle <= 1e-9,
        detail: format!(
            "Fortescue round trip {round_trip:.1e} (<= 1e-12), balanced rejection {rejection:.1e} (<= 1e-6), on-circle outputs {on_circle:.1e} V (<= 1e-9)"
        ),
    }
}

/// Five seeded linear operating points, simulated to steady state and
/// compared with the phasor solution.
pub fn plant_oracle(seed: u64) -> CriterionResult {
    let mut rng = StdRng::seed_from_u64(seed);
    let dt = 10e-6;
    let (mut worst_mag, mut worst_ang) = (0.0f64, 0.0f64);
    for _ in 0..5 {
        let p = PlantParams {
            load: Some(RlLoad {
                r: rng.random_range(8.0..40.0),
                l: rng.random_range(0.0..20e-3),
            }),
            ..Default::default()
        };
        let mag = rng.random_range(60.0..80.0);
        let ang = rng.random_range(-0.3..0.3);
        let e_mag = p.v_ng * SQRT_2 * rng.random_range(0.9..1.1);
        let v = [0, 1, 2].map(|k| Complex64::from_polar(mag, ang + PHASE_SHIFT[k]));
        let e = [0, 1, 2].map(|k| Complex64::from_polar(e_mag, PHASE_SHIFT[k]));
        let sim = simulated_phasors(&p, v, e, 1.5, dt);
        for ph in 0..3 {
            let sol = phasor_steady_state(v[ph], e[ph], &p);
            for (s, want) in [
                (sim[0][ph], sol.v_cf),
                (sim[1][ph], sol.i_lf),
                (sim[2][ph], sol.i_lg),
            ] {
                worst_mag = worst_mag.max((s.norm() / want.norm() - 1.0).abs());
                worst_ang = worst_ang.max((s / want).arg().abs().to_degrees());
            }
        }
    }
    CriterionResult {
        id: 8,
        name: "plant oracle",
        passed: worst_mag <= 5e-3 && worst_ang <= 0.5,
        detail: format!(
            "worst magnitude error {:.3}% (<= 0.5%), worst phase error {:.3} deg (<= 0.5)",
            100.0 * worst_mag,
            worst_ang
        ),
    }
}

pub fn determinism(runs: &[&RunResult]) -> CriterionResult {
    let csv: Vec<String> = runs.iter().map(|r| csv_string(r)).collect();
    let identical = csv.len() >= 2 && csv.windows(2).all(|w| w[0] == w[1]);
    CriterionResult {
        id: 9,
        name: "determinism",
        passed: identical,
        detail: format!(
            "{} runs of {:?}, CSV {} ({} bytes)",
            csv.len(),
            runs.first().map_or("", |r| r.scenario.name.as_str()),
            if identical {
                "byte-identical"
            } else {
                "differs"
            },
            csv.first().map_or(0, |c| c.len())
        ),
    }
}

/// Grades every criterion. Fails with `MissingScenario` if a required run is
/// absent; criterion 9 needs at least two runs named [`REPEAT`].
pub fn check_acceptance(runs: &[RunResult]) -> Result<AcceptanceReport> {
    let repeats: Vec<&RunResult> = runs.iter().filter(|r| r.scenario.name == REPEAT).collect();
    if repeats.len() < 2 {
        return Err(SimError::MissingScenario(format!("{REPEAT} (twice)")));
    }
    let svoc_fault = find(runs, FAULT_A)?;
    let osc = OscParams::default();
    Ok(AcceptanceReport {
        criteria: vec![
            tracking(find(runs, TRACK)?),
            sag_support(find(runs, SAG)?),
            one_phase_fault(svoc_fault),
            two_phase_fault(find(runs, FAULT_BC)?),
            baseline_failure(find(runs, BASELINE_FAULT_A)?, svoc_fault),
            oscillator_limit_cycle(&osc, ControllerConfig::default().t_s),
            sequence_properties(&osc),
            plant_oracle(2024),
            determinism(&repeats),
        ],
    })
}

/// Peak sliding rms current after the first 0.1 s of the zero-setpoint run,
/// as fractions of rated phase current: (inverter side, grid side).
pub fn zero_setpoint_current(r: &RunResult) -> (f64, f64) {
    let rated = RATED_PHASE_VA / r.scenario.control.osc.v_n;
    let peak = |f: fn(&Sample) -> [f64; 3]| {
        r.max(0.1, f64::INFINITY, f).into_iter().fold(0.0, f64::max) / rated
    };
    (peak(|s| s.irms), peak(|s| s.irms_grid))
}
