//! Scenario orchestration: the controller ticks at `t_s`, the plant
//! integrates over substeps in between, and per-phase measurements are
//! recorded for output and acceptance checks.
//!
//! The command applied over tick interval `k` was computed from the samples
//! taken at the start of interval `k - 1` (one tick of computation delay).

pub mod acceptance;
pub mod output;
pub mod scenario;

use crate::baseline_dvoc::DvocController;
use crate::controller::{fixed_frame, GridController, Measurement, SvocController};
use crate::error::{Result, SimError};
use crate::frames::SyncFrameSample;
use crate::frt::FaultTransition;
use crate::plant::Plant;
use crate::signals::{lowpass_step, Phase, QsgState, SlidingRms, ThreePhase};
use crate::svoc::PowerSetpoints;

pub use scenario::{ControllerKind, OutputConfig, Scenario, SetpointSpec, SetpointStep};

/// Per-phase active and reactive power from peak-valued sync-frame samples.
/// Positive Q means the current lags the voltage.
pub fn measure_pq(v: SyncFrameSample, i: SyncFrameSample) -> (f64, f64) {
    (0.5 * (v.d * i.d + v.q * i.q), 0.5 * (v.d * i.q - v.q * i.d))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sample {
    pub t: f64,
    pub v: [f64; 3],
    pub i: [f64; 3],
    pub p: [f64; 3],
    pub q: [f64; 3],
    pub irms: [f64; 3],
    /// Sliding rms of the grid-side inductor current.
    pub irms_grid: [f64; 3],
    pub fault: [bool; 3],
    pub amp: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Setpoint(PowerSetpoints),
    GridStart { multipliers: [Option<f64>; 3] },
    GridEnd,
    Fault(FaultTransition),
    Error(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedEvent {
    pub t: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub scenario: Scenario,
    pub samples: Vec<Sample>,
    pub events: Vec<LoggedEvent>,
    /// Largest sliding rms inverter current per phase, sampled every tick.
    pub peak_irms: [f64; 3],
    /// Set when the run stopped early; samples hold the partial trace.
    pub error: Option<String>,
}

impl RunResult {
    pub fn completed(&self) -> bool {
        self.error.is_none()
    }

    /// Samples with `t` in `[t0, t1)`.
    pub fn window(&self, t0: f64, t1: f64) -> impl Iterator<Item = &Sample> {
        self.samples
            .iter()
            .filter(move |s| s.t >= t0 - 1e-12 && s.t < t1 - 1e-12)
    }

    /// Mean of a per-phase field over `[t0, t1)`.
    pub fn mean(&self, t0: f64, t1: f64, f: impl Fn(&Sample) -> [f64; 3]) -> [f64; 3] {
        let mut acc = [0.0; 3];
        let mut n = 0usize;
        for s in self.window(t0, t1) {
            let v = f(s);
            for k in 0..3 {
                acc[k] += v[k];
            }
            n += 1;
        }
        acc.map(|a| if n == 0 { f64::NAN } else { a / n as f64 })
    }

    pub fn max(&self, t0: f64, t1: f64, f: impl Fn(&Sample) -> [f64; 3]) -> [f64; 3] {
        let mut acc = [f64::NEG_INFINITY; 3];
        for s in self.window(t0, t1) {
            let v = f(s);
            for k in 0..3 {
                acc[k] = acc[k].max(v[k]);
            }
        }
        acc
    }
}

pub fn build_controller(s: &Scenario) -> Result<Box<dyn GridController>> {
    Ok(match s.controller {
        ControllerKind::Svoc => Box::new(SvocController::new(s.control)?),
        ControllerKind::DvocBaseline => Box::new(DvocController::new(s.control)?),
    })
}

struct Meters {
    qsg_v: ThreePhase<QsgState>,
    qsg_i: ThreePhase<QsgState>,
    rms_i: ThreePhase<SlidingRms>,
    rms_g: ThreePhase<SlidingRms>,
    p: ThreePhase<f64>,
    q: ThreePhase<f64>,
}

impl Meters {
    fn new(s: &Scenario) -> Self {
        let w = s.plant.omega_ng;
        let v0 = crate::controller::nominal_pairs(s.plant.v_ng);
        Self {
            qsg_v: ThreePhase::from_fn(|p| {
                let mut q = QsgState::new(w, s.control.k_sogi);
                q.preset(v0[p], s.control.t_s);
                q
            }),
            qsg_i: ThreePhase::splat(QsgState::new(w, s.control.k_sogi)),
            rms_i: ThreePhase::from_fn(|_| SlidingRms::for_period(w, s.control.t_s)),
            rms_g: ThreePhase::from_fn(|_| SlidingRms::for_period(w, s.control.t_s)),
            p: ThreePhase::splat(0.0),
            q: ThreePhase::splat(0.0),
        }
    }

    fn update(&mut self, m: &Measurement, cutoff: f64, dt: f64) -> ThreePhase<f64> {
        for ph in Phase::ALL {
            let v = self.qsg_v[ph].step(m.v_pcc[ph], dt);
            let i = self.qsg_i[ph].step(m.i_inv[ph], dt);
            let (p, q) = measure_pq(fixed_frame(v), fixed_frame(i));
            self.p[ph] = lowpass_step(self.p[ph], p, cutoff, dt);
            self.q[ph] = lowpass_step(self.q[ph], q, cutoff, dt);
        }
        ThreePhase::from_fn(|ph| self.rms_i[ph].push(m.i_inv[ph]))
    }
}

/// Runs a scenario to completion or to its first error. Errors are recorded
/// in the result, which keeps the trace up to that point.
pub fn run_scenario(s: &Scenario) -> Result<RunResult> {
    s.validate()?;
    let (n_ticks, sub) = s.step_counts()?;
    let t_s = s.control.t_s;
    let dt_plant = t_s / sub as f64;
    let mut plant = Plant::new(s.plant, s.grid_events.clone())?;
    let mut ctrl = build_controller(s)?;
    if !s.cold_start {
        ctrl.synchronize(&plant.preset_grid_steady_state(0.0));
    }
    let mut meters = Meters::new(s);

    let mut sp = s.setpoints.apply(PowerSetpoints::default())?;
    let mut steps = s.setpoint_steps.clone();
    steps.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut next_step = 0;

    let mut events = vec![LoggedEvent {
        t: 0.0,
        kind: EventKind::Setpoint(sp),
    }];
    let mut grid_marks: Vec<(f64, EventKind)> = Vec::new();
    for e in &s.grid_events {
        grid_marks.push((
            e.t_start,
            EventKind::GridStart {
                multipliers: [e.a, e.b, e.c],
            },
        ));
        grid_marks.push((e.t_end, EventKind::GridEnd));
    }
    grid_marks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut next_mark = 0;

    let mut samples = Vec::with_capacity(n_ticks / s.output.decimation + 1);
    let mut peak_irms = [0.0f64; 3];
    // the inverter holds the grid voltage until the first command exists
    let mut held = plant.state.v_cf;
    let mut error = None;

    for k in 0..n_ticks {
        let t = k as f64 * t_s;
        while next_step < steps.len() && steps[next_step].t <= t + 1e-12 {
            sp = steps[next_step].set.apply(sp)?;
            events.push(LoggedEvent {
                t,
                kind: EventKind::Setpoint(sp),
            });
            next_step += 1;
        }
        while next_mark < grid_marks.len() && grid_marks[next_mark].0 <= t + 1e-12 {
            events.push(LoggedEvent {
                t: grid_marks[next_mark].0,
                kind: grid_marks[next_mark].1.clone(),
            });
            next_mark += 1;
        }

        let m = Measurement {
            v_pcc: plant.state.v_cf,
            i_inv: plant.state.i_lf,
        };
        let irms = meters.update(&m, s.output.pq_cutoff, t_s);
        let irms_grid = ThreePhase::from_fn(|ph| meters.rms_g[ph].push(plant.state.i_lg[ph]));
        for ph in Phase::ALL {
            peak_irms[ph.index()] = peak_irms[ph.index()].max(irms[ph]);
        }

        let cmd = match ctrl.tick(&m, &sp) {
            Ok(c) => c,
            Err(e) => {
                error = Some(e.at(t));
                break;
            }
        };
        let tel = ctrl.telemetry();
        for tr in &tel.transitions {
            events.push(LoggedEvent {
                t,
                kind: EventKind::Fault(*tr),
            });
        }
        if k % s.output.decimation == 0 {
            samples.push(Sample {
                t,
                v: m.v_pcc.to_array(),
                i: m.i_inv.to_array(),
                p: meters.p.to_array(),
                q: meters.q.to_array(),
                irms: irms.to_array(),
                irms_grid: irms_grid.to_array(),
                fault: tel.faulty.to_array(),
                amp: [tel.amp_pos, tel.amp_neg, tel.amp_zero],
            });
        }

        for j in 0..sub {
            plant.step(&held, t + j as f64 * dt_plant, dt_plant);
        }
        if !plant.state.is_finite() {
            error = Some(SimError::Diverged("non-finite plant state".into()).at(t + t_s));
            break;
        }
        held = cmd;
    }

    let error = error.map(|e| {
        let msg = e.to_string();
        events.push(LoggedEvent {
            t: samples.last().map_or(0.0, |s| s.t),
            kind: EventKind::Error(msg.clone()),
        });
        msg
    });
    Ok(RunResult {
        scenario: s.clone(),
        samples,
        events,
        peak_irms,
        error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::fixed_frame;
    use crate::signals::QuadPair;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    const V: f64 = 70.71067811865476;

    #[test]
    fn measure_pq_examples() {
        let v = fixed_frame(QuadPair::from_polar(V, 0.3));
        let (p, q) = measure_pq(v, fixed_frame(QuadPair::from_polar(5.656854, 0.3)));
        assert_abs_diff_eq!(p, 200.0, epsilon = 1e-4);
        assert_abs_diff_eq!(q, 0.0, epsilon = 1e-9);
        // current lagging by a quarter period exports reactive power
        let (p, q) = measure_pq(v, fixed_frame(QuadPair::from_polar(2.0, 0.3 - FRAC_PI_2)));
        assert_abs_diff_eq!(p, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(q, V, epsilon = 1e-9);
        let (_, q) = measure_pq(v, fixed_frame(QuadPair::from_polar(2.0, 0.3 + FRAC_PI_2)));
        assert_abs_diff_eq!(q, -V, epsilon = 1e-9);
    }

    fn short(name: &str) -> Scenario {
        let mut s = Scenario::new(name, 0.2);
        s.setpoints = SetpointSpec::totals(600.0, 0.0);
        s
    }

    #[test]
    fn runs_are_reproducible() {
        let a = run_scenario(&short("a")).unwrap();
        let b = run_scenario(&short("a")).unwrap();
        assert!(a.completed());
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.samples.len(), 4000 / a.scenario.output.decimation);
        assert_eq!(a.samples[1].t, a.scenario.output.decimation as f64 * 50e-6);
        assert!(matches!(a.events[0].kind, EventKind::Setpoint(_)));
    }

    #[test]
    fn events_are_logged_in_order() {
        let mut s = short("ev");
        s.setpoint_steps.push(SetpointStep {
            t: 0.1,
            set: SetpointSpec::totals(900.0, 0.0),
        });
        s.grid_events.push(crate::plant::GridEvent {
            t_start: 0.05,
            t_end: 0.15,
            a: Some(0.95),
            b: None,
            c: None,
        });
        let r = run_scenario(&s).unwrap();
        let times: Vec<f64> = r.events.iter().map(|e| e.t).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]), "{times:?}");
        assert_eq!(r.events.len(), 4);
        assert!(matches!(
            r.events[1].kind,
            EventKind::GridStart {
                multipliers: [Some(_), None, None]
            }
        ));
        assert!(matches!(r.events[3].kind, EventKind::GridEnd));
    }

    #[test]
    fn cold_start_settles_to_the_same_power() {
        let mut s = short("cold");
        s.duration = 1.0;
        let warm = run_scenario(&s).unwrap();
        s.cold_start = true;
        let cold = run_scenario(&s).unwrap();
        assert!(cold.completed());
        let pw = warm.mean(0.8, 1.0, |x| x.p);
        let pc = cold.mean(0.8, 1.0, |x| x.p);
        for k in 0..3 {
            assert_abs_diff_eq!(pw[k], 200.0, epsilon = 2.0);
            assert_abs_diff_eq!(pc[k], pw[k], epsilon = 1.0);
        }
    }

    #[test]
    fn failures_keep_the_partial_trace() {
        let mut s = short("bad");
        // no grid and no load leaves the capacitor voltage unregulated
        s.plant.grid_open = true;
        s.control.osc.v_n = 1e-9;
        s.plant.v_ng = 1e-9;
        let r = run_scenario(&s).unwrap();
        assert!(!r.completed());
        let msg = r.error.as_deref().unwrap();
        assert!(msg.starts_with("at t = "), "{msg}");
        assert!(matches!(r.events.last().unwrap().kind, EventKind::Error(_)));
        assert!(output::csv_string(&r).contains(output::ERROR_MARKER));
    }

    #[test]
    fn invalid_scenarios_fail_up_front() {
        let mut s = short("bad");
        s.dt_plant = 7e-6;
        assert!(matches!(run_scenario(&s), Err(SimError::Config(_))));
    }
}
