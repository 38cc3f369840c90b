//! Per-tick S-VOC controller: measurement filters, fault detection and
//! feedback estimation, the sequence oscillators and the per-phase loops.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::frames::{
    delay_advance, from_sync_frame, to_instantaneous, to_sync_frame, unit_direction,
    SyncFrameSample, UnitDirection,
};
use crate::frt::{
    detect_faults, estimate, select_feedback, DetectorConfig, FaultStatus, FaultTransition,
};
use crate::nested_control::{current_loop_step, voltage_loop_step, LoopGains, PhaseLoopState};
use crate::plant::PHASE_SHIFT;
use crate::signals::{Phase, QsgState, QuadPair, SlidingRms, ThreePhase, SOGI_GAIN};
use crate::svoc::{
    current_references, feedback_decompose, svoc_step, OscParams, PowerSetpoints, SvocState,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub osc: OscParams,
    pub gains: LoopGains,
    /// Per-phase rms current limit, A.
    pub i_max: f64,
    /// Controller sampling period, s.
    pub t_s: f64,
    pub k_sogi: f64,
    pub detector: DetectorConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            osc: OscParams::default(),
            gains: LoopGains::default(),
            i_max: 10.0,
            t_s: 50e-6,
            k_sogi: SOGI_GAIN,
            detector: DetectorConfig::default(),
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        self.osc.validate()?;
        self.gains.validate()?;
        let ok = [self.i_max, self.t_s, self.k_sogi, self.detector.dwell]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
            && self.detector.fault_pu < self.detector.clear_pu;
        if !ok {
            return Err(crate::SimError::Config(format!(
                "invalid controller settings {self:?}"
            )));
        }
        Ok(())
    }
}

/// Samples taken at a tick boundary.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measurement {
    pub v_pcc: ThreePhase<f64>,
    pub i_inv: ThreePhase<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Telemetry {
    pub faulty: ThreePhase<bool>,
    pub amp_pos: f64,
    pub amp_neg: f64,
    pub amp_zero: f64,
    /// Fault-status changes produced by the latest tick.
    pub transitions: Vec<FaultTransition>,
    pub current_limited: ThreePhase<bool>,
}

/// Anything that turns tick samples into inverter voltage commands.
pub trait GridController {
    fn tick(&mut self, m: &Measurement, sp: &PowerSetpoints) -> Result<ThreePhase<f64>>;
    fn telemetry(&self) -> Telemetry;
    /// Aligns the oscillator and voltage filters with PCC voltage pairs
    /// measured before the first tick.
    fn synchronize(&mut self, v_pcc: &ThreePhase<QuadPair>);
}

/// Peak amplitude and oscillator angle matching measured voltage pairs.
pub fn sync_point(v: &ThreePhase<QuadPair>) -> (f64, f64) {
    let amp = v.iter().map(|p| p.magnitude()).sum::<f64>() / 3.0;
    // the oscillator angle runs opposite to the electrical angle
    (amp, -v.a.q.atan2(v.a.d))
}

/// Nominal balanced pairs at phase angle zero, matching the grid at `t = 0`.
pub fn nominal_pairs(v_n: f64) -> ThreePhase<QuadPair> {
    ThreePhase::from_fn(|p| {
        QuadPair::from_polar(std::f64::consts::SQRT_2 * v_n, PHASE_SHIFT[p.index()])
    })
}

#[derive(Debug, Clone)]
pub struct SvocController {
    pub cfg: ControllerConfig,
    pub osc: SvocState,
    pub loops: ThreePhase<PhaseLoopState>,
    qsg_v: ThreePhase<QsgState>,
    qsg_i: ThreePhase<QsgState>,
    rms_v: ThreePhase<SlidingRms>,
    pub fault: FaultStatus,
    transitions: Vec<FaultTransition>,
}

impl SvocController {
    /// Starts synchronized with a nominal grid at phase angle zero.
    pub fn new(cfg: ControllerConfig) -> Result<Self> {
        cfg.validate()?;
        let w = cfg.osc.omega_n;
        let v0 = nominal_pairs(cfg.osc.v_n);
        let qsg_v = ThreePhase::from_fn(|p| {
            let mut q = QsgState::new(w, cfg.k_sogi);
            q.preset(v0[p], cfg.t_s);
            q
        });
        let rms_v = ThreePhase::from_fn(|_| {
            let mut r = SlidingRms::for_period(w, cfg.t_s);
            r.preset_sinusoid(cfg.osc.v_n);
            r
        });
        Ok(Self {
            osc: SvocState::new(&cfg.osc, 0.0),
            loops: ThreePhase::splat(PhaseLoopState::new(cfg.i_max)),
            qsg_v,
            qsg_i: ThreePhase::splat(QsgState::new(w, cfg.k_sogi)),
            rms_v,
            fault: FaultStatus::default(),
            transitions: Vec::new(),
            cfg,
        })
    }

    fn units(&self) -> Result<ThreePhase<UnitDirection>> {
        let r = self.osc.refs;
        Ok(ThreePhase::new(
            unit_direction(r.a)?,
            unit_direction(r.b)?,
            unit_direction(r.c)?,
        ))
    }
}

impl GridController for SvocController {
    fn tick(&mut self, m: &Measurement, sp: &PowerSetpoints) -> Result<ThreePhase<f64>> {
        let cfg = self.cfg;
        let dt = cfg.t_s;
        let v_pair = ThreePhase::from_fn(|p| self.qsg_v[p].step(m.v_pcc[p], dt));
        let i_pair = ThreePhase::from_fn(|p| self.qsg_i[p].step(m.i_inv[p], dt));
        let v_rms = ThreePhase::from_fn(|p| self.rms_v[p].push(m.v_pcc[p]));

        let (status, transitions) =
            detect_faults(&v_rms, &self.fault, &cfg.detector, cfg.osc.v_n, dt);
        self.fault = status;
        self.transitions = transitions;

        let units = self.units()?;
        let i_ref = current_references(&self.osc.refs, sp)?;
        let i_sync = ThreePhase::from_fn(|p| to_sync_frame(units[p], i_pair[p]));
        let est = estimate(&status, &i_sync, &units)?;
        let selected = select_feedback(&status, &i_sync, &est);
        let i_fb = ThreePhase::from_fn(|p| from_sync_frame(units[p], selected[p]));
        let fb = feedback_decompose(&i_fb, &i_ref);

        let lead = delay_advance(cfg.osc.omega_n, dt);
        let mut cmd = ThreePhase::splat(0.0);
        for p in Phase::ALL {
            let u = units[p];
            let r = self.osc.refs[p];
            let v_sync = to_sync_frame(u, v_pair[p]);
            // in-phase channel straight from the sample keeps the loop fast
            let i_loop = to_sync_frame(u, QuadPair::new(m.i_inv[p], i_pair[p].q));
            let i_ff = to_sync_frame(u, i_ref[p]);
            let st = &mut self.loops[p];
            let i_cmd = voltage_loop_step(
                st,
                &cfg.gains,
                r.v_d_star.hypot(r.v_q_star),
                v_sync,
                i_ff,
                dt,
            );
            let v_cmd = current_loop_step(st, &cfg.gains, i_cmd, i_loop, v_sync, dt);
            cmd[p] = to_instantaneous(u.rotated(lead), v_cmd);
        }

        self.osc = svoc_step(&self.osc, &fb, &cfg.osc, dt)?;
        Ok(cmd)
    }

    fn synchronize(&mut self, v_pcc: &ThreePhase<QuadPair>) {
        let (amp, angle) = sync_point(v_pcc);
        self.osc = SvocState::with_amplitude(&self.cfg.osc, angle, amp);
        for p in Phase::ALL {
            self.qsg_v[p].preset(v_pcc[p], self.cfg.t_s);
            self.rms_v[p].preset_sinusoid(v_pcc[p].magnitude() / std::f64::consts::SQRT_2);
        }
    }

    fn telemetry(&self) -> Telemetry {
        Telemetry {
            faulty: self.fault.faulty,
            amp_pos: self.osc.amp_pos(),
            amp_neg: self.osc.amp_neg(),
            amp_zero: self.osc.amp_zero(),
            transitions: self.transitions.clone(),
            current_limited: self.loops.map(|l| l.current_limited()),
        }
    }
}

/// Peak-valued sync-frame sample of an instantaneous pair in the fixed frame.
pub fn fixed_frame(p: QuadPair) -> SyncFrameSample {
    to_sync_frame(UnitDirection::ALIGNED, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline_dvoc::DvocController;
    use crate::plant::{Plant, PlantParams};
    use approx::assert_abs_diff_eq;

    fn pcc_pairs() -> ThreePhase<QuadPair> {
        let mut plant = Plant::new(PlantParams::default(), vec![]).unwrap();
        plant.preset_grid_steady_state(0.0)
    }

    #[test]
    fn sync_point_of_nominal_pairs() {
        let (amp, angle) = sync_point(&nominal_pairs(50.0));
        assert_abs_diff_eq!(amp, 70.7107, epsilon = 1e-4);
        assert_abs_diff_eq!(angle, 0.0, epsilon = 1e-12);
        let shifted =
            ThreePhase::from_fn(|p| QuadPair::from_polar(60.0, 0.3 + PHASE_SHIFT[p.index()]));
        let (amp, angle) = sync_point(&shifted);
        assert_abs_diff_eq!(amp, 60.0, epsilon = 1e-12);
        assert_abs_diff_eq!(angle, -0.3, epsilon = 1e-12);
    }

    #[test]
    fn synchronized_references_match_the_pcc() {
        let v = pcc_pairs();
        let mut c = SvocController::new(ControllerConfig::default()).unwrap();
        c.synchronize(&v);
        for p in Phase::ALL {
            let r = c.osc.refs[p];
            assert_abs_diff_eq!(r.v_d_star, v[p].d, epsilon = 1e-9);
            assert_abs_diff_eq!(r.v_q_star, v[p].q, epsilon = 1e-9);
        }
        let mut d = DvocController::new(ControllerConfig::default()).unwrap();
        d.synchronize(&v);
        let refs = d.state.references();
        for p in Phase::ALL {
            assert_abs_diff_eq!(refs[p].v_d_star, v[p].d, epsilon = 0.1);
            assert_abs_diff_eq!(refs[p].v_q_star, v[p].q, epsilon = 0.1);
        }
    }

    #[test]
    fn first_command_reproduces_the_pcc_voltage() {
        let v = pcc_pairs();
        let m = Measurement {
            v_pcc: v.map(|p| p.d),
            i_inv: ThreePhase::splat(0.0),
        };
        let mut c = SvocController::new(ControllerConfig::default()).unwrap();
        c.synchronize(&v);
        let cmd = c.tick(&m, &PowerSetpoints::default()).unwrap();
        // the PCC voltage, led by the computation delay
        let lead = crate::frames::delay_advance(c.cfg.osc.omega_n, c.cfg.t_s);
        for p in Phase::ALL {
            let ahead = v[p].d * lead.cos() - v[p].q * lead.sin();
            assert_abs_diff_eq!(cmd[p], ahead, epsilon = 0.05);
        }
        let t = c.telemetry();
        assert_eq!(t.faulty, ThreePhase::splat(false));
        assert!(t.transitions.is_empty());
        assert_abs_diff_eq!(t.amp_neg, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = ControllerConfig {
            i_max: 0.0,
            ..ControllerConfig::default()
        };
        assert!(SvocController::new(cfg).is_err());
        let cfg = ControllerConfig {
            t_s: f64::NAN,
            ..ControllerConfig::default()
        };
        assert!(DvocController::new(cfg).is_err());
    }
}
