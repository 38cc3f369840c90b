//! Per-phase outer voltage / inner current PI loops in the phase's own
//! synchronous frame, with vector-magnitude current limiting and conditional
//! integration as anti-windup.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::frames::SyncFrameSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopGains {
    /// Voltage loop, A/V and A/(V s).
    pub kp_v: f64,
    pub ki_v: f64,
    /// Current loop, V/A and V/(A s).
    pub kp_c: f64,
    pub ki_c: f64,
    /// Peak inverter voltage available to the current loop.
    pub v_ceiling: f64,
}

impl Default for LoopGains {
    fn default() -> Self {
        Self {
            kp_v: 1.2,
            ki_v: 100.0,
            kp_c: std::f64::consts::TAU,
            ki_c: 500.0,
            v_ceiling: 100.0,
        }
    }
}

impl LoopGains {
    pub fn validate(&self) -> Result<()> {
        let g = [self.kp_v, self.ki_v, self.kp_c, self.ki_c];
        if g.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !(self.v_ceiling > 0.0) {
            return Err(SimError::Config(format!("invalid loop gains {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PiState {
    pub integrator: f64,
    pub saturated_flag: bool,
}

impl PiState {
    /// Integrate unless the loop was clamped on the previous step.
    fn integrate(&mut self, ki: f64, err: f64, dt: f64) {
        if !self.saturated_flag {
            self.integrator += ki * err * dt;
        }
    }
}

/// Scale `v` so its magnitude does not exceed `limit`; returns whether it clamped.
pub fn clamp_magnitude(v: SyncFrameSample, limit: f64) -> (SyncFrameSample, bool) {
    let m = v.magnitude();
    if m > limit {
        let k = limit / m;
        (SyncFrameSample::new(v.d * k, v.q * k), true)
    } else {
        (v, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseLoopState {
    pub voltage_pi_d: PiState,
    pub voltage_pi_q: PiState,
    pub current_pi_d: PiState,
    pub current_pi_q: PiState,
    /// `sqrt(2) * I_max`.
    pub i_limit_peak: f64,
}

impl PhaseLoopState {
    pub fn new(i_max_rms: f64) -> Self {
        Self {
            voltage_pi_d: PiState::default(),
            voltage_pi_q: PiState::default(),
            current_pi_d: PiState::default(),
            current_pi_q: PiState::default(),
            i_limit_peak: std::f64::consts::SQRT_2 * i_max_rms,
        }
    }

    pub fn current_limited(&self) -> bool {
        self.voltage_pi_d.saturated_flag
    }
}

/// Outer loop: current command from the voltage error plus the power
/// feed-forward, limited to `i_limit_peak` with its angle preserved.
pub fn voltage_loop_step(
    st: &mut PhaseLoopState,
    g: &LoopGains,
    v_ref_d: f64,
    v_meas: SyncFrameSample,
    i_ff: SyncFrameSample,
    dt: f64,
) -> SyncFrameSample {
    let (ed, eq) = (v_ref_d - v_meas.d, -v_meas.q);
    st.voltage_pi_d.integrate(g.ki_v, ed, dt);
    st.voltage_pi_q.integrate(g.ki_v, eq, dt);
    let demand = SyncFrameSample::new(
        i_ff.d + g.kp_v * ed + st.voltage_pi_d.integrator,
        i_ff.q + g.kp_v * eq + st.voltage_pi_q.integrator,
    );
    let (cmd, clamped) = clamp_magnitude(demand, st.i_limit_peak);
    st.voltage_pi_d.saturated_flag = clamped;
    st.voltage_pi_q.saturated_flag = clamped;
    cmd
}

/// Inner loop: inverter voltage from the current error plus the measured
/// capacitor-voltage feed-forward, limited to the available voltage.
pub fn current_loop_step(
    st: &mut PhaseLoopState,
    g: &LoopGains,
    i_cmd: SyncFrameSample,
    i_meas: SyncFrameSample,
    v_ff: SyncFrameSample,
    dt: f64,
) -> SyncFrameSample {
    let (ed, eq) = (i_cmd.d - i_meas.d, i_cmd.q - i_meas.q);
    st.current_pi_d.integrate(g.ki_c, ed, dt);
    st.current_pi_q.integrate(g.ki_c, eq, dt);
    let demand = SyncFrameSample::new(
        v_ff.d + g.kp_c * ed + st.current_pi_d.integrator,
        v_ff.q + g.kp_c * eq + st.current_pi_q.integrator,
    );
    let (cmd, clamped) = clamp_magnitude(demand, g.v_ceiling);
    st.current_pi_d.saturated_flag = clamped;
    st.current_pi_q.saturated_flag = clamped;
    cmd
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const DT: f64 = 50e-6;

    #[test]
    fn zero_error_passes_feedforward() {
        let mut st = PhaseLoopState::new(10.0);
        let g = LoopGains::default();
        let ff = SyncFrameSample::new(5.0, -1.0);
        let cmd = voltage_loop_step(&mut st, &g, 70.7, SyncFrameSample::new(70.7, 0.0), ff, DT);
        assert_eq!(cmd, ff);
        assert!(!st.current_limited());
    }

    #[test]
    fn clamp_preserves_angle() {
        let (c, hit) = clamp_magnitude(SyncFrameSample::new(16.0, 12.0), 14.142);
        assert!(hit);
        assert_abs_diff_eq!(c.d, 11.314, epsilon = 1e-3);
        assert_abs_diff_eq!(c.q, 8.485, epsilon = 1e-3);
        let (c, hit) = clamp_magnitude(SyncFrameSample::new(3.0, 4.0), 14.142);
        assert!(!hit);
        assert_eq!(c, SyncFrameSample::new(3.0, 4.0));
    }

    #[test]
    fn integrator_frozen_while_saturated() {
        let mut st = PhaseLoopState::new(10.0);
        let g = LoopGains::default();
        // small error for a while so the integrator holds something
        for _ in 0..100 {
            voltage_loop_step(
                &mut st,
                &g,
                70.0,
                SyncFrameSample::new(69.0, 0.0),
                SyncFrameSample::ZERO,
                DT,
            );
        }
        // deep sag: saturates on the first step
        voltage_loop_step(
            &mut st,
            &g,
            70.0,
            SyncFrameSample::new(7.0, 0.0),
            SyncFrameSample::ZERO,
            DT,
        );
        assert!(st.current_limited());
        let held = st.voltage_pi_d.integrator;
        for _ in 0..20_000 {
            let c = voltage_loop_step(
                &mut st,
                &g,
                70.0,
                SyncFrameSample::new(7.0, 0.0),
                SyncFrameSample::ZERO,
                DT,
            );
            assert!(c.magnitude() <= st.i_limit_peak + 1e-9);
        }
        assert_eq!(st.voltage_pi_d.integrator, held);
        // error reverses: the first unsaturated step still starts from the held value
        let c = voltage_loop_step(
            &mut st,
            &g,
            70.0,
            SyncFrameSample::new(70.5, 0.0),
            SyncFrameSample::ZERO,
            DT,
        );
        assert!(!st.current_limited());
        assert_abs_diff_eq!(c.d, held - g.kp_v * 0.5, epsilon = 1e-9);
    }

    #[test]
    fn current_loop_zero_error_and_kick() {
        let mut st = PhaseLoopState::new(10.0);
        let g = LoopGains::default();
        let vff = SyncFrameSample::new(70.0, 2.0);
        let i = SyncFrameSample::new(4.0, 1.0);
        assert_eq!(current_loop_step(&mut st, &g, i, i, vff, DT), vff);
        let mut st = PhaseLoopState::new(10.0);
        let v = current_loop_step(
            &mut st,
            &g,
            SyncFrameSample::new(1.0, 0.0),
            SyncFrameSample::ZERO,
            SyncFrameSample::ZERO,
            DT,
        );
        assert_abs_diff_eq!(v.d, g.kp_c + g.ki_c * DT, epsilon = 1e-12);
    }

    #[test]
    fn current_loop_respects_voltage_ceiling() {
        let mut st = PhaseLoopState::new(10.0);
        let g = LoopGains::default();
        let v = current_loop_step(
            &mut st,
            &g,
            SyncFrameSample::new(100.0, 0.0),
            SyncFrameSample::ZERO,
            SyncFrameSample::new(90.0, 0.0),
            DT,
        );
        assert_abs_diff_eq!(v.magnitude(), g.v_ceiling, epsilon = 1e-9);
        assert!(st.current_pi_d.saturated_flag);
    }

    proptest! {
        #[test]
        fn current_command_never_exceeds_limit(
            vref in 0.0..100.0f64,
            vd in -100.0..100.0f64, vq in -100.0..100.0f64,
            fd in -20.0..20.0f64, fq in -20.0..20.0f64,
            steps in 1usize..200,
        ) {
            let mut st = PhaseLoopState::new(10.0);
            let g = LoopGains::default();
            for _ in 0..steps {
                let c = voltage_loop_step(&mut st, &g, vref, SyncFrameSample::new(vd, vq), SyncFrameSample::new(fd, fq), DT);
                prop_assert!(c.magnitude() <= st.i_limit_peak + 1e-9);
            }
        }

        #[test]
        fn clamp_is_positively_collinear(d in -100.0..100.0f64, q in -100.0..100.0f64) {
            let v = SyncFrameSample::new(d, q);
            let (c, _) = clamp_magnitude(v, 14.142);
            prop_assert!((c.d * v.q - c.q * v.d).abs() < 1e-9 * v.magnitude().max(1.0));
            prop_assert!(c.d * v.d + c.q * v.q >= 0.0);
        }

        #[test]
        fn linear_region_superposition(e in 0.001..0.1f64) {
            let g = LoopGains::default();
            let step = |err: f64| {
                let mut st = PhaseLoopState::new(10.0);
                voltage_loop_step(&mut st, &g, 70.0, SyncFrameSample::new(70.0 - err, 0.0), SyncFrameSample::ZERO, DT).d
            };
            prop_assert!((step(2.0 * e) - 2.0 * step(e)).abs() < 1e-12);
        }
    }
}
