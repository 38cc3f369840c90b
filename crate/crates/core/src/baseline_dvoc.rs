//! Single-oscillator baseline: one Andronov-Hopf oscillator driven by the
//! aggregate Clarke-frame current error sets a balanced reference for all
//! phases. The nested loops and their anti-windup clamps are the same as in
//! the sequence controller, so a faulted phase saturates on its own while the
//! oscillator keeps seeing its current. There is no sequence awareness and no
//! feedback estimation.

use crate::controller::{
    nominal_pairs, sync_point, ControllerConfig, GridController, Measurement, Telemetry,
};
use crate::error::{Result, SimError};
use crate::frames::{
    delay_advance, to_instantaneous, to_sync_frame, unit_direction, PhaseReference, MIN_REFERENCE,
};
use crate::nested_control::{current_loop_step, voltage_loop_step, PhaseLoopState};
use crate::plant::rk4_step;
use crate::signals::{Phase, QsgState, QuadPair, ThreePhase};
use crate::svoc::{
    current_references, pos_osc_derivatives, synthesize_references, PosOscState, PowerSetpoints,
};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Amplitude-invariant Clarke transform in the oscillator's orientation.
pub fn clarke(x: &ThreePhase<f64>) -> (f64, f64) {
    ((2.0 * x.a - x.b - x.c) / 3.0, (x.b - x.c) / SQRT3)
}

pub fn inverse_clarke(ab: (f64, f64)) -> ThreePhase<f64> {
    let (a, b) = ab;
    ThreePhase::new(a, -0.5 * a + 0.5 * SQRT3 * b, -0.5 * a - 0.5 * SQRT3 * b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DvocState {
    pub osc: PosOscState,
    /// Nested loops; each phase saturates on its own.
    pub loops: ThreePhase<PhaseLoopState>,
    pub qsg_v: ThreePhase<QsgState>,
    pub qsg_i: ThreePhase<QsgState>,
}

impl DvocState {
    pub fn new(cfg: &ControllerConfig) -> Self {
        let v0 = nominal_pairs(cfg.osc.v_n);
        Self {
            osc: PosOscState {
                v_alpha: cfg.osc.radius(),
                v_beta: 0.0,
            },
            loops: ThreePhase::splat(PhaseLoopState::new(cfg.i_max)),
            qsg_v: ThreePhase::from_fn(|p| {
                let mut q = QsgState::new(cfg.osc.omega_n, cfg.k_sogi);
                q.preset(v0[p], cfg.t_s);
                q
            }),
            qsg_i: ThreePhase::splat(QsgState::new(cfg.osc.omega_n, cfg.k_sogi)),
        }
    }

    pub fn theta(&self) -> f64 {
        (-self.osc.v_beta).atan2(self.osc.v_alpha)
    }

    /// Balanced per-phase references from the single oscillator.
    pub fn references(&self) -> ThreePhase<PhaseReference> {
        synthesize_references((self.osc.v_alpha, self.osc.v_beta), (0.0, 0.0), (0.0, 0.0))
    }
}

/// One controller tick of the baseline. Returns the per-phase inverter
/// voltage commands.
pub fn dvoc_step(
    state: &mut DvocState,
    i_inv: &ThreePhase<f64>,
    v_pcc: &ThreePhase<f64>,
    sp: &PowerSetpoints,
    cfg: &ControllerConfig,
) -> Result<ThreePhase<f64>> {
    let dt = cfg.t_s;
    let refs = state.references();
    let units = ThreePhase::new(
        unit_direction(refs.a)?,
        unit_direction(refs.b)?,
        unit_direction(refs.c)?,
    );
    // the aggregate setpoint shared equally, since the references are balanced
    let (p_tot, q_tot) = (sp.p_star.sum(), sp.q_star.sum());
    let shared = PowerSetpoints {
        p_star: ThreePhase::splat(p_tot / 3.0),
        q_star: ThreePhase::splat(q_tot / 3.0),
    };
    let i_ref = current_references(&refs, &shared)?;

    let lead = delay_advance(cfg.osc.omega_n, dt);
    let mut cmd = ThreePhase::splat(0.0);
    for p in Phase::ALL {
        let u = units[p];
        let v_pair = state.qsg_v[p].step(v_pcc[p], dt);
        let i_pair = state.qsg_i[p].step(i_inv[p], dt);
        let v_sync = to_sync_frame(u, v_pair);
        let i_loop = to_sync_frame(u, QuadPair::new(i_inv[p], i_pair.q));
        let i_ff = to_sync_frame(u, i_ref[p]);
        let r = refs[p];
        let st = &mut state.loops[p];
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

    // aggregate Clarke-frame error drives the single oscillator
    let i_ab = clarke(i_inv);
    let r_ab = clarke(&i_ref.map(|x| x.d));
    let fb = (r_ab.0 - i_ab.0, r_ab.1 - i_ab.1);
    let x = rk4_step(&[state.osc.v_alpha, state.osc.v_beta], 0.0, dt, |_, x| {
        let d = pos_osc_derivatives(
            PosOscState {
                v_alpha: x[0],
                v_beta: x[1],
            },
            fb,
            &cfg.osc,
        );
        [d.0, d.1]
    });
    state.osc = PosOscState {
        v_alpha: x[0],
        v_beta: x[1],
    };
    if !(state.osc.v_alpha.hypot(state.osc.v_beta) >= MIN_REFERENCE) {
        return Err(SimError::DegenerateReference {
            magnitude: state.osc.v_alpha.hypot(state.osc.v_beta),
        });
    }
    Ok(cmd)
}

#[derive(Debug, Clone)]
pub struct DvocController {
    pub cfg: ControllerConfig,
    pub state: DvocState,
}

impl DvocController {
    pub fn new(cfg: ControllerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            state: DvocState::new(&cfg),
            cfg,
        })
    }
}

impl GridController for DvocController {
    fn tick(&mut self, m: &Measurement, sp: &PowerSetpoints) -> Result<ThreePhase<f64>> {
        dvoc_step(&mut self.state, &m.i_inv, &m.v_pcc, sp, &self.cfg)
    }

    fn telemetry(&self) -> Telemetry {
        Telemetry {
            amp_pos: self.state.osc.v_alpha.hypot(self.state.osc.v_beta),
            current_limited: self.state.loops.map(|l| l.current_limited()),
            ..Default::default()
        }
    }

    fn synchronize(&mut self, v_pcc: &ThreePhase<QuadPair>) {
        let (amp, angle) = sync_point(v_pcc);
        self.state.osc = PosOscState {
            v_alpha: amp * angle.cos(),
            v_beta: amp * angle.sin(),
        };
        for p in Phase::ALL {
            self.state.qsg_v[p].preset(v_pcc[p], self.cfg.t_s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn clarke_of_balanced_set() {
        let th = 0.4;
        let x = ThreePhase::from_fn(|p: Phase| {
            10.0 * (th + crate::plant::PHASE_SHIFT[p.index()]).cos()
        });
        let (a, b) = clarke(&x);
        assert_abs_diff_eq!(a, 10.0 * th.cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(b, -10.0 * th.sin(), epsilon = 1e-12);
        let back = inverse_clarke((a, b));
        for p in Phase::ALL {
            assert_abs_diff_eq!(back[p], x[p], epsilon = 1e-12);
        }
        // common-mode is invisible
        assert_eq!(clarke(&ThreePhase::splat(3.0)), (0.0, 0.0));
    }

    proptest::proptest! {
        #[test]
        fn references_are_balanced(ang in 0.0..std::f64::consts::TAU, r in 1.0..100.0f64) {
            let mut st = DvocState::new(&ControllerConfig::default());
            st.osc = PosOscState { v_alpha: r * ang.cos(), v_beta: r * ang.sin() };
            let refs = st.references();
            for p in Phase::ALL {
                let m = refs[p].v_d_star.hypot(refs[p].v_q_star);
                proptest::prop_assert!((m - r).abs() < 1e-9 * r);
            }
            let sum = refs.a.v_d_star + refs.b.v_d_star + refs.c.v_d_star;
            proptest::prop_assert!(sum.abs() < 1e-9 * r);
        }
    }

    #[test]
    fn degenerate_oscillator_rejected() {
        let mut c = DvocController::new(ControllerConfig::default()).unwrap();
        c.state.osc = PosOscState {
            v_alpha: 0.0,
            v_beta: 0.0,
        };
        let m = Measurement::default();
        assert!(matches!(
            c.tick(&m, &PowerSetpoints::default()),
            Err(SimError::DegenerateReference { .. })
        ));
    }
}
