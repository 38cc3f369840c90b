//! Unbalanced-fault ride-through: per-phase undervoltage detection and the
//! feedback estimator that rebuilds faulty-phase currents from the healthy
//! phases, so the oscillators keep synchronizing off the healthy ones.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::frames::{from_sync_frame, to_sync_frame, SyncFrameSample, UnitDirection};
use crate::signals::{Phase, QuadPair, ThreePhase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// Enter the faulty state below this rms, per unit of `V_n`.
    pub fault_pu: f64,
    /// Return to healthy above this rms, per unit.
    pub clear_pu: f64,
    /// Time the condition must hold continuously, s.
    pub dwell: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            fault_pu: 0.85,
            clear_pu: 0.90,
            dwell: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FaultStatus {
    pub faulty: ThreePhase<bool>,
    /// Time each phase has continuously satisfied its transition condition.
    pub timers: ThreePhase<f64>,
}

impl FaultStatus {
    pub fn count(&self) -> usize {
        self.faulty.iter().filter(|f| **f).count()
    }

    pub fn faulty_phases(&self) -> Vec<Phase> {
        Phase::ALL.into_iter().filter(|p| self.faulty[*p]).collect()
    }

    pub fn healthy_phases(&self) -> Vec<Phase> {
        Phase::ALL
            .into_iter()
            .filter(|p| !self.faulty[*p])
            .collect()
    }
}

/// One detector transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultTransition {
    pub phase: Phase,
    pub faulty: bool,
}

/// Advance the detector by `dt`. A phase turns faulty after its rms stays
/// below `fault_pu * V_n` for `dwell`, and healthy again after it stays above
/// `clear_pu * V_n` for `dwell`. A balanced three-phase dip is not flagged:
/// plain current limiting handles it.
pub fn detect_faults(
    v_pcc_rms: &ThreePhase<f64>,
    status: &FaultStatus,
    cfg: &DetectorConfig,
    v_n: f64,
    dt: f64,
) -> (FaultStatus, Vec<FaultTransition>) {
    let mut candidate = status.faulty;
    let mut timers = status.timers;
    for ph in Phase::ALL {
        let pu = v_pcc_rms[ph] / v_n;
        let pending = if status.faulty[ph] {
            pu > cfg.clear_pu
        } else {
            pu < cfg.fault_pu
        };
        if pending {
            timers[ph] += dt;
            if timers[ph] >= cfg.dwell - 1e-12 {
                candidate[ph] = !status.faulty[ph];
                timers[ph] = 0.0;
            }
        } else {
            timers[ph] = 0.0;
        }
    }
    if candidate.iter().all(|f| *f) {
        // keep the previous flags; the timers run on
        candidate = status.faulty;
        if candidate.iter().all(|f| *f) {
            candidate = ThreePhase::splat(false);
        }
    }
    let transitions = Phase::ALL
        .into_iter()
        .filter(|p| candidate[*p] != status.faulty[*p])
        .map(|p| FaultTransition {
            phase: p,
            faulty: candidate[p],
        })
        .collect();
    (
        FaultStatus {
            faulty: candidate,
            timers,
        },
        transitions,
    )
}

/// Estimated own-frame current phasors, present only for faulty phases.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimatedFeedback {
    pub phasors: ThreePhase<Option<SyncFrameSample>>,
}

fn require_count(status: &FaultStatus, expected: usize) -> Result<()> {
    let actual = status.count();
    if actual != expected {
        return Err(SimError::WrongFaultCount { expected, actual });
    }
    Ok(())
}

fn instantaneous(
    units: &ThreePhase<UnitDirection>,
    measured: &ThreePhase<SyncFrameSample>,
    ph: Phase,
) -> QuadPair {
    from_sync_frame(units[ph], measured[ph])
}

/// One faulty phase: its feedback is minus the sum of the two healthy
/// currents, summed as instantaneous pairs and mapped into the faulty
/// phase's own frame.
pub fn estimate_one_fault(
    status: &FaultStatus,
    measured: &ThreePhase<SyncFrameSample>,
    units: &ThreePhase<UnitDirection>,
) -> Result<EstimatedFeedback> {
    require_count(status, 1)?;
    let faulty = status.faulty_phases()[0];
    let sum = status
        .healthy_phases()
        .into_iter()
        .fold(QuadPair::ZERO, |acc, p| {
            acc + instantaneous(units, measured, p)
        });
    let mut est = EstimatedFeedback::default();
    est.phasors[faulty] = Some(to_sync_frame(units[faulty], -sum));
    Ok(est)
}

/// Two faulty phases: each receives the healthy phase's own-frame phasor.
/// With balanced references the frames are 120 degrees apart, so the copy
/// is exactly the rotation by the phase-sequence multiple of 120 degrees.
pub fn estimate_two_faults(
    status: &FaultStatus,
    measured: &ThreePhase<SyncFrameSample>,
) -> Result<EstimatedFeedback> {
    require_count(status, 2)?;
    let healthy = status.healthy_phases()[0];
    let mut est = EstimatedFeedback::default();
    for p in status.faulty_phases() {
        est.phasors[p] = Some(measured[healthy]);
    }
    Ok(est)
}

/// Estimates for whatever the detector currently flags (none for 0 or 3).
pub fn estimate(
    status: &FaultStatus,
    measured: &ThreePhase<SyncFrameSample>,
    units: &ThreePhase<UnitDirection>,
) -> Result<EstimatedFeedback> {
    match status.count() {
        1 => estimate_one_fault(status, measured, units),
        2 => estimate_two_faults(status, measured),
        _ => Ok(EstimatedFeedback::default()),
    }
}

pub fn select_feedback(
    status: &FaultStatus,
    measured: &ThreePhase<SyncFrameSample>,
    estimated: &EstimatedFeedback,
) -> ThreePhase<SyncFrameSample> {
    ThreePhase::from_fn(|p| match (status.faulty[p], estimated.phasors[p]) {
        (true, Some(e)) => e,
        _ => measured[p],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::unit_direction;
    use crate::svoc::{feedback_decompose, synthesize_references};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::TAU;
    use std::f64::consts::{PI, SQRT_2};

    const VN: f64 = 50.0;
    const DT: f64 = 50e-6;

    fn run_detector(rms: ThreePhase<f64>, secs: f64) -> (FaultStatus, usize) {
        let mut st = FaultStatus::default();
        let mut n = 0;
        for _ in 0..(secs / DT) as usize {
            let (next, tr) = detect_faults(&rms, &st, &DetectorConfig::default(), VN, DT);
            n += tr.len();
            st = next;
        }
        (st, n)
    }

    #[test]
    fn nominal_is_healthy() {
        let (st, n) = run_detector(ThreePhase::splat(VN), 0.1);
        assert_eq!(st.count(), 0);
        assert_eq!(n, 0);
    }

    #[test]
    fn single_phase_fault_detected_after_dwell() {
        let rms = ThreePhase::new(0.1 * VN, VN, VN);
        let (st, _) = run_detector(rms, 0.019);
        assert_eq!(st.count(), 0);
        let (st, _) = run_detector(rms, 0.021);
        assert_eq!(st.faulty_phases(), vec![Phase::A]);
    }

    #[test]
    fn two_phase_fault_detected() {
        let (st, _) = run_detector(ThreePhase::new(VN, 0.05 * VN, 0.05 * VN), 0.05);
        assert_eq!(st.faulty_phases(), vec![Phase::B, Phase::C]);
    }

    #[test]
    fn balanced_dip_not_flagged() {
        let (st, _) = run_detector(ThreePhase::splat(0.2 * VN), 0.1);
        assert_eq!(st.count(), 0);
    }

    #[test]
    fn hysteresis_band_holds_state() {
        let cfg = DetectorConfig::default();
        let mut st = FaultStatus::default();
        for _ in 0..1000 {
            st = detect_faults(&ThreePhase::new(0.5 * VN, VN, VN), &st, &cfg, VN, DT).0;
        }
        assert!(st.faulty.a);
        // inside the band: stays faulty
        for _ in 0..10_000 {
            st = detect_faults(&ThreePhase::new(0.87 * VN, VN, VN), &st, &cfg, VN, DT).0;
        }
        assert!(st.faulty.a);
        for _ in 0..1000 {
            st = detect_faults(&ThreePhase::new(0.95 * VN, VN, VN), &st, &cfg, VN, DT).0;
        }
        assert!(!st.faulty.a);
    }

    proptest! {
        #[test]
        fn single_crossing_single_transition(start in 0.86..1.2f64, end in 0.0..0.84f64, cross in 10usize..2000) {
            // monotone ramp crossing 0.85 p.u. once
            let mut st = FaultStatus::default();
            let mut transitions = 0;
            let n = 4000;
            for k in 0..n {
                let pu = if k < cross { start - (start - 0.85) * k as f64 / cross as f64 } else {
                    0.85 - (0.85 - end) * ((k - cross) as f64 / (n - cross) as f64)
                };
                let (next, tr) = detect_faults(&ThreePhase::new(pu * VN, VN, VN), &st, &DetectorConfig::default(), VN, DT);
                transitions += tr.iter().filter(|t| t.faulty).count();
                st = next;
            }
            prop_assert!(transitions <= 1);
        }
    }

    fn balanced_refs() -> ThreePhase<UnitDirection> {
        let refs = synthesize_references((SQRT_2 * VN, 0.0), (0.0, 0.0), (0.0, 0.0));
        refs.map(|r| unit_direction(r).unwrap())
    }

    fn status(a: bool, b: bool, c: bool) -> FaultStatus {
        FaultStatus {
            faulty: ThreePhase::new(a, b, c),
            ..Default::default()
        }
    }

    fn sync_of(
        units: &ThreePhase<UnitDirection>,
        pairs: ThreePhase<QuadPair>,
    ) -> ThreePhase<SyncFrameSample> {
        ThreePhase::from_fn(|p| to_sync_frame(units[p], pairs[p]))
    }

    #[test]
    fn one_fault_recovers_balanced_member() {
        let units = balanced_refs();
        // balanced set in the reference order (b leads a)
        let pairs = ThreePhase::new(
            QuadPair::from_polar(8.485, 0.3),
            QuadPair::from_polar(8.485, 0.3 + 2.0 * PI / 3.0),
            QuadPair::from_polar(8.485, 0.3 - 2.0 * PI / 3.0),
        );
        let meas = sync_of(&units, pairs);
        let est = estimate_one_fault(&status(true, false, false), &meas, &units).unwrap();
        let a = est.phasors.a.unwrap();
        assert_abs_diff_eq!(a.d, meas.a.d, epsilon = 1e-9);
        assert_abs_diff_eq!(a.q, meas.a.q, epsilon = 1e-9);
        assert!(est.phasors.b.is_none() && est.phasors.c.is_none());
    }

    #[test]
    fn one_fault_complex_example() {
        let units = balanced_refs();
        let pairs = ThreePhase::new(
            QuadPair::ZERO,
            QuadPair::from_polar(8.485, -2.0 * PI / 3.0),
            QuadPair::from_polar(8.485, 2.0 * PI / 3.0),
        );
        let meas = sync_of(&units, pairs);
        let est = estimate_one_fault(&status(true, false, false), &meas, &units).unwrap();
        let inst = from_sync_frame(units.a, est.phasors.a.unwrap());
        assert_abs_diff_eq!(inst.d, 8.485, epsilon = 1e-9);
        assert_abs_diff_eq!(inst.q, 0.0, epsilon = 1e-9);

        let zero = ThreePhase::splat(SyncFrameSample::ZERO);
        let est = estimate_one_fault(&status(false, true, false), &zero, &units).unwrap();
        assert_eq!(est.phasors.b, Some(SyncFrameSample::new(0.0, 0.0)));
    }

    #[test]
    fn two_faults_copy_healthy_phasor() {
        let units = balanced_refs();
        let mut meas = ThreePhase::splat(SyncFrameSample::new(-3.0, 7.0));
        meas.a = SyncFrameSample::new(8.485, 0.0);
        let est = estimate_two_faults(&status(false, true, true), &meas).unwrap();
        assert_eq!(est.phasors.b, Some(SyncFrameSample::new(8.485, 0.0)));
        assert_eq!(est.phasors.c, Some(SyncFrameSample::new(8.485, 0.0)));
        // same as rotating the healthy instantaneous phasor by +/-120 degrees
        let a_inst = from_sync_frame(units.a, meas.a);
        let rot = |p: QuadPair, ang: f64| {
            QuadPair::new(
                p.d * ang.cos() - p.q * ang.sin(),
                p.d * ang.sin() + p.q * ang.cos(),
            )
        };
        let b_inst = from_sync_frame(units.b, est.phasors.b.unwrap());
        let c_inst = from_sync_frame(units.c, est.phasors.c.unwrap());
        let want_b = rot(a_inst, 2.0 * PI / 3.0);
        let want_c = rot(a_inst, -2.0 * PI / 3.0);
        assert_abs_diff_eq!(b_inst.d, want_b.d, epsilon = 1e-9);
        assert_abs_diff_eq!(b_inst.q, want_b.q, epsilon = 1e-9);
        assert_abs_diff_eq!(c_inst.d, want_c.d, epsilon = 1e-9);
        assert_abs_diff_eq!(c_inst.q, want_c.q, epsilon = 1e-9);

        let est = estimate_two_faults(
            &status(false, true, true),
            &ThreePhase::splat(SyncFrameSample::ZERO),
        )
        .unwrap();
        assert_eq!(est.phasors.b, Some(SyncFrameSample::ZERO));
    }

    #[test]
    fn wrong_counts_rejected() {
        let units = balanced_refs();
        let z = ThreePhase::splat(SyncFrameSample::ZERO);
        assert!(matches!(
            estimate_one_fault(&status(true, true, false), &z, &units),
            Err(SimError::WrongFaultCount {
                expected: 1,
                actual: 2
            })
        ));
        assert!(estimate_two_faults(&status(true, false, false), &z).is_err());
        assert_eq!(
            estimate(&status(false, false, false), &z, &units).unwrap(),
            EstimatedFeedback::default()
        );
    }

    #[test]
    fn selection_examples() {
        let units = balanced_refs();
        let meas = ThreePhase::new(
            SyncFrameSample::new(1.0, 0.0),
            SyncFrameSample::new(2.0, 0.0),
            SyncFrameSample::new(3.0, 0.0),
        );
        let none = status(false, false, false);
        assert_eq!(
            select_feedback(&none, &meas, &EstimatedFeedback::default()),
            meas
        );

        let one = status(true, false, false);
        let est = estimate(&one, &meas, &units).unwrap();
        let sel = select_feedback(&one, &meas, &est);
        assert_eq!((sel.b, sel.c), (meas.b, meas.c));
        assert_eq!(sel.a, est.phasors.a.unwrap());

        let two = status(false, true, true);
        let est = estimate(&two, &meas, &units).unwrap();
        let sel = select_feedback(&two, &meas, &est);
        assert_eq!(sel, ThreePhase::splat(meas.a));
    }

    proptest! {
        #[test]
        fn substituted_feedback_is_balanced(peak in 0.5..14.0f64, ang in 0.0..TAU, which in 0usize..3) {
            let units = balanced_refs();
            let pairs = ThreePhase::new(
                QuadPair::from_polar(peak, ang),
                QuadPair::from_polar(peak, ang + 2.0 * PI / 3.0),
                QuadPair::from_polar(peak, ang - 2.0 * PI / 3.0),
            );
            let mut meas = sync_of(&units, pairs);
            // the faulty phases carry garbage
            let st = match which {
                0 => status(true, false, false),
                1 => status(false, true, true),
                _ => status(false, false, true),
            };
            for p in st.faulty_phases() {
                meas[p] = SyncFrameSample::new(13.0, -9.0);
            }
            let est = estimate(&st, &meas, &units).unwrap();
            let sel = select_feedback(&st, &meas, &est);
            let inst = ThreePhase::from_fn(|p| from_sync_frame(units[p], sel[p]));
            let fb = feedback_decompose(&inst, &ThreePhase::splat(QuadPair::ZERO));
            let pos = fb.pos_c().norm();
            prop_assert!(fb.neg_c().norm() <= 1e-6 * pos && fb.zero_c().norm() <= 1e-6 * pos);
        }
    }
}
