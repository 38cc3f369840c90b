//! Per-phase synchronous frames anchored on each phase's own reference pair.
//!
//! The forward map `[u_d u_q; u_q -u_d]` is symmetric and orthogonal, so it is
//! its own inverse.

use crate::error::{Result, SimError};
use crate::signals::QuadPair;

/// Smallest reference magnitude that still defines a direction.
pub const MIN_REFERENCE: f64 = 1e-6;

/// A phase's reference voltage and its lagging companion, `(v*_d, v*_q)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseReference {
    pub v_d_star: f64,
    pub v_q_star: f64,
}

impl PhaseReference {
    pub const fn new(v_d_star: f64, v_q_star: f64) -> Self {
        Self { v_d_star, v_q_star }
    }

    pub fn as_pair(self) -> QuadPair {
        QuadPair::new(self.v_d_star, self.v_q_star)
    }
}

impl From<QuadPair> for PhaseReference {
    fn from(p: QuadPair) -> Self {
        Self::new(p.d, p.q)
    }
}

/// Synchronous-frame value, peak-valued.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SyncFrameSample {
    pub d: f64,
    pub q: f64,
}

impl SyncFrameSample {
    pub const ZERO: SyncFrameSample = SyncFrameSample { d: 0.0, q: 0.0 };

    pub const fn new(d: f64, q: f64) -> Self {
        Self { d, q }
    }

    pub fn magnitude(self) -> f64 {
        self.d.hypot(self.q)
    }
}

/// Unit direction `(v̂_d, v̂_q)` of a phase reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitDirection {
    pub d: f64,
    pub q: f64,
}

impl UnitDirection {
    pub const ALIGNED: UnitDirection = UnitDirection { d: 1.0, q: 0.0 };

    /// The same frame `angle` radians further along the rotation.
    pub fn rotated(self, angle: f64) -> UnitDirection {
        let (s, c) = angle.sin_cos();
        UnitDirection {
            d: self.d * c - self.q * s,
            q: self.q * c + self.d * s,
        }
    }
}

/// Phase lead that offsets one sample of computation delay plus the
/// half-sample lag of the zero-order hold.
pub fn delay_advance(omega: f64, t_s: f64) -> f64 {
    1.5 * omega * t_s
}

pub fn ref_magnitude(r: PhaseReference) -> SyncFrameSample {
    SyncFrameSample::new(r.v_d_star.hypot(r.v_q_star), 0.0)
}

pub fn unit_direction(r: PhaseReference) -> Result<UnitDirection> {
    let m = ref_magnitude(r).d;
    if !(m >= MIN_REFERENCE) {
        return Err(SimError::DegenerateReference { magnitude: m });
    }
    Ok(UnitDirection {
        d: r.v_d_star / m,
        q: r.v_q_star / m,
    })
}

pub fn to_sync_frame(u: UnitDirection, s: QuadPair) -> SyncFrameSample {
    SyncFrameSample::new(u.d * s.d + u.q * s.q, u.q * s.d - u.d * s.q)
}

/// Inverse of [`to_sync_frame`]: the instantaneous pair that maps onto `cmd`.
pub fn from_sync_frame(u: UnitDirection, cmd: SyncFrameSample) -> QuadPair {
    QuadPair::new(u.d * cmd.d + u.q * cmd.q, u.q * cmd.d - u.d * cmd.q)
}

/// Instantaneous command for the phase (the `d` row of the inverse map).
pub fn to_instantaneous(u: UnitDirection, cmd: SyncFrameSample) -> f64 {
    u.d * cmd.d + u.q * cmd.q
}
