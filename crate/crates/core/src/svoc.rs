//! Symmetrical-component virtual oscillator controller.
//!
//! Three Andronov-Hopf oscillators (positive, negative, zero sequence) whose
//! outputs are summed into one reference pair per phase, plus the current
//! reference and sequence-feedback math that closes the loop around them.
//!
//! All oscillators rotate clockwise in their `(alpha, beta)` plane. The
//! positive sequence therefore comes out with phase b leading phase a, and
//! the feedback phasors are built with the matching convention
//! `i = d - j*q` so the Fortescue operators classify that order as positive.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::frames::{PhaseReference, MIN_REFERENCE};
use crate::signals::{QuadPair, ThreePhase};

const SQRT3_2: f64 = 0.866_025_403_784_438_6;

/// The Fortescue operator `A = e^{j 2pi/3}`.
pub fn op_a() -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscParams {
    /// Convergence gain, 1/(V^2 s).
    pub xi: f64,
    pub k_v: f64,
    pub k_i: f64,
    /// Virtual capacitance, F.
    pub c_osc: f64,
    /// Nominal rms voltage.
    pub v_n: f64,
    pub omega_n: f64,
}

impl Default for OscParams {
    fn default() -> Self {
        Self {
            xi: 0.001,
            k_v: 1.0,
            k_i: 1.0,
            c_osc: 0.08,
            v_n: 50.0,
            omega_n: 2.0 * std::f64::consts::PI * 50.0,
        }
    }
}

impl OscParams {
    /// Limit-cycle radius, `sqrt(2) * V_n`.
    pub fn radius(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.v_n
    }

    pub fn coupling(&self) -> f64 {
        self.k_v * self.k_i / self.c_osc
    }

    /// Small-signal decay rate of the amplitude deviation, 1/s.
    pub fn amplitude_rate(&self) -> f64 {
        4.0 * self.xi * self.v_n * self.v_n / (self.k_v * self.k_v)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.xi,
            self.k_v,
            self.k_i,
            self.c_osc,
            self.v_n,
            self.omega_n,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(SimError::Config(format!(
                "oscillator parameters must be positive: {self:?}"
            )));
        }
        let bw = self.xi * 2.0 * self.v_n * self.v_n / (self.k_v * self.k_v);
        if bw >= self.omega_n / 5.0 {
            return Err(SimError::Config(format!(
                "amplitude loop bandwidth {bw:.1} rad/s must stay below omega_n/5"
            )));
        }
        Ok(())
    }

    fn cubic(&self, norm_sq: f64) -> f64 {
        self.xi / (self.k_v * self.k_v) * (2.0 * self.v_n * self.v_n - norm_sq)
    }
}

/// An `(alpha, beta)` pair.
pub type AlphaBeta = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosOscState {
    pub v_alpha: f64,
    pub v_beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegOscState {
    pub v_alpha1: f64,
    pub v_beta1: f64,
    pub v_alpha_out: f64,
    pub v_beta_out: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroOscState {
    pub v_alpha1: f64,
    pub v_beta1: f64,
    pub v_alpha_out: f64,
    pub v_beta_out: f64,
}

pub fn pos_osc_derivatives(s: PosOscState, fb: AlphaBeta, p: &OscParams) -> AlphaBeta {
    let g = p.cubic(s.v_alpha * s.v_alpha + s.v_beta * s.v_beta);
    let kc = p.coupling();
    (
        g * s.v_alpha + p.omega_n * s.v_beta + kc * fb.1,
        g * s.v_beta - p.omega_n * s.v_alpha - kc * fb.0,
    )
}

/// Magnitude deviation from the self-sustained circle, projected back onto
/// the internal direction.
fn deviation(p: &OscParams, alpha1: f64, beta1: f64) -> Result<(f64, f64)> {
    let m = alpha1.hypot(beta1);
    if !(m >= MIN_REFERENCE) {
        return Err(SimError::DegenerateReference { magnitude: m });
    }
    let k = (m - p.radius()) / m;
    Ok((k * alpha1, k * beta1))
}

pub fn neg_osc_step_outputs(
    s: NegOscState,
    fb: AlphaBeta,
    p: &OscParams,
) -> Result<(AlphaBeta, f64, f64)> {
    let g = p.cubic(s.v_alpha1 * s.v_alpha1 + s.v_beta1 * s.v_beta1);
    let kc = p.coupling();
    let d_alpha = g * s.v_alpha1 + p.omega_n * s.v_beta1 + kc * (-fb.1);
    let d_beta = g * s.v_beta1 - p.omega_n * s.v_alpha1 - kc * fb.0;
    let (da, db) = deviation(p, s.v_alpha1, s.v_beta1)?;
    Ok(((d_alpha, d_beta), da, -db))
}

pub fn zero_osc_step_outputs(
    s: ZeroOscState,
    fb: AlphaBeta,
    p: &OscParams,
) -> Result<(AlphaBeta, f64, f64)> {
    let g = p.cubic(s.v_alpha1 * s.v_alpha1 + s.v_beta1 * s.v_beta1);
    let kc = p.coupling();
    let d_alpha = g * s.v_alpha1 + p.omega_n * s.v_beta1 + kc * fb.1;
    let d_beta = g * s.v_beta1 - p.omega_n * s.v_alpha1 - kc * fb.0;
    let (da, db) = deviation(p, s.v_alpha1, s.v_beta1)?;
    Ok(((d_alpha, d_beta), da, db))
}

/// Per-phase `(d, q)` references from the three sequence outputs.
///
/// The `d` rows are the printed 2x3 maps. The `q` rows are chosen so every
/// sequence's `q` lags its `d` by a quarter period: `(-v_b, v_a)` for the
/// positive set, `(v_b, -v_a)` for the negative set (whose output rotates the
/// other way) and `-v_0b` broadcast for the zero set.
pub fn synthesize_references(
    pos: AlphaBeta,
    neg: AlphaBeta,
    zero: AlphaBeta,
) -> ThreePhase<PhaseReference> {
    let map = |x: f64, y: f64| [x, -0.5 * x + SQRT3_2 * y, -0.5 * x - SQRT3_2 * y];
    let pd = map(pos.0, pos.1);
    let pq = map(-pos.1, pos.0);
    let nd = map(neg.0, neg.1);
    let nq = map(neg.1, -neg.0);
    ThreePhase::from_fn(|ph| {
        let i = ph.index();
        PhaseReference::new(pd[i] + nd[i] + zero.0, pq[i] + nq[i] - zero.1)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerSetpoints {
    pub p_star: ThreePhase<f64>,
    pub q_star: ThreePhase<f64>,
}

impl PowerSetpoints {
    /// Totals split equally across the phases.
    pub fn balanced(p_total: f64, q_total: f64) -> Self {
        Self {
            p_star: ThreePhase::splat(p_total / 3.0),
            q_star: ThreePhase::splat(q_total / 3.0),
        }
    }
}

/// Instantaneous current reference pairs, `2/|v*|^2 [v_d v_q; v_q -v_d] [P; Q]`.
pub fn current_references(
    refs: &ThreePhase<PhaseReference>,
    sp: &PowerSetpoints,
) -> Result<ThreePhase<QuadPair>> {
    let mut out = ThreePhase::splat(QuadPair::ZERO);
    for ph in crate::signals::Phase::ALL {
        let r = refs[ph];
        let m2 = r.v_d_star * r.v_d_star + r.v_q_star * r.v_q_star;
        if !(m2.sqrt() >= MIN_REFERENCE) {
            return Err(SimError::DegenerateReference {
                magnitude: m2.sqrt(),
            });
        }
        let (p, q) = (sp.p_star[ph], sp.q_star[ph]);
        let k = 2.0 / m2;
        out[ph] = QuadPair::new(
            k * (r.v_d_star * p + r.v_q_star * q),
            k * (r.v_q_star * p - r.v_d_star * q),
        );
    }
    Ok(out)
}

/// Sequence components of phase a's current error, as `(Re, Im)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SequenceFeedback {
    pub pos: AlphaBeta,
    pub neg: AlphaBeta,
    pub zero: AlphaBeta,
}

impl SequenceFeedback {
    fn c(v: AlphaBeta) -> Complex64 {
        Complex64::new(v.0, v.1)
    }

    pub fn pos_c(&self) -> Complex64 {
        Self::c(self.pos)
    }

    pub fn neg_c(&self) -> Complex64 {
        Self::c(self.neg)
    }

    pub fn zero_c(&self) -> Complex64 {
        Self::c(self.zero)
    }

    /// Inverse Fortescue: per-phase complex errors rebuilt from the sequences.
    pub fn resynthesize(&self) -> ThreePhase<Complex64> {
        let a = op_a();
        let a2 = a * a;
        let (p, n, z) = (self.pos_c(), self.neg_c(), self.zero_c());
        ThreePhase::new(z + p + n, z + a2 * p + a * n, z + a * p + a2 * n)
    }

    /// Inputs `(i_alpha_f, i_beta_f)` for the three oscillators.
    ///
    /// The oscillator terminals see the error with load orientation (hence
    /// the overall sign), and the negative-sequence oscillator, whose output
    /// rotates against its internal state, takes the conjugate.
    pub fn oscillator_inputs(&self) -> (AlphaBeta, AlphaBeta, AlphaBeta) {
        (
            (-self.pos.0, -self.pos.1),
            (-self.neg.0, self.neg.1),
            (-self.zero.0, -self.zero.1),
        )
    }
}

/// Complex phasor of an instantaneous pair in the oscillators' orientation.
pub fn pair_phasor(p: QuadPair) -> Complex64 {
    Complex64::new(p.d, -p.q)
}

pub fn phasor_pair(c: Complex64) -> QuadPair {
    QuadPair::new(c.re, -c.im)
}

/// Fortescue decomposition of the per-phase error `i_inv - i_ref`.
pub fn feedback_decompose(
    i_inv: &ThreePhase<QuadPair>,
    i_ref: &ThreePhase<QuadPair>,
) -> SequenceFeedback {
    let err = ThreePhase::from_fn(|ph| pair_phasor(i_inv[ph] - i_ref[ph]));
    decompose_phasors(&err)
}

pub fn decompose_phasors(err: &ThreePhase<Complex64>) -> SequenceFeedback {
    let a = op_a();
    let a2 = a * a;
    let third = 1.0 / 3.0;
    let pos = (err.a + a * err.b + a2 * err.c) * third;
    let neg = (err.a + a2 * err.b + a * err.c) * third;
    let zero = (err.a + err.b + err.c) * third;
    SequenceFeedback {
        pos: (pos.re, pos.im),
        neg: (neg.re, neg.im),
        zero: (zero.re, zero.im),
    }
}

/// Complete oscillator state of the controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvocState {
    pub pos: PosOscState,
    pub neg: NegOscState,
    pub zero: ZeroOscState,
    pub refs: ThreePhase<PhaseReference>,
}

impl SvocState {
    /// Positive oscillator at `angle` on its cycle; the negative and zero
    /// internal oscillators sit on their circles so their outputs start at zero.
    pub fn new(p: &OscParams, angle: f64) -> Self {
        Self::with_amplitude(p, angle, p.radius())
    }

    /// As [`SvocState::new`] with the positive oscillator at peak `amp`.
    pub fn with_amplitude(p: &OscParams, angle: f64, amp: f64) -> Self {
        let r = p.radius();
        let pos = PosOscState {
            v_alpha: amp * angle.cos(),
            v_beta: amp * angle.sin(),
        };
        let neg = NegOscState {
            v_alpha1: r,
            v_beta1: 0.0,
            v_alpha_out: 0.0,
            v_beta_out: 0.0,
        };
        let zero = ZeroOscState {
            v_alpha1: r,
            v_beta1: 0.0,
            v_alpha_out: 0.0,
            v_beta_out: 0.0,
        };
        let refs = synthesize_references((pos.v_alpha, pos.v_beta), (0.0, 0.0), (0.0, 0.0));
        Self {
            pos,
            neg,
            zero,
            refs,
        }
    }

    pub fn amp_pos(&self) -> f64 {
        self.pos.v_alpha.hypot(self.pos.v_beta)
    }

    pub fn amp_neg(&self) -> f64 {
        self.neg.v_alpha_out.hypot(self.neg.v_beta_out)
    }

    pub fn amp_zero(&self) -> f64 {
        self.zero.v_alpha_out.hypot(self.zero.v_beta_out)
    }

    fn to_vec(self) -> [f64; 6] {
        [
            self.pos.v_alpha,
            self.pos.v_beta,
            self.neg.v_alpha1,
            self.neg.v_beta1,
            self.zero.v_alpha1,
            self.zero.v_beta1,
        ]
    }

    fn with_vec(mut self, x: &[f64; 6]) -> Self {
        self.pos.v_alpha = x[0];
        self.pos.v_beta = x[1];
        self.neg.v_alpha1 = x[2];
        self.neg.v_beta1 = x[3];
        self.zero.v_alpha1 = x[4];
        self.zero.v_beta1 = x[5];
        self
    }
}

fn svoc_derivs(s: &SvocState, fb: &SequenceFeedback, p: &OscParams) -> Result<[f64; 6]> {
    let (fp, fn_, fz) = fb.oscillator_inputs();
    let dp = pos_osc_derivatives(s.pos, fp, p);
    let (dn, _, _) = neg_osc_step_outputs(s.neg, fn_, p)?;
    let (dz, _, _) = zero_osc_step_outputs(s.zero, fz, p)?;
    Ok([dp.0, dp.1, dn.0, dn.1, dz.0, dz.1])
}

/// Advance the three oscillators by one controller period with RK4 and
/// rebuild the per-phase references.
pub fn svoc_step(
    state: &SvocState,
    fb: &SequenceFeedback,
    p: &OscParams,
    dt: f64,
) -> Result<SvocState> {
    let x0 = state.to_vec();
    let stage = |x: &[f64; 6]| svoc_derivs(&state.with_vec(x), fb, p);
    let axpy = |h: f64, k: &[f64; 6]| {
        let mut y = x0;
        for (yi, ki) in y.iter_mut().zip(k) {
            *yi += h * ki;
        }
        y
    };
    let k1 = stage(&x0)?;
    let k2 = stage(&axpy(0.5 * dt, &k1))?;
    let k3 = stage(&axpy(0.5 * dt, &k2))?;
    let k4 = stage(&axpy(dt, &k3))?;
    let mut x = x0;
    for i in 0..6 {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let mut next = state.with_vec(&x);
    let r = p.radius();
    (next.neg.v_alpha1, next.neg.v_beta1) = outer_branch(next.neg.v_alpha1, next.neg.v_beta1, r);
    (next.zero.v_alpha1, next.zero.v_beta1) =
        outer_branch(next.zero.v_alpha1, next.zero.v_beta1, r);
    let zero_fb = (0.0, 0.0);
    let (_, na, nb) = neg_osc_step_outputs(next.neg, zero_fb, p)?;
    let (_, za, zb) = zero_osc_step_outputs(next.zero, zero_fb, p)?;
    next.neg.v_alpha_out = na;
    next.neg.v_beta_out = nb;
    next.zero.v_alpha_out = za;
    next.zero.v_beta_out = zb;
    let refs = synthesize_references((next.pos.v_alpha, next.pos.v_beta), (na, nb), (za, zb));
    next.refs = clamp_reference_floor(refs, 0.1 * p.radius())?;
    Ok(next)
}

/// Moves an internal state inside the circle to its mirror outside it.
///
/// A state at magnitude `m < r` and its reflection through the origin at
/// `2r - m` produce the same deviation output, but only the outer one has
/// a restoring phase response to the feedback. Inside the circle the output
/// direction is flipped against the internal direction and the phase drifts
/// away from equilibrium until the deviation passes through zero.
pub fn outer_branch(alpha1: f64, beta1: f64, r: f64) -> (f64, f64) {
    let m = alpha1.hypot(beta1);
    if m >= r || !(m >= MIN_REFERENCE) {
        return (alpha1, beta1);
    }
    let k = -(2.0 * r - m) / m;
    (k * alpha1, k * beta1)
}

/// Keeps every phase reference at or above `floor` magnitude, preserving its direction.
fn clamp_reference_floor(
    refs: ThreePhase<PhaseReference>,
    floor: f64,
) -> Result<ThreePhase<PhaseReference>> {
    let mut out = refs;
    for ph in crate::signals::Phase::ALL {
        let r = refs[ph];
        let m = r.v_d_star.hypot(r.v_q_star);
        if !(m >= MIN_REFERENCE) {
            return Err(SimError::DegenerateReference { magnitude: m });
        }
        if m < floor {
            let k = floor / m;
            out[ph] = PhaseReference::new(r.v_d_star * k, r.v_q_star * k);
        }
    }
    Ok(out)
}
