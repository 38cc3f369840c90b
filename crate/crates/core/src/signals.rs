//! Signal primitives shared by the controllers and the plant: per-phase
//! triples, quadrature pairs, the SOGI quadrature generator, a one-period
//! sliding RMS and a first-order low-pass.

use std::f64::consts::PI;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Phase {
        Self::ALL[i]
    }

    pub fn letter(self) -> char {
        match self {
            Phase::A => 'a',
            Phase::B => 'b',
            Phase::C => 'c',
        }
    }
}

/// One value per phase, `(a, b, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct ThreePhase<T> {
    pub a: T,
    pub b: T,
    pub c: T,
}

impl<T> ThreePhase<T> {
    pub const fn new(a: T, b: T, c: T) -> Self {
        Self { a, b, c }
    }

    pub fn from_fn(mut f: impl FnMut(Phase) -> T) -> Self {
        Self {
            a: f(Phase::A),
            b: f(Phase::B),
            c: f(Phase::C),
        }
    }

    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> ThreePhase<U> {
        ThreePhase {
            a: f(self.a),
            b: f(self.b),
            c: f(self.c),
        }
    }

    pub fn zip<U>(self, other: ThreePhase<U>) -> ThreePhase<(T, U)> {
        ThreePhase {
            a: (self.a, other.a),
            b: (self.b, other.b),
            c: (self.c, other.c),
        }
    }

    pub fn as_array(&self) -> [&T; 3] {
        [&self.a, &self.b, &self.c]
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.as_array().into_iter()
    }
}

impl<T: Copy> ThreePhase<T> {
    pub fn splat(v: T) -> Self {
        Self { a: v, b: v, c: v }
    }

    pub fn to_array(self) -> [T; 3] {
        [self.a, self.b, self.c]
    }
}

impl ThreePhase<f64> {
    /// Rejects NaN and infinities so they never enter the simulation.
    pub fn finite(a: f64, b: f64, c: f64) -> Result<Self> {
        let tp = Self { a, b, c };
        if tp.iter().all(|v| v.is_finite()) {
            Ok(tp)
        } else {
            Err(SimError::Config(format!(
                "non-finite three-phase sample {tp:?}"
            )))
        }
    }

    pub fn sum(&self) -> f64 {
        self.a + self.b + self.c
    }
}

impl<T> Index<Phase> for ThreePhase<T> {
    type Output = T;
    fn index(&self, p: Phase) -> &T {
        match p {
            Phase::A => &self.a,
            Phase::B => &self.b,
            Phase::C => &self.c,
        }
    }
}

impl<T> IndexMut<Phase> for ThreePhase<T> {
    fn index_mut(&mut self, p: Phase) -> &mut T {
        match p {
            Phase::A => &mut self.a,
            Phase::B => &mut self.b,
            Phase::C => &mut self.c,
        }
    }
}

/// Instantaneous direct/quadrature pair. For a steady sinusoid `d` is the
/// signal itself and `q` is the same signal delayed by a quarter period.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadPair {
    pub d: f64,
    pub q: f64,
}

impl QuadPair {
    pub const ZERO: QuadPair = QuadPair { d: 0.0, q: 0.0 };

    pub const fn new(d: f64, q: f64) -> Self {
        Self { d, q }
    }

    pub fn magnitude(self) -> f64 {
        self.d.hypot(self.q)
    }

    /// Pair of a sinusoid `peak * cos(angle)` at the given instant.
    pub fn from_polar(peak: f64, angle: f64) -> Self {
        Self {
            d: peak * angle.cos(),
            q: peak * angle.sin(),
        }
    }
}

impl Add for QuadPair {
    type Output = QuadPair;
    fn add(self, o: QuadPair) -> QuadPair {
        QuadPair::new(self.d + o.d, self.q + o.q)
    }
}

impl Sub for QuadPair {
    type Output = QuadPair;
    fn sub(self, o: QuadPair) -> QuadPair {
        QuadPair::new(self.d - o.d, self.q - o.q)
    }
}

impl Neg for QuadPair {
    type Output = QuadPair;
    fn neg(self) -> QuadPair {
        QuadPair::new(-self.d, -self.q)
    }
}

impl Mul<f64> for QuadPair {
    type Output = QuadPair;
    fn mul(self, k: f64) -> QuadPair {
        QuadPair::new(self.d * k, self.q * k)
    }
}

/// Default SOGI damping gain.
pub const SOGI_GAIN: f64 = std::f64::consts::SQRT_2;

/// Second-order generalized integrator used as a quadrature signal generator.
///
/// `d` is the band-pass (in-phase) output, `q` the low-pass output which lags
/// it by 90 degrees at the tuned frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QsgState {
    pub d: f64,
    pub q: f64,
    pub omega_n: f64,
    pub k_sogi: f64,
    prev_sample: f64,
}

impl QsgState {
    pub fn new(omega_n: f64, k_sogi: f64) -> Self {
        Self {
            d: 0.0,
            q: 0.0,
            omega_n,
            k_sogi,
            prev_sample: 0.0,
        }
    }

    /// Start locked onto the sinusoid whose pair at the next sample, `dt`
    /// from now, is `pair`.
    pub fn preset(&mut self, pair: QuadPair, dt: f64) {
        let (s, c) = (self.omega_n * dt).sin_cos();
        self.d = pair.d * c + pair.q * s;
        self.q = pair.q * c - pair.d * s;
        self.prev_sample = self.d;
    }

    pub fn output(&self) -> QuadPair {
        QuadPair::new(self.d, self.q)
    }

    fn deriv(&self, u: f64, d: f64, q: f64) -> (f64, f64) {
        let w = self.omega_n;
        (w * (self.k_sogi * (u - d) - q), w * d)
    }

    /// Advance by `dt` to the instant of `sample`. The input is interpolated
    /// linearly from the previous sample, then the state is integrated with RK4.
    pub fn step(&mut self, sample: f64, dt: f64) -> QuadPair {
        let u0 = self.prev_sample;
        let u1 = sample;
        let um = 0.5 * (u0 + u1);
        let (d, q) = (self.d, self.q);
        let k1 = self.deriv(u0, d, q);
        let k2 = self.deriv(um, d + 0.5 * dt * k1.0, q + 0.5 * dt * k1.1);
        let k3 = self.deriv(um, d + 0.5 * dt * k2.0, q + 0.5 * dt * k2.1);
        let k4 = self.deriv(u1, d + dt * k3.0, q + dt * k3.1);
        self.d = d + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        self.q = q + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        self.prev_sample = sample;
        self.output()
    }
}

pub fn qsg_step(state: &mut QsgState, sample: f64, dt: f64) -> QuadPair {
    state.step(sample, dt)
}

/// RMS over exactly the most recent fundamental period.
#[derive(Debug, Clone)]
pub struct SlidingRms {
    buf: Vec<f64>,
    pos: usize,
    filled: usize,
    sum_sq: f64,
}

impl SlidingRms {
    pub fn new(window: usize) -> Self {
        assert!(window > 0, "RMS window must hold at least one sample");
        Self {
            buf: vec![0.0; window],
            pos: 0,
            filled: 0,
            sum_sq: 0.0,
        }
    }

    /// Window of `round(2*pi / (omega_n * dt))` samples.
    pub fn for_period(omega_n: f64, dt: f64) -> Self {
        Self::new(((2.0 * PI) / (omega_n * dt)).round().max(1.0) as usize)
    }

    pub fn window(&self) -> usize {
        self.buf.len()
    }

    /// Fill the window with a steady sinusoid of the given rms (for warm starts).
    pub fn preset_sinusoid(&mut self, rms: f64) {
        let n = self.buf.len();
        for (k, v) in self.buf.iter_mut().enumerate() {
            *v = rms * std::f64::consts::SQRT_2 * (2.0 * PI * k as f64 / n as f64).cos();
        }
        self.filled = n;
        self.pos = 0;
        self.resum();
    }

    fn resum(&mut self) {
        self.sum_sq = self.buf.iter().map(|v| v * v).sum();
    }

    pub fn push(&mut self, sample: f64) -> f64 {
        let old = self.buf[self.pos];
        self.buf[self.pos] = sample;
        self.sum_sq += sample * sample - old * old;
        self.pos += 1;
        if self.pos == self.buf.len() {
            self.pos = 0;
            // drop accumulated rounding once per period
            self.resum();
        }
        self.filled = (self.filled + 1).min(self.buf.len());
        self.value()
    }

    /// Before the first full period the window is padded with zeros.
    pub fn value(&self) -> f64 {
        (self.sum_sq.max(0.0) / self.buf.len() as f64).sqrt()
    }

    pub fn is_full(&self) -> bool {
        self.filled == self.buf.len()
    }
}

pub fn sliding_rms(state: &mut SlidingRms, sample: f64) -> f64 {
    state.push(sample)
}

/// One step of a first-order low-pass, exact for a sample held over `dt`.
pub fn lowpass_step(state: f64, sample: f64, cutoff: f64, dt: f64) -> f64 {
    let alpha = 1.0 - (-2.0 * PI * cutoff * dt).exp();
    state + alpha * (sample - state)
}
