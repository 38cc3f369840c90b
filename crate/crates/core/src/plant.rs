//! Averaged three-phase circuit: ideal inverter voltage source, L_f, shunt
//! C_f at the PCC, L_g to a grid Thévenin source, optional RL load at the
//! PCC. Integrated with classical RK4.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::signals::{Phase, QuadPair, ThreePhase};

/// Phase offsets of the grid EMF, matched to the oscillator's sequence order
/// (phase b leads phase a).
pub const PHASE_SHIFT: [f64; 3] = [0.0, 2.0 * PI / 3.0, -2.0 * PI / 3.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlLoad {
    /// Ohms per phase.
    pub r: f64,
    /// Henries per phase; zero means purely resistive.
    #[serde(default)]
    pub l: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    pub l_f: f64,
    pub c_f: f64,
    pub l_g: f64,
    /// Grid nominal rms phase voltage.
    pub v_ng: f64,
    pub omega_ng: f64,
    /// Series resistance of each inductor.
    pub r_par: f64,
    pub load: Option<RlLoad>,
    /// No zero-sequence path for the inverter currents.
    pub three_wire: bool,
    /// Grid-emulator capacitance, lumped in parallel with C_f.
    pub c_g: Option<f64>,
    /// Breaker open: grid branch disconnected.
    pub grid_open: bool,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            l_f: 2e-3,
            c_f: 20e-6,
            l_g: 2e-3,
            v_ng: 50.0,
            omega_ng: 2.0 * PI * 50.0,
            r_par: 0.05,
            load: None,
            three_wire: false,
            c_g: None,
            grid_open: false,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let mut ok = [
            self.l_f,
            self.c_f,
            self.l_g,
            self.v_ng,
            self.omega_ng,
            self.r_par,
        ]
        .into_iter()
        .all(pos);
        if let Some(ld) = self.load {
            ok &= pos(ld.r) && ld.l.is_finite() && ld.l >= 0.0;
        }
        if let Some(cg) = self.c_g {
            ok &= pos(cg);
        }
        if ok {
            Ok(())
        } else {
            Err(SimError::Config(format!(
                "invalid plant parameters {self:?}"
            )))
        }
    }

    /// Total shunt capacitance at the PCC.
    pub fn c_pcc(&self) -> f64 {
        self.c_f + self.c_g.unwrap_or(0.0)
    }

    fn load_dynamic(&self) -> Option<RlLoad> {
        self.load.filter(|ld| ld.l > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub i_lf: ThreePhase<f64>,
    pub v_cf: ThreePhase<f64>,
    pub i_lg: ThreePhase<f64>,
    /// Load inductor current; stays zero without an inductive load.
    pub i_load: ThreePhase<f64>,
}

pub const STATE_LEN: usize = 12;

impl PlantState {
    pub fn to_vec(&self) -> [f64; STATE_LEN] {
        let mut x = [0.0; STATE_LEN];
        for (k, tp) in [self.i_lf, self.v_cf, self.i_lg, self.i_load]
            .iter()
            .enumerate()
        {
            x[3 * k..3 * k + 3].copy_from_slice(&tp.to_array());
        }
        x
    }

    pub fn from_vec(x: &[f64; STATE_LEN]) -> Self {
        let tp = |k: usize| ThreePhase::new(x[3 * k], x[3 * k + 1], x[3 * k + 2]);
        Self {
            i_lf: tp(0),
            v_cf: tp(1),
            i_lg: tp(2),
            i_load: tp(3),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }

    /// Current drawn by the load at this state.
    pub fn load_current(&self, p: &PlantParams) -> ThreePhase<f64> {
        match p.load {
            Some(ld) if ld.l > 0.0 => self.i_load,
            Some(ld) => self.v_cf.map(|v| v / ld.r),
            None => ThreePhase::splat(0.0),
        }
    }

    /// Stored energy in all reactive elements.
    pub fn energy(&self, p: &PlantParams) -> f64 {
        let mut e = 0.0;
        for ph in Phase::ALL {
            e += 0.5 * p.l_f * self.i_lf[ph].powi(2)
                + 0.5 * p.c_pcc() * self.v_cf[ph].powi(2)
                + 0.5 * p.l_g * self.i_lg[ph].powi(2);
            if let Some(ld) = p.load_dynamic() {
                e += 0.5 * ld.l * self.i_load[ph].powi(2);
            }
        }
        e
    }
}

pub fn plant_derivatives(
    s: &PlantState,
    v_inv: &ThreePhase<f64>,
    e_grid: &ThreePhase<f64>,
    p: &PlantParams,
) -> PlantState {
    let r = p.r_par;
    let drive = ThreePhase::from_fn(|ph| v_inv[ph] - s.v_cf[ph] - r * s.i_lf[ph]);
    // floating inverter star point in three-wire mode
    let v_n = if p.three_wire { drive.sum() / 3.0 } else { 0.0 };
    let i_ld = s.load_current(p);
    let mut d = PlantState::default();
    for ph in Phase::ALL {
        d.i_lf[ph] = (drive[ph] - v_n) / p.l_f;
        let i_lg = if p.grid_open { 0.0 } else { s.i_lg[ph] };
        d.v_cf[ph] = (s.i_lf[ph] - i_lg - i_ld[ph]) / p.c_pcc();
        if !p.grid_open {
            d.i_lg[ph] = (s.v_cf[ph] - e_grid[ph] - r * s.i_lg[ph]) / p.l_g;
        }
        if let Some(ld) = p.load_dynamic() {
            d.i_load[ph] = (s.v_cf[ph] - ld.r * s.i_load[ph]) / ld.l;
        }
    }
    d
}

/// One classical RK4 step of `dx/dt = f(t, x)`.
pub fn rk4_step<const N: usize>(
    x: &[f64; N],
    t: f64,
    dt: f64,
    mut f: impl FnMut(f64, &[f64; N]) -> [f64; N],
) -> [f64; N] {
    let axpy = |a: &[f64; N], k: &[f64; N], h: f64| {
        let mut out = *a;
        for i in 0..N {
            out[i] += h * k[i];
        }
        out
    };
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * dt, &axpy(x, &k1, 0.5 * dt));
    let k3 = f(t + 0.5 * dt, &axpy(x, &k2, 0.5 * dt));
    let k4 = f(t + dt, &axpy(x, &k3, dt));
    let mut out = *x;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Grid-side amplitude change on some phases over `[t_start, t_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridEvent {
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
}

impl GridEvent {
    pub fn multiplier(&self, ph: Phase) -> Option<f64> {
        match ph {
            Phase::A => self.a,
            Phase::B => self.b,
            Phase::C => self.c,
        }
    }

    pub fn active(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_end
    }
}

pub fn validate_events(events: &[GridEvent]) -> Result<()> {
    for ev in events {
        if !(ev.t_start.is_finite() && ev.t_end.is_finite() && ev.t_end > ev.t_start) {
            return Err(SimError::Config(format!("bad event window {ev:?}")));
        }
        for m in Phase::ALL.iter().filter_map(|p| ev.multiplier(*p)) {
            if !(0.0..=1.2).contains(&m) {
                return Err(SimError::Config(format!("multiplier {m} outside [0, 1.2]")));
            }
        }
    }
    for ph in Phase::ALL {
        let mut spans: Vec<(f64, f64)> = events
            .iter()
            .filter(|e| e.multiplier(ph).is_some())
            .map(|e| (e.t_start, e.t_end))
            .collect();
        spans.sort_by(|x, y| x.0.total_cmp(&y.0));
        if spans.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(SimError::OverlappingEvents { phase: ph.letter() });
        }
    }
    Ok(())
}

pub fn grid_multipliers(t: f64, events: &[GridEvent]) -> ThreePhase<f64> {
    ThreePhase::from_fn(|ph| {
        events
            .iter()
            .filter(|e| e.active(t))
            .find_map(|e| e.multiplier(ph))
            .unwrap_or(1.0)
    })
}

pub fn grid_emf(t: f64, events: &[GridEvent], p: &PlantParams) -> ThreePhase<f64> {
    let m = grid_multipliers(t, events);
    ThreePhase::from_fn(|ph| {
        m[ph] * SQRT_2 * p.v_ng * (p.omega_ng * t + PHASE_SHIFT[ph.index()]).cos()
    })
}

/// Plant with its event list, advanced under a held inverter command.
#[derive(Debug, Clone)]
pub struct Plant {
    pub params: PlantParams,
    pub events: Vec<GridEvent>,
    pub state: PlantState,
}

impl Plant {
    pub fn new(params: PlantParams, events: Vec<GridEvent>) -> Result<Self> {
        params.validate()?;
        validate_events(&events)?;
        Ok(Self {
            params,
            events,
            state: PlantState::default(),
        })
    }

    /// Start in the no-load grid steady state: capacitor at the grid EMF,
    /// inductor currents at their charging values.
    /// Sets the periodic steady state reached with the grid alone feeding
    /// the filter capacitor and load, and no inverter current. Returns the
    /// capacitor voltage pairs at `t`.
    pub fn preset_grid_steady_state(&mut self, t: f64) -> ThreePhase<QuadPair> {
        let p = self.params;
        let j = Complex64::i();
        let w = p.omega_ng;
        let y_g = if p.grid_open {
            0.0.into()
        } else {
            1.0 / (p.r_par + j * w * p.l_g)
        };
        let y_l = p
            .load
            .map(|ld| 1.0 / (ld.r + j * w * ld.l))
            .unwrap_or_default();
        let y_c = j * w * p.c_pcc();
        let rot = Complex64::from_polar(1.0, w * t);
        let mut s = PlantState::default();
        let mut pairs = ThreePhase::splat(QuadPair::ZERO);
        for ph in Phase::ALL {
            let e = Complex64::from_polar(SQRT_2 * p.v_ng, PHASE_SHIFT[ph.index()]);
            let v = y_g * e / (y_g + y_c + y_l);
            pairs[ph] = QuadPair::new((v * rot).re, (v * rot).im);
            s.v_cf[ph] = pairs[ph].d;
            s.i_lg[ph] = (y_g * (v - e) * rot).re;
            if p.load_dynamic().is_some() {
                s.i_load[ph] = (y_l * v * rot).re;
            }
        }
        self.state = s;
        pairs
    }

    pub fn emf(&self, t: f64) -> ThreePhase<f64> {
        grid_emf(t, &self.events, &self.params)
    }

    pub fn step(&mut self, v_inv: &ThreePhase<f64>, t: f64, dt: f64) {
        let p = self.params;
        let events = &self.events;
        let x = rk4_step(&self.state.to_vec(), t, dt, |tt, xv| {
            let s = PlantState::from_vec(xv);
            plant_derivatives(&s, v_inv, &grid_emf(tt, events, &p), &p).to_vec()
        });
        self.state = PlantState::from_vec(&x);
    }
}

/// Frequency-domain reference solution of the four-wire circuit, used as a
/// check against the time-domain integrator.
pub mod oracle {
    use super::*;
    use num_complex::Complex64;

    /// Steady-state phasors of one phase for sinusoidal sources.
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct PhaseSolution {
        pub v_cf: Complex64,
        pub i_lf: Complex64,
        pub i_lg: Complex64,
    }

    /// Peak-valued phasors, `x(t) = Re(X e^{jωt})`.
    pub fn phasor_steady_state(
        v_inv: Complex64,
        e_grid: Complex64,
        p: &PlantParams,
    ) -> PhaseSolution {
        let w = p.omega_ng;
        let j = Complex64::i();
        let y1 = 1.0 / (p.r_par + j * w * p.l_f);
        let y2 = if p.grid_open {
            Complex64::new(0.0, 0.0)
        } else {
            1.0 / (p.r_par + j * w * p.l_g)
        };
        let yl = p
            .load
            .map(|ld| 1.0 / (ld.r + j * w * ld.l))
            .unwrap_or_default();
        let yc = j * w * p.c_pcc();
        let v = (y1 * v_inv + y2 * e_grid) / (y1 + y2 + yc + yl);
        PhaseSolution {
            v_cf: v,
            i_lf: y1 * (v_inv - v),
            i_lg: y2 * (v - e_grid),
        }
    }

    /// Fundamental phasor of uniformly sampled data spanning whole periods.
    pub fn fundamental_phasor(samples: &[f64], dt: f64, omega: f64, t0: f64) -> Complex64 {
        let n = samples.len() as f64;
        let sum: Complex64 = samples
            .iter()
            .enumerate()
            .map(|(k, x)| *x * Complex64::from_polar(1.0, -omega * (t0 + k as f64 * dt)))
            .sum();
        2.0 * sum / n
    }

    /// Integrates the plant under fixed sinusoidal sources for `settle`
    /// seconds, then returns the fundamental phasors of `v_cf`, `i_lf` and
    /// `i_lg` (indexed `[quantity][phase]`) measured over one more period.
    pub fn simulated_phasors(
        p: &PlantParams,
        v_inv: [Complex64; 3],
        e_grid: [Complex64; 3],
        settle: f64,
        dt: f64,
    ) -> [[Complex64; 3]; 3] {
        let w = p.omega_ng;
        let src = move |x: [Complex64; 3]| {
            move |t: f64| {
                ThreePhase::from_fn(|ph| (x[ph.index()] * Complex64::from_polar(1.0, w * t)).re)
            }
        };
        let (fv, fe) = (src(v_inv), src(e_grid));
        let step = |x: &[f64; 12], t: f64| {
            rk4_step(x, t, dt, |tt, xv| {
                plant_derivatives(&PlantState::from_vec(xv), &fv(tt), &fe(tt), p).to_vec()
            })
        };
        let mut x = PlantState::default().to_vec();
        let n = (settle / dt).round() as usize;
        for k in 0..n {
            x = step(&x, k as f64 * dt);
        }
        let t0 = n as f64 * dt;
        let per = (2.0 * std::f64::consts::PI / w / dt).round() as usize;
        let mut rec: Vec<Vec<f64>> = (0..9).map(|_| Vec::with_capacity(per)).collect();
        for k in 0..per {
            let s = PlantState::from_vec(&x);
            for ph in Phase::ALL {
                rec[ph.index()].push(s.v_cf[ph]);
                rec[3 + ph.index()].push(s.i_lf[ph]);
                rec[6 + ph.index()].push(s.i_lg[ph]);
            }
            x = step(&x, t0 + k as f64 * dt);
        }
        let f = |k: usize| fundamental_phasor(&rec[k], dt, w, t0);
        [[f(0), f(1), f(2)], [f(3), f(4), f(5)], [f(6), f(7), f(8)]]
    }
}
